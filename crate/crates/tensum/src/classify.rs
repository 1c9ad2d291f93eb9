//! Gaussian-kernel SVM classification: a sequential minimal-optimization
//! solver for the binary soft-margin dual, a one-vs-one multiclass wrapper
//! with majority voting, and end-to-end pipelines for the projected-core
//! features and the two reference baselines.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::LabeledTensor;
use crate::error::{Error, Result};
use crate::features::{
    fit_common_basis, project_to_feature, CommonBasis, FeatureVector,
};
use crate::linalg::tsvd;
use crate::tensor::DenseTensor;

/// Hard cap on solver pair updates before reporting non-convergence.
pub const MAX_SMO_ITERATIONS: usize = 1_000_000;
/// Duality-gap threshold at which the solver stops.
pub const SMO_TOLERANCE: f64 = 1e-3;
const TAU: f64 = 1e-12;

/// exp(-gamma * ||a - b||^2).
pub fn gaussian_kernel(a: &[f64], b: &[f64], gamma: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!(
            "kernel arguments of lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if !gamma.is_finite() || gamma <= 0.0 {
        return Err(Error::InvalidArgument(format!("gamma {gamma} not positive")));
    }
    Ok(rbf(a, b, gamma))
}

fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

/// Trained binary classifier: support vectors with signed coefficients
/// alpha_t * y_t and a bias, evaluated as sum coef_t K(s_t, x) + bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvm {
    support: Vec<Vec<f64>>,
    coef: Vec<f64>,
    bias: f64,
    gamma: f64,
}

impl BinarySvm {
    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        let mut f = self.bias;
        for (s, c) in self.support.iter().zip(&self.coef) {
            if s.len() != x.len() {
                return Err(Error::ShapeMismatch(format!(
                    "input of length {}, support vectors of length {}",
                    x.len(),
                    s.len()
                )));
            }
            f += c * rbf(s, x, self.gamma);
        }
        Ok(f)
    }

    pub fn num_support(&self) -> usize {
        self.support.len()
    }
}

// Iteration count and final gap are diagnostics read by the unit tests.
#[cfg_attr(not(test), allow(dead_code))]
struct SmoSolution {
    alpha: Vec<f64>,
    rho: f64,
    iterations: usize,
    gap: f64,
}

/// Solves min 1/2 a^T Q a - e^T a s.t. y^T a = 0, 0 <= a <= C with
/// Q_ij = y_i y_j K(x_i, x_j), by second-order working-set selection.
fn smo(xs: &[&[f64]], y: &[f64], c: f64, gamma: f64) -> Result<SmoSolution> {
    let n = xs.len();
    let mut kernel = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let k = rbf(xs[i], xs[j], gamma);
            kernel[i * n + j] = k;
            kernel[j * n + i] = k;
        }
    }
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut iterations = 0usize;
    let gap = loop {
        // i maximizes -y_t grad_t over points that can move up.
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            let up = (y[t] > 0.0 && alpha[t] < c) || (y[t] < 0.0 && alpha[t] > 0.0);
            if up && -y[t] * grad[t] > gmax {
                gmax = -y[t] * grad[t];
                i = t;
            }
        }
        // j minimizes the second-order objective decrease among points
        // that can move down and still violate optimality with i.
        let mut gmin = f64::INFINITY;
        let mut j = usize::MAX;
        let mut best = 0.0;
        for t in 0..n {
            let low = (y[t] > 0.0 && alpha[t] > 0.0) || (y[t] < 0.0 && alpha[t] < c);
            if !low {
                continue;
            }
            gmin = gmin.min(-y[t] * grad[t]);
            if i == usize::MAX {
                continue;
            }
            let b = gmax + y[t] * grad[t];
            if b > 0.0 {
                let mut a = kernel[i * n + i] + kernel[t * n + t] - 2.0 * kernel[i * n + t];
                if a <= 0.0 {
                    a = TAU;
                }
                let obj = -(b * b) / a;
                if obj < best {
                    best = obj;
                    j = t;
                }
            }
        }
        let gap = gmax - gmin;
        if i == usize::MAX || j == usize::MAX {
            // A side is empty: every point sits at a bound and is optimal.
            break 0.0;
        }
        if gap <= SMO_TOLERANCE {
            break gap;
        }
        iterations += 1;
        if iterations > MAX_SMO_ITERATIONS {
            return Err(Error::NoConvergence(format!(
                "solver exceeded {MAX_SMO_ITERATIONS} pair updates (gap {gap:.3e})"
            )));
        }
        let (ki, kj, kij) = (
            kernel[i * n + i],
            kernel[j * n + j],
            kernel[i * n + j],
        );
        let mut quad = ki + kj - 2.0 * kij;
        if quad <= 0.0 {
            quad = TAU;
        }
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else {
                if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = -diff;
                }
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = c + diff;
                }
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
                if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        if di == 0.0 && dj == 0.0 {
            // No progress is possible on the selected pair.
            break gap;
        }
        for t in 0..n {
            grad[t] += y[t] * y[i] * kernel[i * n + t] * di
                + y[t] * y[j] * kernel[j * n + t] * dj;
        }
    };
    // Bias from free support vectors, else the midpoint of the KKT bounds.
    let mut sum_free = 0.0;
    let mut n_free = 0usize;
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            sum_free += yg;
            n_free += 1;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else {
        (ub + lb) / 2.0
    };
    Ok(SmoSolution {
        alpha,
        rho,
        iterations,
        gap,
    })
}

fn check_points(points: &[&[f64]], dim: usize, what: &str) -> Result<()> {
    for p in points {
        if p.len() != dim {
            return Err(Error::ShapeMismatch(format!(
                "{what} point of length {}, expected {dim}",
                p.len()
            )));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{what} point")));
        }
    }
    Ok(())
}

/// Trains one soft-margin classifier; `pos` points get label +1.
pub fn train_binary(pos: &[&[f64]], neg: &[&[f64]], c: f64, gamma: f64) -> Result<BinarySvm> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::EmptyInput("both classes need training points".into()));
    }
    if !c.is_finite() || c <= 0.0 {
        return Err(Error::InvalidArgument(format!("cost {c} not positive")));
    }
    if !gamma.is_finite() || gamma <= 0.0 {
        return Err(Error::InvalidArgument(format!("gamma {gamma} not positive")));
    }
    let dim = pos[0].len();
    check_points(pos, dim, "positive")?;
    check_points(neg, dim, "negative")?;
    let xs: Vec<&[f64]> = pos.iter().chain(neg.iter()).copied().collect();
    let y: Vec<f64> = std::iter::repeat(1.0)
        .take(pos.len())
        .chain(std::iter::repeat(-1.0).take(neg.len()))
        .collect();
    let sol = smo(&xs, &y, c, gamma)?;
    let mut support = Vec::new();
    let mut coef = Vec::new();
    for t in 0..xs.len() {
        if sol.alpha[t] > 0.0 {
            support.push(xs[t].to_vec());
            coef.push(sol.alpha[t] * y[t]);
        }
    }
    Ok(BinarySvm {
        support,
        coef,
        bias: -sol.rho,
        gamma,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PairModel {
    pos: usize,
    neg: usize,
    svm: BinarySvm,
}

/// One-vs-one multiclass model over sorted class labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    classes: Vec<String>,
    dim: usize,
    c: f64,
    gamma: f64,
    pairs: Vec<PairModel>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    model: SvmModel,
}

const MODEL_FORMAT: &str = "tensum-svm";
const MODEL_VERSION: u32 = 1;

impl SvmModel {
    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn num_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn cost(&self) -> f64 {
        self.c
    }

    /// Majority vote over all class pairs. Vote ties fall to the tied
    /// class with the larger sum of winning margins, then to the first
    /// class in sorted order.
    pub fn predict(&self, x: &[f64]) -> Result<&str> {
        if x.len() != self.dim {
            return Err(Error::ShapeMismatch(format!(
                "input of length {}, model expects {}",
                x.len(),
                self.dim
            )));
        }
        let k = self.classes.len();
        let mut votes = vec![0usize; k];
        let mut margins = vec![0.0f64; k];
        for p in &self.pairs {
            let d = p.svm.decision(x)?;
            let winner = if d > 0.0 { p.pos } else { p.neg };
            votes[winner] += 1;
            margins[winner] += d.abs();
        }
        let mut best = 0usize;
        for t in 1..k {
            if votes[t] > votes[best]
                || (votes[t] == votes[best] && margins[t] > margins[best])
            {
                best = t;
            }
        }
        Ok(&self.classes[best])
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            model: self.clone(),
        };
        let text = serde_json::to_string_pretty(&file)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if file.format != MODEL_FORMAT {
            return Err(Error::Parse(format!(
                "model format {:?}, expected {MODEL_FORMAT:?}",
                file.format
            )));
        }
        if file.version != MODEL_VERSION {
            return Err(Error::Parse(format!(
                "model version {}, this build reads {MODEL_VERSION}",
                file.version
            )));
        }
        Ok(file.model)
    }
}

/// Trains k(k-1)/2 binary classifiers, one per unordered class pair.
pub fn train_ovo(features: &[FeatureVector], c: f64, gamma: f64) -> Result<SvmModel> {
    let first = features
        .first()
        .ok_or_else(|| Error::EmptyInput("no training features".into()))?;
    let dim = first.values.len();
    let mut by_class: BTreeMap<&str, Vec<&[f64]>> = BTreeMap::new();
    for f in features {
        by_class.entry(&f.label).or_default().push(&f.values);
    }
    if by_class.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "{} class(es) in training data, need at least 2",
            by_class.len()
        )));
    }
    let classes: Vec<String> = by_class.keys().map(|s| s.to_string()).collect();
    let groups: Vec<&Vec<&[f64]>> = by_class.values().collect();
    let mut pairs = Vec::with_capacity(classes.len() * (classes.len() - 1) / 2);
    for i in 0..classes.len() {
        for j in (i + 1)..classes.len() {
            let svm = train_binary(groups[i], groups[j], c, gamma).map_err(|e| {
                Error::InvalidArgument(format!(
                    "pair ({}, {}): {e}",
                    classes[i], classes[j]
                ))
            })?;
            pairs.push(PairModel { pos: i, neg: j, svm });
        }
    }
    Ok(SvmModel {
        classes,
        dim,
        c,
        gamma,
        pairs,
    })
}

/// Row-major confusion counts, rows true class, columns predicted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: Vec<String>,
    counts: Vec<usize>,
}

impl ConfusionMatrix {
    pub fn new(classes: Vec<String>) -> Self {
        let k = classes.len();
        Self {
            classes,
            counts: vec![0; k * k],
        }
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn get(&self, true_idx: usize, pred_idx: usize) -> usize {
        self.counts[true_idx * self.classes.len() + pred_idx]
    }

    pub fn bump(&mut self, true_idx: usize, pred_idx: usize) {
        self.counts[true_idx * self.classes.len() + pred_idx] += 1;
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let k = self.classes.len();
        let trace: usize = (0..k).map(|i| self.get(i, i)).sum();
        trace as f64 / total as f64
    }

    /// Header row `true_label,<class..>`, one row of counts per true class.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("true_label");
        for c in &self.classes {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (i, c) in self.classes.iter().enumerate() {
            out.push_str(c);
            for j in 0..self.classes.len() {
                out.push(',');
                out.push_str(&self.get(i, j).to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }
}

/// Classifies every test feature and tallies the confusion matrix.
/// Test labels must all be known to the model.
pub fn evaluate(model: &SvmModel, test: &[FeatureVector]) -> Result<ConfusionMatrix> {
    if test.is_empty() {
        return Err(Error::EmptyInput("no test features to evaluate".into()));
    }
    let mut cm = ConfusionMatrix::new(model.classes().to_vec());
    for f in test {
        let ti = model
            .classes()
            .iter()
            .position(|c| c == &f.label)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "test label {:?} was not seen in training",
                    f.label
                ))
            })?;
        let pred = model.predict(&f.values)?;
        let pi = model.classes().iter().position(|c| c == pred).expect("own class");
        cm.bump(ti, pi);
    }
    Ok(cm)
}

/// 1 / (dim * pooled variance) over all feature entries, falling back to
/// 1 / dim for constant features.
pub fn default_gamma(features: &[FeatureVector]) -> Result<f64> {
    let first = features
        .first()
        .ok_or_else(|| Error::EmptyInput("no features for gamma".into()))?;
    let dim = first.values.len();
    if dim == 0 {
        return Err(Error::EmptyInput("zero-length features".into()));
    }
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    let mut count = 0usize;
    for f in features {
        for &v in &f.values {
            sum += v;
            sum2 += v * v;
            count += 1;
        }
    }
    let mean = sum / count as f64;
    let var = (sum2 / count as f64 - mean * mean).max(0.0);
    if var > 0.0 {
        Ok(1.0 / (dim as f64 * var))
    } else {
        Ok(1.0 / dim as f64)
    }
}

/// Everything one classification run produces.
#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub confusion: ConfusionMatrix,
    pub train_features: Vec<FeatureVector>,
    pub test_features: Vec<FeatureVector>,
    /// Ids of train samples left out of the basis fit as degenerate.
    pub skipped: Vec<String>,
    pub gamma: f64,
}

fn check_dataset(train: &[LabeledTensor], test: &[LabeledTensor]) -> Result<()> {
    let first = train
        .first()
        .ok_or_else(|| Error::EmptyInput("no training samples".into()))?;
    for s in train.iter().chain(test) {
        if s.tensor.shape() != first.tensor.shape() {
            return Err(Error::ShapeMismatch(format!(
                "sample {} has shape {:?}, expected {:?}",
                s.id,
                s.tensor.shape(),
                first.tensor.shape()
            )));
        }
    }
    Ok(())
}

fn finish(
    train_features: Vec<FeatureVector>,
    test_features: Vec<FeatureVector>,
    skipped: Vec<String>,
    c: f64,
    gamma: Option<f64>,
) -> Result<EvalOutcome> {
    let gamma = match gamma {
        Some(g) => g,
        None => default_gamma(&train_features)?,
    };
    let model = train_ovo(&train_features, c, gamma)?;
    let confusion = evaluate(&model, &test_features)?;
    Ok(EvalOutcome {
        confusion,
        train_features,
        test_features,
        skipped,
        gamma,
    })
}

fn project_all(samples: &[LabeledTensor], basis: &CommonBasis) -> Result<Vec<FeatureVector>> {
    samples
        .iter()
        .map(|s| project_to_feature(&s.tensor, basis, &s.id, &s.label))
        .collect()
}

/// The main pipeline: fit the common basis on the training samples'
/// scaled decomposition factors, project everything, train, evaluate.
pub fn classify_sum_of_tns(
    train: &[LabeledTensor],
    test: &[LabeledTensor],
    ranks: &[usize],
    c: f64,
    gamma: Option<f64>,
) -> Result<EvalOutcome> {
    check_dataset(train, test)?;
    let tensors: Vec<&DenseTensor> = train.iter().map(|s| &s.tensor).collect();
    let fit = fit_common_basis(&tensors, ranks)?;
    let skipped = fit.skipped.iter().map(|&i| train[i].id.clone()).collect();
    let train_features = project_all(train, &fit.basis)?;
    let test_features = project_all(test, &fit.basis)?;
    finish(train_features, test_features, skipped, c, gamma)
}

fn raw_features(samples: &[LabeledTensor]) -> Vec<FeatureVector> {
    samples
        .iter()
        .map(|s| FeatureVector {
            id: s.id.clone(),
            label: s.label.clone(),
            values: s.tensor.to_vec(),
        })
        .collect()
}

/// Baseline: the vectorized pixels go straight into the classifier,
/// optionally standardized per dimension with train-set statistics.
pub fn baseline_raw_svm(
    train: &[LabeledTensor],
    test: &[LabeledTensor],
    c: f64,
    gamma: Option<f64>,
    zscore: bool,
) -> Result<EvalOutcome> {
    check_dataset(train, test)?;
    let mut train_features = raw_features(train);
    let mut test_features = raw_features(test);
    if zscore {
        let dim = train_features[0].values.len();
        let n = train_features.len() as f64;
        let mut mean = vec![0.0; dim];
        let mut var = vec![0.0; dim];
        for f in &train_features {
            for (m, v) in mean.iter_mut().zip(&f.values) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        for f in &train_features {
            for ((s, v), m) in var.iter_mut().zip(&f.values).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale: Vec<f64> = var
            .iter()
            .map(|&s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 {
                    1.0 / sd
                } else {
                    1.0
                }
            })
            .collect();
        for f in train_features.iter_mut().chain(test_features.iter_mut()) {
            for ((v, m), k) in f.values.iter_mut().zip(&mean).zip(&scale) {
                *v = (*v - m) * k;
            }
        }
    }
    finish(train_features, test_features, Vec::new(), c, gamma)
}

/// Baseline: all training samples are stacked along a new last mode and
/// the per-mode bases are truncated from the stack's unfoldings. The
/// stacking mode itself never gets a basis.
pub fn baseline_tkd_concat(
    train: &[LabeledTensor],
    test: &[LabeledTensor],
    ranks: &[usize],
    c: f64,
    gamma: Option<f64>,
) -> Result<EvalOutcome> {
    check_dataset(train, test)?;
    let shape = train[0].tensor.shape().to_vec();
    if ranks.len() != shape.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} ranks for order-{} samples",
            ranks.len(),
            shape.len()
        )));
    }
    let mut stacked_shape = shape.clone();
    stacked_shape.push(train.len());
    let mut data = Vec::with_capacity(stacked_shape.iter().product());
    for s in train {
        data.extend_from_slice(s.tensor.data());
    }
    let stack = DenseTensor::new(stacked_shape, data)?;
    let mut bases = Vec::with_capacity(shape.len());
    for (n, &r) in ranks.iter().enumerate() {
        bases.push(tsvd(&stack.unfold(n)?, r)?);
    }
    let basis = CommonBasis::new(bases)?;
    let train_features = project_all(train, &basis)?;
    let test_features = project_all(test, &basis)?;
    finish(train_features, test_features, Vec::new(), c, gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_dataset, SynthConfig};
    use crate::linalg::symmetric_eigen;
    use crate::tensor::Matrix;
    use crate::tucker::TuckerNetwork;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;
    use rand_distr::StandardNormal;

    fn feats(points: &[(&str, &[f64])]) -> Vec<FeatureVector> {
        points
            .iter()
            .enumerate()
            .map(|(i, (label, v))| FeatureVector {
                id: format!("p{i}"),
                label: label.to_string(),
                values: v.to_vec(),
            })
            .collect()
    }

    #[test]
    fn kernel_basics() {
        let x = [0.3, -1.2, 4.0];
        assert_eq!(gaussian_kernel(&x, &x, 0.7).unwrap(), 1.0);
        let v = gaussian_kernel(&[0.0], &[1.0], 1.0).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
        assert!(gaussian_kernel(&[0.0], &[1.0, 2.0], 1.0).is_err());
        assert!(gaussian_kernel(&[0.0], &[1.0], 0.0).is_err());
        assert!(gaussian_kernel(&[0.0], &[1.0], -2.0).is_err());
    }

    #[test]
    fn kernel_gram_matrices_are_psd() {
        let mut rng = ChaCha12Rng::seed_from_u64(90);
        for trial in 0..5 {
            let n = 4 + trial;
            let pts: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..3).map(|_| rng.sample(StandardNormal)).collect())
                .collect();
            let mut g = Matrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    g.set(i, j, gaussian_kernel(&pts[i], &pts[j], 0.8).unwrap());
                }
            }
            let eig = symmetric_eigen(&g).unwrap();
            let min = eig.values.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(min >= -1e-10, "trial {trial}: min eigenvalue {min}");
        }
    }

    #[test]
    fn two_point_problem_is_symmetric() {
        let xs: Vec<&[f64]> = vec![&[1.0], &[-1.0]];
        let sol = smo(&xs, &[1.0, -1.0], 10.0, 0.5).unwrap();
        assert!((sol.alpha[0] - sol.alpha[1]).abs() < 1e-12);
        assert!(sol.alpha[0] > 0.0);
        let svm = train_binary(&xs[..1], &xs[1..], 10.0, 0.5).unwrap();
        assert_eq!(svm.num_support(), 2);
        assert!(svm.decision(&[1.0]).unwrap() > 0.0);
        assert!(svm.decision(&[-1.0]).unwrap() < 0.0);
        assert!(svm.decision(&[0.0]).unwrap().abs() < 1e-9);
    }

    fn blob(center: (f64, f64), count: usize) -> Vec<Vec<f64>> {
        (0..count)
            .map(|i| {
                let dx = 0.1 * ((i % 3) as f64 - 1.0);
                let dy = 0.1 * ((i / 3) as f64 - 1.0);
                vec![center.0 + dx, center.1 + dy]
            })
            .collect()
    }

    #[test]
    fn separable_blobs_reach_full_training_accuracy() {
        let pos = blob((0.0, 0.0), 9);
        let neg = blob((5.0, 5.0), 9);
        let pr: Vec<&[f64]> = pos.iter().map(|v| v.as_slice()).collect();
        let nr: Vec<&[f64]> = neg.iter().map(|v| v.as_slice()).collect();
        let svm = train_binary(&pr, &nr, 10.0, 0.5).unwrap();
        assert!(pr.iter().all(|p| svm.decision(p).unwrap() > 0.0));
        assert!(nr.iter().all(|p| svm.decision(p).unwrap() < 0.0));
    }

    #[test]
    fn dual_constraints_hold_at_solution() {
        let pos = blob((0.0, 0.0), 9);
        let neg = blob((2.0, 2.0), 9);
        let c = 10.0;
        let xs: Vec<&[f64]> = pos.iter().chain(&neg).map(|v| v.as_slice()).collect();
        let y: Vec<f64> = [1.0; 9].into_iter().chain([-1.0; 9]).collect();
        let sol = smo(&xs, &y, c, 1.0).unwrap();
        assert!(sol.gap <= SMO_TOLERANCE);
        assert!(sol.iterations > 0);
        assert!(sol.alpha.iter().all(|&a| (0.0..=c).contains(&a)));
        let balance: f64 = sol.alpha.iter().zip(&y).map(|(a, yy)| a * yy).sum();
        assert!(balance.abs() <= 1e-9, "class balance {balance}");
    }

    #[test]
    fn xor_needs_the_kernel_and_gets_it() {
        let pos = [vec![0.0, 0.0], vec![1.0, 1.0]];
        let neg = [vec![0.0, 1.0], vec![1.0, 0.0]];
        let pr: Vec<&[f64]> = pos.iter().map(|v| v.as_slice()).collect();
        let nr: Vec<&[f64]> = neg.iter().map(|v| v.as_slice()).collect();
        let svm = train_binary(&pr, &nr, 10.0, 1.0).unwrap();
        for p in &pr {
            assert!(svm.decision(p).unwrap() > 0.0);
        }
        for p in &nr {
            assert!(svm.decision(p).unwrap() < 0.0);
        }
    }

    #[test]
    fn train_binary_rejects_bad_inputs() {
        let a: Vec<&[f64]> = vec![&[0.0]];
        let b: Vec<&[f64]> = vec![&[1.0]];
        assert!(train_binary(&a, &[], 10.0, 1.0).is_err());
        assert!(train_binary(&a, &b, -1.0, 1.0).is_err());
        assert!(train_binary(&a, &b, 10.0, 0.0).is_err());
        let ragged: Vec<&[f64]> = vec![&[1.0, 2.0]];
        assert!(train_binary(&a, &ragged, 10.0, 1.0).is_err());
        let nan: Vec<&[f64]> = vec![&[f64::NAN]];
        assert!(train_binary(&a, &nan, 10.0, 1.0).is_err());
    }

    #[test]
    fn ovo_builds_all_pairs_over_sorted_classes() {
        let mut pts = Vec::new();
        let owned: Vec<(String, Vec<f64>)> = (0..8)
            .flat_map(|cl| {
                (0..3).map(move |i| {
                    (
                        format!("c{cl}"),
                        vec![cl as f64 * 3.0, i as f64 * 0.1],
                    )
                })
            })
            .collect();
        for (l, v) in &owned {
            pts.push((l.as_str(), v.as_slice()));
        }
        let model = train_ovo(&feats(&pts), 10.0, 1.0).unwrap();
        assert_eq!(model.num_pairs(), 28);
        assert_eq!(model.classes().len(), 8);
        assert!(model.classes().windows(2).all(|w| w[0] < w[1]));
        assert_eq!(model.predict(&[0.0, 0.1]).unwrap(), "c0");
        assert_eq!(model.predict(&[21.0, 0.0]).unwrap(), "c7");
    }

    #[test]
    fn ovo_rejects_single_class_and_empty() {
        assert!(train_ovo(&[], 10.0, 1.0).is_err());
        let one = feats(&[("a", &[0.0][..]), ("a", &[1.0][..])]);
        assert!(train_ovo(&one, 10.0, 1.0).is_err());
    }

    fn constant_svm(bias: f64) -> BinarySvm {
        BinarySvm {
            support: Vec::new(),
            coef: Vec::new(),
            bias,
            gamma: 1.0,
        }
    }

    fn tie_model(b01: f64, b02: f64, b12: f64) -> SvmModel {
        SvmModel {
            classes: vec!["a".into(), "b".into(), "c".into()],
            dim: 1,
            c: 10.0,
            gamma: 1.0,
            pairs: vec![
                PairModel { pos: 0, neg: 1, svm: constant_svm(b01) },
                PairModel { pos: 0, neg: 2, svm: constant_svm(b02) },
                PairModel { pos: 1, neg: 2, svm: constant_svm(b12) },
            ],
        }
    }

    #[test]
    fn vote_ties_fall_to_margin_then_to_sorted_order() {
        // One vote each; class c carries the largest winning margin.
        let m = tie_model(1.0, -4.0, 1.0);
        assert_eq!(m.predict(&[0.0]).unwrap(), "c");
        // One vote each with equal margins: first sorted class wins.
        let m = tie_model(2.0, -2.0, 2.0);
        assert_eq!(m.predict(&[0.0]).unwrap(), "a");
        // Clear majority beats any margin.
        let m = tie_model(1.0, 9.0, -9.0);
        assert_eq!(m.predict(&[0.0]).unwrap(), "a");
    }

    #[test]
    fn duplicated_training_point_leaves_predictions_unchanged() {
        let base = feats(&[
            ("a", &[0.0, 0.0][..]),
            ("a", &[0.2, 0.1][..]),
            ("b", &[3.0, 3.0][..]),
            ("b", &[3.2, 3.1][..]),
        ]);
        let mut dup = base.clone();
        dup.push(base[0].clone());
        let m1 = train_ovo(&base, 10.0, 1.0).unwrap();
        let m2 = train_ovo(&dup, 10.0, 1.0).unwrap();
        for probe in [[0.1, 0.1], [3.1, 3.0], [1.4, 1.6], [-1.0, 4.0]] {
            assert_eq!(m1.predict(&probe).unwrap(), m2.predict(&probe).unwrap());
        }
    }

    #[test]
    fn evaluation_tallies_confusion_counts() {
        let train = feats(&[
            ("a", &[0.0][..]),
            ("a", &[0.1][..]),
            ("b", &[5.0][..]),
            ("b", &[5.1][..]),
        ]);
        let model = train_ovo(&train, 10.0, 1.0).unwrap();
        let test = feats(&[
            ("a", &[0.05][..]),
            ("b", &[5.05][..]),
            ("b", &[4.9][..]),
        ]);
        let cm = evaluate(&model, &test).unwrap();
        assert_eq!(cm.total(), 3);
        assert_eq!(cm.accuracy(), 1.0);
        assert_eq!(cm.get(0, 0), 1);
        assert_eq!(cm.get(1, 1), 2);
        assert_eq!(cm.get(0, 1), 0);
        let csv = cm.to_csv_string();
        assert_eq!(csv, "true_label,a,b\na,1,0\nb,0,2\n");
        let unseen = feats(&[("z", &[0.0][..])]);
        assert!(evaluate(&model, &unseen).is_err());
        assert!(evaluate(&model, &[]).is_err());
    }

    #[test]
    fn model_round_trips_through_disk() {
        let train = feats(&[
            ("a", &[0.0, 1.0][..]),
            ("a", &[0.1, 0.9][..]),
            ("b", &[4.0, -1.0][..]),
            ("b", &[4.1, -0.9][..]),
            ("c", &[-4.0, -4.0][..]),
            ("c", &[-4.1, -3.9][..]),
        ]);
        let model = train_ovo(&train, 10.0, 0.7).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let back = SvmModel::load(&path).unwrap();
        assert_eq!(back, model);
        assert_eq!(
            back.predict(&[0.0, 1.0]).unwrap(),
            model.predict(&[0.0, 1.0]).unwrap()
        );
        let mut text = std::fs::read_to_string(&path).unwrap();
        text = text.replace("\"version\": 1", "\"version\": 99");
        std::fs::write(&path, text).unwrap();
        assert!(SvmModel::load(&path).is_err());
    }

    #[test]
    fn default_gamma_uses_pooled_variance() {
        // Per-entry values {0, 2}: mean 1, variance 1, dim 2.
        let f = feats(&[("a", &[0.0, 2.0][..]), ("b", &[2.0, 0.0][..])]);
        assert!((default_gamma(&f).unwrap() - 0.5).abs() < 1e-15);
        let constant = feats(&[("a", &[3.0, 3.0, 3.0][..])]);
        assert!((default_gamma(&constant).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(default_gamma(&[]).is_err());
    }

    fn tiny_dataset() -> (Vec<LabeledTensor>, Vec<LabeledTensor>) {
        let cfg = SynthConfig {
            classes: 3,
            per_class: 8,
            shape: vec![8, 8, 3],
            ranks: vec![2, 2, 2],
            noise: 0.02,
            core_jitter: 0.3,
            seed: 11,
        };
        let data = synth_dataset(&cfg).unwrap();
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, s) in data.into_iter().enumerate() {
            if i % 8 < 6 {
                train.push(s);
            } else {
                test.push(s);
            }
        }
        (train, test)
    }

    #[test]
    fn pipelines_classify_a_tiny_synthetic_set() {
        let (train, test) = tiny_dataset();
        let main = classify_sum_of_tns(&train, &test, &[2, 2, 2], 10.0, None).unwrap();
        assert_eq!(main.confusion.total(), test.len());
        assert!(main.confusion.accuracy() >= 0.95, "{}", main.confusion.accuracy());
        assert!(main.skipped.is_empty());
        assert_eq!(main.train_features[0].values.len(), 8);
        let raw = baseline_raw_svm(&train, &test, 10.0, None, false).unwrap();
        assert_eq!(raw.train_features[0].values.len(), 8 * 8 * 3);
        assert_eq!(raw.confusion.total(), test.len());
        let tkd = baseline_tkd_concat(&train, &test, &[2, 2, 2], 10.0, None).unwrap();
        assert_eq!(tkd.confusion.total(), test.len());
        assert!(tkd.confusion.accuracy() >= 0.5);
    }

    #[test]
    fn zscore_standardizes_train_dimensions() {
        let t = |v: Vec<f64>, id: &str, label: &str| LabeledTensor {
            id: id.into(),
            label: label.into(),
            object: "-".into(),
            tensor: DenseTensor::new(vec![2], v).unwrap(),
        };
        let train = vec![
            t(vec![0.0, 5.0], "a0", "a"),
            t(vec![2.0, 5.0], "a1", "a"),
            t(vec![10.0, 5.0], "b0", "b"),
            t(vec![12.0, 5.0], "b1", "b"),
        ];
        let test = vec![t(vec![1.0, 5.0], "t0", "a")];
        let out = baseline_raw_svm(&train, &test, 10.0, Some(1.0), true).unwrap();
        for dim in 0..2 {
            let mean: f64 = out
                .train_features
                .iter()
                .map(|f| f.values[dim])
                .sum::<f64>()
                / 4.0;
            assert!(mean.abs() < 1e-12);
        }
        // Constant dimension stays put instead of dividing by zero.
        assert!(out.train_features.iter().all(|f| f.values[1] == 0.0));
        let var0: f64 = out
            .train_features
            .iter()
            .map(|f| f.values[0] * f.values[0])
            .sum::<f64>()
            / 4.0;
        assert!((var0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stacked_baseline_with_one_sample_matches_its_own_factors() {
        let mut rng = ChaCha12Rng::seed_from_u64(91);
        let data: Vec<f64> = (0..6 * 5 * 4).map(|_| rng.sample(StandardNormal)).collect();
        let t = DenseTensor::new(vec![6, 5, 4], data).unwrap();
        let sample = LabeledTensor {
            id: "s".into(),
            label: "a".into(),
            object: "-".into(),
            tensor: t.clone(),
        };
        let other = LabeledTensor {
            id: "o".into(),
            label: "b".into(),
            object: "-".into(),
            tensor: t.scale(-0.5),
        };
        let ranks = [2, 2, 2];
        // Internals check: the stacked unfoldings reproduce the sample's
        // own truncated factors when the stack holds one sample.
        let mut stacked_shape = t.shape().to_vec();
        stacked_shape.push(1);
        let stack = DenseTensor::new(stacked_shape, t.to_vec()).unwrap();
        let own = TuckerNetwork::hosvd(&t, &ranks).unwrap();
        for n in 0..3 {
            let b = tsvd(&stack.unfold(n).unwrap(), ranks[n]).unwrap();
            let pu = b.matmul(&b.transpose()).unwrap();
            let pv = own
                .factor(n)
                .matmul(&own.factor(n).transpose())
                .unwrap();
            let d = pu.add(&pv.scale(-1.0)).unwrap().frobenius_norm();
            assert!(d <= 1e-10, "mode {n}: projector distance {d}");
        }
        // The public entry point runs end to end on two samples.
        let out =
            baseline_tkd_concat(&[sample.clone(), other.clone()], &[sample, other], &ranks, 10.0, None)
                .unwrap();
        assert_eq!(out.confusion.total(), 2);
    }
}
