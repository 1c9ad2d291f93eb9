//! Feature extraction for classification: every sample is decomposed in
//! Tucker format at fixed ranks, its core norm is spread onto the factors,
//! the scaled factors of all samples are concatenated per mode, and a
//! common orthonormal basis per mode is truncated out of the result.
//! Samples are then projected onto the common basis and the vectorized
//! projected cores are the feature vectors.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigen, tsvd};
use crate::tensor::{DenseTensor, Matrix};
use crate::tucker::TuckerNetwork;

/// One orthonormal basis matrix per mode, I_n x R_n.
#[derive(Debug, Clone, PartialEq)]
pub struct CommonBasis {
    bases: Vec<Matrix>,
}

impl CommonBasis {
    /// Validates that every basis has orthonormal columns.
    pub fn new(bases: Vec<Matrix>) -> Result<Self> {
        if bases.is_empty() {
            return Err(Error::EmptyInput("basis list".into()));
        }
        for (n, b) in bases.iter().enumerate() {
            let gram = b.transpose().matmul(b)?;
            for i in 0..gram.rows() {
                for j in 0..gram.cols() {
                    let want = if i == j { 1.0 } else { 0.0 };
                    if (gram.get(i, j) - want).abs() > 1e-10 {
                        return Err(Error::InvalidArgument(format!(
                            "basis {n} columns are not orthonormal"
                        )));
                    }
                }
            }
        }
        Ok(Self { bases })
    }

    pub fn bases(&self) -> &[Matrix] {
        &self.bases
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.bases.iter().map(|b| b.cols()).collect()
    }

    pub fn mode_dims(&self) -> Vec<usize> {
        self.bases.iter().map(|b| b.rows()).collect()
    }

    /// Projected core: the sample contracted with every transposed basis.
    pub fn project(&self, sample: &DenseTensor) -> Result<DenseTensor> {
        if sample.shape() != self.mode_dims().as_slice() {
            return Err(Error::ShapeMismatch(format!(
                "sample shape {:?} vs basis dims {:?}",
                sample.shape(),
                self.mode_dims()
            )));
        }
        let mut core = sample.clone();
        for (n, b) in self.bases.iter().enumerate() {
            core = core.mode_product(&b.transpose(), n)?;
        }
        Ok(core)
    }
}

/// Vectorized projected core with sample identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub id: String,
    pub label: String,
    pub values: Vec<f64>,
}

/// Basis plus the indices of samples that were left out of the
/// concatenation because their decomposition core was all-zero.
#[derive(Debug, Clone)]
pub struct BasisFit {
    pub basis: CommonBasis,
    pub skipped: Vec<usize>,
}

/// Projects one sample and tags the result.
pub fn project_to_feature(
    sample: &DenseTensor,
    basis: &CommonBasis,
    id: &str,
    label: &str,
) -> Result<FeatureVector> {
    let core = basis.project(sample)?;
    Ok(FeatureVector {
        id: id.to_string(),
        label: label.to_string(),
        values: core.to_vec(),
    })
}

/// Per-sample scaled factors: decompose at the given ranks and absorb the
/// core norm into the factors. A zero core reports the sample degenerate.
fn scaled_factors(sample: &DenseTensor, ranks: &[usize]) -> Result<Vec<Matrix>> {
    let tk = TuckerNetwork::hosvd(sample, ranks)?;
    let tk = tk.normalize_core()?;
    Ok(tk.factors().to_vec())
}

fn check_fit_inputs(samples: &[&DenseTensor], ranks: &[usize]) -> Result<()> {
    let first = *samples
        .first()
        .ok_or_else(|| Error::EmptyInput("no samples to fit".into()))?;
    for (i, s) in samples.iter().enumerate() {
        if s.shape() != first.shape() {
            return Err(Error::ShapeMismatch(format!(
                "sample {i} has shape {:?}, sample 0 has {:?}",
                s.shape(),
                first.shape()
            )));
        }
    }
    if ranks.len() != first.order() {
        return Err(Error::ShapeMismatch(format!(
            "{} ranks for order-{} samples",
            ranks.len(),
            first.order()
        )));
    }
    for (n, &r) in ranks.iter().enumerate() {
        if r == 0 || r > first.shape()[n] {
            return Err(Error::RankOutOfRange {
                rank: r,
                max: first.shape()[n],
            });
        }
    }
    Ok(())
}

/// Columnwise concatenation of matrices with equal row counts.
fn concat_columns(mats: &[Vec<Matrix>], mode: usize) -> Matrix {
    let rows = mats[0][mode].rows();
    let cols: usize = mats.iter().map(|f| f[mode].cols()).sum();
    let mut data = Vec::with_capacity(rows * cols);
    for f in mats {
        data.extend_from_slice(f[mode].data());
    }
    Matrix::new(rows, cols, data).expect("dimensions add up by construction")
}

/// Fits the common basis: per sample, scaled Tucker factors; per mode,
/// the factors concatenate in sample order and the basis is the rank-R
/// truncation of the concatenation. Degenerate samples are skipped from
/// the concatenation and reported by index.
pub fn fit_common_basis(samples: &[&DenseTensor], ranks: &[usize]) -> Result<BasisFit> {
    check_fit_inputs(samples, ranks)?;
    let order = samples[0].order();
    let mut per_sample: Vec<Vec<Matrix>> = Vec::with_capacity(samples.len());
    let mut skipped = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        match scaled_factors(s, ranks) {
            Ok(f) => per_sample.push(f),
            Err(Error::DegenerateSample(_)) => skipped.push(i),
            Err(e) => return Err(e),
        }
    }
    if per_sample.is_empty() {
        return Err(Error::DegenerateSample(
            "every sample has a zero decomposition core".into(),
        ));
    }
    let mut bases = Vec::with_capacity(order);
    for n in 0..order {
        bases.push(tsvd(&concat_columns(&per_sample, n), ranks[n])?);
    }
    Ok(BasisFit {
        basis: CommonBasis::new(bases)?,
        skipped,
    })
}

/// Gram-matrix variant of `fit_common_basis`: instead of materializing the
/// concatenation it accumulates its outer Gram matrix per mode and takes
/// leading eigenvectors. Spans the same subspaces; exists for datasets too
/// large to concatenate.
pub fn fit_common_basis_gram(samples: &[&DenseTensor], ranks: &[usize]) -> Result<BasisFit> {
    check_fit_inputs(samples, ranks)?;
    let order = samples[0].order();
    let mut grams: Vec<Matrix> = samples[0]
        .shape()
        .iter()
        .map(|&d| Matrix::zeros(d, d))
        .collect();
    let mut skipped = Vec::new();
    let mut used = 0usize;
    for (i, s) in samples.iter().enumerate() {
        match scaled_factors(s, ranks) {
            Ok(factors) => {
                used += 1;
                for (n, f) in factors.iter().enumerate() {
                    grams[n] = grams[n].add(&f.matmul(&f.transpose())?)?;
                }
            }
            Err(Error::DegenerateSample(_)) => skipped.push(i),
            Err(e) => return Err(e),
        }
    }
    if used == 0 {
        return Err(Error::DegenerateSample(
            "every sample has a zero decomposition core".into(),
        ));
    }
    let mut bases = Vec::with_capacity(order);
    for (n, g) in grams.iter().enumerate() {
        let eig = symmetric_eigen(g)?;
        let mut b = Matrix::zeros(g.rows(), ranks[n]);
        for c in 0..ranks[n] {
            for r in 0..g.rows() {
                b.set(r, c, eig.vectors.get(r, c));
            }
        }
        bases.push(b);
    }
    Ok(BasisFit {
        basis: CommonBasis::new(bases)?,
        skipped,
    })
}

/// Writes feature vectors as CSV: id,label,g1..gK. Values round-trip
/// bit-exactly.
pub fn write_features_csv(path: &Path, features: &[FeatureVector]) -> Result<()> {
    let first = features
        .first()
        .ok_or_else(|| Error::EmptyInput("no features to write".into()))?;
    let k = first.values.len();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["id".to_string(), "label".to_string()];
    header.extend((1..=k).map(|i| format!("g{i}")));
    w.write_record(&header)?;
    for f in features {
        if f.values.len() != k {
            return Err(Error::ShapeMismatch(format!(
                "feature {} has {} values, expected {k}",
                f.id,
                f.values.len()
            )));
        }
        let mut rec = vec![f.id.clone(), f.label.clone()];
        rec.extend(f.values.iter().map(|v| format!("{v}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_features_csv(path: &Path) -> Result<Vec<FeatureVector>> {
    let mut r = csv::Reader::from_path(path)?;
    let width = r.headers()?.len();
    if width < 3 {
        return Err(Error::Parse("feature csv needs id,label,g1.. columns".into()));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != width {
            return Err(Error::Parse(format!(
                "feature row with {} fields, expected {width}",
                rec.len()
            )));
        }
        let values: Vec<f64> = rec
            .iter()
            .skip(2)
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("bad feature value {t:?}: {e}")))
            })
            .collect::<Result<_>>()?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("feature row {}", rec[0].to_owned())));
        }
        out.push(FeatureVector {
            id: rec[0].to_string(),
            label: rec[1].to_string(),
            values,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;
    use rand_distr::StandardNormal;

    fn rng(seed: u64) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(seed)
    }

    fn random_tensor(shape: &[usize], rng: &mut ChaCha12Rng) -> DenseTensor {
        let len = shape.iter().product();
        let data = (0..len).map(|_| rng.sample(StandardNormal)).collect();
        DenseTensor::new(shape.to_vec(), data).unwrap()
    }

    /// || U U^T - V V^T ||_F, zero iff equal column spans.
    fn projector_distance(u: &Matrix, v: &Matrix) -> f64 {
        let pu = u.matmul(&u.transpose()).unwrap();
        let pv = v.matmul(&v.transpose()).unwrap();
        pu.add(&pv.scale(-1.0)).unwrap().frobenius_norm()
    }

    #[test]
    fn basis_construction_requires_orthonormal_columns() {
        let ok = CommonBasis::new(vec![Matrix::identity(3), Matrix::identity(2)]);
        assert!(ok.is_ok());
        let skew = Matrix::from_rows(&[&[1.0, 1.0], &[0.0, 1.0]]).unwrap();
        assert!(CommonBasis::new(vec![skew]).is_err());
        assert!(CommonBasis::new(vec![]).is_err());
    }

    #[test]
    fn identity_basis_projection_is_vectorization() {
        let mut r = rng(60);
        let s = random_tensor(&[3, 4, 2], &mut r);
        let basis = CommonBasis::new(vec![
            Matrix::identity(3),
            Matrix::identity(4),
            Matrix::identity(2),
        ])
        .unwrap();
        let f = project_to_feature(&s, &basis, "a", "x").unwrap();
        assert_eq!(f.values, s.to_vec());
        assert_eq!(f.id, "a");
        assert_eq!(f.label, "x");
    }

    #[test]
    fn projection_is_isometric_on_basis_subspace() {
        let mut r = rng(61);
        let anchor = random_tensor(&[6, 5, 4], &mut r);
        let tk = TuckerNetwork::hosvd(&anchor, &[2, 3, 2]).unwrap();
        let basis = CommonBasis::new(tk.factors().to_vec()).unwrap();
        let core = random_tensor(&[2, 3, 2], &mut r);
        let mut sample = core.clone();
        for (n, b) in basis.bases().iter().enumerate() {
            sample = sample.mode_product(b, n).unwrap();
        }
        let proj = basis.project(&sample).unwrap();
        assert_eq!(proj.shape(), &[2, 3, 2]);
        assert!(
            (proj.frobenius_norm() - sample.frobenius_norm()).abs()
                <= 1e-12 * sample.frobenius_norm()
        );
        let diff = proj.add(&core.scale(-1.0)).unwrap().frobenius_norm();
        assert!(diff <= 1e-12 * core.frobenius_norm());
    }

    #[test]
    fn projection_is_non_expansive() {
        let mut r = rng(62);
        let anchor = random_tensor(&[6, 5, 4], &mut r);
        let tk = TuckerNetwork::hosvd(&anchor, &[3, 2, 2]).unwrap();
        let basis = CommonBasis::new(tk.factors().to_vec()).unwrap();
        for _ in 0..20 {
            let s = random_tensor(&[6, 5, 4], &mut r);
            let p = basis.project(&s).unwrap();
            assert!(p.frobenius_norm() <= s.frobenius_norm() + 1e-12);
        }
    }

    #[test]
    fn projection_order_is_irrelevant() {
        let mut r = rng(63);
        let anchor = random_tensor(&[5, 4, 6], &mut r);
        let tk = TuckerNetwork::hosvd(&anchor, &[2, 2, 3]).unwrap();
        let basis = CommonBasis::new(tk.factors().to_vec()).unwrap();
        let s = random_tensor(&[5, 4, 6], &mut r);
        let fixed = basis.project(&s).unwrap();
        for perm in [[2usize, 0, 1], [1, 2, 0], [2, 1, 0]] {
            let mut core = s.clone();
            for &n in &perm {
                core = core
                    .mode_product(&basis.bases()[n].transpose(), n)
                    .unwrap();
            }
            let diff = core.add(&fixed.scale(-1.0)).unwrap().frobenius_norm();
            assert!(diff <= 1e-13 * fixed.frobenius_norm().max(1.0));
        }
    }

    #[test]
    fn projection_rejects_shape_mismatch() {
        let basis = CommonBasis::new(vec![Matrix::identity(3), Matrix::identity(4)]).unwrap();
        let s = DenseTensor::zeros(vec![3, 5]).unwrap();
        assert!(basis.project(&s).is_err());
    }

    #[test]
    fn single_sample_basis_spans_own_factors() {
        let mut r = rng(64);
        let s = random_tensor(&[6, 5, 4], &mut r);
        let ranks = [2, 2, 3];
        let fit = fit_common_basis(&[&s], &ranks).unwrap();
        assert!(fit.skipped.is_empty());
        let own = TuckerNetwork::hosvd(&s, &ranks).unwrap();
        for n in 0..3 {
            let d = projector_distance(&fit.basis.bases()[n], own.factor(n));
            assert!(d <= 1e-10, "mode {n}: projector distance {d}");
        }
    }

    #[test]
    fn duplicated_samples_leave_basis_span_unchanged() {
        let mut r = rng(65);
        let s = random_tensor(&[5, 4, 3], &mut r);
        let ranks = [2, 2, 2];
        let one = fit_common_basis(&[&s], &ranks).unwrap();
        let four = fit_common_basis(&[&s, &s, &s, &s], &ranks).unwrap();
        for n in 0..3 {
            let d = projector_distance(&one.basis.bases()[n], &four.basis.bases()[n]);
            assert!(d <= 1e-10, "mode {n}: projector distance {d}");
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let mut r = rng(66);
        let samples: Vec<DenseTensor> =
            (0..6).map(|_| random_tensor(&[5, 4, 3], &mut r)).collect();
        let refs: Vec<&DenseTensor> = samples.iter().collect();
        let a = fit_common_basis(&refs, &[2, 2, 2]).unwrap();
        let b = fit_common_basis(&refs, &[2, 2, 2]).unwrap();
        assert_eq!(a.basis, b.basis);
    }

    #[test]
    fn gram_path_spans_same_subspaces() {
        let mut r = rng(67);
        let samples: Vec<DenseTensor> =
            (0..8).map(|_| random_tensor(&[6, 5, 4], &mut r)).collect();
        let refs: Vec<&DenseTensor> = samples.iter().collect();
        let ranks = [2, 3, 2];
        let direct = fit_common_basis(&refs, &ranks).unwrap();
        let gram = fit_common_basis_gram(&refs, &ranks).unwrap();
        for n in 0..3 {
            let d = projector_distance(&direct.basis.bases()[n], &gram.basis.bases()[n]);
            assert!(d <= 1e-8, "mode {n}: projector distance {d}");
        }
    }

    #[test]
    fn positive_scaling_of_a_sample_scales_its_factor_columns() {
        let mut r = rng(68);
        let s = random_tensor(&[5, 4, 3], &mut r);
        let c: f64 = 3.7;
        let base = scaled_factors(&s, &[2, 2, 2]).unwrap();
        let scaled = scaled_factors(&s.scale(c), &[2, 2, 2]).unwrap();
        let expect = c.powf(1.0 / 3.0);
        for n in 0..3 {
            for (a, b) in base[n].data().iter().zip(scaled[n].data()) {
                assert!(
                    (b - a * expect).abs() <= 1e-12 * a.abs().max(1.0),
                    "mode {n}: {a} scaled to {b}, expected factor {expect}"
                );
            }
        }
    }

    #[test]
    fn degenerate_sample_is_skipped_and_reported() {
        let mut r = rng(69);
        let good = random_tensor(&[4, 3, 3], &mut r);
        let zero = DenseTensor::zeros(vec![4, 3, 3]).unwrap();
        let fit = fit_common_basis(&[&good, &zero, &good], &[2, 2, 2]).unwrap();
        assert_eq!(fit.skipped, vec![1]);
        let all_zero = fit_common_basis(&[&zero], &[2, 2, 2]);
        assert!(matches!(all_zero, Err(Error::DegenerateSample(_))));
    }

    #[test]
    fn fit_rejects_bad_inputs() {
        let mut r = rng(70);
        let a = random_tensor(&[4, 3, 3], &mut r);
        let b = random_tensor(&[4, 4, 3], &mut r);
        assert!(fit_common_basis(&[&a, &b], &[2, 2, 2]).is_err());
        assert!(fit_common_basis(&[], &[2, 2, 2]).is_err());
        assert!(fit_common_basis(&[&a], &[2, 2]).is_err());
        assert!(fit_common_basis(&[&a], &[2, 2, 9]).is_err());
    }

    #[test]
    fn feature_csv_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.csv");
        let feats = vec![
            FeatureVector {
                id: "a".into(),
                label: "cow".into(),
                values: vec![0.1 + 0.2, -1.5, 1.0 / 3.0],
            },
            FeatureVector {
                id: "b".into(),
                label: "cup".into(),
                values: vec![1e-300, 2e17, -0.0],
            },
        ];
        write_features_csv(&path, &feats).unwrap();
        let back = read_features_csv(&path).unwrap();
        assert_eq!(back, feats);
    }

    #[test]
    fn feature_csv_rejects_ragged_and_non_finite() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        let feats = vec![
            FeatureVector {
                id: "a".into(),
                label: "x".into(),
                values: vec![1.0, 2.0],
            },
            FeatureVector {
                id: "b".into(),
                label: "x".into(),
                values: vec![1.0],
            },
        ];
        assert!(write_features_csv(&path, &feats).is_err());
        std::fs::write(&path, "id,label,g1\na,x,NaN\n").unwrap();
        assert!(matches!(
            read_features_csv(&path),
            Err(Error::NonFinite(_))
        ));
    }
}
