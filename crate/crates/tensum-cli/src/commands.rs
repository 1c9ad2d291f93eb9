//! Implementations of the five subcommands. Every command echoes its
//! resolved configuration to stdout and to `<out>/config.json`; outputs
//! carry no wall-clock fields, so reruns with equal configs are bit-exact.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::Serialize;

use tensum::classify::{
    baseline_raw_svm, baseline_tkd_concat, classify_sum_of_tns, ConfusionMatrix, EvalOutcome,
};
use tensum::data::{
    derive_seed, load_tensor_file, split_by_label, synth_dataset, write_tensor_dataset,
    DatasetManifest, LabeledTensor, SynthConfig,
};
use tensum::features::write_features_csv;
use tensum::sum::{sum_chains, sum_tucker, MatrixChain};
use tensum::tensor::{DenseTensor, Matrix};
use tensum::tucker::TuckerNetwork;
use tensum::{Error, Result};

use crate::{CompareArgs, DecomposeArgs, EvalArgs, SynthArgs, SynthGenArgs, TrainEvalArgs, VerifySumArgs};

const VERIFY_TOLERANCE: f64 = 1e-12;
const TUCKER_TAG: u64 = 1;
const CHAIN_TAG: u64 = 2;
/// Stream tag for per-realization split seeds, far from synth class tags.
const REALIZATION_TAG: u64 = u64::MAX;

#[derive(Serialize)]
struct Echo<'a, T: Serialize> {
    command: &'static str,
    #[serde(flatten)]
    config: &'a T,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn echo_config(out: &Path, command: &'static str, config: &impl Serialize) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let echo = Echo { command, config };
    println!("{}", serde_json::to_string_pretty(&echo)?);
    write_json(&out.join("config.json"), &echo)
}

// ---------------------------------------------------------------- verify-sum

#[derive(Serialize)]
struct TrialReport {
    kind: &'static str,
    trial: usize,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    dims: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ranks_x: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ranks_y: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dims_x: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dims_y: Option<Vec<usize>>,
    error: f64,
    pass: bool,
}

fn uniform(rng: &mut ChaCha12Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-5.0..5.0)).collect()
}

fn random_network(rng: &mut ChaCha12Rng, dims: &[usize], ranks: &[usize]) -> TuckerNetwork {
    let factors: Vec<Matrix> = dims
        .iter()
        .zip(ranks)
        .map(|(&d, &r)| Matrix::new(d, r, uniform(rng, d * r)).expect("sized to fit"))
        .collect();
    let core =
        DenseTensor::new(ranks.to_vec(), uniform(rng, ranks.iter().product())).expect("sized");
    TuckerNetwork::new(core, factors).expect("factor dims match core")
}

fn tucker_trial(args: &VerifySumArgs, trial: usize, seed: u64) -> Result<TrialReport> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let order = rng.gen_range(3..=args.max_order);
    let dims: Vec<usize> = (0..order).map(|_| rng.gen_range(2..=args.max_dim)).collect();
    let rx: Vec<usize> = (0..order).map(|_| rng.gen_range(1..=args.max_rank)).collect();
    let ry: Vec<usize> = (0..order).map(|_| rng.gen_range(1..=args.max_rank)).collect();
    let x = random_network(&mut rng, &dims, &rx);
    let mut y = random_network(&mut rng, &dims, &ry);
    // Occasionally sum against a represented zero tensor.
    if rng.gen_ratio(1, 50) {
        y = TuckerNetwork::new(
            DenseTensor::zeros(ry.clone())?,
            y.factors().to_vec(),
        )?;
    }
    let dense = x.reconstruct().add(&y.reconstruct())?;
    let got = sum_tucker(&x, &y)?.reconstruct();
    let diff = got.add(&dense.scale(-1.0))?.frobenius_norm();
    let error = diff / (1.0 + dense.frobenius_norm());
    Ok(TrialReport {
        kind: "tucker",
        trial,
        seed,
        dims: Some(dims),
        ranks_x: Some(rx),
        ranks_y: Some(ry),
        dims_x: None,
        dims_y: None,
        error,
        pass: error <= VERIFY_TOLERANCE,
    })
}

fn chain_trial(args: &VerifySumArgs, trial: usize, seed: u64) -> Result<TrialReport> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let len = rng.gen_range(2..=args.max_chain_len);
    let dx: Vec<usize> = (0..=len).map(|_| rng.gen_range(1..=args.max_chain_dim)).collect();
    let mut dy = dx.clone();
    for d in dy[1..len].iter_mut() {
        *d = rng.gen_range(1..=args.max_chain_dim);
    }
    let make = |dims: &[usize], rng: &mut ChaCha12Rng| -> Result<MatrixChain> {
        let links = dims
            .windows(2)
            .map(|w| Matrix::new(w[0], w[1], uniform(rng, w[0] * w[1])))
            .collect::<Result<Vec<_>>>()?;
        MatrixChain::new(links)
    };
    let x = make(&dx, &mut rng)?;
    let y = make(&dy, &mut rng)?;
    let dense = x.contract().add(&y.contract())?;
    let got = sum_chains(&x, &y)?.contract();
    let diff = got.add(&dense.scale(-1.0))?.frobenius_norm();
    let error = diff / (1.0 + dense.frobenius_norm());
    Ok(TrialReport {
        kind: "chain",
        trial,
        seed,
        dims: None,
        ranks_x: None,
        ranks_y: None,
        dims_x: Some(dx),
        dims_y: Some(dy),
        error,
        pass: error <= VERIFY_TOLERANCE,
    })
}

fn print_trial(t: &TrialReport) {
    let shape = match t.kind {
        "tucker" => format!(
            "dims {:?} ranks {:?}+{:?}",
            t.dims.as_ref().expect("tucker dims"),
            t.ranks_x.as_ref().expect("tucker ranks"),
            t.ranks_y.as_ref().expect("tucker ranks"),
        ),
        _ => format!(
            "dims {:?} / {:?}",
            t.dims_x.as_ref().expect("chain dims"),
            t.dims_y.as_ref().expect("chain dims"),
        ),
    };
    let verdict = if t.pass { "ok" } else { "FAIL" };
    println!(
        "{} trial {:>3}: {} error {:.3e} {}",
        t.kind, t.trial, shape, t.error, verdict
    );
}

pub fn verify_sum(args: &VerifySumArgs) -> Result<u8> {
    if args.max_order < 3 || args.max_dim < 2 || args.max_rank < 1 {
        return Err(Error::InvalidArgument(
            "need max-order >= 3, max-dim >= 2, max-rank >= 1".into(),
        ));
    }
    if args.max_chain_len < 2 || args.max_chain_dim < 1 {
        return Err(Error::InvalidArgument(
            "need max-chain-len >= 2, max-chain-dim >= 1".into(),
        ));
    }
    if args.trials < 1 || args.chain_trials < 1 {
        return Err(Error::InvalidArgument("need at least one trial".into()));
    }
    let out = &args.out.out;
    echo_config(out, "verify-sum", args)?;
    if let Some(seed) = args.replay_seed {
        let report = if args.replay_kind == "chain" {
            chain_trial(args, 0, seed)?
        } else {
            tucker_trial(args, 0, seed)?
        };
        print_trial(&report);
        write_json(&out.join("verify.json"), &vec![&report])?;
        return Ok(if report.pass { 0 } else { 1 });
    }
    let mut reports: Vec<TrialReport> = (0..args.trials)
        .into_par_iter()
        .map(|i| tucker_trial(args, i, derive_seed(args.seed, TUCKER_TAG, i as u64)))
        .chain(
            (0..args.chain_trials)
                .into_par_iter()
                .map(|i| chain_trial(args, i, derive_seed(args.seed, CHAIN_TAG, i as u64))),
        )
        .collect::<Result<Vec<_>>>()?;
    reports.sort_by_key(|t| (t.kind != "tucker", t.trial));
    for t in &reports {
        print_trial(t);
    }
    write_json(&out.join("verify.json"), &reports)?;
    let failures: Vec<&TrialReport> = reports.iter().filter(|t| !t.pass).collect();
    if failures.is_empty() {
        println!(
            "all {} trials within {VERIFY_TOLERANCE:.0e}",
            reports.len()
        );
        Ok(0)
    } else {
        for f in failures {
            println!(
                "FAILED {} trial {} (error {:.3e}); replay with: tensum verify-sum --replay-seed {} --replay-kind {}",
                f.kind, f.trial, f.error, f.seed, f.kind
            );
        }
        Ok(1)
    }
}

// ------------------------------------------------------------ dataset access

fn synth_config(synth: &SynthArgs, seed: u64) -> SynthConfig {
    SynthConfig {
        classes: synth.classes,
        per_class: synth.per_class,
        shape: synth.shape.clone(),
        ranks: synth.template_ranks.clone(),
        noise: synth.noise,
        core_jitter: synth.core_jitter,
        seed,
    }
}

fn load_dataset(eval: &EvalArgs) -> Result<Vec<LabeledTensor>> {
    let target = eval.downsample.map(|d| (d, d));
    match &eval.data {
        Some(path) => {
            let manifest = if path.is_dir() {
                let csv = path.join("manifest.csv");
                if csv.is_file() {
                    DatasetManifest::read_csv(&csv)?
                } else {
                    DatasetManifest::from_dir(path)?
                }
            } else {
                DatasetManifest::read_csv(path)?
            };
            manifest.load(target)
        }
        None => synth_dataset(&synth_config(&eval.synth, eval.seed)),
    }
}

fn check_fraction(fraction: f64) -> Result<()> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction {fraction} must lie strictly inside (0, 1); \
             1.0 would leave the test set empty"
        )));
    }
    Ok(())
}

fn split_samples(
    data: &[LabeledTensor],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<LabeledTensor>, Vec<LabeledTensor>)> {
    let labels: Vec<&str> = data.iter().map(|s| s.label.as_str()).collect();
    let split = split_by_label(&labels, fraction, seed)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| data[i].clone()).collect::<Vec<_>>();
    Ok((pick(&split.train), pick(&split.test)))
}

// ------------------------------------------------------------- train-eval

#[derive(Serialize)]
struct RealizationReport {
    realization: usize,
    split_seed: u64,
    accuracy: f64,
    gamma: f64,
    skipped: Vec<String>,
    confusion: ConfusionMatrix,
}

#[derive(Serialize)]
struct AccuracySummary {
    realizations: usize,
    mean_accuracy: f64,
    per_realization: Vec<RealizationReport>,
}

fn mean_confusion_csv(reports: &[RealizationReport]) -> Result<String> {
    let first = &reports[0].confusion;
    let classes = first.classes();
    let k = classes.len();
    let mut sums = vec![0.0f64; k * k];
    for r in reports {
        if r.confusion.classes() != classes {
            return Err(Error::InvalidArgument(
                "realizations disagree on the class set".into(),
            ));
        }
        for i in 0..k {
            for j in 0..k {
                sums[i * k + j] += r.confusion.get(i, j) as f64;
            }
        }
    }
    let n = reports.len() as f64;
    let mut out = String::from("true_label");
    for c in classes {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (i, c) in classes.iter().enumerate() {
        out.push_str(c);
        for j in 0..k {
            out.push(',');
            out.push_str(&format!("{}", sums[i * k + j] / n));
        }
        out.push('\n');
    }
    Ok(out)
}

fn run_realization(
    data: &[LabeledTensor],
    args: &EvalArgs,
    fraction: f64,
    realization: usize,
    split_seed: u64,
) -> Result<EvalOutcome> {
    let (train, test) = split_samples(data, fraction, split_seed)?;
    classify_sum_of_tns(&train, &test, &args.ranks, args.c, args.gamma).map_err(|e| {
        Error::InvalidArgument(format!("realization {realization}: {e}"))
    })
}

pub fn train_eval(args: &TrainEvalArgs) -> Result<u8> {
    check_fraction(args.fraction)?;
    if args.eval.realizations < 1 {
        return Err(Error::InvalidArgument("need at least one realization".into()));
    }
    let out = &args.eval.out.out;
    echo_config(out, "train-eval", args)?;
    let features_dir = out.join("features");
    std::fs::create_dir_all(&features_dir)?;
    let data = load_dataset(&args.eval)?;
    let reports: Vec<RealizationReport> = (0..args.eval.realizations)
        .into_par_iter()
        .map(|i| -> Result<RealizationReport> {
            let split_seed = derive_seed(args.eval.seed, REALIZATION_TAG, i as u64);
            let outcome = run_realization(&data, &args.eval, args.fraction, i, split_seed)?;
            write_features_csv(
                &features_dir.join(format!("real_{i:03}_train.csv")),
                &outcome.train_features,
            )?;
            write_features_csv(
                &features_dir.join(format!("real_{i:03}_test.csv")),
                &outcome.test_features,
            )?;
            let report = RealizationReport {
                realization: i,
                split_seed,
                accuracy: outcome.confusion.accuracy(),
                gamma: outcome.gamma,
                skipped: outcome.skipped,
                confusion: outcome.confusion,
            };
            write_json(&out.join(format!("real_{i:03}.json")), &report)?;
            Ok(report)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut reports = reports;
    reports.sort_by_key(|r| r.realization);
    let mean = reports.iter().map(|r| r.accuracy).sum::<f64>() / reports.len() as f64;
    for r in &reports {
        if !r.skipped.is_empty() {
            println!(
                "realization {}: skipped degenerate samples {:?}",
                r.realization, r.skipped
            );
        }
        println!("realization {}: accuracy {:.4}", r.realization, r.accuracy);
    }
    println!("mean accuracy {mean:.4} over {} realizations", reports.len());
    std::fs::write(&out.join("confusion.csv"), mean_confusion_csv(&reports)?)?;
    let summary = AccuracySummary {
        realizations: reports.len(),
        mean_accuracy: mean,
        per_realization: reports,
    };
    write_json(&out.join("accuracy.json"), &summary)?;
    println!("wrote {}", out.join("accuracy.json").display());
    Ok(0)
}

// ---------------------------------------------------------------- compare

#[derive(Serialize)]
struct CompareCell {
    fraction_idx: usize,
    fraction: f64,
    realization: usize,
    split_seed: u64,
    acc_sum_of_tns: f64,
    acc_raw_svm: f64,
    acc_tkd_concat: f64,
}

pub fn compare(args: &CompareArgs) -> Result<u8> {
    if args.fractions.is_empty() {
        return Err(Error::InvalidArgument("need at least one fraction".into()));
    }
    for &f in &args.fractions {
        check_fraction(f)?;
    }
    if args.eval.realizations < 1 {
        return Err(Error::InvalidArgument("need at least one realization".into()));
    }
    let out = &args.eval.out.out;
    echo_config(out, "compare", args)?;
    let data = load_dataset(&args.eval)?;
    let reals = args.eval.realizations;
    let jobs: Vec<(usize, usize)> = (0..args.fractions.len())
        .flat_map(|k| (0..reals).map(move |i| (k, i)))
        .collect();
    let mut cells: Vec<CompareCell> = jobs
        .into_par_iter()
        .map(|(k, i)| -> Result<CompareCell> {
            let fraction = args.fractions[k];
            let split_seed =
                derive_seed(args.eval.seed, REALIZATION_TAG, (k * reals + i) as u64);
            let (train, test) = split_samples(&data, fraction, split_seed)?;
            let tag = |e: Error| {
                Error::InvalidArgument(format!("fraction {fraction} realization {i}: {e}"))
            };
            let sum = classify_sum_of_tns(&train, &test, &args.eval.ranks, args.eval.c, args.eval.gamma)
                .map_err(tag)?;
            let raw =
                baseline_raw_svm(&train, &test, args.eval.c, args.eval.gamma, false).map_err(tag)?;
            let tkd =
                baseline_tkd_concat(&train, &test, &args.eval.ranks, args.eval.c, args.eval.gamma)
                    .map_err(tag)?;
            let cell = CompareCell {
                fraction_idx: k,
                fraction,
                realization: i,
                split_seed,
                acc_sum_of_tns: sum.confusion.accuracy(),
                acc_raw_svm: raw.confusion.accuracy(),
                acc_tkd_concat: tkd.confusion.accuracy(),
            };
            write_json(&out.join(format!("compare_f{k:02}_r{i:03}.json")), &cell)?;
            Ok(cell)
        })
        .collect::<Result<Vec<_>>>()?;
    cells.sort_by_key(|c| (c.fraction_idx, c.realization));
    let mut csv = String::from("fraction,acc_sum_of_tns,acc_raw_svm,acc_tkd_concat,diff_vs_raw\n");
    for (k, &fraction) in args.fractions.iter().enumerate() {
        let rows: Vec<&CompareCell> = cells.iter().filter(|c| c.fraction_idx == k).collect();
        let n = rows.len() as f64;
        let sum: f64 = rows.iter().map(|c| c.acc_sum_of_tns).sum::<f64>() / n;
        let raw: f64 = rows.iter().map(|c| c.acc_raw_svm).sum::<f64>() / n;
        let tkd: f64 = rows.iter().map(|c| c.acc_tkd_concat).sum::<f64>() / n;
        let diff = sum - raw;
        csv.push_str(&format!("{fraction},{sum},{raw},{tkd},{diff}\n"));
        println!(
            "fraction {fraction}: sum-of-tns {sum:.4}, raw {raw:.4}, stacked {tkd:.4}, diff vs raw {diff:+.4}"
        );
    }
    std::fs::write(out.join("compare.csv"), csv)?;
    println!("wrote {}", out.join("compare.csv").display());
    Ok(0)
}

// --------------------------------------------------------------- synth-gen

pub fn synth_gen(args: &SynthGenArgs) -> Result<u8> {
    let out = &args.out.out;
    echo_config(out, "synth-gen", args)?;
    let cfg = synth_config(&args.synth, args.seed);
    let data = synth_dataset(&cfg)?;
    let manifest = write_tensor_dataset(out, &data)?;
    println!(
        "wrote {} samples across {} classes to {}",
        manifest.len(),
        manifest.classes().len(),
        out.display()
    );
    Ok(0)
}

// --------------------------------------------------------------- decompose

#[derive(Serialize)]
struct DecomposeReport {
    input: PathBuf,
    shape: Vec<usize>,
    ranks: Vec<usize>,
    core_norm: f64,
    reconstruction_error: f64,
    record: PathBuf,
}

pub fn decompose(args: &DecomposeArgs) -> Result<u8> {
    let out = &args.out.out;
    echo_config(out, "decompose", args)?;
    let mut tensor = load_tensor_file(&args.input)?;
    if let Some(d) = args.downsample {
        tensor = tensum::data::downsample(&tensor, d, d)?;
    }
    let network = TuckerNetwork::hosvd(&tensor, &args.ranks)?;
    let stem = args
        .input
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("input");
    let record_path = out.join(format!("{stem}.tkr"));
    std::fs::write(&record_path, network.to_record())?;
    let diff = network
        .reconstruct()
        .add(&tensor.scale(-1.0))?
        .frobenius_norm();
    let report = DecomposeReport {
        input: args.input.clone(),
        shape: tensor.shape().to_vec(),
        ranks: args.ranks.clone(),
        core_norm: network.core().frobenius_norm(),
        reconstruction_error: diff / (1.0 + tensor.frobenius_norm()),
        record: record_path,
    };
    write_json(&out.join("decompose.json"), &report)?;
    println!(
        "decomposed {} (shape {:?}) at ranks {:?}; relative error {:.3e}; wrote {}",
        report.input.display(),
        report.shape,
        report.ranks,
        report.reconstruction_error,
        report.record.display()
    );
    Ok(0)
}
