//! Command-line frontend: `features`, `train`, `classify`, `eval`.
//!
//! Exit codes: 0 on success, 2 for usage errors (bad flags, invalid
//! configuration), 1 for runtime failures. Machine-readable output goes to
//! stdout or files; logs go to stderr.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::dataio::{
    extract_spatial_spectral, load_cube, load_dataset, load_labels, load_matrix_csv, load_model, parse_counts,
    save_labels, save_matrix_csv, save_model, save_pca, split_indices,
};
use crate::ddl::Architecture;
use crate::error::Error;
use crate::inference::{encode_batch, format_predictions, predict_batch, Rule};
use crate::joint::{joint_train, TrainConfig};
use crate::metrics::{mcnemar_z, report, ConfusionMatrix};
use crate::model::{train_greedy, Trainer};
use crate::numerics::{Activation, ActivationKind, Rng};

#[derive(Debug, Parser)]
#[command(name = "rsddl", version, about = "Row-sparse discriminative deep dictionary learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract window features from a hyperspectral cube and reduce them by PCA.
    Features(FeaturesArgs),
    /// Train a model on CSV features.
    Train(Box<TrainArgs>),
    /// Encode samples and predict their classes.
    Classify(ClassifyArgs),
    /// Accuracy report for a prediction file, optionally against a second one.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
struct FeaturesArgs {
    /// Cube file (RSDDL-HSI format).
    #[arg(long)]
    cube: PathBuf,
    /// Ground-truth raster (RSDDL-GT format).
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value_t = 4)]
    window: usize,
    /// PCA dimension, clipped to the raw feature length.
    #[arg(long, default_value_t = 200)]
    dims: usize,
    /// Training samples per class (`N` or `class:N,...`). When given, the PCA
    /// is fitted on the training pixels and train/test files are written.
    #[arg(long)]
    train: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output prefix.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Feature CSV, one sample per row.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// Flat `key=value` file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Atoms per layer, e.g. 100,50,25.
    #[arg(long)]
    arch: Option<String>,
    /// tanh or identity.
    #[arg(long)]
    activation: Option<String>,
    /// joint or greedy.
    #[arg(long)]
    mode: Option<String>,
    /// Nonzeros per coefficient column.
    #[arg(long = "lambda-s")]
    lambda_s: Option<usize>,
    /// Rows shared by each class.
    #[arg(long = "row-s")]
    row_s: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    eta1: Option<f64>,
    #[arg(long)]
    eta2: Option<f64>,
    /// none, out or connect.
    #[arg(long)]
    drop: Option<String>,
    #[arg(long = "drop-rate")]
    drop_rate: Option<f64>,
    /// Outer iterations.
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long = "inner-iters")]
    inner_iters: Option<usize>,
    #[arg(long = "test-iters")]
    test_iters: Option<usize>,
    /// printed or dual-ascent.
    #[arg(long)]
    bregman: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Model output path.
    #[arg(long)]
    out: PathBuf,
    /// Run log path, default `<out>.log`.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    #[arg(long)]
    model: PathBuf,
    /// Feature CSV, one sample per row.
    #[arg(long)]
    data: PathBuf,
    /// l0 or l1.
    #[arg(long, default_value = "l0")]
    rule: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Prediction file (from `classify`) or one label per line.
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Second prediction file for the McNemar test.
    #[arg(long = "pred-b")]
    pred_b: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

/// Parse `args` (program name first), run the command and return the exit
/// code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.command {
        Command::Features(a) => cmd_features(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Classify(a) => cmd_classify(&a),
        Command::Eval(a) => cmd_eval(&a),
    };
    match result {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e).into())
}

fn cmd_features(a: &FeaturesArgs) -> CliResult<()> {
    if a.window == 0 || a.dims == 0 {
        return Err(usage("--window and --dims must be positive"));
    }
    let cube = load_cube(&a.cube, &a.labels)?;
    let out = |s: &str| with_suffix(&a.out, s);
    match &a.train {
        None => {
            log::warn!("no --train counts: PCA is fitted on every labeled pixel");
            let f = extract_spatial_spectral(&cube, a.window, a.dims, None)?;
            save_matrix_csv(out(".csv"), &f.dataset.x)?;
            save_labels(out(".labels"), &f.dataset.labels)?;
            save_labels(out(".pixels"), &f.pixels.iter().map(|p| p + 1).collect::<Vec<_>>())?;
            save_pca(&f.pca, a.window, out(".pca"))?;
            log::info!("{} samples, {} features", f.dataset.len(), f.dataset.dim());
        }
        Some(counts_arg) => {
            let pixels = cube.labeled_pixels();
            let labels: Vec<usize> = pixels.iter().map(|&p| cube.ground_truth[p]).collect();
            let index = crate::dataio::Dataset::new(crate::numerics::Matrix::zeros(0, labels.len()), labels)?;
            let counts = parse_counts(counts_arg, index.class_index.keys().copied()).map_err(|e| usage(e.to_string()))?;
            let (train, test) = split_indices(&index, &counts, &mut Rng::new(a.seed))?;
            let mut mask = vec![false; cube.pixels()];
            for &j in &train {
                mask[pixels[j]] = true;
            }
            let f = extract_spatial_spectral(&cube, a.window, a.dims, Some(&mask))?;
            for (name, cols) in [("train", &train), ("test", &test)] {
                let part = f.dataset.subset(cols)?;
                save_matrix_csv(out(&format!(".{name}.csv")), &part.x)?;
                save_labels(out(&format!(".{name}.labels")), &part.labels)?;
                let px: Vec<usize> = cols.iter().map(|&j| f.pixels[j] + 1).collect();
                save_labels(out(&format!(".{name}.pixels")), &px)?;
            }
            save_pca(&f.pca, a.window, out(".pca"))?;
            log::info!(
                "{} training and {} test samples, {} features",
                train.len(),
                test.len(),
                f.dataset.dim()
            );
        }
    }
    Ok(())
}

fn read_config_file(path: &Path) -> CliResult<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let (k, v) = t
            .split_once('=')
            .ok_or_else(|| usage(format!("{}:{}: expected key=value", path.display(), i + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// Effective settings: defaults, then the config file, then flags.
fn resolve_train(a: &TrainArgs) -> CliResult<(Architecture, TrainConfig, Trainer)> {
    let mut file = match &a.config {
        Some(p) => read_config_file(p)?,
        None => BTreeMap::new(),
    };
    let pick = |flag: &Option<String>, file: &mut BTreeMap<String, String>, key: &str, default: &str| {
        let from_file = file.remove(key);
        flag.clone().or(from_file).unwrap_or_else(|| default.to_string())
    };
    let atoms = pick(&a.arch, &mut file, "architecture", "100,50,25");
    let act = pick(&a.activation, &mut file, "activation", "tanh");
    let mode = pick(&a.mode, &mut file, "mode", "joint");

    let atoms = Architecture::parse_atoms(&atoms).map_err(|e| usage(e.to_string()))?;
    let kind = ActivationKind::parse(&act).ok_or_else(|| usage(format!("unknown activation {act:?}")))?;
    let activation = Activation {
        kind,
        ..Activation::default()
    };
    let arch = Architecture::new(atoms, activation).map_err(|e| usage(e.to_string()))?;
    let trainer = Trainer::parse(&mode).ok_or_else(|| usage(format!("unknown mode {mode:?}")))?;

    let mut cfg = TrainConfig::for_architecture(&arch);
    for (k, v) in &file {
        cfg.set(k, v).map_err(|e| usage(e.to_string()))?;
    }
    let flags: [(&str, Option<String>); 14] = [
        ("per_column_s", a.lambda_s.map(|v| v.to_string())),
        ("row_s", a.row_s.map(|v| v.to_string())),
        ("lambda", a.lambda.map(|v| v.to_string())),
        ("mu", a.mu.map(|v| v.to_string())),
        ("gamma", a.gamma.map(|v| v.to_string())),
        ("eta1", a.eta1.map(|v| v.to_string())),
        ("eta2", a.eta2.map(|v| v.to_string())),
        ("drop", a.drop.clone()),
        ("drop_rate", a.drop_rate.map(|v| v.to_string())),
        ("outer_iters", a.iters.map(|v| v.to_string())),
        ("inner_iters", a.inner_iters.map(|v| v.to_string())),
        ("test_iters", a.test_iters.map(|v| v.to_string())),
        ("bregman", a.bregman.clone()),
        ("seed", a.seed.map(|v| v.to_string())),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            cfg.set(k, &v).map_err(|e| usage(e.to_string()))?;
        }
    }
    cfg.validate(&arch).map_err(|e| usage(e.to_string()))?;
    Ok((arch, cfg, trainer))
}

fn cmd_train(a: &TrainArgs) -> CliResult<()> {
    let (arch, cfg, trainer) = resolve_train(a)?;
    let data = load_dataset(&a.data, &a.labels)?;
    log::info!(
        "training {} model {} on {} samples of dimension {}",
        trainer.name(),
        arch.atoms_string(),
        data.len(),
        data.dim()
    );
    let (model, log) = match trainer {
        Trainer::Joint => {
            let out = joint_train(&data, &arch, &cfg)?;
            (out.model, out.log)
        }
        Trainer::Greedy => train_greedy(&data, &arch, &cfg)?,
    };
    save_model(&model, &a.out)?;
    let log_path = a.log.clone().unwrap_or_else(|| with_suffix(&a.out, ".log"));
    write_text(&log_path, &log.to_text())?;
    log::info!("model written to {}, run log to {}", a.out.display(), log_path.display());
    Ok(())
}

fn cmd_classify(a: &ClassifyArgs) -> CliResult<()> {
    let rule = Rule::parse(&a.rule).ok_or_else(|| usage(format!("unknown rule {:?}; use l0 or l1", a.rule)))?;
    let model = load_model(&a.model)?;
    let x = load_matrix_csv(&a.data)?;
    if x.nrows() != model.input_dim() {
        return Err(Error::input(format!(
            "model expects {}-dimensional samples, {} has {}",
            model.input_dim(),
            a.data.display(),
            x.nrows()
        ))
        .into());
    }
    let features = encode_batch(&model, &x)?;
    let predictions = predict_batch(&model, &features, rule);
    write_text(&a.out, &format_predictions(&predictions))?;
    log::info!("{} predictions written to {}", predictions.len(), a.out.display());
    Ok(())
}

/// Labels from a `classify` output (second column) or a plain label list.
fn load_predictions(path: &Path) -> CliResult<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        let tok = match fields.len() {
            0 => continue,
            1 => fields[0],
            _ => fields[1],
        };
        match tok.parse::<usize>() {
            Ok(l) if l > 0 => out.push(l),
            _ => return Err(Error::parse(path, i + 1, format!("not a class id: {tok:?}")).into()),
        }
    }
    if out.is_empty() {
        return Err(Error::parse(path, 1, "no predictions").into());
    }
    Ok(out)
}

fn cmd_eval(a: &EvalArgs) -> CliResult<()> {
    let pred = load_predictions(&a.pred)?;
    let truth = load_labels(&a.truth)?;
    let cm = ConfusionMatrix::from_labels(&truth, &pred)?;
    let mc = match &a.pred_b {
        Some(p) => Some(mcnemar_z(&pred, &load_predictions(p)?, &truth)?),
        None => None,
    };
    print!("{}", report(&cm, mc.as_ref())?);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::joint::{BregmanRule, DropMode};

    fn train_args(extra: &[&str]) -> TrainArgs {
        let mut argv = vec!["rsddl", "train", "--data", "x", "--labels", "y", "--out", "m"];
        argv.extend_from_slice(extra);
        match Cli::try_parse_from(argv).unwrap().command {
            Command::Train(a) => *a,
            _ => unreachable!(),
        }
    }

    #[test]
    fn defaults_resolve() {
        let (arch, cfg, trainer) = resolve_train(&train_args(&[])).unwrap();
        assert_eq!(arch.atoms_per_layer, vec![100, 50, 25]);
        assert_eq!(trainer, Trainer::Joint);
        assert_eq!(cfg, TrainConfig::for_architecture(&arch));
        assert_eq!((cfg.drop_mode, cfg.budget.row_s), (DropMode::DropConnect, 5));
    }

    #[test]
    fn flags_override_file() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("c.cfg");
        fs::write(&p, "# run\nmu = 0.9\narchitecture=16,8,4\ngamma=0.3\nbregman=dual-ascent\n").unwrap();
        let ps = p.to_str().unwrap();
        let (arch, cfg, _) = resolve_train(&train_args(&["--config", ps, "--mu", "0.2"])).unwrap();
        assert_eq!(arch.atoms_per_layer, vec![16, 8, 4]);
        assert_eq!((cfg.mu, cfg.gamma), (0.2, 0.3));
        assert_eq!(cfg.bregman_rule, BregmanRule::DualAscent);
    }

    #[test]
    fn invalid_config_is_usage_error() {
        for bad in [
            &["--drop-rate", "1.5"][..],
            &["--drop", "sideways"],
            &["--mode", "fancy"],
            &["--arch", "16,x"],
            &["--row-s", "0"],
        ] {
            assert!(matches!(resolve_train(&train_args(bad)), Err(Failure::Usage(_))), "{bad:?}");
        }
    }

    #[test]
    fn exit_codes() {
        assert_eq!(run(["rsddl"]), 2);
        assert_eq!(run(["rsddl", "features", "--labels", "a", "--out", "b"]), 2);
        assert_eq!(run(["rsddl", "classify", "--model", "m", "--data", "d", "--rule", "l7", "--out", "o"]), 2);
        assert_eq!(run(["rsddl", "eval", "--pred", "/nonexistent/p", "--truth", "/nonexistent/t"]), 1);
        assert_eq!(run(["rsddl", "--help"]), 0);
    }

    #[test]
    fn prediction_files() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("p");
        fs::write(&p, "0\t2\tl0\t1\n1\t1\tl0\t0\n").unwrap();
        assert_eq!(load_predictions(&p).unwrap(), vec![2, 1]);
        fs::write(&p, "3\n1\n").unwrap();
        assert_eq!(load_predictions(&p).unwrap(), vec![3, 1]);
        fs::write(&p, "0\tzero\n").unwrap();
        assert!(load_predictions(&p).is_err());
    }
}
