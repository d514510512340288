//! Command-line interface.
//!
//! Subcommands cover the full workflow: `synth` (generate a labeled test
//! dataset), `validate` (schema and referential checks), `preprocess`
//! (feature frame + sidecar), `correlate` (feature/label correlations),
//! `train`, `evaluate`, and `sweep` (preprocess/train/evaluate across
//! several duration percentages).
//!
//! Exit codes: 0 success, 1 domain failure (bad data, failed run), 2 usage
//! error. Commands that need randomness take `--seed`, falling back to the
//! `VLE_FORECAST_SEED` environment variable. Every command that writes an
//! output directory appends to its `manifest.jsonl` before heavy work
//! starts.

use std::error::Error;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{apply_to_train_config, load_config_file};
use crate::eval::{auc_summary, metrics_report, one_vs_rest_roc, predict_classes, ConfusionMatrix};
use crate::ingest::{load_bundle, validate_bundle, RawBundle};
use crate::manifest::RunManifest;
use crate::nn::{build_network, Arch, ModelConfig, Network};
use crate::pipeline::{
    build_features, load_features, pearson_correlation, save_features, split_indices, CutoffMode,
    FeatureFrame, FeatureSet, PipelineConfig,
};
use crate::report::{emit_evaluation, emit_history_plot};
use crate::synth::{generate_bundle, SynthConfig};
use crate::tensor::Tensor;
use crate::train::{load_checkpoint, save_checkpoint, train, TrainConfig};

type CmdResult = Result<(), Box<dyn Error>>;

#[derive(Parser)]
#[command(
    name = "vle-forecast",
    version,
    about = "Early prediction of student outcomes from virtual learning environment logs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a seven-table CSV dataset for schema and reference problems.
    Validate(ValidateArgs),
    /// Generate a synthetic dataset with a known labeling rule.
    Synth(SynthArgs),
    /// Build the scaled 15-column feature frame from a dataset.
    Preprocess(PreprocessArgs),
    /// Rank features by correlation with the outcome label.
    Correlate(CorrelateArgs),
    /// Train a classifier on a preprocessed feature frame.
    Train(TrainArgs),
    /// Score a checkpoint on a feature frame split.
    Evaluate(EvaluateArgs),
    /// Preprocess, train, and evaluate across duration percentages.
    Sweep(SweepArgs),
}

// ============================================================================
// Argument groups
// ============================================================================

#[derive(Args)]
struct ValidateArgs {
    /// Directory holding the seven CSV tables.
    #[arg(long)]
    data_dir: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Number of students to generate.
    #[arg(long, default_value_t = 2000)]
    students: usize,
    /// Number of course modules.
    #[arg(long, default_value_t = 2)]
    modules: usize,
    /// Course length in days.
    #[arg(long, default_value_t = 270)]
    course_length: i32,
    /// Separation of the class-conditional activity patterns; 0 removes the
    /// signal entirely.
    #[arg(long, default_value_t = 1.0)]
    signal: f64,
    /// Random seed for this run.
    #[arg(long, env = "VLE_FORECAST_SEED")]
    seed: u64,
    /// Output directory for the CSVs and the generation ledger.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct PreprocessShared {
    /// Keep only activity up to this percentage of the observed date range.
    #[arg(long, default_value_t = 100.0)]
    duration_pct: f64,
    /// Feature subset: demo, demo+click, demo+click+assess, or all.
    #[arg(long, default_value = "all")]
    features: FeatureSet,
    /// Collapse to one row per student (clicks summed, latest date kept).
    #[arg(long)]
    per_student: bool,
    /// Clamp the registration span to the cutoff so it carries no
    /// post-cutoff information.
    #[arg(long)]
    no_leak: bool,
    /// Cut by row count instead of by date range.
    #[arg(long)]
    row_index_cutoff: bool,
    /// Fraction of rows assigned to the training split.
    #[arg(long, default_value_t = 0.70)]
    train_frac: f64,
    /// Keep only this fraction of students (seeded) before processing.
    #[arg(long)]
    student_sample_frac: Option<f64>,
}

impl PreprocessShared {
    fn pipeline_config(&self, pct: f64, seed: u64) -> PipelineConfig {
        PipelineConfig {
            duration_pct: pct,
            feature_set: self.features,
            cutoff_mode: if self.row_index_cutoff {
                CutoffMode::RowIndex
            } else {
                CutoffMode::DateRange
            },
            per_student: self.per_student,
            no_leak: self.no_leak,
            train_frac: self.train_frac,
            seed,
            fill_unregistration: 270,
            student_sample_frac: self.student_sample_frac,
        }
    }
}

#[derive(Args)]
struct PreprocessArgs {
    /// Directory holding the seven CSV tables.
    #[arg(long)]
    data_dir: PathBuf,
    #[command(flatten)]
    shared: PreprocessShared,
    /// Random seed for this run.
    #[arg(long, env = "VLE_FORECAST_SEED")]
    seed: u64,
    /// Output directory for features.csv and sidecar.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CorrelateArgs {
    /// A features.csv produced by `preprocess` (sidecar.json beside it).
    #[arg(long)]
    features_file: PathBuf,
    /// Output directory for correlations.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct TrainHyperFlags {
    /// Optional key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Mini-batch size.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Fraction of the training split held out for per-epoch validation.
    #[arg(long)]
    validation_split: Option<f64>,
}

impl TrainHyperFlags {
    /// Defaults, then the file, then explicit flags.
    fn resolve(&self, seed: u64) -> Result<TrainConfig, Box<dyn Error>> {
        let mut cfg = TrainConfig {
            shuffle_seed: seed,
            ..TrainConfig::default()
        };
        if let Some(path) = &self.config {
            let values = load_config_file(path)?;
            apply_to_train_config(&values, &mut cfg)?;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.validation_split {
            cfg.validation_split = v;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    /// A features.csv produced by `preprocess` (sidecar.json beside it).
    #[arg(long)]
    features_file: PathBuf,
    /// Architecture: paper_cnn or mlp_baseline.
    #[arg(long, default_value = "paper_cnn")]
    arch: Arch,
    #[command(flatten)]
    hyper: TrainHyperFlags,
    /// Random seed for this run.
    #[arg(long, env = "VLE_FORECAST_SEED")]
    seed: u64,
    /// Output directory for checkpoint.json and the training history.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SplitChoice {
    Test,
    Train,
    All,
}

impl SplitChoice {
    fn as_str(self) -> &'static str {
        match self {
            SplitChoice::Test => "test",
            SplitChoice::Train => "train",
            SplitChoice::All => "all",
        }
    }
}

#[derive(Args)]
struct EvaluateArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// The features.csv the checkpoint should be scored on.
    #[arg(long)]
    features_file: PathBuf,
    /// Which rows to score.
    #[arg(long, value_enum, default_value_t = SplitChoice::Test)]
    split: SplitChoice,
    /// Output directory for the report files.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Directory holding the seven CSV tables.
    #[arg(long)]
    data_dir: PathBuf,
    /// Duration percentages to evaluate.
    #[arg(long, value_delimiter = ',', default_values_t = vec![5.0, 10.0, 20.0, 40.0, 60.0, 80.0, 100.0])]
    pcts: Vec<f64>,
    /// Architecture: paper_cnn or mlp_baseline.
    #[arg(long, default_value = "paper_cnn")]
    arch: Arch,
    #[command(flatten)]
    shared: PreprocessShared,
    #[command(flatten)]
    hyper: TrainHyperFlags,
    /// Random seed for this run.
    #[arg(long, env = "VLE_FORECAST_SEED")]
    seed: u64,
    /// Output directory; one subdirectory per percentage.
    #[arg(long)]
    out: PathBuf,
}

// ============================================================================
// Entry point
// ============================================================================

/// Parses arguments and runs the selected command; returns the process exit
/// code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        // Usage errors exit 2; --help and --version exit 0.
        Err(err) => err.exit(),
    };
    let result = match cli.command {
        Command::Validate(args) => cmd_validate(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Preprocess(args) => cmd_preprocess(args),
        Command::Correlate(args) => cmd_correlate(args),
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Sweep(args) => cmd_sweep(args),
    };
    match result {
        Ok(()) => 0,
        Err(err) => {
            // Display strings already include their sources.
            eprintln!("error: {err}");
            1
        }
    }
}

// ============================================================================
// Commands
// ============================================================================

fn cmd_validate(args: ValidateArgs) -> CmdResult {
    let bundle = load_bundle(&args.data_dir)?;
    let report = validate_bundle(&bundle);
    println!("{:<22} {:>9} {:>8} {:>9}", "table", "rows", "columns", "missing");
    for t in &report.tables {
        println!("{:<22} {:>9} {:>8} {:>9}", t.name, t.rows, t.columns, t.missing_cells);
        for (column, count) in &t.missing_by_column {
            println!("    {column}: {count} missing");
        }
    }
    if report.violations.is_empty() {
        println!("no referential violations");
        Ok(())
    } else {
        for v in &report.violations {
            println!("violation: {v}");
        }
        Err(format!("{} referential violations", report.violations.len()).into())
    }
}

fn cmd_synth(args: SynthArgs) -> CmdResult {
    let cfg = SynthConfig {
        n_students: args.students,
        n_modules: args.modules,
        course_length_days: args.course_length,
        signal_strength: args.signal,
        seed: args.seed,
        ..SynthConfig::default()
    };
    RunManifest::new("synth", args.seed)
        .with_output(&args.out)
        .with_config(&serde_json::json!({
            "students": cfg.n_students,
            "modules": cfg.n_modules,
            "course_length_days": cfg.course_length_days,
            "signal_strength": cfg.signal_strength,
        }))?
        .append(&args.out)?;
    let ledger = generate_bundle(&cfg, &args.out)?;
    println!(
        "wrote {} students across {} modules to {}",
        ledger.n_students,
        cfg.n_modules,
        args.out.display()
    );
    let mut counts: Vec<String> = Vec::new();
    for (c, n) in ledger.class_counts.iter().enumerate() {
        counts.push(format!("{} {}", crate::eval::class_name(c as u8), n));
    }
    println!("class counts: {}", counts.join(", "));
    Ok(())
}

fn load_bundle_logged(data_dir: &Path) -> Result<RawBundle, Box<dyn Error>> {
    let bundle = load_bundle(data_dir)?;
    let report = validate_bundle(&bundle);
    if !report.violations.is_empty() {
        log::warn!(
            "{} referential violations in {}; affected rows are dropped at merge",
            report.violations.len(),
            data_dir.display()
        );
    }
    Ok(bundle)
}

fn cmd_preprocess(args: PreprocessArgs) -> CmdResult {
    let cfg = args.shared.pipeline_config(args.shared.duration_pct, args.seed);
    RunManifest::new("preprocess", args.seed)
        .with_input(&args.data_dir)
        .with_output(&args.out)
        .with_config(&cfg)?
        .append(&args.out)?;
    let bundle = load_bundle_logged(&args.data_dir)?;
    let frame = build_features(&bundle, &cfg)?;
    save_features(&frame, &args.out)?;
    let counts = frame.class_counts();
    println!(
        "wrote {} rows ({} features) to {}",
        frame.n_rows(),
        crate::pipeline::N_FEATURES,
        args.out.display()
    );
    println!(
        "class counts: Distinction {}, Fail {}, Pass {}, Withdrawn {}",
        counts[0], counts[1], counts[2], counts[3]
    );
    if let Some(cutoff) = frame.sidecar.cutoff_date {
        println!("cutoff date: {cutoff:.2}");
    }
    Ok(())
}

fn cmd_correlate(args: CorrelateArgs) -> CmdResult {
    let frame = load_features(&args.features_file)?;
    RunManifest::new("correlate", frame.sidecar.seed)
        .with_input(&args.features_file)
        .with_output(&args.out)
        .append(&args.out)?;
    let table = pearson_correlation(&frame)?;
    std::fs::create_dir_all(&args.out)?;
    let path = args.out.join("correlations.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["feature", "r", "zero_variance"])?;
    for e in &table.entries {
        w.write_record([e.feature.clone(), format!("{:.6}", e.r), e.zero_variance.to_string()])?;
    }
    w.flush()?;
    println!("{:<22} {:>9}", "feature", "r");
    for e in &table.entries {
        let marker = if e.zero_variance { "  (zero variance)" } else { "" };
        println!("{:<22} {:>9.4}{marker}", e.feature, e.r);
    }
    Ok(())
}

fn training_rows(frame: &FeatureFrame) -> Result<Vec<usize>, Box<dyn Error>> {
    let (train_idx, _) = split_indices(&frame.labels, frame.sidecar.train_frac, frame.sidecar.seed)?;
    Ok(train_idx)
}

fn cmd_train(args: TrainArgs) -> CmdResult {
    let train_cfg = args.hyper.resolve(args.seed)?;
    RunManifest::new("train", args.seed)
        .with_input(&args.features_file)
        .with_output(&args.out)
        .with_config(&serde_json::json!({
            "arch": args.arch.as_str(),
            "epochs": train_cfg.epochs,
            "batch_size": train_cfg.batch_size,
            "validation_split": train_cfg.validation_split,
            "learning_rate": train_cfg.learning_rate,
            "beta1": train_cfg.beta1,
            "beta2": train_cfg.beta2,
            "eps": train_cfg.eps,
            "class_weights": train_cfg.class_weights,
        }))?
        .append(&args.out)?;

    let frame = load_features(&args.features_file)?;
    let train_idx = training_rows(&frame)?;
    let train_frame = frame.subset(&train_idx);
    println!(
        "training {} on {} rows ({} held out by the split)",
        args.arch.as_str(),
        train_frame.n_rows(),
        frame.n_rows() - train_frame.n_rows()
    );

    let model_cfg = ModelConfig::new(args.arch, args.seed);
    let mut net = build_network(&model_cfg)?;
    let report = train(&mut net, &train_frame, &train_cfg)?;

    std::fs::create_dir_all(&args.out)?;
    save_checkpoint(&net, &frame.sidecar, &args.out.join("checkpoint.json"))?;
    report.history.write_csv(&args.out.join("history.csv"))?;
    emit_history_plot(&args.out, &report.history)?;
    if let Some(last) = report.history.epochs.last() {
        println!(
            "final epoch: train loss {:.4} acc {:.4}, val loss {:.4} acc {:.4}",
            last.train_loss, last.train_accuracy, last.val_loss, last.val_accuracy
        );
    }
    println!("checkpoint written to {}", args.out.join("checkpoint.json").display());
    Ok(())
}

/// Inference over row indices in bounded-size chunks.
fn infer_probs(net: &Network, frame: &FeatureFrame, indices: &[usize]) -> Result<Tensor, Box<dyn Error>> {
    const CHUNK: usize = 2048;
    let k = crate::ingest::N_CLASSES;
    let mut data = Vec::with_capacity(indices.len() * k);
    for chunk in indices.chunks(CHUNK) {
        let x = crate::train::batch_tensor(frame, chunk);
        let probs = net.infer(&x)?;
        data.extend_from_slice(probs.data());
    }
    Ok(Tensor::from_vec(&[indices.len(), k], data)?)
}

fn cmd_evaluate(args: EvaluateArgs) -> CmdResult {
    let (net, checkpoint_sidecar) = load_checkpoint(&args.checkpoint)?;
    let frame = load_features(&args.features_file)?;
    if checkpoint_sidecar != frame.sidecar {
        return Err(format!(
            "the checkpoint was trained on a different feature transform than {}; \
             re-run preprocess with the original settings or retrain",
            args.features_file.display()
        )
        .into());
    }
    RunManifest::new("evaluate", frame.sidecar.seed)
        .with_input(&args.checkpoint)
        .with_input(&args.features_file)
        .with_output(&args.out)
        .with_config(&serde_json::json!({ "split": args.split.as_str() }))?
        .append(&args.out)?;

    let (train_idx, test_idx) =
        split_indices(&frame.labels, frame.sidecar.train_frac, frame.sidecar.seed)?;
    let indices: Vec<usize> = match args.split {
        SplitChoice::Test => test_idx,
        SplitChoice::Train => train_idx,
        SplitChoice::All => (0..frame.n_rows()).collect(),
    };
    let labels: Vec<u8> = indices.iter().map(|&i| frame.labels[i]).collect();
    let probs = infer_probs(&net, &frame, &indices)?;
    let pred = predict_classes(&probs)?;
    let metrics = metrics_report(&ConfusionMatrix::from_labels(&labels, &pred)?);
    let aucs = auc_summary(&probs, &labels)?;
    let curves = one_vs_rest_roc(&probs, &labels)?;
    emit_evaluation(&args.out, &metrics, &aucs, &curves)?;

    println!("split: {} ({} rows)", args.split.as_str(), indices.len());
    println!("accuracy: {:.4}", metrics.accuracy);
    for c in 0..crate::ingest::N_CLASSES {
        let m = &metrics.per_class[c];
        println!(
            "{:<12} precision {:.4} recall {:.4} f1 {:.4} (support {})",
            crate::eval::class_name(c as u8),
            m.precision,
            m.recall,
            m.f1,
            m.support
        );
    }
    println!(
        "macro f1: {:.4}  weighted f1: {:.4}  micro auc: {:.4}  macro auc: {:.4}",
        metrics.macro_f1, metrics.weighted_f1, aucs.micro, aucs.macro_avg
    );
    println!("report written to {}", args.out.display());
    Ok(())
}

fn pct_dir_name(pct: f64) -> String {
    if pct.fract() == 0.0 {
        format!("pct_{:03}", pct as u32)
    } else {
        format!("pct_{}", pct.to_string().replace('.', "_"))
    }
}

fn cmd_sweep(args: SweepArgs) -> CmdResult {
    let train_cfg = args.hyper.resolve(args.seed)?;
    RunManifest::new("sweep", args.seed)
        .with_input(&args.data_dir)
        .with_output(&args.out)
        .with_config(&serde_json::json!({
            "pcts": args.pcts,
            "arch": args.arch.as_str(),
            "epochs": train_cfg.epochs,
        }))?
        .append(&args.out)?;
    let bundle = load_bundle_logged(&args.data_dir)?;
    std::fs::create_dir_all(&args.out)?;

    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut failures = 0usize;
    for &pct in &args.pcts {
        let sub = args.out.join(pct_dir_name(pct));
        match sweep_one(&bundle, &args, &train_cfg, pct, &sub) {
            Ok(row) => rows.push(row),
            Err(err) => {
                failures += 1;
                log::error!("{pct}% failed: {err}");
                let mut row = vec![format!("{pct}"), "failed".to_string()];
                row.extend(std::iter::repeat_n(String::new(), 11));
                rows.push(row);
            }
        }
    }

    let path = args.out.join("sweep_summary.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record([
        "duration_pct",
        "status",
        "n_train",
        "n_test",
        "accuracy",
        "macro_precision",
        "macro_recall",
        "macro_f1",
        "weighted_precision",
        "weighted_recall",
        "weighted_f1",
        "micro_auc",
        "macro_auc",
    ])?;
    for row in &rows {
        w.write_record(row)?;
    }
    w.flush()?;
    println!("sweep summary written to {}", path.display());
    if failures > 0 {
        Err(format!("{failures} of {} percentages failed", args.pcts.len()).into())
    } else {
        Ok(())
    }
}

/// One percentage of the sweep: preprocess into `dir`, train from scratch
/// with the shared seed, evaluate the held-out split, and return the summary
/// row.
fn sweep_one(
    bundle: &RawBundle,
    args: &SweepArgs,
    train_cfg: &TrainConfig,
    pct: f64,
    dir: &Path,
) -> Result<Vec<String>, Box<dyn Error>> {
    let cfg = args.shared.pipeline_config(pct, args.seed);
    let frame = build_features(bundle, &cfg)?;
    save_features(&frame, dir)?;

    let train_idx = training_rows(&frame)?;
    let train_frame = frame.subset(&train_idx);
    let mut net = build_network(&ModelConfig::new(args.arch, args.seed))?;
    let report = train(&mut net, &train_frame, train_cfg)?;
    save_checkpoint(&net, &frame.sidecar, &dir.join("checkpoint.json"))?;
    report.history.write_csv(&dir.join("history.csv"))?;
    emit_history_plot(dir, &report.history)?;

    let (_, test_idx) = split_indices(&frame.labels, frame.sidecar.train_frac, frame.sidecar.seed)?;
    let labels: Vec<u8> = test_idx.iter().map(|&i| frame.labels[i]).collect();
    let probs = infer_probs(&net, &frame, &test_idx)?;
    let pred = predict_classes(&probs)?;
    let metrics = metrics_report(&ConfusionMatrix::from_labels(&labels, &pred)?);
    let aucs = auc_summary(&probs, &labels)?;
    let curves = one_vs_rest_roc(&probs, &labels)?;
    emit_evaluation(dir, &metrics, &aucs, &curves)?;

    println!(
        "{:>5.1}%: accuracy {:.4}, macro f1 {:.4} ({} train rows, {} test rows)",
        pct,
        metrics.accuracy,
        metrics.macro_f1,
        train_idx.len(),
        test_idx.len()
    );
    let six = |v: f64| format!("{v:.6}");
    Ok(vec![
        format!("{pct}"),
        "ok".to_string(),
        train_idx.len().to_string(),
        test_idx.len().to_string(),
        six(metrics.accuracy),
        six(metrics.macro_precision),
        six(metrics.macro_recall),
        six(metrics.macro_f1),
        six(metrics.weighted_precision),
        six(metrics.weighted_recall),
        six(metrics.weighted_f1),
        six(aucs.micro),
        six(aucs.macro_avg),
    ])
}
