//! The `progmtl` command-line front end.
//!
//! Each subcommand reads files, runs one pipeline stage and writes its
//! reports plus a `manifest.json` into `--out`. Configuration comes from an
//! optional JSON file; flags given on the command line win over it.

pub mod manifest;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

pub use manifest::{sha256_file, FileDigest, RunManifest, Timings, MANIFEST_FILE};

use crate::dataio::{
    assemble_longitudinal, clean_cohort, parse_cohort, ColumnSchema, Cohort, TargetSpec, VisitCode, VisitPair,
};
use crate::error::{Error, Result};
use crate::eval::{compare_measures, write_plot_csv, write_tables_csv, ExperimentConfig};
use crate::features::{build_features, compute_trends, standardize, ColumnMeta, FeatureMode};
use crate::solvers::{fit_model, Penalties, SolverConfig, SolverKind};
use crate::stability::{default_grid, run_stability_named, StabilityConfig};
use crate::synth::{generate_cohort, SynthConfig};
use crate::tables::LabelledMatrix;

#[derive(Debug, Parser)]
#[command(name = "progmtl", version, about = "Longitudinal progression modelling with structured multi-task regression")]
pub struct Cli {
    /// Seed for every randomised step (overrides config files).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse, clean and pair a cohort CSV.
    Ingest(IngestArgs),
    /// Build the design matrix for one feature mode.
    Features(FeaturesArgs),
    /// Fit one model.
    Train(TrainArgs),
    /// Stability selection over a penalty grid.
    Stability(StabilityArgs),
    /// Repeated cross-validation, one table per feature mode.
    Evaluate(EvaluateArgs),
    /// Write a synthetic cohort with planted ground truth.
    Synth(SynthArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// JSON column schema; defaults to the layout `synth` writes.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long, default_value = "BL-M06")]
    pub span: VisitPair,
    /// Comma-separated `score@VISIT` tasks; defaults to the first score at
    /// every post-baseline visit present in the file.
    #[arg(long, value_delimiter = ',')]
    pub targets: Vec<TargetSpec>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// original, cosine, euclidean or mahalanobis.
    #[arg(long, default_value = "cosine")]
    pub measure: FeatureMode,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub solver: SolverKind,
    pub penalties: Penalties,
    pub standardize: bool,
    pub solver_config: SolverConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            solver: SolverKind::Cfsgl,
            penalties: Penalties::structured(1.0, 1.0, 1.0),
            standardize: true,
            solver_config: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Args)]
pub struct PenaltyFlags {
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub theta1: Option<f64>,
    #[arg(long)]
    pub theta2: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
}

impl PenaltyFlags {
    fn apply(&self, p: &mut Penalties) {
        let set = |dst: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut p.lambda, self.lambda);
        set(&mut p.theta1, self.theta1);
        set(&mut p.theta2, self.theta2);
        set(&mut p.delta, self.delta);
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub targets: PathBuf,
    #[arg(long)]
    pub solver: Option<SolverKind>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub penalties: PenaltyFlags,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Fit on the raw columns instead of z-scores.
    #[arg(long)]
    pub no_standardize: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub targets: PathBuf,
    /// JSON stability config (solver, grid, n_subsamples, threshold, …).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub solver: Option<SolverKind>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub subsamples: Option<usize>,
    /// Replace the grid with the default 21 × 10 grid for this data.
    #[arg(long)]
    pub default_grid: bool,
    /// JSON object mapping ROI names to readable definitions.
    #[arg(long)]
    pub descriptions: Option<PathBuf>,
    /// Do not keep per-cell results for resuming.
    #[arg(long)]
    pub no_checkpoint: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub experiment_config: Option<PathBuf>,
    /// Feature modes to compare; all four by default.
    #[arg(long, value_delimiter = ',')]
    pub measures: Vec<FeatureMode>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub solver: Option<SolverKind>,
    #[command(flatten)]
    pub penalties: PenaltyFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub subjects: Option<usize>,
    #[arg(long)]
    pub rois: Option<usize>,
    #[arg(long)]
    pub tasks: Option<usize>,
    #[arg(long)]
    pub support: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write into another directory instead of the recorded one.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fail unless every recorded output is reproduced byte for byte.
    #[arg(long)]
    pub check: bool,
}

/// What a command read and wrote.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub config: serde_json::Value,
    pub manifest: Option<PathBuf>,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n").map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Post-baseline visits carrying the first score anywhere in the cohort.
fn default_targets(cohort: &Cohort) -> Result<Vec<TargetSpec>> {
    if cohort.subjects.is_empty() {
        return Err(Error::DegenerateCohort);
    }
    let score = cohort
        .score_names
        .first()
        .ok_or_else(|| Error::Config("cohort has no score columns; pass --targets".into()))?;
    let targets: Vec<TargetSpec> = VisitCode::ALL[1..]
        .iter()
        .filter(|&&code| {
            cohort
                .subjects
                .iter()
                .any(|s| s.visit(code).is_some_and(|v| v.scores.contains_key(score)))
        })
        .map(|&code| TargetSpec::new(score.clone(), code))
        .collect();
    if targets.is_empty() {
        return Err(Error::Config(format!("no post-baseline `{score}` values; pass --targets")));
    }
    Ok(targets)
}

fn cmd_ingest(a: &IngestArgs) -> Result<Outcome> {
    let schema = match &a.schema {
        Some(p) => ColumnSchema::from_json_file(p)?,
        None => ColumnSchema::default(),
    };
    let cohort = parse_cohort(&a.input, &schema)?;
    let targets = if a.targets.is_empty() {
        default_targets(&cohort)?
    } else {
        a.targets.clone()
    };
    let (clean, report) = clean_cohort(&cohort, a.span, &targets)?;
    let dataset = assemble_longitudinal(&clean, a.span, &targets)?;

    ensure_dir(&a.out)?;
    let ds_path = a.out.join("dataset.json");
    let report_path = a.out.join("cleaning_report.json");
    let cohort_path = a.out.join("cleaned_cohort.csv");
    dataset.save_json(&ds_path)?;
    write_json(&report_path, &report)?;
    clean.write_csv(create(&cohort_path)?)?;
    println!(
        "{} subjects, {} ROIs, {} tasks; {} subjects and {} features removed, {} cells imputed",
        dataset.n_subjects(),
        dataset.roi_names.len(),
        dataset.n_tasks(),
        report.removed_subjects.len(),
        report.removed_features.len(),
        report.imputed_cells
    );
    println!("dataset: {}", ds_path.display());
    println!("cleaning report: {}", report_path.display());
    let mut inputs = vec![a.input.clone()];
    inputs.extend(a.schema.clone());
    Ok(Outcome {
        inputs,
        outputs: vec![ds_path, report_path, cohort_path],
        config: serde_json::json!({
            "schema": schema,
            "span": a.span,
            "targets": targets,
        }),
        manifest: None,
    })
}

#[derive(Debug, Serialize)]
struct ColumnsFile<'a> {
    measure: FeatureMode,
    roi_names: &'a [String],
    target_labels: Vec<String>,
    column_names: &'a [String],
    column_meta: &'a [ColumnMeta],
    zero_baselines: usize,
}

fn cmd_features(a: &FeaturesArgs) -> Result<Outcome> {
    let dataset = crate::dataio::PairedDataset::load_json(&a.dataset)?;
    let dm = build_features(&dataset, a.measure)?;
    let zero_baselines = match a.measure {
        FeatureMode::Original => 0,
        _ => compute_trends(&dataset)?.1,
    };
    ensure_dir(&a.out)?;
    let x_path = a.out.join("features.csv");
    let y_path = a.out.join("targets.csv");
    let meta_path = a.out.join("columns.json");
    LabelledMatrix::new("subject_id", dataset.subject_ids.clone(), dm.column_names.clone(), dm.values.clone())
        .write_csv(&x_path)?;
    LabelledMatrix::new(
        "subject_id",
        dataset.subject_ids.clone(),
        dataset.target_labels(),
        dataset.targets.clone(),
    )
    .write_csv(&y_path)?;
    write_json(
        &meta_path,
        &ColumnsFile {
            measure: a.measure,
            roi_names: &dataset.roi_names,
            target_labels: dataset.target_labels(),
            column_names: &dm.column_names,
            column_meta: &dm.column_meta,
            zero_baselines,
        },
    )?;
    println!("{} × {} {} design matrix: {}", dm.n_rows(), dm.n_cols(), a.measure, x_path.display());
    Ok(Outcome {
        inputs: vec![a.dataset.clone()],
        outputs: vec![x_path, y_path, meta_path],
        config: serde_json::json!({ "measure": a.measure }),
        manifest: None,
    })
}

fn load_xy(features: &Path, targets: &Path) -> Result<(LabelledMatrix, LabelledMatrix)> {
    let x = LabelledMatrix::read_csv(features)?;
    let y = LabelledMatrix::read_csv(targets)?;
    if x.row_labels != y.row_labels {
        return Err(Error::Dimension(format!(
            "{} and {} list different subjects",
            features.display(),
            targets.display()
        )));
    }
    Ok((x, y))
}

#[derive(Debug, Serialize)]
struct FitFile<'a> {
    solver: SolverKind,
    penalties: Penalties,
    standardized: bool,
    iterations: usize,
    converged: bool,
    objective: f64,
    objective_trace: &'a [f64],
    nonzero_rows: usize,
}

fn cmd_train(a: &TrainArgs) -> Result<Outcome> {
    let mut cfg: TrainConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = a.solver {
        cfg.solver = s;
    }
    a.penalties.apply(&mut cfg.penalties);
    if let Some(m) = a.max_iter {
        cfg.solver_config.max_iter = m;
    }
    if let Some(t) = a.tol {
        cfg.solver_config.tol = t;
    }
    if a.no_standardize {
        cfg.standardize = false;
    }
    let (x, y) = load_xy(&a.features, &a.targets)?;
    let fit = if cfg.standardize {
        let (xs, ys, _) = standardize(x.values.view(), y.values.view())?;
        fit_model(cfg.solver, xs.view(), ys.view(), &cfg.penalties, &cfg.solver_config)?
    } else {
        fit_model(cfg.solver, x.values.view(), y.values.view(), &cfg.penalties, &cfg.solver_config)?
    };
    ensure_dir(&a.out)?;
    let w_path = a.out.join("weights.csv");
    let fit_path = a.out.join("fit.json");
    LabelledMatrix::new("feature", x.column_names.clone(), y.column_names.clone(), fit.w.clone()).write_csv(&w_path)?;
    let nonzero_rows = crate::synth::row_support(&fit.w, 0.0).len();
    write_json(
        &fit_path,
        &FitFile {
            solver: cfg.solver,
            penalties: cfg.penalties,
            standardized: cfg.standardize,
            iterations: fit.iterations,
            converged: fit.converged,
            objective: fit.objective(),
            objective_trace: &fit.objective_trace,
            nonzero_rows,
        },
    )?;
    if !fit.converged {
        log::warn!("solver stopped at max_iter without meeting the tolerance");
    }
    println!(
        "{} fit: objective {:.6}, {} iterations, {} of {} features active",
        cfg.solver,
        fit.objective(),
        fit.iterations,
        nonzero_rows,
        x.column_names.len()
    );
    let mut inputs = vec![a.features.clone(), a.targets.clone()];
    inputs.extend(a.config.clone());
    Ok(Outcome {
        inputs,
        outputs: vec![w_path, fit_path],
        config: serde_json::to_value(&cfg)?,
        manifest: None,
    })
}

fn cmd_stability(a: &StabilityArgs, seed: Option<u64>) -> Result<Outcome> {
    let mut cfg: StabilityConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => StabilityConfig::default(),
    };
    if let Some(s) = a.solver {
        cfg.solver = s;
    }
    if let Some(t) = a.threshold {
        cfg.threshold = t;
    }
    if let Some(g) = a.subsamples {
        cfg.n_subsamples = g;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let (x, y) = load_xy(&a.features, &a.targets)?;
    let (xs, ys, _) = standardize(x.values.view(), y.values.view())?;
    if a.default_grid {
        cfg.grid = default_grid(xs.view(), ys.view(), cfg.solver);
    }
    cfg.validate()?;
    let descriptions: BTreeMap<String, String> = match &a.descriptions {
        Some(p) => read_json(p)?,
        None => BTreeMap::new(),
    };
    ensure_dir(&a.out)?;
    let checkpoint = (!a.no_checkpoint).then(|| a.out.join("checkpoint.jsonl"));
    log::info!(
        "stability sweep: {} grid points × {} subsamples = {} fits",
        cfg.grid.len(),
        cfg.n_subsamples,
        cfg.total_fits()
    );
    let report = run_stability_named(
        xs.view(),
        ys.view(),
        &cfg,
        Some(x.column_names.clone()),
        Some(y.column_names.clone()),
        checkpoint.as_deref(),
    )?;
    let p = &report.provenance;
    println!(
        "{} fits ({} executed, {} reused from checkpoint, {} failed)",
        p.total_fits,
        p.executed_fits,
        p.reused_fits,
        p.failed_cells.len()
    );
    for (label, set) in report.task_labels.iter().zip(&report.stable_set) {
        println!("{label}: {} stable features at threshold {}", set.len(), cfg.threshold);
    }
    let json_path = a.out.join("stability_report.json");
    let csv_path = a.out.join("stable_set.csv");
    write_json(&json_path, &report)?;
    report.write_stable_csv(create(&csv_path)?, &descriptions)?;
    let mut inputs = vec![a.features.clone(), a.targets.clone()];
    inputs.extend(a.config.clone());
    inputs.extend(a.descriptions.clone());
    Ok(Outcome {
        inputs,
        outputs: vec![json_path, csv_path],
        config: serde_json::to_value(&cfg)?,
        manifest: None,
    })
}

fn cmd_evaluate(a: &EvaluateArgs, seed: Option<u64>) -> Result<Outcome> {
    let mut cfg: ExperimentConfig = match &a.experiment_config {
        Some(p) => read_json(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(f) = a.folds {
        cfg.n_folds = f;
    }
    if let Some(r) = a.repeats {
        cfg.n_repeats = r;
    }
    if let Some(s) = a.solver {
        cfg.solver = s;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    a.penalties.apply(&mut cfg.penalties);
    let modes: Vec<FeatureMode> = if a.measures.is_empty() {
        FeatureMode::ALL.to_vec()
    } else {
        a.measures.clone()
    };
    let dataset = crate::dataio::PairedDataset::load_json(&a.dataset)?;
    let tables = compare_measures(&dataset, &cfg, &modes)?;
    let refs: Vec<&crate::eval::MetricTable> = tables.iter().collect();

    ensure_dir(&a.out)?;
    let mut outputs = Vec::new();
    let csv_path = a.out.join("metrics.csv");
    write_tables_csv(create(&csv_path)?, &refs)?;
    outputs.push(csv_path);
    for t in &tables {
        let p = a.out.join(format!("table_{}.csv", t.label));
        write_tables_csv(create(&p)?, &[t])?;
        outputs.push(p);
    }
    let json_path = a.out.join("metrics.json");
    write_json(&json_path, &tables)?;
    outputs.push(json_path);
    let plot_path = a.out.join("plot.csv");
    write_plot_csv(create(&plot_path)?, &refs)?;
    outputs.push(plot_path);

    for t in &tables {
        println!(
            "{:<12} nMSE {}  wR {}",
            t.label,
            t.nmse().formatted(),
            t.wr().formatted()
        );
    }
    let mut inputs = vec![a.dataset.clone()];
    inputs.extend(a.experiment_config.clone());
    Ok(Outcome {
        inputs,
        outputs,
        config: serde_json::json!({ "experiment": cfg, "measures": modes }),
        manifest: None,
    })
}

fn cmd_synth(a: &SynthArgs, seed: Option<u64>) -> Result<Outcome> {
    let mut cfg: SynthConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => SynthConfig::default(),
    };
    if let Some(v) = a.subjects {
        cfg.n_subjects = v;
    }
    if let Some(v) = a.rois {
        cfg.n_rois = v;
    }
    if let Some(v) = a.tasks {
        cfg.k_tasks = v;
    }
    if let Some(v) = a.support {
        cfg.true_support = v;
    }
    if let Some(v) = a.noise {
        cfg.noise_sigma = v;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let (cohort, truth) = generate_cohort(&cfg)?;
    ensure_dir(&a.out)?;
    let cohort_path = a.out.join("cohort.csv");
    let truth_path = a.out.join("ground_truth.json");
    let cfg_path = a.out.join("synth_config.json");
    cohort.write_csv(create(&cohort_path)?)?;
    truth.save_json(&truth_path)?;
    write_json(&cfg_path, &cfg)?;
    println!(
        "{} subjects, {} ROIs, {} planted pairs: {}",
        cohort.subjects.len(),
        cohort.roi_names.len(),
        truth.support.len(),
        cohort_path.display()
    );
    Ok(Outcome {
        inputs: a.config.iter().cloned().collect(),
        outputs: vec![cohort_path, truth_path, cfg_path],
        config: serde_json::to_value(&cfg)?,
        manifest: None,
    })
}

fn replace_out(args: &[String], out: &Path) -> Vec<String> {
    let mut res = Vec::with_capacity(args.len());
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--out" {
            res.push(a.clone());
            res.push(out.display().to_string());
            it.next();
        } else if a.starts_with("--out=") {
            res.push(format!("--out={}", out.display()));
        } else {
            res.push(a.clone());
        }
    }
    res
}

fn cmd_replay(a: &ReplayArgs) -> Result<Outcome> {
    let recorded = RunManifest::load(&a.manifest)?;
    let args = match &a.out {
        Some(out) => replace_out(&recorded.args, out),
        None => recorded.args.clone(),
    };
    let mut argv = vec![recorded.tool.clone()];
    argv.extend(args);
    let cli = Cli::try_parse_from(&argv).map_err(|e| Error::Config(format!("manifest arguments: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(Error::Config("a manifest cannot replay a replay".into()));
    }
    let outcome = execute(&cli, &argv[1..])?;
    if a.check {
        let by_name = |p: &Path| p.file_name().map(|n| n.to_os_string());
        let mut mismatched = Vec::new();
        for old in &recorded.outputs {
            let name = by_name(&old.path);
            let fresh = outcome.outputs.iter().find(|p| by_name(p) == name);
            let same = match fresh {
                Some(p) => sha256_file(p)? == old.sha256,
                None => false,
            };
            if !same {
                mismatched.push(old.path.display().to_string());
            }
        }
        if !mismatched.is_empty() {
            return Err(Error::ReplayMismatch(mismatched));
        }
        println!("replay reproduced all {} outputs", recorded.outputs.len());
    }
    Ok(outcome)
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Ingest(_) => "ingest",
        Command::Features(_) => "features",
        Command::Train(_) => "train",
        Command::Stability(_) => "stability",
        Command::Evaluate(_) => "evaluate",
        Command::Synth(_) => "synth",
        Command::Replay(_) => "replay",
    }
}

fn out_dir(c: &Command) -> Option<&Path> {
    match c {
        Command::Ingest(a) => Some(&a.out),
        Command::Features(a) => Some(&a.out),
        Command::Train(a) => Some(&a.out),
        Command::Stability(a) => Some(&a.out),
        Command::Evaluate(a) => Some(&a.out),
        Command::Synth(a) => Some(&a.out),
        Command::Replay(_) => None,
    }
}

/// Run a parsed command inside a pool of `--jobs` threads and write its
/// manifest. `args` are the raw arguments after the program name.
pub fn execute(cli: &Cli, args: &[String]) -> Result<Outcome> {
    let started = Instant::now();
    let started_unix_ms = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis());
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(Error::Config("--jobs must be at least 1".into()));
        }
        pool = pool.num_threads(j);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut outcome = pool.install(|| match &cli.command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Features(a) => cmd_features(a),
        Command::Train(a) => cmd_train(a),
        Command::Stability(a) => cmd_stability(a, cli.seed),
        Command::Evaluate(a) => cmd_evaluate(a, cli.seed),
        Command::Synth(a) => cmd_synth(a, cli.seed),
        Command::Replay(a) => cmd_replay(a),
    })?;
    if let Some(dir) = out_dir(&cli.command) {
        let manifest = RunManifest {
            tool: "progmtl".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command_name(&cli.command).into(),
            args: args.to_vec(),
            seed: cli.seed,
            jobs: cli.jobs,
            config: outcome.config.clone(),
            inputs: outcome.inputs.iter().map(|p| FileDigest::of(p)).collect::<Result<_>>()?,
            outputs: outcome.outputs.iter().map(|p| FileDigest::of(p)).collect::<Result<_>>()?,
            timings: Timings {
                started_unix_ms,
                elapsed_ms: started.elapsed().as_millis(),
            },
        };
        let path = dir.join(MANIFEST_FILE);
        manifest.save(&path)?;
        outcome.manifest = Some(path);
    }
    Ok(outcome)
}

/// Parse `argv` (program name first), run, and return the exit code:
/// 0 success, 2 usage or configuration error, 3 data error, 4 numerical
/// failure.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    let args: Vec<String> = argv
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    match execute(&cli, &args) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
