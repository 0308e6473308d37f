//! Prediction metrics and the repeated cross-validation harness.

use std::io::Write;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis, CowArray, Ix2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::PairedDataset;
use crate::error::{Error, Result};
use crate::features::{
    build_pair_features_with, compute_trends, original_features, FeatureMode, PairCovariance, ScalingStats,
    TrendMatrix,
};
use crate::rng;
use crate::solvers::{fit_model, Penalties, SolverConfig, SolverKind};
use crate::stability::{default_grid, rank_by_stability, sweep, StabilityConfig};

fn check_shapes(y: ArrayView2<f64>, yhat: ArrayView2<f64>) -> Result<()> {
    if y.dim() != yhat.dim() {
        return Err(Error::Dimension(format!(
            "targets are {:?} but predictions are {:?}",
            y.dim(),
            yhat.dim()
        )));
    }
    if y.nrows() == 0 {
        return Err(Error::InsufficientData("no samples to score".into()));
    }
    Ok(())
}

fn population_variance(v: ArrayView1<f64>) -> f64 {
    let n = v.len() as f64;
    let m = v.sum() / n;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n
}

fn is_constant(v: ArrayView1<f64>) -> bool {
    let var = population_variance(v);
    let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs())).max(1.0);
    var <= 1e-24 * scale * scale
}

/// Normalized mean squared error: per-task squared error divided by that
/// task's population variance, summed and divided by the total count.
pub fn nmse(y: ArrayView2<f64>, yhat: ArrayView2<f64>) -> Result<f64> {
    check_shapes(y, yhat)?;
    let mut num = 0.0;
    let mut count = 0usize;
    for (task, (yc, pc)) in y.axis_iter(Axis(1)).zip(yhat.axis_iter(Axis(1))).enumerate() {
        if is_constant(yc) {
            return Err(Error::UndefinedNormalization { task });
        }
        let se: f64 = yc.iter().zip(pc.iter()).map(|(a, b)| (a - b).powi(2)).sum();
        num += se / population_variance(yc);
        count += yc.len();
    }
    Ok(num / count as f64)
}

/// Root mean squared error of one task.
pub fn rmse_per_task(y: ArrayView1<f64>, yhat: ArrayView1<f64>) -> f64 {
    assert_eq!(y.len(), yhat.len(), "rmse needs equal lengths");
    let se: f64 = y.iter().zip(yhat.iter()).map(|(a, b)| (a - b).powi(2)).sum();
    (se / y.len() as f64).sqrt()
}

fn pearson(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.sum() / n, b.sum() / n);
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0)
}

/// Sample-size weighted mean of per-task Pearson correlations.
pub fn weighted_r(y: ArrayView2<f64>, yhat: ArrayView2<f64>) -> Result<f64> {
    check_shapes(y, yhat)?;
    let mut num = 0.0;
    let mut count = 0usize;
    for (task, (yc, pc)) in y.axis_iter(Axis(1)).zip(yhat.axis_iter(Axis(1))).enumerate() {
        if yc.len() < 2 || is_constant(yc) || is_constant(pc) {
            return Err(Error::UndefinedCorrelation { task });
        }
        num += pearson(yc, pc) * yc.len() as f64;
        count += yc.len();
    }
    Ok(num / count as f64)
}

/// rMSE of every task.
pub fn per_task_rmse(y: ArrayView2<f64>, yhat: ArrayView2<f64>) -> Result<Vec<f64>> {
    check_shapes(y, yhat)?;
    Ok(y.axis_iter(Axis(1))
        .zip(yhat.axis_iter(Axis(1)))
        .map(|(a, b)| rmse_per_task(a, b))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation over repeats; 0 for a single repeat.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Self { mean, std }
    }

    pub fn formatted(&self) -> String {
        format!("{:.3}±{:.3}", self.mean, self.std)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub name: String,
    #[serde(flatten)]
    pub value: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatMetrics {
    pub nmse: f64,
    pub wr: f64,
    pub rmse: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    /// Column label, e.g. the feature mode.
    pub label: String,
    /// `nMSE` then `wR`.
    pub rows: Vec<MetricRow>,
    /// One row per task, named by its time-point label.
    pub per_task_rmse: Vec<MetricRow>,
    pub n_repeats: usize,
    pub repeats: Vec<RepeatMetrics>,
    pub provenance: ExperimentConfig,
}

impl MetricTable {
    fn from_repeats(label: &str, task_labels: &[String], repeats: Vec<RepeatMetrics>, config: &ExperimentConfig) -> Self {
        let col = |f: &dyn Fn(&RepeatMetrics) -> f64| MeanStd::of(&repeats.iter().map(f).collect::<Vec<_>>());
        let rows = vec![
            MetricRow {
                name: "nMSE".into(),
                value: col(&|r| r.nmse),
            },
            MetricRow {
                name: "wR".into(),
                value: col(&|r| r.wr),
            },
        ];
        let per_task_rmse = task_labels
            .iter()
            .enumerate()
            .map(|(t, l)| MetricRow {
                name: l.clone(),
                value: col(&|r| r.rmse[t]),
            })
            .collect();
        Self {
            label: label.to_string(),
            rows,
            per_task_rmse,
            n_repeats: repeats.len(),
            repeats,
            provenance: config.clone(),
        }
    }

    pub fn row(&self, name: &str) -> Option<MeanStd> {
        self.rows
            .iter()
            .chain(&self.per_task_rmse)
            .find(|r| r.name == name)
            .map(|r| r.value)
    }

    pub fn nmse(&self) -> MeanStd {
        self.rows[0].value
    }

    pub fn wr(&self) -> MeanStd {
        self.rows[1].value
    }
}

/// Side-by-side `mean±std` table, one column per table: `nMSE`, `wR`, then
/// `rMSE <time point>` rows.
pub fn write_tables_csv<W: Write>(out: W, tables: &[&MetricTable]) -> Result<()> {
    let first = tables
        .first()
        .ok_or_else(|| Error::Config("no metric tables to write".into()))?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["metric".to_string()];
    header.extend(tables.iter().map(|t| t.label.clone()));
    w.write_record(&header)?;
    for (i, row) in first.rows.iter().enumerate() {
        let mut rec = vec![row.name.clone()];
        rec.extend(tables.iter().map(|t| t.rows[i].value.formatted()));
        w.write_record(&rec)?;
    }
    for (i, row) in first.per_task_rmse.iter().enumerate() {
        let mut rec = vec![format!("rMSE {}", row.name)];
        rec.extend(tables.iter().map(|t| t.per_task_rmse[i].value.formatted()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))
}

/// Long-format rows `metric,time_point,mean,std,measure` for plotting.
pub fn write_plot_csv<W: Write>(out: W, tables: &[&MetricTable]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["metric", "time_point", "mean", "std", "measure"])?;
    for t in tables {
        for r in &t.rows {
            w.write_record([
                r.name.clone(),
                "all".into(),
                r.value.mean.to_string(),
                r.value.std.to_string(),
                t.label.clone(),
            ])?;
        }
        for r in &t.per_task_rmse {
            w.write_record([
                "rMSE".into(),
                r.name.clone(),
                r.value.mean.to_string(),
                r.value.std.to_string(),
                t.label.clone(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))
}

/// Stability-based column screening before each fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Screening {
    pub target_count: usize,
    /// Empty grid means the default TGL grid on the screening data.
    pub stability: StabilityConfig,
    /// Screen once on all subjects instead of per training fold. Leaks
    /// held-out information into the selection.
    pub global: bool,
}

impl Default for Screening {
    fn default() -> Self {
        Self {
            target_count: 300,
            stability: StabilityConfig {
                solver: SolverKind::Tgl,
                ..StabilityConfig::default()
            },
            global: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub n_folds: usize,
    pub n_repeats: usize,
    pub seed: u64,
    pub solver: SolverKind,
    pub penalties: Penalties,
    /// When set, penalties are picked per training fold by inner CV.
    pub inner_grid: Option<Vec<Penalties>>,
    pub inner_folds: usize,
    pub measure: FeatureMode,
    pub screening: Option<Screening>,
    pub standardize: bool,
    pub solver_config: SolverConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_folds: 5,
            n_repeats: 30,
            seed: 0,
            solver: SolverKind::Tgl,
            penalties: Penalties::structured(1.0, 1.0, 1.0),
            inner_grid: None,
            inner_folds: 3,
            measure: FeatureMode::Cosine,
            screening: None,
            standardize: true,
            solver_config: SolverConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.n_folds < 2 {
            return Err(Error::Config("n_folds must be at least 2".into()));
        }
        if self.n_repeats == 0 {
            return Err(Error::Config("n_repeats must be at least 1".into()));
        }
        if n / self.n_folds < 2 {
            return Err(Error::Config(format!(
                "{n} subjects in {} folds leaves a fold with fewer than 2 samples",
                self.n_folds
            )));
        }
        if let Some(grid) = &self.inner_grid {
            if grid.is_empty() {
                return Err(Error::Config("inner grid is empty".into()));
            }
            if self.inner_folds < 2 {
                return Err(Error::Config("inner_folds must be at least 2".into()));
            }
            for p in grid {
                p.validate()?;
            }
        }
        self.penalties.validate()?;
        self.solver_config.validate()
    }
}

/// Fold id of every sample for one repeat: a seeded shuffle dealt round
/// robin, so fold sizes differ by at most one.
pub fn fold_assignments(n: usize, n_folds: usize, repeat: usize, seed: u64) -> Vec<usize> {
    fold_assignments_tagged(n, n_folds, seed, &[rng::TAG_FOLDS, repeat as u64])
}

fn fold_assignments_tagged(n: usize, n_folds: usize, seed: u64, labels: &[u64]) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, labels));
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % n_folds;
    }
    fold
}

fn split(fold: &[usize], f: usize) -> (Vec<usize>, Vec<usize>) {
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, &g) in fold.iter().enumerate() {
        if g == f {
            test.push(i);
        } else {
            train.push(i);
        }
    }
    (train, test)
}

/// Where a fold's design matrix comes from.
pub enum FeatureSource<'a> {
    /// Precomputed matrix; no statistics are estimated from it.
    Fixed(ArrayView2<'a, f64>),
    /// Mahalanobis pair features; covariances come from training rows.
    Mahalanobis { trends: TrendMatrix, roi_names: &'a [String] },
}

impl FeatureSource<'_> {
    fn n_rows(&self) -> usize {
        match self {
            FeatureSource::Fixed(x) => x.nrows(),
            FeatureSource::Mahalanobis { trends, .. } => trends.nrows(),
        }
    }

    /// Full design matrix with any fitted statistics taken from `train` only.
    pub fn matrix_for(&self, train: &[usize]) -> Result<CowArray<'_, f64, Ix2>> {
        match self {
            FeatureSource::Fixed(x) => Ok(CowArray::from(x.view())),
            FeatureSource::Mahalanobis { trends, roi_names } => {
                let cov = PairCovariance::estimate(&trends.select(Axis(0), train))?;
                let dm = build_pair_features_with(
                    trends,
                    crate::features::SimilarityMeasure::Mahalanobis,
                    roi_names,
                    Some(&cov),
                )?;
                Ok(CowArray::from(dm.values))
            }
        }
    }
}

/// Preprocessing fitted on one training split.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldModel {
    pub scaling: ScalingStats,
    pub columns: Option<Vec<usize>>,
    pub penalties: Penalties,
    pub w: Array2<f64>,
}

impl FoldModel {
    pub fn predict(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let x = match &self.columns {
            Some(c) => x.select(Axis(1), c),
            None => x.to_owned(),
        };
        let xs = self.scaling.apply_x(x.view());
        self.scaling.restore_y(xs.dot(&self.w).view())
    }
}

fn identity_scaling(x: ArrayView2<f64>, y: ArrayView2<f64>) -> ScalingStats {
    ScalingStats {
        x_mean: vec![0.0; x.ncols()],
        x_std: vec![1.0; x.ncols()],
        x_constant: vec![false; x.ncols()],
        y_mean: vec![0.0; y.ncols()],
        std_convention: "none".into(),
    }
}

fn screen_columns(x: ArrayView2<f64>, y: ArrayView2<f64>, screening: &Screening) -> Result<Vec<usize>> {
    if screening.target_count > x.ncols() {
        return Err(Error::Dimension(format!(
            "cannot keep {} of {} features",
            screening.target_count,
            x.ncols()
        )));
    }
    let (xs, ys, _) = crate::features::standardize(x, y)?;
    let mut cfg = screening.stability.clone();
    if cfg.grid.is_empty() {
        cfg.grid = default_grid(xs.view(), ys.view(), cfg.solver);
    }
    let counts = sweep(xs.view(), ys.view(), &cfg, None)?;
    let mut cols: Vec<usize> = rank_by_stability(&counts)
        .into_iter()
        .take(screening.target_count)
        .collect();
    cols.sort_unstable();
    Ok(cols)
}

fn pick_penalties(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    config: &ExperimentConfig,
    grid: &[Penalties],
    labels: &[u64],
) -> Result<Penalties> {
    let fold = fold_assignments_tagged(x.nrows(), config.inner_folds, config.seed, labels);
    let mut best: Option<(f64, Penalties)> = None;
    for p in grid {
        let mut se = 0.0;
        for f in 0..config.inner_folds {
            let (tr, te) = split(&fold, f);
            let (xt, yt) = (x.select(Axis(0), &tr), y.select(Axis(0), &tr));
            let scaling = if config.standardize {
                ScalingStats::fit(xt.view(), yt.view())?
            } else {
                identity_scaling(xt.view(), yt.view())
            };
            let fit = fit_model(
                config.solver,
                scaling.apply_x(xt.view()).view(),
                scaling.apply_y(yt.view()).view(),
                p,
                &config.solver_config,
            )?;
            let pred = scaling.restore_y(scaling.apply_x(x.select(Axis(0), &te).view()).dot(&fit.w).view());
            se += (&pred - &y.select(Axis(0), &te)).mapv(|v| v * v).sum();
        }
        if best.map_or(true, |(b, _)| se < b) {
            best = Some((se, *p));
        }
    }
    Ok(best.expect("grid is non-empty").1)
}

/// Fit preprocessing and the model on `train` rows of `x`/`y`.
pub fn fit_fold(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    train: &[usize],
    config: &ExperimentConfig,
    global_columns: Option<&[usize]>,
    labels: &[u64],
) -> Result<FoldModel> {
    let xt = x.select(Axis(0), train);
    let yt = y.select(Axis(0), train);
    let columns = match (global_columns, &config.screening) {
        (Some(c), _) => Some(c.to_vec()),
        (None, Some(s)) => Some(screen_columns(xt.view(), yt.view(), s)?),
        (None, None) => None,
    };
    let xt = match &columns {
        Some(c) => xt.select(Axis(1), c),
        None => xt,
    };
    let scaling = if config.standardize {
        ScalingStats::fit(xt.view(), yt.view())?
    } else {
        identity_scaling(xt.view(), yt.view())
    };
    let penalties = match &config.inner_grid {
        Some(grid) => pick_penalties(xt.view(), yt.view(), config, grid, labels)?,
        None => config.penalties,
    };
    let fit = fit_model(
        config.solver,
        scaling.apply_x(xt.view()).view(),
        scaling.apply_y(yt.view()).view(),
        &penalties,
        &config.solver_config,
    )?;
    Ok(FoldModel {
        scaling,
        columns,
        penalties,
        w: fit.w,
    })
}

fn run_repeat(source: &FeatureSource, y: ArrayView2<f64>, config: &ExperimentConfig, repeat: usize, global_columns: Option<&[usize]>) -> Result<RepeatMetrics> {
    let n = y.nrows();
    let fold = fold_assignments(n, config.n_folds, repeat, config.seed);
    let mut pred = Array2::zeros(y.dim());
    for f in 0..config.n_folds {
        let (train, test) = split(&fold, f);
        let x = source.matrix_for(&train)?;
        let labels = [rng::TAG_FOLDS, repeat as u64, f as u64 + 1];
        let model = fit_fold(x.view(), y, &train, config, global_columns, &labels)?;
        let p = model.predict(x.select(Axis(0), &test).view());
        for (row, &i) in test.iter().enumerate() {
            pred.row_mut(i).assign(&p.row(row));
        }
    }
    Ok(RepeatMetrics {
        nmse: nmse(y, pred.view())?,
        wr: weighted_r(y, pred.view())?,
        rmse: per_task_rmse(y, pred.view())?,
    })
}

/// Repeated k-fold CV of one feature source against targets `y`.
///
/// Out-of-fold predictions of a repeat are pooled before scoring; the table
/// reports mean and sample std over repeats. Repeats run in parallel and
/// the result does not depend on the thread count.
pub fn evaluate_source(
    source: &FeatureSource,
    y: ArrayView2<f64>,
    task_labels: &[String],
    label: &str,
    config: &ExperimentConfig,
) -> Result<MetricTable> {
    let n = y.nrows();
    if source.n_rows() != n {
        return Err(Error::Dimension(format!(
            "features have {} rows, targets {n}",
            source.n_rows()
        )));
    }
    if task_labels.len() != y.ncols() {
        return Err(Error::Dimension("one label per task required".into()));
    }
    config.validate(n)?;
    let global_columns = match &config.screening {
        Some(s) if s.global => {
            let all: Vec<usize> = (0..n).collect();
            let x = source.matrix_for(&all)?;
            Some(screen_columns(x.view(), y, s)?)
        }
        _ => None,
    };
    let repeats: Vec<RepeatMetrics> = (0..config.n_repeats)
        .into_par_iter()
        .map(|r| run_repeat(source, y, config, r, global_columns.as_deref()))
        .collect::<Result<_>>()?;
    Ok(MetricTable::from_repeats(label, task_labels, repeats, config))
}

/// [`evaluate_source`] on a fixed design matrix.
pub fn evaluate_matrix(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    task_labels: &[String],
    label: &str,
    config: &ExperimentConfig,
) -> Result<MetricTable> {
    evaluate_source(&FeatureSource::Fixed(x), y, task_labels, label, config)
}

/// Repeated CV on a paired dataset with features built per `config.measure`.
pub fn run_experiment(dataset: &PairedDataset, config: &ExperimentConfig) -> Result<MetricTable> {
    let labels = dataset.target_labels();
    let y = dataset.targets.view();
    let label = config.measure.to_string();
    match config.measure {
        FeatureMode::Original => {
            let dm = original_features(dataset);
            evaluate_matrix(dm.values.view(), y, &labels, &label, config)
        }
        FeatureMode::Mahalanobis => {
            let (trends, _) = compute_trends(dataset)?;
            let source = FeatureSource::Mahalanobis {
                trends,
                roi_names: &dataset.roi_names,
            };
            evaluate_source(&source, y, &labels, &label, config)
        }
        mode => {
            let dm = crate::features::build_features(dataset, mode)?;
            evaluate_matrix(dm.values.view(), y, &labels, &label, config)
        }
    }
}

/// One table per feature mode, all sharing seeds and hence fold assignments.
pub fn compare_measures(
    dataset: &PairedDataset,
    config: &ExperimentConfig,
    modes: &[FeatureMode],
) -> Result<Vec<MetricTable>> {
    modes
        .iter()
        .map(|&measure| {
            let cfg = ExperimentConfig {
                measure,
                ..config.clone()
            };
            run_experiment(dataset, &cfg)
        })
        .collect()
}
