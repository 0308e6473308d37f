//! Stability selection with the multi-task solvers embedded.
//!
//! For every grid point and every half-subsample a model is fitted and the
//! per-task support recorded. A feature's selection frequency at a grid
//! point is the fraction of subsamples whose support contains it; its
//! stability score for a task is the maximum frequency over the grid, and
//! the stable set keeps features whose score reaches the threshold.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::standardize;
use crate::rng;
use crate::solvers::{fit_model, Penalties, SolverConfig, SolverKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StabilityConfig {
    pub solver: SolverKind,
    pub grid: Vec<Penalties>,
    /// Number of half-subsamples per grid point.
    pub n_subsamples: usize,
    pub threshold: f64,
    pub seed: u64,
    /// Coefficients with `|w| <= nonzero_eps` count as zero.
    pub nonzero_eps: f64,
    pub solver_config: SolverConfig,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            solver: SolverKind::Cfsgl,
            grid: Vec::new(),
            n_subsamples: 10,
            threshold: 0.8,
            seed: 0,
            nonzero_eps: 1e-8,
            solver_config: SolverConfig {
                tol: 1e-5,
                max_iter: 2_000,
                ..SolverConfig::default()
            },
        }
    }
}

impl StabilityConfig {
    pub fn validate(&self) -> Result<()> {
        if !matches!(self.solver, SolverKind::Tgl | SolverKind::Cfsgl) {
            return Err(Error::Config(format!(
                "stability selection embeds tgl or cfsgl, not {}",
                self.solver
            )));
        }
        if self.grid.is_empty() {
            return Err(Error::Config("stability grid is empty".into()));
        }
        if self.n_subsamples == 0 {
            return Err(Error::Config("n_subsamples must be at least 1".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!(
                "threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        if !(self.nonzero_eps >= 0.0) {
            return Err(Error::Config("nonzero_eps must be non-negative".into()));
        }
        for p in &self.grid {
            p.validate()?;
        }
        self.solver_config.validate()
    }

    pub fn total_fits(&self) -> usize {
        self.grid.len() * self.n_subsamples
    }
}

fn geometric(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![hi];
    }
    let ratio = (hi / lo).powf(1.0 / (count - 1) as f64);
    (0..count).map(|i| hi / ratio.powi(i as i32)).collect()
}

/// Largest penalties that still leave `W = 0` optimal, for the group and
/// the elementwise ℓ1 norm respectively.
pub fn penalty_scales(x: ArrayView2<f64>, y: ArrayView2<f64>) -> (f64, f64) {
    let xty = x.t().dot(&y);
    let group = xty
        .axis_iter(Axis(0))
        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let l1 = xty.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    (2.0 * group, 2.0 * l1)
}

/// Default 21 × 10 grid over (sparsity, fused/temporal) penalties.
///
/// Sparsity runs geometrically over `[0.1, 0.9]` of the zero-solution
/// threshold; the temporal penalty over `[1e-3, 1]` of `n` (TGL) or of the
/// ℓ1 threshold (cFSGL).
pub fn default_grid(x: ArrayView2<f64>, y: ArrayView2<f64>, solver: SolverKind) -> Vec<Penalties> {
    let n = x.nrows() as f64;
    let (group_max, l1_max) = penalty_scales(x, y);
    let mut grid = Vec::with_capacity(210);
    for s in geometric(0.1, 0.9, 21) {
        for f in geometric(1e-3, 1.0, 10) {
            grid.push(match solver {
                SolverKind::Cfsgl => Penalties::structured(0.5 * s * l1_max, f * l1_max, 0.5 * s * group_max),
                _ => Penalties::structured(1e-3 * n, f * n, s * group_max),
            });
        }
    }
    grid
}

/// `⌊n/2⌋` distinct indices, sorted, as a pure function of `(n, run, seed)`.
pub fn subsample_indices(n: usize, run: usize, seed: u64) -> Result<Vec<usize>> {
    if n < 2 {
        return Err(Error::InsufficientData(format!("cannot halve {n} samples")));
    }
    let mut rng = rng::stream(seed, &[rng::TAG_SUBSAMPLE, run as u64]);
    let mut idx = rand::seq::index::sample(&mut rng, n, n / 2).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Features whose coefficient for `task` exceeds `nonzero_eps` in magnitude.
pub fn selection_set(w: ArrayView2<f64>, task: usize, nonzero_eps: f64) -> Vec<usize> {
    w.column(task)
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() > nonzero_eps)
        .map(|(f, _)| f)
        .collect()
}

/// Fraction of the `gamma` runs whose selection set contains `feature`.
pub fn selection_frequency(runs: &[BTreeSet<usize>], feature: usize, gamma: usize) -> f64 {
    debug_assert_eq!(runs.len(), gamma);
    runs.iter().filter(|s| s.contains(&feature)).count() as f64 / gamma as f64
}

/// Outcome of one (grid point, subsample) fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub grid: usize,
    pub run: usize,
    /// Selected features per task; empty when the fit failed.
    pub selected: Vec<Vec<usize>>,
    pub converged: bool,
    pub failure: Option<String>,
}

fn run_cell(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    rows: &[usize],
    grid: usize,
    run: usize,
    config: &StabilityConfig,
) -> CellResult {
    let k = y.ncols();
    let fail = |msg: String| {
        log::warn!("stability cell (grid {grid}, run {run}) failed: {msg}");
        CellResult {
            grid,
            run,
            selected: vec![Vec::new(); k],
            converged: false,
            failure: Some(msg),
        }
    };
    let xs = x.select(Axis(0), rows);
    let ys = y.select(Axis(0), rows);
    let (xs, ys, _) = match standardize(xs.view(), ys.view()) {
        Ok(v) => v,
        Err(e) => return fail(e.to_string()),
    };
    match fit_model(config.solver, xs.view(), ys.view(), &config.grid[grid], &config.solver_config) {
        Ok(fit) => CellResult {
            grid,
            run,
            selected: (0..k).map(|t| selection_set(fit.w.view(), t, config.nonzero_eps)).collect(),
            converged: fit.converged,
            failure: None,
        },
        Err(e) => fail(e.to_string()),
    }
}

/// Digest identifying a sweep: configuration plus data.
pub fn sweep_digest(x: ArrayView2<f64>, y: ArrayView2<f64>, config: &StabilityConfig) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(config).expect("config serializes"));
    for m in [x, y] {
        h.update((m.nrows() as u64).to_le_bytes());
        h.update((m.ncols() as u64).to_le_bytes());
        for v in m.iter() {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    digest: String,
}

/// Append-only JSON-lines store of finished cells, keyed by sweep digest.
struct Checkpoint {
    file: Mutex<File>,
}

impl Checkpoint {
    /// Opens `path`, returning cells already stored for `digest`. A file
    /// written for another digest is discarded.
    fn open(path: &Path, digest: &str) -> Result<(Self, Vec<CellResult>)> {
        let mut done = Vec::new();
        let mut reusable = false;
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
            let mut lines = reader.lines();
            if let Some(Ok(first)) = lines.next() {
                if let Ok(h) = serde_json::from_str::<CheckpointHeader>(&first) {
                    reusable = h.digest == digest;
                }
            }
            if reusable {
                // a torn final line from an interrupted run is skipped
                done.extend(
                    lines
                        .map_while(std::result::Result::ok)
                        .filter_map(|l| serde_json::from_str::<CellResult>(&l).ok()),
                );
            }
        }
        let file = if reusable {
            let mut f = OpenOptions::new().append(true).open(path).map_err(|e| Error::io(path, e))?;
            f.flush().map_err(|e| Error::io(path, e))?;
            f
        } else {
            let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
            let header = serde_json::to_string(&CheckpointHeader {
                digest: digest.to_string(),
            })?;
            writeln!(f, "{header}").map_err(|e| Error::io(path, e))?;
            f
        };
        Ok((Self { file: Mutex::new(file) }, done))
    }

    fn record(&self, cell: &CellResult) -> Result<()> {
        let line = serde_json::to_string(cell)?;
        let mut f = self.file.lock().expect("checkpoint lock poisoned");
        writeln!(f, "{line}").map_err(|e| Error::io("<checkpoint>", e))?;
        f.flush().map_err(|e| Error::io("<checkpoint>", e))
    }
}

/// Raw per-(feature, task, grid) selection counts of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCounts {
    pub n_features: usize,
    pub n_tasks: usize,
    pub n_grid: usize,
    pub gamma: usize,
    counts: Vec<u32>,
    pub failures: Vec<CellFailure>,
    pub executed_fits: usize,
    pub reused_fits: usize,
    pub unconverged_fits: usize,
}

impl SweepCounts {
    fn index(&self, f: usize, t: usize, g: usize) -> usize {
        (f * self.n_tasks + t) * self.n_grid + g
    }

    pub fn count(&self, f: usize, t: usize, g: usize) -> u32 {
        self.counts[self.index(f, t, g)]
    }

    pub fn frequency(&self, f: usize, t: usize, g: usize) -> f64 {
        self.count(f, t, g) as f64 / self.gamma as f64
    }

    /// Maximum frequency over the grid.
    pub fn score(&self, f: usize, t: usize) -> f64 {
        let best = (0..self.n_grid).map(|g| self.count(f, t, g)).max().unwrap_or(0);
        best as f64 / self.gamma as f64
    }

    fn mean_frequency(&self, f: usize) -> f64 {
        let total: u64 = (0..self.n_tasks)
            .flat_map(|t| (0..self.n_grid).map(move |g| (t, g)))
            .map(|(t, g)| self.count(f, t, g) as u64)
            .sum();
        total as f64 / (self.gamma * self.n_tasks * self.n_grid) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub grid: usize,
    pub run: usize,
    pub message: String,
}

/// Fit every (grid point, subsample) cell and tally selections.
///
/// Cells run in parallel; each depends only on `(config, grid, run)`, so the
/// result does not depend on the thread count. With `checkpoint`, finished
/// cells are appended to that file and reused by a later call.
pub fn sweep(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    config: &StabilityConfig,
    checkpoint: Option<&Path>,
) -> Result<SweepCounts> {
    config.validate()?;
    let (n, d) = x.dim();
    if y.nrows() != n {
        return Err(Error::Dimension(format!("X has {n} rows, Y has {}", y.nrows())));
    }
    let k = y.ncols();
    let gamma = config.n_subsamples;
    let subsamples: Vec<Vec<usize>> = (0..gamma)
        .map(|run| subsample_indices(n, run, config.seed))
        .collect::<Result<_>>()?;

    let (store, mut cells) = match checkpoint {
        Some(path) => {
            let (store, done) = Checkpoint::open(path, &sweep_digest(x, y, config))?;
            (Some(store), done)
        }
        None => (None, Vec::new()),
    };
    let mut have: BTreeMap<(usize, usize), CellResult> = BTreeMap::new();
    for c in cells.drain(..) {
        if c.grid < config.grid.len() && c.run < gamma && c.selected.len() == k {
            have.insert((c.grid, c.run), c);
        }
    }
    let reused = have.len();
    let todo: Vec<(usize, usize)> = (0..gamma)
        .flat_map(|run| (0..config.grid.len()).map(move |g| (g, run)))
        .filter(|key| !have.contains_key(key))
        .collect();

    let fresh: Vec<Result<CellResult>> = todo
        .par_iter()
        .map(|&(g, run)| {
            let cell = run_cell(x, y, &subsamples[run], g, run, config);
            if let Some(store) = &store {
                store.record(&cell)?;
            }
            Ok(cell)
        })
        .collect();
    let executed = fresh.len();
    for c in fresh {
        let c = c?;
        have.insert((c.grid, c.run), c);
    }

    let n_grid = config.grid.len();
    let mut counts = SweepCounts {
        n_features: d,
        n_tasks: k,
        n_grid,
        gamma,
        counts: vec![0; d * k * n_grid],
        failures: Vec::new(),
        executed_fits: executed,
        reused_fits: reused,
        unconverged_fits: 0,
    };
    for ((g, run), cell) in &have {
        if let Some(msg) = &cell.failure {
            counts.failures.push(CellFailure {
                grid: *g,
                run: *run,
                message: msg.clone(),
            });
        } else if !cell.converged {
            counts.unconverged_fits += 1;
        }
        for (t, sel) in cell.selected.iter().enumerate() {
            for &f in sel {
                let i = counts.index(f, t, *g);
                counts.counts[i] += 1;
            }
        }
    }
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StableFeature {
    pub feature: usize,
    pub name: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config: StabilityConfig,
    pub seed: u64,
    pub total_fits: usize,
    pub executed_fits: usize,
    pub reused_fits: usize,
    pub unconverged_fits: usize,
    pub failed_cells: Vec<CellFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub feature_names: Vec<String>,
    pub task_labels: Vec<String>,
    /// `frequencies[feature][task][grid]`, each a multiple of `1/γ`.
    pub frequencies: Vec<Vec<Vec<f64>>>,
    /// `scores[feature][task]`: maximum frequency over the grid.
    pub scores: Vec<Vec<f64>>,
    /// Per task, features with score at or above the threshold, best first.
    pub stable_set: Vec<Vec<StableFeature>>,
    pub provenance: Provenance,
}

impl StabilityReport {
    fn from_counts(
        counts: &SweepCounts,
        config: &StabilityConfig,
        feature_names: Vec<String>,
        task_labels: Vec<String>,
    ) -> Self {
        let (d, k, g) = (counts.n_features, counts.n_tasks, counts.n_grid);
        let frequencies = (0..d)
            .map(|f| (0..k).map(|t| (0..g).map(|gi| counts.frequency(f, t, gi)).collect()).collect())
            .collect();
        let scores: Vec<Vec<f64>> = (0..d).map(|f| (0..k).map(|t| counts.score(f, t)).collect()).collect();
        let stable_set = (0..k)
            .map(|t| {
                let mut set: Vec<StableFeature> = (0..d)
                    .filter(|&f| scores[f][t] >= config.threshold)
                    .map(|f| StableFeature {
                        feature: f,
                        name: feature_names[f].clone(),
                        score: scores[f][t],
                    })
                    .collect();
                set.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.feature.cmp(&b.feature)));
                set
            })
            .collect();
        Self {
            feature_names,
            task_labels,
            frequencies,
            scores,
            stable_set,
            provenance: Provenance {
                config: config.clone(),
                seed: config.seed,
                total_fits: config.total_fits(),
                executed_fits: counts.executed_fits,
                reused_fits: counts.reused_fits,
                unconverged_fits: counts.unconverged_fits,
                failed_cells: counts.failures.clone(),
            },
        }
    }

    /// Stable set at another threshold, recomputed from the scores.
    pub fn stable_at(&self, threshold: f64, task: usize) -> BTreeSet<usize> {
        self.scores
            .iter()
            .enumerate()
            .filter(|(_, s)| s[task] >= threshold)
            .map(|(f, _)| f)
            .collect()
    }

    /// Features stable for at least one task.
    pub fn stable_union(&self) -> BTreeSet<usize> {
        self.stable_set.iter().flatten().map(|s| s.feature).collect()
    }

    /// Stable set as CSV rows: task, rank, feature, pair name, a readable
    /// definition and the score. `descriptions` maps ROI names to labels.
    pub fn write_stable_csv<W: Write>(&self, out: W, descriptions: &BTreeMap<String, String>) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["task", "rank", "feature", "pair", "definition", "score"])?;
        for (t, set) in self.stable_set.iter().enumerate() {
            for (rank, s) in set.iter().enumerate() {
                w.write_record([
                    self.task_labels[t].clone(),
                    (rank + 1).to_string(),
                    s.feature.to_string(),
                    s.name.clone(),
                    describe_pair(&s.name, descriptions),
                    s.score.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))
    }
}

/// `A-B` becomes `<description of A> & <description of B>`; unknown ROI
/// names stand for themselves.
pub fn describe_pair(name: &str, descriptions: &BTreeMap<String, String>) -> String {
    let lookup = |roi: &str| descriptions.get(roi).cloned().unwrap_or_else(|| roi.to_string());
    match name.split_once('-') {
        Some((a, b)) => format!("{} & {}", lookup(a), lookup(b)),
        None => lookup(name),
    }
}

/// Full stability selection run.
pub fn run_stability(x: ArrayView2<f64>, y: ArrayView2<f64>, config: &StabilityConfig) -> Result<StabilityReport> {
    run_stability_named(x, y, config, None, None, None)
}

/// [`run_stability`] with feature/task names and an optional checkpoint file.
pub fn run_stability_named(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    config: &StabilityConfig,
    feature_names: Option<Vec<String>>,
    task_labels: Option<Vec<String>>,
    checkpoint: Option<&Path>,
) -> Result<StabilityReport> {
    let counts = sweep(x, y, config, checkpoint)?;
    let names = feature_names.unwrap_or_else(|| (0..x.ncols()).map(|f| format!("f{f}")).collect());
    let labels = task_labels.unwrap_or_else(|| (0..y.ncols()).map(|t| format!("task{t}")).collect());
    if names.len() != x.ncols() || labels.len() != y.ncols() {
        return Err(Error::Dimension("feature or task names do not match the data".into()));
    }
    Ok(StabilityReport::from_counts(&counts, config, names, labels))
}

/// Rank features by stability and keep the best `target_count`.
///
/// Ranking key: max-over-tasks score, then mean frequency over grid and
/// tasks, then lower column index.
pub fn screen_features(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    config: &StabilityConfig,
    target_count: usize,
) -> Result<Vec<usize>> {
    let d = x.ncols();
    if target_count > d {
        return Err(Error::Dimension(format!(
            "cannot keep {target_count} of {d} features"
        )));
    }
    let counts = sweep(x, y, config, None)?;
    Ok(rank_by_stability(&counts).into_iter().take(target_count).collect())
}

pub fn rank_by_stability(counts: &SweepCounts) -> Vec<usize> {
    let keyed: Vec<(f64, f64, usize)> = (0..counts.n_features)
        .map(|f| {
            let best = (0..counts.n_tasks).map(|t| counts.score(f, t)).fold(0.0, f64::max);
            (best, counts.mean_frequency(f), f)
        })
        .collect();
    let mut order = keyed;
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)).then(a.2.cmp(&b.2)));
    order.into_iter().map(|(_, _, f)| f).collect()
}

/// Column-subset helper shared by screening callers.
pub fn select_columns(x: ArrayView2<f64>, cols: &[usize]) -> Array2<f64> {
    x.select(Axis(1), cols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn subsample_sizes_and_determinism() {
        assert_eq!(subsample_indices(408, 0, 1).unwrap().len(), 204);
        assert_eq!(subsample_indices(5, 3, 1).unwrap().len(), 2);
        assert_eq!(subsample_indices(50, 2, 9).unwrap(), subsample_indices(50, 2, 9).unwrap());
        assert_ne!(subsample_indices(50, 2, 9).unwrap(), subsample_indices(50, 3, 9).unwrap());
        assert!(matches!(subsample_indices(1, 0, 0), Err(Error::InsufficientData(_))));
        let s = subsample_indices(100, 0, 4).unwrap();
        assert!(s.windows(2).all(|w| w[0] < w[1]) && *s.last().unwrap() < 100);
    }

    #[test]
    fn selection_set_cases() {
        let w = array![[0.0], [0.5], [0.0]];
        assert_eq!(selection_set(w.view(), 0, 1e-8), vec![1]);
        let z = Array2::<f64>::zeros((3, 1));
        assert!(selection_set(z.view(), 0, 1e-8).is_empty());
        let tiny = array![[1e-9], [1.0]];
        assert_eq!(selection_set(tiny.view(), 0, 1e-8), vec![1]);
    }

    #[test]
    fn selection_frequency_counts() {
        let runs: Vec<BTreeSet<usize>> = (0..10)
            .map(|i| if i < 7 { [3usize, 4].into() } else { [4usize].into() })
            .collect();
        assert_eq!(selection_frequency(&runs, 3, 10), 0.7);
        assert_eq!(selection_frequency(&runs, 9, 10), 0.0);
        assert_eq!(selection_frequency(&runs, 4, 10), 1.0);
    }

    #[test]
    fn config_validation() {
        let mut c = StabilityConfig {
            grid: vec![Penalties::structured(0.0, 0.0, 1.0)],
            ..StabilityConfig::default()
        };
        assert!(c.validate().is_ok());
        c.threshold = 1.0;
        assert!(c.validate().is_err());
        c.threshold = 0.5;
        c.grid.clear();
        assert!(c.validate().is_err());
        c.grid.push(Penalties::default());
        c.solver = SolverKind::Ridge;
        assert!(c.validate().is_err());
    }

    #[test]
    fn pair_descriptions() {
        let mut desc = BTreeMap::new();
        desc.insert("ST13SA".to_string(), "Surface Area of LeftInsula".to_string());
        assert_eq!(
            describe_pair("ST129SA-ST13SA", &desc),
            "ST129SA & Surface Area of LeftInsula"
        );
    }

    #[test]
    fn default_grid_shape() {
        let x = array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let y = array![[1.0, 2.0], [0.5, 0.0], [0.0, 1.0]];
        assert_eq!(default_grid(x.view(), y.view(), SolverKind::Tgl).len(), 210);
        assert_eq!(default_grid(x.view(), y.view(), SolverKind::Cfsgl).len(), 210);
    }
}
