//! Temporal trend vectors and pairwise spatial-similarity design matrices.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::PairedDataset;
use crate::error::{Error, Result};

/// Mean Gregorian month in days.
pub const DAYS_PER_MONTH: f64 = 30.4375;

/// Norm below which a trend carries no direction.
const ZERO_NORM: f64 = 1e-12;

/// Change of one biomarker between two visits: relative magnitude and
/// signed velocity per month.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrendVector {
    pub magnitude: f64,
    pub velocity: f64,
}

impl TrendVector {
    pub fn new(magnitude: f64, velocity: f64) -> Self {
        Self { magnitude, velocity }
    }

    pub fn norm(&self) -> f64 {
        self.magnitude.hypot(self.velocity)
    }

    pub fn dot(&self, other: &TrendVector) -> f64 {
        self.magnitude * other.magnitude + self.velocity * other.velocity
    }

    fn sub(&self, other: &TrendVector) -> (f64, f64) {
        (self.magnitude - other.magnitude, self.velocity - other.velocity)
    }
}

pub fn trend_vector(x_bl: f64, x_follow: f64, dt_days: f64) -> Result<TrendVector> {
    if !(dt_days > 0.0) {
        return Err(Error::NonPositiveInterval(dt_days));
    }
    if x_bl == 0.0 {
        return Err(Error::ZeroBaseline);
    }
    let change = x_follow - x_bl;
    Ok(TrendVector::new(change / x_bl, change / (dt_days / DAYS_PER_MONTH)))
}

/// Cosine of the angle between two trends; 0 when either has no direction.
pub fn cosine_similarity(u: &TrendVector, v: &TrendVector) -> f64 {
    let (nu, nv) = (u.norm(), v.norm());
    if nu < ZERO_NORM || nv < ZERO_NORM {
        return 0.0;
    }
    (u.dot(v) / (nu * nv)).clamp(-1.0, 1.0)
}

pub fn euclidean_distance(u: &TrendVector, v: &TrendVector) -> f64 {
    let (a, b) = u.sub(v);
    a.hypot(b)
}

/// Symmetric 2×2 covariance over (magnitude, velocity).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cov2 {
    pub mm: f64,
    pub mv: f64,
    pub vv: f64,
}

impl Cov2 {
    pub fn identity() -> Self {
        Self {
            mm: 1.0,
            mv: 0.0,
            vv: 1.0,
        }
    }

    pub fn diag(mm: f64, vv: f64) -> Self {
        Self { mm, mv: 0.0, vv }
    }

    /// Adds `1e-6·trace/2` to the diagonal.
    pub fn regularized(&self) -> Self {
        let ridge = 1e-6 * (self.mm + self.vv) / 2.0;
        Self {
            mm: self.mm + ridge,
            mv: self.mv,
            vv: self.vv + ridge,
        }
    }

    fn inverse(&self) -> Result<Cov2> {
        let det = self.mm * self.vv - self.mv * self.mv;
        if !(self.mm > 0.0) || !(det > 0.0) || !det.is_finite() {
            return Err(Error::Covariance(format!("{self:?}")));
        }
        Ok(Cov2 {
            mm: self.vv / det,
            mv: -self.mv / det,
            vv: self.mm / det,
        })
    }
}

/// `sqrt((u−v)ᵀ cov⁻¹ (u−v))`; `cov` is used as given.
pub fn mahalanobis_distance(u: &TrendVector, v: &TrendVector, cov: &Cov2) -> Result<f64> {
    let inv = cov.inverse()?;
    Ok(mahalanobis_with_inverse(u, v, &inv))
}

fn mahalanobis_with_inverse(u: &TrendVector, v: &TrendVector, inv: &Cov2) -> f64 {
    let (a, b) = u.sub(v);
    (a * a * inv.mm + 2.0 * a * b * inv.mv + b * b * inv.vv).max(0.0).sqrt()
}

/// Trend vectors per subject (rows) and ROI (columns).
pub type TrendMatrix = Array2<TrendVector>;

/// Trend vectors for every subject and ROI of a paired dataset.
///
/// A zero baseline value has no relative change; those cells become
/// `(0, velocity)` and are counted in the second return value.
pub fn compute_trends(dataset: &PairedDataset) -> Result<(TrendMatrix, usize)> {
    let (n, r) = dataset.baseline.dim();
    let mut zero_baselines = 0;
    let mut out = Array2::from_elem((n, r), TrendVector::default());
    for i in 0..n {
        let dt = dataset.dt_days[i];
        for f in 0..r {
            let (bl, fu) = (dataset.baseline[[i, f]], dataset.follow[[i, f]]);
            out[[i, f]] = match trend_vector(bl, fu, dt) {
                Ok(t) => t,
                Err(Error::ZeroBaseline) => {
                    zero_baselines += 1;
                    TrendVector::new(0.0, (fu - bl) / (dt / DAYS_PER_MONTH))
                }
                Err(e) => {
                    return Err(Error::Assembly {
                        subject: dataset.subject_ids[i].clone(),
                        message: e.to_string(),
                    })
                }
            };
        }
    }
    if zero_baselines > 0 {
        log::warn!("{zero_baselines} zero baseline values mapped to (0, velocity) trends");
    }
    Ok((out, zero_baselines))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimilarityMeasure {
    Cosine,
    Euclidean,
    Mahalanobis,
}

/// How subjects become feature rows: raw baseline ROI values, or one
/// similarity per ROI pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    Original,
    Mahalanobis,
    Euclidean,
    Cosine,
}

impl FeatureMode {
    pub const ALL: [FeatureMode; 4] = [
        FeatureMode::Original,
        FeatureMode::Mahalanobis,
        FeatureMode::Euclidean,
        FeatureMode::Cosine,
    ];

    pub fn measure(self) -> Option<SimilarityMeasure> {
        match self {
            FeatureMode::Original => None,
            FeatureMode::Cosine => Some(SimilarityMeasure::Cosine),
            FeatureMode::Euclidean => Some(SimilarityMeasure::Euclidean),
            FeatureMode::Mahalanobis => Some(SimilarityMeasure::Mahalanobis),
        }
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            FeatureMode::Original => "original",
            FeatureMode::Cosine => "cosine",
            FeatureMode::Euclidean => "euclidean",
            FeatureMode::Mahalanobis => "mahalanobis",
        })
    }
}

impl FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "original" | "roi" => Ok(FeatureMode::Original),
            "cosine" | "cs" => Ok(FeatureMode::Cosine),
            "euclidean" | "ed" => Ok(FeatureMode::Euclidean),
            "mahalanobis" | "md" => Ok(FeatureMode::Mahalanobis),
            other => Err(Error::Config(format!("unknown measure `{other}`"))),
        }
    }
}

/// Column of the unordered ROI pair `(a, b)`, `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairIndex {
    pub a: usize,
    pub b: usize,
    pub column: usize,
}

pub fn pair_count(r: usize) -> usize {
    r * r.saturating_sub(1) / 2
}

/// Column of pair `(a, b)` in lexicographic enumeration over `r` ROIs.
pub fn pair_column(a: usize, b: usize, r: usize) -> usize {
    debug_assert!(a < b && b < r);
    a * (2 * r - a - 1) / 2 + (b - a - 1)
}

pub fn enumerate_pairs(r: usize) -> Vec<PairIndex> {
    let mut out = Vec::with_capacity(pair_count(r));
    for a in 0..r {
        for b in a + 1..r {
            out.push(PairIndex {
                a,
                b,
                column: out.len(),
            });
        }
    }
    out
}

pub fn pair_name(roi_names: &[String], p: &PairIndex) -> String {
    format!("{}-{}", roi_names[p.a], roi_names[p.b])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ColumnMeta {
    Pair { a: usize, b: usize },
    Roi { index: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub values: Array2<f64>,
    pub column_meta: Vec<ColumnMeta>,
    pub column_names: Vec<String>,
    pub standardization: Option<ScalingStats>,
}

impl DesignMatrix {
    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.ncols()
    }

    /// Keep only the listed columns, in the listed order.
    pub fn select_columns(&self, cols: &[usize]) -> DesignMatrix {
        DesignMatrix {
            values: self.values.select(Axis(1), cols),
            column_meta: cols.iter().map(|&c| self.column_meta[c]).collect(),
            column_names: cols.iter().map(|&c| self.column_names[c].clone()).collect(),
            standardization: None,
        }
    }
}

/// Per-ROI first and second moments of trend vectors, enough to form the
/// pooled covariance of any ROI pair in O(1).
#[derive(Debug, Clone, PartialEq)]
pub struct PairCovariance {
    n: usize,
    means: Vec<(f64, f64)>,
    scatter: Vec<Cov2>,
}

impl PairCovariance {
    pub fn estimate(trends: &TrendMatrix) -> Result<Self> {
        let (n, r) = trends.dim();
        if n < 2 {
            return Err(Error::InsufficientData(
                "covariance estimation needs at least 2 subjects".into(),
            ));
        }
        let mut means = Vec::with_capacity(r);
        let mut scatter = Vec::with_capacity(r);
        for col in trends.axis_iter(Axis(1)) {
            let mm = col.iter().map(|t| t.magnitude).sum::<f64>() / n as f64;
            let mv = col.iter().map(|t| t.velocity).sum::<f64>() / n as f64;
            let mut s = Cov2 {
                mm: 0.0,
                mv: 0.0,
                vv: 0.0,
            };
            for t in col.iter() {
                let (a, b) = (t.magnitude - mm, t.velocity - mv);
                s.mm += a * a;
                s.mv += a * b;
                s.vv += b * b;
            }
            means.push((mm, mv));
            scatter.push(s);
        }
        Ok(Self { n, means, scatter })
    }

    /// Population covariance of the 2n pooled trend vectors of ROIs `a`, `b`.
    pub fn pair(&self, a: usize, b: usize) -> Cov2 {
        let n = self.n as f64;
        let (ma, mb) = (self.means[a], self.means[b]);
        let mu = ((ma.0 + mb.0) / 2.0, (ma.1 + mb.1) / 2.0);
        let (sa, sb) = (self.scatter[a], self.scatter[b]);
        let between = |m: (f64, f64)| {
            let (x, y) = (m.0 - mu.0, m.1 - mu.1);
            (x * x, x * y, y * y)
        };
        let (ba, bb) = (between(ma), between(mb));
        let total = 2.0 * n;
        Cov2 {
            mm: (sa.mm + sb.mm + n * (ba.0 + bb.0)) / total,
            mv: (sa.mv + sb.mv + n * (ba.1 + bb.1)) / total,
            vv: (sa.vv + sb.vv + n * (ba.2 + bb.2)) / total,
        }
    }
}

/// Pairwise similarity design matrix, with Mahalanobis covariances
/// estimated from `trends` itself.
pub fn build_pair_features(
    trends: &TrendMatrix,
    measure: SimilarityMeasure,
    roi_names: &[String],
) -> Result<DesignMatrix> {
    let cov = match measure {
        SimilarityMeasure::Mahalanobis => Some(PairCovariance::estimate(trends)?),
        _ => None,
    };
    build_pair_features_with(trends, measure, roi_names, cov.as_ref())
}

/// Same as [`build_pair_features`] but Mahalanobis covariances come from
/// `cov` (typically estimated on training subjects only).
pub fn build_pair_features_with(
    trends: &TrendMatrix,
    measure: SimilarityMeasure,
    roi_names: &[String],
    cov: Option<&PairCovariance>,
) -> Result<DesignMatrix> {
    let (n, r) = trends.dim();
    if r < 2 {
        return Err(Error::Dimension(format!("need at least 2 ROIs, got {r}")));
    }
    if roi_names.len() != r {
        return Err(Error::Dimension(format!(
            "{} ROI names for {r} trend columns",
            roi_names.len()
        )));
    }
    let pairs = enumerate_pairs(r);
    let inverses: Option<Vec<Cov2>> = match measure {
        SimilarityMeasure::Mahalanobis => {
            let cov = cov.ok_or_else(|| Error::Config("Mahalanobis needs a covariance estimate".into()))?;
            Some(
                pairs
                    .iter()
                    .map(|p| {
                        cov.pair(p.a, p.b).regularized().inverse().map_err(|_| {
                            Error::Covariance(format!(
                                "pair {} has a degenerate covariance",
                                pair_name(roi_names, p)
                            ))
                        })
                    })
                    .collect::<Result<_>>()?,
            )
        }
        _ => None,
    };

    let mut values = Array2::zeros((n, pairs.len()));
    values
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(trends.axis_iter(Axis(0)).into_par_iter())
        .for_each(|(mut out, row)| {
            for p in &pairs {
                let (u, v) = (&row[p.a], &row[p.b]);
                out[p.column] = match measure {
                    SimilarityMeasure::Cosine => cosine_similarity(u, v),
                    SimilarityMeasure::Euclidean => euclidean_distance(u, v),
                    SimilarityMeasure::Mahalanobis => {
                        let inv = &inverses.as_ref().expect("inverses computed above")[p.column];
                        mahalanobis_with_inverse(u, v, inv)
                    }
                };
            }
        });

    Ok(DesignMatrix {
        values,
        column_meta: pairs.iter().map(|p| ColumnMeta::Pair { a: p.a, b: p.b }).collect(),
        column_names: pairs.iter().map(|p| pair_name(roi_names, p)).collect(),
        standardization: None,
    })
}

/// Baseline ROI values as features (the no-similarity reference mode).
pub fn original_features(dataset: &PairedDataset) -> DesignMatrix {
    DesignMatrix {
        values: dataset.baseline.clone(),
        column_meta: (0..dataset.roi_names.len())
            .map(|index| ColumnMeta::Roi { index })
            .collect(),
        column_names: dataset.roi_names.clone(),
        standardization: None,
    }
}

/// Feature matrix for any mode, with Mahalanobis statistics from `dataset`.
pub fn build_features(dataset: &PairedDataset, mode: FeatureMode) -> Result<DesignMatrix> {
    match mode.measure() {
        None => Ok(original_features(dataset)),
        Some(m) => {
            let (trends, _) = compute_trends(dataset)?;
            build_pair_features(&trends, m, &dataset.roi_names)
        }
    }
}

/// Column statistics needed to standardize new rows and to map
/// predictions back to target units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingStats {
    pub x_mean: Vec<f64>,
    /// Population standard deviation; 1 for constant columns.
    pub x_std: Vec<f64>,
    pub x_constant: Vec<bool>,
    pub y_mean: Vec<f64>,
    pub std_convention: String,
}

impl ScalingStats {
    pub fn fit(x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<Self> {
        let n = x.nrows();
        if n < 2 || y.nrows() != n {
            return Err(Error::InsufficientData(format!(
                "standardization needs at least 2 matching rows (X {}, Y {})",
                n,
                y.nrows()
            )));
        }
        let x_mean = x.mean_axis(Axis(0)).expect("n >= 2");
        let mut x_std = Vec::with_capacity(x.ncols());
        let mut x_constant = Vec::with_capacity(x.ncols());
        for (j, col) in x.axis_iter(Axis(1)).enumerate() {
            let m = x_mean[j];
            let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64;
            let sd = var.sqrt();
            let constant = sd <= 1e-12 * m.abs().max(1.0);
            x_constant.push(constant);
            x_std.push(if constant { 1.0 } else { sd });
        }
        Ok(Self {
            x_mean: x_mean.to_vec(),
            x_std,
            x_constant,
            y_mean: y.mean_axis(Axis(0)).expect("n >= 2").to_vec(),
            std_convention: "population".into(),
        })
    }

    pub fn apply_x(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            if self.x_constant[j] {
                col.fill(0.0);
            } else {
                let (m, s) = (self.x_mean[j], self.x_std[j]);
                col.mapv_inplace(|v| (v - m) / s);
            }
        }
        out
    }

    pub fn apply_y(&self, y: ArrayView2<f64>) -> Array2<f64> {
        &y - &Array1::from(self.y_mean.clone())
    }

    /// Map centered predictions back to target units.
    pub fn restore_y(&self, y: ArrayView2<f64>) -> Array2<f64> {
        &y + &Array1::from(self.y_mean.clone())
    }

    /// Inverse of [`ScalingStats::apply_x`] on non-constant columns.
    pub fn restore_x(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            let (m, s) = (self.x_mean[j], self.x_std[j]);
            col.mapv_inplace(|v| v * s + m);
        }
        out
    }
}

/// Z-score X columns and center Y columns.
pub fn standardize(x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<(Array2<f64>, Array2<f64>, ScalingStats)> {
    let stats = ScalingStats::fit(x, y)?;
    Ok((stats.apply_x(x), stats.apply_y(y), stats))
}
