//! Synthetic cohorts and regression instances with known ground truth.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{Duration, NaiveDate};
use ndarray::{Array2, Axis};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataio::{Cohort, DxGroup, SubjectRecord, TargetSpec, Visit, VisitCode, VisitPair};
use crate::error::{Error, Result};
use crate::features::{
    build_pair_features, enumerate_pairs, pair_column, pair_count, pair_name, ScalingStats, SimilarityMeasure,
    TrendMatrix, TrendVector, DAYS_PER_MONTH,
};
use crate::rng::{self, StreamRng};

/// Score column written by [`generate_cohort`].
pub const SCORE_NAME: &str = "mmse";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_subjects: usize,
    pub n_rois: usize,
    /// Tasks are the score at M06, M12, … (at most 4).
    pub k_tasks: usize,
    /// Number of planted ROI pairs, ignored when `support_pairs` is set.
    pub true_support: usize,
    pub support_pairs: Option<Vec<(usize, usize)>>,
    pub noise_sigma: f64,
    /// Mean relative change per ROI between baseline and follow-up; one
    /// value per ROI, or empty for the built-in alternating pattern.
    pub temporal_drift: Vec<f64>,
    /// Spread of each subject's relative change around the ROI mean.
    pub drift_spread: f64,
    /// Correlation between the changes of the two ROIs of a planted pair.
    pub pair_coupling: f64,
    /// Fraction of span ROI cells blanked uniformly at random.
    pub missing_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_subjects: 300,
            n_rois: 20,
            k_tasks: 4,
            true_support: 6,
            support_pairs: None,
            noise_sigma: 0.5,
            temporal_drift: Vec::new(),
            drift_spread: 0.03,
            pair_coupling: 0.3,
            missing_rate: 0.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let d = pair_count(self.n_rois);
        if self.n_rois < 2 {
            return Err(Error::Config("need at least 2 ROIs".into()));
        }
        if self.n_subjects < 4 {
            return Err(Error::Config("need at least 4 subjects".into()));
        }
        if !(1..=4).contains(&self.k_tasks) {
            return Err(Error::Config(format!(
                "k_tasks must be 1..=4 (M06 through M36), got {}",
                self.k_tasks
            )));
        }
        let support = self.support_pairs.as_ref().map_or(self.true_support, Vec::len);
        if support > d {
            return Err(Error::Config(format!(
                "support of {support} pairs exceeds the {d} available"
            )));
        }
        if let Some(pairs) = &self.support_pairs {
            let mut seen = BTreeSet::new();
            for &(a, b) in pairs {
                let (a, b) = (a.min(b), a.max(b));
                if a == b || b >= self.n_rois || !seen.insert((a, b)) {
                    return Err(Error::Config(format!("invalid support pair ({a}, {b})")));
                }
            }
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::Config("noise_sigma must be non-negative".into()));
        }
        if !self.temporal_drift.is_empty() && self.temporal_drift.len() != self.n_rois {
            return Err(Error::Config("temporal_drift needs one slope per ROI".into()));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return Err(Error::Config("missing_rate must lie in [0, 1)".into()));
        }
        if !(-1.0..=1.0).contains(&self.pair_coupling) || !(self.drift_spread >= 0.0) {
            return Err(Error::Config("pair_coupling must lie in [-1, 1], drift_spread >= 0".into()));
        }
        Ok(())
    }

    pub fn targets(&self) -> Vec<TargetSpec> {
        VisitCode::ALL[1..=self.k_tasks]
            .iter()
            .map(|&v| TargetSpec::new(SCORE_NAME, v))
            .collect()
    }

    pub fn span(&self) -> VisitPair {
        VisitPair::default()
    }
}

/// Planted model behind a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// `d × k`; rows outside `support` are zero.
    #[serde(with = "crate::matrix_serde")]
    pub w_true: Array2<f64>,
    pub support: Vec<usize>,
    pub support_names: Vec<String>,
    pub noise_sigma: f64,
    /// Score offset added to the linear signal (cohorts only).
    pub intercept: f64,
    /// Generating trend vectors, `n × r` each (cohorts only).
    #[serde(with = "crate::matrix_serde")]
    pub magnitudes: Array2<f64>,
    #[serde(with = "crate::matrix_serde")]
    pub velocities: Array2<f64>,
    /// Scores that had to be clamped into the valid range.
    pub clamped_scores: usize,
}

impl GroundTruth {
    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn normal(rng: &mut StreamRng) -> f64 {
    StandardNormal.sample(rng)
}

/// Row-sparse weights: support rows start at ±U(0.5, 1.5); with `smooth`
/// each later task adds a small random-walk step, otherwise every entry is
/// drawn independently.
fn planted_weights(d: usize, k: usize, support: &[usize], smooth: bool, rng: &mut StreamRng) -> Array2<f64> {
    let mut w = Array2::zeros((d, k));
    for &f in support {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let mut v = sign * rng.random_range(0.5..1.5);
        for t in 0..k {
            if t > 0 {
                v = if smooth {
                    v + 0.1 * normal(rng)
                } else {
                    let s = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                    s * rng.random_range(0.5..1.5)
                };
            }
            w[[f, t]] = v;
        }
    }
    w
}

/// Synthetic longitudinal cohort whose scores depend linearly on the
/// standardized cosine similarity of planted ROI pairs.
///
/// Each subject has a BL and an M06 scan. Every ROI changes by a relative
/// amount drawn around its drift; the two ROIs of a planted pair change in
/// a correlated way. Scores at M06 … M36 are `intercept + X_cos W + noise`.
pub fn generate_cohort(config: &SynthConfig) -> Result<(Cohort, GroundTruth)> {
    config.validate()?;
    let (n, r, k) = (config.n_subjects, config.n_rois, config.k_tasks);
    let d = pair_count(r);
    let mut rng = rng::stream(config.seed, &[rng::TAG_SYNTH, 1]);

    let roi_names: Vec<String> = (0..r).map(|j| format!("ROI{:03}", j + 1)).collect();
    let bases: Vec<f64> = (0..r).map(|_| rng.random_range(2.0..6.0)).collect();
    let drift: Vec<f64> = if config.temporal_drift.is_empty() {
        (0..r).map(|j| if j % 2 == 0 { -0.02 } else { 0.01 }).collect()
    } else {
        config.temporal_drift.clone()
    };

    let support_pairs: Vec<(usize, usize)> = match &config.support_pairs {
        Some(p) => p.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect(),
        None => {
            let mut cols = sample(&mut rng, d, config.true_support).into_vec();
            cols.sort_unstable();
            let all = enumerate_pairs(r);
            cols.into_iter().map(|c| (all[c].a, all[c].b)).collect()
        }
    };
    let mut support: Vec<usize> = support_pairs.iter().map(|&(a, b)| pair_column(a, b, r)).collect();
    support.sort_unstable();
    let partner: BTreeMap<usize, usize> = support_pairs.iter().map(|&(a, b)| (b, a)).collect();

    // Relative changes; the second ROI of a planted pair leans on the first.
    let rho = config.pair_coupling;
    let mut rel = Array2::zeros((n, r));
    let mut baseline = Array2::zeros((n, r));
    let mut dt = Vec::with_capacity(n);
    for i in 0..n {
        dt.push(rng.random_range(150.0_f64..215.0).round());
        for j in 0..r {
            baseline[[i, j]] = bases[j] * (1.0 + 0.05 * normal(&mut rng));
            rel[[i, j]] = normal(&mut rng);
        }
        for j in 0..r {
            if let Some(&a) = partner.get(&j) {
                rel[[i, j]] = rho * rel[[i, a]] + (1.0 - rho * rho).sqrt() * rel[[i, j]];
            }
        }
        for j in 0..r {
            rel[[i, j]] = drift[j] + config.drift_spread * rel[[i, j]];
        }
    }
    let follow = &baseline * &rel.mapv(|m| 1.0 + m);

    let mut trends: TrendMatrix = Array2::from_elem((n, r), TrendVector::default());
    for i in 0..n {
        for j in 0..r {
            let (bl, fu) = (baseline[[i, j]], follow[[i, j]]);
            trends[[i, j]] = TrendVector::new((fu - bl) / bl, (fu - bl) / (dt[i] / DAYS_PER_MONTH));
        }
    }
    let x = build_pair_features(&trends, SimilarityMeasure::Cosine, &roi_names)?.values;
    let y0 = Array2::<f64>::zeros((n, k));
    let xs = ScalingStats::fit(x.view(), y0.view())?.apply_x(x.view());
    let w_true = planted_weights(d, k, &support, true, &mut rng);

    let intercept = 15.0;
    let mut scores = xs.dot(&w_true);
    scores.mapv_inplace(|v| v + intercept);
    for v in scores.iter_mut() {
        *v += config.noise_sigma * normal(&mut rng);
    }
    let mut clamped = 0;
    scores.mapv_inplace(|v| {
        if !(0.0..=30.0).contains(&v) {
            clamped += 1;
        }
        v.clamp(0.0, 30.0)
    });

    let epoch = NaiveDate::from_ymd_opt(2006, 1, 1).expect("valid date");
    let targets = config.targets();
    let mut subjects = Vec::with_capacity(n);
    for i in 0..n {
        let bl_date = epoch + Duration::days(rng.random_range(0..730));
        let dx = [DxGroup::NL, DxGroup::MCI, DxGroup::AD][rng.random_range(0..3)];
        let cells = |row: ndarray::ArrayView1<f64>, rng: &mut StreamRng| -> Vec<Option<f64>> {
            row.iter()
                .map(|&v| (config.missing_rate == 0.0 || !rng.random_bool(config.missing_rate)).then_some(v))
                .collect()
        };
        let bl_values = cells(baseline.row(i), &mut rng);
        let fu_values = cells(follow.row(i), &mut rng);
        let mut visits = vec![Visit {
            visit_code: VisitCode::BL,
            scan_date: bl_date,
            qc_pass: true,
            roi_values: bl_values,
            scores: BTreeMap::new(),
        }];
        for (t, spec) in targets.iter().enumerate() {
            let code = spec.visit;
            let (date, roi_values) = if code == VisitCode::M06 {
                (bl_date + Duration::days(dt[i] as i64), fu_values.clone())
            } else {
                let days = (code.months() as f64 * DAYS_PER_MONTH).round() as i64;
                (bl_date + Duration::days(days), vec![None; r])
            };
            visits.push(Visit {
                visit_code: code,
                scan_date: date,
                qc_pass: true,
                roi_values,
                scores: [(SCORE_NAME.to_string(), scores[[i, t]])].into(),
            });
        }
        subjects.push(SubjectRecord {
            subject_id: format!("SYN{:05}", i + 1),
            dx_group: dx,
            visits,
        });
    }

    let pairs = enumerate_pairs(r);
    let truth = GroundTruth {
        support_names: support.iter().map(|&c| pair_name(&roi_names, &pairs[c])).collect(),
        w_true,
        support,
        noise_sigma: config.noise_sigma,
        intercept,
        magnitudes: trends.mapv(|t| t.magnitude),
        velocities: trends.mapv(|t| t.velocity),
        clamped_scores: clamped,
    };
    Ok((
        Cohort {
            subjects,
            roi_names,
            score_names: vec![SCORE_NAME.to_string()],
        },
        truth,
    ))
}

/// Gaussian design with a planted row-sparse model.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionInstance {
    pub x: Array2<f64>,
    pub y: Array2<f64>,
    pub truth: GroundTruth,
}

/// `X` standard normal, `Y = X W_true + noise` with noise variance
/// `Var(X W_true) / snr`. `snr = ∞` gives noiseless targets; an empty
/// support gives unit-variance pure noise.
pub fn generate_regression_instance(
    n: usize,
    d: usize,
    k: usize,
    support_size: usize,
    snr: f64,
    smooth: bool,
    seed: u64,
) -> Result<RegressionInstance> {
    if support_size > d {
        return Err(Error::Config(format!("support of {support_size} exceeds d = {d}")));
    }
    if n == 0 || d == 0 || k == 0 || !(snr > 0.0) {
        return Err(Error::Config("n, d, k and snr must be positive".into()));
    }
    let mut rng = rng::stream(seed, &[rng::TAG_SYNTH, 2]);
    let x = Array2::from_shape_simple_fn((n, d), || normal(&mut rng));
    let mut support = sample(&mut rng, d, support_size).into_vec();
    support.sort_unstable();
    let w_true = planted_weights(d, k, &support, smooth, &mut rng);
    let signal = x.dot(&w_true);
    let sigma = if support_size == 0 {
        1.0
    } else if snr.is_infinite() {
        0.0
    } else {
        let m = signal.mean().unwrap_or(0.0);
        let var = signal.iter().map(|v| (v - m).powi(2)).sum::<f64>() / signal.len() as f64;
        (var / snr).sqrt()
    };
    let noise = Array2::from_shape_simple_fn((n, k), || sigma * normal(&mut rng));
    let y = &signal + &noise;
    Ok(RegressionInstance {
        x,
        y,
        truth: GroundTruth {
            support_names: support.iter().map(|f| format!("f{f}")).collect(),
            w_true,
            support,
            noise_sigma: sigma,
            intercept: 0.0,
            magnitudes: Array2::zeros((0, 0)),
            velocities: Array2::zeros((0, 0)),
            clamped_scores: 0,
        },
    })
}

/// Rows of `w` with any nonzero entry.
pub fn row_support(w: &Array2<f64>, eps: f64) -> Vec<usize> {
    w.axis_iter(Axis(0))
        .enumerate()
        .filter(|(_, r)| r.iter().any(|v| v.abs() > eps))
        .map(|(f, _)| f)
        .collect()
}
