//! Longitudinal cohort ingestion, cleaning and paired-scan assembly.
//!
//! The input is a wide CSV with one row per subject visit. Cleaning applies
//! five rules in a fixed order:
//!
//! 1. drop subjects whose span scans failed QC (`qc_pass` column, optional);
//! 2. drop ROI features missing for more than half of the subjects;
//! 3. drop subjects without a baseline scan;
//! 4. mean-impute remaining missing ROI cells, per feature and visit;
//! 5. drop subjects without the follow-up scan or any target score.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DxGroup {
    AD,
    MCI,
    NL,
    Unknown,
}

impl DxGroup {
    pub fn parse(s: &str) -> Self {
        match s.trim().to_ascii_uppercase().as_str() {
            "AD" | "DEMENTIA" => DxGroup::AD,
            "MCI" | "LMCI" | "EMCI" => DxGroup::MCI,
            "NL" | "CN" => DxGroup::NL,
            _ => DxGroup::Unknown,
        }
    }
}

impl fmt::Display for DxGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DxGroup::AD => "AD",
            DxGroup::MCI => "MCI",
            DxGroup::NL => "NL",
            DxGroup::Unknown => "Unknown",
        })
    }
}

/// Visit codes, in months since baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VisitCode {
    BL,
    M06,
    M12,
    M24,
    M36,
}

impl VisitCode {
    pub const ALL: [VisitCode; 5] = [
        VisitCode::BL,
        VisitCode::M06,
        VisitCode::M12,
        VisitCode::M24,
        VisitCode::M36,
    ];

    pub fn months(self) -> u32 {
        match self {
            VisitCode::BL => 0,
            VisitCode::M06 => 6,
            VisitCode::M12 => 12,
            VisitCode::M24 => 24,
            VisitCode::M36 => 36,
        }
    }
}

impl fmt::Display for VisitCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VisitCode::BL => "BL",
            VisitCode::M06 => "M06",
            VisitCode::M12 => "M12",
            VisitCode::M24 => "M24",
            VisitCode::M36 => "M36",
        })
    }
}

impl FromStr for VisitCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "BL" | "M0" | "M00" => Ok(VisitCode::BL),
            "M6" | "M06" => Ok(VisitCode::M06),
            "M12" => Ok(VisitCode::M12),
            "M24" => Ok(VisitCode::M24),
            "M36" => Ok(VisitCode::M36),
            other => Err(Error::Config(format!("unknown visit code `{other}`"))),
        }
    }
}

/// Baseline plus one follow-up visit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisitPair {
    pub baseline: VisitCode,
    pub follow: VisitCode,
}

impl VisitPair {
    pub fn new(follow: VisitCode) -> Result<Self> {
        if follow == VisitCode::BL {
            return Err(Error::Config("follow-up visit must differ from BL".into()));
        }
        Ok(Self {
            baseline: VisitCode::BL,
            follow,
        })
    }

    pub fn contains(&self, code: VisitCode) -> bool {
        code == self.baseline || code == self.follow
    }
}

impl Default for VisitPair {
    fn default() -> Self {
        Self {
            baseline: VisitCode::BL,
            follow: VisitCode::M06,
        }
    }
}

impl fmt::Display for VisitPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.baseline, self.follow)
    }
}

impl FromStr for VisitPair {
    type Err = Error;

    /// Accepts `BL-M06`, `BL:M06` or just the follow-up code.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(['-', ':', ',']).collect();
        match parts.as_slice() {
            [follow] => VisitPair::new(follow.parse()?),
            [bl, follow] => {
                if bl.parse::<VisitCode>()? != VisitCode::BL {
                    return Err(Error::Config(format!("span `{s}` must start at BL")));
                }
                VisitPair::new(follow.parse()?)
            }
            _ => Err(Error::Config(format!("cannot parse span `{s}`"))),
        }
    }
}

/// A cognitive score observed at one visit, used as one regression task.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TargetSpec {
    pub score: String,
    pub visit: VisitCode,
}

impl TargetSpec {
    pub fn new(score: impl Into<String>, visit: VisitCode) -> Self {
        Self {
            score: score.into(),
            visit,
        }
    }

    /// One task per visit code for a single score, BL through `last`.
    pub fn series(score: &str, last: VisitCode) -> Vec<TargetSpec> {
        VisitCode::ALL
            .iter()
            .filter(|v| **v <= last)
            .map(|v| TargetSpec::new(score, *v))
            .collect()
    }

    pub fn label(&self) -> String {
        format!("{}@{}", self.score, self.visit)
    }
}

impl FromStr for TargetSpec {
    type Err = Error;

    /// Parses `score@VISIT`, e.g. `mmse@M12`.
    fn from_str(s: &str) -> Result<Self> {
        let (score, visit) = s
            .split_once('@')
            .ok_or_else(|| Error::Config(format!("target `{s}` must look like score@VISIT")))?;
        Ok(TargetSpec::new(score.trim(), visit.parse()?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Visit {
    pub visit_code: VisitCode,
    pub scan_date: NaiveDate,
    pub qc_pass: bool,
    /// One entry per cohort ROI; `None` marks a missing cell.
    pub roi_values: Vec<Option<f64>>,
    pub scores: BTreeMap<String, f64>,
}

impl Visit {
    fn has_scan(&self) -> bool {
        self.roi_values.iter().any(Option::is_some)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub dx_group: DxGroup,
    /// Sorted by scan date; visit codes unique.
    pub visits: Vec<Visit>,
}

impl SubjectRecord {
    pub fn visit(&self, code: VisitCode) -> Option<&Visit> {
        self.visits.iter().find(|v| v.visit_code == code)
    }

    fn visit_mut(&mut self, code: VisitCode) -> Option<&mut Visit> {
        self.visits.iter_mut().find(|v| v.visit_code == code)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    /// Ascending by subject id.
    pub subjects: Vec<SubjectRecord>,
    pub roi_names: Vec<String>,
    pub score_names: Vec<String>,
}

/// Column layout of a cohort CSV, usually loaded from a JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnSchema {
    pub subject_id: String,
    pub visit: String,
    pub scan_date: String,
    pub dx: String,
    /// Optional QC column; when absent from the file every row passes.
    pub qc: Option<String>,
    pub scores: Vec<String>,
    /// ROI columns; `None` takes every column not claimed above.
    pub rois: Option<Vec<String>>,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        Self {
            subject_id: "subject_id".into(),
            visit: "visit".into(),
            scan_date: "scan_date".into(),
            dx: "dx".into(),
            qc: Some("qc_pass".into()),
            scores: vec!["mmse".into()],
            rois: None,
        }
    }
}

impl ColumnSchema {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn is_missing(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c.eq_ignore_ascii_case("na") || c.eq_ignore_ascii_case("nan")
}

fn parse_bool(cell: &str, line: u64) -> Result<bool> {
    match cell.trim().to_ascii_lowercase().as_str() {
        "" | "1" | "true" | "pass" | "yes" | "y" => Ok(true),
        "0" | "false" | "fail" | "no" | "n" => Ok(false),
        other => Err(Error::Parse {
            line,
            message: format!("bad qc flag `{other}`"),
        }),
    }
}

fn parse_number(cell: &str, column: &str, line: u64) -> Result<Option<f64>> {
    if is_missing(cell) {
        return Ok(None);
    }
    cell.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .map(Some)
        .ok_or_else(|| Error::Parse {
            line,
            message: format!("column `{column}`: `{cell}` is not a number"),
        })
}

/// Read a cohort CSV from disk.
pub fn parse_cohort(path: &Path, schema: &ColumnSchema) -> Result<Cohort> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_cohort_reader(file, schema)
}

pub fn parse_cohort_reader<R: Read>(reader: R, schema: &ColumnSchema) -> Result<Cohort> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let col = |name: &str| header.iter().position(|h| h == name);
    let require = |name: &str| col(name).ok_or_else(|| Error::MissingColumn(name.to_string()));

    let c_subject = require(&schema.subject_id)?;
    let c_visit = require(&schema.visit)?;
    let c_date = require(&schema.scan_date)?;
    let c_dx = require(&schema.dx)?;
    let c_qc = schema.qc.as_deref().and_then(col);
    let score_cols = schema
        .scores
        .iter()
        .map(|s| require(s).map(|c| (s.clone(), c)))
        .collect::<Result<Vec<_>>>()?;

    let roi_names: Vec<String> = match &schema.rois {
        Some(list) => list.clone(),
        None => {
            let mut claimed: BTreeSet<&str> = [
                schema.subject_id.as_str(),
                schema.visit.as_str(),
                schema.scan_date.as_str(),
                schema.dx.as_str(),
            ]
            .into_iter()
            .collect();
            if let Some(q) = &schema.qc {
                claimed.insert(q);
            }
            claimed.extend(schema.scores.iter().map(String::as_str));
            header.iter().filter(|h| !claimed.contains(h.as_str())).cloned().collect()
        }
    };
    let roi_cols = roi_names.iter().map(|r| require(r)).collect::<Result<Vec<_>>>()?;
    let mut seen = BTreeSet::new();
    for r in &roi_names {
        if r.is_empty() || !seen.insert(r) {
            return Err(Error::Config(format!("ROI name `{r}` is empty or repeated")));
        }
    }

    let mut subjects: BTreeMap<String, SubjectRecord> = BTreeMap::new();
    for (idx, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| Error::Parse {
            line: e.position().map_or(idx as u64 + 2, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(idx as u64 + 2, |p| p.line());
        let field = |c: usize| row.get(c).unwrap_or("");

        let subject_id = field(c_subject).to_string();
        if subject_id.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty subject id".into(),
            });
        }
        let visit_code: VisitCode = field(c_visit).parse().map_err(|e: Error| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let raw_date = field(c_date);
        let scan_date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d").map_err(|_| Error::Date {
            line,
            value: raw_date.to_string(),
        })?;
        let qc_pass = match c_qc {
            Some(c) => parse_bool(field(c), line)?,
            None => true,
        };
        let mut scores = BTreeMap::new();
        for (name, c) in &score_cols {
            if let Some(v) = parse_number(field(*c), name, line)? {
                if name.eq_ignore_ascii_case("mmse") && !(0.0..=30.0).contains(&v) {
                    return Err(Error::Parse {
                        line,
                        message: format!("MMSE {v} outside [0, 30]"),
                    });
                }
                scores.insert(name.clone(), v);
            }
        }
        let roi_values = roi_cols
            .iter()
            .zip(&roi_names)
            .map(|(c, name)| parse_number(field(*c), name, line))
            .collect::<Result<Vec<_>>>()?;

        let dx = DxGroup::parse(field(c_dx));
        let record = subjects.entry(subject_id.clone()).or_insert_with(|| SubjectRecord {
            subject_id: subject_id.clone(),
            dx_group: dx,
            visits: Vec::new(),
        });
        if record.visit(visit_code).is_some() {
            return Err(Error::DuplicateRecord {
                subject: subject_id,
                visit: visit_code.to_string(),
            });
        }
        if record.dx_group == DxGroup::Unknown {
            record.dx_group = dx;
        }
        record.visits.push(Visit {
            visit_code,
            scan_date,
            qc_pass,
            roi_values,
            scores,
        });
    }

    let subjects = subjects
        .into_values()
        .map(|mut s| {
            s.visits.sort_by_key(|v| (v.scan_date, v.visit_code));
            s
        })
        .collect();
    Ok(Cohort {
        subjects,
        roi_names,
        score_names: schema.scores.clone(),
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl Cohort {
    /// Schema matching what [`Cohort::write_csv`] emits.
    pub fn schema(&self) -> ColumnSchema {
        ColumnSchema {
            scores: self.score_names.clone(),
            rois: Some(self.roi_names.clone()),
            ..ColumnSchema::default()
        }
    }

    /// Wide CSV in the layout [`parse_cohort`] reads back losslessly.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let schema = self.schema();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![
            schema.subject_id.clone(),
            schema.visit.clone(),
            schema.scan_date.clone(),
            schema.dx.clone(),
            "qc_pass".to_string(),
        ];
        header.extend(self.score_names.iter().cloned());
        header.extend(self.roi_names.iter().cloned());
        w.write_record(&header)?;
        for s in &self.subjects {
            for v in &s.visits {
                let mut rec = vec![
                    s.subject_id.clone(),
                    v.visit_code.to_string(),
                    v.scan_date.format("%Y-%m-%d").to_string(),
                    s.dx_group.to_string(),
                    if v.qc_pass { "1" } else { "0" }.to_string(),
                ];
                rec.extend(self.score_names.iter().map(|n| fmt_opt(v.scores.get(n).copied())));
                rec.extend(v.roi_values.iter().map(|x| fmt_opt(*x)));
                w.write_record(&rec)?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

/// The five cleaning rules, serialized as `rule-1` … `rule-5`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CleaningRule {
    #[serde(rename = "rule-1")]
    FailedQc,
    #[serde(rename = "rule-2")]
    SparseFeature,
    #[serde(rename = "rule-3")]
    MissingBaseline,
    #[serde(rename = "rule-4")]
    MeanImputation,
    #[serde(rename = "rule-5")]
    IncompleteFollowUp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRemoval {
    pub subject_id: String,
    pub rule: CleaningRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRemoval {
    pub roi_name: String,
    pub missing_fraction: f64,
    pub rule: CleaningRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputedCell {
    pub subject_id: String,
    pub visit: VisitCode,
    pub roi_name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CleaningReport {
    pub removed_subjects: Vec<SubjectRemoval>,
    pub removed_features: Vec<FeatureRemoval>,
    pub imputed_cells: usize,
    pub imputations: Vec<ImputedCell>,
}

/// Fraction of subjects above which a feature is dropped (strictly greater).
pub const MAX_MISSING_FRACTION: f64 = 0.5;

/// Apply the five cleaning rules for one visit span.
///
/// `targets` lists the scores required by rule 5; the follow-up scan of
/// `span` is always required.
pub fn clean_cohort(cohort: &Cohort, span: VisitPair, targets: &[TargetSpec]) -> Result<(Cohort, CleaningReport)> {
    let mut report = CleaningReport::default();
    let mut subjects: Vec<SubjectRecord> = Vec::with_capacity(cohort.subjects.len());

    // rule 1
    for s in &cohort.subjects {
        let failed = s
            .visits
            .iter()
            .any(|v| span.contains(v.visit_code) && !v.qc_pass);
        if failed {
            report.removed_subjects.push(SubjectRemoval {
                subject_id: s.subject_id.clone(),
                rule: CleaningRule::FailedQc,
            });
        } else {
            subjects.push(s.clone());
        }
    }

    // rule 2
    let r = cohort.roi_names.len();
    let mut keep = vec![true; r];
    if !subjects.is_empty() {
        for (f, keep_f) in keep.iter_mut().enumerate() {
            let missing = subjects
                .iter()
                .filter(|s| {
                    let span_visits: Vec<&Visit> =
                        s.visits.iter().filter(|v| span.contains(v.visit_code)).collect();
                    span_visits.is_empty() || span_visits.iter().any(|v| v.roi_values[f].is_none())
                })
                .count();
            let fraction = missing as f64 / subjects.len() as f64;
            if fraction > MAX_MISSING_FRACTION {
                *keep_f = false;
                report.removed_features.push(FeatureRemoval {
                    roi_name: cohort.roi_names[f].clone(),
                    missing_fraction: fraction,
                    rule: CleaningRule::SparseFeature,
                });
            }
        }
    }
    let roi_names: Vec<String> = cohort
        .roi_names
        .iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(n, _)| n.clone())
        .collect();
    for s in subjects.iter_mut() {
        for v in s.visits.iter_mut() {
            v.roi_values = v
                .roi_values
                .iter()
                .zip(&keep)
                .filter(|(_, k)| **k)
                .map(|(x, _)| *x)
                .collect();
        }
    }

    // rule 3
    subjects.retain(|s| {
        let ok = s.visit(span.baseline).is_some_and(Visit::has_scan);
        if !ok {
            report.removed_subjects.push(SubjectRemoval {
                subject_id: s.subject_id.clone(),
                rule: CleaningRule::MissingBaseline,
            });
        }
        ok
    });

    // rule 4: per-feature, per-visit means over the subjects retained so far
    for code in [span.baseline, span.follow] {
        for f in 0..roi_names.len() {
            let present: Vec<f64> = subjects
                .iter()
                .filter_map(|s| s.visit(code).and_then(|v| v.roi_values[f]))
                .collect();
            if present.is_empty() {
                continue;
            }
            let mean = present.iter().sum::<f64>() / present.len() as f64;
            for s in subjects.iter_mut() {
                let id = s.subject_id.clone();
                if let Some(v) = s.visit_mut(code) {
                    if v.roi_values[f].is_none() {
                        v.roi_values[f] = Some(mean);
                        report.imputations.push(ImputedCell {
                            subject_id: id,
                            visit: code,
                            roi_name: roi_names[f].clone(),
                            value: mean,
                        });
                    }
                }
            }
        }
    }
    report.imputed_cells = report.imputations.len();

    // rule 5
    subjects.retain(|s| {
        let ok = s.visit(span.follow).is_some_and(Visit::has_scan)
            && targets
                .iter()
                .all(|t| s.visit(t.visit).is_some_and(|v| v.scores.contains_key(&t.score)));
        if !ok {
            report.removed_subjects.push(SubjectRemoval {
                subject_id: s.subject_id.clone(),
                rule: CleaningRule::IncompleteFollowUp,
            });
        }
        ok
    });

    if subjects.is_empty() {
        return Err(Error::DegenerateCohort);
    }
    Ok((
        Cohort {
            subjects,
            roi_names,
            score_names: cohort.score_names.clone(),
        },
        report,
    ))
}

/// Baseline/follow-up ROI matrices and targets for complete subjects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedDataset {
    pub span: VisitPair,
    pub subject_ids: Vec<String>,
    pub dx_groups: Vec<DxGroup>,
    pub roi_names: Vec<String>,
    pub targets_spec: Vec<TargetSpec>,
    #[serde(with = "crate::matrix_serde")]
    pub baseline: Array2<f64>,
    #[serde(with = "crate::matrix_serde")]
    pub follow: Array2<f64>,
    pub dt_days: Vec<f64>,
    #[serde(with = "crate::matrix_serde")]
    pub targets: Array2<f64>,
}

impl PairedDataset {
    pub fn n_subjects(&self) -> usize {
        self.subject_ids.len()
    }

    pub fn n_tasks(&self) -> usize {
        self.targets.ncols()
    }

    pub fn target_labels(&self) -> Vec<String> {
        self.targets_spec.iter().map(TargetSpec::label).collect()
    }

    /// Rows `idx` of every per-subject field, in the given order.
    pub fn select(&self, idx: &[usize]) -> PairedDataset {
        let rows = |m: &Array2<f64>| m.select(ndarray::Axis(0), idx);
        PairedDataset {
            span: self.span,
            subject_ids: idx.iter().map(|&i| self.subject_ids[i].clone()).collect(),
            dx_groups: idx.iter().map(|&i| self.dx_groups[i]).collect(),
            roi_names: self.roi_names.clone(),
            targets_spec: self.targets_spec.clone(),
            baseline: rows(&self.baseline),
            follow: rows(&self.follow),
            dt_days: idx.iter().map(|&i| self.dt_days[i]).collect(),
            targets: rows(&self.targets),
        }
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Assemble the paired-scan dataset, subjects in ascending id order.
pub fn assemble_longitudinal(cohort: &Cohort, span: VisitPair, targets: &[TargetSpec]) -> Result<PairedDataset> {
    if targets.is_empty() {
        return Err(Error::Config("at least one target is required".into()));
    }
    let r = cohort.roi_names.len();
    let mut order: Vec<&SubjectRecord> = cohort.subjects.iter().collect();
    order.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));
    let n = order.len();
    let mut baseline = Array2::zeros((n, r));
    let mut follow = Array2::zeros((n, r));
    let mut ys = Array2::zeros((n, targets.len()));
    let mut dt_days = Vec::with_capacity(n);

    for (i, s) in order.iter().enumerate() {
        let fail = |message: String| Error::Assembly {
            subject: s.subject_id.clone(),
            message,
        };
        let bl = s
            .visit(span.baseline)
            .ok_or_else(|| fail(format!("no {} visit", span.baseline)))?;
        let fu = s
            .visit(span.follow)
            .ok_or_else(|| fail(format!("no {} visit", span.follow)))?;
        for f in 0..r {
            baseline[[i, f]] = bl.roi_values[f]
                .ok_or_else(|| fail(format!("missing {} at {}", cohort.roi_names[f], span.baseline)))?;
            follow[[i, f]] = fu.roi_values[f]
                .ok_or_else(|| fail(format!("missing {} at {}", cohort.roi_names[f], span.follow)))?;
        }
        let dt = (fu.scan_date - bl.scan_date).num_days() as f64;
        if dt <= 0.0 {
            return Err(fail(format!("follow-up scan {dt} days after baseline")));
        }
        dt_days.push(dt);
        for (j, t) in targets.iter().enumerate() {
            ys[[i, j]] = s
                .visit(t.visit)
                .and_then(|v| v.scores.get(&t.score).copied())
                .ok_or_else(|| fail(format!("missing target {}", t.label())))?;
        }
    }

    Ok(PairedDataset {
        span,
        subject_ids: order.iter().map(|s| s.subject_id.clone()).collect(),
        dx_groups: order.iter().map(|s| s.dx_group).collect(),
        roi_names: cohort.roi_names.clone(),
        targets_spec: targets.to_vec(),
        baseline,
        follow,
        dt_days,
        targets: ys,
    })
}
