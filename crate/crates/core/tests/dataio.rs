mod common;

use common::cohort_csv;
use progression_mtl::dataio::{
    assemble_longitudinal, clean_cohort, parse_cohort_reader, CleaningRule, ColumnSchema, TargetSpec, VisitCode,
    VisitPair,
};
use progression_mtl::features::compute_trends;
use progression_mtl::synth::{generate_cohort, SynthConfig};
use progression_mtl::Error;

fn schema() -> ColumnSchema {
    ColumnSchema::default()
}

fn m06() -> Vec<TargetSpec> {
    vec![TargetSpec::new("mmse", VisitCode::M06)]
}

type Row = (&'static str, &'static str, &'static str, &'static str, Option<f64>, Vec<Option<f64>>);

fn leak(s: String) -> &'static str {
    Box::leak(s.into_boxed_str())
}

#[test]
fn two_row_cohort() {
    let csv = cohort_csv(
        &["a", "b", "c"],
        &[
            ("S001", "BL", "2010-01-05", "AD", None, vec![Some(1.0), Some(2.0), Some(3.0)]),
            ("S001", "M06", "2010-07-07", "AD", Some(25.0), vec![Some(1.1), None, Some(2.9)]),
        ],
    );
    let c = parse_cohort_reader(csv.as_bytes(), &schema()).unwrap();
    assert_eq!(c.subjects.len(), 1);
    assert_eq!(c.subjects[0].visits.len(), 2);
    assert_eq!(c.roi_names.len(), 3);
    // an empty cell stays missing rather than becoming zero
    assert_eq!(c.subjects[0].visits[1].roi_values[1], None);
}

#[test]
fn duplicate_visit_is_rejected() {
    let csv = cohort_csv(
        &["a"],
        &[
            ("S001", "BL", "2010-01-05", "AD", None, vec![Some(1.0)]),
            ("S001", "BL", "2010-01-06", "AD", None, vec![Some(1.0)]),
        ],
    );
    assert!(matches!(
        parse_cohort_reader(csv.as_bytes(), &schema()),
        Err(Error::DuplicateRecord { .. })
    ));
}

/// Ten subjects with BL and M06 scans; `roi_7` is missing for the first
/// `missing` of them.
fn ten_subjects(missing: usize) -> String {
    let rois: Vec<&str> = (1..=8).map(|i| leak(format!("roi_{i}"))).collect();
    let mut rows: Vec<Row> = Vec::new();
    for s in 0..10 {
        let id = leak(format!("S{s:03}"));
        for (visit, date, scale) in [("BL", "2010-01-01", 1.0), ("M06", "2010-07-01", 0.98)] {
            let vals = (1..=8)
                .map(|r| {
                    if r == 7 && s < missing && visit == "BL" {
                        None
                    } else {
                        Some(scale * (r as f64 + s as f64))
                    }
                })
                .collect();
            let mmse = (visit == "M06").then_some(20.0 + s as f64);
            rows.push((id, visit, date, "MCI", mmse, vals));
        }
    }
    cohort_csv(&rois, &rows)
}

#[test]
fn rule_two_drops_sparse_feature() {
    let c = parse_cohort_reader(ten_subjects(6).as_bytes(), &schema()).unwrap();
    let (clean, report) = clean_cohort(&c, VisitPair::default(), &m06()).unwrap();
    assert_eq!(report.removed_features.len(), 1);
    let f = &report.removed_features[0];
    assert_eq!(f.roi_name, "roi_7");
    assert!((f.missing_fraction - 0.6).abs() < 1e-12);
    assert_eq!(f.rule, CleaningRule::SparseFeature);
    assert!(!clean.roi_names.contains(&"roi_7".to_string()));
    assert_eq!(clean.subjects.len(), 10);
}

#[test]
fn rule_two_threshold_is_strict() {
    // exactly half missing: kept, and the five gaps are imputed
    let c = parse_cohort_reader(ten_subjects(5).as_bytes(), &schema()).unwrap();
    let (clean, report) = clean_cohort(&c, VisitPair::default(), &m06()).unwrap();
    assert!(report.removed_features.is_empty());
    assert!(clean.roi_names.contains(&"roi_7".to_string()));
    assert_eq!(report.imputed_cells, 5);
}

#[test]
fn rule_three_removes_subject_without_baseline() {
    let csv = cohort_csv(
        &["a"],
        &[
            ("S001", "BL", "2010-01-01", "NL", None, vec![Some(1.0)]),
            ("S001", "M06", "2010-07-01", "NL", Some(29.0), vec![Some(1.1)]),
            ("S002", "M06", "2010-07-01", "NL", Some(28.0), vec![Some(1.3)]),
            ("S003", "BL", "2010-01-01", "NL", None, vec![Some(2.0)]),
            ("S003", "M06", "2010-07-01", "NL", Some(27.0), vec![Some(2.1)]),
        ],
    );
    let c = parse_cohort_reader(csv.as_bytes(), &schema()).unwrap();
    let (clean, report) = clean_cohort(&c, VisitPair::default(), &m06()).unwrap();
    assert_eq!(clean.subjects.len(), 2);
    let removed: Vec<_> = report
        .removed_subjects
        .iter()
        .map(|r| (r.subject_id.as_str(), r.rule))
        .collect();
    assert_eq!(removed, vec![("S002", CleaningRule::MissingBaseline)]);
    let json = serde_json::to_string(&report).unwrap();
    assert!(json.contains("\"rule-3\""));
}

#[test]
fn rule_four_imputes_mean() {
    let csv = cohort_csv(
        &["roi_1", "roi_2"],
        &[
            ("S1", "BL", "2010-01-01", "NL", None, vec![Some(1.0), Some(2.0)]),
            ("S1", "M06", "2010-07-01", "NL", Some(29.0), vec![Some(1.0), Some(2.0)]),
            ("S2", "BL", "2010-01-01", "NL", None, vec![Some(1.0), Some(4.0)]),
            ("S2", "M06", "2010-07-01", "NL", Some(28.0), vec![Some(1.0), Some(4.0)]),
            ("S3", "BL", "2010-01-01", "NL", None, vec![Some(1.0), None]),
            ("S3", "M06", "2010-07-01", "NL", Some(27.0), vec![Some(1.0), Some(3.5)]),
        ],
    );
    let c = parse_cohort_reader(csv.as_bytes(), &schema()).unwrap();
    let (clean, report) = clean_cohort(&c, VisitPair::default(), &m06()).unwrap();
    assert_eq!(report.imputed_cells, 1);
    let s3 = clean.subjects.iter().find(|s| s.subject_id == "S3").unwrap();
    assert_eq!(s3.visit(VisitCode::BL).unwrap().roi_values[1], Some(3.0));
    // observed cells are untouched
    let s1 = clean.subjects.iter().find(|s| s.subject_id == "S1").unwrap();
    assert_eq!(s1.visit(VisitCode::BL).unwrap().roi_values, vec![Some(1.0), Some(2.0)]);
}

#[test]
fn rule_five_and_degenerate_cohort() {
    let csv = cohort_csv(
        &["a"],
        &[
            ("S1", "BL", "2010-01-01", "NL", None, vec![Some(1.0)]),
            ("S1", "M06", "2010-07-01", "NL", None, vec![Some(1.1)]),
        ],
    );
    let c = parse_cohort_reader(csv.as_bytes(), &schema()).unwrap();
    assert!(matches!(
        clean_cohort(&c, VisitPair::default(), &m06()),
        Err(Error::DegenerateCohort)
    ));
}

fn synthetic(missing_rate: f64) -> progression_mtl::dataio::Cohort {
    let cfg = SynthConfig {
        n_subjects: 40,
        n_rois: 6,
        k_tasks: 2,
        missing_rate,
        ..SynthConfig::default()
    };
    generate_cohort(&cfg).unwrap().0
}

#[test]
fn cleaning_is_idempotent() {
    let cohort = synthetic(0.15);
    let targets = vec![
        TargetSpec::new("mmse", VisitCode::M06),
        TargetSpec::new("mmse", VisitCode::M12),
    ];
    let (once, r1) = clean_cohort(&cohort, VisitPair::default(), &targets).unwrap();
    assert!(r1.imputed_cells > 0);
    let (twice, r2) = clean_cohort(&once, VisitPair::default(), &targets).unwrap();
    assert_eq!(once, twice);
    assert_eq!(r2.imputed_cells, 0);
    assert!(r2.removed_subjects.is_empty() && r2.removed_features.is_empty());
}

#[test]
fn imputation_preserves_observed_cells() {
    let cohort = synthetic(0.2);
    let (clean, _) = clean_cohort(&cohort, VisitPair::default(), &m06()).unwrap();
    for s in &clean.subjects {
        let orig = cohort.subjects.iter().find(|o| o.subject_id == s.subject_id).unwrap();
        for v in &s.visits {
            let ov = orig.visit(v.visit_code).unwrap();
            for (j, name) in clean.roi_names.iter().enumerate() {
                let oj = cohort.roi_names.iter().position(|n| n == name).unwrap();
                if let Some(x) = ov.roi_values[oj] {
                    assert_eq!(v.roi_values[j], Some(x));
                }
            }
        }
    }
}

#[test]
fn assembly_interval_and_zero_change() {
    let csv = cohort_csv(
        &["a", "b"],
        &[
            ("S2", "BL", "2011-03-01", "AD", None, vec![Some(2.0), Some(3.0)]),
            ("S2", "M06", "2011-08-31", "AD", Some(20.0), vec![Some(2.0), Some(3.0)]),
            ("S1", "BL", "2010-01-01", "AD", None, vec![Some(2.0), Some(3.0)]),
            ("S1", "M06", "2010-07-03", "AD", Some(21.0), vec![Some(1.5), Some(3.3)]),
        ],
    );
    let c = parse_cohort_reader(csv.as_bytes(), &schema()).unwrap();
    let (clean, _) = clean_cohort(&c, VisitPair::default(), &m06()).unwrap();
    let ds = assemble_longitudinal(&clean, VisitPair::default(), &m06()).unwrap();
    assert_eq!(ds.subject_ids, vec!["S1", "S2"]);
    assert_eq!(ds.dt_days, vec![183.0, 183.0]);
    assert_eq!((ds.n_subjects(), ds.n_tasks()), (2, 1));
    let (trends, _) = compute_trends(&ds).unwrap();
    assert!(trends.row(1).iter().all(|t| t.magnitude == 0.0 && t.velocity == 0.0));
}

#[test]
fn assembly_row_count_matches_survivors() {
    let cohort = synthetic(0.1);
    let targets = vec![
        TargetSpec::new("mmse", VisitCode::M06),
        TargetSpec::new("mmse", VisitCode::M12),
    ];
    let (clean, report) = clean_cohort(&cohort, VisitPair::default(), &targets).unwrap();
    let ds = assemble_longitudinal(&clean, VisitPair::default(), &targets).unwrap();
    assert_eq!(ds.n_subjects(), cohort.subjects.len() - report.removed_subjects.len());
    assert_eq!(ds.n_tasks(), 2);
    assert_eq!(ds.target_labels(), vec!["mmse@M06", "mmse@M12"]);
}

#[test]
fn assembly_names_subject_missing_follow_up() {
    let csv = cohort_csv(
        &["a"],
        &[("S9", "BL", "2010-01-01", "AD", Some(22.0), vec![Some(1.0)])],
    );
    let c = parse_cohort_reader(csv.as_bytes(), &schema()).unwrap();
    let err = assemble_longitudinal(&c, VisitPair::default(), &[TargetSpec::new("mmse", VisitCode::BL)]).unwrap_err();
    assert!(matches!(err, Error::Assembly { ref subject, .. } if subject == "S9"), "{err}");
}

#[test]
fn csv_round_trip_is_lossless() {
    let cohort = synthetic(0.1);
    let mut buf = Vec::new();
    cohort.write_csv(&mut buf).unwrap();
    let back = parse_cohort_reader(buf.as_slice(), &cohort.schema()).unwrap();
    assert_eq!(back, cohort);
}
