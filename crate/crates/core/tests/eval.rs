mod common;

use common::*;
use ndarray::{array, Array2, Axis};
use rand::seq::SliceRandom;

use progression_mtl::dataio::{assemble_longitudinal, clean_cohort, PairedDataset};
use progression_mtl::eval::{
    compare_measures, evaluate_matrix, fit_fold, fold_assignments, nmse, per_task_rmse, weighted_r, write_tables_csv,
    ExperimentConfig, FeatureSource, MeanStd, Screening,
};
use progression_mtl::features::{compute_trends, FeatureMode};
use progression_mtl::solvers::{Penalties, SolverKind};
use progression_mtl::stability::StabilityConfig;
use progression_mtl::synth::{generate_cohort, generate_regression_instance, SynthConfig};
use progression_mtl::Error;

fn labels(k: usize) -> Vec<String> {
    (0..k).map(|t| format!("t{t}")).collect()
}

fn ridge(lambda: f64, repeats: usize) -> ExperimentConfig {
    ExperimentConfig {
        solver: SolverKind::Ridge,
        penalties: Penalties::lambda(lambda),
        n_repeats: repeats,
        ..ExperimentConfig::default()
    }
}

fn synth_dataset(n: usize) -> PairedDataset {
    let cfg = SynthConfig {
        n_subjects: n,
        n_rois: 8,
        k_tasks: 3,
        true_support: 4,
        ..SynthConfig::default()
    };
    let (cohort, _) = generate_cohort(&cfg).unwrap();
    let (clean, _) = clean_cohort(&cohort, cfg.span(), &cfg.targets()).unwrap();
    assemble_longitudinal(&clean, cfg.span(), &cfg.targets()).unwrap()
}

#[test]
fn metric_identities() {
    let y = array![[1.0, 4.0], [2.0, 1.0], [4.0, 0.0], [5.0, 3.0]];
    assert_eq!(nmse(y.view(), y.view()).unwrap(), 0.0);
    let means = y.mean_axis(Axis(0)).unwrap();
    let flat = Array2::from_shape_fn(y.dim(), |(_, t)| means[t]);
    // predicting each task's mean costs exactly one unit of its variance per sample
    assert!((nmse(y.view(), flat.view()).unwrap() - 1.0).abs() < 1e-12);
    assert!((weighted_r(y.view(), (&y * 3.0 + 7.0).view()).unwrap() - 1.0).abs() < 1e-12);
    assert!((weighted_r(y.view(), (&y * -0.5).view()).unwrap() + 1.0).abs() < 1e-12);
    let shifted = &y + 2.0;
    assert_eq!(per_task_rmse(y.view(), shifted.view()).unwrap(), vec![2.0, 2.0]);
    let constant = array![[1.0, 2.0], [1.0, 3.0]];
    assert!(matches!(nmse(constant.view(), constant.view()), Err(Error::UndefinedNormalization { task: 0 })));
    assert!(matches!(
        weighted_r(y.view(), flat.view()),
        Err(Error::UndefinedCorrelation { task: 0 })
    ));
}

#[test]
fn metric_oracles_on_random_data() {
    let mut r = rng(3);
    let y = uniform_matrix(&mut r, 30, 3, -2.0, 2.0);
    let p = uniform_matrix(&mut r, 30, 3, -2.0, 2.0);
    let (mut num, mut wr) = (0.0, 0.0);
    for t in 0..3 {
        let (a, b) = (y.column(t), p.column(t));
        let m = a.mean().unwrap();
        let var = a.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 30.0;
        num += (&a - &b).mapv(|v| v * v).sum() / var;
        let mb = b.mean().unwrap();
        let cov: f64 = a.iter().zip(b.iter()).map(|(x, z)| (x - m) * (z - mb)).sum();
        let sb: f64 = b.iter().map(|z| (z - mb).powi(2)).sum();
        wr += cov / (var * 30.0 * sb).sqrt() * 30.0;
    }
    assert!((nmse(y.view(), p.view()).unwrap() - num / 90.0).abs() < 1e-12);
    assert!((weighted_r(y.view(), p.view()).unwrap() - wr / 90.0).abs() < 1e-12);
}

#[test]
fn mean_std_uses_sample_deviation() {
    let s = MeanStd::of(&[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(s.mean, 2.5);
    assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
    assert_eq!(MeanStd::of(&[0.7]).std, 0.0);
    assert_eq!(MeanStd { mean: 0.7431, std: 0.06 }.formatted(), "0.743±0.060");
}

#[test]
fn folds_are_balanced_and_seeded() {
    let f = fold_assignments(23, 5, 0, 1);
    let mut sizes = [0; 5];
    f.iter().for_each(|&g| sizes[g] += 1);
    assert!(sizes.iter().all(|&s| s == 4 || s == 5));
    assert_eq!(f, fold_assignments(23, 5, 0, 1));
    assert_ne!(f, fold_assignments(23, 5, 1, 1));
}

#[test]
fn noiseless_planted_model_is_predicted_well() {
    let inst = generate_regression_instance(150, 10, 3, 4, f64::INFINITY, true, 1).unwrap();
    let table = evaluate_matrix(inst.x.view(), inst.y.view(), &labels(3), "planted", &ridge(1e-3, 3)).unwrap();
    assert!(table.nmse().mean < 0.05, "{:?}", table.nmse());
    assert!(table.wr().mean > 0.99, "{:?}", table.wr());
}

#[test]
fn single_repeat_has_zero_spread() {
    let inst = generate_regression_instance(60, 5, 2, 3, 5.0, true, 2).unwrap();
    let table = evaluate_matrix(inst.x.view(), inst.y.view(), &labels(2), "one", &ridge(1.0, 1)).unwrap();
    assert_eq!(table.nmse().std, 0.0);
    assert_eq!(table.wr().std, 0.0);
    assert!(table.per_task_rmse.iter().all(|r| r.value.std == 0.0));
    assert_eq!(table.n_repeats, 1);
}

#[test]
fn permuted_targets_carry_no_signal() {
    let inst = generate_regression_instance(120, 8, 3, 4, 5.0, true, 3).unwrap();
    let mut order: Vec<usize> = (0..120).collect();
    order.shuffle(&mut rng(3));
    let y = inst.y.select(Axis(0), &order);
    let table = evaluate_matrix(inst.x.view(), y.view(), &labels(3), "null", &ridge(10.0, 30)).unwrap();
    assert!(table.wr().mean.abs() < 0.15, "{:?}", table.wr());
    assert!(table.nmse().mean > 0.9);
}

#[test]
fn test_rows_do_not_leak_into_fold_statistics() {
    let inst = generate_regression_instance(80, 12, 2, 3, 5.0, true, 4).unwrap();
    let train: Vec<usize> = (0..60).collect();
    let mut cfg = ridge(1.0, 1);
    cfg.solver = SolverKind::Tgl;
    cfg.penalties = Penalties::structured(0.5, 1.0, 0.5);
    cfg.screening = Some(Screening {
        target_count: 6,
        stability: StabilityConfig {
            solver: SolverKind::Tgl,
            n_subsamples: 4,
            ..StabilityConfig::default()
        },
        global: false,
    });
    cfg.inner_grid = Some(vec![Penalties::structured(0.1, 1.0, 0.1), Penalties::structured(1.0, 1.0, 2.0)]);
    let clean = fit_fold(inst.x.view(), inst.y.view(), &train, &cfg, None, &[7]).unwrap();

    let (mut x, mut y) = (inst.x.clone(), inst.y.clone());
    x.slice_mut(ndarray::s![60.., ..]).fill(1e6);
    y.slice_mut(ndarray::s![60.., ..]).fill(-1e6);
    let poisoned = fit_fold(x.view(), y.view(), &train, &cfg, None, &[7]).unwrap();
    assert_eq!(clean, poisoned);
}

#[test]
fn mahalanobis_covariance_uses_training_rows_only() {
    let ds = synth_dataset(60);
    let (trends, _) = compute_trends(&ds).unwrap();
    let train: Vec<usize> = (0..45).collect();
    let source = FeatureSource::Mahalanobis {
        trends: trends.clone(),
        roi_names: &ds.roi_names,
    };
    let before = source.matrix_for(&train).unwrap().to_owned();

    let mut poisoned = trends;
    for mut row in poisoned.axis_iter_mut(Axis(0)).skip(45) {
        row.iter_mut().for_each(|t| {
            t.magnitude *= 1e3;
            t.velocity *= -1e3;
        });
    }
    let source = FeatureSource::Mahalanobis {
        trends: poisoned,
        roi_names: &ds.roi_names,
    };
    let after = source.matrix_for(&train).unwrap().to_owned();
    assert_eq!(before.select(Axis(0), &train), after.select(Axis(0), &train));
}

#[test]
fn identical_inputs_give_identical_tables() {
    let inst = generate_regression_instance(60, 6, 2, 3, 5.0, true, 5).unwrap();
    let cfg = ridge(1.0, 4);
    let a = evaluate_matrix(inst.x.view(), inst.y.view(), &labels(2), "a", &cfg).unwrap();
    let b = evaluate_matrix(inst.x.view(), inst.y.view(), &labels(2), "b", &cfg).unwrap();
    assert_eq!(a.rows, b.rows);
    assert_eq!(a.repeats, b.repeats);
    let mut csv = Vec::new();
    write_tables_csv(&mut csv, &[&a, &b]).unwrap();
    let text = String::from_utf8(csv).unwrap();
    for line in text.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells[1], cells[2], "{line}");
    }
}

#[test]
fn compare_measures_gives_one_table_per_mode() {
    let ds = synth_dataset(60);
    let cfg = ExperimentConfig {
        n_repeats: 2,
        penalties: Penalties::structured(1.0, 1.0, 1.0),
        ..ExperimentConfig::default()
    };
    let tables = compare_measures(&ds, &cfg, &FeatureMode::ALL).unwrap();
    let names: Vec<&str> = tables.iter().map(|t| t.label.as_str()).collect();
    assert_eq!(names, vec!["original", "mahalanobis", "euclidean", "cosine"]);
    for t in &tables {
        assert_eq!(t.per_task_rmse.len(), 3);
        assert!(t.nmse().mean.is_finite() && t.wr().mean.is_finite());
    }
}

#[test]
fn too_many_folds_is_a_config_error() {
    let inst = generate_regression_instance(9, 3, 1, 1, 5.0, true, 6).unwrap();
    let cfg = ExperimentConfig {
        n_folds: 5,
        ..ridge(1.0, 1)
    };
    assert!(matches!(
        evaluate_matrix(inst.x.view(), inst.y.view(), &labels(1), "x", &cfg),
        Err(Error::Config(_))
    ));
}
