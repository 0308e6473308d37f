//! Stability selection over a penalty grid on a planted instance: which
//! features survive random half-subsamples, and with what score.
//!
//!     cargo run --release --example stability_selection

use std::collections::BTreeSet;

use progression_mtl::features::standardize;
use progression_mtl::solvers::{Penalties, SolverKind};
use progression_mtl::stability::{penalty_scales, run_stability, StabilityConfig};
use progression_mtl::synth::generate_regression_instance;

fn main() -> progression_mtl::Result<()> {
    let inst = generate_regression_instance(200, 120, 4, 8, 10.0, true, 1)?;
    let (x, y, _) = standardize(inst.x.view(), inst.y.view())?;

    // Group weights spread geometrically between 7.5% and 45% of the
    // zero-solution scale.
    let (group_max, _) = penalty_scales(x.view(), y.view());
    let grid: Vec<Penalties> = (0..10)
        .map(|i| Penalties::structured(0.0, 1.0, group_max * 0.075 * 6f64.powf(i as f64 / 9.0)))
        .collect();
    let config = StabilityConfig {
        solver: SolverKind::Tgl,
        grid,
        n_subsamples: 50,
        threshold: 0.8,
        seed: 1,
        ..StabilityConfig::default()
    };
    println!("{} fits", config.total_fits());
    let report = run_stability(x.view(), y.view(), &config)?;

    let truth: BTreeSet<usize> = inst.truth.support.iter().copied().collect();
    for (label, set) in report.task_labels.iter().zip(&report.stable_set) {
        let shown: Vec<String> = set.iter().map(|f| format!("{}:{:.2}", f.name, f.score)).collect();
        println!("{label}: {}", shown.join(" "));
    }
    let found = report.stable_union();
    println!(
        "recovered {}/{} planted features, {} false positives",
        truth.intersection(&found).count(),
        truth.len(),
        found.difference(&truth).count()
    );
    for pi in [0.6, 0.8, 0.95] {
        println!("  threshold {pi}: {} stable on task 0", report.stable_at(pi, 0).len());
    }
    Ok(())
}
