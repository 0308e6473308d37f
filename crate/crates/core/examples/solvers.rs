//! Fit the four regression formulations on one planted multi-task problem
//! and compare objectives, sparsity and temporal smoothness.
//!
//!     cargo run --example solvers

use ndarray::Array2;
use progression_mtl::features::standardize;
use progression_mtl::solvers::{fit_model, Penalties, SolverConfig, SolverKind, TemporalDifferenceOps};
use progression_mtl::stability::penalty_scales;
use progression_mtl::synth::{generate_regression_instance, row_support};

fn main() -> progression_mtl::Result<()> {
    let inst = generate_regression_instance(150, 40, 4, 6, 5.0, true, 11)?;
    let (x, y, _) = standardize(inst.x.view(), inst.y.view())?;
    let (group_max, l1_max) = penalty_scales(x.view(), y.view());
    println!("true support {:?}", inst.truth.support);
    println!("W = 0 above: group weight {group_max:.1}, l1 weight {l1_max:.1}");

    let h = TemporalDifferenceOps::new(4).h;
    let roughness = |w: &Array2<f64>| w.dot(&h).iter().map(|v| v * v).sum::<f64>().sqrt();
    let runs = [
        (SolverKind::Ridge, Penalties::lambda(10.0)),
        (SolverKind::Lasso, Penalties::lambda(0.2 * l1_max)),
        (SolverKind::Tgl, Penalties::structured(1.0, 50.0, 0.3 * group_max)),
        (SolverKind::Cfsgl, Penalties::structured(0.1 * l1_max, 20.0, 0.2 * group_max)),
    ];
    let config = SolverConfig::default();
    for (kind, p) in runs {
        let fit = fit_model(kind, x.view(), y.view(), &p, &config)?;
        let support = row_support(&fit.w, 1e-8);
        println!(
            "{kind:<6} objective {:>10.3}  iterations {:>4}  active rows {:>2}  ‖WH‖ {:.3}  {}",
            fit.objective(),
            fit.iterations,
            support.len(),
            roughness(&fit.w),
            if support.len() <= 10 { format!("support {support:?}") } else { "dense".into() }
        );
    }
    Ok(())
}
