//! Repeated 5-fold cross-validation comparing the four feature modes, laid
//! out as one mean±std column per mode.
//!
//!     cargo run --release --example evaluate_measures

use progression_mtl::dataio::{assemble_longitudinal, clean_cohort};
use progression_mtl::eval::{compare_measures, write_tables_csv, ExperimentConfig};
use progression_mtl::features::FeatureMode;
use progression_mtl::solvers::{Penalties, SolverKind};
use progression_mtl::synth::{generate_cohort, SynthConfig};

fn main() -> progression_mtl::Result<()> {
    let synth = SynthConfig {
        n_subjects: 200,
        n_rois: 12,
        seed: 8,
        ..SynthConfig::default()
    };
    let (cohort, _) = generate_cohort(&synth)?;
    let (clean, _) = clean_cohort(&cohort, synth.span(), &synth.targets())?;
    let ds = assemble_longitudinal(&clean, synth.span(), &synth.targets())?;

    let config = ExperimentConfig {
        n_folds: 5,
        n_repeats: 10,
        seed: 8,
        solver: SolverKind::Tgl,
        penalties: Penalties::structured(1.0, 10.0, 10.0),
        ..ExperimentConfig::default()
    };
    let tables = compare_measures(&ds, &config, &FeatureMode::ALL)?;
    let refs: Vec<_> = tables.iter().collect();
    write_tables_csv(std::io::stdout().lock(), &refs)?;

    let best = tables
        .iter()
        .min_by(|a, b| a.nmse().mean.total_cmp(&b.nmse().mean))
        .expect("four tables");
    println!("\nlowest nMSE: {} ({})", best.label, best.nmse().formatted());
    Ok(())
}
