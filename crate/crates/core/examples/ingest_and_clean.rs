//! Parse a cohort CSV, apply the cleaning rules and assemble the paired
//! baseline/follow-up dataset used by every later stage.
//!
//!     cargo run --example ingest_and_clean

use progression_mtl::dataio::{assemble_longitudinal, clean_cohort, parse_cohort_reader, TargetSpec, VisitCode, VisitPair};
use progression_mtl::synth::{generate_cohort, SynthConfig};

fn main() -> progression_mtl::Result<()> {
    // A synthetic cohort with gaps stands in for a real export.
    let config = SynthConfig {
        n_subjects: 60,
        n_rois: 8,
        k_tasks: 2,
        missing_rate: 0.08,
        seed: 3,
        ..SynthConfig::default()
    };
    let (cohort, _) = generate_cohort(&config)?;
    let mut csv = Vec::new();
    cohort.write_csv(&mut csv)?;

    let parsed = parse_cohort_reader(csv.as_slice(), &cohort.schema())?;
    println!("parsed {} subjects, {} ROI columns", parsed.subjects.len(), parsed.roi_names.len());

    let span = VisitPair::new(VisitCode::M06)?;
    let targets = vec![
        TargetSpec::new("mmse", VisitCode::M06),
        TargetSpec::new("mmse", VisitCode::M12),
    ];
    let (clean, report) = clean_cohort(&parsed, span, &targets)?;
    println!(
        "cleaning: {} subjects removed, {} ROI features removed, {} cells imputed",
        report.removed_subjects.len(),
        report.removed_features.len(),
        report.imputed_cells
    );
    for f in &report.removed_features {
        println!("  dropped {} ({:.0}% missing)", f.roi_name, 100.0 * f.missing_fraction);
    }
    for cell in report.imputations.iter().take(5) {
        println!("  imputed {} {:?} {} = {:.4}", cell.subject_id, cell.visit, cell.roi_name, cell.value);
    }

    let ds = assemble_longitudinal(&clean, span, &targets)?;
    println!(
        "paired dataset: {} subjects x {} ROIs, tasks {:?}",
        ds.n_subjects(),
        ds.roi_names.len(),
        ds.target_labels()
    );
    let mean_dt = ds.dt_days.iter().sum::<f64>() / ds.dt_days.len() as f64;
    println!("mean scan interval {mean_dt:.1} days");
    Ok(())
}
