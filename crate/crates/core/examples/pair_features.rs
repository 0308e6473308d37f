//! Build the four design matrices (original ROI values and the three
//! pairwise trend similarities) from a paired dataset.
//!
//!     cargo run --example pair_features

use progression_mtl::dataio::{assemble_longitudinal, clean_cohort};
use progression_mtl::features::{
    build_features, compute_trends, cosine_similarity, euclidean_distance, pair_count, FeatureMode,
};
use progression_mtl::synth::{generate_cohort, SynthConfig};

fn main() -> progression_mtl::Result<()> {
    let config = SynthConfig {
        n_subjects: 100,
        n_rois: 10,
        seed: 5,
        ..SynthConfig::default()
    };
    let (cohort, _) = generate_cohort(&config)?;
    let (clean, _) = clean_cohort(&cohort, config.span(), &config.targets())?;
    let ds = assemble_longitudinal(&clean, config.span(), &config.targets())?;

    let (trends, _) = compute_trends(&ds)?;
    let (u, v) = (&trends[[0, 0]], &trends[[0, 1]]);
    println!("subject {}: trend of {} = ({:+.4}, {:+.6}/day)", ds.subject_ids[0], ds.roi_names[0], u.magnitude, u.velocity);
    println!(
        "  vs {}: cosine {:+.4}, euclidean {:.5}",
        ds.roi_names[1],
        cosine_similarity(u, v),
        euclidean_distance(u, v)
    );

    println!("{} ROIs -> {} pair columns", ds.roi_names.len(), pair_count(ds.roi_names.len()));
    for mode in FeatureMode::ALL {
        let dm = build_features(&ds, mode)?;
        let first: Vec<&str> = dm.column_names.iter().take(3).map(String::as_str).collect();
        println!("{mode:<12} {:>4} x {:<4} first columns {first:?}", dm.n_rows(), dm.n_cols());
    }
    Ok(())
}
