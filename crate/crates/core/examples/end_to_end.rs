//! The full command-line pipeline, driven in-process:
//! synth -> ingest -> features -> train -> stability -> evaluate -> replay.
//!
//!     cargo run --release --example end_to_end -- [work_dir]

use std::path::PathBuf;

use progression_mtl::cli;

fn progmtl(args: &[&str]) {
    println!("\n$ progmtl {}", args.join(" "));
    let code = cli::run(std::iter::once("progmtl").chain(args.iter().copied()));
    if code != 0 {
        std::process::exit(code);
    }
}

fn main() {
    let root: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("progmtl_end_to_end"));
    let path = |rel: &str| root.join(rel).display().to_string();

    progmtl(&["--seed", "1", "synth", "--subjects", "150", "--rois", "10", "--out", &path("synth")]);
    progmtl(&["ingest", "--input", &path("synth/cohort.csv"), "--out", &path("ingest")]);
    progmtl(&["features", "--dataset", &path("ingest/dataset.json"), "--measure", "cosine", "--out", &path("features")]);
    progmtl(&[
        "train", "--features", &path("features/features.csv"), "--targets", &path("features/targets.csv"),
        "--solver", "cfsgl", "--theta1", "2", "--theta2", "5", "--delta", "10", "--out", &path("train"),
    ]);
    progmtl(&[
        "--seed", "1", "stability", "--features", &path("features/features.csv"), "--targets",
        &path("features/targets.csv"), "--solver", "tgl", "--default-grid", "--subsamples", "10",
        "--out", &path("stability"),
    ]);
    progmtl(&[
        "--seed", "1", "evaluate", "--dataset", &path("ingest/dataset.json"), "--repeats", "5",
        "--theta1", "1", "--theta2", "10", "--delta", "10", "--out", &path("evaluate"),
    ]);
    progmtl(&["replay", "--manifest", &path("evaluate/manifest.json"), "--check"]);
    println!("\nartifacts under {}", root.display());
}
