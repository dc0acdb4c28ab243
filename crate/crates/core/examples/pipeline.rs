//! The full command-line pipeline on the bundled fixture, driven in-process.
//!
//!     cargo run --release --example pipeline [OUT_DIR]

use std::path::Path;

fn main() {
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/fixture");
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "pipeline-out".into());
    let args = [
        "spatial-interaction".to_string(),
        "pipeline".into(),
        "--cities".into(),
        fixture.join("cities.csv").display().to_string(),
        "--checkins".into(),
        fixture.join("checkins.csv").display().to_string(),
        "--seed".into(),
        "2013".into(),
        "--out-dir".into(),
        out,
    ];
    std::process::exit(spatial_interaction::cli::main_with_args(args));
}
