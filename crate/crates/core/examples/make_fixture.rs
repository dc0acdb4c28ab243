//! Regenerates the bundled 30-city fixture in `data/fixture/`.
//!
//! Cities sit around five regional centres; trips follow a gravity model with
//! beta = 0.8. `checkins.csv` holds the raw stream (with fake and repeat
//! records), `flows.csv` the noise-free expected flows.
//!
//!     cargo run --release --example make_fixture [OUT_DIR]

use std::path::PathBuf;

use spatial_interaction::fixture::{self, CheckInPlan};
use spatial_interaction::geo::Location;
use spatial_interaction::io;

const SEED: u64 = 2013;
const BETA: f64 = 0.8;

fn main() -> spatial_interaction::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/fixture"));
    std::fs::create_dir_all(&out).expect("create output directory");

    // five decimals (about a metre) keep the files small
    let round = |x: f64| (x * 1e5).round() / 1e5;
    let mut cities = fixture::planted_cities(30, 5, 1.5, SEED);
    for c in &mut cities {
        c.location = Location::new(round(c.location.lat), round(c.location.lon))?;
    }
    let sizes = fixture::lognormal_sizes(30, 1.0, SEED);
    let plan = CheckInPlan {
        users: 1500,
        visits_per_user: 25,
        fake_rate: 0.05,
        repeat_rate: 0.1,
    };
    let mut checkins = fixture::planted_checkins(&cities, &sizes, BETA, &plan, SEED)?;
    for r in &mut checkins {
        r.actual_location =
            Location::new(round(r.actual_location.lat), round(r.actual_location.lon))?;
    }
    let flows = fixture::planted_flows(&cities, &sizes, BETA, 1e4, 0.0, SEED)?;

    io::write_cities(&out.join("cities.csv"), &cities)?;
    io::write_checkins(&out.join("checkins.csv"), &checkins)?;
    io::write_flows(&out.join("flows.csv"), &flows)?;
    println!(
        "{} cities, {} check-ins, {} flow pairs -> {}",
        cities.len(),
        checkins.len(),
        flows.len(),
        out.display()
    );
    Ok(())
}
