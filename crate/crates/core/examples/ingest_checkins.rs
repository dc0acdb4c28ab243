//! Check-ins to trips: fake filtering, trajectories, flow aggregation.
//!
//!     cargo run --release --example ingest_checkins

use std::collections::HashSet;
use std::path::Path;

use spatial_interaction::ingest::{
    aggregate_flows, build_trajectories, extract_trips, filter_fakes, DEFAULT_FAKE_THRESHOLD_KM,
};
use spatial_interaction::io;

fn main() -> spatial_interaction::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/fixture");
    let cities = io::read_cities(&dir.join("cities.csv"))?;
    let records = io::read_checkins(&dir.join("checkins.csv"))?;

    let kept = filter_fakes(&records, DEFAULT_FAKE_THRESHOLD_KM)?;
    let known: HashSet<_> = cities.iter().map(|c| c.id.clone()).collect();
    let trajectories = build_trajectories(&kept, &known)?;
    let trips: Vec<_> = trajectories
        .iter()
        .flat_map(|t| extract_trips(t, None))
        .collect();
    let flows = aggregate_flows(&trips)?;

    println!("records      {}", records.len());
    println!("fakes        {}", records.len() - kept.len());
    println!("users        {}", trajectories.len());
    println!("trips        {}", trips.len());
    println!("city pairs   {}", flows.len());

    let mut top: Vec<_> = flows.iter().collect();
    top.sort_by(|a, b| b.2.total_cmp(&a.2));
    println!("\nstrongest flows:");
    for (a, b, w) in top.into_iter().take(5) {
        println!("  {a} - {b}: {w}");
    }
    Ok(())
}
