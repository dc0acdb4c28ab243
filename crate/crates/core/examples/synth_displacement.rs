//! Synthetic trips from a gravity model against planted observed trips.
//!
//!     cargo run --release --example synth_displacement

use spatial_interaction::fixture;
use spatial_interaction::geo::DistanceMatrix;
use spatial_interaction::gravity::GravityModel;
use spatial_interaction::synth::{self, DisplacementSample};

fn main() -> spatial_interaction::Result<()> {
    let cities = fixture::planted_cities(30, 5, 1.5, 2);
    let sizes = fixture::lognormal_sizes(30, 1.0, 2);
    let d = DistanceMatrix::build(&cities)?;
    let n = 200_000;

    let observed =
        DisplacementSample::from_trips(&fixture::planted_trips(&sizes, &d, 0.8, n, 3), &d)?;
    let model = GravityModel {
        beta: 0.8,
        k: 1.0,
        sizes: sizes.clone(),
    };
    let pmf = synth::build_trip_pmf(&model, &d)?;
    let synthetic = DisplacementSample::from_trips(&synth::sample_trips(&pmf, n, 4)?, &d)?;

    let obs = synth::displacement_distribution(&observed, 200.0)?;
    let syn = synth::histogram(synthetic.values(), 200.0, Some(obs.len()))?;
    println!("{:>12} {:>12} {:>12}", "km", "observed", "synthetic");
    for (o, s) in obs.iter().zip(&syn) {
        println!(
            "{:>5.0}-{:<6.0} {:>12.3e} {:>12.3e}",
            o.lo, o.hi, o.density, s.density
        );
    }
    let ks = synth::compare_distributions(&observed, &synthetic)?;
    println!("\nKS D = {:.4}, p = {:.3}", ks.statistic, ks.p_value);
    println!(
        "exponential rate: observed {:.5}/km",
        synth::fit_exponential(&observed, None)?.alpha
    );
    Ok(())
}
