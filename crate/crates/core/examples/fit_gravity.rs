//! Gravity-model fit on planted flows: the grid recovers the planted beta.
//!
//!     cargo run --release --example fit_gravity [BETA]

use spatial_interaction::fixture;
use spatial_interaction::geo::DistanceMatrix;
use spatial_interaction::gravity::{fit_pso, residual_split, BetaGrid};
use spatial_interaction::pso::PsoConfig;
use spatial_interaction::stats::pearson;

fn main() -> spatial_interaction::Result<()> {
    let beta: f64 = std::env::args()
        .nth(1)
        .map_or(0.8, |s| s.parse().expect("numeric beta"));
    let cities = fixture::planted_cities(30, 5, 1.5, 1);
    let sizes = fixture::lognormal_sizes(30, 1.0, 1);
    let flows = fixture::planted_flows(&cities, &sizes, beta, 1e4, 0.05, 1)?;
    let d = DistanceMatrix::build(&cities)?;

    let fit = fit_pso(
        &flows,
        &cities,
        &d,
        &BetaGrid::default().values()?,
        &PsoConfig::default(),
        7,
    )?;
    for s in &fit.gof_by_beta {
        let bar = "#".repeat((s.gof.max(0.0) * 50.0) as usize);
        println!("beta {:.1}  gof {:.5}  {bar}", s.beta, s.gof);
    }
    println!(
        "\nplanted beta {beta}, recovered {} (gof {:.5}, k {:.1})",
        fit.model.beta, fit.gof, fit.model.k
    );
    println!(
        "size correlation {:.4}",
        pearson(&fit.model.sizes, &sizes).unwrap_or(f64::NAN)
    );

    let split = residual_split(&fit, &cities)?;
    println!(
        "log residuals: same region {:.4} (n={}), across regions {:.4} (n={})",
        split.intra_mean, split.intra_count, split.inter_mean, split.inter_count
    );
    Ok(())
}
