//! Two populations with the same aggregate displacement law but opposite
//! individual behaviour.
//!
//!     cargo run --release --example ecological_twins

use spatial_interaction::stats::ks_two_sample;
use spatial_interaction::synth::{
    ecological_twins, fit_exponential, mean_user_variance, DisplacementSample,
};

fn main() -> spatial_interaction::Result<()> {
    let twins = ecological_twins(10_000, 20, 0.002, 1)?;
    let a = twins.varied_aggregate();
    let b = twins.fixed_aggregate();
    let ks = ks_two_sample(&a, &b)?;
    println!(
        "aggregate KS D = {:.4} over {} displacements each",
        ks.statistic,
        a.len()
    );
    println!(
        "alpha A = {:.5}, alpha B = {:.5}",
        fit_exponential(&DisplacementSample::new(a)?, None)?.alpha,
        fit_exponential(&DisplacementSample::new(b)?, None)?.alpha
    );
    println!(
        "mean per-user variance: A = {:.0} km^2, B = {}",
        mean_user_variance(&twins.varied),
        mean_user_variance(&twins.fixed)
    );
    Ok(())
}
