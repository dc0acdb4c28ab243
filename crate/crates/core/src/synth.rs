//! Monte Carlo trip synthesis and displacement-distribution tools.

use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::Serialize;

use crate::geo::DistanceMatrix;
use crate::gravity::GravityModel;
use crate::stats::{ks_two_sample, KsResult};
use crate::{seed, Error, Result};

/// Trip-count chunk handled by one random substream.
const SAMPLE_CHUNK: usize = 1 << 16;

pub const DEFAULT_BIN_WIDTH_KM: f64 = 100.0;

/// Strictly positive, finite displacements in kilometres.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisplacementSample(Vec<f64>);

impl DisplacementSample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::invalid(format!(
                "displacement must be positive and finite, got {bad}"
            )));
        }
        Ok(DisplacementSample(values))
    }

    /// One displacement per trip.
    pub fn from_trips(trips: &[(usize, usize)], d: &DistanceMatrix) -> Result<Self> {
        Self::new(trips.iter().map(|&(i, j)| d.get(i, j)).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Probability of a trip on each unordered pair, proportional to the gravity
/// weight `S_i * S_j * d_ij^-beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct TripPmf {
    pairs: Vec<(usize, usize)>,
    probs: Vec<f64>,
}

impl TripPmf {
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, i: usize, j: usize) -> Option<f64> {
        let key = (i.min(j), i.max(j));
        self.pairs.binary_search(&key).ok().map(|k| self.probs[k])
    }
}

pub fn build_trip_pmf(m: &GravityModel, d: &DistanceMatrix) -> Result<TripPmf> {
    let n = d.len();
    if m.sizes.len() != n {
        return Err(Error::invalid(
            "model sizes and distance matrix disagree on city count",
        ));
    }
    let mut pairs = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    let mut weights = Vec::with_capacity(pairs.capacity());
    for i in 0..n {
        for j in (i + 1)..n {
            let dist = d.get(i, j);
            if !(dist > 0.0) {
                return Err(Error::ZeroDistance(i.to_string(), j.to_string()));
            }
            pairs.push((i, j));
            weights.push(m.sizes[i] * m.sizes[j] * dist.powf(-m.beta));
        }
    }
    let z: f64 = weights.iter().sum();
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::degenerate("trip weights do not normalize"));
    }
    let probs = weights.into_iter().map(|w| w / z).collect();
    Ok(TripPmf { pairs, probs })
}

/// Draws `n_trips` i.i.d. pairs from `pmf`.
///
/// Chunks of trips use independent substreams of `seed`, so the output is the
/// same for any thread count.
pub fn sample_trips(pmf: &TripPmf, n_trips: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    if n_trips == 0 {
        return Err(Error::invalid("trip count must be at least 1"));
    }
    let index = WeightedIndex::new(&pmf.probs).map_err(|e| Error::degenerate(e.to_string()))?;
    let chunks = n_trips.div_ceil(SAMPLE_CHUNK);
    let parts: Vec<Vec<(usize, usize)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = seed::rng(seed, &[c as u64]);
            let len = SAMPLE_CHUNK.min(n_trips - c * SAMPLE_CHUNK);
            (0..len)
                .map(|_| pmf.pairs[index.sample(&mut rng)])
                .collect()
        })
        .collect();
    Ok(parts.concat())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// count / (total * width), so densities integrate to 1.
    pub density: f64,
}

/// Fixed-width histogram of displacements starting at 0 km.
pub fn displacement_distribution(
    sample: &DisplacementSample,
    bin_width_km: f64,
) -> Result<Vec<DensityBin>> {
    if sample.is_empty() {
        return Err(Error::invalid("no displacements to bin"));
    }
    histogram(sample.values(), bin_width_km, None)
}

/// Histogram with an optional fixed number of bins (for aligning two tables).
pub fn histogram(values: &[f64], width: f64, bins: Option<usize>) -> Result<Vec<DensityBin>> {
    if !(width > 0.0) || !width.is_finite() {
        return Err(Error::invalid("bin width must be positive"));
    }
    let max = values.iter().copied().fold(0.0, f64::max);
    let needed = (max / width).floor() as usize + 1;
    let nbins = bins.unwrap_or(needed).max(needed);
    let mut counts = vec![0usize; nbins];
    for v in values {
        counts[(v / width).floor() as usize] += 1;
    }
    let total = values.len() as f64;
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(k, count)| DensityBin {
            lo: k as f64 * width,
            hi: (k + 1) as f64 * width,
            count,
            density: if total > 0.0 {
                count as f64 / (total * width)
            } else {
                0.0
            },
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentialFit {
    /// Rate per kilometre.
    pub alpha: f64,
    pub log_likelihood: f64,
    pub d_min: f64,
    pub n: usize,
}

/// Maximum-likelihood exponential rate of displacements above `d_min`,
/// measured from `d_min`.
pub fn fit_exponential(sample: &DisplacementSample, d_min: Option<f64>) -> Result<ExponentialFit> {
    let d_min = d_min.unwrap_or(0.0);
    if !(d_min >= 0.0) {
        return Err(Error::invalid("d_min must be non-negative"));
    }
    let shifted: Vec<f64> = sample
        .values()
        .iter()
        .filter(|&&v| v >= d_min)
        .map(|v| v - d_min)
        .collect();
    if shifted.len() < 2 {
        return Err(Error::invalid(
            "exponential fit needs at least 2 displacements",
        ));
    }
    let n = shifted.len() as f64;
    let sum: f64 = shifted.iter().sum();
    if !(sum > 0.0) {
        return Err(Error::degenerate("all displacements sit at d_min"));
    }
    let alpha = n / sum;
    Ok(ExponentialFit {
        alpha,
        log_likelihood: n * alpha.ln() - alpha * sum,
        d_min,
        n: shifted.len(),
    })
}

pub fn compare_distributions(a: &DisplacementSample, b: &DisplacementSample) -> Result<KsResult> {
    ks_two_sample(a.values(), b.values())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwinPopulations {
    /// Per user: displacements drawn independently from exp(alpha).
    pub varied: Vec<Vec<f64>>,
    /// Per user: one distance drawn from exp(alpha), repeated on every trip.
    pub fixed: Vec<Vec<f64>>,
}

impl TwinPopulations {
    pub fn varied_aggregate(&self) -> Vec<f64> {
        self.varied.concat()
    }

    pub fn fixed_aggregate(&self) -> Vec<f64> {
        self.fixed.concat()
    }
}

/// Two populations with the same aggregate displacement law but different
/// individual behaviour.
pub fn ecological_twins(
    n_users: usize,
    trips_per_user: usize,
    alpha: f64,
    seed: u64,
) -> Result<TwinPopulations> {
    if n_users == 0 || trips_per_user == 0 {
        return Err(Error::invalid(
            "need at least one user and one trip per user",
        ));
    }
    let exp = Exp::new(alpha)
        .ok()
        .filter(|_| alpha > 0.0 && alpha.is_finite())
        .ok_or_else(|| Error::invalid(format!("alpha must be positive, got {alpha}")))?;
    let draw = |rng: &mut seed::StreamRng| loop {
        // exp can return exactly 0 in principle; displacements are positive
        let v: f64 = exp.sample(rng);
        if v > 0.0 {
            break v;
        }
    };
    let (varied, fixed) = (0..n_users)
        .into_par_iter()
        .map(|u| {
            let mut rng = seed::rng(seed, &[0, u as u64]);
            let varied: Vec<f64> = (0..trips_per_user).map(|_| draw(&mut rng)).collect();
            let mut rng = seed::rng(seed, &[1, u as u64]);
            let fixed = vec![draw(&mut rng); trips_per_user];
            (varied, fixed)
        })
        .unzip();
    Ok(TwinPopulations { varied, fixed })
}

/// Mean over users of the population variance of each user's displacements.
pub fn mean_user_variance(users: &[Vec<f64>]) -> f64 {
    users.iter().map(|u| crate::stats::variance(u)).sum::<f64>() / users.len() as f64
}

/// Draws from exp(alpha) with a fixed seed; shared by examples and tests.
pub fn exponential_sample(n: usize, alpha: f64, seed: u64) -> Result<DisplacementSample> {
    let exp = Exp::new(alpha).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = seed::rng(seed, &[]);
    DisplacementSample::new(
        (0..n)
            .map(|_| loop {
                let v: f64 = exp.sample(&mut rng);
                if v > 0.0 {
                    break v;
                }
            })
            .collect(),
    )
}
