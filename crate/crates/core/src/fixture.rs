//! Synthetic data with planted ground truth.
//!
//! These generators build inputs whose correct answers are known by
//! construction: city layouts with region labels, flows produced exactly by a
//! gravity model, check-in streams whose trips follow a planted model, and
//! planted-partition graphs. They power the bundled fixture, the examples and
//! the recovery tests.

use chrono::{DateTime, Duration, Utc};
use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal};

use crate::geo::{City, DistanceMatrix, Location};
use crate::ingest::{CheckInRecord, FlowTable};
use crate::network::InteractionNetwork;
use crate::{seed, Result};

/// Cities scattered around `regions` centres inside a China-sized box.
///
/// City `i` belongs to region `i % regions`; ids are `c00`, `c01`, ...
pub fn planted_cities(n: usize, regions: usize, spread_deg: f64, seed: u64) -> Vec<City> {
    let mut rng = seed::rng(seed, &[0]);
    let centres: Vec<(f64, f64)> = (0..regions.max(1))
        .map(|_| (rng.random_range(22.0..42.0), rng.random_range(100.0..122.0)))
        .collect();
    let jitter = Normal::new(0.0, spread_deg).expect("finite spread");
    let width = n.saturating_sub(1).to_string().len().max(2);
    (0..n)
        .map(|i| {
            let r = i % centres.len();
            let (lat, lon) = centres[r];
            City {
                id: format!("c{i:0width$}").into(),
                name: format!("City {i}"),
                location: Location {
                    lat: (lat + jitter.sample(&mut rng)).clamp(-89.0, 89.0),
                    lon: (lon + jitter.sample(&mut rng)).clamp(-179.0, 179.0),
                },
                region: Some(format!("R{r}")),
            }
        })
        .collect()
}

/// Sizes drawn log-normally and rescaled to mean 1.
pub fn lognormal_sizes(n: usize, sigma: f64, seed: u64) -> Vec<f64> {
    let mut rng = seed::rng(seed, &[1]);
    let dist = LogNormal::new(0.0, sigma).expect("finite sigma");
    let raw: Vec<f64> = (0..n).map(|_| dist.sample(&mut rng)).collect();
    let m = raw.iter().sum::<f64>() / n as f64;
    raw.into_iter().map(|s| s / m).collect()
}

/// Unnormalized gravity weight for every pair `i < j`.
pub fn gravity_weights(
    sizes: &[f64],
    d: &DistanceMatrix,
    beta: impl Fn(usize, usize) -> f64,
) -> Vec<((usize, usize), f64)> {
    let n = sizes.len();
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            out.push(((i, j), sizes[i] * sizes[j] / d.get(i, j).powf(beta(i, j))));
        }
    }
    out
}

/// Complete flow table with `k * S_i * S_j / d_ij^beta` on every pair.
///
/// `noise` > 0 multiplies each flow by `exp(N(0, noise))`.
pub fn planted_flows(
    cities: &[City],
    sizes: &[f64],
    beta: f64,
    k: f64,
    noise: f64,
    seed: u64,
) -> Result<FlowTable> {
    let d = DistanceMatrix::build(cities)?;
    let weights = gravity_weights(sizes, &d, |_, _| beta);
    noisy_table(cities, weights, k, noise, seed)
}

/// Flows whose decay exponent depends on whether both cities share a region.
pub fn two_regime_flows(
    cities: &[City],
    sizes: &[f64],
    beta_intra: f64,
    beta_inter: f64,
    k: f64,
) -> Result<FlowTable> {
    let d = DistanceMatrix::build(cities)?;
    let weights = gravity_weights(sizes, &d, |i, j| {
        if cities[i].region == cities[j].region {
            beta_intra
        } else {
            beta_inter
        }
    });
    noisy_table(cities, weights, k, 0.0, 0)
}

fn noisy_table(
    cities: &[City],
    weights: Vec<((usize, usize), f64)>,
    k: f64,
    noise: f64,
    seed: u64,
) -> Result<FlowTable> {
    let mut rng = seed::rng(seed, &[2]);
    let jitter = Normal::new(0.0, noise.max(0.0)).expect("finite noise");
    let mut table = FlowTable::new();
    for ((i, j), w) in weights {
        let factor = if noise > 0.0 {
            jitter.sample(&mut rng).exp()
        } else {
            1.0
        };
        table.add(cities[i].id.clone(), cities[j].id.clone(), k * w * factor)?;
    }
    Ok(table)
}

/// `n_trips` i.i.d. city-index pairs drawn with probability proportional to
/// the gravity weight, in random direction.
pub fn planted_trips(
    sizes: &[f64],
    d: &DistanceMatrix,
    beta: f64,
    n_trips: usize,
    seed: u64,
) -> Vec<(usize, usize)> {
    let weights = gravity_weights(sizes, d, |_, _| beta);
    let index = WeightedIndex::new(weights.iter().map(|(_, w)| *w)).expect("positive weights");
    let mut rng = seed::rng(seed, &[3]);
    (0..n_trips)
        .map(|_| {
            let (i, j) = weights[index.sample(&mut rng)].0;
            if rng.random_bool(0.5) {
                (i, j)
            } else {
                (j, i)
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct CheckInPlan {
    pub users: usize,
    pub visits_per_user: usize,
    /// Fraction of extra fake records (venue far from the device).
    pub fake_rate: f64,
    /// Fraction of extra same-city repeat records.
    pub repeat_rate: f64,
}

/// Check-ins from users random-walking between cities.
///
/// Each step moves from city `i` to `j` with probability proportional to the
/// gravity weight `S_i S_j d_ij^-beta`. Starting walks from the stationary
/// distribution makes every transition an independent draw, in law, from the
/// normalized gravity weights, so aggregated trips follow the planted model.
pub fn planted_checkins(
    cities: &[City],
    sizes: &[f64],
    beta: f64,
    plan: &CheckInPlan,
    seed: u64,
) -> Result<Vec<CheckInRecord>> {
    let n = cities.len();
    let d = DistanceMatrix::build(cities)?;
    let mut w = vec![vec![0.0; n]; n];
    for ((i, j), v) in gravity_weights(sizes, &d, |_, _| beta) {
        w[i][j] = v;
        w[j][i] = v;
    }
    let step: Vec<WeightedIndex<f64>> = w
        .iter()
        .map(|row| WeightedIndex::new(row).expect("positive row"))
        .collect();
    let stationary =
        WeightedIndex::new(w.iter().map(|row| row.iter().sum::<f64>())).expect("positive");

    let epoch: DateTime<Utc> = DateTime::parse_from_rfc3339("2011-09-01T00:00:00Z")
        .expect("valid epoch")
        .with_timezone(&Utc);
    let mut rng = seed::rng(seed, &[4]);
    let wobble = Normal::new(0.0, 0.005).expect("finite");
    let mut out = Vec::new();
    for u in 0..plan.users {
        let user = format!("u{u:05}");
        let mut t = epoch + Duration::minutes(rng.random_range(0..60 * 24 * 30));
        let mut city = stationary.sample(&mut rng);
        for v in 0..plan.visits_per_user {
            if v > 0 {
                city = step[city].sample(&mut rng);
            }
            let venue = cities[city].location;
            let mut push = |t: DateTime<Utc>, actual: Location| {
                out.push(CheckInRecord {
                    user_id: user.clone(),
                    timestamp: t,
                    actual_location: actual,
                    venue_city_id: cities[city].id.clone(),
                    venue_location: Some(venue),
                })
            };
            let near = Location {
                lat: venue.lat + wobble.sample(&mut rng),
                lon: venue.lon + wobble.sample(&mut rng),
            };
            push(t, near);
            if rng.random_bool(plan.repeat_rate) {
                t += Duration::minutes(rng.random_range(5..120));
                push(t, near);
            }
            if rng.random_bool(plan.fake_rate) {
                // a distant check-in claiming some other city; filtered as fake
                t += Duration::minutes(rng.random_range(5..120));
                let other = (city + 1 + rng.random_range(0..n - 1)) % n;
                let far = Location {
                    lat: (venue.lat + 1.5).min(89.0),
                    lon: venue.lon,
                };
                out.push(CheckInRecord {
                    user_id: user.clone(),
                    timestamp: t,
                    actual_location: far,
                    venue_city_id: cities[other].id.clone(),
                    venue_location: Some(cities[other].location),
                });
            }
            t += Duration::hours(rng.random_range(6..24 * 14));
        }
    }
    Ok(out)
}

/// Planted-partition graph: `blocks` groups of `block_size` nodes, each
/// intra-block pair linked with `p_in`, inter-block pairs with `p_out`, unit
/// weights. Returns the graph and the planted block of each node.
pub fn planted_partition(
    blocks: usize,
    block_size: usize,
    p_in: f64,
    p_out: f64,
    seed: u64,
) -> Result<(InteractionNetwork, Vec<usize>)> {
    let n = blocks * block_size;
    let truth: Vec<usize> = (0..n).map(|i| i / block_size).collect();
    let mut rng = seed::rng(seed, &[5]);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if truth[i] == truth[j] { p_in } else { p_out };
            if rng.random_bool(p) {
                edges.push((i, j, 1.0));
            }
        }
    }
    Ok((InteractionNetwork::from_edges(n, edges)?, truth))
}

/// Two unit-weight cliques of `size` nodes joined by one edge of `bridge` weight.
pub fn two_cliques(size: usize, bridge: f64) -> Result<InteractionNetwork> {
    let mut edges = Vec::new();
    for offset in [0, size] {
        for i in 0..size {
            for j in (i + 1)..size {
                edges.push((offset + i, offset + j, 1.0));
            }
        }
    }
    edges.push((size - 1, size, bridge));
    InteractionNetwork::from_edges(2 * size, edges)
}
