//! Box-constrained particle swarm optimization.
//!
//! Synchronous global-best PSO: every particle moves using the global best of
//! the previous iteration, all particles are evaluated (possibly in parallel),
//! then the global best is reduced in particle order. Each particle draws from
//! its own random stream derived from the master seed, so the outcome does not
//! depend on how evaluations are scheduled.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::seed::{self, StreamRng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsoConfig {
    pub swarm_size: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub lower: f64,
    pub upper: f64,
    /// Spread of the initial swarm around a supplied starting point.
    pub init_spread: f64,
}

impl Default for PsoConfig {
    fn default() -> Self {
        PsoConfig {
            swarm_size: 50,
            iterations: 500,
            inertia: 0.729,
            cognitive: 1.49445,
            social: 1.49445,
            lower: -6.0,
            upper: 6.0,
            init_spread: 1.0,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.swarm_size < 2 {
            return Err(Error::invalid("swarm size must be at least 2"));
        }
        if self.iterations == 0 {
            return Err(Error::invalid("PSO needs at least one iteration"));
        }
        let finite = [self.inertia, self.cognitive, self.social, self.init_spread]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0);
        if !finite {
            return Err(Error::invalid(
                "PSO coefficients must be finite and non-negative",
            ));
        }
        if !(self.lower < self.upper) || !self.lower.is_finite() || !self.upper.is_finite() {
            return Err(Error::invalid("PSO bounds must satisfy lower < upper"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsoOutcome {
    pub best_position: Vec<f64>,
    pub best_value: f64,
    /// Global best value after initialization and after each iteration.
    pub history: Vec<f64>,
}

struct Particle {
    position: Vec<f64>,
    velocity: Vec<f64>,
    best_position: Vec<f64>,
    best_value: f64,
    rng: StreamRng,
}

fn score(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::NEG_INFINITY
    }
}

/// Maximizes `objective` over `[lower, upper]^dim`.
///
/// With `start`, particle 0 begins exactly there and the rest are scattered
/// around it with normal noise of `init_spread`; otherwise all particles start
/// uniformly in the box. Non-finite objective values rank below everything.
pub fn maximize<F>(
    dim: usize,
    config: &PsoConfig,
    seed: u64,
    start: Option<&[f64]>,
    objective: F,
) -> Result<PsoOutcome>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    config.validate()?;
    if dim == 0 {
        return Err(Error::invalid("PSO dimension must be positive"));
    }
    if let Some(s) = start {
        if s.len() != dim {
            return Err(Error::invalid("PSO start point has the wrong dimension"));
        }
    }
    let (lo, hi) = (config.lower, config.upper);
    let vmax = hi - lo;
    let noise = Normal::new(0.0, config.init_spread.max(f64::MIN_POSITIVE)).expect("finite spread");

    let mut swarm: Vec<Particle> = (0..config.swarm_size)
        .into_par_iter()
        .map(|p| {
            let mut rng = seed::rng(seed, &[p as u64]);
            let position: Vec<f64> = match start {
                Some(s) if p == 0 => s.iter().map(|x| x.clamp(lo, hi)).collect(),
                Some(s) => s
                    .iter()
                    .map(|x| (x + noise.sample(&mut rng)).clamp(lo, hi))
                    .collect(),
                None => (0..dim).map(|_| rng.random_range(lo..=hi)).collect(),
            };
            let velocity = (0..dim)
                .map(|_| rng.random_range(-0.1..=0.1) * vmax)
                .collect();
            let value = score(objective(&position));
            Particle {
                best_position: position.clone(),
                position,
                velocity,
                best_value: value,
                rng,
            }
        })
        .collect();

    let (mut gbest_pos, mut gbest_val) = reduce_best(&swarm);
    let mut history = Vec::with_capacity(config.iterations + 1);
    history.push(gbest_val);

    for _ in 0..config.iterations {
        let gbest = &gbest_pos;
        swarm.par_iter_mut().for_each(|pt| {
            for d in 0..dim {
                let r1: f64 = pt.rng.random();
                let r2: f64 = pt.rng.random();
                let v = config.inertia * pt.velocity[d]
                    + config.cognitive * r1 * (pt.best_position[d] - pt.position[d])
                    + config.social * r2 * (gbest[d] - pt.position[d]);
                let v = v.clamp(-vmax, vmax);
                let x = pt.position[d] + v;
                if x < lo || x > hi {
                    pt.position[d] = x.clamp(lo, hi);
                    pt.velocity[d] = 0.0;
                } else {
                    pt.position[d] = x;
                    pt.velocity[d] = v;
                }
            }
            let value = score(objective(&pt.position));
            if value > pt.best_value {
                pt.best_value = value;
                pt.best_position.clone_from(&pt.position);
            }
        });
        let (pos, val) = reduce_best(&swarm);
        if val > gbest_val {
            gbest_val = val;
            gbest_pos = pos;
        }
        history.push(gbest_val);
    }

    Ok(PsoOutcome {
        best_position: gbest_pos,
        best_value: gbest_val,
        history,
    })
}

/// First particle with the highest personal best, scanning in index order.
fn reduce_best(swarm: &[Particle]) -> (Vec<f64>, f64) {
    let mut best = 0;
    for (i, p) in swarm.iter().enumerate().skip(1) {
        if p.best_value > swarm[best].best_value {
            best = i;
        }
    }
    (swarm[best].best_position.clone(), swarm[best].best_value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn neg_sphere(x: &[f64]) -> f64 {
        -x.iter().map(|v| (v - 1.5).powi(2)).sum::<f64>()
    }

    #[test]
    fn finds_sphere_optimum() {
        let out = maximize(5, &PsoConfig::default(), 1, None, neg_sphere).unwrap();
        assert!(out.best_value > -1e-8, "{}", out.best_value);
        for x in &out.best_position {
            assert!((x - 1.5).abs() < 1e-3);
        }
    }

    #[test]
    fn history_is_monotone() {
        let cfg = PsoConfig {
            iterations: 100,
            ..Default::default()
        };
        let out = maximize(8, &cfg, 3, None, neg_sphere).unwrap();
        assert_eq!(out.history.len(), 101);
        assert!(out.history.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(*out.history.last().unwrap(), out.best_value);
    }

    #[test]
    fn seeded_runs_are_identical_across_pools() {
        let cfg = PsoConfig {
            iterations: 50,
            ..Default::default()
        };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| maximize(6, &cfg, 42, None, neg_sphere).unwrap())
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a, b);
    }

    #[test]
    fn respects_bounds() {
        let cfg = PsoConfig {
            lower: -1.0,
            upper: 1.0,
            iterations: 50,
            ..Default::default()
        };
        // optimum outside the box lands on the boundary
        let out = maximize(3, &cfg, 0, None, neg_sphere).unwrap();
        for x in &out.best_position {
            assert!((x - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = PsoConfig {
            swarm_size: 1,
            ..Default::default()
        };
        assert!(maximize(2, &cfg, 0, None, neg_sphere).is_err());
    }
}
