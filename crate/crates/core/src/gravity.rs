//! Gravity model with power-law distance decay.
//!
//! Predicted interaction between cities `i` and `j` is
//! `k * size_i * size_j * d_ij^-beta`. Sizes are the cities' theoretical
//! masses recovered from observed flows; they are fixed to mean 1 so that `k`
//! carries the overall scale.
//!
//! Fitting follows a two-level search: an outer grid over `beta` and, for each
//! grid value, a particle swarm over the log-sizes maximizing the Pearson
//! correlation between observed and predicted interactions on observed pairs.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::geo::{index_cities, City, CityId, DistanceMatrix};
use crate::ingest::FlowTable;
use crate::pso::{self, PsoConfig};
use crate::stats::{mean, pearson};
use crate::{seed, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GravityModel {
    pub beta: f64,
    pub k: f64,
    pub sizes: Vec<f64>,
}

impl GravityModel {
    pub fn predict_pair(&self, d: &DistanceMatrix, i: usize, j: usize) -> Result<f64> {
        let dist = d.get(i, j);
        if !(dist > 0.0) {
            return Err(Error::ZeroDistance(i.to_string(), j.to_string()));
        }
        Ok(self.k * self.sizes[i] * self.sizes[j] * dist.powf(-self.beta))
    }
}

pub fn predict(m: &GravityModel, d: &DistanceMatrix, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
    if m.sizes.len() != d.len() {
        return Err(Error::invalid(
            "model sizes and distance matrix disagree on city count",
        ));
    }
    pairs
        .iter()
        .map(|&(i, j)| m.predict_pair(d, i, j))
        .collect()
}

/// Inclusive arithmetic grid of decay exponents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaGrid {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Default for BetaGrid {
    fn default() -> Self {
        BetaGrid {
            min: 0.1,
            max: 2.0,
            step: 0.1,
        }
    }
}

impl BetaGrid {
    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0) || !(self.min > 0.0) || self.max < self.min {
            return Err(Error::invalid(format!("bad beta grid {self:?}")));
        }
        let n = ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1;
        // rounding keeps grid points like 0.8 exact instead of 0.7999999999999999
        Ok((0..n)
            .map(|k| ((self.min + k as f64 * self.step) * 1e9).round() / 1e9)
            .collect())
    }
}

/// Observed interactions as dense city indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedPairs {
    pub pairs: Vec<(usize, usize)>,
    pub values: Vec<f64>,
}

impl ObservedPairs {
    pub fn from_flows(flows: &FlowTable, cities: &[City]) -> Result<Self> {
        let index = index_cities(cities)?;
        let lookup = |id: &CityId| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| Error::UnknownCity(id.0.clone()))
        };
        let mut pairs = Vec::with_capacity(flows.len());
        let mut values = Vec::with_capacity(flows.len());
        for (a, b, w) in flows.iter() {
            pairs.push((lookup(a)?, lookup(b)?));
            values.push(w);
        }
        Ok(ObservedPairs { pairs, values })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub i: usize,
    pub j: usize,
    pub observed: f64,
    pub predicted: f64,
    /// `None` when either city lacks a region label.
    pub same_region: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaScore {
    pub beta: f64,
    pub gof: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GravityFit {
    pub model: GravityModel,
    /// Pearson correlation between observed and predicted interactions.
    pub gof: f64,
    pub gof_by_beta: Vec<BetaScore>,
    pub residuals: Vec<Residual>,
}

/// Log of the predicted interaction without `k`; the objective is scale-free.
struct Objective<'a> {
    pairs: &'a [(usize, usize)],
    log_dist: Vec<f64>,
    centered_obs: Vec<f64>,
    obs_norm: f64,
}

impl<'a> Objective<'a> {
    fn new(obs: &'a ObservedPairs, d: &DistanceMatrix) -> Self {
        let m = mean(&obs.values);
        let centered_obs: Vec<f64> = obs.values.iter().map(|v| v - m).collect();
        let obs_norm = centered_obs.iter().map(|v| v * v).sum::<f64>().sqrt();
        Objective {
            pairs: &obs.pairs,
            log_dist: obs.pairs.iter().map(|&(i, j)| d.get(i, j).ln()).collect(),
            centered_obs,
            obs_norm,
        }
    }

    fn correlation(&self, log_sizes: &[f64], beta: f64) -> f64 {
        let pred: Vec<f64> = self
            .pairs
            .iter()
            .zip(&self.log_dist)
            .map(|(&(i, j), ld)| (log_sizes[i] + log_sizes[j] - beta * ld).exp())
            .collect();
        let pm = mean(&pred);
        let (mut sxy, mut syy) = (0.0, 0.0);
        for (p, o) in pred.iter().zip(&self.centered_obs) {
            let dp = p - pm;
            sxy += dp * o;
            syy += dp * dp;
        }
        sxy / (syy.sqrt() * self.obs_norm)
    }
}

/// Fits the gravity model to observed flows.
///
/// Every city in `cities` must take part in at least one observed pair, since
/// the size of a city without flows is not identifiable.
pub fn fit_pso(
    flows: &FlowTable,
    cities: &[City],
    d: &DistanceMatrix,
    grid: &[f64],
    config: &PsoConfig,
    seed: u64,
) -> Result<GravityFit> {
    if d.len() != cities.len() {
        return Err(Error::invalid(
            "distance matrix and city list disagree on size",
        ));
    }
    let obs = ObservedPairs::from_flows(flows, cities)?;
    let mut fit = fit_observed(&obs, d, grid, config, seed)?;
    for r in &mut fit.residuals {
        r.same_region = match (&cities[r.i].region, &cities[r.j].region) {
            (Some(a), Some(b)) => Some(a == b),
            _ => None,
        };
    }
    Ok(fit)
}

/// Index-level fit; `same_region` is left unset.
pub fn fit_observed(
    obs: &ObservedPairs,
    d: &DistanceMatrix,
    grid: &[f64],
    config: &PsoConfig,
    seed: u64,
) -> Result<GravityFit> {
    let n = d.len();
    if obs.pairs.len() < 2 {
        return Err(Error::invalid(
            "gravity fit needs at least 2 observed pairs",
        ));
    }
    if grid.is_empty() || grid.iter().any(|b| !(*b > 0.0) || !b.is_finite()) {
        return Err(Error::invalid("beta grid must be non-empty and positive"));
    }
    config.validate()?;
    if obs.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite observed flow"));
    }
    if obs.values.iter().all(|v| *v == obs.values[0]) {
        return Err(Error::degenerate(
            "all observed flows are equal; correlation is undefined",
        ));
    }

    let mut strength = vec![0.0; n];
    for (&(i, j), &v) in obs.pairs.iter().zip(&obs.values) {
        if i >= n || j >= n {
            return Err(Error::invalid(format!("pair ({i}, {j}) out of range")));
        }
        if !(d.get(i, j) > 0.0) {
            return Err(Error::ZeroDistance(i.to_string(), j.to_string()));
        }
        strength[i] += v;
        strength[j] += v;
    }
    if let Some(lonely) = strength.iter().position(|s| *s <= 0.0) {
        return Err(Error::degenerate(format!(
            "city index {lonely} has no observed flows; its size is not identifiable"
        )));
    }

    let objective = Objective::new(obs, d);
    let log_strength: Vec<f64> = strength.iter().map(|s| s.ln()).collect();
    let centre = mean(&log_strength);
    let start: Vec<f64> = log_strength.iter().map(|s| s - centre).collect();

    let mut gof_by_beta = Vec::with_capacity(grid.len());
    let mut best: Option<(f64, f64, Vec<f64>)> = None;
    for (g, &beta) in grid.iter().enumerate() {
        let out = pso::maximize(
            n,
            config,
            seed::derive(seed, &[g as u64]),
            Some(&start),
            |x| objective.correlation(x, beta),
        )?;
        if !out.best_value.is_finite() {
            return Err(Error::degenerate(format!(
                "non-finite objective at beta = {beta}"
            )));
        }
        gof_by_beta.push(BetaScore {
            beta,
            gof: out.best_value,
        });
        if best.as_ref().is_none_or(|(_, v, _)| out.best_value > *v) {
            best = Some((beta, out.best_value, out.best_position));
        }
    }
    let (beta, _, log_sizes) = best.expect("grid is non-empty");

    let mut sizes: Vec<f64> = log_sizes.iter().map(|x| x.exp()).collect();
    let m = mean(&sizes);
    sizes.iter_mut().for_each(|s| *s /= m);
    let unit = GravityModel {
        beta,
        k: 1.0,
        sizes,
    };
    let unscaled = predict(&unit, d, &obs.pairs)?;
    let k = obs
        .values
        .iter()
        .zip(&unscaled)
        .map(|(o, u)| o * u)
        .sum::<f64>()
        / unscaled.iter().map(|u| u * u).sum::<f64>();
    let model = GravityModel { k, ..unit };
    let predicted: Vec<f64> = unscaled.iter().map(|u| k * u).collect();
    let gof = pearson(&obs.values, &predicted)
        .ok_or_else(|| Error::degenerate("constant predictions"))?;

    let residuals = obs
        .pairs
        .iter()
        .zip(obs.values.iter().zip(&predicted))
        .map(|(&(i, j), (&observed, &predicted))| Residual {
            i,
            j,
            observed,
            predicted,
            same_region: None,
        })
        .collect();

    Ok(GravityFit {
        model,
        gof,
        gof_by_beta,
        residuals,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualPoint {
    pub i: usize,
    pub j: usize,
    pub observed: f64,
    pub predicted: f64,
    pub log_residual: f64,
    pub same_region: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualSplit {
    /// Mean of ln(observed / predicted) over same-region pairs.
    pub intra_mean: f64,
    pub inter_mean: f64,
    pub intra_count: usize,
    pub inter_count: usize,
    pub scatter: Vec<ResidualPoint>,
}

/// Splits log residuals into same-region and cross-region pairs.
pub fn residual_split(fit: &GravityFit, cities: &[City]) -> Result<ResidualSplit> {
    let mut region_of: HashMap<usize, &str> = HashMap::new();
    for (i, c) in cities.iter().enumerate() {
        match &c.region {
            Some(r) if !r.is_empty() => {
                region_of.insert(i, r.as_str());
            }
            _ => {
                return Err(Error::invalid(format!(
                    "city `{}` has no region label",
                    c.id
                )))
            }
        }
    }
    let mut scatter = Vec::with_capacity(fit.residuals.len());
    for r in &fit.residuals {
        let (Some(a), Some(b)) = (region_of.get(&r.i), region_of.get(&r.j)) else {
            return Err(Error::invalid(format!(
                "pair ({}, {}) out of range",
                r.i, r.j
            )));
        };
        if !(r.observed > 0.0) || !(r.predicted > 0.0) {
            return Err(Error::invalid(
                "log residual needs positive observed and predicted values",
            ));
        }
        scatter.push(ResidualPoint {
            i: r.i,
            j: r.j,
            observed: r.observed,
            predicted: r.predicted,
            log_residual: (r.observed / r.predicted).ln(),
            same_region: a == b,
        });
    }
    let group = |same: bool| -> Vec<f64> {
        scatter
            .iter()
            .filter(|p| p.same_region == same)
            .map(|p| p.log_residual)
            .collect()
    };
    let (intra, inter) = (group(true), group(false));
    if intra.is_empty() {
        return Err(Error::degenerate("no same-region pairs"));
    }
    if inter.is_empty() {
        return Err(Error::degenerate("no cross-region pairs"));
    }
    Ok(ResidualSplit {
        intra_mean: mean(&intra),
        inter_mean: mean(&inter),
        intra_count: intra.len(),
        inter_count: inter.len(),
        scatter,
    })
}
