//! Undirected weighted interaction network and its descriptive statistics.

use std::collections::{HashMap, VecDeque};

use rayon::prelude::*;
use serde::Serialize;

use crate::geo::{index_cities, City, CityId};
use crate::ingest::FlowTable;
use crate::stats::{linear_fit, pearson};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// Cities plus undirected, strictly positive weighted edges between them.
#[derive(Debug, Clone)]
pub struct InteractionNetwork {
    nodes: Vec<City>,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl InteractionNetwork {
    /// One edge per flow-table entry; cities without flows become isolated nodes.
    pub fn build(flows: &FlowTable, cities: &[City]) -> Result<Self> {
        let index = index_cities(cities)?;
        let lookup = |id: &CityId| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| Error::UnknownCity(id.0.clone()))
        };
        let mut edges = Vec::with_capacity(flows.len());
        for (a, b, w) in flows.iter() {
            edges.push((lookup(a)?, lookup(b)?, w));
        }
        Self::from_parts(cities.to_vec(), edges)
    }

    /// Graph over `n` anonymous nodes; used for synthetic benchmarks.
    pub fn from_edges(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let nodes = (0..n)
            .map(|i| City {
                id: CityId(format!("n{i}")),
                name: String::new(),
                location: crate::geo::Location { lat: 0.0, lon: 0.0 },
                region: None,
            })
            .collect();
        Self::from_parts(nodes, edges.into_iter().collect())
    }

    fn from_parts(nodes: Vec<City>, raw: Vec<(usize, usize, f64)>) -> Result<Self> {
        let n = nodes.len();
        let mut adjacency = vec![Vec::new(); n];
        let mut seen = std::collections::HashSet::new();
        let mut edges = Vec::with_capacity(raw.len());
        for (a, b, weight) in raw {
            if a >= n || b >= n {
                return Err(Error::invalid(format!("edge ({a}, {b}) out of range")));
            }
            if a == b {
                return Err(Error::SelfFlow(nodes[a].id.0.clone()));
            }
            if !(weight > 0.0) || !weight.is_finite() {
                return Err(Error::invalid(format!(
                    "edge ({a}, {b}) has weight {weight}"
                )));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(Error::invalid(format!("duplicate edge ({a}, {b})")));
            }
            adjacency[a].push((b, weight));
            adjacency[b].push((a, weight));
            edges.push(Edge { a, b, weight });
        }
        for list in &mut adjacency {
            list.sort_by_key(|&(j, _)| j);
        }
        Ok(InteractionNetwork {
            nodes,
            edges,
            adjacency,
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> &[City] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Neighbors of `i` with edge weights, sorted by neighbor index.
    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.weight).sum()
    }

    /// Connected components of the unweighted skeleton, largest first.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.node_count();
        let mut comp = vec![usize::MAX; n];
        let mut out: Vec<Vec<usize>> = Vec::new();
        for s in 0..n {
            if comp[s] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut members = vec![s];
            comp[s] = id;
            let mut k = 0;
            while k < members.len() {
                let u = members[k];
                k += 1;
                for &(v, _) in &self.adjacency[u] {
                    if comp[v] == usize::MAX {
                        comp[v] = id;
                        members.push(v);
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        // stable: ties keep discovery order (lowest first node)
        out.sort_by_key(|c| std::cmp::Reverse(c.len()));
        out
    }

    fn bfs_hops(&self, source: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.node_count()];
        dist[source] = 0;
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &self.adjacency[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkStats {
    pub node_count: usize,
    pub edge_count: usize,
    pub density: f64,
    /// Longest shortest path in hops.
    pub diameter: usize,
    pub avg_degree: f64,
    /// Mean hop distance over all connected ordered pairs.
    pub avg_shortest_path: f64,
    /// Unweighted local clustering averaged over all nodes (degree < 2 counts as 0).
    pub avg_clustering: f64,
    /// False when distance statistics were restricted to the largest component.
    pub connected: bool,
    pub component_size: usize,
}

pub fn compute_stats(g: &InteractionNetwork) -> Result<NetworkStats> {
    let n = g.node_count();
    if n == 0 {
        return Err(Error::invalid("empty graph"));
    }
    let m = g.edge_count();
    let components = g.components();
    let largest = &components[0];

    let (hop_sum, pairs, diameter) = largest
        .par_iter()
        .map(|&s| {
            let dist = g.bfs_hops(s);
            largest
                .iter()
                .filter(|&&t| t != s)
                .fold((0usize, 0usize, 0usize), |(sum, cnt, max), &t| {
                    (sum + dist[t], cnt + 1, max.max(dist[t]))
                })
        })
        .reduce(|| (0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2.max(b.2)));

    // collect before summing so the float total does not depend on thread count
    let local: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| local_clustering(g, i))
        .collect();
    let clustering = local.iter().sum::<f64>() / n as f64;

    Ok(NetworkStats {
        node_count: n,
        edge_count: m,
        density: if n > 1 {
            2.0 * m as f64 / (n as f64 * (n as f64 - 1.0))
        } else {
            0.0
        },
        diameter,
        avg_degree: 2.0 * m as f64 / n as f64,
        avg_shortest_path: if pairs > 0 {
            hop_sum as f64 / pairs as f64
        } else {
            0.0
        },
        avg_clustering: clustering,
        connected: components.len() == 1,
        component_size: largest.len(),
    })
}

fn local_clustering(g: &InteractionNetwork, i: usize) -> f64 {
    let nbrs = g.neighbors(i);
    let k = nbrs.len();
    if k < 2 {
        return 0.0;
    }
    let mut links = 0usize;
    for (x, &(u, _)) in nbrs.iter().enumerate() {
        let adj_u = g.neighbors(u);
        for &(v, _) in &nbrs[x + 1..] {
            if adj_u.binary_search_by_key(&v, |&(j, _)| j).is_ok() {
                links += 1;
            }
        }
    }
    2.0 * links as f64 / (k * (k - 1)) as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightBinning {
    /// Ratio between consecutive bin edges (> 1).
    pub base: f64,
    /// Bins with fewer edges than this are left out of the exponent fit.
    pub min_count: usize,
    /// Optional weight range for the fit; bins must lie fully inside it.
    pub fit_min: Option<f64>,
    pub fit_max: Option<f64>,
}

impl Default for WeightBinning {
    fn default() -> Self {
        WeightBinning {
            base: 2.0,
            min_count: 5,
            fit_min: None,
            fit_max: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// count / (edge count * bin width)
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PowerLawFit {
    Fitted {
        /// Exponent of the density, `p(w) ~ w^-exponent`.
        exponent: f64,
        /// Slope of log(count) against log(bin centre).
        count_slope: f64,
        r_squared: f64,
        bins_used: usize,
    },
    Refused {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightDistribution {
    pub bins: Vec<WeightBin>,
    pub fit: PowerLawFit,
}

/// Log-binned edge-weight histogram with a least-squares power-law exponent.
pub fn weight_distribution(
    g: &InteractionNetwork,
    binning: WeightBinning,
) -> Result<WeightDistribution> {
    if !(binning.base > 1.0) {
        return Err(Error::invalid("bin base must exceed 1"));
    }
    if g.edge_count() < 10 {
        return Err(Error::invalid(format!(
            "weight distribution needs at least 10 edges, got {}",
            g.edge_count()
        )));
    }
    let b = binning.base;
    let bin_of = |w: f64| {
        let mut k = (w.ln() / b.ln()).floor() as i32;
        if b.powi(k) > w {
            k -= 1;
        }
        if b.powi(k + 1) <= w {
            k += 1;
        }
        k
    };
    let mut counts: std::collections::BTreeMap<i32, usize> = Default::default();
    for e in g.edges() {
        *counts.entry(bin_of(e.weight)).or_default() += 1;
    }
    let (kmin, kmax) = (
        *counts.keys().next().unwrap(),
        *counts.keys().last().unwrap(),
    );
    let total = g.edge_count() as f64;
    let bins: Vec<WeightBin> = (kmin..=kmax)
        .map(|k| {
            let (lo, hi) = (b.powi(k), b.powi(k + 1));
            let count = counts.get(&k).copied().unwrap_or(0);
            WeightBin {
                lo,
                hi,
                count,
                density: count as f64 / (total * (hi - lo)),
            }
        })
        .collect();

    let usable: Vec<&WeightBin> = bins
        .iter()
        .filter(|bin| {
            bin.count > 0
                && bin.count >= binning.min_count
                && binning.fit_min.is_none_or(|m| bin.lo >= m)
                && binning.fit_max.is_none_or(|m| bin.hi <= m)
        })
        .collect();
    let fit = if usable.len() < 2 {
        PowerLawFit::Refused {
            reason: format!("{} usable bin(s); need at least 2", usable.len()),
        }
    } else {
        let xs: Vec<f64> = usable
            .iter()
            .map(|bin| (bin.lo * bin.hi).sqrt().ln())
            .collect();
        let log_density: Vec<f64> = usable.iter().map(|bin| bin.density.ln()).collect();
        let log_count: Vec<f64> = usable.iter().map(|bin| (bin.count as f64).ln()).collect();
        let dens = linear_fit(&xs, &log_density)?;
        let cnt = linear_fit(&xs, &log_count)?;
        PowerLawFit::Fitted {
            exponent: -dens.slope,
            count_slope: cnt.slope,
            r_squared: dens.r_squared,
            bins_used: usable.len(),
        }
    };
    Ok(WeightDistribution { bins, fit })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioEntry {
    pub city_i: CityId,
    pub city_j: CityId,
    pub a: f64,
    pub b: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowComparison {
    pub common_pairs: usize,
    /// R² of the least-squares line of `a` against `b` over common pairs.
    pub r_squared: f64,
    pub slope: f64,
    pub intercept: f64,
    /// Common pairs by descending `a / b`, truncated to the requested top-k.
    pub top_ratios: Vec<RatioEntry>,
}

pub const DEFAULT_TOP_K: usize = 50;

pub fn compare_flows(a: &FlowTable, b: &FlowTable, top_k: usize) -> Result<FlowComparison> {
    let b_lookup: HashMap<(&CityId, &CityId), f64> =
        b.iter().map(|(i, j, w)| ((i, j), w)).collect();
    let mut common: Vec<RatioEntry> = a
        .iter()
        .filter_map(|(i, j, wa)| {
            b_lookup.get(&(i, j)).map(|&wb| RatioEntry {
                city_i: i.clone(),
                city_j: j.clone(),
                a: wa,
                b: wb,
                ratio: wa / wb,
            })
        })
        .collect();
    if common.len() < 3 {
        return Err(Error::invalid(format!(
            "flow comparison needs at least 3 common pairs, got {}",
            common.len()
        )));
    }
    let xs: Vec<f64> = common.iter().map(|e| e.b).collect();
    let ys: Vec<f64> = common.iter().map(|e| e.a).collect();
    let r = pearson(&xs, &ys).ok_or_else(|| Error::degenerate("constant flows on common pairs"))?;
    let line = linear_fit(&xs, &ys)?;
    common.sort_by(|x, y| y.ratio.total_cmp(&x.ratio));
    let common_pairs = common.len();
    common.truncate(top_k);
    Ok(FlowComparison {
        common_pairs,
        r_squared: r * r,
        slope: line.slope,
        intercept: line.intercept,
        top_ratios: common,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::FlowTable;

    fn city(id: &str) -> City {
        City::new(id, id, 0.0, 0.0).unwrap()
    }

    fn table(pairs: &[(&str, &str, f64)]) -> FlowTable {
        let mut t = FlowTable::new();
        for &(a, b, w) in pairs {
            t.add(a.into(), b.into(), w).unwrap();
        }
        t
    }

    #[test]
    fn build_keeps_isolated_nodes() {
        let cities = [city("A"), city("B"), city("C")];
        let g = InteractionNetwork::build(&FlowTable::new(), &cities).unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (3, 0));
        let g = InteractionNetwork::build(&table(&[("A", "B", 3.0)]), &cities).unwrap();
        assert_eq!(
            g.edges(),
            &[Edge {
                a: 0,
                b: 1,
                weight: 3.0
            }]
        );
        assert!(matches!(
            InteractionNetwork::build(&table(&[("A", "Z", 1.0)]), &cities),
            Err(Error::UnknownCity(_))
        ));
    }

    #[test]
    fn national_scale_average_degree() {
        // 370 nodes, 15101 edges
        let avg: f64 = 2.0 * 15101.0 / 370.0;
        assert!((avg - 81.6).abs() < 0.05);
    }

    #[test]
    fn triangle_stats() {
        let g = InteractionNetwork::from_edges(3, [(0, 1, 1.0), (1, 2, 2.0), (0, 2, 1.0)]).unwrap();
        let s = compute_stats(&g).unwrap();
        assert_eq!(s.density, 1.0);
        assert_eq!(s.diameter, 1);
        assert_eq!(s.avg_shortest_path, 1.0);
        assert_eq!(s.avg_clustering, 1.0);
        assert!(s.connected);
    }

    #[test]
    fn path_stats() {
        let g = InteractionNetwork::from_edges(3, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let s = compute_stats(&g).unwrap();
        assert_eq!(s.avg_clustering, 0.0);
        assert_eq!(s.diameter, 2);
        assert!((s.avg_shortest_path - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn disconnected_graph_flags_largest_component() {
        let g = InteractionNetwork::from_edges(5, [(0, 1, 1.0), (1, 2, 1.0), (3, 4, 1.0)]).unwrap();
        let s = compute_stats(&g).unwrap();
        assert!(!s.connected);
        assert_eq!(s.component_size, 3);
        assert_eq!(s.diameter, 2);
        assert!(compute_stats(&InteractionNetwork::from_edges(0, []).unwrap()).is_err());
    }

    #[test]
    fn equal_weights_refuse_fit() {
        let edges: Vec<_> = (1..12).map(|i| (0, i, 7.0)).collect();
        let g = InteractionNetwork::from_edges(12, edges).unwrap();
        let wd = weight_distribution(&g, WeightBinning::default()).unwrap();
        assert_eq!(wd.bins.len(), 1);
        assert_eq!(wd.bins[0].count, 11);
        assert!(matches!(wd.fit, PowerLawFit::Refused { .. }));
    }

    #[test]
    fn too_few_edges() {
        let g = InteractionNetwork::from_edges(3, [(0, 1, 1.0)]).unwrap();
        assert!(weight_distribution(&g, WeightBinning::default()).is_err());
    }

    #[test]
    fn octave_weights_have_unit_count_slope() {
        // weights 1,2,4,8 with multiplicities 8,4,2,1 on base-2 bins
        let mut edges = Vec::new();
        let mut next = 1;
        for (w, mult) in [(1.0, 8), (2.0, 4), (4.0, 2), (8.0, 1)] {
            for _ in 0..mult {
                edges.push((0, next, w));
                next += 1;
            }
        }
        let g = InteractionNetwork::from_edges(next, edges).unwrap();
        let binning = WeightBinning {
            min_count: 1,
            ..Default::default()
        };
        let wd = weight_distribution(&g, binning).unwrap();
        assert_eq!(
            wd.bins.iter().map(|b| b.count).collect::<Vec<_>>(),
            [8, 4, 2, 1]
        );
        assert_eq!(
            wd.bins.iter().map(|b| b.count).sum::<usize>(),
            g.edge_count()
        );
        match wd.fit {
            PowerLawFit::Fitted {
                count_slope,
                exponent,
                ..
            } => {
                assert!((count_slope + 1.0).abs() < 1e-12, "{count_slope}");
                assert!((exponent - 2.0).abs() < 1e-12, "{exponent}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn compare_identity_and_scaling() {
        let a = table(&[
            ("A", "B", 1.0),
            ("A", "C", 5.0),
            ("B", "C", 2.0),
            ("C", "D", 9.0),
        ]);
        let r = compare_flows(&a, &a, DEFAULT_TOP_K).unwrap();
        assert!((r.r_squared - 1.0).abs() < 1e-12);
        assert!(r.top_ratios.iter().all(|e| e.ratio == 1.0));

        let b = table(&[
            ("A", "B", 2.0),
            ("A", "C", 10.0),
            ("B", "C", 4.0),
            ("C", "D", 18.0),
        ]);
        let r = compare_flows(&a, &b, 2).unwrap();
        assert!((r.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(r.common_pairs, 4);
        assert_eq!(r.top_ratios.len(), 2);
        assert!(r.top_ratios.iter().all(|e| e.ratio == 0.5));
    }

    #[test]
    fn compare_needs_three_common_pairs() {
        let a = table(&[("A", "B", 1.0), ("A", "C", 5.0), ("B", "C", 2.0)]);
        let b = table(&[("A", "B", 1.0), ("A", "C", 5.0), ("C", "D", 2.0)]);
        assert!(compare_flows(&a, &b, 10).is_err());
    }

    #[test]
    fn compare_ranks_by_ratio() {
        let a = table(&[("A", "B", 10.0), ("A", "C", 1.0), ("B", "C", 6.0)]);
        let b = table(&[("A", "B", 2.0), ("A", "C", 1.0), ("B", "C", 2.0)]);
        let r = compare_flows(&a, &b, 10).unwrap();
        let ratios: Vec<f64> = r.top_ratios.iter().map(|e| e.ratio).collect();
        assert_eq!(ratios, [5.0, 3.0, 1.0]);
    }
}
