//! Weighted modularity and multilevel (Louvain) community detection.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::network::InteractionNetwork;
use crate::{seed, Error, Result};

/// Community label per node, relabeled to `0..count` in order of first
/// appearance so that equal partitions compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Partition {
    labels: Vec<usize>,
    count: usize,
}

impl Partition {
    pub fn from_labels(raw: &[usize]) -> Self {
        let mut map: BTreeMap<usize, usize> = BTreeMap::new();
        let labels = raw
            .iter()
            .map(|&l| {
                let next = map.len();
                *map.entry(l).or_insert(next)
            })
            .collect();
        Partition {
            labels,
            count: map.len(),
        }
    }

    pub fn singletons(n: usize) -> Self {
        Partition {
            labels: (0..n).collect(),
            count: n,
        }
    }

    pub fn all_in_one(n: usize) -> Self {
        Partition {
            labels: vec![0; n],
            count: usize::from(n > 0),
        }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.count];
        for (i, &c) in self.labels.iter().enumerate() {
            out[c].push(i);
        }
        out
    }
}

/// `Q = 1/2m * sum_ij [A_ij - k_i k_j / 2m] * delta(c_i, c_j)`, with `m` the
/// total edge weight and `k_i` the weighted degree.
pub fn modularity(g: &InteractionNetwork, p: &Partition) -> Result<f64> {
    if p.len() != g.node_count() {
        return Err(Error::invalid(format!(
            "partition covers {} nodes, graph has {}",
            p.len(),
            g.node_count()
        )));
    }
    let mut two_m = 0.0;
    let mut inner = vec![0.0; p.count()];
    let mut total = vec![0.0; p.count()];
    for e in g.edges() {
        let (ca, cb) = (p.labels[e.a], p.labels[e.b]);
        two_m += 2.0 * e.weight;
        if ca == cb {
            inner[ca] += 2.0 * e.weight;
            total[ca] += 2.0 * e.weight;
        } else {
            total[ca] += e.weight;
            total[cb] += e.weight;
        }
    }
    if !(two_m > 0.0) {
        return Err(Error::degenerate(
            "modularity of a graph without edge weight",
        ));
    }
    Ok(inner
        .iter()
        .zip(&total)
        .map(|(i, t)| i / two_m - (t / two_m) * (t / two_m))
        .sum())
}

/// Working graph of one aggregation level. Self-loops hold the summed
/// internal adjacency `sum_{i,j in C} A_ij` of the community a node stands for.
struct Level {
    adj: Vec<Vec<(usize, f64)>>,
    self_loop: Vec<f64>,
    degree: Vec<f64>,
    two_m: f64,
}

impl Level {
    fn from_network(g: &InteractionNetwork) -> Self {
        let n = g.node_count();
        let adj: Vec<Vec<(usize, f64)>> = (0..n).map(|i| g.neighbors(i).to_vec()).collect();
        let degree = adj.iter().map(|a| a.iter().map(|(_, w)| w).sum()).collect();
        Level {
            adj,
            self_loop: vec![0.0; n],
            degree,
            two_m: g.edges().iter().map(|e| 2.0 * e.weight).sum(),
        }
    }

    fn len(&self) -> usize {
        self.adj.len()
    }

    /// Greedy local moving to a fixed point. Returns the community of each
    /// node and whether anything moved.
    fn local_moves(&self, rng: &mut seed::StreamRng, trace: &mut Vec<f64>) -> (Vec<usize>, bool) {
        let n = self.len();
        let mut comm: Vec<usize> = (0..n).collect();
        let mut tot = self.degree.clone();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let eps = 1e-12 * self.two_m;
        let mut link = vec![0.0; n];
        let mut touched: Vec<usize> = Vec::new();
        let mut moved_any = false;
        loop {
            let mut moved = false;
            for &i in &order {
                let ki = self.degree[i];
                if ki == 0.0 && self.self_loop[i] == 0.0 {
                    continue;
                }
                let own = comm[i];
                for &(j, w) in &self.adj[i] {
                    let c = comm[j];
                    if link[c] == 0.0 {
                        touched.push(c);
                    }
                    link[c] += w;
                }
                tot[own] -= ki;
                let gain = |c: usize, link_c: f64| link_c - tot[c] * ki / self.two_m;
                let stay = gain(own, link[own]);
                let (mut best, mut best_gain) = (own, stay);
                touched.sort_unstable();
                for &c in &touched {
                    if c == own {
                        continue;
                    }
                    let g = gain(c, link[c]);
                    let improves = g > best_gain + eps;
                    let ties_lower = best != own && (g - best_gain).abs() <= eps && c < best;
                    if improves || ties_lower {
                        best = c;
                        best_gain = g;
                    }
                }
                if best != own && best_gain > stay + eps {
                    trace.push(2.0 * (best_gain - stay) / self.two_m);
                    comm[i] = best;
                    moved = true;
                    moved_any = true;
                }
                tot[comm[i]] += ki;
                for &c in &touched {
                    link[c] = 0.0;
                }
                touched.clear();
            }
            if !moved {
                break;
            }
        }
        (comm, moved_any)
    }

    /// Collapses communities into nodes; `comm` must be contiguous.
    fn aggregate(&self, comm: &[usize], count: usize) -> Level {
        let mut edges: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); count];
        let mut self_loop = vec![0.0; count];
        let mut degree = vec![0.0; count];
        for i in 0..self.len() {
            let ci = comm[i];
            self_loop[ci] += self.self_loop[i];
            degree[ci] += self.degree[i];
            for &(j, w) in &self.adj[i] {
                let cj = comm[j];
                if ci == cj {
                    self_loop[ci] += w;
                } else {
                    *edges[ci].entry(cj).or_insert(0.0) += w;
                }
            }
        }
        Level {
            adj: edges.into_iter().map(|m| m.into_iter().collect()).collect(),
            self_loop,
            degree,
            two_m: self.two_m,
        }
    }
}

/// Multilevel modularity maximization. Node visit order is shuffled per level
/// from `seed`; the result is deterministic for a fixed seed.
pub fn detect_multilevel(g: &InteractionNetwork, seed: u64) -> Result<Partition> {
    detect_multilevel_traced(g, seed).map(|(p, _)| p)
}

/// As [`detect_multilevel`], also returning the modularity gain of every
/// accepted move in order.
pub fn detect_multilevel_traced(
    g: &InteractionNetwork,
    seed: u64,
) -> Result<(Partition, Vec<f64>)> {
    let n = g.node_count();
    if n == 0 {
        return Err(Error::invalid("empty graph"));
    }
    let mut trace = Vec::new();
    let mut level = Level::from_network(g);
    if !(level.two_m > 0.0) {
        return Ok((Partition::singletons(n), trace));
    }
    let mut assignment: Vec<usize> = (0..n).collect();
    for depth in 0u64.. {
        let mut rng = seed::rng(seed, &[depth]);
        let (comm, moved) = level.local_moves(&mut rng, &mut trace);
        if !moved {
            break;
        }
        let contiguous = Partition::from_labels(&comm);
        for a in assignment.iter_mut() {
            *a = contiguous.labels[*a];
        }
        level = level.aggregate(&contiguous.labels, contiguous.count);
    }
    Ok((Partition::from_labels(&assignment), trace))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairSplit {
    pub a: usize,
    pub b: usize,
    /// Fraction of runs placing `a` and `b` in different communities.
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsensusResult {
    pub runs: Vec<Partition>,
    pub modularities: Vec<f64>,
    /// Index of the first run with maximal modularity.
    pub reference: usize,
    pub pair_split_frequency: Vec<PairSplit>,
}

impl ConsensusResult {
    pub fn reference_partition(&self) -> &Partition {
        &self.runs[self.reference]
    }
}

pub const DEFAULT_RUNS: usize = 20;

/// Runs detection `runs` times with seeds derived from `seed` and reports how
/// often each pair in `pairs` ends up split.
pub fn consensus(
    g: &InteractionNetwork,
    runs: usize,
    seed: u64,
    pairs: &[(usize, usize)],
) -> Result<ConsensusResult> {
    if runs == 0 {
        return Err(Error::invalid("consensus needs at least one run"));
    }
    let n = g.node_count();
    if let Some(&(a, b)) = pairs.iter().find(|(a, b)| *a >= n || *b >= n) {
        return Err(Error::invalid(format!("pair ({a}, {b}) out of range")));
    }
    let results: Vec<(Partition, f64)> = (0..runs as u64)
        .into_par_iter()
        .map(|r| {
            let p = detect_multilevel(g, seed::derive(seed, &[r]))?;
            let q = if g.total_weight() > 0.0 {
                modularity(g, &p)?
            } else {
                0.0
            };
            Ok((p, q))
        })
        .collect::<Result<_>>()?;
    let (runs_out, modularities): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let mut reference = 0;
    for (i, q) in modularities.iter().enumerate() {
        if *q > modularities[reference] {
            reference = i;
        }
    }
    let pair_split_frequency = pairs
        .iter()
        .map(|&(a, b)| {
            let split = runs_out
                .iter()
                .filter(|p| p.labels[a] != p.labels[b])
                .count();
            PairSplit {
                a,
                b,
                frequency: split as f64 / runs as f64,
            }
        })
        .collect();
    Ok(ConsensusResult {
        runs: runs_out,
        modularities,
        reference,
        pair_split_frequency,
    })
}

/// Connected components of each community within the spatial adjacency
/// relation; a count of 1 means the community is spatially contiguous.
pub fn spatial_connectivity(p: &Partition, adjacency: &[(usize, usize)]) -> Result<Vec<usize>> {
    let n = p.len();
    let mut covered = vec![false; n];
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(a, b) in adjacency {
        if a >= n || b >= n {
            return Err(Error::invalid(format!(
                "adjacency pair ({a}, {b}) out of range"
            )));
        }
        covered[a] = true;
        covered[b] = true;
        if p.labels[a] == p.labels[b] {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    if n > 1 {
        if let Some(missing) = covered.iter().position(|c| !c) {
            return Err(Error::invalid(format!(
                "node {missing} has no spatial neighbours"
            )));
        }
    }
    let mut counts = vec![0; p.count()];
    for i in 0..n {
        if find(&mut parent, i) == i {
            counts[p.labels[i]] += 1;
        }
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture::two_cliques;

    #[test]
    fn relabeling_is_canonical() {
        let a = Partition::from_labels(&[7, 7, 2, 9, 2]);
        assert_eq!(a.labels(), &[0, 0, 1, 2, 1]);
        assert_eq!(a.count(), 3);
        assert_eq!(a, Partition::from_labels(&[1, 1, 0, 5, 0]));
    }

    #[test]
    fn single_edge_singletons() {
        let g = InteractionNetwork::from_edges(2, [(0, 1, 1.0)]).unwrap();
        assert_eq!(modularity(&g, &Partition::singletons(2)).unwrap(), -0.5);
        assert_eq!(modularity(&g, &Partition::all_in_one(2)).unwrap(), 0.0);
    }

    #[test]
    fn modularity_errors() {
        let g = InteractionNetwork::from_edges(3, [(0, 1, 1.0)]).unwrap();
        assert!(modularity(&g, &Partition::singletons(2)).is_err());
        let empty = InteractionNetwork::from_edges(3, []).unwrap();
        assert!(modularity(&empty, &Partition::singletons(3)).is_err());
    }

    #[test]
    fn moves_strictly_increase_modularity() {
        let (g, _) = crate::fixture::planted_partition(4, 15, 0.5, 0.02, 3).unwrap();
        let (p, trace) = detect_multilevel_traced(&g, 11).unwrap();
        assert!(!trace.is_empty());
        assert!(trace.iter().all(|&d| d > 0.0));
        let q0 = modularity(&g, &Partition::singletons(g.node_count())).unwrap();
        let q = modularity(&g, &p).unwrap();
        assert!(
            (q0 + trace.iter().sum::<f64>() - q).abs() < 1e-9,
            "{q0} {q}"
        );
    }

    #[test]
    fn complete_graph_is_one_community() {
        let edges: Vec<_> = (0..8)
            .flat_map(|i| ((i + 1)..8).map(move |j| (i, j, 1.0)))
            .collect();
        let g = InteractionNetwork::from_edges(8, edges).unwrap();
        for s in 0..5 {
            let p = detect_multilevel(&g, s).unwrap();
            assert_eq!(p.count(), 1);
            assert_eq!(modularity(&g, &p).unwrap(), 0.0);
        }
    }

    #[test]
    fn isolated_nodes_stay_singletons() {
        let g = InteractionNetwork::from_edges(5, [(0, 1, 2.0), (1, 2, 2.0)]).unwrap();
        let p = detect_multilevel(&g, 0).unwrap();
        assert_eq!(p.labels()[0], p.labels()[1]);
        assert_ne!(p.labels()[3], p.labels()[4]);
        assert!(detect_multilevel(&InteractionNetwork::from_edges(0, []).unwrap(), 0).is_err());
        let bare = InteractionNetwork::from_edges(3, []).unwrap();
        assert_eq!(
            detect_multilevel(&bare, 0).unwrap(),
            Partition::singletons(3)
        );
    }

    #[test]
    fn weight_scaling_keeps_partition() {
        let (g, _) = crate::fixture::planted_partition(3, 10, 0.6, 0.05, 8).unwrap();
        let scaled = InteractionNetwork::from_edges(
            g.node_count(),
            g.edges().iter().map(|e| (e.a, e.b, e.weight * 3.7)),
        )
        .unwrap();
        for s in 0..5 {
            let p = detect_multilevel(&g, s).unwrap();
            assert_eq!(p, detect_multilevel(&scaled, s).unwrap());
            let (q1, q2) = (
                modularity(&g, &p).unwrap(),
                modularity(&scaled, &p).unwrap(),
            );
            assert!((q1 - q2).abs() < 1e-12);
        }
    }

    #[test]
    fn consensus_identical_runs() {
        let g = two_cliques(5, 0.1).unwrap();
        let pairs = [(0, 1), (4, 5), (0, 9)];
        let c = consensus(&g, 6, 1, &pairs).unwrap();
        assert_eq!(c.runs.len(), 6);
        let freqs: Vec<f64> = c.pair_split_frequency.iter().map(|s| s.frequency).collect();
        assert_eq!(freqs, [0.0, 1.0, 1.0]);

        let one = consensus(&g, 1, 1, &pairs).unwrap();
        assert_eq!(one.reference, 0);
        assert!(one
            .pair_split_frequency
            .iter()
            .all(|s| s.frequency == 0.0 || s.frequency == 1.0));
        assert!(consensus(&g, 0, 1, &pairs).is_err());
    }

    #[test]
    fn connectivity_definitions() {
        let adjacency = [(0, 1), (1, 2), (2, 3)];
        let singles = Partition::singletons(4);
        assert_eq!(
            spatial_connectivity(&singles, &adjacency).unwrap(),
            vec![1; 4]
        );
        // community {0, 3} has no internal path
        let p = Partition::from_labels(&[0, 1, 1, 0]);
        assert_eq!(spatial_connectivity(&p, &adjacency).unwrap(), vec![2, 1]);
        assert!(spatial_connectivity(&Partition::singletons(5), &adjacency).is_err());
    }
}
