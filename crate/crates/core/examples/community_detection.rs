//! Multilevel modularity optimization and 20-run consensus on a planted
//! four-block graph.
//!
//!     cargo run --release --example community_detection

use spatial_interaction::community::{consensus, detect_multilevel_traced, modularity, Partition};
use spatial_interaction::fixture;

fn main() -> spatial_interaction::Result<()> {
    let (g, truth) = fixture::planted_partition(4, 15, 0.5, 0.02, 7)?;
    let (found, gains) = detect_multilevel_traced(&g, 1)?;
    let planted = Partition::from_labels(&truth);
    println!(
        "{} communities, Q = {:.4} after {} moves",
        found.count(),
        modularity(&g, &found)?,
        gains.len()
    );
    println!(
        "planted Q = {:.4}, recovered exactly: {}",
        modularity(&g, &planted)?,
        found == planted
    );

    let n = g.node_count();
    let pairs: Vec<_> = g
        .edges()
        .iter()
        .map(|e| (e.a.min(e.b), e.a.max(e.b)))
        .collect();
    let c = consensus(&g, 20, 3, &pairs)?;
    let (mut inter, mut intra) = (Vec::new(), Vec::new());
    for s in &c.pair_split_frequency {
        if truth[s.a] == truth[s.b] {
            &mut intra
        } else {
            &mut inter
        }
        .push(s.frequency);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    println!(
        "{n} nodes, {} edges; mean split frequency: across blocks {:.2}, within {:.2}",
        pairs.len(),
        mean(&inter),
        mean(&intra)
    );
    Ok(())
}
