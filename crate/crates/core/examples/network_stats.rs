//! Interaction network statistics, weight distribution and flow comparison.
//!
//!     cargo run --release --example network_stats

use std::path::Path;

use spatial_interaction::io;
use spatial_interaction::network::{
    compare_flows, compute_stats, weight_distribution, InteractionNetwork, WeightBinning,
};

fn main() -> spatial_interaction::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/fixture");
    let cities = io::read_cities(&dir.join("cities.csv"))?;
    let flows = io::read_flows(&dir.join("flows.csv"))?;

    let g = InteractionNetwork::build(&flows, &cities)?;
    let s = compute_stats(&g)?;
    println!(
        "nodes {}  edges {}  density {:.3}",
        s.node_count, s.edge_count, s.density
    );
    println!(
        "<k> {:.2}  <l> {:.3}  diameter {}  <C> {:.3}",
        s.avg_degree, s.avg_shortest_path, s.diameter, s.avg_clustering
    );

    let dist = weight_distribution(&g, WeightBinning::default())?;
    for b in &dist.bins {
        println!("  [{:>10.3}, {:>10.3})  {:>4}", b.lo, b.hi, b.count);
    }
    println!(
        "fit: {}",
        serde_json::to_string(&dist.fit).expect("serializable")
    );

    // the noise-free planted flows against a halved copy: a perfect line
    let mut halved = spatial_interaction::FlowTable::new();
    for (a, b, w) in flows.iter() {
        halved.add(a.clone(), b.clone(), w / 2.0)?;
    }
    let cmp = compare_flows(&flows, &halved, 3)?;
    println!(
        "compare: {} common pairs, R^2 {:.6}, slope {:.3}",
        cmp.common_pairs, cmp.r_squared, cmp.slope
    );
    Ok(())
}
