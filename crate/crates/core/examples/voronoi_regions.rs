//! Voronoi cells of the fixture cities merged by region into a GeoJSON map.
//!
//!     cargo run --release --example voronoi_regions > regions.geojson

use std::collections::HashMap;
use std::path::Path;

use spatial_interaction::community::Partition;
use spatial_interaction::io;
use spatial_interaction::spatialize::{
    city_points, merge_regions, to_geojson, voronoi, Rect, DEFAULT_CLIP_PADDING,
};

fn main() -> spatial_interaction::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/fixture");
    let cities = io::read_cities(&dir.join("cities.csv"))?;
    let clip = Rect::around(&city_points(&cities), DEFAULT_CLIP_PADDING)?;
    let v = voronoi(&cities, clip)?;

    let mut region_ids: HashMap<&str, usize> = HashMap::new();
    let labels: Vec<usize> = cities
        .iter()
        .map(|c| {
            let next = region_ids.len();
            *region_ids
                .entry(c.region.as_deref().unwrap_or(""))
                .or_insert(next)
        })
        .collect();
    let split: HashMap<_, _> = v.neighbors.iter().map(|&p| (p, 1.0)).collect();
    let map = merge_regions(&v, &Partition::from_labels(&labels), &split)?;

    eprintln!(
        "{} cells, {} neighbour pairs, {} regions, {} border segments",
        v.cells.len(),
        v.neighbors.len(),
        map.regions.len(),
        map.borders.len()
    );
    eprintln!("area {:.6} of clip {:.6}", map.area(), clip.area());
    println!(
        "{}",
        serde_json::to_string_pretty(&to_geojson(&map, &cities)).expect("serializable")
    );
    Ok(())
}
