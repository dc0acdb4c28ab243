//! Great-circle distances and the dense distance matrix.
//!
//!     cargo run --example geo_distances

use spatial_interaction::geo::{great_circle_distance, City, DistanceMatrix};

fn main() -> spatial_interaction::Result<()> {
    let cities = vec![
        City::new("bj", "Beijing", 39.9042, 116.4074)?,
        City::new("sh", "Shanghai", 31.2304, 121.4737)?,
        City::new("gz", "Guangzhou", 23.1291, 113.2644)?,
        City::new("cd", "Chengdu", 30.5728, 104.0668)?,
    ];
    let d = DistanceMatrix::build(&cities)?;
    print!("{:>10}", "");
    for c in &cities {
        print!("{:>10}", c.name);
    }
    println!();
    for (i, c) in cities.iter().enumerate() {
        print!("{:>10}", c.name);
        for j in 0..cities.len() {
            print!("{:>10.1}", d.get(i, j));
        }
        println!();
    }
    let direct = great_circle_distance(cities[0].location, cities[1].location)?;
    println!("\nBeijing-Shanghai: {direct:.3} km");
    Ok(())
}
