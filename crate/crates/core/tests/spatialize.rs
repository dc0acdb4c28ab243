use std::collections::{BTreeSet, HashMap};

use rand::Rng;
use spatial_interaction::community::Partition;
use spatial_interaction::seed;
use spatial_interaction::spatialize::{
    merge_regions, signed_area, to_geojson, voronoi_points, Point, Rect,
};

fn cloud(centre: (f64, f64), n: usize, rng: &mut impl Rng) -> Vec<Point> {
    (0..n)
        .map(|_| {
            Point::new(
                centre.0 + rng.random_range(-5.0..5.0),
                centre.1 + rng.random_range(-5.0..5.0),
            )
        })
        .collect()
}

#[test]
fn two_clusters_give_two_polygons_and_conserve_area() {
    let mut rng = seed::rng(3, &[]);
    let mut pts = cloud((20.0, 20.0), 25, &mut rng);
    pts.extend(cloud((80.0, 60.0), 25, &mut rng));
    let clip = Rect::around(&pts, 0.05).unwrap();
    let v = voronoi_points(&pts, clip).unwrap();
    let labels: Vec<usize> = (0..50).map(|i| i / 25).collect();
    let freq: HashMap<_, _> = v.neighbors.iter().map(|&p| (p, 1.0)).collect();
    let map = merge_regions(&v, &Partition::from_labels(&labels), &freq).unwrap();
    assert_eq!(map.regions.len(), 2);
    assert!(map.regions.iter().all(|r| r.polygons.len() == 1));
    let rel = (map.area() / clip.area() - 1.0).abs();
    assert!(rel < 1e-9, "area rel err {rel}");
    assert!(map.regions.iter().all(|r| r.polygons[0].holes.is_empty()));
}

#[test]
fn singleton_communities_keep_every_neighbor_edge_as_border() {
    let mut rng = seed::rng(5, &[]);
    let pts = cloud((0.0, 0.0), 60, &mut rng);
    let v = voronoi_points(&pts, Rect::new(-6.0, -6.0, 6.0, 6.0).unwrap()).unwrap();
    let freq: HashMap<_, _> = v.neighbors.iter().map(|&p| (p, 0.5)).collect();
    let map = merge_regions(&v, &Partition::singletons(60), &freq).unwrap();
    let borders: BTreeSet<(usize, usize)> = map.borders.iter().map(|b| (b.a, b.b)).collect();
    assert_eq!(borders, v.neighbors.iter().copied().collect());
    for (cell, region) in v.cells.iter().zip(&map.regions) {
        assert_eq!(region.polygons.len(), 1);
        assert!((region.area() - cell.area()).abs() < 1e-9);
    }
}

#[test]
fn cells_are_disjoint_cover_and_neighbors_are_symmetric() {
    let mut rng = seed::rng(6, &[]);
    let pts = cloud((0.0, 0.0), 120, &mut rng);
    let clip = Rect::new(-5.0, -5.0, 5.0, 5.0).unwrap();
    let v = voronoi_points(&pts, clip).unwrap();
    let total: f64 = v.cells.iter().map(|c| c.area()).sum();
    assert!((total / clip.area() - 1.0).abs() < 1e-9);
    for (i, c) in v.cells.iter().enumerate() {
        assert!(c.area() > 0.0);
        assert!(c.contains(pts[i], 0.0));
        assert!(signed_area(&c.vertices) > 0.0, "counter-clockwise");
    }
    for &(a, b) in &v.neighbors {
        let (p, q) = v.shared_edge(a, b).unwrap();
        let mid = Point::new((p.x + q.x) / 2.0, (p.y + q.y) / 2.0);
        assert!((mid.dist(pts[a]) - mid.dist(pts[b])).abs() < 1e-9);
    }
}

#[test]
fn geojson_rings_are_closed_and_oriented() {
    let mut rng = seed::rng(8, &[]);
    let pts = cloud((0.0, 0.0), 40, &mut rng);
    let v = voronoi_points(&pts, Rect::new(-6.0, -6.0, 6.0, 6.0).unwrap()).unwrap();
    let labels: Vec<usize> = pts
        .iter()
        .map(|p| usize::from(p.x > 0.0) + 2 * usize::from(p.y > 0.0))
        .collect();
    let freq: HashMap<_, _> = v.neighbors.iter().map(|&p| (p, 0.25)).collect();
    let map = merge_regions(&v, &Partition::from_labels(&labels), &freq).unwrap();
    let gj = to_geojson(&map, &[]);
    for f in gj["features"].as_array().unwrap() {
        let geom = &f["geometry"];
        let polys: Vec<&serde_json::Value> = match geom["type"].as_str().unwrap() {
            "Polygon" => vec![&geom["coordinates"]],
            "MultiPolygon" => geom["coordinates"].as_array().unwrap().iter().collect(),
            "LineString" => {
                assert_eq!(f["properties"]["split_frequency"], 0.25);
                continue;
            }
            other => panic!("unexpected geometry {other}"),
        };
        for poly in polys {
            for (k, ring) in poly.as_array().unwrap().iter().enumerate() {
                let ring: Vec<Point> = ring
                    .as_array()
                    .unwrap()
                    .iter()
                    .map(|c| Point::new(c[0].as_f64().unwrap(), c[1].as_f64().unwrap()))
                    .collect();
                assert!(ring.len() >= 4);
                assert_eq!(ring.first(), ring.last());
                let area = signed_area(&ring[..ring.len() - 1]);
                // exterior counter-clockwise, holes clockwise
                assert_eq!(area > 0.0, k == 0);
            }
        }
    }
}
