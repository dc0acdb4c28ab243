//! City records and great-circle distances.

use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Mean earth radius in kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CityId(pub String);

impl CityId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for CityId {
    fn from(s: &str) -> Self {
        CityId(s.to_owned())
    }
}

impl From<String> for CityId {
    fn from(s: String) -> Self {
        CityId(s)
    }
}

/// A point on the sphere in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub lat: f64,
    pub lon: f64,
}

impl Location {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        let loc = Location { lat, lon };
        loc.validate()?;
        Ok(loc)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lat.is_finite() || !self.lon.is_finite() {
            return Err(Error::invalid(format!(
                "non-finite coordinates ({}, {})",
                self.lat, self.lon
            )));
        }
        if !(-90.0..=90.0).contains(&self.lat) || !(-180.0..=180.0).contains(&self.lon) {
            return Err(Error::invalid(format!(
                "coordinates out of range ({}, {})",
                self.lat, self.lon
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct City {
    pub id: CityId,
    pub name: String,
    pub location: Location,
    /// Administrative region (province) label, if known.
    pub region: Option<String>,
}

impl City {
    pub fn new(id: impl Into<CityId>, name: impl Into<String>, lat: f64, lon: f64) -> Result<Self> {
        Ok(City {
            id: id.into(),
            name: name.into(),
            location: Location::new(lat, lon)?,
            region: None,
        })
    }

    pub fn with_region(mut self, region: impl Into<String>) -> Self {
        self.region = Some(region.into());
        self
    }
}

/// Haversine distance in kilometres on a sphere of radius [`EARTH_RADIUS_KM`].
pub fn great_circle_distance(a: Location, b: Location) -> Result<f64> {
    for loc in [a, b] {
        if !loc.lat.is_finite() || !loc.lon.is_finite() {
            return Err(Error::invalid("non-finite coordinates"));
        }
    }
    Ok(haversine(a, b))
}

fn haversine(a: Location, b: Location) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Maps city ids to dense indices `0..n` in input order.
pub fn index_cities(cities: &[City]) -> Result<HashMap<CityId, usize>> {
    let mut index = HashMap::with_capacity(cities.len());
    for (i, c) in cities.iter().enumerate() {
        if index.insert(c.id.clone(), i).is_some() {
            return Err(Error::DuplicateCity(c.id.0.clone()));
        }
    }
    Ok(index)
}

/// Dense symmetric matrix of pairwise great-circle distances (km).
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    pub fn build(cities: &[City]) -> Result<Self> {
        if cities.len() < 2 {
            return Err(Error::invalid("distance matrix needs at least 2 cities"));
        }
        index_cities(cities)?;
        for c in cities {
            c.location.validate()?;
        }
        let n = cities.len();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                (0..n)
                    .map(|j| match i.cmp(&j) {
                        std::cmp::Ordering::Equal => 0.0,
                        // compute each pair once in (min, max) order so d[i][j] == d[j][i] bitwise
                        std::cmp::Ordering::Less => {
                            haversine(cities[i].location, cities[j].location)
                        }
                        std::cmp::Ordering::Greater => {
                            haversine(cities[j].location, cities[i].location)
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(DistanceMatrix {
            n,
            d: rows.concat(),
        })
    }

    /// Builds a matrix from raw values; used for planar test geometries.
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = f(i, j);
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::invalid(format!("bad distance {v} for ({i}, {j})")));
                }
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        Ok(DistanceMatrix { n, d })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.d[i * self.n..(i + 1) * self.n]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn loc(lat: f64, lon: f64) -> Location {
        Location::new(lat, lon).unwrap()
    }

    #[test]
    fn identity_is_zero() {
        let p = loc(39.9, 116.4);
        assert_eq!(great_circle_distance(p, p).unwrap(), 0.0);
    }

    #[test]
    fn antipodal_is_half_circumference() {
        let d = great_circle_distance(loc(0.0, 0.0), loc(0.0, 180.0)).unwrap();
        assert!((d - std::f64::consts::PI * EARTH_RADIUS_KM).abs() < 1e-6);
        assert!((d - 20015.1).abs() < 0.1);
    }

    #[test]
    fn beijing_shanghai() {
        // hand haversine: 1067.3116 km
        let d = great_circle_distance(loc(39.9042, 116.4074), loc(31.2304, 121.4737)).unwrap();
        assert!((d - 1067.3116).abs() < 1e-3, "{d}");
    }

    #[test]
    fn rejects_non_finite() {
        let bad = Location {
            lat: f64::NAN,
            lon: 0.0,
        };
        assert!(great_circle_distance(bad, loc(0.0, 0.0)).is_err());
        assert!(Location::new(91.0, 0.0).is_err());
        assert!(Location::new(0.0, -180.5).is_err());
    }

    #[test]
    fn matrix_errors() {
        let a = City::new("a", "A", 0.0, 0.0).unwrap();
        assert!(DistanceMatrix::build(std::slice::from_ref(&a)).is_err());
        assert!(matches!(
            DistanceMatrix::build(&[a.clone(), a]),
            Err(Error::DuplicateCity(_))
        ));
    }

    #[test]
    fn coincident_cities_give_zero_matrix() {
        let a = City::new("a", "A", 10.0, 20.0).unwrap();
        let b = City::new("b", "B", 10.0, 20.0).unwrap();
        let m = DistanceMatrix::build(&[a, b]).unwrap();
        assert!(m.d.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matrix_matches_pairwise() {
        let cities = vec![
            City::new("a", "A", 39.9, 116.4).unwrap(),
            City::new("b", "B", 31.2, 121.5).unwrap(),
            City::new("c", "C", 23.1, 113.3).unwrap(),
        ];
        let m = DistanceMatrix::build(&cities).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = great_circle_distance(cities[i].location, cities[j].location).unwrap();
                assert!((m.get(i, j) - expect).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn random_matrix_properties() {
        use rand::Rng;
        let mut rng = crate::seed::rng(3, &[]);
        let cities: Vec<City> = (0..370)
            .map(|i| {
                City::new(
                    format!("c{i}"),
                    "",
                    rng.random_range(18.0..50.0),
                    rng.random_range(75.0..130.0),
                )
                .unwrap()
            })
            .collect();
        let m = DistanceMatrix::build(&cities).unwrap();
        for i in 0..370 {
            assert_eq!(m.get(i, i), 0.0);
            for j in 0..370 {
                assert_eq!(m.get(i, j), m.get(j, i));
                assert!(m.get(i, j) >= 0.0);
            }
        }
        for _ in 0..5000 {
            let (i, j, k) = (
                rng.random_range(0..370),
                rng.random_range(0..370),
                rng.random_range(0..370),
            );
            assert!(m.get(i, k) <= m.get(i, j) + m.get(j, k) + 1e-6);
        }
    }

    proptest! {
        #[test]
        fn symmetric_and_shift_invariant(
            lat1 in -89.0f64..89.0, lon1 in -179.0f64..179.0,
            lat2 in -89.0f64..89.0, lon2 in -179.0f64..179.0,
            shift in -50.0f64..50.0,
        ) {
            let a = Location { lat: lat1, lon: lon1 };
            let b = Location { lat: lat2, lon: lon2 };
            let d = great_circle_distance(a, b).unwrap();
            prop_assert!((d - great_circle_distance(b, a).unwrap()).abs() < 1e-6);
            let a2 = Location { lat: lat1, lon: lon1 + shift };
            let b2 = Location { lat: lat2, lon: lon2 + shift };
            prop_assert!((d - great_circle_distance(a2, b2).unwrap()).abs() < 1e-6);
        }
    }
}
