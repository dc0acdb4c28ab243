//! Check-in records to trajectories, trips and undirected flow tables.

use std::collections::btree_map;
use std::collections::{BTreeMap, HashMap, HashSet};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::geo::{great_circle_distance, CityId, Location};
use crate::{Error, Result};

pub const DEFAULT_FAKE_THRESHOLD_KM: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckInRecord {
    pub user_id: String,
    pub timestamp: DateTime<Utc>,
    /// Where the posting device actually was.
    pub actual_location: Location,
    pub venue_city_id: CityId,
    /// Declared venue position; `None` when the source does not carry it.
    pub venue_location: Option<Location>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub user_id: String,
    pub visits: Vec<(CityId, DateTime<Utc>)>,
}

/// A trip between two distinct cities, in travel order.
pub type Trip = (CityId, CityId);

/// Drops fake check-ins: records whose device location lies farther than
/// `threshold_km` from the declared venue. Records without a venue position
/// are kept.
pub fn filter_fakes(records: &[CheckInRecord], threshold_km: f64) -> Result<Vec<CheckInRecord>> {
    if !(threshold_km > 0.0) || !threshold_km.is_finite() {
        return Err(Error::invalid(format!(
            "fake threshold must be positive, got {threshold_km}"
        )));
    }
    let mut kept = Vec::with_capacity(records.len());
    for r in records {
        let keep = match r.venue_location {
            None => true,
            Some(venue) => great_circle_distance(r.actual_location, venue)? <= threshold_km,
        };
        if keep {
            kept.push(r.clone());
        }
    }
    Ok(kept)
}

/// Groups records by user and orders each user's visits by time.
///
/// Users appear in order of their first record; equal timestamps keep input
/// order. Every venue city must be in `known_cities`.
pub fn build_trajectories(
    records: &[CheckInRecord],
    known_cities: &HashSet<CityId>,
) -> Result<Vec<Trajectory>> {
    let mut slot: HashMap<&str, usize> = HashMap::new();
    let mut out: Vec<Trajectory> = Vec::new();
    for r in records {
        if !known_cities.contains(&r.venue_city_id) {
            return Err(Error::UnknownCity(r.venue_city_id.0.clone()));
        }
        let idx = *slot.entry(r.user_id.as_str()).or_insert_with(|| {
            out.push(Trajectory {
                user_id: r.user_id.clone(),
                visits: Vec::new(),
            });
            out.len() - 1
        });
        out[idx].visits.push((r.venue_city_id.clone(), r.timestamp));
    }
    for t in &mut out {
        // stable sort keeps input order on ties
        t.visits.sort_by_key(|(_, ts)| *ts);
    }
    Ok(out)
}

/// Transitions between consecutive visits to different cities.
///
/// With `max_gap`, a transition whose time gap exceeds it is not a trip.
pub fn extract_trips(t: &Trajectory, max_gap: Option<Duration>) -> Vec<Trip> {
    let mut trips = Vec::new();
    let mut visits = t.visits.iter();
    let Some(mut prev) = visits.next() else {
        return trips;
    };
    for v in visits {
        if v.0 != prev.0 {
            let within_gap = max_gap.is_none_or(|g| v.1 - prev.1 <= g);
            if within_gap {
                trips.push((prev.0.clone(), v.0.clone()));
            }
        }
        prev = v;
    }
    trips
}

/// Undirected interaction strengths keyed by canonically ordered city pairs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FlowTable {
    flows: BTreeMap<(CityId, CityId), f64>,
}

fn canonical(a: CityId, b: CityId) -> (CityId, CityId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl FlowTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `weight` to the undirected pair `{a, b}`.
    pub fn add(&mut self, a: CityId, b: CityId, weight: f64) -> Result<()> {
        if a == b {
            return Err(Error::SelfFlow(a.0));
        }
        if !(weight > 0.0) || !weight.is_finite() {
            return Err(Error::invalid(format!(
                "flow weight must be positive and finite, got {weight} for ({a}, {b})"
            )));
        }
        *self.flows.entry(canonical(a, b)).or_insert(0.0) += weight;
        Ok(())
    }

    pub fn get(&self, a: &CityId, b: &CityId) -> Option<f64> {
        let key = canonical(a.clone(), b.clone());
        self.flows.get(&key).copied()
    }

    pub fn len(&self) -> usize {
        self.flows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flows.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.flows.values().sum()
    }

    /// Pairs in canonical order with their weights.
    pub fn iter(&self) -> impl Iterator<Item = (&CityId, &CityId, f64)> {
        self.flows.iter().map(|((a, b), w)| (a, b, *w))
    }

    /// True if every weight is a whole number, i.e. the table holds trip counts.
    pub fn is_integral(&self) -> bool {
        self.flows.values().all(|w| w.fract() == 0.0)
    }
}

impl<'a> IntoIterator for &'a FlowTable {
    type Item = (&'a (CityId, CityId), &'a f64);
    type IntoIter = btree_map::Iter<'a, (CityId, CityId), f64>;

    fn into_iter(self) -> Self::IntoIter {
        self.flows.iter()
    }
}

/// Counts trips per unordered city pair, summing both directions.
pub fn aggregate_flows<'a>(trips: impl IntoIterator<Item = &'a Trip>) -> Result<FlowTable> {
    let mut table = FlowTable::new();
    for (a, b) in trips {
        table.add(a.clone(), b.clone(), 1.0)?;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn ts(s: i64) -> DateTime<Utc> {
        DateTime::from_timestamp(1_320_000_000 + s, 0).unwrap()
    }

    fn rec(
        user: &str,
        t: i64,
        city: &str,
        actual: (f64, f64),
        venue: Option<(f64, f64)>,
    ) -> CheckInRecord {
        CheckInRecord {
            user_id: user.into(),
            timestamp: ts(t),
            actual_location: Location {
                lat: actual.0,
                lon: actual.1,
            },
            venue_city_id: city.into(),
            venue_location: venue.map(|(lat, lon)| Location { lat, lon }),
        }
    }

    fn traj(visits: &[(&str, i64)]) -> Trajectory {
        Trajectory {
            user_id: "u".into(),
            visits: visits
                .iter()
                .map(|(c, t)| (CityId::from(*c), ts(*t)))
                .collect(),
        }
    }

    fn known(ids: &[&str]) -> HashSet<CityId> {
        ids.iter().map(|s| CityId::from(*s)).collect()
    }

    #[test]
    fn fake_filter_definitions() {
        let same = rec("u", 0, "A", (30.0, 110.0), Some((30.0, 110.0)));
        // 0.45 deg latitude is about 50 km
        let far = rec("u", 1, "A", (30.0, 110.0), Some((30.45, 110.0)));
        let unknown = rec("u", 2, "A", (30.0, 110.0), None);
        let kept = filter_fakes(&[same.clone(), far.clone(), unknown.clone()], 5.0).unwrap();
        assert_eq!(kept, vec![same.clone(), unknown]);
        assert_eq!(
            filter_fakes(std::slice::from_ref(&same), 1e-9).unwrap(),
            vec![same]
        );
        assert_eq!(
            filter_fakes(std::slice::from_ref(&far), 60.0).unwrap(),
            vec![far]
        );
        assert!(filter_fakes(&[], 0.0).is_err());
        assert!(filter_fakes(&[], -1.0).is_err());
    }

    #[test]
    fn fake_filter_matches_brute_force() {
        let mut rng = crate::seed::rng(11, &[]);
        let records: Vec<_> = (0..100)
            .map(|i| {
                let a = (rng.random_range(20.0..45.0), rng.random_range(90.0..125.0));
                let off = rng.random_range(0.0..0.2);
                rec("u", i, "A", a, Some((a.0 + off, a.1 - off)))
            })
            .collect();
        let kept = filter_fakes(&records, 5.0).unwrap();
        // independent haversine
        let brute: Vec<_> = records
            .iter()
            .filter(|r| {
                let v = r.venue_location.unwrap();
                let (p1, p2) = (r.actual_location.lat.to_radians(), v.lat.to_radians());
                let dl = (v.lon - r.actual_location.lon).to_radians();
                let h = ((p2 - p1) / 2.0).sin().powi(2)
                    + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
                2.0 * 6371.0088 * h.sqrt().asin() <= 5.0
            })
            .cloned()
            .collect();
        assert_eq!(kept, brute);
        assert!(!kept.is_empty() && kept.len() < 100);
        assert_eq!(filter_fakes(&kept, 5.0).unwrap(), kept);
    }

    #[test]
    fn trajectories_sorted_and_partitioned() {
        let recs = vec![
            rec("u1", 30, "C", (0.0, 0.0), None),
            rec("u2", 5, "A", (0.0, 0.0), None),
            rec("u1", 10, "A", (0.0, 0.0), None),
            rec("u2", 1, "B", (0.0, 0.0), None),
            rec("u1", 20, "B", (0.0, 0.0), None),
        ];
        let t = build_trajectories(&recs, &known(&["A", "B", "C"])).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].user_id, "u1");
        let cities: Vec<_> = t[0].visits.iter().map(|v| v.0.as_str()).collect();
        assert_eq!(cities, ["A", "B", "C"]);
        let cities: Vec<_> = t[1].visits.iter().map(|v| v.0.as_str()).collect();
        assert_eq!(cities, ["B", "A"]);
    }

    #[test]
    fn trajectory_ties_keep_input_order() {
        let recs = vec![
            rec("u", 5, "B", (0.0, 0.0), None),
            rec("u", 5, "A", (0.0, 0.0), None),
            rec("u", 1, "C", (0.0, 0.0), None),
        ];
        let t = build_trajectories(&recs, &known(&["A", "B", "C"])).unwrap();
        let cities: Vec<_> = t[0].visits.iter().map(|v| v.0.as_str()).collect();
        assert_eq!(cities, ["C", "B", "A"]);
    }

    #[test]
    fn trajectory_unknown_city() {
        let recs = vec![rec("u", 0, "Z", (0.0, 0.0), None)];
        assert!(matches!(
            build_trajectories(&recs, &known(&["A"])),
            Err(Error::UnknownCity(_))
        ));
    }

    #[test]
    fn shuffled_records_recover_generating_sequences() {
        let mut rng = crate::seed::rng(5, &[]);
        let cities: Vec<String> = (0..20).map(|i| format!("c{i}")).collect();
        let city_set: HashSet<CityId> = cities.iter().map(|c| CityId::from(c.as_str())).collect();
        let mut truth: BTreeMap<String, Vec<(CityId, i64)>> = BTreeMap::new();
        let mut records = Vec::new();
        for i in 0..10_000 {
            let user = format!("u{}", rng.random_range(0..300));
            let city = cities[rng.random_range(0..20)].clone();
            // unique timestamps so the ground truth order is unambiguous
            let t = i as i64 * 7;
            truth
                .entry(user.clone())
                .or_default()
                .push((city.as_str().into(), t));
            records.push(rec(&user, t, &city, (0.0, 0.0), None));
        }
        records.shuffle(&mut rng);
        let trajs = build_trajectories(&records, &city_set).unwrap();
        assert_eq!(trajs.len(), truth.len());
        for t in trajs {
            let expect: Vec<_> = truth[&t.user_id]
                .iter()
                .map(|(c, s)| (c.clone(), ts(*s)))
                .collect();
            assert_eq!(t.visits, expect);
        }
    }

    #[test]
    fn trips_from_definitions() {
        let t = traj(&[("A", 1), ("A", 2), ("B", 3), ("C", 4)]);
        let trips = extract_trips(&t, None);
        assert_eq!(
            trips,
            vec![("A".into(), "B".into()), ("B".into(), "C".into())]
        );
        assert!(extract_trips(&traj(&[("A", 1)]), None).is_empty());
        assert!(extract_trips(&traj(&[]), None).is_empty());
    }

    #[test]
    fn trips_respect_max_gap() {
        let t = traj(&[("A", 0), ("B", 100), ("C", 10_000)]);
        let trips = extract_trips(&t, Some(Duration::seconds(500)));
        assert_eq!(trips, vec![("A".into(), "B".into())]);
    }

    #[test]
    fn random_trips_match_adjacent_scan() {
        let mut rng = crate::seed::rng(9, &[]);
        let names = ["A", "B", "C", "D"];
        for _ in 0..50 {
            let visits: Vec<(&str, i64)> = (0..50)
                .map(|i| (names[rng.random_range(0..4)], i))
                .collect();
            let t = traj(&visits);
            let brute = visits.windows(2).filter(|w| w[0].0 != w[1].0).count();
            assert_eq!(extract_trips(&t, None).len(), brute);

            // inserting same-city repeats leaves the trips unchanged
            let mut padded = Vec::new();
            for &(c, s) in &visits {
                padded.push((c, s * 3));
                if rng.random_bool(0.3) {
                    padded.push((c, s * 3 + 1));
                }
            }
            assert_eq!(extract_trips(&traj(&padded), None), extract_trips(&t, None));
        }
    }

    #[test]
    fn aggregate_sums_both_directions() {
        let trips: Vec<Trip> = vec![
            ("A".into(), "B".into()),
            ("B".into(), "A".into()),
            ("A".into(), "B".into()),
        ];
        let table = aggregate_flows(&trips).unwrap();
        assert_eq!(table.len(), 1);
        assert_eq!(table.get(&"B".into(), &"A".into()), Some(3.0));
        assert!(aggregate_flows(&Vec::<Trip>::new()).unwrap().is_empty());
        let bad: Vec<Trip> = vec![("A".into(), "A".into())];
        assert!(matches!(aggregate_flows(&bad), Err(Error::SelfFlow(_))));
    }

    #[test]
    fn aggregate_matches_hash_count() {
        let mut rng = crate::seed::rng(21, &[]);
        let mut trips: Vec<Trip> = Vec::new();
        while trips.len() < 10_000 {
            let (a, b) = (rng.random_range(0..20), rng.random_range(0..20));
            if a != b {
                trips.push((format!("c{a:02}").into(), format!("c{b:02}").into()));
            }
        }
        let mut oracle: HashMap<(String, String), u32> = HashMap::new();
        for (a, b) in &trips {
            let key = if a.0 < b.0 {
                (a.0.clone(), b.0.clone())
            } else {
                (b.0.clone(), a.0.clone())
            };
            *oracle.entry(key).or_default() += 1;
        }
        let table = aggregate_flows(&trips).unwrap();
        assert_eq!(table.len(), oracle.len());
        for ((a, b), n) in oracle {
            assert_eq!(table.get(&a.into(), &b.into()), Some(n as f64));
        }
        assert_eq!(table.total(), 10_000.0);
    }
}
