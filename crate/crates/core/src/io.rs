//! CSV and JSON file formats.
//!
//! | file            | header                                                   |
//! |-----------------|----------------------------------------------------------|
//! | cities          | `id,name,lat,lon,region` (region may be empty)           |
//! | check-ins       | `user_id,timestamp,city_id,lat,lon,venue_lat,venue_lon`  |
//! | flows           | `city_i,city_j,weight`                                   |
//! | labels          | `city_id,community`                                      |
//! | split frequency | `city_a,city_b,split_frequency`                          |

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::community::{PairSplit, Partition};
use crate::geo::{index_cities, City, CityId, Location};
use crate::ingest::{CheckInRecord, FlowTable};
use crate::{Error, Result};

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads every row of a headed CSV file into `T`.
pub fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err(path))?;
    reader
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(csv_err(path))
}

/// Writes rows with a header derived from `T`'s field names.
pub fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for row in rows {
        writer.serialize(row).map_err(csv_err(path))?;
    }
    writer.flush().map_err(io_err(path))
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    out.write_all(b"\n")
        .and_then(|_| out.flush())
        .map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct CityRow {
    id: String,
    name: String,
    lat: f64,
    lon: f64,
    region: Option<String>,
}

pub fn read_cities(path: &Path) -> Result<Vec<City>> {
    let rows: Vec<CityRow> = read_rows(path)?;
    let cities = rows
        .into_iter()
        .map(|r| {
            let city = City::new(r.id, r.name, r.lat, r.lon)?;
            Ok(match r.region.filter(|s| !s.is_empty()) {
                Some(region) => city.with_region(region),
                None => city,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    index_cities(&cities)?;
    Ok(cities)
}

pub fn write_cities(path: &Path, cities: &[City]) -> Result<()> {
    write_rows(
        path,
        cities.iter().map(|c| CityRow {
            id: c.id.0.clone(),
            name: c.name.clone(),
            lat: c.location.lat,
            lon: c.location.lon,
            region: c.region.clone(),
        }),
    )
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckInRow {
    user_id: String,
    timestamp: String,
    city_id: String,
    lat: f64,
    lon: f64,
    #[serde(default)]
    venue_lat: Option<f64>,
    #[serde(default)]
    venue_lon: Option<f64>,
}

pub fn read_checkins(path: &Path) -> Result<Vec<CheckInRecord>> {
    let rows: Vec<CheckInRow> = read_rows(path)?;
    rows.into_iter()
        .enumerate()
        .map(|(line, r)| {
            let timestamp = DateTime::parse_from_rfc3339(&r.timestamp)
                .map_err(|e| {
                    Error::invalid(format!(
                        "{}: row {}: bad timestamp `{}`: {e}",
                        path.display(),
                        line + 1,
                        r.timestamp
                    ))
                })?
                .with_timezone(&Utc);
            let venue_location = match (r.venue_lat, r.venue_lon) {
                (Some(lat), Some(lon)) => Some(Location::new(lat, lon)?),
                (None, None) => None,
                _ => {
                    return Err(Error::invalid(format!(
                        "{}: row {}: venue_lat and venue_lon must both be present or both empty",
                        path.display(),
                        line + 1
                    )))
                }
            };
            Ok(CheckInRecord {
                user_id: r.user_id,
                timestamp,
                actual_location: Location::new(r.lat, r.lon)?,
                venue_city_id: CityId(r.city_id),
                venue_location,
            })
        })
        .collect()
}

pub fn write_checkins(path: &Path, records: &[CheckInRecord]) -> Result<()> {
    write_rows(
        path,
        records.iter().map(|r| CheckInRow {
            user_id: r.user_id.clone(),
            timestamp: r.timestamp.to_rfc3339_opts(SecondsFormat::Secs, true),
            city_id: r.venue_city_id.0.clone(),
            lat: r.actual_location.lat,
            lon: r.actual_location.lon,
            venue_lat: r.venue_location.map(|v| v.lat),
            venue_lon: r.venue_location.map(|v| v.lon),
        }),
    )
}

#[derive(Debug, Serialize, Deserialize)]
struct FlowRow {
    city_i: String,
    city_j: String,
    weight: f64,
}

/// Reads pre-aggregated flows; repeated pairs (in either order) accumulate.
pub fn read_flows(path: &Path) -> Result<FlowTable> {
    let rows: Vec<FlowRow> = read_rows(path)?;
    let mut table = FlowTable::new();
    for r in rows {
        table.add(CityId(r.city_i), CityId(r.city_j), r.weight)?;
    }
    Ok(table)
}

pub fn write_flows(path: &Path, flows: &FlowTable) -> Result<()> {
    write_rows(
        path,
        flows.iter().map(|(a, b, w)| FlowRow {
            city_i: a.0.clone(),
            city_j: b.0.clone(),
            weight: w,
        }),
    )
}

#[derive(Debug, Serialize, Deserialize)]
struct LabelRow {
    city_id: String,
    community: usize,
}

/// Labels for every city in `cities`, returned in `cities` order.
pub fn read_labels(path: &Path, cities: &[City]) -> Result<Partition> {
    let rows: Vec<LabelRow> = read_rows(path)?;
    let index = index_cities(cities)?;
    let mut labels: Vec<Option<usize>> = vec![None; cities.len()];
    for r in rows {
        let i = *index
            .get(&CityId(r.city_id.clone()))
            .ok_or(Error::UnknownCity(r.city_id.clone()))?;
        if labels[i].replace(r.community).is_some() {
            return Err(Error::invalid(format!(
                "city `{}` labelled twice",
                r.city_id
            )));
        }
    }
    let labels = labels
        .into_iter()
        .zip(cities)
        .map(|(l, c)| {
            l.ok_or_else(|| Error::invalid(format!("city `{}` has no community label", c.id)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Partition::from_labels(&labels))
}

pub fn write_labels(path: &Path, cities: &[City], p: &Partition) -> Result<()> {
    if p.len() != cities.len() {
        return Err(Error::invalid("partition and city list differ in length"));
    }
    write_rows(
        path,
        cities
            .iter()
            .zip(p.labels())
            .map(|(c, &community)| LabelRow {
                city_id: c.id.0.clone(),
                community,
            }),
    )
}

#[derive(Debug, Serialize, Deserialize)]
struct SplitRow {
    city_a: String,
    city_b: String,
    split_frequency: f64,
}

/// Split frequencies keyed by `(min, max)` city index.
pub fn read_split_frequencies(
    path: &Path,
    cities: &[City],
) -> Result<HashMap<(usize, usize), f64>> {
    let rows: Vec<SplitRow> = read_rows(path)?;
    let index = index_cities(cities)?;
    let lookup = |id: &str| {
        index
            .get(&CityId(id.to_string()))
            .copied()
            .ok_or_else(|| Error::UnknownCity(id.to_string()))
    };
    let mut out = HashMap::new();
    for r in rows {
        let (a, b) = (lookup(&r.city_a)?, lookup(&r.city_b)?);
        if a == b {
            return Err(Error::SelfFlow(r.city_a));
        }
        out.insert((a.min(b), a.max(b)), r.split_frequency);
    }
    Ok(out)
}

pub fn write_split_frequencies(path: &Path, cities: &[City], splits: &[PairSplit]) -> Result<()> {
    write_rows(
        path,
        splits.iter().map(|s| SplitRow {
            city_a: cities[s.a].id.0.clone(),
            city_b: cities[s.b].id.0.clone(),
            split_frequency: s.frequency,
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn temp(name: &str, body: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(name);
        fs::write(&path, body).unwrap();
        (dir, path)
    }

    #[test]
    fn cities_round_trip() {
        let (dir, path) = temp(
            "cities.csv",
            "id,name,lat,lon,region\nbj,Beijing,39.9,116.4,north\nsh,Shanghai,31.2,121.5,\n",
        );
        let cities = read_cities(&path).unwrap();
        assert_eq!(cities[0].region.as_deref(), Some("north"));
        assert_eq!(cities[1].region, None);
        let out = dir.path().join("out.csv");
        write_cities(&out, &cities).unwrap();
        assert_eq!(read_cities(&out).unwrap(), cities);
    }

    #[test]
    fn duplicate_and_bad_cities() {
        let (_d, path) = temp("c.csv", "id,name,lat,lon,region\na,A,1,1,\na,B,2,2,\n");
        assert!(matches!(read_cities(&path), Err(Error::DuplicateCity(_))));
        let (_d, path) = temp("c.csv", "id,name,lat,lon,region\na,A,91,1,\n");
        assert!(matches!(read_cities(&path), Err(Error::Invalid(_))));
        let err = read_cities(Path::new("/nonexistent/cities.csv")).unwrap_err();
        assert!(err.is_io());
    }

    #[test]
    fn checkins_with_and_without_venue() {
        let body = "user_id,timestamp,city_id,lat,lon,venue_lat,venue_lon\n\
                    u1,2013-05-01T08:00:00Z,bj,39.9,116.4,39.9,116.4\n\
                    u1,2013-05-02T09:30:00+08:00,sh,31.2,121.5,,\n";
        let (dir, path) = temp("checkins.csv", body);
        let recs = read_checkins(&path).unwrap();
        assert_eq!(recs.len(), 2);
        assert!(recs[0].venue_location.is_some());
        assert!(recs[1].venue_location.is_none());
        assert_eq!(recs[1].timestamp.to_rfc3339(), "2013-05-02T01:30:00+00:00");
        let out = dir.path().join("out.csv");
        write_checkins(&out, &recs).unwrap();
        assert_eq!(read_checkins(&out).unwrap(), recs);

        let (_d, bad) = temp(
            "bad.csv",
            "user_id,timestamp,city_id,lat,lon\nu,yesterday,bj,1,1\n",
        );
        assert!(read_checkins(&bad).is_err());
    }

    #[test]
    fn flows_accumulate_and_round_trip() {
        let (dir, path) = temp("flows.csv", "city_i,city_j,weight\nb,a,2\na,b,3\na,c,1.5\n");
        let flows = read_flows(&path).unwrap();
        assert_eq!(flows.get(&"a".into(), &"b".into()), Some(5.0));
        let out = dir.path().join("out.csv");
        write_flows(&out, &flows).unwrap();
        assert_eq!(
            fs::read_to_string(&out).unwrap(),
            "city_i,city_j,weight\na,b,5.0\na,c,1.5\n"
        );
        let (_d, self_flow) = temp("s.csv", "city_i,city_j,weight\na,a,1\n");
        assert!(read_flows(&self_flow).is_err());
    }

    #[test]
    fn labels_cover_every_city() {
        let cities = vec![
            City::new("a", "A", 0.0, 0.0).unwrap(),
            City::new("b", "B", 1.0, 1.0).unwrap(),
        ];
        let (dir, path) = temp("labels.csv", "city_id,community\nb,7\na,3\n");
        let p = read_labels(&path, &cities).unwrap();
        assert_eq!(p.labels(), &[0, 1]);
        let out = dir.path().join("out.csv");
        write_labels(&out, &cities, &p).unwrap();
        assert_eq!(read_labels(&out, &cities).unwrap(), p);
        let (_d, partial) = temp("l.csv", "city_id,community\na,0\n");
        assert!(read_labels(&partial, &cities).is_err());
    }

    #[test]
    fn split_frequencies_are_unordered() {
        let cities = vec![
            City::new("a", "A", 0.0, 0.0).unwrap(),
            City::new("b", "B", 1.0, 1.0).unwrap(),
        ];
        let (_d, path) = temp("split.csv", "city_a,city_b,split_frequency\nb,a,0.25\n");
        let m = read_split_frequencies(&path, &cities).unwrap();
        assert_eq!(m.get(&(0, 1)), Some(&0.25));
    }
}
