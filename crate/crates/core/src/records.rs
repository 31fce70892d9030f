//! Per-image rows fusing planning status, object counts, position and
//! capture time, with CSV and GeoJSON writers.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::detector::Detection;
use crate::geo::{GeoPoint, TimeParts};
use crate::slumsnet::{PlanningLabel, PlanningStatus};

pub const CSV_HEADER: &str =
    "latitude,longitude,year,month,day,hour,minute,second,planning_status,person,car,bus,motorbike";

pub const COUNTED_CLASSES: [&str; 4] = ["person", "car", "bus", "motorbike"];

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path} line {line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ObjectCounts {
    pub person: u32,
    pub car: u32,
    pub bus: u32,
    pub motorbike: u32,
}

impl ObjectCounts {
    pub fn get(&self, class: &str) -> Option<u32> {
        match class {
            "person" => Some(self.person),
            "car" => Some(self.car),
            "bus" => Some(self.bus),
            "motorbike" => Some(self.motorbike),
            _ => None,
        }
    }

    fn slot(&mut self, class: &str) -> Option<&mut u32> {
        match class {
            "person" => Some(&mut self.person),
            "car" => Some(&mut self.car),
            "bus" => Some(&mut self.bus),
            "motorbike" => Some(&mut self.motorbike),
            _ => None,
        }
    }
}

/// Detections per counted class; other labels are ignored.
pub fn count_by_class(dets: &[Detection]) -> ObjectCounts {
    let mut counts = ObjectCounts::default();
    for d in dets {
        if let Some(slot) = counts.slot(&d.label) {
            *slot += 1;
        }
    }
    counts
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeoRecord {
    pub geo: Option<GeoPoint>,
    pub time: Option<TimeParts>,
    /// 0 planned, 1 unplanned.
    pub planning_status: u8,
    pub counts: ObjectCounts,
    /// Kept for diagnostics; not part of the CSV schema.
    pub source: PathBuf,
}

pub fn make_record(
    source: impl Into<PathBuf>,
    status: &PlanningStatus,
    dets: &[Detection],
    geo: Option<GeoPoint>,
    time: Option<TimeParts>,
) -> GeoRecord {
    GeoRecord {
        geo,
        time,
        planning_status: match status.label {
            PlanningLabel::Planned => 0,
            PlanningLabel::Unplanned => 1,
        },
        counts: count_by_class(dets),
        source: source.into(),
    }
}

fn csv_row(r: &GeoRecord) -> String {
    let mut cells: Vec<String> = Vec::with_capacity(13);
    match r.geo {
        Some(g) => {
            cells.push(format!("{:.6}", g.latitude));
            cells.push(format!("{:.6}", g.longitude));
        }
        None => cells.extend([String::new(), String::new()]),
    }
    match r.time {
        Some(t) => cells.extend(
            [
                t.year as i64,
                t.month as i64,
                t.day as i64,
                t.hour as i64,
                t.minute as i64,
                t.second as i64,
            ]
            .iter()
            .map(|v| v.to_string()),
        ),
        None => cells.extend(std::iter::repeat_n(String::new(), 6)),
    }
    cells.push(r.planning_status.to_string());
    let c = r.counts;
    cells.extend([c.person, c.car, c.bus, c.motorbike].iter().map(|v| v.to_string()));
    cells.join(",")
}

/// CSV text: the fixed header, then one `\n`-terminated row per record.
pub fn to_csv_string(records: &[GeoRecord]) -> String {
    let mut out = String::with_capacity(CSV_HEADER.len() + 1 + records.len() * 64);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&csv_row(r));
        out.push('\n');
    }
    out
}

pub fn write_csv(records: &[GeoRecord], path: impl AsRef<Path>) -> Result<(), RecordError> {
    let path = path.as_ref();
    fs::write(path, to_csv_string(records)).map_err(|source| RecordError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Inverse of [`write_csv`]; `source` is set to the CSV path.
pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<GeoRecord>, RecordError> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|source| RecordError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
    let header = reader
        .headers()
        .map_err(|source| RecordError::Csv {
            path: path.to_path_buf(),
            source,
        })?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    let parse_err = |line: u64, message: String| RecordError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    if header != CSV_HEADER {
        return Err(parse_err(1, format!("unexpected header {header:?}")));
    }
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|source| RecordError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let cell = |i: usize| row.get(i).unwrap_or("");
        fn num<T: std::str::FromStr>(s: &str) -> Result<T, String> {
            s.parse().map_err(|_| format!("invalid number {s:?}"))
        }
        let err = |m: String| parse_err(line, m);

        let geo = match (cell(0), cell(1)) {
            ("", "") => None,
            (lat, lon) => {
                Some(GeoPoint::new(num(lat).map_err(err)?, num(lon).map_err(err)?).map_err(|e| err(e.to_string()))?)
            }
        };
        let time_cells: Vec<&str> = (2..8).map(cell).collect();
        let time = if time_cells.iter().all(|c| c.is_empty()) {
            None
        } else {
            let v: Vec<u32> = time_cells[1..]
                .iter()
                .map(|c| num(c))
                .collect::<Result<_, _>>()
                .map_err(err)?;
            Some(
                TimeParts::new(num(time_cells[0]).map_err(err)?, v[0], v[1], v[2], v[3], v[4])
                    .map_err(|e| err(e.to_string()))?,
            )
        };
        let planning_status: u8 = num(cell(8)).map_err(err)?;
        if planning_status > 1 {
            return Err(err(format!("planning_status must be 0 or 1, got {planning_status}")));
        }
        let counts = ObjectCounts {
            person: num(cell(9)).map_err(err)?,
            car: num(cell(10)).map_err(err)?,
            bus: num(cell(11)).map_err(err)?,
            motorbike: num(cell(12)).map_err(err)?,
        };
        records.push(GeoRecord {
            geo,
            time,
            planning_status,
            counts,
            source: path.to_path_buf(),
        });
    }
    Ok(records)
}

/// FeatureCollection of the geo-bearing records and the number skipped.
pub fn to_geojson(records: &[GeoRecord]) -> (Value, usize) {
    let mut skipped = 0;
    let features: Vec<Value> = records
        .iter()
        .filter_map(|r| {
            let Some(g) = r.geo else {
                skipped += 1;
                return None;
            };
            let mut props = Map::new();
            if let Some(t) = r.time {
                props.insert("year".into(), json!(t.year));
                props.insert("month".into(), json!(t.month));
                props.insert("day".into(), json!(t.day));
                props.insert("hour".into(), json!(t.hour));
                props.insert("minute".into(), json!(t.minute));
                props.insert("second".into(), json!(t.second));
            } else {
                for k in ["year", "month", "day", "hour", "minute", "second"] {
                    props.insert(k.into(), Value::Null);
                }
            }
            props.insert("planning_status".into(), json!(r.planning_status));
            for class in COUNTED_CLASSES {
                props.insert(class.into(), json!(r.counts.get(class)));
            }
            Some(json!({
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [g.longitude, g.latitude]},
                "properties": props,
            }))
        })
        .collect();
    (json!({"type": "FeatureCollection", "features": features}), skipped)
}

/// Writes the GeoJSON view; returns the number of records without geo.
pub fn export_geojson(records: &[GeoRecord], path: impl AsRef<Path>) -> Result<usize, RecordError> {
    let path = path.as_ref();
    let (doc, skipped) = to_geojson(records);
    let io_err = |source| RecordError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut file = io::BufWriter::new(fs::File::create(path).map_err(io_err)?);
    serde_json::to_writer_pretty(&mut file, &doc).map_err(|source| RecordError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    file.write_all(b"\n").map_err(io_err)?;
    file.flush().map_err(io_err)?;
    Ok(skipped)
}
