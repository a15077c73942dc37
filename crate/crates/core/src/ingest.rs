//! Reading and writing point recordings.
//!
//! Recordings are comma-separated UTF-8 text with a header row naming at least
//! the columns `timestamp,lat,lon,category,id`. Extra columns are ignored.
//! Timestamps are epoch seconds, or epoch milliseconds when larger than 1e12.
//! Bad rows are skipped and listed in the [`IngestReport`]; only a broken
//! header or an unreadable stream aborts parsing.

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::GeoPoint;
use crate::trajectory::{Category, DataPoint, Source};

pub const HEADER: [&str; 5] = ["timestamp", "lat", "lon", "category", "id"];

/// Timestamps above this are interpreted as milliseconds.
pub const MILLISECOND_THRESHOLD: f64 = 1e12;

/// One data row as read from the file.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub line_number: u64,
    pub fields: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub line_number: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub source: Source,
    pub accepted: usize,
    pub rejected: usize,
    pub rejection_reasons: Vec<Rejection>,
}

struct Columns {
    timestamp: usize,
    lat: usize,
    lon: usize,
    category: usize,
    id: usize,
}

impl Columns {
    fn from_header(header: &csv::StringRecord) -> Result<Self> {
        let find = |name: &str| {
            header
                .iter()
                .position(|h| h.trim().trim_start_matches('\u{feff}').eq_ignore_ascii_case(name))
                .ok_or_else(|| Error::Schema(format!("missing header column {name:?}")))
        };
        Ok(Self {
            timestamp: find("timestamp")?,
            lat: find("lat")?,
            lon: find("lon")?,
            category: find("category")?,
            id: find("id")?,
        })
    }
}

fn field<'a>(record: &'a RawRecord, idx: usize, name: &str) -> std::result::Result<&'a str, String> {
    record
        .fields
        .get(idx)
        .map(|s| s.trim())
        .ok_or_else(|| format!("missing field {name}"))
}

fn number(text: &str, name: &str) -> std::result::Result<f64, String> {
    text.parse::<f64>()
        .map_err(|_| format!("unparseable {name} {text:?}"))
}

fn parse_record(record: &RawRecord, cols: &Columns) -> std::result::Result<DataPoint, String> {
    let mut timestamp_s = number(field(record, cols.timestamp, "timestamp")?, "timestamp")?;
    if !timestamp_s.is_finite() || timestamp_s <= 0.0 {
        return Err(format!("invalid timestamp {timestamp_s}"));
    }
    if timestamp_s > MILLISECOND_THRESHOLD {
        timestamp_s /= 1000.0;
    }
    let lat = number(field(record, cols.lat, "lat")?, "latitude")?;
    if !(-90.0..=90.0).contains(&lat) {
        return Err(format!("latitude {lat} out of range [-90, 90]"));
    }
    let lon = number(field(record, cols.lon, "lon")?, "longitude")?;
    if !(-180.0..=180.0).contains(&lon) {
        return Err(format!("longitude {lon} out of range [-180, 180]"));
    }
    let category_token = field(record, cols.category, "category")?;
    let category: Category = category_token
        .parse()
        .map_err(|_| format!("unknown category {category_token:?}"))?;
    let id = field(record, cols.id, "id")?;
    if id.is_empty() {
        return Err("empty id".to_string());
    }
    let position = GeoPoint::new(lat, lon).map_err(|e| e.to_string())?;
    DataPoint::new(timestamp_s, position, category, id).map_err(|e| e.to_string())
}

/// Parses a recording. Output order follows the file.
pub fn parse_stream<R: Read>(input: R, source: Source) -> Result<(Vec<DataPoint>, IngestReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    let header = reader.headers()?.clone();
    let cols = Columns::from_header(&header)?;

    let mut points = Vec::new();
    let mut report = IngestReport {
        source,
        accepted: 0,
        rejected: 0,
        rejection_reasons: Vec::new(),
    };
    let mut seen: HashSet<(String, u64)> = HashSet::new();

    for row in reader.records() {
        let row = match row {
            Ok(row) => row,
            Err(e) => match e.kind() {
                csv::ErrorKind::Io(_) => return Err(e.into()),
                _ => {
                    let line_number = e.position().map_or(0, |p| p.line());
                    report.rejected += 1;
                    report.rejection_reasons.push(Rejection {
                        line_number,
                        reason: format!("malformed record: {e}"),
                    });
                    continue;
                }
            },
        };
        let record = RawRecord {
            line_number: row.position().map_or(0, |p| p.line()),
            fields: row.iter().map(str::to_owned).collect(),
        };
        let outcome = parse_record(&record, &cols).and_then(|p| {
            if seen.insert((p.object_id.clone(), p.timestamp_s.to_bits())) {
                Ok(p)
            } else {
                Err(format!("duplicate id {:?} within frame", p.object_id))
            }
        });
        match outcome {
            Ok(p) => {
                report.accepted += 1;
                points.push(p);
            }
            Err(reason) => {
                report.rejected += 1;
                report.rejection_reasons.push(Rejection {
                    line_number: record.line_number,
                    reason,
                });
            }
        }
    }
    Ok((points, report))
}

pub fn read_file(path: impl AsRef<Path>, source: Source) -> Result<(Vec<DataPoint>, IngestReport)> {
    parse_stream(File::open(path)?, source)
}

/// Writes points in the ingest format. Numbers use the shortest
/// representation that parses back to the same value.
pub fn write_points<W: Write>(out: W, points: &[DataPoint]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(HEADER)?;
    for p in points {
        writer.write_record([
            p.timestamp_s.to_string(),
            p.position.lat_deg.to_string(),
            p.position.lon_deg.to_string(),
            p.category.to_string(),
            p.object_id.clone(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_file(path: impl AsRef<Path>, points: &[DataPoint]) -> Result<()> {
    write_points(File::create(path)?, points)
}

/// Shifts every timestamp by `offset_s`.
pub fn apply_clock_offset(points: &[DataPoint], offset_s: f64) -> Result<Vec<DataPoint>> {
    if !offset_s.is_finite() {
        return Err(Error::InvalidArgument(format!("clock offset {offset_s} is not finite")));
    }
    points
        .iter()
        .map(|p| {
            let t = p.timestamp_s + offset_s;
            if t <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "offset {offset_s} makes timestamp {} non-positive",
                    p.timestamp_s
                )));
            }
            Ok(DataPoint {
                timestamp_s: t,
                ..p.clone()
            })
        })
        .collect()
}
