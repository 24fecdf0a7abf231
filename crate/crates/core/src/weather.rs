//! Typical-year ambient temperature series.
//!
//! A series maps minute-of-year to a temperature and is looked up by
//! calendar position with the year ignored, so one typical-year file
//! serves any simulated date. Values step-hold: a query returns the most
//! recent sample at or before it. February 29 has no slot in a typical
//! year and is rejected.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDateTime, Timelike};

use crate::error::{Error, Result};

/// Cumulative days before each month in a non-leap year.
const CUM_DAYS: [u32; 12] = [0, 31, 59, 90, 120, 151, 181, 212, 243, 273, 304, 334];

/// Minutes into a non-leap reference year, ignoring the actual year.
pub fn minute_of_year(t: NaiveDateTime) -> Result<u32> {
    let (month, day) = (t.month(), t.day());
    if month == 2 && day == 29 {
        return Err(Error::InvalidInput(
            "February 29 has no slot in a typical-year series".into(),
        ));
    }
    let days = CUM_DAYS[(month - 1) as usize] + (day - 1);
    Ok((days * 24 + t.hour()) * 60 + t.minute())
}

/// Temperatures keyed by minute-of-year, sampled irregularly, read with
/// step-hold.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbientSeries {
    keys: Vec<u32>,
    temps_c: Vec<f64>,
}

impl AmbientSeries {
    /// Builds a series from timestamped samples. Timestamps must map to
    /// strictly increasing minutes-of-year (so a file spanning several
    /// calendar years, which would wrap, is rejected).
    pub fn from_points(points: &[(NaiveDateTime, f64)]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput(
                "an ambient series needs at least one sample".into(),
            ));
        }
        let mut keys = Vec::with_capacity(points.len());
        let mut temps_c = Vec::with_capacity(points.len());
        for &(t, temp) in points {
            let key = minute_of_year(t)?;
            if let Some(&last) = keys.last() {
                if key <= last {
                    return Err(Error::InvalidInput(format!(
                        "series timestamps must be strictly increasing within the year \
                         (offending sample at {t})"
                    )));
                }
            }
            if !temp.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "non-finite temperature {temp} at {t}"
                )));
            }
            keys.push(key);
            temps_c.push(temp);
        }
        Ok(Self { keys, temps_c })
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Step-hold lookup: the most recent sample at or before `t`, with the
    /// year ignored. Errors if `t` precedes the first sample of the year.
    pub fn at(&self, t: NaiveDateTime) -> Result<f64> {
        let key = minute_of_year(t)?;
        let idx = self.keys.partition_point(|&k| k <= key);
        if idx == 0 {
            return Err(Error::OutOfRange(format!(
                "requested time {t} precedes the first sample of the year"
            )));
        }
        Ok(self.temps_c[idx - 1])
    }
}

const TIMESTAMP_FORMATS: [&str; 5] = [
    "%Y%m%d:%H%M",
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%d %H:%M",
    "%Y-%m-%d %H:%M:%S",
];

fn parse_timestamp(field: &str) -> Option<NaiveDateTime> {
    TIMESTAMP_FORMATS
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(field, fmt).ok())
}

/// Parses a typical-year CSV export: any number of metadata lines, then a
/// header row naming `column`, then one `timestamp,...` row per sample
/// until a blank line or the end of input.
///
/// The first field of each data row is the timestamp (compact
/// `YYYYMMDD:HHMM` or ISO-like forms). Malformed data rows report their
/// 1-based line number.
pub fn parse_tmy_csv<R: Read>(reader: R, column: &str) -> Result<AmbientSeries> {
    let mut lines = BufReader::new(reader).lines();
    let mut line_no = 0usize;

    // Skip metadata until the header row that names the column.
    let temp_idx = loop {
        let Some(line) = lines.next() else {
            return Err(Error::Parse {
                line: line_no,
                message: format!("no header row names a {column} column"),
            });
        };
        line_no += 1;
        let line = line?;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if let Some(idx) = fields.iter().position(|f| *f == column) {
            if idx == 0 {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("column {column} cannot be the timestamp column"),
                });
            }
            break idx;
        }
    };

    let mut points = Vec::new();
    for line in lines {
        line_no += 1;
        let line = line?;
        if line.trim().is_empty() {
            break; // trailing metadata follows the data block
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() <= temp_idx {
            return Err(Error::Parse {
                line: line_no,
                message: format!(
                    "expected at least {} fields, found {}",
                    temp_idx + 1,
                    fields.len()
                ),
            });
        }
        let t = parse_timestamp(fields[0]).ok_or_else(|| Error::Parse {
            line: line_no,
            message: format!("unrecognized timestamp {:?}", fields[0]),
        })?;
        let temp: f64 = fields[temp_idx].parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("unreadable temperature {:?}", fields[temp_idx]),
        })?;
        points.push((t, temp));
    }
    if points.is_empty() {
        return Err(Error::Parse {
            line: line_no,
            message: "no data rows follow the header".into(),
        });
    }
    AmbientSeries::from_points(&points)
}

/// Reads and parses a typical-year CSV file.
pub fn load_tmy_csv(path: &Path, column: &str) -> Result<AmbientSeries> {
    parse_tmy_csv(File::open(path)?, column)
}

/// Samples the series at `steps` instants starting at `start`, spaced
/// `step_minutes` apart, with step-hold between samples.
pub fn series_for_window(
    series: &AmbientSeries,
    start: NaiveDateTime,
    steps: usize,
    step_minutes: f64,
) -> Result<Vec<f64>> {
    if !(step_minutes.is_finite() && step_minutes > 0.0) {
        return Err(Error::InvalidInput(format!(
            "step_minutes must be positive, got {step_minutes}"
        )));
    }
    let mut out = Vec::with_capacity(steps);
    for k in 0..steps {
        let offset_s = (k as f64 * step_minutes * 60.0).round() as i64;
        let t = start + Duration::seconds(offset_s);
        out.push(series.at(t)?);
    }
    Ok(out)
}
