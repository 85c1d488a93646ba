//! Trajectory and odometry CSV files.
//!
//! Trajectories use the header `timestamp,x,y,theta`. Odometry files use
//! either `timestamp,dx,dy,dtheta` (body-frame increments) or the absolute
//! trajectory header, in which case poses are converted to increments.
//! Numbers are written in shortest round-trip form, so reading a written file
//! reproduces the exact bits.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use crate::odometry::{increments_from_absolute, OdometrySample};
use crate::se2::Pose2;

pub const TRAJECTORY_HEADER: [&str; 4] = ["timestamp", "x", "y", "theta"];
pub const ODOMETRY_HEADER: [&str; 4] = ["timestamp", "dx", "dy", "dtheta"];

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: timestamp {next} does not increase past {prev}")]
    NonIncreasing { line: u64, prev: f64, next: f64 },
    #[error("line 1: unexpected header {found:?}")]
    Header { found: String },
}

impl DataError {
    /// True for failures of the underlying file or stream rather than its content.
    pub fn is_io(&self) -> bool {
        matches!(self, DataError::Io(_))
    }
}

/// Timestamped pose sequence with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryRecord {
    entries: Vec<(f64, Pose2)>,
}

impl TrajectoryRecord {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: Vec<(f64, Pose2)>) -> Result<Self, DataError> {
        for (i, w) in entries.windows(2).enumerate() {
            if !(w[1].0 > w[0].0) {
                return Err(DataError::NonIncreasing {
                    line: i as u64 + 3,
                    prev: w[0].0,
                    next: w[1].0,
                });
            }
        }
        if let Some(i) = entries.iter().position(|(t, _)| !t.is_finite()) {
            return Err(DataError::Parse {
                line: i as u64 + 2,
                message: "non-finite timestamp".into(),
            });
        }
        Ok(TrajectoryRecord { entries })
    }

    /// Appends a pose; the timestamp must exceed the last one.
    pub fn push(&mut self, timestamp: f64, pose: Pose2) -> Result<(), DataError> {
        if !timestamp.is_finite() {
            return Err(DataError::Parse {
                line: self.entries.len() as u64 + 2,
                message: "non-finite timestamp".into(),
            });
        }
        if let Some(&(prev, _)) = self.entries.last() {
            if !(timestamp > prev) {
                return Err(DataError::NonIncreasing {
                    line: self.entries.len() as u64 + 2,
                    prev,
                    next: timestamp,
                });
            }
        }
        self.entries.push((timestamp, pose));
        Ok(())
    }

    pub fn entries(&self) -> &[(f64, Pose2)] {
        &self.entries
    }

    pub fn timestamps(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|e| e.0)
    }

    pub fn poses(&self) -> impl Iterator<Item = &Pose2> + '_ {
        self.entries.iter().map(|e| &e.1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&(f64, Pose2)> {
        self.entries.get(i)
    }
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input)
}

fn csv_error(e: csv::Error) -> DataError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => DataError::Io(io),
        other => DataError::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}

fn parse_row(record: &csv::StringRecord, line: u64) -> Result<[f64; 4], DataError> {
    if record.len() != 4 {
        return Err(DataError::Parse {
            line,
            message: format!("expected 4 fields, found {}", record.len()),
        });
    }
    let mut out = [0.0; 4];
    for (slot, field) in out.iter_mut().zip(record.iter()) {
        let v: f64 = field.parse().map_err(|_| DataError::Parse {
            line,
            message: format!("invalid number {field:?}"),
        })?;
        if !v.is_finite() {
            return Err(DataError::Parse {
                line,
                message: format!("non-finite value {field:?}"),
            });
        }
        *slot = v;
    }
    Ok(out)
}

fn header_matches(record: &csv::StringRecord, expected: &[&str; 4]) -> bool {
    record.len() == 4 && record.iter().zip(expected).all(|(a, b)| a == *b)
}

/// Reads rows after the header, returning `(line, [t, a, b, c])`.
fn read_rows<R: Read>(
    input: R,
    accept: &[&[&str; 4]],
) -> Result<Option<(usize, Vec<(u64, [f64; 4])>)>, DataError> {
    let mut rdr = reader(input);
    let mut records = rdr.records();
    let header = match records.next() {
        None => return Ok(None),
        Some(r) => r.map_err(csv_error)?,
    };
    let Some(kind) = accept.iter().position(|h| header_matches(&header, h)) else {
        return Err(DataError::Header {
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    };
    let mut rows = Vec::new();
    for rec in records {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        rows.push((line, parse_row(&rec, line)?));
    }
    Ok(Some((kind, rows)))
}

fn pose_at(line: u64, v: &[f64; 4]) -> Result<Pose2, DataError> {
    Pose2::try_new(v[1], v[2], v[3]).map_err(|e| DataError::Parse {
        line,
        message: e.to_string(),
    })
}

/// Parses a trajectory CSV. An empty input yields an empty record.
pub fn parse_trajectory<R: Read>(input: R) -> Result<TrajectoryRecord, DataError> {
    let Some((_, rows)) = read_rows(input, &[&TRAJECTORY_HEADER])? else {
        return Ok(TrajectoryRecord::new());
    };
    let mut record = TrajectoryRecord::new();
    for (line, v) in rows {
        let pose = pose_at(line, &v)?;
        record.push(v[0], pose).map_err(|e| match e {
            DataError::NonIncreasing { prev, next, .. } => DataError::NonIncreasing { line, prev, next },
            other => other,
        })?;
    }
    Ok(record)
}

pub fn read_trajectory_csv(path: impl AsRef<Path>) -> Result<TrajectoryRecord, DataError> {
    parse_trajectory(File::open(path)?)
}

fn fmt_f64(v: f64) -> String {
    // Debug formatting is the shortest representation that round-trips.
    format!("{v:?}")
}

pub fn write_trajectory<W: Write>(record: &TrajectoryRecord, mut out: W) -> io::Result<()> {
    writeln!(out, "{}", TRAJECTORY_HEADER.join(","))?;
    for (t, p) in record.entries() {
        writeln!(
            out,
            "{},{},{},{}",
            fmt_f64(*t),
            fmt_f64(p.x()),
            fmt_f64(p.y()),
            fmt_f64(p.theta())
        )?;
    }
    out.flush()
}

pub fn write_trajectory_csv(record: &TrajectoryRecord, path: impl AsRef<Path>) -> io::Result<()> {
    write_trajectory(record, BufWriter::new(File::create(path)?))
}

/// Parses odometry in either increment or absolute form; timestamps must
/// not decrease.
pub fn parse_odometry<R: Read>(input: R) -> Result<Vec<OdometrySample>, DataError> {
    let Some((kind, rows)) = read_rows(input, &[&ODOMETRY_HEADER, &TRAJECTORY_HEADER])? else {
        return Ok(Vec::new());
    };
    let mut prev_t = f64::NEG_INFINITY;
    let mut parsed = Vec::with_capacity(rows.len());
    for (line, v) in rows {
        if v[0] < prev_t {
            return Err(DataError::NonIncreasing {
                line,
                prev: prev_t,
                next: v[0],
            });
        }
        prev_t = v[0];
        parsed.push((v[0], pose_at(line, &v)?));
    }
    Ok(if kind == 0 {
        parsed
            .into_iter()
            .map(|(t, d)| OdometrySample::new(t, d))
            .collect()
    } else {
        increments_from_absolute(&parsed)
    })
}

pub fn read_odometry_csv(path: impl AsRef<Path>) -> Result<Vec<OdometrySample>, DataError> {
    parse_odometry(File::open(path)?)
}

pub fn write_odometry<W: Write>(samples: &[OdometrySample], mut out: W) -> io::Result<()> {
    writeln!(out, "{}", ODOMETRY_HEADER.join(","))?;
    for s in samples {
        writeln!(
            out,
            "{},{},{},{}",
            fmt_f64(s.timestamp),
            fmt_f64(s.delta.x()),
            fmt_f64(s.delta.y()),
            fmt_f64(s.delta.theta())
        )?;
    }
    out.flush()
}

pub fn write_odometry_csv(samples: &[OdometrySample], path: impl AsRef<Path>) -> io::Result<()> {
    write_odometry(samples, BufWriter::new(File::create(path)?))
}
