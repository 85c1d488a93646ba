//! Line protocol for online fusion over stdin/stdout.
//!
//! Input records, whitespace-delimited, one per line:
//!
//! ```text
//! PRIOR <x> <y> <theta>
//! ODOM <ts> <dx> <dy> <dtheta>
//! MEAS <ts> <x> <y> <theta>
//! FLUSH
//! ```
//!
//! Every `MEAS` answers with `EST <ts> <key> <x> <y> <theta>` for the newest
//! pose; `FLUSH` answers with one `EST` line per frame. A bad line answers
//! `ERR <line> <reason>` and is otherwise ignored. Blank lines and lines
//! starting with `#` are skipped.

use std::io::{self, BufRead, Write};

use posefuse::fusion::{FusionNoise, FusionSession};
use posefuse::odometry::OdometrySample;
use posefuse::{Pose2, SolverSettings};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Record {
    Prior(Pose2),
    Odom { timestamp: f64, delta: Pose2 },
    Meas { timestamp: f64, pose: Pose2 },
    Flush,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProtocolError {
    #[error("unknown record type {0:?}")]
    UnknownRecord(String),
    #[error("{record} expects {expected} fields, got {got}")]
    FieldCount {
        record: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid number {0:?}")]
    BadNumber(String),
}

fn numbers<const N: usize>(record: &'static str, fields: &[&str]) -> Result<[f64; N], ProtocolError> {
    if fields.len() != N {
        return Err(ProtocolError::FieldCount {
            record,
            expected: N,
            got: fields.len(),
        });
    }
    let mut out = [0.0; N];
    for (slot, f) in out.iter_mut().zip(fields) {
        let v: f64 = f
            .parse()
            .map_err(|_| ProtocolError::BadNumber(f.to_string()))?;
        if !v.is_finite() {
            return Err(ProtocolError::BadNumber(f.to_string()));
        }
        *slot = v;
    }
    Ok(out)
}

/// Parses one protocol line; `Ok(None)` for blank and comment lines.
pub fn parse_line(line: &str) -> Result<Option<Record>, ProtocolError> {
    let mut fields = line.split_whitespace();
    let Some(tag) = fields.next() else {
        return Ok(None);
    };
    if tag.starts_with('#') {
        return Ok(None);
    }
    let rest: Vec<&str> = fields.collect();
    let record = match tag {
        "PRIOR" => {
            let [x, y, t] = numbers("PRIOR", &rest)?;
            Record::Prior(Pose2::new(x, y, t))
        }
        "ODOM" => {
            let [ts, dx, dy, dt] = numbers("ODOM", &rest)?;
            Record::Odom {
                timestamp: ts,
                delta: Pose2::new(dx, dy, dt),
            }
        }
        "MEAS" => {
            let [ts, x, y, t] = numbers("MEAS", &rest)?;
            Record::Meas {
                timestamp: ts,
                pose: Pose2::new(x, y, t),
            }
        }
        "FLUSH" => {
            numbers::<0>("FLUSH", &rest)?;
            Record::Flush
        }
        other => return Err(ProtocolError::UnknownRecord(other.to_string())),
    };
    Ok(Some(record))
}

/// Formats a pose estimate as an `EST` line (without newline).
pub fn format_estimate(timestamp: f64, key: usize, pose: &Pose2) -> String {
    format!(
        "EST {timestamp:?} {key} {:?} {:?} {:?}",
        pose.x(),
        pose.y(),
        pose.theta()
    )
}

/// Counters for a finished stream.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StreamStats {
    pub lines: usize,
    pub frames: usize,
    pub errors: usize,
}

/// Drives a fusion session from `input` until EOF.
pub fn run_stream<R: BufRead, W: Write>(
    input: R,
    mut output: W,
    noise: FusionNoise,
    settings: SolverSettings,
) -> io::Result<StreamStats> {
    let mut session = FusionSession::new(noise, settings);
    let mut stats = StreamStats::default();
    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        stats.lines = line_no;
        let line = match line {
            Ok(l) => l,
            Err(e) if e.kind() == io::ErrorKind::InvalidData => {
                stats.errors += 1;
                writeln!(output, "ERR {line_no} invalid UTF-8")?;
                continue;
            }
            Err(e) => return Err(e),
        };
        let outcome = match parse_line(&line) {
            Ok(None) => Ok(()),
            Ok(Some(Record::Prior(p))) => session.set_prior(p).map_err(|e| e.to_string()),
            Ok(Some(Record::Odom { timestamp, delta })) => session
                .push_odometry(OdometrySample::new(timestamp, delta))
                .map_err(|e| e.to_string()),
            Ok(Some(Record::Meas { timestamp, pose })) => match session.push_measurement(timestamp, pose) {
                Ok(u) => {
                    stats.frames += 1;
                    writeln!(output, "{}", format_estimate(u.timestamp, u.key.index(), &u.pose))?;
                    Ok(())
                }
                Err(e) => Err(e.to_string()),
            },
            Ok(Some(Record::Flush)) => {
                for (key, (t, p)) in session.trajectory().entries().iter().enumerate() {
                    writeln!(output, "{}", format_estimate(*t, key, p))?;
                }
                Ok(())
            }
            Err(e) => Err(e.to_string()),
        };
        if let Err(reason) = outcome {
            stats.errors += 1;
            writeln!(output, "ERR {line_no} {}", reason.replace('\n', " "))?;
        }
        output.flush()?;
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use posefuse::DiagonalNoise;

    fn run(input: &str, noise: FusionNoise) -> (String, StreamStats) {
        let mut out = Vec::new();
        let stats = run_stream(input.as_bytes(), &mut out, noise, SolverSettings::default()).unwrap();
        (String::from_utf8(out).unwrap(), stats)
    }

    #[test]
    fn parses_records() {
        assert_eq!(parse_line("  "), Ok(None));
        assert_eq!(parse_line("# comment"), Ok(None));
        assert_eq!(parse_line("FLUSH"), Ok(Some(Record::Flush)));
        assert_eq!(
            parse_line("PRIOR 1 2 0.5"),
            Ok(Some(Record::Prior(Pose2::new(1.0, 2.0, 0.5))))
        );
        assert_eq!(
            parse_line("ODOM 0.1\t1 0 0"),
            Ok(Some(Record::Odom {
                timestamp: 0.1,
                delta: Pose2::new(1.0, 0.0, 0.0)
            }))
        );
        assert!(matches!(parse_line("MEAS abc"), Err(ProtocolError::FieldCount { .. })));
        assert!(matches!(parse_line("MEAS 1 2 x 4"), Err(ProtocolError::BadNumber(_))));
        assert!(matches!(parse_line("MEAS 1 2 NaN 4"), Err(ProtocolError::BadNumber(_))));
        assert!(matches!(parse_line("FLUSH now"), Err(ProtocolError::FieldCount { .. })));
        assert!(matches!(parse_line("meas 1 2 3 4"), Err(ProtocolError::UnknownRecord(_))));
    }

    #[test]
    fn echo_measurement_equal_to_prior() {
        let (out, stats) = run("PRIOR 1.5 -2 0.3\nMEAS 0 1.5 -2 0.3\n", FusionNoise::default());
        assert_eq!(out, "EST 0.0 0 1.5 -2.0 0.3\n");
        assert_eq!(stats.frames, 1);
    }

    #[test]
    fn malformed_line_reports_and_continues() {
        let (out, stats) = run("MEAS abc\nMEAS 0 1 2 0\n", FusionNoise::default());
        let lines: Vec<&str> = out.lines().collect();
        assert!(lines[0].starts_with("ERR 1 "), "{out}");
        assert!(lines[1].starts_with("EST 0.0 0 "), "{out}");
        assert_eq!(stats.errors, 1);
    }

    #[test]
    fn flush_and_late_prior() {
        let n = DiagonalNoise::isotropic(1.0).unwrap();
        let noise = FusionNoise {
            prior: n,
            odometry: n,
            measurement: n,
        };
        let input = "PRIOR 0 0 0\nMEAS 0 2 0 0\nPRIOR 1 1 1\nODOM 0.1 1 0 0\nMEAS 0.1 2 0 0\nFLUSH\n";
        let (out, stats) = run(input, noise);
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines[0], "EST 0.0 0 1.0 0.0 0.0");
        assert!(lines[1].starts_with("ERR 3 prior"), "{out}");
        assert_eq!(lines.len(), 5);
        assert!(lines[3].starts_with("EST 0.0 0 "));
        assert!(lines[4].starts_with("EST 0.1 1 "));
        assert_eq!(stats.frames, 2);
    }

    #[test]
    fn non_increasing_measurement_is_an_error() {
        let (out, stats) = run("MEAS 1 0 0 0\nMEAS 1 0 0 0\nMEAS 0.5 0 0 0\n", FusionNoise::default());
        assert_eq!(stats.errors, 2);
        assert_eq!(out.lines().filter(|l| l.starts_with("ERR")).count(), 2);
    }
}
