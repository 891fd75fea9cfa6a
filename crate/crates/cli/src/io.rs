//! Trajectory files: `csv-fixy` (`frame,id,x,y`, read and written) and the
//! ETH `obsmat` layout (`frame id x z y vx vz vy`, read only).

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crowdfilter_core::scenario::{Frame, Scenario, ScenarioError};
use crowdfilter_core::{AgentId, Vec2};
use thiserror::Error;

pub const CSV_HEADER: &str = "frame,id,x,y";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("line {line}: frame {frame} after frame {previous}")]
    NonMonotoneFrames { line: usize, frame: u64, previous: u64 },
    #[error("no trajectory rows")]
    EmptyFile,
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    CsvFixy,
    Obsmat,
}

impl Format {
    pub fn name(self) -> &'static str {
        match self {
            Format::CsvFixy => "csv-fixy",
            Format::Obsmat => "obsmat",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown trajectory format")]
pub struct UnknownFormat;

impl FromStr for Format {
    type Err = UnknownFormat;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv-fixy" | "csv" => Ok(Format::CsvFixy),
            "obsmat" => Ok(Format::Obsmat),
            _ => Err(UnknownFormat),
        }
    }
}

struct Row {
    line: usize,
    frame: u64,
    id: AgentId,
    position: Vec2,
}

fn malformed(line: usize, reason: impl Into<String>) -> DataError {
    DataError::MalformedRow {
        line,
        reason: reason.into(),
    }
}

fn number(line: usize, field: &str, what: &str) -> Result<f64, DataError> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| malformed(line, format!("{what} `{}` is not a number", field.trim())))?;
    if !v.is_finite() {
        return Err(malformed(line, format!("{what} is not finite")));
    }
    Ok(v)
}

/// Integers written as floats (`7.8000000e+02`) are accepted.
fn integer(line: usize, field: &str, what: &str) -> Result<u64, DataError> {
    if let Ok(v) = field.trim().parse::<u64>() {
        return Ok(v);
    }
    let v = number(line, field, what)?;
    if v < 0.0 || v.fract() != 0.0 || v > u64::MAX as f64 {
        return Err(malformed(line, format!("{what} `{}` is not a non-negative integer", field.trim())));
    }
    Ok(v as u64)
}

fn assemble(rows: Vec<Row>, name: &str, dt: f64) -> Result<Scenario, DataError> {
    if rows.is_empty() {
        return Err(DataError::EmptyFile);
    }
    let mut frames: Vec<Frame> = Vec::new();
    let mut seen = BTreeSet::new();
    for row in rows {
        match frames.last_mut() {
            Some(f) if f.time_index == row.frame => {
                if !seen.insert(row.id) {
                    return Err(malformed(row.line, format!("agent {} repeated in frame {}", row.id, row.frame)));
                }
                f.entries.push((row.id, row.position));
            }
            Some(f) if f.time_index > row.frame => {
                return Err(DataError::NonMonotoneFrames {
                    line: row.line,
                    frame: row.frame,
                    previous: f.time_index,
                });
            }
            _ => {
                seen.clear();
                seen.insert(row.id);
                frames.push(Frame {
                    time_index: row.frame,
                    entries: vec![(row.id, row.position)],
                });
            }
        }
    }
    Ok(Scenario::new(name, dt, frames)?)
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

pub fn parse_csv_fixy(text: &str, name: &str, dt: f64) -> Result<Scenario, DataError> {
    let mut rows = Vec::new();
    for (line, l) in content_lines(text) {
        if rows.is_empty() && l.replace(' ', "") == CSV_HEADER {
            continue;
        }
        let fields: Vec<&str> = l.split(',').collect();
        if fields.len() != 4 {
            return Err(malformed(line, format!("expected 4 fields, found {}", fields.len())));
        }
        rows.push(Row {
            line,
            frame: integer(line, fields[0], "frame")?,
            id: AgentId(integer(line, fields[1], "id")?),
            position: Vec2::new(number(line, fields[2], "x")?, number(line, fields[3], "y")?),
        });
    }
    assemble(rows, name, dt)
}

pub fn parse_obsmat(text: &str, name: &str, dt: f64) -> Result<Scenario, DataError> {
    let mut rows = Vec::new();
    for (line, l) in content_lines(text) {
        let fields: Vec<&str> = l.split_whitespace().collect();
        if fields.len() != 8 {
            return Err(malformed(line, format!("expected 8 fields, found {}", fields.len())));
        }
        for (i, f) in fields.iter().enumerate().skip(5) {
            number(line, f, ["vx", "vz", "vy"][i - 5])?;
        }
        number(line, fields[3], "z")?;
        rows.push(Row {
            line,
            frame: integer(line, fields[0], "frame")?,
            id: AgentId(integer(line, fields[1], "id")?),
            position: Vec2::new(number(line, fields[2], "x")?, number(line, fields[4], "y")?),
        });
    }
    assemble(rows, name, dt)
}

pub fn parse_trajectories(text: &str, format: Format, name: &str, dt: f64) -> Result<Scenario, DataError> {
    match format {
        Format::CsvFixy => parse_csv_fixy(text, name, dt),
        Format::Obsmat => parse_obsmat(text, name, dt),
    }
}

/// Reads a trajectory file; the scenario is named after the file stem.
pub fn read_trajectories(path: &Path, format: Format, dt: f64) -> Result<Scenario, DataError> {
    let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("input");
    parse_trajectories(&text, format, name, dt)
}

/// Shortest round-trip float formatting, so parsing restores every bit.
pub fn write_csv_fixy(s: &Scenario) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for f in s.frames() {
        for (id, p) in &f.entries {
            let _ = writeln!(out, "{},{},{},{}", f.time_index, id, p.x, p.y);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_rows() {
        let s = parse_csv_fixy("frame,id,x,y\n0,1,0.5,-2\n0,2,1,1\n1,1,0.6,-2.1\n", "t", 0.4).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.agent_ids(), vec![AgentId(1), AgentId(2)]);
        assert_eq!(s.position(1, AgentId(1)), Some(Vec2::new(0.6, -2.1)));
    }

    #[test]
    fn duplicate_names_the_line() {
        let e = parse_csv_fixy("0,1,0,0\n0,2,1,1\n0,1,2,2\n", "t", 0.4).unwrap_err();
        assert!(matches!(e, DataError::MalformedRow { line: 3, .. }), "{e}");
    }

    #[test]
    fn frames_must_not_go_back() {
        let e = parse_csv_fixy("1,1,0,0\n0,1,0,0\n", "t", 0.4).unwrap_err();
        assert!(matches!(e, DataError::NonMonotoneFrames { line: 2, frame: 0, previous: 1 }));
    }

    #[test]
    fn empty_and_garbage() {
        assert!(matches!(parse_csv_fixy("frame,id,x,y\n\n", "t", 0.4), Err(DataError::EmptyFile)));
        assert!(matches!(parse_csv_fixy("0,1,a,0\n", "t", 0.4), Err(DataError::MalformedRow { line: 1, .. })));
        assert!(matches!(parse_csv_fixy("0,1,0\n", "t", 0.4), Err(DataError::MalformedRow { line: 1, .. })));
        assert!(matches!(parse_csv_fixy("0,-1,0,0\n", "t", 0.4), Err(DataError::MalformedRow { .. })));
        assert!(matches!(parse_csv_fixy("0,1,NaN,0\n", "t", 0.4), Err(DataError::MalformedRow { .. })));
    }

    #[test]
    fn obsmat_takes_ground_plane_columns() {
        let text = "7.8000000e+02 1.0000000e+00 8.4 0.0 3.2 1.1 0.0 -0.2\n7.9000000e+02 1.0000000e+00 8.8 0.0 3.1 1.1 0.0 -0.2\n";
        let s = parse_obsmat(text, "eth", 0.4).unwrap();
        assert_eq!(s.frames()[0].time_index, 780);
        assert_eq!(s.position(1, AgentId(1)), Some(Vec2::new(8.8, 3.1)));
        assert!(parse_obsmat("1 2 3\n", "eth", 0.4).is_err());
    }

    #[test]
    fn format_names() {
        assert_eq!("obsmat".parse::<Format>(), Ok(Format::Obsmat));
        assert_eq!(Format::CsvFixy.name().parse::<Format>(), Ok(Format::CsvFixy));
        assert!("xml".parse::<Format>().is_err());
    }
}
