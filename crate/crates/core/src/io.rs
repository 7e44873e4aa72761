//! Instance text files and solution JSON.
//!
//! Instance format: a header `n R`, then `n` lines `L W [V]`. Blank lines
//! and lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fss::{FssConfig, SolverReport};
use crate::model::{Instance, ObjectiveMode, PackingSolution, Placement, RawRect};

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceFile {
    pub radius: f64,
    pub rects: Vec<RawRect>,
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("missing header line `n R`")]
    MissingHeader,
    #[error("header declares {expected} rectangles but {found} were given")]
    Count { expected: usize, found: usize },
}

fn line_err(line: usize, msg: impl Into<String>) -> ParseError {
    ParseError::Line {
        line,
        msg: msg.into(),
    }
}

fn number(tok: &str, line: usize, what: &str) -> Result<f64, ParseError> {
    let v: f64 = tok
        .parse()
        .map_err(|_| line_err(line, format!("{what} `{tok}` is not a number")))?;
    if !v.is_finite() {
        return Err(line_err(line, format!("{what} must be finite")));
    }
    Ok(v)
}

impl InstanceFile {
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

        let (hline, header) = lines.next().ok_or(ParseError::MissingHeader)?;
        let toks: Vec<&str> = header.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(line_err(hline, "header must be `n R`"));
        }
        let n: usize = toks[0]
            .parse()
            .map_err(|_| line_err(hline, format!("count `{}` is not a non-negative integer", toks[0])))?;
        let radius = number(toks[1], hline, "radius")?;
        if radius <= 0.0 {
            return Err(line_err(hline, "radius must be positive"));
        }

        let mut rects = Vec::with_capacity(n);
        for (line, body) in lines {
            let toks: Vec<&str> = body.split_whitespace().collect();
            if !(2..=3).contains(&toks.len()) {
                return Err(line_err(line, "expected `L W` or `L W V`"));
            }
            let length = number(toks[0], line, "length")?;
            let width = number(toks[1], line, "width")?;
            if length <= 0.0 || width <= 0.0 {
                return Err(line_err(line, "dimensions must be positive"));
            }
            let value = toks.get(2).map(|t| number(t, line, "value")).transpose()?;
            rects.push(RawRect {
                length,
                width,
                value,
            });
        }
        if rects.len() != n {
            return Err(ParseError::Count {
                expected: n,
                found: rects.len(),
            });
        }
        Ok(Self { radius, rects })
    }

    /// Shortest text that parses back to the same values.
    pub fn render(&self) -> String {
        let mut out = format!("{} {}\n", self.rects.len(), self.radius);
        for r in &self.rects {
            match r.value {
                Some(v) => writeln!(out, "{} {} {}", r.length, r.width, v),
                None => writeln!(out, "{} {}", r.length, r.width),
            }
            .expect("writing to a String");
        }
        out
    }

    pub fn read(path: &Path) -> Result<Self, ReadError> {
        let text = fs::read_to_string(path)?;
        Ok(Self::parse(&text)?)
    }
}

#[derive(Debug, Error)]
pub enum ReadError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// The JSON written by `solve` and read by `verify`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub objective_mode: ObjectiveMode,
    pub objective_value: f64,
    pub placements: Vec<Placement>,
    pub verified: bool,
    pub max_violation: f64,
    pub replication_found: Option<usize>,
    /// `null` for deterministic runs.
    pub total_time_s: Option<f64>,
    #[serde(default)]
    pub solver_config: serde_json::Value,
}

impl SolutionFile {
    /// Packages a solver run. Timing is left out of deterministic runs so
    /// equal seeds give byte-identical files.
    pub fn from_report(inst: &Instance, cfg: &FssConfig, report: &SolverReport) -> Self {
        let best = &report.best;
        Self {
            objective_mode: inst.objective,
            objective_value: best.objective_value,
            placements: best.placements.clone(),
            verified: best.verified,
            max_violation: best.max_violation,
            replication_found: report.replication_found,
            total_time_s: (!cfg.deterministic).then_some(report.total_time_s),
            solver_config: serde_json::json!({
                "rotate": inst.rotation_allowed,
                "squares": inst.square_mode,
                "initial_method": report.initial_method,
                "fss": cfg,
            }),
        }
    }

    pub fn solution(&self) -> PackingSolution {
        PackingSolution {
            placements: self.placements.clone(),
            objective_value: self.objective_value,
            verified: self.verified,
            max_violation: self.max_violation,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plain data serializes");
        s.push('\n');
        s
    }

    pub fn read(path: &Path) -> Result<Self, ReadError> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Writes through a temporary file in the same directory and renames it
/// into place.
pub fn write_atomic(path: &Path, contents: &str) -> io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })
}
