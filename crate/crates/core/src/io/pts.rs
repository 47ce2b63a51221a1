//! `.pts` landmark annotation files:
//!
//! ```text
//! version: 1
//! n_points: 68
//! {
//! 123.4 56.7
//! ...
//! }
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::shape::Shape;

#[derive(Debug, Clone, PartialEq)]
pub struct PtsFile {
    pub version: u32,
    /// Pixel coordinates in file order.
    pub points: Vec<[f64; 2]>,
}

impl PtsFile {
    pub fn n_points(&self) -> usize {
        self.points.len()
    }

    pub fn to_shape(&self) -> Shape<f64> {
        Shape::new(self.points.clone())
    }
}

fn err(line: usize, message: impl Into<String>) -> Error {
    Error::Pts {
        line,
        message: message.into(),
    }
}

fn header_value<'a>(line_no: usize, line: &'a str, key: &str) -> Result<&'a str> {
    let (k, v) = line
        .split_once(':')
        .ok_or_else(|| err(line_no, format!("expected '{key}: <value>', found '{line}'")))?;
    if k.trim() != key {
        return Err(err(line_no, format!("expected header key '{key}', found '{}'", k.trim())));
    }
    Ok(v.trim())
}

fn parse_coordinate(line_no: usize, token: &str) -> Result<f64> {
    let v: f64 = token
        .parse()
        .map_err(|_| err(line_no, format!("non-numeric coordinate '{token}'")))?;
    if !v.is_finite() {
        return Err(err(line_no, format!("non-finite coordinate '{token}'")));
    }
    Ok(v)
}

/// Parses `.pts` text. Blank lines and surrounding whitespace are ignored; header keys,
/// braces and the declared point count are enforced. Errors carry 1-based line numbers.
pub fn parse_pts(text: &str) -> Result<PtsFile> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let (n, line) = lines.next().ok_or_else(|| err(1, "missing 'version' header"))?;
    let version_text = header_value(n, line, "version")?;
    // some tools write "version: 1.0"
    let version = version_text
        .parse::<u32>()
        .ok()
        .or_else(|| {
            version_text
                .parse::<f64>()
                .ok()
                .filter(|v| v.fract() == 0.0 && *v >= 0.0 && *v <= u32::MAX as f64)
                .map(|v| v as u32)
        })
        .ok_or_else(|| err(n, format!("malformed version '{version_text}'")))?;

    let (n, line) = lines.next().ok_or_else(|| err(n + 1, "missing 'n_points' header"))?;
    let count_text = header_value(n, line, "n_points")?;
    let declared: usize = count_text
        .parse()
        .map_err(|_| err(n, format!("malformed n_points '{count_text}'")))?;

    let (n, line) = lines.next().ok_or_else(|| err(n + 1, "missing '{'"))?;
    if line != "{" {
        return Err(err(n, format!("expected '{{', found '{line}'")));
    }

    let mut points = Vec::with_capacity(declared);
    let mut last = n;
    let mut closed = false;
    for (n, line) in lines.by_ref() {
        last = n;
        if line == "}" {
            closed = true;
            break;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 2 {
            return Err(err(n, format!("expected 2 coordinates, found {}", tokens.len())));
        }
        points.push([parse_coordinate(n, tokens[0])?, parse_coordinate(n, tokens[1])?]);
    }
    if !closed {
        return Err(err(last + 1, "missing closing '}'"));
    }
    if let Some((n, line)) = lines.next() {
        return Err(err(n, format!("unexpected content after '}}': '{line}'")));
    }
    if points.len() != declared {
        return Err(err(
            last,
            format!("n_points declares {declared} points but {} were found", points.len()),
        ));
    }
    Ok(PtsFile { version, points })
}

/// Serializes with shortest round-trip decimals and LF line endings.
pub fn write_pts(pts: &PtsFile) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "version: {}", pts.version);
    let _ = writeln!(out, "n_points: {}", pts.points.len());
    out.push_str("{\n");
    for [x, y] in &pts.points {
        let _ = writeln!(out, "{x} {y}");
    }
    out.push_str("}\n");
    out
}

pub fn load_pts(path: &Path) -> Result<PtsFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pts(&text)
}

pub fn save_pts(pts: &PtsFile, path: &Path) -> Result<()> {
    std::fs::write(path, write_pts(pts)).map_err(|e| Error::io(path, e))
}
