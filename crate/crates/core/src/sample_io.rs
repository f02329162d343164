//! Plain-text sample files.
//!
//! Labeled format, as written by [`write_labeled`]:
//!
//! ```text
//! <d> <n> <K>
//! x_1 … x_d label        (n lines, labels in 1..=K)
//! ```
//!
//! A headerless table of numbers (whitespace or comma separated, one
//! observation per line, no labels) is also accepted by [`parse_dataset`].
//! Blank lines and lines starting with `#` are skipped.

use std::io::{self, Write};

use ndarray::Array2;

use crate::error::{MixError, Result};
use crate::simulation::LabeledSample;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `n × d`, raw (uncentered) coordinates.
    pub points: Array2<f64>,
    /// Zero-based labels when the file carries them.
    pub labels: Option<Vec<usize>>,
    pub k: Option<usize>,
}

pub fn write_labeled<W: Write>(mut w: W, sample: &LabeledSample) -> io::Result<()> {
    writeln!(w, "{} {} {}", sample.d(), sample.n(), sample.k())?;
    for (row, &label) in sample.points.outer_iter().zip(&sample.labels) {
        for v in row {
            // shortest representation that round-trips
            write!(w, "{v:?} ")?;
        }
        writeln!(w, "{}", label + 1)?;
    }
    Ok(())
}

fn format_err(line: usize, message: impl Into<String>) -> MixError {
    MixError::Format { line, message: message.into() }
}

fn tokens(line: &str) -> impl Iterator<Item = &str> {
    line.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty())
}

fn parse_header(line: &str) -> Option<(usize, usize, usize)> {
    let parts: Vec<&str> = tokens(line).collect();
    if parts.len() != 3 {
        return None;
    }
    let nums: Vec<usize> = parts.iter().filter_map(|p| p.parse().ok()).collect();
    (nums.len() == 3).then(|| (nums[0], nums[1], nums[2]))
}

/// Parses either the labeled format or a headerless numeric table.
///
/// A first line of three non-negative integers is read as a header only if
/// the rest of the file agrees with it (n rows of d + 1 columns).
pub fn parse_dataset(text: &str) -> Result<Dataset> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .collect();
    let Some(&(first_no, first)) = lines.first() else {
        return Err(format_err(1, "file contains no data"));
    };
    if let Some((d, n, k)) = parse_header(first) {
        let body = &lines[1..];
        let consistent = body.len() == n && body.iter().all(|(_, l)| tokens(l).count() == d + 1);
        if consistent {
            return parse_labeled(body, d, n, k, first_no);
        }
    }
    parse_table(&lines)
}

fn parse_labeled(body: &[(usize, &str)], d: usize, n: usize, k: usize, header_line: usize) -> Result<Dataset> {
    if d == 0 || n == 0 || k == 0 {
        return Err(format_err(header_line, "header values d, n, K must be positive"));
    }
    if body.len() != n {
        let line = body.get(n).map(|(no, _)| *no).unwrap_or(header_line);
        return Err(format_err(line, format!("header announces {n} points but the file has {}", body.len())));
    }
    let mut points = Array2::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    for (i, &(no, line)) in body.iter().enumerate() {
        let parts: Vec<&str> = tokens(line).collect();
        if parts.len() != d + 1 {
            return Err(format_err(no, format!("expected {} values, found {}", d + 1, parts.len())));
        }
        for (j, p) in parts[..d].iter().enumerate() {
            points[[i, j]] = parse_number(p, no)?;
        }
        let label: usize =
            parts[d].parse().map_err(|_| format_err(no, format!("label {:?} is not a positive integer", parts[d])))?;
        if label == 0 || label > k {
            return Err(format_err(no, format!("label {label} outside 1..={k}")));
        }
        labels.push(label - 1);
    }
    Ok(Dataset { points, labels: Some(labels), k: Some(k) })
}

fn parse_number(token: &str, line: usize) -> Result<f64> {
    let v: f64 = token.parse().map_err(|_| format_err(line, format!("{token:?} is not a number")))?;
    if !v.is_finite() {
        return Err(format_err(line, format!("{token:?} is not finite")));
    }
    Ok(v)
}

fn parse_table(lines: &[(usize, &str)]) -> Result<Dataset> {
    let d = tokens(lines[0].1).count();
    let mut values = Vec::with_capacity(lines.len() * d);
    for &(no, line) in lines {
        let row: Vec<&str> = tokens(line).collect();
        if row.len() != d {
            return Err(format_err(no, format!("expected {d} columns, found {}", row.len())));
        }
        for t in row {
            values.push(parse_number(t, no)?);
        }
    }
    let points = Array2::from_shape_vec((lines.len(), d), values).expect("shape checked row by row");
    Ok(Dataset { points, labels: None, k: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::{generate_replicate, ScenarioConfig};

    #[test]
    fn labeled_round_trip() {
        let s = generate_replicate(&ScenarioConfig::reference(3, 20.0), 0).unwrap();
        let mut buf = Vec::new();
        write_labeled(&mut buf, &s).unwrap();
        let ds = parse_dataset(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(ds.points, s.points);
        assert_eq!(ds.labels.as_deref(), Some(&s.labels[..]));
        assert_eq!(ds.k, Some(3));
    }

    #[test]
    fn headerless_table() {
        let ds = parse_dataset("# comment\n1.0, 2.0 3\n\n4 5 6\n").unwrap();
        assert_eq!(ds.points.dim(), (2, 3));
        assert!(ds.labels.is_none());
    }

    #[test]
    fn integer_table_that_only_looks_like_a_header() {
        let ds = parse_dataset("1 2 3\n4 5 6\n7 8 9\n").unwrap();
        assert_eq!(ds.points.dim(), (3, 3));
    }

    #[test]
    fn errors_name_the_line() {
        assert!(matches!(parse_dataset(""), Err(MixError::Format { line: 1, .. })));
        let err = parse_dataset("1 2\n3 x\n").unwrap_err();
        assert_eq!(err, MixError::Format { line: 2, message: "\"x\" is not a number".into() });
        let err = parse_dataset("2 2 2\n0.1 0.2 1\n0.3 0.4 3\n").unwrap_err();
        assert!(matches!(err, MixError::Format { line: 3, .. }));
        let err = parse_dataset("1 2\n3 4 5\n").unwrap_err();
        assert!(matches!(err, MixError::Format { line: 2, .. }));
    }
}
