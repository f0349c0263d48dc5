//! Ordered point sets and their CSV representation.
//!
//! The on-disk format is one point per line with comma-separated decimal
//! coordinates. Lines starting with `#` are comments; a comment of the form
//! `# dim=<d> label=<s>` carries the ambient dimension and label.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{invalid, Error, Result};

/// An ordered list of points in a common ambient space, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    coords: Vec<f64>,
    dim: usize,
    label: String,
}

impl PointSet {
    pub fn new(dim: usize, label: impl Into<String>) -> Self {
        assert!(dim > 0, "ambient dimension must be positive");
        Self {
            coords: Vec::new(),
            dim,
            label: label.into(),
        }
    }

    pub fn with_capacity(dim: usize, capacity: usize, label: impl Into<String>) -> Self {
        let mut set = Self::new(dim, label);
        set.coords.reserve(dim * capacity);
        set
    }

    /// Builds a point set from a flat row-major coordinate buffer.
    pub fn from_flat(dim: usize, coords: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dim", "must be positive"));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(invalid(
                "coords",
                format!("length {} is not a multiple of {dim}", coords.len()),
            ));
        }
        Ok(Self {
            coords,
            dim,
            label: label.into(),
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R], label: impl Into<String>) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        if dim == 0 {
            return Err(invalid("rows", "need at least one non-empty row"));
        }
        let mut set = Self::with_capacity(dim, rows.len(), label);
        for row in rows {
            set.push(row.as_ref())?;
        }
        Ok(set)
    }

    pub fn push(&mut self, point: &[f64]) -> Result<()> {
        if point.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: point.len(),
            });
        }
        self.coords.extend_from_slice(point);
        Ok(())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn set_label(&mut self, label: impl Into<String>) {
        self.label = label.into();
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.coords
    }

    /// The sub-set made of the given indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> PointSet {
        let mut out = PointSet::with_capacity(self.dim, indices.len(), self.label.clone());
        for &i in indices {
            out.coords.extend_from_slice(self.point(i));
        }
        out
    }

    /// Serializes to the CSV text form. `preamble` lines are emitted as
    /// comments before the `dim`/`label` header.
    pub fn to_csv(&self, preamble: &[String]) -> String {
        let mut out = String::with_capacity(self.coords.len() * 20);
        for line in preamble {
            let _ = writeln!(out, "# {line}");
        }
        let _ = writeln!(out, "# dim={} label={}", self.dim, self.label);
        for p in self.iter() {
            for (j, v) in p.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                // `{:?}` is the shortest representation that round-trips.
                let _ = write!(out, "{v:?}");
            }
            out.push('\n');
        }
        out
    }

    /// Parses the CSV text form. `origin` is only used in error messages.
    pub fn parse_csv(text: &str, origin: &Path) -> Result<PointSet> {
        let mut dim: Option<usize> = None;
        let mut label = String::new();
        let mut coords = Vec::new();
        let mut rows = 0usize;
        let parse_err = |line: usize, reason: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            reason,
        };
        for (lineno, raw) in text.lines().enumerate() {
            let lineno = lineno + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                let comment = comment.trim();
                if comment.starts_with("dim=") {
                    for field in comment.split_whitespace() {
                        if let Some(v) = field.strip_prefix("dim=") {
                            let d: usize = v
                                .parse()
                                .map_err(|_| parse_err(lineno, format!("bad dim `{v}`")))?;
                            if rows > 0 && dim != Some(d) {
                                return Err(parse_err(lineno, "dim header after data".into()));
                            }
                            dim = Some(d);
                        } else if let Some(v) = field.strip_prefix("label=") {
                            label = v.to_string();
                        }
                    }
                }
                continue;
            }
            let before = coords.len();
            for field in line.split(',') {
                let v: f64 = field.trim().parse().map_err(|_| {
                    parse_err(lineno, format!("row {}: bad number `{}`", rows + 1, field.trim()))
                })?;
                coords.push(v);
            }
            let arity = coords.len() - before;
            match dim {
                Some(d) if d != arity => {
                    return Err(parse_err(
                        lineno,
                        format!("row {} has {arity} coordinates, expected {d}", rows + 1),
                    ))
                }
                Some(_) => {}
                None => dim = Some(arity),
            }
            rows += 1;
        }
        match dim {
            Some(d) if rows > 0 && d > 0 => PointSet::from_flat(d, coords, label),
            _ => Err(Error::EmptyPointSet(origin.to_path_buf())),
        }
    }
}

pub fn load_points(path: impl AsRef<Path>) -> Result<PointSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    PointSet::parse_csv(&text, path)
}

pub fn save_points(points: &PointSet, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, points.to_csv(&[]))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let set = PointSet::from_rows(
            &[[0.1, 1.0 / 3.0], [f64::MIN_POSITIVE, -2.5e300], [0.0, 1.0]],
            "demo",
        )
        .unwrap();
        let back = PointSet::parse_csv(&set.to_csv(&["hello".into()]), Path::new("x")).unwrap();
        assert_eq!(back, set);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(
            PointSet::parse_csv("", Path::new("e.csv")),
            Err(Error::EmptyPointSet(_))
        ));
        assert!(matches!(
            PointSet::parse_csv("# dim=2 label=x\n", Path::new("e.csv")),
            Err(Error::EmptyPointSet(_))
        ));
    }

    #[test]
    fn ragged_row_names_the_row() {
        let err = PointSet::parse_csv("1,2\n3,4\n5\n", Path::new("r.csv")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("r.csv:3"), "{msg}");
        assert!(msg.contains("row 3"), "{msg}");
    }

    #[test]
    fn header_dimension_is_enforced() {
        let err = PointSet::parse_csv("# dim=3 label=a\n1,2\n", Path::new("h.csv")).unwrap_err();
        assert!(err.to_string().contains("expected 3"));
    }

    #[test]
    fn select_keeps_order() {
        let set = PointSet::from_rows(&[[0.0], [1.0], [2.0]], "s").unwrap();
        let sub = set.select(&[2, 0]);
        assert_eq!(sub.as_flat(), &[2.0, 0.0]);
    }
}
