//! Frame-by-symbol score matrices and their TSV form.
//!
//! The TSV format has a header row of alphabet tokens (blank first) followed
//! by one row per frame.

use std::fmt::Write as _;

use ndarray::{Array2, ArrayView1, Axis};

use crate::alphabet::{Alphabet, BLANK_TOKEN};
use crate::error::ParseError;
use crate::loss::GtcError;

/// Row tolerance for "sums to one".
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Per-frame posteriors `y[t][k]`, one row per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorMatrix {
    values: Array2<f64>,
}

impl PosteriorMatrix {
    /// Validates that every row is a probability distribution.
    pub fn new(values: Array2<f64>) -> Result<Self, GtcError> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(GtcError::InvalidPosterior("matrix is empty".into()));
        }
        for (t, row) in values.axis_iter(Axis(0)).enumerate() {
            if let Some(v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(GtcError::InvalidPosterior(format!(
                    "frame {t}: entry {v} outside [0, 1]"
                )));
            }
            let s = row.sum();
            if (s - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(GtcError::InvalidPosterior(format!("frame {t}: row sums to {s}")));
            }
        }
        Ok(Self { values })
    }

    pub fn frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn num_symbols(&self) -> usize {
        self.values.ncols()
    }

    /// `t` is 0-based here.
    pub fn get(&self, t: usize, k: usize) -> f64 {
        self.values[[t, k]]
    }

    pub fn row(&self, t: usize) -> ArrayView1<'_, f64> {
        self.values.row(t)
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }
}

/// Unnormalized per-frame scores `u[t][k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitMatrix {
    values: Array2<f64>,
}

impl LogitMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self, GtcError> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(GtcError::InvalidPosterior("matrix is empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GtcError::InvalidPosterior("non-finite logit".into()));
        }
        Ok(Self { values })
    }

    pub fn frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn num_symbols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array2<f64> {
        &mut self.values
    }

    pub fn softmax(&self) -> PosteriorMatrix {
        PosteriorMatrix {
            values: softmax_rows(&self.values),
        }
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(u: &Array2<f64>) -> Array2<f64> {
    let mut y = u.clone();
    for mut row in y.axis_iter_mut(Axis(0)) {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    y
}

/// Parses a TSV matrix whose header must list exactly the alphabet's tokens.
pub fn parse_matrix_tsv(
    text: &str,
    alphabet: Option<&Alphabet>,
    source_name: &str,
) -> Result<(Alphabet, Array2<f64>), ParseError> {
    let err = |line: usize, msg: String| ParseError::new(source_name, line, msg);
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| err(0, "missing header row".into()))?;
    let header: Vec<&str> = header.split('\t').map(str::trim).collect();
    if header.first() != Some(&BLANK_TOKEN) {
        return Err(err(1, format!("header must start with {BLANK_TOKEN}")));
    }
    let file_alphabet = Alphabet::new(header[1..].iter().copied()).map_err(|e| err(1, e.message))?;
    if let Some(expected) = alphabet {
        if expected != &file_alphabet {
            return Err(err(
                1,
                format!(
                    "shape mismatch: header has {} symbols, expected {}",
                    file_alphabet.len(),
                    expected.len()
                ),
            ));
        }
    }
    let k = file_alphabet.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, line) in lines {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != k {
            return Err(err(
                i + 1,
                format!("shape mismatch: expected {k} columns, found {}", fields.len()),
            ));
        }
        for f in fields {
            let v = f
                .trim()
                .parse::<f64>()
                .map_err(|_| err(i + 1, format!("bad number {f:?}")))?;
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(err(0, "no frames".into()));
    }
    let m = Array2::from_shape_vec((rows, k), data).expect("row lengths checked");
    Ok((file_alphabet, m))
}

pub fn write_matrix_tsv(alphabet: &Alphabet, m: &Array2<f64>) -> String {
    let mut s = alphabet.tokens().join("\t");
    s.push('\n');
    for row in m.axis_iter(Axis(0)) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(s, "{}", cells.join("\t")).unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn softmax_rows_sum_to_one() {
        let u = LogitMatrix::new(array![[1.0, 2.0, 3.0], [1000.0, 0.0, -1000.0]]).unwrap();
        let y = u.softmax();
        for t in 0..2 {
            assert!((y.row(t).sum() - 1.0).abs() < 1e-15);
        }
        assert!((y.get(1, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(PosteriorMatrix::new(array![[0.5, 0.6]]).is_err());
        assert!(PosteriorMatrix::new(array![[1.5, -0.5]]).is_err());
        assert!(PosteriorMatrix::new(Array2::zeros((0, 3))).is_err());
        assert!(LogitMatrix::new(array![[f64::NAN]]).is_err());
    }

    #[test]
    fn tsv_round_trip() {
        let a = Alphabet::new(["x", "y"]).unwrap();
        let m = array![[0.2, 0.3, 0.5], [0.1, 0.1, 0.8]];
        let text = write_matrix_tsv(&a, &m);
        let (b, back) = parse_matrix_tsv(&text, Some(&a), "p.tsv").unwrap();
        assert_eq!(b, a);
        assert_eq!(back, m);
    }

    #[test]
    fn tsv_shape_errors() {
        let a = Alphabet::new(["x", "y", "z"]).unwrap();
        let e = parse_matrix_tsv("<b>\tx\ty\n0.5\t0.25\t0.25\n", Some(&a), "p").unwrap_err();
        assert!(e.message.contains("shape mismatch"));
        let e = parse_matrix_tsv("<b>\tx\n0.5\t0.25\t0.25\n", None, "p").unwrap_err();
        assert_eq!(e.line, 2);
    }
}
