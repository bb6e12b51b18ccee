//! Covariate/response datasets and their CSV form.
//!
//! The CSV layout is a mandatory header `x1,…,xq,y1,y2` followed by one row
//! per observation. The responses are always the last two columns, which
//! is how the covariate dimension `q` is detected.

use crate::error::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

/// `n` observations of `(x ∈ R^q, y1, y2)`, covariates stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Vec<f64>,
    q: usize,
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
}

impl Dataset {
    pub fn new(x: Vec<f64>, q: usize, y1: Vec<f64>, y2: Vec<f64>) -> Result<Self> {
        let n = y1.len();
        if q == 0 {
            return Err(Error::Config("covariate dimension must be at least 1".into()));
        }
        if n == 0 {
            return Err(Error::InsufficientData("dataset has no rows".into()));
        }
        if y2.len() != n || x.len() != n * q {
            return Err(Error::Config(format!(
                "inconsistent lengths: {} covariate values for q = {q}, {} y1, {} y2",
                x.len(),
                n,
                y2.len()
            )));
        }
        if x.iter().chain(&y1).chain(&y2).any(|v| !v.is_finite()) {
            return Err(Error::Domain("dataset contains non-finite values".into()));
        }
        Ok(Dataset { x, q, y1, y2 })
    }

    pub fn n(&self) -> usize {
        self.y1.len()
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.q..(i + 1) * self.q]
    }

    /// Row-major covariate matrix.
    pub fn covariates(&self) -> &[f64] {
        &self.x
    }

    /// Rows `idx` in the given order (duplicates allowed).
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let mut x = Vec::with_capacity(idx.len() * self.q);
        for &i in idx {
            x.extend_from_slice(self.row(i));
        }
        Dataset {
            x,
            q: self.q,
            y1: idx.iter().map(|&i| self.y1[i]).collect(),
            y2: idx.iter().map(|&i| self.y2[i]).collect(),
        }
    }

    pub fn read_csv<P: AsRef<Path>>(path: P) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())
            .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_reader(file)
    }

    pub fn from_reader<R: Read>(rdr: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(rdr);
        let parse_err = |line: u64, message: String| Error::Parse { line, message };
        let header = reader
            .headers()
            .map_err(|e| parse_err(1, e.to_string()))?
            .clone();
        let cols = header.len();
        if cols < 3 {
            return Err(parse_err(
                1,
                format!("expected header x1,…,xq,y1,y2 with q >= 1, got {cols} columns"),
            ));
        }
        if &header[cols - 2] != "y1" || &header[cols - 1] != "y2" {
            return Err(parse_err(1, "last two header columns must be y1,y2".into()));
        }
        let q = cols - 2;
        let (mut x, mut y1, mut y2) = (Vec::new(), Vec::new(), Vec::new());
        for rec in reader.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                parse_err(line, e.to_string())
            })?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            if rec.len() != cols {
                return Err(parse_err(
                    line,
                    format!("expected {cols} columns, found {}", rec.len()),
                ));
            }
            for (j, field) in rec.iter().enumerate() {
                let v: f64 = field
                    .parse()
                    .map_err(|_| parse_err(line, format!("column {}: '{field}' is not a number", j + 1)))?;
                if !v.is_finite() {
                    return Err(parse_err(line, format!("column {}: non-finite value", j + 1)));
                }
                match j {
                    j if j < q => x.push(v),
                    j if j == q => y1.push(v),
                    _ => y2.push(v),
                }
            }
        }
        if y1.is_empty() {
            return Err(parse_err(2, "no data rows".into()));
        }
        Dataset::new(x, q, y1, y2)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.q).map(|j| format!("x{j}")).collect();
        header.push("y1".into());
        header.push("y2".into());
        w.write_record(&header).map_err(|e| Error::Io(e.to_string()))?;
        for i in 0..self.n() {
            let rec: Vec<String> = self
                .row(i)
                .iter()
                .chain([&self.y1[i], &self.y2[i]])
                .map(|v| v.to_string())
                .collect();
            w.write_record(&rec).map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}
