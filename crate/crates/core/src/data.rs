//! Tabular sample data and its second-order statistics.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// `n × p` matrix of finite reals stored column by column, one named column per variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<Vec<f64>>,
    names: Vec<String>,
}

impl Dataset {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::InvalidDataset(format!("{} names for {} columns", names.len(), columns.len())));
        }
        if columns.is_empty() {
            return Err(Error::InvalidDataset("no variables".into()));
        }
        let n = columns[0].len();
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::InvalidDataset("ragged columns".into()));
        }
        if n < 2 {
            return Err(Error::TooFewRows(n));
        }
        let mut seen = HashSet::new();
        for name in &names {
            if name.is_empty() {
                return Err(Error::InvalidDataset("empty variable name".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::DuplicateName(name.clone()));
            }
        }
        for (j, c) in columns.iter().enumerate() {
            if let Some(i) = c.iter().position(|v| !v.is_finite()) {
                return Err(Error::Parse { row: i + 1, col: j + 1, msg: "non-finite value".into() });
            }
        }
        Ok(Self { columns, names })
    }

    /// Default names `X0..X{p-1}`.
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let names = (0..columns.len()).map(|i| format!("X{i}")).collect();
        Self::new(names, columns)
    }

    pub fn n(&self) -> usize {
        self.columns[0].len()
    }

    pub fn p(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Keeps the listed columns, in the given order.
    pub fn select(&self, idx: &[usize]) -> Result<Dataset> {
        Dataset::new(
            idx.iter().map(|&i| self.names[i].clone()).collect(),
            idx.iter().map(|&i| self.columns[i].clone()).collect(),
        )
    }

    /// Each column shifted to mean 0 and scaled to population variance 1.
    pub fn standardize(&self) -> Result<Dataset> {
        let columns = self
            .columns
            .par_iter()
            .enumerate()
            .map(|(j, c)| {
                let (m, s) = mean_std(c);
                if s == 0.0 || !s.is_finite() {
                    return Err(Error::ConstantColumn(j));
                }
                Ok(c.iter().map(|v| (v - m) / s).collect())
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        Ok(Dataset { columns, names: self.names.clone() })
    }

    pub fn summary_stats(&self) -> Result<SummaryStats> {
        let moments: Vec<(f64, f64)> = self.columns.par_iter().map(|c| mean_std(c)).collect();
        if let Some(j) = moments.iter().position(|&(_, s)| s == 0.0) {
            return Err(Error::ConstantColumn(j));
        }
        let p = self.p();
        let n = self.n() as f64;
        let centered: Vec<Vec<f64>> = self
            .columns
            .par_iter()
            .zip(&moments)
            .map(|(c, &(m, s))| c.iter().map(|v| (v - m) / s).collect())
            .collect();
        let mut corr = DMatrix::<f64>::identity(p, p);
        let upper: Vec<(usize, usize, f64)> = (0..p)
            .flat_map(|i| (i + 1..p).map(move |j| (i, j)))
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|(i, j)| {
                let r = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum::<f64>() / n;
                (i, j, r.clamp(-1.0, 1.0))
            })
            .collect();
        for (i, j, r) in upper {
            corr[(i, j)] = r;
            corr[(j, i)] = r;
        }
        Ok(SummaryStats {
            means: moments.iter().map(|m| m.0).collect(),
            std_devs: moments.iter().map(|m| m.1).collect(),
            correlation: corr,
        })
    }

    /// Covariance with the population (1/n) normalization.
    pub fn covariance(&self) -> DMatrix<f64> {
        let p = self.p();
        let n = self.n() as f64;
        let means: Vec<f64> = self.columns.iter().map(|c| mean_std(c).0).collect();
        DMatrix::from_fn(p, p, |i, j| {
            self.columns[i]
                .iter()
                .zip(&self.columns[j])
                .map(|(a, b)| (a - means[i]) * (b - means[j]))
                .sum::<f64>()
                / n
        })
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_csv(&text)
    }

    /// Comma separated, header row first, every other cell numeric. Row and
    /// column numbers in errors are 1-based and count data rows only.
    pub fn parse_csv(text: &str) -> Result<Dataset> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
        let names: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::Parse { row: 0, col: 0, msg: e.to_string() })?
            .iter()
            .map(str::to_string)
            .collect();
        if names.is_empty() || names.iter().all(String::is_empty) {
            return Err(Error::Parse { row: 0, col: 1, msg: "missing header".into() });
        }
        let mut seen = HashSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::DuplicateName(name.clone()));
            }
        }
        let mut columns = vec![Vec::new(); names.len()];
        for (r, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse { row: r + 1, col: 0, msg: e.to_string() })?;
            for (c, cell) in rec.iter().enumerate() {
                let v: f64 = cell
                    .parse()
                    .ok()
                    .filter(|v: &f64| v.is_finite())
                    .ok_or_else(|| Error::Parse { row: r + 1, col: c + 1, msg: format!("not a finite number: `{cell}`") })?;
                columns[c].push(v);
            }
        }
        if columns[0].len() < 2 {
            return Err(Error::TooFewRows(columns[0].len()));
        }
        Dataset::new(names, columns)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(&self.names).map_err(io)?;
        let mut row = Vec::with_capacity(self.p());
        for i in 0..self.n() {
            row.clear();
            // `{}` on f64 prints the shortest string that parses back exactly
            row.extend(self.columns.iter().map(|c| format!("{}", c[i])));
            w.write_record(&row).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

/// Means, population standard deviations and the Pearson correlation matrix.
#[derive(Debug, Clone)]
pub struct SummaryStats {
    pub means: Vec<f64>,
    pub std_devs: Vec<f64>,
    pub correlation: DMatrix<f64>,
}

pub(crate) fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
    (m, var.sqrt())
}
