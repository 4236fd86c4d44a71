use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Simulation truth carried alongside generated data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub theta0: DVector<f64>,
    /// η₀(Vᵢ)
    pub eta0: DVector<f64>,
    /// E[U | V = Vᵢ], n×p
    pub cond_mean_u: DMatrix<f64>,
    pub noise_sd: f64,
}

/// Observations (Uᵢ, Vᵢ, Yᵢ), i = 1..n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// n×p linear covariates.
    pub u: DMatrix<f64>,
    /// n×d nuisance covariates.
    pub v: DMatrix<f64>,
    pub y: DVector<f64>,
    pub truth: Option<GroundTruth>,
}

impl Dataset {
    pub fn new(u: DMatrix<f64>, v: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let data = Self {
            u,
            v,
            y,
            truth: None,
        };
        data.validate()?;
        Ok(data)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.u.ncols()
    }

    pub fn d(&self) -> usize {
        self.v.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.y.len();
        if n == 0 {
            return Err(Error::invalid("dataset has no rows"));
        }
        if self.u.nrows() != n || self.v.nrows() != n {
            return Err(Error::invalid(format!(
                "row counts disagree: y {n}, U {}, V {}",
                self.u.nrows(),
                self.v.nrows()
            )));
        }
        if self.u.ncols() == 0 || self.v.ncols() == 0 {
            return Err(Error::invalid("U and V need at least one column each"));
        }
        if self
            .u
            .iter()
            .chain(self.v.iter())
            .chain(self.y.iter())
            .any(|x| !x.is_finite())
        {
            return Err(Error::invalid("dataset contains non-finite values"));
        }
        if let Some(t) = &self.truth {
            if t.theta0.len() != self.p()
                || t.eta0.len() != n
                || t.cond_mean_u.shape() != (n, self.p())
            {
                return Err(Error::invalid("ground truth dimensions disagree with the data"));
            }
        }
        Ok(())
    }

    pub fn is_binary(&self) -> bool {
        self.y.iter().all(|y| *y == 0.0 || *y == 1.0)
    }

    pub fn v_row(&self, i: usize) -> Vec<f64> {
        self.v.row(i).iter().copied().collect()
    }

    /// Reads a CSV with header `y,u1..up,v1..vd`.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(csv_err)?.clone();
        let mut y_col = None;
        let mut u_cols = Vec::new();
        let mut v_cols = Vec::new();
        for (idx, name) in headers.iter().enumerate() {
            let name = name.to_ascii_lowercase();
            if name == "y" {
                y_col = Some(idx);
            } else if let Some(k) = name.strip_prefix('u').and_then(|s| s.parse::<usize>().ok()) {
                u_cols.push((k, idx));
            } else if let Some(k) = name.strip_prefix('v').and_then(|s| s.parse::<usize>().ok()) {
                v_cols.push((k, idx));
            } else {
                return Err(Error::Parse(format!("unexpected column `{name}`")));
            }
        }
        let y_col = y_col.ok_or_else(|| Error::Parse("missing `y` column".into()))?;
        for cols in [&mut u_cols, &mut v_cols] {
            cols.sort();
            if cols.iter().enumerate().any(|(i, (k, _))| *k != i + 1) {
                return Err(Error::Parse("u/v columns must be numbered 1..k without gaps".into()));
            }
        }
        let (mut y, mut u, mut v) = (Vec::new(), Vec::new(), Vec::new());
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let field = |idx: usize| -> Result<f64> {
                rec.get(idx)
                    .ok_or_else(|| Error::Parse(format!("row {}: missing field", line + 1)))?
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("row {}: {e}", line + 1)))
            };
            y.push(field(y_col)?);
            for &(_, idx) in &u_cols {
                u.push(field(idx)?);
            }
            for &(_, idx) in &v_cols {
                v.push(field(idx)?);
            }
        }
        let n = y.len();
        let data = Self {
            u: DMatrix::from_row_slice(n, u_cols.len(), &u),
            v: DMatrix::from_row_slice(n, v_cols.len(), &v),
            y: DVector::from_vec(y),
            truth: None,
        };
        data.validate()?;
        Ok(data)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["y".to_string()];
        header.extend((1..=self.p()).map(|k| format!("u{k}")));
        header.extend((1..=self.d()).map(|k| format!("v{k}")));
        w.write_record(&header).map_err(csv_err)?;
        for i in 0..self.n() {
            let mut row = vec![format!("{}", self.y[i])];
            row.extend(self.u.row(i).iter().map(|x| format!("{x}")));
            row.extend(self.v.row(i).iter().map(|x| format!("{x}")));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}
