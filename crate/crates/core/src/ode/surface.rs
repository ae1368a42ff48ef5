use std::io::Write;

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::integrator::StepStats;

/// `u(t, e_i)` on a time grid. Row `k` is the vector `u_{t_k}`; it is both the
/// BSDE value in each state and the integrand `Z_{t_k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSurface<T> {
    /// Ascending, `times[0] = 0`, last entry is the horizon.
    pub times: Vec<T>,
    pub values: Vec<Vec<T>>,
    /// Knocked-out states, held at zero.
    pub pinned: Vec<usize>,
    /// Price per state, used for CSV column labels.
    pub labels: Option<Vec<T>>,
    pub stats: StepStats,
}

impl<T: Real> ValueSurface<T> {
    pub fn n_states(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn initial(&self) -> &[T] {
        &self.values[0]
    }

    pub fn terminal(&self) -> &[T] {
        self.values.last().expect("surface has at least one row")
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            values: self
                .values
                .iter()
                .map(|r| r.iter().map(|&v| f(v)).collect())
                .collect(),
            ..self.clone()
        }
    }

    /// Largest absolute entrywise difference; `None` if the grids differ.
    pub fn max_abs_diff(&self, other: &Self) -> Option<T> {
        if self.times != other.times || self.n_states() != other.n_states() {
            return None;
        }
        Some(
            self.values
                .iter()
                .flatten()
                .zip(other.values.iter().flatten())
                .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs())),
        )
    }

    fn header(&self) -> String {
        let mut cols = vec!["t".to_string()];
        match &self.labels {
            Some(prices) => cols.extend(prices.iter().map(|p| format!("S_{p}"))),
            None => cols.extend((0..self.n_states()).map(|i| format!("state_{i}"))),
        }
        cols.join(",")
    }

    /// Header `t,state_0,...` (or `t,S_<price>,...`), then one row per time.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{}", self.header())?;
        for (t, row) in self.times.iter().zip(&self.values) {
            write!(w, "{t}")?;
            for v in row {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 0,
            msg: "empty csv".into(),
        })?;
        let cols: Vec<&str> = header.trim().split(',').collect();
        if cols.first() != Some(&"t") || cols.len() < 2 {
            return Err(Error::Parse {
                line: 1,
                msg: "header must start with `t` and name at least one state".into(),
            });
        }
        let n = cols.len() - 1;
        let labels = if cols[1..].iter().all(|c| c.starts_with("S_")) {
            let parsed: Option<Vec<T>> = cols[1..].iter().map(|c| c[2..].parse().ok()).collect();
            Some(parsed.ok_or(Error::Parse {
                line: 1,
                msg: "bad price label".into(),
            })?)
        } else {
            None
        };
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (k, line) in lines {
            let parsed: std::result::Result<Vec<T>, _> =
                line.trim().split(',').map(|c| c.trim().parse::<T>()).collect();
            let row = parsed.map_err(|_| Error::Parse {
                line: k + 1,
                msg: "non-numeric cell".into(),
            })?;
            if row.len() != n + 1 {
                return Err(Error::Parse {
                    line: k + 1,
                    msg: format!("expected {} cells, got {}", n + 1, row.len()),
                });
            }
            times.push(row[0]);
            values.push(row[1..].to_vec());
        }
        if times.is_empty() {
            return Err(Error::Parse {
                line: 0,
                msg: "no data rows".into(),
            });
        }
        Ok(Self {
            times,
            values,
            pinned: Vec::new(),
            labels,
            stats: StepStats::default(),
        })
    }
}
