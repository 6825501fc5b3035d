//! Per-user result rows and their CSV form.

use std::fmt::Write as _;
use std::path::Path;

use crate::baselines::{Direction, SchemeId};
use crate::scenario::DeploymentMode;
use crate::{Error, Result};

pub const CSV_HEADER: &str = "drop,deployment,direction,scheme,user,rate_bps,ipd_w_m2,sar_w_kg,solve_time_s,sweep_k,sweep_e";

/// One user under one scheme in one drop. `ipd` is only set for DL rows and
/// `sar` only for UL rows; a failed solve has a NaN rate.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub drop: usize,
    pub deployment: DeploymentMode,
    pub direction: Direction,
    pub scheme: SchemeId,
    pub user: usize,
    pub rate: f64,
    pub ipd: Option<f64>,
    pub sar: Option<f64>,
    pub solve_time: f64,
    pub sweep_k: usize,
    pub sweep_e: f64,
}

impl ResultRow {
    pub fn failed(&self) -> bool {
        self.rate.is_nan()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ResultTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(96 * (self.rows.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.drop,
                r.deployment,
                r.direction,
                r.scheme,
                r.user,
                r.rate,
                opt(r.ipd),
                opt(r.sar),
                r.solve_time,
                r.sweep_k,
                r.sweep_e
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == CSV_HEADER => {}
            _ => return Err(Error::Parse { line: 1, msg: format!("expected header '{CSV_HEADER}'") }),
        }
        let mut rows = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let line_no = i + 1;
            let err = |msg: String| Error::Parse { line: line_no, msg };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 11 {
                return Err(err(format!("expected 11 fields, found {}", f.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| err(format!("bad number '{s}'")));
            let int = |s: &str| s.parse::<usize>().map_err(|_| err(format!("bad integer '{s}'")));
            let maybe = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
            rows.push(ResultRow {
                drop: int(f[0])?,
                deployment: f[1].parse().map_err(|e: Error| err(e.to_string()))?,
                direction: f[2].parse().map_err(|e: Error| err(e.to_string()))?,
                scheme: f[3].parse().map_err(|e: Error| err(e.to_string()))?,
                user: int(f[4])?,
                rate: num(f[5])?,
                ipd: maybe(f[6])?,
                sar: maybe(f[7])?,
                solve_time: num(f[8])?,
                sweep_k: int(f[9])?,
                sweep_e: num(f[10])?,
            });
        }
        Ok(Self { rows })
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}
