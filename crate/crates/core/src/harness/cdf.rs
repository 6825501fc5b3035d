//! Empirical CDFs of per-user metrics, grouped by result-table columns.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::harness::table::{ResultRow, ResultTable};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Rate,
    Ipd,
    Sar,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Rate => "rate",
            Metric::Ipd => "ipd",
            Metric::Sar => "sar",
        }
    }

    fn label(self) -> &'static str {
        match self {
            Metric::Rate => "rate [bit/s]",
            Metric::Ipd => "IPD [W/m^2]",
            Metric::Sar => "SAR [W/kg]",
        }
    }

    /// Value of the metric in `row`, if the row carries it and it is finite.
    pub fn value(self, row: &ResultRow) -> Option<f64> {
        let v = match self {
            Metric::Rate => Some(row.rate),
            Metric::Ipd => row.ipd,
            Metric::Sar => row.sar,
        }?;
        v.is_finite().then_some(v)
    }
}

impl FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rate" | "rate_bps" => Ok(Metric::Rate),
            "ipd" | "ipd_w_m2" => Ok(Metric::Ipd),
            "sar" | "sar_w_kg" => Ok(Metric::Sar),
            other => Err(Error::UnknownMetric(other.to_string())),
        }
    }
}

/// Columns a CDF can be split by.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroupKey {
    Deployment,
    Direction,
    Scheme,
    SweepK,
    SweepE,
}

impl GroupKey {
    fn label(self, row: &ResultRow) -> String {
        match self {
            GroupKey::Deployment => row.deployment.to_string(),
            GroupKey::Direction => row.direction.to_string(),
            GroupKey::Scheme => row.scheme.to_string(),
            GroupKey::SweepK => format!("k{}", row.sweep_k),
            GroupKey::SweepE => format!("e{}", row.sweep_e),
        }
    }

    /// Parses a comma-separated key list.
    pub fn parse_list(s: &str) -> Result<Vec<GroupKey>> {
        s.split(',').map(str::trim).filter(|t| !t.is_empty()).map(str::parse).collect()
    }
}

impl FromStr for GroupKey {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "deployment" => Ok(GroupKey::Deployment),
            "direction" => Ok(GroupKey::Direction),
            "scheme" => Ok(GroupKey::Scheme),
            "sweep_k" | "k" => Ok(GroupKey::SweepK),
            "sweep_e" | "e" => Ok(GroupKey::SweepE),
            other => Err(Error::UnknownColumn(other.to_string())),
        }
    }
}

/// Right-continuous empirical CDF: sorted distinct values `x` and `F(x)`, the
/// fraction of samples `<= x`. Non-finite samples are dropped.
pub fn empirical_cdf(samples: &[f64]) -> Vec<(f64, f64)> {
    let mut v: Vec<f64> = samples.iter().copied().filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, &x) in v.iter().enumerate() {
        let f = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == x => last.1 = f,
            _ => out.push((x, f)),
        }
    }
    out
}

/// Writes one `value,cdf` CSV per group plus a gnuplot script plotting them
/// all, and returns the CSV paths. Groups without finite values are skipped.
pub fn emit_cdf(table: &ResultTable, metric: Metric, group_by: &[GroupKey], out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for row in &table.rows {
        let name = if group_by.is_empty() {
            "all".to_string()
        } else {
            group_by.iter().map(|g| g.label(row)).collect::<Vec<_>>().join("_")
        };
        let entry = groups.entry(name).or_default();
        if let Some(v) = metric.value(row) {
            entry.push(v);
        }
    }
    std::fs::create_dir_all(out_dir)?;
    let mut paths = Vec::new();
    let mut plot = format!(
        "set xlabel '{}'\nset ylabel 'CDF'\nset key bottom right\nset datafile separator ','\nplot",
        metric.label()
    );
    for (name, values) in &groups {
        if values.is_empty() {
            log::warn!("group '{name}' has no finite {} values; skipped", metric.as_str());
            continue;
        }
        let file = format!("cdf_{}_{name}.csv", metric.as_str());
        let mut csv = String::from("value,cdf\n");
        for (x, f) in empirical_cdf(values) {
            let _ = writeln!(csv, "{x},{f}");
        }
        let path = out_dir.join(&file);
        std::fs::write(&path, csv)?;
        if !paths.is_empty() {
            plot.push(',');
        }
        let _ = write!(plot, " '{file}' using 1:2 skip 1 with steps title '{name}'");
        paths.push(path);
    }
    plot.push('\n');
    std::fs::write(out_dir.join(format!("cdf_{}.gp", metric.as_str())), plot)?;
    Ok(paths)
}
