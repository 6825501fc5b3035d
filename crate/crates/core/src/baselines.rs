//! Heuristic power control: uniform and proportional splits in the DL,
//! full-power and fractional power control in the UL.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::scenario::{ExposureLimits, Scenario};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    Dl,
    Ul,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Dl => "dl",
            Direction::Ul => "ul",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dl" | "downlink" => Ok(Direction::Dl),
            "ul" | "uplink" => Ok(Direction::Ul),
            other => Err(Error::InvalidConfig(format!("unknown direction '{other}'"))),
        }
    }
}

/// Power control scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SchemeId {
    /// Max-min optimization with EMF caps.
    Opc,
    /// Max-min optimization without EMF caps.
    Uo,
    Upc,
    /// DL only.
    Ppc,
    /// UL only.
    Fpc,
}

impl SchemeId {
    pub const ALL: [SchemeId; 5] = [SchemeId::Opc, SchemeId::Uo, SchemeId::Upc, SchemeId::Ppc, SchemeId::Fpc];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeId::Opc => "opc",
            SchemeId::Uo => "uo",
            SchemeId::Upc => "upc",
            SchemeId::Ppc => "ppc",
            SchemeId::Fpc => "fpc",
        }
    }

    pub fn applies_to(self, direction: Direction) -> bool {
        !matches!((self, direction), (SchemeId::Ppc, Direction::Ul) | (SchemeId::Fpc, Direction::Dl))
    }

    pub fn is_optimized(self) -> bool {
        matches!(self, SchemeId::Opc | SchemeId::Uo)
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        SchemeId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown scheme '{s}'")))
    }
}

/// `P_m` split equally over the users served by AP m.
pub fn upc_dl(association: &DMatrix<u8>, budgets: &[f64]) -> DMatrix<f64> {
    split_dl(association, budgets, |_, _| 1.0)
}

/// `P_m` split over served users in proportion to their large-scale gain.
pub fn ppc_dl(association: &DMatrix<u8>, budgets: &[f64], large_scale: &DMatrix<f64>) -> DMatrix<f64> {
    split_dl(association, budgets, |k, m| large_scale[(k, m)])
}

fn split_dl(association: &DMatrix<u8>, budgets: &[f64], weight: impl Fn(usize, usize) -> f64) -> DMatrix<f64> {
    let (k, m) = association.shape();
    let mut p = DMatrix::zeros(k, m);
    for ap in 0..m {
        let total: f64 = (0..k).filter(|&u| association[(u, ap)] == 1).map(|u| weight(u, ap)).sum();
        if total <= 0.0 {
            continue;
        }
        for u in (0..k).filter(|&u| association[(u, ap)] == 1) {
            p[(u, ap)] = budgets[ap] * weight(u, ap) / total;
        }
    }
    p
}

pub fn upc_dl_for(scenario: &Scenario) -> DMatrix<f64> {
    upc_dl(&scenario.association, &vec![scenario.config.dl_power_budget; scenario.num_aps()])
}

pub fn ppc_dl_for(scenario: &Scenario) -> DMatrix<f64> {
    ppc_dl(&scenario.association, &vec![scenario.config.dl_power_budget; scenario.num_aps()], &scenario.large_scale)
}

/// Power ceiling of each user: the budget, or the budget and SAR cap.
pub fn ul_ceiling(budgets: &[f64], limits: &ExposureLimits, respect_emf: bool) -> Vec<f64> {
    budgets
        .iter()
        .enumerate()
        .map(|(k, &q)| if respect_emf { q.min(limits.sar_power_cap(k)) } else { q })
        .collect()
}

/// Every user at its ceiling.
pub fn upc_ul(budgets: &[f64], limits: &ExposureLimits, respect_emf: bool) -> Vec<f64> {
    ul_ceiling(budgets, limits, respect_emf)
}

pub const DEFAULT_FPC_EXPONENT: f64 = 0.5;

/// `q_k = q_cap,k (min_j ᾱ_j / ᾱ_k)^ν` with `ᾱ_k = Σ_m a_{k,m} α_{k,m}`.
pub fn fpc_ul(
    association: &DMatrix<u8>,
    large_scale: &DMatrix<f64>,
    budgets: &[f64],
    limits: &ExposureLimits,
    exponent: f64,
    respect_emf: bool,
) -> Result<Vec<f64>> {
    if !(-1.0..=1.0).contains(&exponent) {
        return Err(Error::InvalidConfig(format!("FPC exponent {exponent} outside [-1, 1]")));
    }
    let (k, m) = association.shape();
    let aggregate: Vec<f64> =
        (0..k).map(|u| (0..m).filter(|&a| association[(u, a)] == 1).map(|a| large_scale[(u, a)]).sum()).collect();
    if let Some(u) = aggregate.iter().position(|&g| !(g > 0.0)) {
        return Err(Error::DegenerateUser(u));
    }
    let weakest = aggregate.iter().copied().fold(f64::INFINITY, f64::min);
    let ceiling = ul_ceiling(budgets, limits, respect_emf);
    Ok((0..k).map(|u| (ceiling[u] * (weakest / aggregate[u]).powf(exponent)).min(ceiling[u])).collect())
}
