//! Line-oriented `key = value` campaign files.
//!
//! `#` starts a comment. Units are part of the key name; values are stored
//! in SI. Every key is optional:
//!
//! | key | default |
//! |---|---|
//! | `num_users` | 20 |
//! | `num_aps` | 40 |
//! | `antennas_per_ap` | 4 |
//! | `association_size` | 5 |
//! | `area_side_m` | 1000 |
//! | `carrier_frequency_mhz` | 2500 |
//! | `bandwidth_mhz` | 20 |
//! | `dl_power_budget_dbm` | 23 |
//! | `ul_power_budget_dbm` | 20 |
//! | `pilot_power_dbm` | 20 |
//! | `noise_psd_dbm_hz` | -174 |
//! | `coherence_block` | 200 |
//! | `ap_height_m` | 10 |
//! | `user_height_m` | 1.5 |
//! | `antenna_spacing_wavelengths` | 0.5 |
//! | `shadowing_std_db` | 0 |
//! | `ap_layout` | `jittered_grid` (or `uniform`) |
//! | `ap_jitter` | 0.1 (fraction of the grid cell) |
//! | `ipd_cap_w_m2` | 10 |
//! | `sar_cap_w_kg` | 0.08 |
//! | `sar_coeff_per_kg` | 8 |
//! | `body_parts` | 1 |
//! | `schemes` | `opc,uo,upc,ppc,fpc` |
//! | `deployments` | `cell_free,multi_cell` |
//! | `directions` | `dl,ul` |
//! | `num_drops` | 100 |
//! | `master_seed` | 1 |
//! | `sweep_num_users` | empty (use `num_users`) |
//! | `sweep_sar_cap_w_kg` | empty (use `sar_cap_w_kg`) |
//! | `csi` | `estimated` (or `perfect`) |
//! | `pilot_pairing` | `greedy` (or `random`) |
//! | `fpc_exponent` | 0.5 |
//! | `baselines_respect_emf` | false |
//! | `dl_nesting` | `per_iteration` (or `per_probe`) |
//! | `sco_tolerance` | 1e-3 |
//! | `sco_max_outer` | 50 |
//! | `bisection_tolerance` | 1e-4 |
//! | `record_solve_time` | false |

use std::path::Path;

use crate::baselines::{Direction, SchemeId, DEFAULT_FPC_EXPONENT};
use crate::convex::BisectionSettings;
use crate::dl_opt::{DlSettings, LoopNesting};
use crate::estimation::PairingRule;
use crate::scenario::{ApLayout, DeploymentMode, ExposureLimits, NetworkConfig};
use crate::units;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CsiMode {
    Estimated,
    Perfect,
}

#[derive(Clone, Debug)]
pub struct CampaignSpec {
    pub base: NetworkConfig,
    pub limits: ExposureLimits,
    pub schemes: Vec<SchemeId>,
    pub deployments: Vec<DeploymentMode>,
    pub directions: Vec<Direction>,
    pub num_drops: usize,
    pub master_seed: u64,
    pub sweep_num_users: Vec<usize>,
    pub sweep_sar_cap: Vec<f64>,
    pub csi: CsiMode,
    pub pairing: PairingRule,
    pub fpc_exponent: f64,
    pub baselines_respect_emf: bool,
    pub dl: DlSettings,
    pub ul_bisection: BisectionSettings,
    pub record_solve_time: bool,
}

impl Default for CampaignSpec {
    fn default() -> Self {
        let base = NetworkConfig::default();
        let limits = ExposureLimits::standard(base.num_users);
        Self {
            base,
            limits,
            schemes: SchemeId::ALL.to_vec(),
            deployments: vec![DeploymentMode::CellFree, DeploymentMode::MultiCell],
            directions: vec![Direction::Dl, Direction::Ul],
            num_drops: 100,
            master_seed: 1,
            sweep_num_users: Vec::new(),
            sweep_sar_cap: Vec::new(),
            csi: CsiMode::Estimated,
            pairing: PairingRule::GreedyMaxDistance,
            fpc_exponent: DEFAULT_FPC_EXPONENT,
            baselines_respect_emf: false,
            dl: DlSettings::default(),
            ul_bisection: BisectionSettings { rel_tol: 1e-9, ..BisectionSettings::default() },
            record_solve_time: false,
        }
    }
}

impl CampaignSpec {
    /// User counts of the sweep (the base count when no sweep is set).
    pub fn user_counts(&self) -> Vec<usize> {
        if self.sweep_num_users.is_empty() { vec![self.base.num_users] } else { self.sweep_num_users.clone() }
    }

    /// SAR caps of the sweep (the base cap when no sweep is set).
    pub fn sar_caps(&self) -> Vec<f64> {
        if self.sweep_sar_cap.is_empty() { vec![self.limits.sar_caps[(0, 0)]] } else { self.sweep_sar_cap.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        self.limits.validate()?;
        if self.num_drops == 0 {
            return Err(Error::InvalidConfig("num_drops must be at least 1".into()));
        }
        if self.schemes.is_empty() || self.deployments.is_empty() || self.directions.is_empty() {
            return Err(Error::InvalidConfig("schemes, deployments and directions must be non-empty".into()));
        }
        if self.sweep_num_users.contains(&0) || self.sweep_sar_cap.iter().any(|&e| !(e > 0.0)) {
            return Err(Error::InvalidConfig("sweep values must be positive".into()));
        }
        if !(-1.0..=1.0).contains(&self.fpc_exponent) {
            return Err(Error::InvalidConfig("fpc_exponent must lie in [-1, 1]".into()));
        }
        for &k in &self.user_counts() {
            self.base.with_num_users(k).validate()?;
        }
        Ok(())
    }
}

pub fn load_config(path: &Path) -> Result<CampaignSpec> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

fn list<T>(value: &str, parse: impl Fn(&str) -> std::result::Result<T, String>) -> std::result::Result<Vec<T>, String> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(parse).collect()
}

fn num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse::<T>().map_err(|_| format!("cannot parse '{v}'"))
}

fn boolean(v: &str) -> std::result::Result<bool, String> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(format!("expected a boolean, got '{v}'")),
    }
}

/// Parses a campaign file. Unknown keys and invalid values are errors
/// carrying the 1-based line number.
pub fn parse_config(text: &str) -> Result<CampaignSpec> {
    let mut spec = CampaignSpec::default();
    let mut num_users = spec.base.num_users;
    let mut ipd_cap = ExposureLimits::DEFAULT_IPD_CAP;
    let mut sar_cap = ExposureLimits::DEFAULT_SAR_CAP;
    let mut sar_coeff = ExposureLimits::DEFAULT_SAR_COEFF;
    let mut body_parts = 1usize;
    let mut jitter = 0.1;
    let mut layout_uniform = false;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse { line: line_no, msg };
        let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected 'key = value', got '{line}'")))?;
        let (key, value) = (key.trim(), value.trim());
        let b = &mut spec.base;
        let r: std::result::Result<(), String> = (|| {
            match key {
                "num_users" => num_users = num::<usize>(value)?,
                "num_aps" => b.num_aps = num(value)?,
                "antennas_per_ap" => b.antennas_per_ap = num(value)?,
                "association_size" => b.association_size = num(value)?,
                "area_side_m" => b.area_side = num(value)?,
                "carrier_frequency_mhz" => b.carrier_frequency = num::<f64>(value)? * 1e6,
                "bandwidth_mhz" => b.bandwidth = num::<f64>(value)? * 1e6,
                "dl_power_budget_dbm" => b.dl_power_budget = units::dbm_to_watts(num(value)?),
                "ul_power_budget_dbm" => b.ul_power_budget = units::dbm_to_watts(num(value)?),
                "pilot_power_dbm" => b.pilot_power = units::dbm_to_watts(num(value)?),
                "noise_psd_dbm_hz" => b.noise_psd = units::dbm_to_watts(num(value)?),
                "coherence_block" => b.coherence_block = num(value)?,
                "ap_height_m" => b.propagation.ap_height = num(value)?,
                "user_height_m" => b.propagation.user_height = num(value)?,
                "antenna_spacing_wavelengths" => b.propagation.antenna_spacing = num(value)?,
                "shadowing_std_db" => b.propagation.shadowing_std_db = num(value)?,
                "ap_layout" => {
                    layout_uniform = match value {
                        "jittered_grid" | "grid" => false,
                        "uniform" | "uniform_random" => true,
                        _ => return Err(format!("unknown AP layout '{value}'")),
                    }
                }
                "ap_jitter" => jitter = num(value)?,
                "ipd_cap_w_m2" => ipd_cap = num(value)?,
                "sar_cap_w_kg" => sar_cap = num(value)?,
                "sar_coeff_per_kg" => sar_coeff = num(value)?,
                "body_parts" => body_parts = num(value)?,
                "schemes" => spec.schemes = list(value, |s| s.parse().map_err(|e: Error| e.to_string()))?,
                "deployments" => spec.deployments = list(value, |s| s.parse().map_err(|e: Error| e.to_string()))?,
                "directions" => spec.directions = list(value, |s| s.parse().map_err(|e: Error| e.to_string()))?,
                "num_drops" => spec.num_drops = num(value)?,
                "master_seed" => spec.master_seed = num(value)?,
                "sweep_num_users" => spec.sweep_num_users = list(value, num)?,
                "sweep_sar_cap_w_kg" => spec.sweep_sar_cap = list(value, num)?,
                "csi" => {
                    spec.csi = match value {
                        "estimated" => CsiMode::Estimated,
                        "perfect" => CsiMode::Perfect,
                        _ => return Err(format!("unknown CSI mode '{value}'")),
                    }
                }
                "pilot_pairing" => {
                    spec.pairing = match value {
                        "greedy" => PairingRule::GreedyMaxDistance,
                        "random" => PairingRule::Random,
                        _ => return Err(format!("unknown pilot pairing '{value}'")),
                    }
                }
                "fpc_exponent" => spec.fpc_exponent = num(value)?,
                "baselines_respect_emf" => spec.baselines_respect_emf = boolean(value)?,
                "dl_nesting" => {
                    spec.dl.nesting = match value {
                        "per_iteration" => LoopNesting::BisectionPerIteration,
                        "per_probe" => LoopNesting::SuccessivePerProbe,
                        _ => return Err(format!("unknown DL nesting '{value}'")),
                    }
                }
                "sco_tolerance" => spec.dl.tol_sco = num(value)?,
                "sco_max_outer" => spec.dl.max_outer = num(value)?,
                "bisection_tolerance" => spec.dl.bisection.rel_tol = num(value)?,
                "record_solve_time" => spec.record_solve_time = boolean(value)?,
                _ => return Err(format!("unknown key '{key}'")),
            }
            Ok(())
        })();
        r.map_err(err)?;
    }
    spec.base.propagation.ap_layout =
        if layout_uniform { ApLayout::UniformRandom } else { ApLayout::JitteredGrid { jitter } };
    spec.base = spec.base.with_num_users(num_users);
    spec.limits = ExposureLimits::uniform(num_users, ipd_cap, sar_cap, sar_coeff, body_parts);
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let s = parse_config("").unwrap();
        let b = &s.base;
        assert_eq!((b.num_users, b.num_aps, b.antennas_per_ap, b.association_size), (20, 40, 4, 5));
        assert!((b.dl_power_budget - 0.19952623149688797).abs() < 1e-15);
        assert!((b.ul_power_budget - 0.1).abs() < 1e-15);
        assert!((b.pilot_power - 0.1).abs() < 1e-15);
        assert_eq!(b.bandwidth, 20e6);
        assert_eq!(b.coherence_block, 200);
        assert!((b.noise_psd / 3.981071705534969e-21 - 1.0).abs() < 1e-12);
        assert_eq!(s.limits.ipd_caps[0], 10.0);
        assert_eq!(s.limits.sar_caps[(0, 0)], 0.08);
        assert_eq!(s.limits.sar_coeffs[(0, 0)], 8.0);
        assert_eq!(s.num_drops, 100);
        assert_eq!((b.pilot_length, b.dl_symbols, b.ul_symbols), (10, 95, 95));
    }

    #[test]
    fn unit_suffixed_keys() {
        let s = parse_config("ul_power_budget_dbm = 20\nbandwidth_mhz = 10 # half\ncarrier_frequency_mhz=3500").unwrap();
        assert!((s.base.ul_power_budget - 0.1).abs() < 1e-15);
        assert_eq!(s.base.bandwidth, 10e6);
        assert_eq!(s.base.carrier_frequency, 3.5e9);
    }

    #[test]
    fn lists_and_sweeps() {
        let s = parse_config("schemes = opc, upc\ndeployments = cell_free\ndirections = ul\nsweep_num_users = 10,20\nsweep_sar_cap_w_kg = 0.08, 0.008")
            .unwrap();
        assert_eq!(s.schemes, vec![SchemeId::Opc, SchemeId::Upc]);
        assert_eq!(s.deployments, vec![DeploymentMode::CellFree]);
        assert_eq!(s.directions, vec![Direction::Ul]);
        assert_eq!(s.user_counts(), vec![10, 20]);
        assert_eq!(s.sar_caps(), vec![0.08, 0.008]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        match parse_config("# ok\nnum_users = -1") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_config("bogus = 1"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_config("no equals sign"), Err(Error::Parse { line: 1, .. })));
        assert!(parse_config("num_drops = 0").is_err());
        assert!(parse_config("ipd_cap_w_m2 = -3").is_err());
        assert!(parse_config("area_side_m = -10").is_err());
    }
}
