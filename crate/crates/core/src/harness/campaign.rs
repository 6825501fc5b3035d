//! Monte-Carlo campaigns: one drop per job, every deployment, direction and
//! scheme evaluated on the same users and channels.
//!
//! Designs use the estimated channels; reported rates, IPD and SAR use the
//! true ones. Both are kept in [`SchemeOutcome`].

use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::baselines::{self, Direction, SchemeId};
use crate::channel::{draw_channels_seeded, ChannelSet, ChannelSource};
use crate::dl_opt::{self, DlSettings, DlSolution, DlTraceRow};
use crate::estimation::{self, PairingRule};
use crate::harness::config::{CampaignSpec, CsiMode};
use crate::harness::table::{ResultRow, ResultTable};
use crate::metrics::{self, BeamformerSet, RateParams};
use crate::scenario::{self, streams, DeploymentMode, ExposureLimits, NetworkConfig, Scenario};
use crate::ul_opt;
use crate::convex::BisectionSettings;
use crate::{Error, Result};

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable seed of one drop at one user-count sweep point.
pub fn drop_seed(master_seed: u64, drop: usize, sweep: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(master_seed) ^ drop as u64) ^ (sweep as u64).wrapping_mul(0x1000_0000_01b3))
}

/// Everything needed to run any scheme on one deployment of one drop.
#[derive(Clone, Debug)]
pub struct DropContext {
    pub config: NetworkConfig,
    pub scenario: Scenario,
    pub channels: ChannelSet,
    /// Association after dropping links whose estimate vanished.
    pub association: DMatrix<u8>,
    pub beams: BeamformerSet,
}

impl DropContext {
    /// Drop `seed` of `config`, with estimated or perfect CSI.
    pub fn new(config: &NetworkConfig, seed: u64, csi: CsiMode, pairing: PairingRule) -> Result<Self> {
        let scenario = scenario::generate_drop(config, seed)?;
        let mut channels = draw_channels_seeded(&scenario, seed);
        let (k, m) = (config.num_users, config.num_aps);
        match csi {
            CsiMode::Perfect => channels.estimates = channels.true_channels.clone(),
            CsiMode::Estimated => {
                let book = match pairing {
                    PairingRule::GreedyMaxDistance => {
                        estimation::assign_pilots(k, config.pilot_length, &scenario.user_positions, config.area_side)?
                    }
                    PairingRule::Random => estimation::assign_pilots_random(
                        k,
                        config.pilot_length,
                        &mut scenario::stream_rng(seed, streams::PAIRING),
                    )?,
                };
                let mu = vec![config.pilot_power; k];
                let eta = vec![config.noise_power(); m];
                let mut rng = scenario::stream_rng(seed, streams::PILOT_NOISE);
                let obs = estimation::simulate_pilot_phase(&channels, &book, &mu, &eta, &mut rng)?;
                estimation::estimate_channels(&mut channels, &book, &obs, &mu, &eta)?;
            }
        }
        let mut association = scenario.association.clone();
        let beams = loop {
            match metrics::conjugate_beamformers(&channels, ChannelSource::Estimated, &association) {
                Ok(b) => break b,
                Err(Error::ZeroEstimate { user, ap }) => {
                    log::warn!("zero channel estimate for user {user} at AP {ap}; link deactivated");
                    association[(user, ap)] = 0;
                }
                Err(e) => return Err(e),
            }
        };
        Ok(Self { config: config.clone(), scenario, channels, association, beams })
    }

    pub fn num_users(&self) -> usize {
        self.config.num_users
    }

    pub fn dl_rate(&self) -> RateParams {
        RateParams {
            prelog_symbols: self.config.dl_symbols,
            coherence_block: self.config.coherence_block,
            bandwidth: self.config.bandwidth,
        }
    }

    pub fn ul_rate(&self) -> RateParams {
        RateParams {
            prelog_symbols: self.config.ul_symbols,
            coherence_block: self.config.coherence_block,
            bandwidth: self.config.bandwidth,
        }
    }

    pub fn dl_budgets(&self) -> Vec<f64> {
        vec![self.config.dl_power_budget; self.config.num_aps]
    }

    pub fn ul_budgets(&self) -> Vec<f64> {
        vec![self.config.ul_power_budget; self.config.num_users]
    }

    /// DL design problem; `None` caps disable the IPD constraints.
    pub fn dl_problem(&self, ipd_caps: Option<&[f64]>) -> Result<dl_opt::DlProblemData> {
        let k = self.num_users();
        let caps = ipd_caps.map(<[f64]>::to_vec).unwrap_or_else(|| vec![f64::INFINITY; k]);
        dl_opt::build_dl_problem(
            &self.channels,
            ChannelSource::Estimated,
            &self.beams,
            &self.association,
            &self.dl_budgets(),
            &caps,
            &vec![self.config.noise_power(); k],
            self.config.wavelength(),
        )
    }

    pub fn upc_dl(&self) -> DMatrix<f64> {
        baselines::upc_dl(&self.association, &self.dl_budgets())
    }

    pub fn ppc_dl(&self) -> DMatrix<f64> {
        baselines::ppc_dl(&self.association, &self.dl_budgets(), &self.scenario.large_scale)
    }

    /// Max-min DL powers; with `limits = None` the IPD caps are ignored.
    pub fn solve_dl(&self, limits: Option<&ExposureLimits>, settings: &DlSettings) -> Result<DlSolution> {
        let data = self.dl_problem(limits.map(|l| l.ipd_caps.as_slice()))?;
        let phi0 = dl_opt::initial_point(&data, &[self.upc_dl(), self.ppc_dl()]);
        dl_opt::solve_dl_maxmin(&data, &phi0, &self.dl_rate(), settings)
    }

    /// Baseline DL powers, optionally scaled down to the IPD caps on the
    /// design channels.
    pub fn baseline_dl(&self, scheme: SchemeId, limits: &ExposureLimits, respect_emf: bool) -> Result<DMatrix<f64>> {
        let p = match scheme {
            SchemeId::Upc => self.upc_dl(),
            SchemeId::Ppc => self.ppc_dl(),
            other => return Err(Error::InvalidConfig(format!("{other} is not a DL baseline"))),
        };
        if !respect_emf {
            return Ok(p);
        }
        let data = self.dl_problem(Some(&limits.ipd_caps))?;
        let phi = dl_opt::scale_to_caps(&data, data.amplitudes_of(&p));
        Ok(data.powers(&phi))
    }

    pub fn dl_sinr(&self, powers: &DMatrix<f64>, source: ChannelSource) -> Vec<f64> {
        let noise = vec![self.config.noise_power(); self.num_users()];
        metrics::dl_sinr(&self.channels, source, &self.beams, &self.association, powers, &noise)
    }

    pub fn dl_ipd(&self, powers: &DMatrix<f64>, source: ChannelSource) -> Vec<f64> {
        metrics::ipd(&self.channels, source, &self.beams, &self.association, powers, self.config.wavelength())
    }

    pub fn ul_table(&self, limits: Option<&ExposureLimits>) -> Result<ul_opt::UlGainTable> {
        ul_opt::build_gain_table(
            &self.channels,
            ChannelSource::Estimated,
            &self.beams,
            &self.association,
            &vec![self.config.noise_power(); self.config.num_aps],
            &self.ul_budgets(),
            limits,
        )
    }

    /// Max-min UL powers; with `limits = None` the SAR caps are ignored.
    pub fn solve_ul(&self, limits: Option<&ExposureLimits>, settings: &BisectionSettings) -> Result<ul_opt::UlSolution> {
        ul_opt::solve_ul_maxmin(&self.ul_table(limits)?, &self.ul_rate(), settings)
    }

    pub fn baseline_ul(
        &self,
        scheme: SchemeId,
        limits: &ExposureLimits,
        respect_emf: bool,
        fpc_exponent: f64,
    ) -> Result<Vec<f64>> {
        match scheme {
            SchemeId::Upc => Ok(baselines::upc_ul(&self.ul_budgets(), limits, respect_emf)),
            SchemeId::Fpc => baselines::fpc_ul(
                &self.association,
                &self.scenario.large_scale,
                &self.ul_budgets(),
                limits,
                fpc_exponent,
                respect_emf,
            ),
            other => Err(Error::InvalidConfig(format!("{other} is not a UL baseline"))),
        }
    }

    pub fn ul_sinr(&self, powers: &[f64], source: ChannelSource) -> Vec<f64> {
        let noise = vec![self.config.noise_power(); self.config.num_aps];
        metrics::ul_sinr(&self.channels, source, &self.beams, &self.association, powers, &noise)
    }
}

/// One scheme on one deployment and direction.
#[derive(Clone, Debug)]
pub struct SchemeOutcome {
    pub deployment: DeploymentMode,
    pub direction: Direction,
    pub scheme: SchemeId,
    /// Per-user rates on the true channels.
    pub rates: Vec<f64>,
    /// Per-user rates on the design (estimated) channels.
    pub design_rates: Vec<f64>,
    /// DL only: IPD on the true and design channels.
    pub ipd: Vec<f64>,
    pub design_ipd: Vec<f64>,
    /// UL only: largest SAR over body parts.
    pub sar: Vec<f64>,
    pub dl_powers: Option<DMatrix<f64>>,
    pub ul_powers: Vec<f64>,
    pub dl_trace: Vec<DlTraceRow>,
    pub solve_time: f64,
    pub error: Option<String>,
}

impl SchemeOutcome {
    fn empty(deployment: DeploymentMode, direction: Direction, scheme: SchemeId) -> Self {
        Self {
            deployment,
            direction,
            scheme,
            rates: Vec::new(),
            design_rates: Vec::new(),
            ipd: Vec::new(),
            design_ipd: Vec::new(),
            sar: Vec::new(),
            dl_powers: None,
            ul_powers: Vec::new(),
            dl_trace: Vec::new(),
            solve_time: 0.0,
            error: None,
        }
    }

    fn failed(deployment: DeploymentMode, direction: Direction, scheme: SchemeId, error: &Error) -> Self {
        Self { error: Some(error.to_string()), ..Self::empty(deployment, direction, scheme) }
    }

    pub fn min_rate(&self) -> f64 {
        min_or_nan(&self.rates)
    }

    pub fn design_min_rate(&self) -> f64 {
        min_or_nan(&self.design_rates)
    }
}

fn min_or_nan(v: &[f64]) -> f64 {
    if v.is_empty() { f64::NAN } else { v.iter().copied().fold(f64::INFINITY, f64::min) }
}

/// All outcomes of one drop at one sweep point.
#[derive(Clone, Debug)]
pub struct DropReport {
    pub drop: usize,
    pub seed: u64,
    pub sweep_k: usize,
    pub sweep_e: f64,
    pub outcomes: Vec<SchemeOutcome>,
}

impl DropReport {
    pub fn get(&self, deployment: DeploymentMode, direction: Direction, scheme: SchemeId) -> Option<&SchemeOutcome> {
        self.outcomes.iter().find(|o| o.deployment == deployment && o.direction == direction && o.scheme == scheme)
    }

    pub fn rows(&self) -> Vec<ResultRow> {
        let mut rows = Vec::new();
        for o in &self.outcomes {
            for user in 0..self.sweep_k {
                let ok = o.error.is_none();
                rows.push(ResultRow {
                    drop: self.drop,
                    deployment: o.deployment,
                    direction: o.direction,
                    scheme: o.scheme,
                    user,
                    rate: if ok { o.rates[user] } else { f64::NAN },
                    ipd: match (o.direction, ok) {
                        (Direction::Dl, true) => Some(o.ipd[user]),
                        (Direction::Dl, false) => Some(f64::NAN),
                        _ => None,
                    },
                    sar: match (o.direction, ok) {
                        (Direction::Ul, true) => Some(o.sar[user]),
                        (Direction::Ul, false) => Some(f64::NAN),
                        _ => None,
                    },
                    solve_time: o.solve_time,
                    sweep_k: self.sweep_k,
                    sweep_e: self.sweep_e,
                });
            }
        }
        rows
    }
}

#[derive(Clone, Debug)]
pub struct CampaignOutput {
    pub table: ResultTable,
    pub reports: Vec<DropReport>,
}

fn dl_outcome(
    ctx: &DropContext,
    spec: &CampaignSpec,
    limits: &ExposureLimits,
    deployment: DeploymentMode,
    scheme: SchemeId,
) -> Result<SchemeOutcome> {
    let start = Instant::now();
    let mut out = SchemeOutcome::empty(deployment, Direction::Dl, scheme);
    let powers = match scheme {
        SchemeId::Opc | SchemeId::Uo => {
            let caps = (scheme == SchemeId::Opc).then_some(limits);
            let sol = ctx.solve_dl(caps, &spec.dl)?;
            out.dl_trace = sol.trace;
            sol.powers
        }
        other => ctx.baseline_dl(other, limits, spec.baselines_respect_emf)?,
    };
    if spec.record_solve_time {
        out.solve_time = start.elapsed().as_secs_f64();
    }
    let rate = ctx.dl_rate();
    out.rates = ctx.dl_sinr(&powers, ChannelSource::True).into_iter().map(|g| rate.rate(g)).collect();
    out.design_rates = ctx.dl_sinr(&powers, ChannelSource::Estimated).into_iter().map(|g| rate.rate(g)).collect();
    out.ipd = ctx.dl_ipd(&powers, ChannelSource::True);
    out.design_ipd = ctx.dl_ipd(&powers, ChannelSource::Estimated);
    out.dl_powers = Some(powers);
    Ok(out)
}

fn ul_outcome(
    ctx: &DropContext,
    spec: &CampaignSpec,
    limits: &ExposureLimits,
    deployment: DeploymentMode,
    scheme: SchemeId,
) -> Result<SchemeOutcome> {
    let start = Instant::now();
    let mut out = SchemeOutcome::empty(deployment, Direction::Ul, scheme);
    let q = match scheme {
        SchemeId::Opc => ctx.solve_ul(Some(limits), &spec.ul_bisection)?.powers,
        SchemeId::Uo => ctx.solve_ul(None, &spec.ul_bisection)?.powers,
        other => ctx.baseline_ul(other, limits, spec.baselines_respect_emf, spec.fpc_exponent)?,
    };
    if spec.record_solve_time {
        out.solve_time = start.elapsed().as_secs_f64();
    }
    let rate = ctx.ul_rate();
    out.rates = ctx.ul_sinr(&q, ChannelSource::True).into_iter().map(|g| rate.rate(g)).collect();
    out.design_rates = ctx.ul_sinr(&q, ChannelSource::Estimated).into_iter().map(|g| rate.rate(g)).collect();
    out.sar = q.iter().enumerate().map(|(k, &v)| limits.max_sar(k, v)).collect();
    out.ul_powers = q;
    Ok(out)
}

fn with_sar_cap(limits: &ExposureLimits, cap: f64) -> ExposureLimits {
    let mut l = limits.clone();
    l.sar_caps.fill(cap);
    l
}

/// Runs drop `drop` at user-count sweep index `k_index` for every SAR-cap
/// sweep point. DL outcomes do not depend on the SAR cap and are computed once.
pub fn run_drop(spec: &CampaignSpec, k_index: usize, drop: usize) -> Vec<DropReport> {
    let k = spec.user_counts()[k_index];
    let seed = drop_seed(spec.master_seed, drop, k_index);
    let base = spec.base.with_num_users(k);
    let limits = spec.limits.resized(k);
    let caps = spec.sar_caps();
    let mut reports: Vec<DropReport> = caps
        .iter()
        .map(|&e| DropReport { drop, seed, sweep_k: k, sweep_e: e, outcomes: Vec::new() })
        .collect();

    for &deployment in &spec.deployments {
        let config = match deployment {
            DeploymentMode::CellFree => base.clone(),
            DeploymentMode::MultiCell => scenario::to_multicell(&base),
        };
        let ctx = DropContext::new(&config, seed, spec.csi, spec.pairing);
        for &direction in &spec.directions {
            let schemes: Vec<SchemeId> = spec.schemes.iter().copied().filter(|s| s.applies_to(direction)).collect();
            for scheme in schemes {
                match direction {
                    Direction::Dl => {
                        let o = match &ctx {
                            Ok(c) => dl_outcome(c, spec, &limits, deployment, scheme),
                            Err(e) => Err(Error::InvalidConfig(e.to_string())),
                        }
                        .unwrap_or_else(|e| {
                            log::warn!("drop {drop} {deployment} dl {scheme}: {e}");
                            SchemeOutcome::failed(deployment, direction, scheme, &e)
                        });
                        for r in reports.iter_mut() {
                            r.outcomes.push(o.clone());
                        }
                    }
                    Direction::Ul => {
                        // the SAR cap only changes OPC; reuse the rest across caps
                        let mut shared: Option<SchemeOutcome> = None;
                        for (r, &cap) in reports.iter_mut().zip(&caps) {
                            let lim = with_sar_cap(&limits, cap);
                            let reuse = scheme != SchemeId::Opc && !spec.baselines_respect_emf;
                            let o = match (&shared, reuse) {
                                (Some(o), true) => o.clone(),
                                _ => match &ctx {
                                    Ok(c) => ul_outcome(c, spec, &lim, deployment, scheme),
                                    Err(e) => Err(Error::InvalidConfig(e.to_string())),
                                }
                                .unwrap_or_else(|e| {
                                    log::warn!("drop {drop} {deployment} ul {scheme}: {e}");
                                    SchemeOutcome::failed(deployment, direction, scheme, &e)
                                }),
                            };
                            // SAR values follow the cap's coefficients, which are shared
                            shared = Some(o.clone());
                            r.outcomes.push(o);
                        }
                    }
                }
            }
        }
    }
    reports
}

/// Runs every sweep point and drop on the current rayon pool. Results are
/// assembled in a fixed order, so the table does not depend on scheduling.
pub fn run_campaign(spec: &CampaignSpec) -> Result<CampaignOutput> {
    spec.validate()?;
    let jobs: Vec<(usize, usize)> =
        (0..spec.user_counts().len()).flat_map(|ki| (0..spec.num_drops).map(move |d| (ki, d))).collect();
    let per_job: Vec<Vec<DropReport>> = jobs.par_iter().map(|&(ki, d)| run_drop(spec, ki, d)).collect();
    // order: user count, SAR cap, drop
    let n_caps = spec.sar_caps().len();
    let mut reports = Vec::with_capacity(per_job.len() * n_caps);
    for ki in 0..spec.user_counts().len() {
        for ei in 0..n_caps {
            for d in 0..spec.num_drops {
                reports.push(per_job[ki * spec.num_drops + d][ei].clone());
            }
        }
    }
    let rows = reports.iter().flat_map(DropReport::rows).collect();
    Ok(CampaignOutput { table: ResultTable { rows }, reports })
}

pub const SUMMARY_HEADER: &str = "sweep_k,sweep_e,deployment,direction,scheme,drops,failures,mean_min_rate_bps,mean_rate_bps";

/// Per sweep point and scheme: mean over drops of the min-rate and of the
/// user-average rate, on the true channels. Failed drops are counted, not
/// averaged.
pub fn summary_csv(reports: &[DropReport]) -> String {
    use std::fmt::Write as _;
    type Key = (usize, u64, DeploymentMode, Direction, SchemeId);
    let mut acc: Vec<(Key, usize, usize, f64, f64)> = Vec::new();
    for r in reports {
        for o in &r.outcomes {
            let key = (r.sweep_k, r.sweep_e.to_bits(), o.deployment, o.direction, o.scheme);
            let pos = match acc.iter().position(|a| a.0 == key) {
                Some(p) => p,
                None => {
                    acc.push((key, 0, 0, 0.0, 0.0));
                    acc.len() - 1
                }
            };
            let a = &mut acc[pos];
            if o.error.is_some() || o.rates.is_empty() {
                a.2 += 1;
            } else {
                a.1 += 1;
                a.3 += o.min_rate();
                a.4 += o.rates.iter().sum::<f64>() / o.rates.len() as f64;
            }
        }
    }
    let mut out = format!("{SUMMARY_HEADER}\n");
    for ((k, e, dep, dir, scheme), n, fails, min_sum, mean_sum) in acc {
        let d = n.max(1) as f64;
        let (m1, m2) = if n == 0 { (f64::NAN, f64::NAN) } else { (min_sum / d, mean_sum / d) };
        let _ = writeln!(out, "{k},{},{dep},{dir},{scheme},{n},{fails},{m1},{m2}", f64::from_bits(e));
    }
    out
}
