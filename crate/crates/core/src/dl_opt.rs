//! DL max-min power control under per-AP budgets and IPD caps.
//!
//! Variables are the amplitudes `φ = sqrt(p)` on active links only. The
//! SINR constraint is a difference of convex quadratics; the desired term
//! `f_k(φ) = |g_kᵀ φ_k|²` is replaced by its tangent minorant at the previous
//! iterate, so every subproblem is a convex QCQP. Each outer iteration finds
//! the largest SINR target feasible under the current linearization.

use nalgebra::{DMatrix, DVector};

use crate::channel::{ChannelSet, ChannelSource};
use crate::convex::{
    bisection, qcqp_feasibility_with, BarrierSettings, BisectionSettings, FeasibilityResult, FeasibilityStatus,
    Probe, QuadraticConstraint,
};
use crate::metrics::{ipd_scale, BeamformerSet, RateParams};
use crate::{Error, Result, C64};

/// Precomputed DL problem on active links.
#[derive(Clone, Debug)]
pub struct DlProblemData {
    pub num_users: usize,
    pub num_aps: usize,
    /// `(user, ap)` of each variable.
    pub links: Vec<(usize, usize)>,
    /// Variable indices of each user's links, in AP order.
    pub user_links: Vec<Vec<usize>>,
    /// Variable indices served by each AP.
    pub ap_links: Vec<Vec<usize>>,
    /// `gains[k][j][l] = h_{k,m}^H b_{j,m}` for the l-th link `(j, m)` of user j.
    pub gains: Vec<Vec<Vec<C64>>>,
    pub budgets: Vec<f64>,
    /// `f64::INFINITY` disables the cap.
    pub ipd_caps: Vec<f64>,
    pub noise: Vec<f64>,
    pub ipd_scale: f64,
    interference_gram: Vec<DMatrix<f64>>,
    desired_gram: Vec<DMatrix<f64>>,
}

impl DlProblemData {
    /// Builds the problem from explicit gains; `association` selects the links.
    pub fn new(
        association: &DMatrix<u8>,
        gains: Vec<Vec<Vec<C64>>>,
        budgets: Vec<f64>,
        ipd_caps: Vec<f64>,
        noise: Vec<f64>,
        ipd_scale: f64,
    ) -> Result<Self> {
        let (k, m) = association.shape();
        let mut links = Vec::new();
        let mut user_links = vec![Vec::new(); k];
        let mut ap_links = vec![Vec::new(); m];
        for user in 0..k {
            for ap in 0..m {
                if association[(user, ap)] == 1 {
                    user_links[user].push(links.len());
                    ap_links[ap].push(links.len());
                    links.push((user, ap));
                }
            }
        }
        if gains.len() != k
            || gains.iter().any(|row| row.len() != k || row.iter().zip(&user_links).any(|(g, l)| g.len() != l.len()))
        {
            return Err(Error::Shape("DL gains do not match the association".into()));
        }
        if budgets.len() != m || ipd_caps.len() != k || noise.len() != k {
            return Err(Error::Shape("DL budgets, caps or noise have the wrong length".into()));
        }
        if budgets.iter().any(|&p| !(p >= 0.0)) || noise.iter().any(|&s| !(s > 0.0)) || ipd_caps.iter().any(|&c| !(c > 0.0))
        {
            return Err(Error::InvalidConfig("DL budgets must be non-negative, noise and IPD caps positive".into()));
        }
        let n = links.len();
        let mut interference_gram = Vec::with_capacity(k);
        let mut desired_gram = Vec::with_capacity(k);
        for user in 0..k {
            let mut inter = DMatrix::zeros(n, n);
            let mut desired = DMatrix::zeros(n, n);
            for j in 0..k {
                let target = if j == user { &mut desired } else { &mut inter };
                add_gram(target, &user_links[j], &gains[user][j]);
            }
            interference_gram.push(inter);
            desired_gram.push(desired);
        }
        Ok(Self {
            num_users: k,
            num_aps: m,
            links,
            user_links,
            ap_links,
            gains,
            budgets,
            ipd_caps,
            noise,
            ipd_scale,
            interference_gram,
            desired_gram,
        })
    }

    pub fn num_vars(&self) -> usize {
        self.links.len()
    }

    /// `Σ_{j≠k} |A_kj|²` is `φᵀ G φ` with this PSD matrix.
    pub fn interference_gram(&self, user: usize) -> &DMatrix<f64> {
        &self.interference_gram[user]
    }

    /// `|A_kk|² = φᵀ G φ`.
    pub fn desired_gram(&self, user: usize) -> &DMatrix<f64> {
        &self.desired_gram[user]
    }

    /// Effective amplitude `A_kj = Σ_l gains[k][j][l] φ_l`.
    pub fn amplitude(&self, user: usize, j: usize, phi: &DVector<f64>) -> C64 {
        self.user_links[j].iter().zip(&self.gains[user][j]).map(|(&i, g)| g * phi[i]).sum()
    }

    pub fn sinr(&self, phi: &DVector<f64>) -> Vec<f64> {
        (0..self.num_users)
            .map(|k| {
                let desired = self.amplitude(k, k, phi).norm_sqr();
                let inter: f64 = (0..self.num_users).filter(|&j| j != k).map(|j| self.amplitude(k, j, phi).norm_sqr()).sum();
                desired / (inter + self.noise[k])
            })
            .collect()
    }

    pub fn ipd(&self, phi: &DVector<f64>) -> Vec<f64> {
        (0..self.num_users)
            .map(|k| self.ipd_scale * (0..self.num_users).map(|j| self.amplitude(k, j, phi).norm_sqr()).sum::<f64>())
            .collect()
    }

    pub fn ap_power(&self, phi: &DVector<f64>) -> Vec<f64> {
        self.ap_links.iter().map(|l| l.iter().map(|&i| phi[i] * phi[i]).sum()).collect()
    }

    /// `p = φ²` as a K x M matrix.
    pub fn powers(&self, phi: &DVector<f64>) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(self.num_users, self.num_aps);
        for (i, &(k, m)) in self.links.iter().enumerate() {
            p[(k, m)] = phi[i] * phi[i];
        }
        p
    }

    /// Amplitudes of a K x M power matrix (inactive entries ignored).
    pub fn amplitudes_of(&self, powers: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(self.num_vars(), self.links.iter().map(|&(k, m)| powers[(k, m)].max(0.0).sqrt()))
    }

    /// Interference-free bound on the common SINR target.
    pub fn gamma_upper_bound(&self) -> f64 {
        (0..self.num_users)
            .map(|k| {
                let coherent: f64 = self.user_links[k]
                    .iter()
                    .zip(&self.gains[k][k])
                    .map(|(&i, g)| g.norm() * self.budgets[self.links[i].1].sqrt())
                    .sum();
                let budget = coherent * coherent / self.noise[k];
                let exposure = self.ipd_caps[k] / (self.ipd_scale * self.noise[k]);
                budget.min(exposure)
            })
            .fold(f64::INFINITY, f64::min)
    }
}

fn add_gram(target: &mut DMatrix<f64>, idx: &[usize], g: &[C64]) {
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            target[(i, j)] += (g[a].conj() * g[b]).re;
        }
    }
}

/// Design problem from `source` channels and beams.
#[allow(clippy::too_many_arguments)]
pub fn build_dl_problem(
    channels: &ChannelSet,
    source: ChannelSource,
    beams: &BeamformerSet,
    association: &DMatrix<u8>,
    budgets: &[f64],
    ipd_caps: &[f64],
    noise: &[f64],
    wavelength: f64,
) -> Result<DlProblemData> {
    let (k, m) = association.shape();
    let gains = (0..k)
        .map(|user| {
            (0..k)
                .map(|j| {
                    (0..m)
                        .filter(|&ap| association[(j, ap)] == 1)
                        .map(|ap| channels.channel(source, user, ap).dotc(beams.beam(j, ap)))
                        .collect()
                })
                .collect()
        })
        .collect();
    DlProblemData::new(association, gains, budgets.to_vec(), ipd_caps.to_vec(), noise.to_vec(), ipd_scale(wavelength))
}

/// `f(φ_prev) = |gᵀφ_prev|²` and its gradient `2 Re(g g^H) φ_prev`, over the
/// user's own links.
pub fn linearize_desired(phi_prev: &[f64], g: &[C64]) -> (f64, Vec<f64>) {
    let s: C64 = g.iter().zip(phi_prev).map(|(g, &p)| g * p).sum();
    // ∂|s|²/∂φ_l = 2 Re(conj(g_l) s)
    let grad = g.iter().map(|g| 2.0 * (g.conj() * s).re).collect();
    (s.norm_sqr(), grad)
}

/// Tangent minorant `f(φ_prev) + ∇ᵀ(φ - φ_prev)`.
pub fn minorant(phi_prev: &[f64], g: &[C64], phi: &[f64]) -> f64 {
    let (value, grad) = linearize_desired(phi_prev, g);
    value + grad.iter().zip(phi).zip(phi_prev).map(|((d, x), p)| d * (x - p)).sum::<f64>()
}

/// Constraints for target `gamma` linearized at `phi_prev`, each scaled to a
/// unit right-hand side where possible.
pub fn sco_constraints(data: &DlProblemData, phi_prev: &DVector<f64>, gamma: f64) -> Result<Vec<QuadraticConstraint>> {
    let n = data.num_vars();
    let all: Vec<usize> = (0..n).collect();
    let mut cons = Vec::with_capacity(n + data.num_aps + 2 * data.num_users);
    for i in 0..n {
        cons.push(QuadraticConstraint::linear(n, vec![i], DVector::from_element(1, -1.0), 0.0, 0.0)?);
    }
    for (ap, idx) in data.ap_links.iter().enumerate() {
        if idx.is_empty() {
            continue;
        }
        let p = data.budgets[ap];
        if p == 0.0 {
            // zero budget: every served amplitude must vanish
            for &i in idx {
                cons.push(QuadraticConstraint::linear(n, vec![i], DVector::from_element(1, 1.0), 0.0, 0.0)?);
            }
            continue;
        }
        let s = idx.len();
        let quad = DMatrix::from_diagonal_element(s, s, 1.0 / p);
        cons.push(QuadraticConstraint::new(n, idx.clone(), quad, DVector::zeros(s), 0.0, 1.0)?);
    }
    for k in 0..data.num_users {
        if data.ipd_caps[k].is_finite() {
            let q = (data.interference_gram(k) + data.desired_gram(k)) * (data.ipd_scale / data.ipd_caps[k]);
            cons.push(QuadraticConstraint::new(n, all.clone(), q, DVector::zeros(n), 0.0, 1.0)?);
        }
    }
    for k in 0..data.num_users {
        let sigma = data.noise[k];
        let own = &data.user_links[k];
        let prev: Vec<f64> = own.iter().map(|&i| phi_prev[i]).collect();
        let (value, grad) = linearize_desired(&prev, &data.gains[k][k]);
        let mut lin = DVector::zeros(n);
        for (&i, d) in own.iter().zip(&grad) {
            lin[i] = -d / sigma;
        }
        let quad = data.interference_gram(k) * (gamma / sigma);
        cons.push(QuadraticConstraint::new(n, all.clone(), quad, lin, value / sigma, -gamma)?);
    }
    Ok(cons)
}

/// One SCO feasibility problem, warm-started at `start`.
pub fn sco_subproblem(
    data: &DlProblemData,
    phi_prev: &DVector<f64>,
    gamma: f64,
    start: &DVector<f64>,
    barrier: &BarrierSettings,
) -> Result<FeasibilityResult> {
    let cons = sco_constraints(data, phi_prev, gamma)?;
    qcqp_feasibility_with(&cons, start, barrier)
}

/// How bisection and SCO are nested.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LoopNesting {
    /// Each SCO iteration maximizes the target under a fixed linearization.
    #[default]
    BisectionPerIteration,
    /// One bisection over the target; each probe refines the linearization.
    SuccessivePerProbe,
}

#[derive(Clone, Copy, Debug)]
pub struct DlSettings {
    pub tol_sco: f64,
    pub max_outer: usize,
    pub bisection: BisectionSettings,
    pub barrier: BarrierSettings,
    pub nesting: LoopNesting,
}

impl Default for DlSettings {
    fn default() -> Self {
        Self {
            tol_sco: 1e-3,
            max_outer: 50,
            bisection: BisectionSettings::default(),
            barrier: BarrierSettings::default(),
            nesting: LoopNesting::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DlTraceRow {
    pub outer_iter: usize,
    pub gamma: f64,
    pub phase1_margin: f64,
    pub newton_iters: usize,
}

impl std::fmt::Display for DlTraceRow {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "sco {} gamma {:.9e} margin {:.3e} newton {}", self.outer_iter, self.gamma, self.phase1_margin, self.newton_iters)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DlStatus {
    Converged,
    MaxOuter,
    /// A subproblem failed numerically; the best feasible iterate is returned.
    NumericalWarning,
}

#[derive(Clone, Debug)]
pub struct DlSolution {
    pub powers: DMatrix<f64>,
    pub amplitudes: DVector<f64>,
    /// Largest common SINR target certified on the design problem.
    pub gamma: f64,
    /// Design SINRs at the returned powers.
    pub sinr: Vec<f64>,
    pub min_rate: f64,
    pub trace: Vec<DlTraceRow>,
    pub status: DlStatus,
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Whether `phi` meets the non-linearized constraints with target `gamma`.
fn meets_all(data: &DlProblemData, phi: &DVector<f64>, gamma: f64) -> bool {
    phi.iter().all(|&v| v >= 0.0)
        && data.ap_power(phi).iter().zip(&data.budgets).all(|(p, b)| *p <= *b)
        && data.ipd(phi).iter().zip(&data.ipd_caps).all(|(x, c)| *x <= *c)
        && min_of(&data.sinr(phi)) >= gamma
}

/// Starting point: the better of two given power matrices after scaling each
/// down to the IPD caps. Both are assumed to meet the budgets.
pub fn initial_point(data: &DlProblemData, candidates: &[DMatrix<f64>]) -> DVector<f64> {
    let mut best = DVector::zeros(data.num_vars());
    let mut best_gamma = -1.0;
    for p in candidates {
        let phi = scale_to_caps(data, data.amplitudes_of(p));
        let g = min_of(&data.sinr(&phi));
        if g > best_gamma {
            best_gamma = g;
            best = phi;
        }
    }
    best
}

/// Largest uniform scaling `<= 1` that keeps every IPD and budget satisfied.
pub fn scale_to_caps(data: &DlProblemData, phi: DVector<f64>) -> DVector<f64> {
    let ipd = data.ipd(&phi);
    let power = data.ap_power(&phi);
    let mut factor = 1.0f64;
    for (x, c) in ipd.iter().zip(&data.ipd_caps) {
        if *x > *c {
            factor = factor.min((c / x).sqrt());
        }
    }
    for (p, b) in power.iter().zip(&data.budgets) {
        if *p > *b {
            factor = factor.min((b / p).sqrt());
        }
    }
    let mut phi = phi * factor;
    // guard against rounding just above a cap
    while !meets_all(data, &phi, f64::NEG_INFINITY) {
        phi *= 1.0 - 1e-12;
    }
    phi
}

struct Prober<'a> {
    data: &'a DlProblemData,
    barrier: &'a BarrierSettings,
    newton: usize,
    failures: usize,
    last_margin: f64,
}

impl Prober<'_> {
    // strictly feasible for the convex subproblem and the original constraints
    fn probe(&mut self, phi_prev: &DVector<f64>, gamma: f64, start: &DVector<f64>) -> Probe<DVector<f64>> {
        match sco_subproblem(self.data, phi_prev, gamma, start, self.barrier) {
            Ok(r) => {
                self.newton += r.newton_iters;
                self.last_margin = r.margin;
                match r.status {
                    FeasibilityStatus::Feasible if r.margin <= 0.0 && meets_all(self.data, &r.point, gamma) => {
                        Probe::Feasible(r.point)
                    }
                    FeasibilityStatus::NumericalFailure => {
                        self.failures += 1;
                        Probe::Failed
                    }
                    _ => Probe::Infeasible,
                }
            }
            Err(e) => {
                log::warn!("DL subproblem assembly failed: {e}");
                self.failures += 1;
                Probe::Failed
            }
        }
    }
}

/// Max-min DL powers from the initial amplitudes `phi0` (must meet C1-C3).
pub fn solve_dl_maxmin(
    data: &DlProblemData,
    phi0: &DVector<f64>,
    rate: &RateParams,
    settings: &DlSettings,
) -> Result<DlSolution> {
    if phi0.len() != data.num_vars() {
        return Err(Error::Shape(format!("initial point has {} entries, problem has {}", phi0.len(), data.num_vars())));
    }
    if !meets_all(data, phi0, f64::NEG_INFINITY) {
        return Err(Error::InvalidConfig("initial DL point violates budgets or IPD caps".into()));
    }
    let upper = data.gamma_upper_bound();
    let mut phi = phi0.clone();
    let mut gamma = min_of(&data.sinr(&phi)).max(0.0).min(upper);
    let mut trace = vec![DlTraceRow { outer_iter: 0, gamma, phase1_margin: f64::NAN, newton_iters: 0 }];
    let mut prober = Prober { data, barrier: &settings.barrier, newton: 0, failures: 0, last_margin: f64::NAN };
    let mut status = DlStatus::MaxOuter;

    if upper > 0.0 && data.num_vars() > 0 {
        match settings.nesting {
            LoopNesting::BisectionPerIteration => {
                for iter in 1..=settings.max_outer {
                    let phi_prev = phi.clone();
                    let mut start = phi_prev.clone();
                    let before = prober.newton;
                    let out = bisection(gamma, upper, &settings.bisection, Some(phi_prev.clone()), |g| {
                        let r = prober.probe(&phi_prev, g, &start);
                        if let Probe::Feasible(w) = &r {
                            start = w.clone();
                        }
                        r
                    });
                    let new_gamma = out.value;
                    if let Some(w) = out.witness {
                        phi = w;
                    }
                    trace.push(DlTraceRow {
                        outer_iter: iter,
                        gamma: new_gamma,
                        phase1_margin: prober.last_margin,
                        newton_iters: prober.newton - before,
                    });
                    log::debug!("{}", trace.last().expect("just pushed"));
                    let step = new_gamma - gamma;
                    gamma = new_gamma;
                    if prober.failures > 0 {
                        status = DlStatus::NumericalWarning;
                    }
                    if step < settings.tol_sco * (1.0 + gamma) {
                        if status != DlStatus::NumericalWarning {
                            status = DlStatus::Converged;
                        }
                        break;
                    }
                }
            }
            LoopNesting::SuccessivePerProbe => {
                let mut best = phi.clone();
                let lo = gamma;
                let out = bisection(lo, upper, &settings.bisection, Some(phi.clone()), |g| {
                    let mut current = best.clone();
                    for _ in 0..settings.max_outer {
                        match prober.probe(&current, g, &current) {
                            Probe::Feasible(w) => {
                                best = w.clone();
                                return Probe::Feasible(w);
                            }
                            Probe::Failed => return Probe::Failed,
                            Probe::Infeasible => {
                                // re-linearize at a scaled-up copy when that improves the min SINR
                                let next = scale_to_caps(data, &current * 1.05);
                                if min_of(&data.sinr(&next)) <= min_of(&data.sinr(&current)) * (1.0 + 1e-9) {
                                    return Probe::Infeasible;
                                }
                                current = next;
                            }
                        }
                    }
                    Probe::Infeasible
                });
                gamma = out.value;
                if let Some(w) = out.witness {
                    phi = w;
                }
                trace.push(DlTraceRow { outer_iter: 1, gamma, phase1_margin: prober.last_margin, newton_iters: prober.newton });
                status = if prober.failures > 0 { DlStatus::NumericalWarning } else { DlStatus::Converged };
            }
        }
    } else {
        status = DlStatus::Converged;
    }
    if status == DlStatus::NumericalWarning {
        log::warn!("DL solve hit {} numerical failures; returning best feasible iterate", prober.failures);
    }
    let sinr = data.sinr(&phi);
    let min_sinr = min_of(&sinr).max(0.0);
    Ok(DlSolution {
        powers: data.powers(&phi),
        amplitudes: phi,
        gamma,
        min_rate: rate.rate(if sinr.is_empty() { 0.0 } else { min_sinr }),
        sinr,
        trace,
        status,
    })
}
