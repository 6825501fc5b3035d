//! UL max-min power control under per-user budgets and SAR caps.
//!
//! For a fixed SINR target the constraints form a standard interference
//! function, so feasibility is decided exactly by the monotone fixed-point
//! iteration `q <- min(q_max, γ (G q + N) / G_kk)` started from zero. The
//! max-min target is then found by bisection.

use nalgebra::{DMatrix, DVector};

use crate::channel::{ChannelSet, ChannelSource};
use crate::convex::{bisection, BisectionSettings, FeasibilityResult, FeasibilityStatus, Probe};
use crate::metrics::{ul_amplitudes, ul_noise, BeamformerSet, RateParams};
use crate::scenario::ExposureLimits;
use crate::{Error, Result};

pub const MAX_FIXED_POINT_ITERS: usize = 100_000;
pub const FIXED_POINT_REL_CHANGE: f64 = 1e-12;
pub const TARGET_SLACK: f64 = 1e-9;

/// Precomputed UL gains for one drop.
#[derive(Clone, Debug, PartialEq)]
pub struct UlGainTable {
    /// `G_kk = |Σ_m a_{k,m} f_{k,m}^H h_{k,m}|²`
    pub desired: Vec<f64>,
    /// `G_kj` for `j != k`, zero diagonal
    pub cross: DMatrix<f64>,
    /// `Σ_m a_{k,m} η_m² ‖f_{k,m}‖²`
    pub noise: Vec<f64>,
    /// `min(Q_k, min_n E_{k,n} / b_{k,n})`
    pub caps: Vec<f64>,
}

impl UlGainTable {
    pub fn num_users(&self) -> usize {
        self.desired.len()
    }

    pub fn sinr(&self, q: &[f64]) -> Vec<f64> {
        let k = self.num_users();
        (0..k)
            .map(|u| {
                let interference: f64 = (0..k).filter(|&j| j != u).map(|j| self.cross[(u, j)] * q[j]).sum();
                q[u] * self.desired[u] / (interference + self.noise[u])
            })
            .collect()
    }

    /// Interference-free SINR at the cap, an upper bound on each user's SINR.
    pub fn snr_at_cap(&self, user: usize) -> f64 {
        self.caps[user] * self.desired[user] / self.noise[user]
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.num_users();
        if self.cross.shape() != (k, k) || self.noise.len() != k || self.caps.len() != k {
            return Err(Error::Shape(format!("UL gain table for {k} users has inconsistent sizes")));
        }
        for u in 0..k {
            if !(self.desired[u] > 0.0) {
                return Err(Error::DegenerateUser(u));
            }
            if !(self.noise[u] > 0.0) || !(self.caps[u] >= 0.0) {
                return Err(Error::InvalidConfig(format!("UL noise and caps of user {u} must be positive")));
            }
        }
        if self.cross.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::InvalidConfig("UL cross gains must be non-negative".into()));
        }
        Ok(())
    }
}

/// Gains from `source` channels with filters `filters`. With `limits = None`
/// the SAR caps are ignored and `q_max = Q_k`.
pub fn build_gain_table(
    channels: &ChannelSet,
    source: ChannelSource,
    filters: &BeamformerSet,
    association: &DMatrix<u8>,
    ap_noise: &[f64],
    budgets: &[f64],
    limits: Option<&ExposureLimits>,
) -> Result<UlGainTable> {
    let k = channels.num_users;
    let amp = ul_amplitudes(channels, source, filters, association);
    let desired: Vec<f64> = (0..k).map(|u| amp[(u, u)].norm_sqr()).collect();
    let cross = DMatrix::from_fn(k, k, |u, j| if u == j { 0.0 } else { amp[(u, j)].norm_sqr() });
    let noise = ul_noise(filters, association, ap_noise);
    let caps = (0..k)
        .map(|u| match limits {
            Some(l) => budgets[u].min(l.sar_power_cap(u)),
            None => budgets[u],
        })
        .collect();
    let table = UlGainTable { desired, cross, noise, caps };
    table.validate()?;
    Ok(table)
}

/// Exact feasibility of a common SINR target. `point` is the least fixed
/// point (powers), `margin` the largest relative shortfall `(γ - ρ_k) / γ`.
pub fn ul_feasible(target: f64, table: &UlGainTable) -> FeasibilityResult {
    let k = table.num_users();
    let mut q = vec![0.0; k];
    let mut iters = 0;
    let mut converged = target == 0.0;
    while !converged && iters < MAX_FIXED_POINT_ITERS {
        iters += 1;
        let mut change = 0.0f64;
        let mut scale = 0.0f64;
        let next: Vec<f64> = (0..k)
            .map(|u| {
                let interference: f64 = (0..k).map(|j| table.cross[(u, j)] * q[j]).sum();
                let v = (target * (interference + table.noise[u]) / table.desired[u]).min(table.caps[u]);
                debug_assert!(v >= q[u] * (1.0 - 1e-12), "fixed-point iterate decreased");
                v
            })
            .collect();
        for u in 0..k {
            change = change.max((next[u] - q[u]).abs());
            scale = scale.max(next[u].abs());
        }
        q = next;
        converged = change <= FIXED_POINT_REL_CHANGE * scale;
    }
    let sinr = table.sinr(&q);
    let margin = if target > 0.0 {
        sinr.iter().map(|&r| (target - r) / target).fold(f64::NEG_INFINITY, f64::max)
    } else {
        f64::NEG_INFINITY
    };
    let status = if !converged {
        FeasibilityStatus::NumericalFailure
    } else if margin <= TARGET_SLACK {
        FeasibilityStatus::Feasible
    } else {
        FeasibilityStatus::Infeasible
    };
    FeasibilityResult {
        status,
        point: DVector::from_vec(q),
        margin: if k == 0 { 0.0 } else { margin },
        objective_trace: Vec::new(),
        newton_iters: iters,
    }
}

#[derive(Clone, Debug)]
pub struct UlSolution {
    pub powers: Vec<f64>,
    /// Largest common SINR target certified feasible.
    pub gamma: f64,
    /// Design SINRs at `powers`.
    pub sinr: Vec<f64>,
    pub min_rate: f64,
    pub bisection_iters: usize,
    pub failures: usize,
}

/// Max-min UL powers. The bisection witness is finally scaled up until the
/// first user reaches its cap, which raises every SINR.
pub fn solve_ul_maxmin(table: &UlGainTable, rate: &RateParams, settings: &BisectionSettings) -> Result<UlSolution> {
    table.validate()?;
    let k = table.num_users();
    let upper = (0..k).map(|u| table.snr_at_cap(u)).fold(f64::INFINITY, f64::min);
    let out = bisection(0.0, upper, settings, Some(DVector::zeros(k)), |g| {
        let r = ul_feasible(g, table);
        match r.status {
            FeasibilityStatus::Feasible => Probe::Feasible(r.point),
            FeasibilityStatus::Infeasible => Probe::Infeasible,
            FeasibilityStatus::NumericalFailure => Probe::Failed,
        }
    });
    if out.failures > 0 {
        log::warn!("UL fixed point failed to converge on {} bisection probes", out.failures);
    }
    let mut q: Vec<f64> = out.witness.map(|w| w.iter().copied().collect()).unwrap_or_else(|| vec![0.0; k]);
    power_up(&mut q, &table.caps);
    let sinr = table.sinr(&q);
    let min_sinr = sinr.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(UlSolution {
        powers: q,
        gamma: out.value,
        min_rate: rate.rate(min_sinr.max(0.0)),
        sinr,
        bisection_iters: out.iterations,
        failures: out.failures,
    })
}

fn power_up(q: &mut [f64], caps: &[f64]) {
    let Some((arg, scale)) = q
        .iter()
        .zip(caps)
        .enumerate()
        .filter(|(_, (&v, _))| v > 0.0)
        .map(|(u, (&v, &c))| (u, c / v))
        .min_by(|a, b| a.1.total_cmp(&b.1))
    else {
        return;
    };
    if scale <= 1.0 {
        return;
    }
    for (v, &c) in q.iter_mut().zip(caps) {
        let up = *v * scale;
        *v = if up >= c * (1.0 - 1e-12) { c } else { up };
    }
    q[arg] = caps[arg];
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::complex_gaussian;
    use crate::metrics::conjugate_beamformers;
    use crate::CVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const RATE: RateParams = RateParams { prelog_symbols: 95, coherence_block: 200, bandwidth: 20e6 };

    fn table(desired: Vec<f64>, cross: DMatrix<f64>, noise: Vec<f64>, caps: Vec<f64>) -> UlGainTable {
        UlGainTable { desired, cross, noise, caps }
    }

    fn symmetric(g: f64, c: f64, n: f64, cap: f64) -> UlGainTable {
        table(vec![g, g], DMatrix::from_row_slice(2, 2, &[0.0, c, c, 0.0]), vec![n, n], vec![cap, cap])
    }

    fn random_table(k: usize, rng: &mut ChaCha8Rng) -> UlGainTable {
        let desired = (0..k).map(|_| rng.random_range(0.2..2.0)).collect();
        let cross = DMatrix::from_fn(k, k, |u, j| if u == j { 0.0 } else { rng.random_range(0.0..0.5) });
        let noise = (0..k).map(|_| rng.random_range(0.005..0.05)).collect();
        let caps = vec![rng.random_range(0.05..0.2); k];
        table(desired, cross, noise, caps)
    }

    #[test]
    fn caps_from_limits() {
        let h = vec![CVector::from_element(2, crate::C64::new(1.0, 0.5))];
        let set = ChannelSet::with_perfect_csi(1, 1, h).unwrap();
        let assoc = DMatrix::from_element(1, 1, 1u8);
        let f = conjugate_beamformers(&set, ChannelSource::True, &assoc).unwrap();
        let lim = ExposureLimits::standard(1);
        let t = build_gain_table(&set, ChannelSource::True, &f, &assoc, &[0.1], &[0.1], Some(&lim)).unwrap();
        assert!((t.caps[0] - 0.01).abs() < 1e-15);
        assert_eq!(t.cross[(0, 0)], 0.0);
        let t = build_gain_table(&set, ChannelSource::True, &f, &assoc, &[0.1], &[0.1], None).unwrap();
        assert_eq!(t.caps[0], 0.1);
        assert!((t.desired[0] - 2.5).abs() < 1e-12);
        assert!((t.noise[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn zero_gain_user_is_degenerate() {
        let t = table(vec![1.0, 0.0], DMatrix::zeros(2, 2), vec![1.0, 1.0], vec![1.0, 1.0]);
        assert!(matches!(t.validate(), Err(Error::DegenerateUser(1))));
    }

    #[test]
    fn single_user_closed_form() {
        let t = table(vec![2.0], DMatrix::zeros(1, 1), vec![0.5], vec![0.1]);
        let r = ul_feasible(0.3, &t);
        assert_eq!(r.status, FeasibilityStatus::Feasible);
        assert!((r.point[0] - 0.3 * 0.5 / 2.0).abs() < 1e-15);
        assert_eq!(ul_feasible(0.41, &t).status, FeasibilityStatus::Infeasible);
        let z = ul_feasible(0.0, &t);
        assert_eq!(z.status, FeasibilityStatus::Feasible);
        assert_eq!(z.point[0], 0.0);
        let s = solve_ul_maxmin(&t, &RATE, &BisectionSettings::default()).unwrap();
        assert_eq!(s.powers[0], 0.1);
        assert!((s.min_rate - RATE.rate(0.1 * 2.0 / 0.5)).abs() < 1e-9 * s.min_rate);
    }

    #[test]
    fn symmetric_pair_fixed_point() {
        let (g, c, n, cap) = (1.0, 0.2, 0.01, 0.1);
        let t = symmetric(g, c, n, cap);
        let gamma = 2.0;
        let r = ul_feasible(gamma, &t);
        assert_eq!(r.status, FeasibilityStatus::Feasible);
        let expected = gamma * n / (g - gamma * c);
        for u in 0..2 {
            assert!((r.point[u] - expected).abs() < 1e-10 * expected);
        }
        // above g / c no power vector works
        assert_ne!(ul_feasible(5.5, &t).status, FeasibilityStatus::Feasible);
    }

    #[test]
    fn symmetric_pair_optimum() {
        let (g, c, n, cap) = (1.0, 0.2, 0.01, 0.1);
        let t = symmetric(g, c, n, cap);
        let s = solve_ul_maxmin(&t, &RATE, &BisectionSettings { rel_tol: 1e-10, ..Default::default() }).unwrap();
        // both at cap: γ = g cap / (c cap + n)
        let gamma = g * cap / (c * cap + n);
        assert!((s.gamma - gamma).abs() < 1e-8 * gamma);
        assert_eq!(s.powers, vec![cap, cap]);
    }

    #[test]
    fn orthogonal_users_decouple() {
        let t = table(vec![1.0; 3], DMatrix::zeros(3, 3), vec![0.01; 3], vec![0.1; 3]);
        let s = solve_ul_maxmin(&t, &RATE, &BisectionSettings::default()).unwrap();
        assert_eq!(s.powers, vec![0.1; 3]);
        assert!((s.min_rate - RATE.rate(10.0)).abs() < 1e-9 * s.min_rate);
    }

    #[test]
    fn fixed_point_iterates_are_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let t = random_table(4, &mut rng);
            let gamma = rng.random_range(0.1..3.0);
            let mut q = vec![0.0; 4];
            for _ in 0..200 {
                let next: Vec<f64> = (0..4)
                    .map(|u| {
                        let i: f64 = (0..4).map(|j| t.cross[(u, j)] * q[j]).sum();
                        (gamma * (i + t.noise[u]) / t.desired[u]).min(t.caps[u])
                    })
                    .collect();
                assert!(next.iter().zip(&q).all(|(a, b)| a >= b));
                q = next;
            }
        }
    }

    #[test]
    fn feasibility_is_monotone_in_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..30 {
            let t = random_table(3, &mut rng);
            let mut seen_infeasible = false;
            for i in 1..200 {
                let feasible = ul_feasible(i as f64 * 0.05, &t).status == FeasibilityStatus::Feasible;
                assert!(!(feasible && seen_infeasible));
                seen_infeasible |= !feasible;
            }
        }
    }

    #[test]
    fn balanced_or_capped_at_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let k = rng.random_range(2..6);
            let t = random_table(k, &mut rng);
            let s = solve_ul_maxmin(&t, &RATE, &BisectionSettings { rel_tol: 1e-9, ..Default::default() }).unwrap();
            let fp = ul_feasible(s.gamma, &t);
            let rho = t.sinr(fp.point.as_slice());
            for u in 0..k {
                let balanced = (rho[u] - s.gamma).abs() <= 1e-6 * s.gamma;
                let capped = (fp.point[u] - t.caps[u]).abs() <= 1e-6 * t.caps[u];
                assert!(balanced || capped);
            }
            assert!(s.powers.iter().zip(&t.caps).all(|(q, c)| q <= c));
            assert!(s.sinr.iter().all(|&r| r >= s.gamma * (1.0 - 1e-9)));
        }
    }

    fn grid_maxmin(t: &UlGainTable, steps: usize) -> f64 {
        let k = t.num_users();
        let mut best = 0.0f64;
        let mut idx = vec![0usize; k];
        loop {
            let q: Vec<f64> = (0..k).map(|u| t.caps[u] * idx[u] as f64 / steps as f64).collect();
            let m = t.sinr(&q).into_iter().fold(f64::INFINITY, f64::min);
            best = best.max(m);
            let mut d = 0;
            while d < k {
                idx[d] += 1;
                if idx[d] <= steps {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
            if d == k {
                return best;
            }
        }
    }

    #[test]
    fn matches_grid_search_on_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let t = random_table(2, &mut rng);
            let s = solve_ul_maxmin(&t, &RATE, &BisectionSettings::default()).unwrap();
            let grid = RATE.rate(grid_maxmin(&t, 200));
            assert!(s.min_rate >= grid * (1.0 - 1e-3), "{} vs {}", s.min_rate, grid);
            assert!(s.min_rate <= grid * (1.0 + 1e-3) || s.min_rate >= grid);
        }
    }

    #[test]
    fn table_from_random_channels_is_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (k, m) = (4, 3);
        let hs = (0..k * m).map(|_| CVector::from_iterator(2, (0..2).map(|_| complex_gaussian(&mut rng)))).collect();
        let set = ChannelSet::with_perfect_csi(k, m, hs).unwrap();
        let assoc = DMatrix::from_element(k, m, 1u8);
        let f = conjugate_beamformers(&set, ChannelSource::True, &assoc).unwrap();
        let t = build_gain_table(&set, ChannelSource::True, &f, &assoc, &[0.1; 3], &[0.1; 4], None).unwrap();
        let s = solve_ul_maxmin(&t, &RATE, &BisectionSettings::default()).unwrap();
        let direct = crate::metrics::ul_sinr(&set, ChannelSource::True, &f, &assoc, &s.powers, &[0.1; 3]);
        for (a, b) in direct.iter().zip(&s.sinr) {
            assert!((a - b).abs() < 1e-12 * a.max(1.0));
        }
    }
}
