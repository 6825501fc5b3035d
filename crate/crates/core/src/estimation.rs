//! Uplink pilot assignment, the pilot phase, and LMMSE channel estimation.
//!
//! Pilots are unit-norm columns of a unitary DFT basis, so the projected
//! noise on every pilot is `CN(0, η² I)` and the observation covariance of
//! user `k` at AP `m` is `Σ_j μ_j C_{j,m} |t_j^H t_k|² + η_m² I`.

use std::f64::consts::TAU;

use nalgebra::SymmetricEigen;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::channel::{complex_gaussian, ChannelSet};
use crate::scenario::{torus_distance, Point};
use crate::{CMatrix, CVector, Error, Result, C64};

/// Observation covariances with a condition number above this are rejected.
pub const MAX_CONDITION_NUMBER: f64 = 1e12;

#[derive(Clone, Debug, PartialEq)]
pub struct PilotBook {
    /// One unit-norm sequence per pilot index.
    pub pilots: Vec<CVector>,
    /// Pilot index used by each user.
    pub assignment: Vec<usize>,
}

impl PilotBook {
    pub fn num_pilots(&self) -> usize {
        self.pilots.len()
    }

    pub fn num_users(&self) -> usize {
        self.assignment.len()
    }

    pub fn pilot(&self, user: usize) -> &CVector {
        &self.pilots[self.assignment[user]]
    }

    /// `t_j^H t_k`.
    pub fn overlap(&self, j: usize, k: usize) -> C64 {
        self.pilot(j).dotc(self.pilot(k))
    }

    /// Users sharing user `k`'s pilot, `k` included.
    pub fn sharers(&self, k: usize) -> Vec<usize> {
        let p = self.assignment[k];
        (0..self.num_users()).filter(|&j| self.assignment[j] == p).collect()
    }
}

/// Unit-norm DFT sequences of length `tau_p`.
pub fn dft_pilots(tau_p: usize) -> Vec<CVector> {
    let norm = 1.0 / (tau_p as f64).sqrt();
    (0..tau_p)
        .map(|p| {
            CVector::from_iterator(
                tau_p,
                (0..tau_p).map(|l| C64::from_polar(norm, -TAU * (p * l) as f64 / tau_p as f64)),
            )
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairingRule {
    /// Pilot sharers chosen greedily by decreasing wrap-around distance.
    GreedyMaxDistance,
    /// Uniformly random assignment.
    Random,
}

/// Greedy max-distance assignment of `tau_p` pilots to `k` users.
///
/// With at most two users per pilot, all user pairs are visited in order of
/// decreasing distance and the first `k - tau_p` disjoint pairs share pilots;
/// everybody else gets a pilot alone. With heavier sharing each user, in index
/// order, takes the pilot with free capacity whose current holders are
/// farthest away.
pub fn assign_pilots(k: usize, tau_p: usize, user_positions: &[Point], side: f64) -> Result<PilotBook> {
    if user_positions.len() != k {
        return Err(Error::Shape(format!("{} positions for {k} users", user_positions.len())));
    }
    if tau_p == 0 {
        return Err(Error::InvalidConfig("pilot length must be at least 1".into()));
    }
    if tau_p > k {
        log::warn!("pilot length {tau_p} exceeds the number of users {k}; pilots go unused");
    }
    let pilots = dft_pilots(tau_p);
    let capacity = k.div_ceil(tau_p);
    let mut assignment = vec![usize::MAX; k];

    if capacity <= 1 {
        for (u, a) in assignment.iter_mut().enumerate() {
            *a = u;
        }
    } else if capacity == 2 {
        let mut pairs = Vec::with_capacity(k * (k - 1) / 2);
        for i in 0..k {
            for j in i + 1..k {
                pairs.push((torus_distance(user_positions[i], user_positions[j], side)?, i, j));
            }
        }
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let needed = k - tau_p;
        let mut next = 0;
        for &(_, i, j) in &pairs {
            if next == needed {
                break;
            }
            if assignment[i] == usize::MAX && assignment[j] == usize::MAX {
                assignment[i] = next;
                assignment[j] = next;
                next += 1;
            }
        }
        for a in assignment.iter_mut().filter(|a| **a == usize::MAX) {
            *a = next;
            next += 1;
        }
    } else {
        let mut holders: Vec<Vec<usize>> = vec![Vec::new(); tau_p];
        for u in 0..k {
            let mut best: Option<(f64, usize)> = None;
            for (p, h) in holders.iter().enumerate() {
                if h.len() >= capacity {
                    continue;
                }
                let mut closest = f64::INFINITY;
                for &v in h {
                    closest = closest.min(torus_distance(user_positions[u], user_positions[v], side)?);
                }
                if best.is_none_or(|(d, _)| closest > d) {
                    best = Some((closest, p));
                }
            }
            let (_, p) = best.expect("total capacity covers every user");
            holders[p].push(u);
            assignment[u] = p;
        }
    }
    Ok(PilotBook { pilots, assignment })
}

/// Random assignment with the same sharing level as [`assign_pilots`].
pub fn assign_pilots_random<R: Rng + ?Sized>(k: usize, tau_p: usize, rng: &mut R) -> Result<PilotBook> {
    if tau_p == 0 {
        return Err(Error::InvalidConfig("pilot length must be at least 1".into()));
    }
    let capacity = k.div_ceil(tau_p);
    let mut slots: Vec<usize> = (0..tau_p).flat_map(|p| std::iter::repeat_n(p, capacity)).collect();
    slots.shuffle(rng);
    slots.truncate(k);
    Ok(PilotBook { pilots: dft_pilots(tau_p), assignment: slots })
}

/// Projected pilot observations `u_{k,m}`, indexed `user * num_aps + ap`.
#[derive(Clone, Debug)]
pub struct PilotObservation {
    pub num_users: usize,
    pub num_aps: usize,
    pub u: Vec<CVector>,
}

impl PilotObservation {
    pub fn get(&self, user: usize, ap: usize) -> &CVector {
        &self.u[user * self.num_aps + ap]
    }
}

/// Simulates the pilot phase: `u_{k,m} = Σ_j sqrt(μ_j) (t_k^H t_j) h_{j,m} + ñ_m`,
/// where the projected noise `ñ ~ CN(0, η_m² I)` is drawn once per pilot and
/// AP, so users on the same pilot see the same observation.
pub fn simulate_pilot_phase<R: Rng + ?Sized>(
    channels: &ChannelSet,
    book: &PilotBook,
    pilot_powers: &[f64],
    noise_vars: &[f64],
    rng: &mut R,
) -> Result<PilotObservation> {
    let (k, m, l) = (channels.num_users, channels.num_aps, channels.antennas);
    if book.num_users() != k || pilot_powers.len() != k || noise_vars.len() != m {
        return Err(Error::Shape("pilot book, pilot powers or noise variances do not match the channel set".into()));
    }
    let tau_p = book.num_pilots();
    let mut noise = Vec::with_capacity(tau_p * m);
    for _ in 0..tau_p {
        for &eta2 in noise_vars {
            let s = eta2.sqrt();
            noise.push(CVector::from_iterator(l, (0..l).map(|_| complex_gaussian(rng) * s)));
        }
    }
    let mut u = Vec::with_capacity(k * m);
    for user in 0..k {
        let p = book.assignment[user];
        for ap in 0..m {
            let mut obs = noise[p * m + ap].clone();
            for j in 0..k {
                let w = book.pilot(user).dotc(book.pilot(j));
                if w.norm_sqr() > 0.0 {
                    obs.axpy(w * pilot_powers[j].sqrt(), channels.channel(crate::channel::ChannelSource::True, j, ap), C64::from(1.0));
                }
            }
            u.push(obs);
        }
    }
    Ok(PilotObservation { num_users: k, num_aps: m, u })
}

/// `D_{k,m} = Σ_j μ_j C_{j,m} |t_j^H t_k|² + η_m² I` for user `k` at one AP,
/// where `covariances[j]` is `C_{j,m}`.
pub fn observation_covariance(
    covariances: &[&CMatrix],
    book: &PilotBook,
    user: usize,
    pilot_powers: &[f64],
    noise_var: f64,
) -> CMatrix {
    let l = covariances.first().map_or(0, |c| c.nrows());
    let mut d = CMatrix::identity(l, l) * C64::from(noise_var);
    for (j, c) in covariances.iter().enumerate() {
        let w = book.overlap(j, user).norm_sqr() * pilot_powers[j];
        if w > 0.0 {
            d += *c * C64::from(w);
        }
    }
    d
}

/// Condition number of a Hermitian matrix from its eigenvalues; infinite when
/// the smallest is not positive.
pub fn condition_number(d: &CMatrix) -> f64 {
    let eig = SymmetricEigen::new(d.clone()).eigenvalues;
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// `ĥ = sqrt(μ_k) C_k D_k^{-1} u`.
pub fn lmmse_estimate(u: &CVector, c_k: &CMatrix, d_k: &CMatrix, mu_k: f64) -> Result<CVector> {
    let cond = condition_number(d_k);
    if !(cond <= MAX_CONDITION_NUMBER) {
        return Err(Error::IllConditioned(cond));
    }
    let chol = d_k.clone().cholesky().ok_or(Error::IllConditioned(cond))?;
    let x = chol.solve(u);
    Ok(c_k * x * C64::from(mu_k.sqrt()))
}

/// Fills `channels.estimates` from the pilot observations.
pub fn estimate_channels(
    channels: &mut ChannelSet,
    book: &PilotBook,
    obs: &PilotObservation,
    pilot_powers: &[f64],
    noise_vars: &[f64],
) -> Result<()> {
    let (k, m) = (channels.num_users, channels.num_aps);
    let mut updates = Vec::with_capacity(k * m);
    for ap in 0..m {
        let covs: Vec<&CMatrix> = (0..k).map(|j| channels.covariance(j, ap)).collect();
        // users on one pilot share D, so factor it once per pilot
        let mut per_pilot: Vec<Option<CMatrix>> = vec![None; book.num_pilots()];
        for user in 0..k {
            let p = book.assignment[user];
            if per_pilot[p].is_none() {
                per_pilot[p] = Some(observation_covariance(&covs, book, user, pilot_powers, noise_vars[ap]));
            }
            let d = per_pilot[p].as_ref().expect("filled above");
            let est = lmmse_estimate(obs.get(user, ap), covs[user], d, pilot_powers[user])?;
            updates.push((channels.index(user, ap), est));
        }
    }
    for (i, est) in updates {
        channels.estimates[i] = est;
    }
    Ok(())
}
