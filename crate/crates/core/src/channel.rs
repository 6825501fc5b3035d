//! Rician propagation: 3GPP urban-micro LoS probability and path loss, a
//! Rician factor driven by the LoS probability, ULA steering vectors, channel
//! draws and their covariance matrices.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::scenario::{self, Scenario};
use crate::{CMatrix, CVector, Error, Result, C64};

/// Upper clamp on the LoS probability. Keeps β ≤ 999.
pub const LOS_PROBABILITY_CAP: f64 = 1.0 - 1e-3;

/// Urban-micro LoS probability at horizontal distance `distance` (m),
/// clamped to `[0, LOS_PROBABILITY_CAP]`.
pub fn los_probability(distance: f64) -> Result<f64> {
    if !(distance > 0.0) {
        return Err(Error::NonPositiveDistance(distance));
    }
    let decay = (-distance / 36.0).exp();
    let p = (18.0 / distance).min(1.0) * (1.0 - decay) + decay;
    Ok(p.clamp(0.0, LOS_PROBABILITY_CAP))
}

/// β = p / (1 - p).
pub fn rician_factor(p_los: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&p_los) {
        return Err(Error::InvalidProbability(p_los));
    }
    Ok(p_los / (1.0 - p_los))
}

/// Urban-micro path loss in dB at 3-D distance `distance` (m, clamped to at
/// least 1 m) and carrier `carrier_hz`.
pub fn path_loss_db(distance: f64, is_los: bool, carrier_hz: f64) -> f64 {
    let d = distance.max(1.0);
    let f_ghz = carrier_hz / 1e9;
    if is_los {
        22.0 * d.log10() + 28.0 + 20.0 * f_ghz.log10()
    } else {
        36.7 * d.log10() + 22.7 + 26.0 * f_ghz.log10()
    }
}

/// Path loss as a linear gain `10^(-PL/10)`.
pub fn path_loss(distance: f64, is_los: bool, carrier_hz: f64) -> f64 {
    10f64.powf(-path_loss_db(distance, is_los, carrier_hz) / 10.0)
}

/// ULA response: entry `l` is `exp(j 2π spacing l sin θ)`.
pub fn steering_vector(antennas: usize, theta: f64, spacing: f64) -> CVector {
    let step = TAU * spacing * theta.sin();
    CVector::from_iterator(antennas, (0..antennas).map(|l| C64::from_polar(1.0, step * l as f64)))
}

/// Statistics of one user-AP link.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkState {
    /// Large-scale fading (linear gain).
    pub alpha: f64,
    /// Rician factor.
    pub beta: f64,
    /// LoS angle of arrival (rad).
    pub theta: f64,
    /// LoS phase offset (rad).
    pub phase_offset: f64,
    /// Link distance (m).
    pub distance: f64,
}

/// Standard circularly-symmetric complex Gaussian sample, CN(0, 1).
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// `h = sqrt(α/(1+β)) (h̄ + sqrt(β) e^{jψ} v(θ))` with `h̄ ~ CN(0, I)`.
pub fn draw_channel<R: Rng + ?Sized>(
    link: &LinkState,
    antennas: usize,
    spacing: f64,
    rng: &mut R,
) -> CVector {
    let v = steering_vector(antennas, link.theta, spacing);
    let los = C64::from_polar(link.beta.sqrt(), link.phase_offset);
    let scale = (link.alpha / (1.0 + link.beta)).sqrt();
    CVector::from_iterator(
        antennas,
        v.iter().map(|&vl| (complex_gaussian(rng) + los * vl) * scale),
    )
}

/// `C = α/(1+β) (I + β v v^H)`, the covariance of [`draw_channel`] with the
/// phase offset averaged out.
pub fn channel_covariance(link: &LinkState, antennas: usize, spacing: f64) -> CMatrix {
    let v = steering_vector(antennas, link.theta, spacing);
    let scale = link.alpha / (1.0 + link.beta);
    let mut c = &v * v.adjoint() * C64::from(link.beta);
    for l in 0..antennas {
        c[(l, l)] += C64::from(1.0);
    }
    c * C64::from(scale)
}

/// Which channel a metric is evaluated on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChannelSource {
    True,
    Estimated,
}

/// Channels, covariances and estimates of every user-AP link, indexed
/// `user * num_aps + ap`.
#[derive(Clone, Debug)]
pub struct ChannelSet {
    pub num_users: usize,
    pub num_aps: usize,
    pub antennas: usize,
    pub true_channels: Vec<CVector>,
    pub covariances: Vec<CMatrix>,
    pub estimates: Vec<CVector>,
}

impl ChannelSet {
    /// Builds a set whose estimates equal the true channels (perfect CSI).
    /// Covariances default to scaled identities matching each channel's energy.
    pub fn with_perfect_csi(num_users: usize, num_aps: usize, channels: Vec<CVector>) -> Result<Self> {
        if channels.len() != num_users * num_aps {
            return Err(Error::Shape(format!(
                "expected {} channels, got {}",
                num_users * num_aps,
                channels.len()
            )));
        }
        let antennas = channels.first().map_or(0, |h| h.len());
        if channels.iter().any(|h| h.len() != antennas) {
            return Err(Error::Shape("channels have different antenna counts".into()));
        }
        let covariances = channels
            .iter()
            .map(|h| CMatrix::identity(antennas, antennas) * C64::from(h.norm_squared() / antennas.max(1) as f64))
            .collect();
        Ok(Self {
            num_users,
            num_aps,
            antennas,
            estimates: channels.clone(),
            true_channels: channels,
            covariances,
        })
    }

    #[inline]
    pub fn index(&self, user: usize, ap: usize) -> usize {
        user * self.num_aps + ap
    }

    pub fn channel(&self, source: ChannelSource, user: usize, ap: usize) -> &CVector {
        let i = self.index(user, ap);
        match source {
            ChannelSource::True => &self.true_channels[i],
            ChannelSource::Estimated => &self.estimates[i],
        }
    }

    pub fn covariance(&self, user: usize, ap: usize) -> &CMatrix {
        &self.covariances[self.index(user, ap)]
    }
}

/// Draws all channels of a drop and their covariances. Estimates are left
/// at zero for the estimation stage to fill.
pub fn draw_channels<R: Rng + ?Sized>(scenario: &Scenario, rng: &mut R) -> ChannelSet {
    let (k, m) = (scenario.num_users(), scenario.num_aps());
    let l = scenario.config.antennas_per_ap;
    let spacing = scenario.config.propagation.antenna_spacing;
    let mut true_channels = Vec::with_capacity(k * m);
    let mut covariances = Vec::with_capacity(k * m);
    for user in 0..k {
        for ap in 0..m {
            let link = scenario.link(user, ap);
            true_channels.push(draw_channel(&link, l, spacing, rng));
            covariances.push(channel_covariance(&link, l, spacing));
        }
    }
    ChannelSet {
        num_users: k,
        num_aps: m,
        antennas: l,
        estimates: vec![CVector::zeros(l); k * m],
        true_channels,
        covariances,
    }
}

/// [`draw_channels`] on the drop's fading stream.
pub fn draw_channels_seeded(scenario: &Scenario, seed: u64) -> ChannelSet {
    draw_channels(scenario, &mut scenario::stream_rng(seed, scenario::streams::FADING))
}

/// Eigenvalues of [`channel_covariance`]: `α/(1+β)` (L-1 times) and
/// `α(1+βL)/(1+β)`.
pub fn covariance_eigenvalues(link: &LinkState, antennas: usize) -> (f64, f64) {
    let base = link.alpha / (1.0 + link.beta);
    (base, base * (1.0 + link.beta * antennas as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;
    use std::f64::consts::PI;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn link(alpha: f64, beta: f64, theta: f64) -> LinkState {
        LinkState { alpha, beta, theta, phase_offset: 0.3, distance: 50.0 }
    }

    #[test]
    fn los_probability_examples() {
        // hand evaluation: 0.5 (1 - e^-1) + e^-1
        let expected = 0.5 * (1.0 - (-1.0f64).exp()) + (-1.0f64).exp();
        assert!((los_probability(36.0).unwrap() - expected).abs() < 1e-14);
        assert!((expected - 0.6839).abs() < 1e-4);
        assert_eq!(los_probability(18.0).unwrap(), LOS_PROBABILITY_CAP);
        assert_eq!(los_probability(3.0).unwrap(), LOS_PROBABILITY_CAP);
        assert!(los_probability(5000.0).unwrap() < 0.01);
        assert!(los_probability(0.0).is_err());
        assert!(los_probability(-3.0).is_err());
    }

    #[test]
    fn los_probability_non_increasing_beyond_18m() {
        let mut prev = los_probability(18.0).unwrap();
        for i in 1..2000 {
            let p = los_probability(18.0 + i as f64).unwrap();
            assert!(p <= prev + 1e-15);
            prev = p;
        }
    }

    #[test]
    fn rician_factor_examples() {
        assert!((rician_factor(0.5).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(rician_factor(0.0).unwrap(), 0.0);
        let p = los_probability(36.0).unwrap();
        assert!((rician_factor(p).unwrap() - 2.164).abs() < 1e-3);
        assert!(rician_factor(1.0).is_err());
        assert!((rician_factor(LOS_PROBABILITY_CAP).unwrap() - 999.0).abs() < 1e-9);
    }

    #[test]
    fn rician_factor_finite_for_all_distances() {
        for i in 1..10_000 {
            let d = i as f64 * 0.1;
            let b = rician_factor(los_probability(d).unwrap()).unwrap();
            assert!(b.is_finite() && b <= 999.0 + 1e-9);
        }
    }

    #[test]
    fn path_loss_examples() {
        let los = path_loss_db(100.0, true, 2.5e9);
        assert!((los - (44.0 + 28.0 + 20.0 * 2.5f64.log10())).abs() < 1e-12);
        assert!((los - 79.96).abs() < 0.01);
        assert!((path_loss(100.0, true, 2.5e9) - 1.01e-8).abs() < 0.01e-8);
        let nlos = path_loss_db(100.0, false, 2.5e9);
        assert!((nlos - 106.45).abs() < 0.01);
        assert_eq!(path_loss_db(0.2, true, 2.5e9), path_loss_db(1.0, true, 2.5e9));
    }

    #[test]
    fn path_loss_decreasing_in_distance() {
        for los in [true, false] {
            let mut prev = path_loss(1.0, los, 2.5e9);
            for i in 2..3000 {
                let g = path_loss(i as f64, los, 2.5e9);
                assert!(g < prev);
                prev = g;
            }
        }
    }

    #[test]
    fn steering_vector_examples() {
        let v = steering_vector(5, 0.0, 0.5);
        assert!(v.iter().all(|z| (z - C64::from(1.0)).norm() < 1e-15));
        let v = steering_vector(2, PI / 2.0, 0.5);
        assert!((v[0] - C64::from(1.0)).norm() < 1e-15);
        assert!((v[1] - C64::from(-1.0)).norm() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let l = rng.random_range(1..64);
            let theta = rng.random_range(-PI..PI);
            let v = steering_vector(l, theta, 0.5);
            assert!((v.norm_squared() - l as f64).abs() < 1e-9);
            assert!(v.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
        }
    }

    fn mean_energy(link: &LinkState, l: usize, draws: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..draws)
            .map(|_| draw_channel(link, l, 0.5, &mut rng).norm_squared())
            .sum::<f64>()
            / draws as f64
    }

    #[test]
    fn rayleigh_energy_matches_alpha_l() {
        let lk = link(2.0, 0.0, 0.4);
        let e = mean_energy(&lk, 4, 100_000, 5);
        assert!((e - 8.0).abs() / 8.0 < 0.02);
    }

    #[test]
    fn strong_los_is_deterministic() {
        let lk = link(1.0, 999.0, 0.7);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = draw_channel(&lk, 8, 0.5, &mut rng);
        let v = steering_vector(8, 0.7, 0.5) * C64::from_polar(1.0, 0.3);
        assert!((h.norm_squared() - 8.0).abs() < 0.6);
        assert!((&h - &v).norm() / v.norm() < 0.1);
    }

    #[test]
    fn energy_normalisation_for_any_beta() {
        for (i, beta) in [0.0, 0.5, 1.0, 10.0, 100.0].into_iter().enumerate() {
            let lk = link(0.5, beta, 1.1);
            let e = mean_energy(&lk, 3, 100_000, 10 + i as u64);
            assert!((e - 1.5).abs() / 1.5 < 0.02, "beta {beta}: {e}");
        }
    }

    #[test]
    fn covariance_examples() {
        let c = channel_covariance(&link(3.0, 0.0, 0.2), 3, 0.5);
        assert!((c - CMatrix::identity(3, 3) * C64::from(3.0)).norm() < 1e-14);
        let c = channel_covariance(&link(1.0, 1.0, 0.0), 2, 0.5);
        let expected = CMatrix::from_row_slice(
            2,
            2,
            &[C64::from(1.0), C64::from(0.5), C64::from(0.5), C64::from(1.0)],
        );
        assert!((c - expected).norm() < 1e-14);
    }

    #[test]
    fn covariance_trace_and_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let lk = link(rng.random_range(1e-12..1.0), rng.random_range(0.0..999.0), rng.random_range(-PI..PI));
            let l = rng.random_range(1..12);
            let c = channel_covariance(&lk, l, 0.5);
            let tr = c.trace().re;
            assert!((tr - lk.alpha * l as f64).abs() <= 1e-10 * lk.alpha * l as f64);
            assert!((&c - c.adjoint()).norm() <= 1e-12 * c.norm());
            let eig = SymmetricEigen::new(c.clone()).eigenvalues;
            let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(min >= -1e-12 * tr);
            let (lo, hi) = covariance_eigenvalues(&lk, l);
            assert!((max - hi).abs() <= 1e-9 * hi);
            if l > 1 {
                assert!((min - lo).abs() <= 1e-9 * hi);
            }
        }
    }

    #[test]
    fn sample_covariance_matches_model() {
        let lk = link(1.0, 2.0, 0.6);
        let l = 4;
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut acc = CMatrix::zeros(l, l);
        for _ in 0..n {
            let draw = LinkState { phase_offset: rng.random_range(0.0..TAU), ..lk };
            let h = draw_channel(&draw, l, 0.5, &mut rng);
            acc += &h * h.adjoint();
        }
        acc /= C64::from(n as f64);
        let c = channel_covariance(&lk, l, 0.5);
        assert!((acc - &c).norm() / c.norm() < 0.03);
    }
}
