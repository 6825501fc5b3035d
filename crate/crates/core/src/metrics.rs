//! Conjugate beamforming, DL/UL SINR, rates and EMF exposure metrics.
//!
//! Both SINRs and the IPD are built from the effective amplitude matrices
//! `A[k][j] = Σ_m a_{j,m} sqrt(p_{j,m}) h_{k,m}^H b_{j,m}` (DL) and
//! `B[k][j] = Σ_m a_{k,m} f_{k,m}^H h_{j,m}` (UL). The channel source is
//! always an explicit argument: designs run on estimates, reported figures on
//! the true channels.

use nalgebra::DMatrix;

use crate::channel::{ChannelSet, ChannelSource};
use crate::{CVector, Error, Result, C64};

/// `ĥ / ‖ĥ‖`.
pub fn conjugate_beamformer(estimate: &CVector) -> Result<CVector> {
    let norm = estimate.norm();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ZeroEstimate { user: 0, ap: 0 });
    }
    Ok(estimate / C64::from(norm))
}

/// DL beams and UL filters per link, indexed `user * num_aps + ap`. Inactive
/// links hold zero vectors.
#[derive(Clone, Debug)]
pub struct BeamformerSet {
    pub num_users: usize,
    pub num_aps: usize,
    pub dl_beams: Vec<CVector>,
    pub ul_filters: Vec<CVector>,
}

impl BeamformerSet {
    pub fn beam(&self, user: usize, ap: usize) -> &CVector {
        &self.dl_beams[user * self.num_aps + ap]
    }

    pub fn filter(&self, user: usize, ap: usize) -> &CVector {
        &self.ul_filters[user * self.num_aps + ap]
    }
}

/// Conjugate beams on the active links of `association`, with `f = b`.
pub fn conjugate_beamformers(
    channels: &ChannelSet,
    source: ChannelSource,
    association: &DMatrix<u8>,
) -> Result<BeamformerSet> {
    let (k, m) = (channels.num_users, channels.num_aps);
    let mut beams = Vec::with_capacity(k * m);
    for user in 0..k {
        for ap in 0..m {
            if association[(user, ap)] == 1 {
                let b = conjugate_beamformer(channels.channel(source, user, ap))
                    .map_err(|_| Error::ZeroEstimate { user, ap })?;
                beams.push(b);
            } else {
                beams.push(CVector::zeros(channels.antennas));
            }
        }
    }
    Ok(BeamformerSet { num_users: k, num_aps: m, ul_filters: beams.clone(), dl_beams: beams })
}

/// DL powers `p_{k,m}` (K x M, zero on inactive links) and UL powers `q_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerAllocation {
    pub dl_powers: DMatrix<f64>,
    pub ul_powers: Vec<f64>,
}

/// Per-user figures for one scheme.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UserMetrics {
    pub dl_sinr: f64,
    pub ul_sinr: f64,
    pub dl_rate: f64,
    pub ul_rate: f64,
    /// Incident power density (W/m²).
    pub ipd: f64,
    /// Largest SAR over body parts (W/kg).
    pub sar: f64,
}

/// DL effective amplitudes `A[k][j]`.
pub fn dl_amplitudes(
    channels: &ChannelSet,
    source: ChannelSource,
    beams: &BeamformerSet,
    association: &DMatrix<u8>,
    powers: &DMatrix<f64>,
) -> DMatrix<C64> {
    let (k, m) = (channels.num_users, channels.num_aps);
    let mut amp = DMatrix::<C64>::zeros(k, k);
    for j in 0..k {
        for ap in 0..m {
            if association[(j, ap)] == 0 || powers[(j, ap)] <= 0.0 {
                continue;
            }
            let sp = powers[(j, ap)].sqrt();
            let b = beams.beam(j, ap);
            for user in 0..k {
                amp[(user, j)] += channels.channel(source, user, ap).dotc(b) * sp;
            }
        }
    }
    amp
}

/// DL SINR of every user.
pub fn dl_sinr(
    channels: &ChannelSet,
    source: ChannelSource,
    beams: &BeamformerSet,
    association: &DMatrix<u8>,
    powers: &DMatrix<f64>,
    noise: &[f64],
) -> Vec<f64> {
    let amp = dl_amplitudes(channels, source, beams, association, powers);
    sinr_from_dl_amplitudes(&amp, noise)
}

pub fn sinr_from_dl_amplitudes(amp: &DMatrix<C64>, noise: &[f64]) -> Vec<f64> {
    let k = amp.nrows();
    (0..k)
        .map(|user| {
            let desired = amp[(user, user)].norm_sqr();
            let interference: f64 =
                (0..k).filter(|&j| j != user).map(|j| amp[(user, j)].norm_sqr()).sum();
            desired / (interference + noise[user])
        })
        .collect()
}

/// IPD `(4π/λ²) Σ_j |A[k][j]|²` at every user, desired term included.
pub fn ipd(
    channels: &ChannelSet,
    source: ChannelSource,
    beams: &BeamformerSet,
    association: &DMatrix<u8>,
    powers: &DMatrix<f64>,
    wavelength: f64,
) -> Vec<f64> {
    let amp = dl_amplitudes(channels, source, beams, association, powers);
    ipd_from_dl_amplitudes(&amp, wavelength)
}

pub fn ipd_scale(wavelength: f64) -> f64 {
    4.0 * std::f64::consts::PI / (wavelength * wavelength)
}

pub fn ipd_from_dl_amplitudes(amp: &DMatrix<C64>, wavelength: f64) -> Vec<f64> {
    let scale = ipd_scale(wavelength);
    (0..amp.nrows())
        .map(|user| scale * amp.row(user).iter().map(|a| a.norm_sqr()).sum::<f64>())
        .collect()
}

/// UL effective amplitudes `B[k][j]`.
pub fn ul_amplitudes(
    channels: &ChannelSet,
    source: ChannelSource,
    filters: &BeamformerSet,
    association: &DMatrix<u8>,
) -> DMatrix<C64> {
    let (k, m) = (channels.num_users, channels.num_aps);
    let mut amp = DMatrix::<C64>::zeros(k, k);
    for user in 0..k {
        for ap in 0..m {
            if association[(user, ap)] == 0 {
                continue;
            }
            let f = filters.filter(user, ap);
            for j in 0..k {
                amp[(user, j)] += f.dotc(channels.channel(source, j, ap));
            }
        }
    }
    amp
}

/// UL combined noise `Σ_m a_{k,m} η_m² ‖f_{k,m}‖²`.
pub fn ul_noise(filters: &BeamformerSet, association: &DMatrix<u8>, noise: &[f64]) -> Vec<f64> {
    (0..filters.num_users)
        .map(|user| {
            (0..filters.num_aps)
                .filter(|&ap| association[(user, ap)] == 1)
                .map(|ap| noise[ap] * filters.filter(user, ap).norm_squared())
                .sum()
        })
        .collect()
}

/// UL SINR of every user.
pub fn ul_sinr(
    channels: &ChannelSet,
    source: ChannelSource,
    filters: &BeamformerSet,
    association: &DMatrix<u8>,
    powers: &[f64],
    noise: &[f64],
) -> Vec<f64> {
    let amp = ul_amplitudes(channels, source, filters, association);
    let n = ul_noise(filters, association, noise);
    let k = channels.num_users;
    (0..k)
        .map(|user| {
            let desired = powers[user] * amp[(user, user)].norm_sqr();
            let interference: f64 = (0..k)
                .filter(|&j| j != user)
                .map(|j| powers[j] * amp[(user, j)].norm_sqr())
                .sum();
            desired / (interference + n[user])
        })
        .collect()
}

/// `ε = b q`.
pub fn sar(power: f64, coefficient: f64) -> f64 {
    coefficient * power
}

/// `(prelog/τ_c) B log2(1 + sinr)` in bit/s.
pub fn rate(sinr: f64, prelog_symbols: usize, coherence_block: usize, bandwidth: f64) -> f64 {
    prelog_symbols as f64 / coherence_block as f64 * bandwidth * (1.0 + sinr).log2()
}

/// Pre-log and bandwidth of one link direction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateParams {
    pub prelog_symbols: usize,
    pub coherence_block: usize,
    pub bandwidth: f64,
}

impl RateParams {
    pub fn rate(&self, sinr: f64) -> f64 {
        rate(sinr, self.prelog_symbols, self.coherence_block, self.bandwidth)
    }

    pub fn sinr_for_rate(&self, rate: f64) -> f64 {
        let bits = rate * self.coherence_block as f64 / (self.prelog_symbols as f64 * self.bandwidth);
        bits.exp2() - 1.0
    }
}
