//! Network drops: AP and user placement on a wrap-around square, user-AP
//! association, and the mapping from a cell-free layout to its multi-cell
//! counterpart with the same antenna and power totals.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::channel::{self, LinkState};
use crate::units;
use crate::{Error, Result};

/// RNG stream identifiers. Cell-free and multi-cell drops generated from the
/// same seed share user positions and per-link draws in these streams.
pub(crate) mod streams {
    pub const USERS: u64 = 1;
    pub const APS: u64 = 2;
    pub const LINKS: u64 = 3;
    pub const FADING: u64 = 4;
    pub const PILOT_NOISE: u64 = 5;
    pub const PAIRING: u64 = 6;
}

/// Seeded generator on a given stream.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DeploymentMode {
    CellFree,
    MultiCell,
}

impl DeploymentMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DeploymentMode::CellFree => "cell_free",
            DeploymentMode::MultiCell => "multi_cell",
        }
    }
}

impl std::fmt::Display for DeploymentMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DeploymentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cell_free" | "cf" => Ok(DeploymentMode::CellFree),
            "multi_cell" | "mc" => Ok(DeploymentMode::MultiCell),
            other => Err(Error::InvalidConfig(format!("unknown deployment '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ApLayout {
    /// Regular grid with per-axis uniform jitter, expressed as a fraction of
    /// the grid pitch.
    JitteredGrid { jitter: f64 },
    UniformRandom,
}

/// Propagation knobs not fixed by the system model.
#[derive(Clone, Debug, PartialEq)]
pub struct PropagationConfig {
    pub ap_height: f64,
    pub user_height: f64,
    /// ULA element spacing in wavelengths.
    pub antenna_spacing: f64,
    /// Log-normal shadowing standard deviation in dB; zero disables it.
    pub shadowing_std_db: f64,
    pub ap_layout: ApLayout,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            ap_height: 10.0,
            user_height: 1.5,
            antenna_spacing: 0.5,
            shadowing_std_db: 0.0,
            ap_layout: ApLayout::JitteredGrid { jitter: 0.1 },
        }
    }
}

/// Geometry and radio parameters of one deployment. Internal units are SI.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkConfig {
    /// Side of the square deployment area (m).
    pub area_side: f64,
    pub num_users: usize,
    pub num_aps: usize,
    pub antennas_per_ap: usize,
    /// Number of APs serving each user.
    pub association_size: usize,
    /// Carrier frequency (Hz).
    pub carrier_frequency: f64,
    /// Bandwidth (Hz).
    pub bandwidth: f64,
    /// Per-AP downlink power budget (W).
    pub dl_power_budget: f64,
    /// Per-user uplink power budget (W).
    pub ul_power_budget: f64,
    /// Per-user pilot power (W).
    pub pilot_power: f64,
    /// Noise power spectral density (W/Hz).
    pub noise_psd: f64,
    pub coherence_block: usize,
    pub pilot_length: usize,
    pub dl_symbols: usize,
    pub ul_symbols: usize,
    pub deployment_mode: DeploymentMode,
    pub propagation: PropagationConfig,
}

impl Default for NetworkConfig {
    /// K = 20 users, M = 40 APs with L = 4 antennas, N = 5, 23 dBm per AP,
    /// 20 dBm per user (data and pilots), -174 dBm/Hz over 20 MHz, 200-symbol
    /// coherence blocks, 1 km square.
    fn default() -> Self {
        let mut cfg = Self {
            area_side: 1000.0,
            num_users: 20,
            num_aps: 40,
            antennas_per_ap: 4,
            association_size: 5,
            carrier_frequency: 2.5e9,
            bandwidth: 20e6,
            dl_power_budget: units::dbm_to_watts(23.0),
            ul_power_budget: units::dbm_to_watts(20.0),
            pilot_power: units::dbm_to_watts(20.0),
            noise_psd: units::dbm_to_watts(-174.0),
            coherence_block: 200,
            pilot_length: 0,
            dl_symbols: 0,
            ul_symbols: 0,
            deployment_mode: DeploymentMode::CellFree,
            propagation: PropagationConfig::default(),
        };
        cfg.reset_frame();
        cfg
    }
}

impl NetworkConfig {
    /// Recomputes the frame split for the current user count: K/2 pilot
    /// symbols (rounded up), the remainder split evenly between DL and UL.
    pub fn reset_frame(&mut self) {
        self.pilot_length = self.num_users.div_ceil(2).max(1);
        let data = self.coherence_block.saturating_sub(self.pilot_length);
        self.dl_symbols = data / 2;
        self.ul_symbols = data / 2;
    }

    /// Same configuration with a different user count and its frame split.
    pub fn with_num_users(&self, num_users: usize) -> Self {
        let mut cfg = self.clone();
        cfg.num_users = num_users;
        cfg.reset_frame();
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.num_users == 0 || self.num_aps == 0 || self.antennas_per_ap == 0 {
            return fail("num_users, num_aps and antennas_per_ap must be at least 1".into());
        }
        if self.association_size == 0 || self.association_size > self.num_aps {
            return fail(format!(
                "association_size must be in 1..={}, got {}",
                self.num_aps, self.association_size
            ));
        }
        let positive = [
            ("area_side", self.area_side),
            ("carrier_frequency", self.carrier_frequency),
            ("bandwidth", self.bandwidth),
            ("dl_power_budget", self.dl_power_budget),
            ("ul_power_budget", self.ul_power_budget),
            ("pilot_power", self.pilot_power),
            ("noise_psd", self.noise_psd),
            ("ap_height", self.propagation.ap_height),
            ("user_height", self.propagation.user_height),
            ("antenna_spacing", self.propagation.antenna_spacing),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if self.propagation.shadowing_std_db < 0.0 {
            return fail("shadowing_std_db must be non-negative".into());
        }
        if let ApLayout::JitteredGrid { jitter } = self.propagation.ap_layout {
            if !(0.0..0.5).contains(&jitter) {
                return fail(format!("ap_jitter must be in [0, 0.5), got {jitter}"));
            }
        }
        if self.pilot_length == 0 || self.dl_symbols == 0 || self.ul_symbols == 0 {
            return fail("pilot_length, dl_symbols and ul_symbols must be at least 1".into());
        }
        if self.pilot_length + self.dl_symbols + self.ul_symbols > self.coherence_block {
            return fail(format!(
                "pilot ({}) + DL ({}) + UL ({}) symbols exceed the coherence block ({})",
                self.pilot_length, self.dl_symbols, self.ul_symbols, self.coherence_block
            ));
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        units::wavelength(self.carrier_frequency)
    }

    /// Receiver noise power N_o B (W), shared by users and APs.
    pub fn noise_power(&self) -> f64 {
        self.noise_psd * self.bandwidth
    }

    pub fn total_antennas(&self) -> usize {
        self.num_aps * self.antennas_per_ap
    }
}

/// Multi-cell counterpart of a cell-free deployment: the L-antenna APs become
/// L sites with M antennas each, every user joins its strongest site, and a
/// site's budget is (M/L) times the per-AP budget. Everything else is copied.
pub fn to_multicell(config: &NetworkConfig) -> NetworkConfig {
    let mut mc = config.clone();
    mc.num_aps = config.antennas_per_ap;
    mc.antennas_per_ap = config.num_aps;
    mc.association_size = 1;
    mc.dl_power_budget =
        config.dl_power_budget * config.num_aps as f64 / config.antennas_per_ap as f64;
    mc.deployment_mode = DeploymentMode::MultiCell;
    mc
}

/// Per-user exposure caps: IPD cap (W/m²) and, per body part, SAR cap (W/kg)
/// with its coefficient (1/kg). SAR parts are columns.
#[derive(Clone, Debug, PartialEq)]
pub struct ExposureLimits {
    pub ipd_caps: Vec<f64>,
    pub sar_caps: DMatrix<f64>,
    pub sar_coeffs: DMatrix<f64>,
}

impl ExposureLimits {
    pub const DEFAULT_IPD_CAP: f64 = 10.0;
    pub const DEFAULT_SAR_CAP: f64 = 0.08;
    pub const DEFAULT_SAR_COEFF: f64 = 8.0;

    /// Same caps for every user and body part.
    pub fn uniform(num_users: usize, ipd_cap: f64, sar_cap: f64, sar_coeff: f64, body_parts: usize) -> Self {
        Self {
            ipd_caps: vec![ipd_cap; num_users],
            sar_caps: DMatrix::from_element(num_users, body_parts, sar_cap),
            sar_coeffs: DMatrix::from_element(num_users, body_parts, sar_coeff),
        }
    }

    pub fn standard(num_users: usize) -> Self {
        Self::uniform(num_users, Self::DEFAULT_IPD_CAP, Self::DEFAULT_SAR_CAP, Self::DEFAULT_SAR_COEFF, 1)
    }

    pub fn num_users(&self) -> usize {
        self.ipd_caps.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.ipd_caps.len();
        if self.sar_caps.shape() != self.sar_coeffs.shape() || self.sar_caps.nrows() != k {
            return Err(Error::Shape(format!(
                "exposure limits: {k} IPD caps, SAR caps {:?}, SAR coefficients {:?}",
                self.sar_caps.shape(),
                self.sar_coeffs.shape()
            )));
        }
        if self.sar_caps.ncols() == 0 {
            return Err(Error::InvalidConfig("at least one SAR body part is required".into()));
        }
        let all = self.ipd_caps.iter().chain(self.sar_caps.iter()).chain(self.sar_coeffs.iter());
        if all.clone().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidConfig("exposure caps and SAR coefficients must be positive".into()));
        }
        Ok(())
    }

    /// Largest UL power keeping every body part of `user` under its SAR cap.
    pub fn sar_power_cap(&self, user: usize) -> f64 {
        (0..self.sar_caps.ncols())
            .map(|n| self.sar_caps[(user, n)] / self.sar_coeffs[(user, n)])
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest SAR over body parts at power `q`.
    pub fn max_sar(&self, user: usize, q: f64) -> f64 {
        (0..self.sar_coeffs.ncols())
            .map(|n| crate::metrics::sar(q, self.sar_coeffs[(user, n)]))
            .fold(0.0, f64::max)
    }

    /// Same limits for a different number of users (first user's caps repeated).
    pub fn resized(&self, num_users: usize) -> Self {
        let parts = self.sar_caps.ncols();
        Self {
            ipd_caps: vec![self.ipd_caps[0]; num_users],
            sar_caps: DMatrix::from_fn(num_users, parts, |_, n| self.sar_caps[(0, n)]),
            sar_coeffs: DMatrix::from_fn(num_users, parts, |_, n| self.sar_coeffs[(0, n)]),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

fn check_in_area(p: Point, side: f64) -> Result<()> {
    let inside = |c: f64| (0.0..side).contains(&c);
    if inside(p.x) && inside(p.y) {
        Ok(())
    } else {
        Err(Error::OutOfArea { x: p.x, y: p.y, side })
    }
}

fn wrap_delta(d: f64, side: f64) -> f64 {
    let d = d.rem_euclid(side);
    if d > side / 2.0 {
        d - side
    } else {
        d
    }
}

/// Shortest signed displacement from `from` to `to` on the torus.
pub fn torus_displacement(from: Point, to: Point, side: f64) -> Result<(f64, f64)> {
    check_in_area(from, side)?;
    check_in_area(to, side)?;
    Ok((wrap_delta(to.x - from.x, side), wrap_delta(to.y - from.y, side)))
}

/// Euclidean distance under the shortest wrap-around displacement.
pub fn torus_distance(p: Point, r: Point, side: f64) -> Result<f64> {
    let (dx, dy) = torus_displacement(p, r, side)?;
    Ok(dx.hypot(dy))
}

/// Activates, for every user, the `n` links with the largest large-scale
/// coefficients. Ties go to the lowest AP index.
pub fn associate_users(large_scale: &DMatrix<f64>, n: usize) -> DMatrix<u8> {
    let (k, m) = large_scale.shape();
    let n = n.min(m);
    let mut assoc = DMatrix::<u8>::zeros(k, m);
    let mut order: Vec<usize> = Vec::with_capacity(m);
    for user in 0..k {
        order.clear();
        order.extend(0..m);
        // stable sort keeps index order among equal gains
        order.sort_by(|&a, &b| large_scale[(user, b)].total_cmp(&large_scale[(user, a)]));
        for &ap in &order[..n] {
            assoc[(user, ap)] = 1;
        }
    }
    assoc
}

/// One network drop. Matrices are indexed (user, AP).
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub config: NetworkConfig,
    pub ap_positions: Vec<Point>,
    pub user_positions: Vec<Point>,
    /// Large-scale fading α (linear gain).
    pub large_scale: DMatrix<f64>,
    /// Rician factors β.
    pub rician_factors: DMatrix<f64>,
    /// LoS angles of arrival θ (rad).
    pub aoas: DMatrix<f64>,
    /// LoS phase offsets ψ (rad), drawn once per drop.
    pub phase_offsets: DMatrix<f64>,
    /// 3-D link distances (m).
    pub distances: DMatrix<f64>,
    pub association: DMatrix<u8>,
}

impl Scenario {
    pub fn num_users(&self) -> usize {
        self.config.num_users
    }

    pub fn num_aps(&self) -> usize {
        self.config.num_aps
    }

    pub fn is_active(&self, user: usize, ap: usize) -> bool {
        self.association[(user, ap)] == 1
    }

    pub fn link(&self, user: usize, ap: usize) -> LinkState {
        LinkState {
            alpha: self.large_scale[(user, ap)],
            beta: self.rician_factors[(user, ap)],
            theta: self.aoas[(user, ap)],
            phase_offset: self.phase_offsets[(user, ap)],
            distance: self.distances[(user, ap)],
        }
    }

    /// Users served by AP `ap`.
    pub fn served_users(&self, ap: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_users()).filter(move |&k| self.is_active(k, ap))
    }
}

fn place_aps(config: &NetworkConfig, rng: &mut ChaCha8Rng) -> Vec<Point> {
    let side = config.area_side;
    let m = config.num_aps;
    match config.propagation.ap_layout {
        ApLayout::UniformRandom => (0..m)
            .map(|_| Point::new(rng.random_range(0.0..side), rng.random_range(0.0..side)))
            .collect(),
        ApLayout::JitteredGrid { jitter } => {
            let rows = ((m as f64).sqrt().floor() as usize).max(1);
            let cols = m.div_ceil(rows);
            let (px, py) = (side / cols as f64, side / rows as f64);
            (0..m)
                .map(|i| {
                    let (r, c) = (i / cols, i % cols);
                    let jx = if jitter > 0.0 { rng.random_range(-jitter..jitter) } else { 0.0 };
                    let jy = if jitter > 0.0 { rng.random_range(-jitter..jitter) } else { 0.0 };
                    let x = ((c as f64 + 0.5 + jx) * px).rem_euclid(side);
                    let y = ((r as f64 + 0.5 + jy) * py).rem_euclid(side);
                    Point::new(x, y)
                })
                .collect()
        }
    }
}

/// Generates one drop. Deterministic in `(config, seed)`; user positions and
/// the per-link draw sequence depend on the seed only, so a cell-free config
/// and its [`to_multicell`] image see the same users.
pub fn generate_drop(config: &NetworkConfig, seed: u64) -> Result<Scenario> {
    config.validate()?;
    let side = config.area_side;
    let (k, m) = (config.num_users, config.num_aps);

    let mut user_rng = stream_rng(seed, streams::USERS);
    let user_positions: Vec<Point> = (0..k)
        .map(|_| Point::new(user_rng.random_range(0.0..side), user_rng.random_range(0.0..side)))
        .collect();
    let ap_positions = place_aps(config, &mut stream_rng(seed, streams::APS));

    let mut link_rng = stream_rng(seed, streams::LINKS);
    let dh = config.propagation.ap_height - config.propagation.user_height;
    let shadow_std = config.propagation.shadowing_std_db;
    let mut large_scale = DMatrix::zeros(k, m);
    let mut rician_factors = DMatrix::zeros(k, m);
    let mut aoas = DMatrix::zeros(k, m);
    let mut phase_offsets = DMatrix::zeros(k, m);
    let mut distances = DMatrix::zeros(k, m);
    for user in 0..k {
        for ap in 0..m {
            let (dx, dy) = torus_displacement(ap_positions[ap], user_positions[user], side)?;
            let d2 = dx.hypot(dy).max(1e-3);
            let d3 = d2.hypot(dh);
            let p_los = channel::los_probability(d2)?;
            let is_los = link_rng.random::<f64>() < p_los;
            let psi = link_rng.random_range(0.0..std::f64::consts::TAU);
            let mut alpha = channel::path_loss(d3, is_los, config.carrier_frequency);
            if shadow_std > 0.0 {
                let z: f64 = StandardNormal.sample(&mut link_rng);
                alpha *= units::db_to_linear(shadow_std * z);
            }
            large_scale[(user, ap)] = alpha;
            rician_factors[(user, ap)] = channel::rician_factor(p_los)?;
            aoas[(user, ap)] = dy.atan2(dx);
            phase_offsets[(user, ap)] = psi;
            distances[(user, ap)] = d3;
        }
    }
    let association = associate_users(&large_scale, config.association_size);

    Ok(Scenario {
        config: config.clone(),
        ap_positions,
        user_positions,
        large_scale,
        rician_factors,
        aoas,
        phase_offsets,
        distances,
        association,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sar_power_cap_examples() {
        let lim = ExposureLimits::standard(3);
        lim.validate().unwrap();
        assert!((lim.sar_power_cap(0) - 0.01).abs() < 1e-15);
        assert!((lim.max_sar(1, 0.1) - 0.8).abs() < 1e-15);
        let mut two = ExposureLimits::uniform(1, 10.0, 0.08, 8.0, 2);
        two.sar_caps[(0, 1)] = 0.04;
        assert!((two.sar_power_cap(0) - 0.005).abs() < 1e-15);
        let mut bad = ExposureLimits::standard(2);
        bad.ipd_caps[1] = 0.0;
        assert!(bad.validate().is_err());
        assert_eq!(ExposureLimits::standard(2).resized(5), ExposureLimits::standard(5));
    }
    use proptest::prelude::*;

    fn small_config(k: usize, m: usize, l: usize, n: usize) -> NetworkConfig {
        let mut cfg = NetworkConfig {
            num_users: k,
            num_aps: m,
            antennas_per_ap: l,
            association_size: n,
            ..NetworkConfig::default()
        };
        cfg.reset_frame();
        cfg
    }

    #[test]
    fn torus_distance_examples() {
        let d = torus_distance(Point::new(50.0, 50.0), Point::new(950.0, 950.0), 1000.0).unwrap();
        assert!((d - 141.421_356_237_309_5).abs() < 1e-9);
        let p = Point::new(123.0, 456.0);
        assert_eq!(torus_distance(p, p, 1000.0).unwrap(), 0.0);
        let d = torus_distance(Point::new(0.0, 0.0), Point::new(500.0, 0.0), 1000.0).unwrap();
        assert!((d - 500.0).abs() < 1e-12);
    }

    #[test]
    fn torus_distance_rejects_out_of_area() {
        assert!(matches!(
            torus_distance(Point::new(1000.0, 0.0), Point::new(0.0, 0.0), 1000.0),
            Err(Error::OutOfArea { .. })
        ));
        assert!(torus_distance(Point::new(-1.0, 0.0), Point::new(0.0, 0.0), 1000.0).is_err());
    }

    #[test]
    fn association_examples() {
        let row = DMatrix::from_row_slice(1, 4, &[0.9, 0.5, 0.8, 0.1]);
        assert_eq!(associate_users(&row, 2).as_slice(), &[1, 0, 1, 0]);
        assert_eq!(associate_users(&row, 4).as_slice(), &[1, 1, 1, 1]);
        let tie = DMatrix::from_row_slice(1, 3, &[0.5, 0.5, 0.1]);
        assert_eq!(associate_users(&tie, 1).as_slice(), &[1, 0, 0]);
    }

    #[test]
    fn multicell_mapping_matches_fig3_numbers() {
        let cf = small_config(20, 40, 4, 5);
        let mc = to_multicell(&cf);
        assert_eq!(mc.num_aps, 4);
        assert_eq!(mc.antennas_per_ap, 40);
        assert_eq!(mc.association_size, 1);
        assert_eq!(mc.deployment_mode, DeploymentMode::MultiCell);
        assert!((mc.dl_power_budget - 10.0 * units::dbm_to_watts(23.0)).abs() < 1e-12);
        assert!((mc.dl_power_budget - 1.995_262_314_968_88).abs() < 1e-9);
        assert_eq!(mc.total_antennas(), cf.total_antennas());
        assert_eq!(mc.num_users, cf.num_users);
        assert_eq!(mc.bandwidth, cf.bandwidth);
        assert_eq!(mc.noise_psd, cf.noise_psd);
        assert_eq!(mc.ul_power_budget, cf.ul_power_budget);

        let mc = to_multicell(&small_config(14, 9, 3, 2));
        assert_eq!((mc.num_aps, mc.antennas_per_ap), (3, 9));
    }

    #[test]
    fn total_dl_power_is_conserved() {
        let cf = small_config(20, 40, 4, 5);
        let mc = to_multicell(&cf);
        let cf_total = cf.num_aps as f64 * cf.dl_power_budget;
        let mc_total = mc.num_aps as f64 * mc.dl_power_budget;
        assert!((cf_total - mc_total).abs() < 1e-12 * cf_total);
    }

    #[test]
    fn fig1_topology() {
        let cfg = small_config(14, 9, 3, 2);
        let s = generate_drop(&cfg, 7).unwrap();
        assert_eq!(s.user_positions.len(), 14);
        assert_eq!(s.ap_positions.len(), 9);
        for k in 0..14 {
            let row: u32 = (0..9).map(|m| s.association[(k, m)] as u32).sum();
            assert_eq!(row, 2);
        }
    }

    #[test]
    fn single_link_drop() {
        let s = generate_drop(&small_config(1, 1, 1, 1), 3).unwrap();
        assert_eq!(s.association.as_slice(), &[1]);
    }

    #[test]
    fn drops_are_deterministic() {
        let cfg = small_config(10, 16, 2, 5);
        assert_eq!(generate_drop(&cfg, 42).unwrap(), generate_drop(&cfg, 42).unwrap());
        assert_ne!(
            generate_drop(&cfg, 42).unwrap().user_positions,
            generate_drop(&cfg, 43).unwrap().user_positions
        );
    }

    #[test]
    fn multicell_drop_shares_users() {
        let cf = small_config(10, 16, 4, 5);
        let a = generate_drop(&cf, 9).unwrap();
        let b = generate_drop(&to_multicell(&cf), 9).unwrap();
        assert_eq!(a.user_positions, b.user_positions);
        for k in 0..10 {
            let row: u32 = (0..4).map(|m| b.association[(k, m)] as u32).sum();
            assert_eq!(row, 1);
        }
    }

    #[test]
    fn association_row_sums_over_many_drops() {
        let cf = small_config(8, 16, 2, 5);
        let mc = to_multicell(&cf);
        for seed in 0..1000 {
            for cfg in [&cf, &mc] {
                let s = generate_drop(cfg, seed).unwrap();
                for k in 0..cfg.num_users {
                    let row: u32 = (0..cfg.num_aps).map(|m| s.association[(k, m)] as u32).sum();
                    assert_eq!(row as usize, cfg.association_size);
                }
                assert!(s.large_scale.iter().all(|&a| a > 0.0));
                assert!(s.rician_factors.iter().all(|&b| b >= 0.0));
            }
        }
    }

    #[test]
    fn frame_split_follows_user_count() {
        let cfg = NetworkConfig::default();
        assert_eq!((cfg.pilot_length, cfg.dl_symbols, cfg.ul_symbols), (10, 95, 95));
        let cfg = cfg.with_num_users(40);
        assert_eq!((cfg.pilot_length, cfg.dl_symbols, cfg.ul_symbols), (20, 90, 90));
    }

    #[test]
    fn validation_rejects_bad_values() {
        let mut cfg = NetworkConfig::default();
        cfg.association_size = 41;
        assert!(cfg.validate().is_err());
        let mut cfg = NetworkConfig::default();
        cfg.ul_power_budget = -1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = NetworkConfig::default();
        cfg.dl_symbols = 150;
        assert!(cfg.validate().is_err());
    }

    fn point(side: f64) -> impl Strategy<Value = Point> {
        (0.0..side, 0.0..side).prop_map(|(x, y)| Point::new(x, y))
    }

    proptest! {
        #[test]
        fn torus_metric_axioms(p in point(1000.0), q in point(1000.0), r in point(1000.0)) {
            let side = 1000.0;
            let pq = torus_distance(p, q, side).unwrap();
            let qp = torus_distance(q, p, side).unwrap();
            let qr = torus_distance(q, r, side).unwrap();
            let pr = torus_distance(p, r, side).unwrap();
            prop_assert!((pq - qp).abs() < 1e-9);
            prop_assert!(pr <= pq + qr + 1e-9);
            prop_assert!(pq <= side * std::f64::consts::SQRT_2 / 2.0 + 1e-9);
        }

        #[test]
        fn multicell_conserves_antennas(m in 1usize..64, l in 1usize..16) {
            let cf = NetworkConfig { num_aps: m, antennas_per_ap: l, association_size: 1, ..NetworkConfig::default() };
            let mc = to_multicell(&cf);
            prop_assert_eq!(mc.total_antennas(), cf.total_antennas());
            let tot = |c: &NetworkConfig| c.num_aps as f64 * c.dl_power_budget;
            prop_assert!((tot(&mc) - tot(&cf)).abs() < 1e-12 * tot(&cf));
        }
    }
}
