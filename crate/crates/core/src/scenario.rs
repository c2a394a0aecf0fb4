//! Experiment configuration, cell layout, channel generation, CSI corruption
//! and statistical CSI.
//!
//! Users are flattened cell-major: global user `u` is user `k` of cell `i`
//! with `u = Σ_{c<i} K_c + k`. Channel tensors are indexed `[bs][user][antenna]`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{CoordError, Result};

/// A scalar applied to every entry, or one value per entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn expand(&self, n: usize, field: &str) -> Result<Vec<T>> {
        match self {
            OneOrMany::One(v) => Ok(vec![v.clone(); n]),
            OneOrMany::Many(v) if v.len() == n => Ok(v.clone()),
            OneOrMany::Many(v) => Err(CoordError::config(
                field,
                format!("expected {n} entries, got {}", v.len()),
            )),
        }
    }
}

/// How the configured CSI error std is interpreted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorScale {
    /// `σ` is relative to each link's own amplitude: the user's shared draw
    /// `ε` enters link `j` as `√L_jik·ε`.
    #[default]
    LinkRelative,
    /// `σ` is relative to the serving-link amplitude `√L_iik` on every link.
    Serving,
    /// `σ` is the absolute per-entry std in channel units.
    Absolute,
}

/// Whether one error vector per user is shared by all BS links.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorSharing {
    #[default]
    PerUser,
    PerLink,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    #[default]
    Uniform,
    /// Users clustered near the point where the occupied cells meet.
    Edge,
}

/// `PL(d) = intercept + slope·log10(d / 1 km)` dB, with `d >= d_min`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathLoss {
    pub intercept_db: f64,
    pub slope_db: f64,
    pub d_min_m: f64,
}

impl Default for PathLoss {
    fn default() -> Self {
        Self {
            intercept_db: 128.1,
            slope_db: 37.6,
            d_min_m: 10.0,
        }
    }
}

impl PathLoss {
    /// Linear power gain at distance `d_m` meters.
    pub fn gain(&self, d_m: f64) -> f64 {
        let d = if d_m < self.d_min_m {
            log::warn!("user at {d_m:.2} m from a BS, clamped to {} m", self.d_min_m);
            self.d_min_m
        } else {
            d_m
        };
        let db = self.intercept_db + self.slope_db * (d / 1000.0).log10();
        10f64.powf(-db / 10.0)
    }
}

/// Serialized experiment configuration. Every field has a default matching
/// the three-cell reference setup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_bs: usize,
    /// Users per cell: one count for every cell or one per cell.
    pub k_users: OneOrMany<usize>,
    pub m_antennas: usize,
    pub p_max: f64,
    pub noise_psd_dbm_hz: f64,
    pub bandwidth_hz: f64,
    pub carrier_hz: f64,
    pub psk_order: u32,
    pub sinr_targets_db: OneOrMany<f64>,
    pub eta: OneOrMany<f64>,
    pub delta: f64,
    pub csi_error_std: OneOrMany<f64>,
    pub csi_error_scale: ErrorScale,
    pub error_sharing: ErrorSharing,
    /// Radius of the disc around each BS that its users are drawn from.
    pub cell_radius_m: f64,
    /// Spacing of the default BS sites.
    pub inter_site_distance_m: f64,
    /// Users are kept at least this far from their serving BS.
    pub min_user_distance_m: f64,
    pub placement: Placement,
    /// Edge preset: fraction of the way from the network centroid toward
    /// the serving site where a cell's user cluster sits.
    pub edge_pull: f64,
    pub bs_positions: Option<Vec<[f64; 2]>>,
    /// Fixed user positions in global (cell-major) order.
    pub user_positions: Option<Vec<[f64; 2]>>,
    pub path_loss: PathLoss,
    pub chi_c: u64,
    pub chi_s: u64,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_bs: 3,
            k_users: OneOrMany::One(3),
            m_antennas: 4,
            p_max: 100.0,
            noise_psd_dbm_hz: -174.0,
            bandwidth_hz: 1e6,
            carrier_hz: 2e9,
            psk_order: 4,
            sinr_targets_db: OneOrMany::One(20.0),
            eta: OneOrMany::One(0.8),
            delta: 0.99,
            csi_error_std: OneOrMany::One(0.01),
            csi_error_scale: ErrorScale::LinkRelative,
            error_sharing: ErrorSharing::PerUser,
            cell_radius_m: 200.0,
            inter_site_distance_m: 1500.0,
            min_user_distance_m: 35.0,
            placement: Placement::Uniform,
            edge_pull: 0.3,
            bs_positions: None,
            user_positions: None,
            path_loss: PathLoss::default(),
            chi_c: 10,
            chi_s: 140,
            rng_seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct User {
    pub cell: usize,
    pub index_in_cell: usize,
    pub position: [f64; 2],
    pub gamma_db: f64,
    pub eta: f64,
    /// Configured CSI error std (relative or absolute per `error_scale`).
    pub sigma: f64,
}

impl User {
    pub fn gamma(&self) -> f64 {
        db_to_linear(self.gamma_db)
    }
}

/// Validated scenario with derived quantities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub n_bs: usize,
    pub k_per_cell: Vec<usize>,
    pub m_antennas: usize,
    pub p_max: f64,
    /// Noise power in watts.
    pub sigma_n2: f64,
    /// PSK half-angle `π/Q`.
    pub theta: f64,
    pub delta: f64,
    pub bs_positions: Vec<[f64; 2]>,
    pub users: Vec<User>,
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Mixes a base seed with a stream tag and an index (splitmix64 finalizer),
/// so derived streams are independent of evaluation order.
pub fn derive_seed(base: u64, tag: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const LAYOUT_STREAM: u64 = 1;
const CHANNEL_STREAM: u64 = 2;
const ERROR_STREAM: u64 = 3;

/// Parses a JSON configuration and resolves it.
pub fn load_scenario(text: &str) -> Result<Scenario> {
    let cfg: ScenarioConfig =
        serde_json::from_str(text).map_err(|e| CoordError::Parse(e.to_string()))?;
    Scenario::from_config(cfg)
}

/// Default BS sites: one at the origin, two or three on a circle with
/// inter-site distance `isd`, up to seven as a center plus a hexagonal ring.
pub fn default_bs_positions(n: usize, isd: f64) -> Result<Vec<[f64; 2]>> {
    match n {
        0 => Err(CoordError::config("n_bs", "must be at least 1")),
        1 => Ok(vec![[0.0, 0.0]]),
        2 | 3 => {
            let r = isd / (2.0 * (PI / n as f64).sin());
            Ok((0..n)
                .map(|j| {
                    let a = PI / 2.0 + 2.0 * PI * j as f64 / n as f64;
                    [r * a.cos(), r * a.sin()]
                })
                .collect())
        }
        4..=7 => {
            let mut v = vec![[0.0, 0.0]];
            for j in 0..n - 1 {
                let a = PI / 6.0 + PI / 3.0 * j as f64;
                v.push([isd * a.cos(), isd * a.sin()]);
            }
            Ok(v)
        }
        _ => Err(CoordError::config(
            "bs_positions",
            "more than 7 BSs require explicit positions",
        )),
    }
}

impl Scenario {
    pub fn from_config(cfg: ScenarioConfig) -> Result<Self> {
        if cfg.n_bs == 0 {
            return Err(CoordError::config("n_bs", "must be at least 1"));
        }
        if cfg.m_antennas == 0 {
            return Err(CoordError::config("m_antennas", "must be at least 1"));
        }
        if !(cfg.p_max > 0.0) {
            return Err(CoordError::config("p_max", "must be positive"));
        }
        if cfg.psk_order < 3 {
            return Err(CoordError::config(
                "psk_order",
                "must be at least 3 so that 0 < π/Q < π/2",
            ));
        }
        if !(cfg.delta > 0.0 && cfg.delta < 1.0) {
            return Err(CoordError::config("delta", "must lie in (0, 1)"));
        }
        if !(cfg.bandwidth_hz > 0.0) || !cfg.noise_psd_dbm_hz.is_finite() {
            return Err(CoordError::config("bandwidth_hz", "noise power must be positive"));
        }
        if !(cfg.cell_radius_m > 0.0) || cfg.min_user_distance_m >= cfg.cell_radius_m {
            return Err(CoordError::config(
                "cell_radius_m",
                "must be positive and exceed min_user_distance_m",
            ));
        }
        if !(cfg.inter_site_distance_m > 0.0) {
            return Err(CoordError::config("inter_site_distance_m", "must be positive"));
        }
        if !(0.0..=1.0).contains(&cfg.edge_pull) {
            return Err(CoordError::config("edge_pull", "must lie in [0, 1]"));
        }
        let k_per_cell = cfg.k_users.expand(cfg.n_bs, "k_users")?;
        let n_users: usize = k_per_cell.iter().sum();
        let gammas = cfg.sinr_targets_db.expand(n_users, "sinr_targets_db")?;
        let etas = cfg.eta.expand(n_users, "eta")?;
        let sigmas = cfg.csi_error_std.expand(n_users, "csi_error_std")?;
        for &e in &etas {
            if !(e > 0.0 && e < 1.0) {
                return Err(CoordError::config("eta", format!("{e} not in (0, 1)")));
            }
        }
        for &s in &sigmas {
            if !(s >= 0.0) || !s.is_finite() {
                return Err(CoordError::config("csi_error_std", format!("{s} is not >= 0")));
            }
        }
        for &g in &gammas {
            if !g.is_finite() {
                return Err(CoordError::config("sinr_targets_db", "must be finite"));
            }
        }
        let bs_positions = match &cfg.bs_positions {
            Some(p) if p.len() == cfg.n_bs => p.clone(),
            Some(p) => {
                return Err(CoordError::config(
                    "bs_positions",
                    format!("expected {} positions, got {}", cfg.n_bs, p.len()),
                ))
            }
            None => default_bs_positions(cfg.n_bs, cfg.inter_site_distance_m)?,
        };
        if let Some(p) = &cfg.user_positions {
            if p.len() != n_users {
                return Err(CoordError::config(
                    "user_positions",
                    format!("expected {n_users} positions, got {}", p.len()),
                ));
            }
        }
        let sigma_n2 = 10f64.powf((cfg.noise_psd_dbm_hz - 30.0) / 10.0) * cfg.bandwidth_hz;
        let mut users = Vec::with_capacity(n_users);
        for (cell, &k) in k_per_cell.iter().enumerate() {
            for index_in_cell in 0..k {
                let u = users.len();
                users.push(User {
                    cell,
                    index_in_cell,
                    position: [0.0, 0.0],
                    gamma_db: gammas[u],
                    eta: etas[u],
                    sigma: sigmas[u],
                });
            }
        }
        let mut s = Scenario {
            n_bs: cfg.n_bs,
            m_antennas: cfg.m_antennas,
            p_max: cfg.p_max,
            sigma_n2,
            theta: PI / cfg.psk_order as f64,
            delta: cfg.delta,
            k_per_cell,
            bs_positions,
            users,
            config: cfg,
        };
        s.place_users(s.config.rng_seed);
        Ok(s)
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn sigma_n(&self) -> f64 {
        self.sigma_n2.sqrt()
    }

    pub fn tan_theta(&self) -> f64 {
        self.theta.tan()
    }

    /// Global index of user `k` in cell `i`.
    pub fn user_index(&self, i: usize, k: usize) -> usize {
        self.k_per_cell[..i].iter().sum::<usize>() + k
    }

    /// Global user indices served by BS `i`.
    pub fn cell_users(&self, i: usize) -> std::ops::Range<usize> {
        let start = self.user_index(i, 0);
        start..start + self.k_per_cell[i]
    }

    pub fn distance(&self, j: usize, u: usize) -> f64 {
        let b = self.bs_positions[j];
        let p = self.users[u].position;
        ((b[0] - p[0]).powi(2) + (b[1] - p[1]).powi(2)).sqrt()
    }

    /// Large-scale power gain `L` from BS `j` to user `u`.
    pub fn path_gain(&self, j: usize, u: usize) -> f64 {
        self.config.path_loss.gain(self.distance(j, u))
    }

    /// Absolute per-entry CSI error std of user `u` on its serving link.
    pub fn error_std(&self, u: usize) -> f64 {
        let user = &self.users[u];
        match self.config.csi_error_scale {
            ErrorScale::LinkRelative | ErrorScale::Serving => user.sigma * self.path_gain(user.cell, u).sqrt(),
            ErrorScale::Absolute => user.sigma,
        }
    }

    /// Error amplitude of link `(j, u)` relative to the serving link,
    /// indexed `[bs][user]`.
    pub fn link_error_scales(&self) -> Vec<Vec<f64>> {
        (0..self.n_bs)
            .map(|j| {
                (0..self.n_users())
                    .map(|u| match self.config.csi_error_scale {
                        ErrorScale::LinkRelative => {
                            (self.path_gain(j, u) / self.path_gain(self.users[u].cell, u)).sqrt()
                        }
                        _ => 1.0,
                    })
                    .collect()
            })
            .collect()
    }

    /// Redraws user positions from `seed` unless positions are fixed in the
    /// configuration.
    pub fn place_users(&mut self, seed: u64) {
        if let Some(p) = &self.config.user_positions {
            for (u, pos) in p.iter().enumerate() {
                self.users[u].position = *pos;
            }
            return;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, LAYOUT_STREAM, 0));
        let r_max = self.config.cell_radius_m;
        let r_min = self.config.min_user_distance_m;
        let centroid = {
            let occupied: Vec<usize> =
                (0..self.n_bs).filter(|&i| self.k_per_cell[i] > 0).collect();
            let n = occupied.len().max(1) as f64;
            let mut c = [0.0, 0.0];
            for &i in &occupied {
                c[0] += self.bs_positions[i][0] / n;
                c[1] += self.bs_positions[i][1] / n;
            }
            c
        };
        for u in 0..self.users.len() {
            let b = self.bs_positions[self.users[u].cell];
            let pos = match self.config.placement {
                Placement::Uniform => {
                    let r = rng.random_range(r_min * r_min..r_max * r_max).sqrt();
                    let a = rng.random_range(0.0..2.0 * PI);
                    [b[0] + r * a.cos(), b[1] + r * a.sin()]
                }
                Placement::Edge => {
                    let f = self.config.edge_pull;
                    let c = [
                        centroid[0] + f * (b[0] - centroid[0]),
                        centroid[1] + f * (b[1] - centroid[1]),
                    ];
                    let r = 50.0 * rng.random_range(0.0f64..1.0).sqrt();
                    let a = rng.random_range(0.0..2.0 * PI);
                    [c[0] + r * a.cos(), c[1] + r * a.sin()]
                }
            };
            self.users[u].position = pos;
        }
    }

    pub fn with_user_layout(&self, seed: u64) -> Scenario {
        let mut s = self.clone();
        s.place_users(seed);
        s
    }

    pub fn set_gamma_db(&mut self, g: f64) {
        self.users.iter_mut().for_each(|u| u.gamma_db = g);
        self.config.sinr_targets_db = OneOrMany::One(g);
    }

    pub fn set_sigma(&mut self, s: f64) {
        self.users.iter_mut().for_each(|u| u.sigma = s);
        self.config.csi_error_std = OneOrMany::One(s);
    }

    pub fn set_eta(&mut self, e: f64) {
        self.users.iter_mut().for_each(|u| u.eta = e);
        self.config.eta = OneOrMany::One(e);
    }
}

/// Complex channel tensor `h[bs][user][antenna]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSet {
    pub h: Vec<Vec<Vec<Complex64>>>,
}

impl ChannelSet {
    pub fn zeros(n_bs: usize, n_users: usize, m: usize) -> Self {
        Self {
            h: vec![vec![vec![Complex64::new(0.0, 0.0); m]; n_users]; n_bs],
        }
    }

    pub fn n_bs(&self) -> usize {
        self.h.len()
    }

    pub fn n_users(&self) -> usize {
        self.h.first().map_or(0, |v| v.len())
    }

    pub fn m(&self) -> usize {
        self.h
            .first()
            .and_then(|v| v.first())
            .map_or(0, |v| v.len())
    }

    pub fn link(&self, j: usize, u: usize) -> &[Complex64] {
        &self.h[j][u]
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            h: self
                .h
                .iter()
                .map(|b| b.iter().map(|v| v.iter().map(|x| x * alpha).collect()).collect())
                .collect(),
        }
    }

    /// Entrywise `self + sign·other`.
    pub fn combine(&self, other: &ChannelSet, sign: f64) -> Self {
        Self {
            h: self
                .h
                .iter()
                .zip(&other.h)
                .map(|(a, b)| {
                    a.iter()
                        .zip(b)
                        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q * sign).collect())
                        .collect()
                })
                .collect(),
        }
    }

    /// Keeps only serving links (`j == cell(u)`), zeroing cross-cell channels.
    pub fn serving_only(&self, s: &Scenario) -> Self {
        let mut c = self.clone();
        for (j, b) in c.h.iter_mut().enumerate() {
            for (u, v) in b.iter_mut().enumerate() {
                if s.users[u].cell != j {
                    v.iter_mut().for_each(|x| *x = Complex64::new(0.0, 0.0));
                }
            }
        }
        c
    }
}

/// Estimated channels `ĥ = h − e`. The error on link `(j, u)` has
/// per-entry std `sigma[u]·link_scale[j][u]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsiEstimate {
    pub h_hat: ChannelSet,
    /// Serving-link error std per user.
    pub sigma: Vec<f64>,
    pub link_scale: Vec<Vec<f64>>,
    pub sharing: ErrorSharing,
}

impl CsiEstimate {
    /// Perfect knowledge of `c`.
    pub fn exact(c: &ChannelSet, s: &Scenario) -> Self {
        Self {
            h_hat: c.clone(),
            sigma: vec![0.0; c.n_users()],
            link_scale: vec![vec![1.0; c.n_users()]; c.n_bs()],
            sharing: s.config.error_sharing,
        }
    }

    /// Treats `h_hat` as the estimate with the scenario's error model.
    pub fn assumed(h_hat: &ChannelSet, s: &Scenario) -> Self {
        Self {
            h_hat: h_hat.clone(),
            sigma: (0..s.n_users()).map(|u| s.error_std(u)).collect(),
            link_scale: s.link_error_scales(),
            sharing: s.config.error_sharing,
        }
    }

    /// Absolute error std on link `(j, u)`.
    pub fn link_std(&self, j: usize, u: usize) -> f64 {
        self.sigma[u] * self.link_scale[j][u]
    }

    /// Draws a fresh error tensor from this estimate's model.
    pub fn sample_errors(&self, rng: &mut impl Rng) -> ChannelSet {
        let (n_bs, m) = (self.h_hat.n_bs(), self.h_hat.m());
        sample_errors(rng, &self.sigma, Some(&self.link_scale), n_bs, m, self.sharing)
    }
}

fn cn(rng: &mut impl Rng, std: f64) -> Complex64 {
    let a: f64 = rng.sample(StandardNormal);
    let b: f64 = rng.sample(StandardNormal);
    Complex64::new(a, b) * (std * std::f64::consts::FRAC_1_SQRT_2)
}

/// `h_jik = √L(d_jik)·g` with `g ~ CN(0, I_M)`.
pub fn generate_channels(s: &Scenario, seed: u64) -> ChannelSet {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, CHANNEL_STREAM, 0));
    let mut c = ChannelSet::zeros(s.n_bs, s.n_users(), s.m_antennas);
    for j in 0..s.n_bs {
        for u in 0..s.n_users() {
            let amp = s.path_gain(j, u).sqrt();
            for m in 0..s.m_antennas {
                c.h[j][u][m] = cn(&mut rng, amp);
            }
        }
    }
    c
}

/// Draws one error tensor `e[bs][user]` with per-user stds `sigma`, scaled
/// per link by `scale[bs][user]` when given. Under [`ErrorSharing::PerUser`]
/// one draw per user is shared by every BS.
pub fn sample_errors(
    rng: &mut impl Rng,
    sigma: &[f64],
    scale: Option<&[Vec<f64>]>,
    n_bs: usize,
    m: usize,
    sharing: ErrorSharing,
) -> ChannelSet {
    let n_users = sigma.len();
    let mut e = ChannelSet::zeros(n_bs, n_users, m);
    let sc = |j: usize, u: usize| scale.map_or(1.0, |s| s[j][u]);
    for (u, &sd) in sigma.iter().enumerate() {
        match sharing {
            ErrorSharing::PerUser => {
                let v: Vec<Complex64> = (0..m).map(|_| cn(rng, sd)).collect();
                for j in 0..n_bs {
                    let f = sc(j, u);
                    e.h[j][u] = v.iter().map(|x| x * f).collect();
                }
            }
            ErrorSharing::PerLink => {
                for j in 0..n_bs {
                    let f = sc(j, u);
                    for m_ in 0..m {
                        e.h[j][u][m_] = cn(rng, sd * f);
                    }
                }
            }
        }
    }
    e
}

/// `ĥ = h − e` with `e` drawn from the scenario's error model.
pub fn corrupt_csi(c: &ChannelSet, s: &Scenario, seed: u64) -> CsiEstimate {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, ERROR_STREAM, 0));
    let sigma: Vec<f64> = (0..s.n_users()).map(|u| s.error_std(u)).collect();
    let link_scale = s.link_error_scales();
    let e = sample_errors(&mut rng, &sigma, Some(&link_scale), c.n_bs(), c.m(), s.config.error_sharing);
    CsiEstimate {
        h_hat: c.combine(&e, -1.0),
        sigma,
        link_scale,
        sharing: s.config.error_sharing,
    }
}

/// Second-order statistics of one link: `R = u uᴴ + σ² I`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkStatistics {
    pub r: DMatrix<Complex64>,
    pub mean: Vec<Complex64>,
    pub sigma2_white: f64,
}

/// Statistics for every (BS, user) link, indexed `[bs][user]`.
#[derive(Clone, Debug, PartialEq)]
pub struct StatisticalCsi {
    pub links: Vec<Vec<LinkStatistics>>,
}

impl StatisticalCsi {
    pub fn r(&self, j: usize, u: usize) -> &DMatrix<Complex64> {
        &self.links[j][u].r
    }

    /// All-zero statistics (no cross-cell knowledge needed).
    pub fn zeros(n_bs: usize, n_users: usize, m: usize) -> Self {
        let z = LinkStatistics {
            r: DMatrix::zeros(m, m),
            mean: vec![Complex64::new(0.0, 0.0); m],
            sigma2_white: 0.0,
        };
        Self {
            links: vec![vec![z; n_users]; n_bs],
        }
    }
}

pub enum StatMode<'a> {
    /// Zero-mean fading: `R = L·I`.
    Analytic,
    /// Sample correlation over the given realizations.
    Sample(&'a [ChannelSet]),
}

/// `(1/n)·Σ h hᴴ` projected onto the PSD cone.
pub fn sample_correlation(samples: &[&[Complex64]]) -> DMatrix<Complex64> {
    let m = samples.first().map_or(0, |h| h.len());
    let mut r = DMatrix::<Complex64>::zeros(m, m);
    for h in samples {
        let v = DMatrix::from_column_slice(m, 1, h);
        r += &v * v.adjoint();
    }
    r /= Complex64::new(samples.len().max(1) as f64, 0.0);
    project_psd(&r)
}

/// Nearest Hermitian PSD matrix in Frobenius norm.
pub fn project_psd(r: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let h = (r + r.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(h.clone());
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return h;
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| Complex64::new(l.max(0.0), 0.0)));
    let v = &eig.eigenvectors;
    let p = v * d * v.adjoint();
    (&p + p.adjoint()) * Complex64::new(0.5, 0.0)
}

pub fn build_statistical_csi(s: &Scenario, mode: StatMode) -> Result<StatisticalCsi> {
    let m = s.m_antennas;
    let mut links = Vec::with_capacity(s.n_bs);
    for j in 0..s.n_bs {
        let mut row = Vec::with_capacity(s.n_users());
        for u in 0..s.n_users() {
            let stat = match &mode {
                StatMode::Analytic => {
                    let l = s.path_gain(j, u);
                    LinkStatistics {
                        r: DMatrix::identity(m, m) * Complex64::new(l, 0.0),
                        mean: vec![Complex64::new(0.0, 0.0); m],
                        sigma2_white: l,
                    }
                }
                StatMode::Sample(window) => {
                    if window.len() < m {
                        return Err(CoordError::Insufficient(format!(
                            "sample statistics need at least {m} realizations, got {}",
                            window.len()
                        )));
                    }
                    let samples: Vec<&[Complex64]> = window.iter().map(|c| c.link(j, u)).collect();
                    let r = sample_correlation(&samples);
                    let n = window.len() as f64;
                    let mean: Vec<Complex64> = (0..m)
                        .map(|a| samples.iter().map(|h| h[a]).sum::<Complex64>() / n)
                        .collect();
                    let mm: f64 = mean.iter().map(|x| x.norm_sqr()).sum();
                    let tr: f64 = (0..m).map(|a| r[(a, a)].re).sum();
                    LinkStatistics {
                        r,
                        mean,
                        sigma2_white: ((tr - mm) / m as f64).max(0.0),
                    }
                }
            };
            row.push(stat);
        }
        links.push(row);
    }
    Ok(StatisticalCsi { links })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_power_from_psd_and_bandwidth() {
        let s = Scenario::from_config(ScenarioConfig::default()).unwrap();
        let expect = 10f64.powf(-14.4);
        assert!((s.sigma_n2 - expect).abs() <= 1e-12 * expect);
        assert!((s.sigma_n2 - 3.981e-15).abs() < 1e-18);
        assert!((s.tan_theta() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_fields_are_named() {
        let bad = r#"{"eta": 1.2}"#;
        match load_scenario(bad) {
            Err(CoordError::Config { field, .. }) => assert_eq!(field, "eta"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            load_scenario(r#"{"n_bs": 0}"#),
            Err(CoordError::Config { .. })
        ));
        assert!(matches!(load_scenario("{"), Err(CoordError::Parse(_))));
        assert!(matches!(
            load_scenario(r#"{"k_users": [1, 2]}"#),
            Err(CoordError::Config { .. })
        ));
    }

    #[test]
    fn three_sites_are_one_isd_apart() {
        let p = default_bs_positions(3, 1500.0).unwrap();
        let d = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        for (a, b) in [(0, 1), (1, 2), (0, 2)] {
            assert!((d(p[a], p[b]) - 1500.0).abs() < 1e-9);
        }
    }

    #[test]
    fn users_stay_in_their_disc() {
        let s = Scenario::from_config(ScenarioConfig::default()).unwrap();
        for u in 0..s.n_users() {
            let d = s.distance(s.users[u].cell, u);
            assert!((35.0..=200.0).contains(&d), "{d}");
        }
    }

    #[test]
    fn per_link_errors_differ_across_bs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = sample_errors(&mut rng, &[1.0], None, 2, 3, ErrorSharing::PerLink);
        assert_ne!(e.h[0][0], e.h[1][0]);
        let e = sample_errors(&mut rng, &[1.0], None, 2, 3, ErrorSharing::PerUser);
        assert_eq!(e.h[0][0], e.h[1][0]);
    }
}
