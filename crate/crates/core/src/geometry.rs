//! Symbol-phase rotations, the constructive-interference region and the
//! achieved-SINR metric.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoordError, Result};
use crate::scenario::{derive_seed, ChannelSet, Scenario};

const SYMBOL_STREAM: u64 = 4;

/// One PSK symbol per user (unit amplitude), in global user order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolDraw {
    pub order: u32,
    pub index: Vec<u32>,
}

impl SymbolDraw {
    pub fn uniform(n_users: usize, order: u32) -> Self {
        Self {
            order,
            index: vec![0; n_users],
        }
    }

    pub fn random(s: &Scenario, seed: u64, draw: u64) -> Self {
        let order = s.config.psk_order;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, SYMBOL_STREAM, draw));
        Self {
            order,
            index: (0..s.n_users()).map(|_| rng.random_range(0..order)).collect(),
        }
    }

    pub fn phase(&self, u: usize) -> f64 {
        2.0 * PI * self.index[u] as f64 / self.order as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoordMode {
    /// All interference is designed against one network reference symbol.
    Full,
    /// Intra-cell interference is constructive, inter-cell is suppressed.
    Partial,
}

/// Channels rotated onto the reference symbol(s).
#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveChannels {
    pub h: ChannelSet,
    pub mode: CoordMode,
    /// Reference phase per BS (equal for all BSs in full mode).
    pub reference: Vec<f64>,
}

fn rot(c: &[Complex64], phase: f64) -> Vec<Complex64> {
    let z = Complex64::from_polar(1.0, phase);
    c.iter().map(|x| x * z).collect()
}

/// `h̃_jik = h_jik·e^{j(φ_ref − φ_ik)}` with the first user as reference.
pub fn rotate_full(c: &ChannelSet, d: &SymbolDraw) -> EffectiveChannels {
    let r = if d.index.is_empty() { 0.0 } else { d.phase(0) };
    let h = c
        .h
        .iter()
        .map(|b| b.iter().enumerate().map(|(u, v)| rot(v, r - d.phase(u))).collect())
        .collect();
    EffectiveChannels {
        h: ChannelSet { h },
        mode: CoordMode::Full,
        reference: vec![r; c.n_bs()],
    }
}

/// Serving links rotate by `φ_i1 − φ_ik`; a cross link from BS `j` rotates
/// by `φ_j1 − φ_jk`, or not at all when cell `j` has no user `k`.
pub fn rotate_partial(c: &ChannelSet, d: &SymbolDraw, s: &Scenario) -> EffectiveChannels {
    let first = |j: usize| -> Option<usize> { (s.k_per_cell[j] > 0).then(|| s.user_index(j, 0)) };
    let reference: Vec<f64> = (0..s.n_bs)
        .map(|j| first(j).map_or(0.0, |u| d.phase(u)))
        .collect();
    let mut h = c.h.clone();
    for (j, b) in h.iter_mut().enumerate() {
        for (u, v) in b.iter_mut().enumerate() {
            let k = s.users[u].index_in_cell;
            let phase = if k < s.k_per_cell[j] {
                reference[j] - d.phase(s.user_index(j, k))
            } else {
                0.0
            };
            *v = rot(v, phase);
        }
    }
    EffectiveChannels {
        h: ChannelSet { h },
        mode: CoordMode::Partial,
        reference,
    }
}

/// Largest SINR target met by the noiseless point `r`:
/// `max(0, Re r − |Im r|/tanθ)² / σ_n²`.
pub fn ci_margin(r: Complex64, theta: f64, sigma_n: f64) -> f64 {
    let m = (r.re - r.im.abs() / theta.tan()).max(0.0);
    m * m / (sigma_n * sigma_n)
}

/// Transmit precoders in physical units (√W).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Precoders {
    /// One symbol-level precoder per BS.
    Multicast(Vec<Vec<Complex64>>),
    /// One beam per user, split into per-BS blocks (`[user][bs]`).
    PerUser(Vec<Vec<Vec<Complex64>>>),
}

impl Precoders {
    pub fn per_bs_power(&self) -> Vec<f64> {
        let n2 = |v: &[Complex64]| v.iter().map(|x| x.norm_sqr()).sum::<f64>();
        match self {
            Precoders::Multicast(w) => w.iter().map(|v| n2(v)).collect(),
            Precoders::PerUser(v) => {
                let n_bs = v.first().map_or(0, |b| b.len());
                (0..n_bs).map(|j| v.iter().map(|b| n2(&b[j])).sum()).collect()
            }
        }
    }

    pub fn total_power(&self) -> f64 {
        self.per_bs_power().iter().sum()
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let sc = |v: &Vec<Complex64>| v.iter().map(|x| x * alpha).collect::<Vec<_>>();
        match self {
            Precoders::Multicast(w) => Precoders::Multicast(w.iter().map(sc).collect()),
            Precoders::PerUser(v) => {
                Precoders::PerUser(v.iter().map(|b| b.iter().map(sc).collect()).collect())
            }
        }
    }
}

fn dot(h: &[Complex64], w: &[Complex64]) -> Complex64 {
    h.iter().zip(w).map(|(a, b)| a * b).sum()
}

/// Achieved SINR (linear) per user on channels `c`.
///
/// Multicast precoders use the CI metric: full mode rotates every link onto
/// the network reference; partial mode uses the serving link as the CI
/// signal and counts cross-cell terms as interference. Per-user beams use
/// the classical signal-to-interference-plus-noise ratio.
pub fn achieved_sinr(
    c: &ChannelSet,
    pre: &Precoders,
    d: &SymbolDraw,
    s: &Scenario,
    mode: CoordMode,
) -> Result<Vec<f64>> {
    let sigma_n = s.sigma_n();
    match pre {
        Precoders::Multicast(w) => {
            if w.len() != c.n_bs() {
                return Err(CoordError::Shape(format!(
                    "{} precoders for {} BSs",
                    w.len(),
                    c.n_bs()
                )));
            }
            match mode {
                CoordMode::Full => {
                    let eff = rotate_full(c, d);
                    Ok((0..c.n_users())
                        .map(|u| {
                            let r: Complex64 = (0..c.n_bs()).map(|j| dot(eff.h.link(j, u), &w[j])).sum();
                            ci_margin(r, s.theta, sigma_n)
                        })
                        .collect())
                }
                CoordMode::Partial => {
                    let eff = rotate_partial(c, d, s);
                    Ok((0..c.n_users())
                        .map(|u| {
                            let i = s.users[u].cell;
                            let r = dot(eff.h.link(i, u), &w[i]);
                            let m = (r.re - r.im.abs() / s.theta.tan()).max(0.0);
                            let interf: f64 = (0..c.n_bs())
                                .filter(|&j| j != i)
                                .map(|j| dot(eff.h.link(j, u), &w[j]).norm_sqr())
                                .sum();
                            m * m / (s.sigma_n2 + interf)
                        })
                        .collect())
                }
            }
        }
        Precoders::PerUser(v) => {
            if v.len() != c.n_users() {
                return Err(CoordError::Shape(format!(
                    "{} beams for {} users",
                    v.len(),
                    c.n_users()
                )));
            }
            Ok((0..c.n_users())
                .map(|u| {
                    let gain = |l: usize| -> f64 {
                        (0..c.n_bs())
                            .map(|j| dot(c.link(j, u), &v[l][j]))
                            .sum::<Complex64>()
                            .norm_sqr()
                    };
                    let interf: f64 = (0..v.len()).filter(|&l| l != u).map(gain).sum();
                    gain(u) / (s.sigma_n2 + interf)
                })
                .collect())
        }
    }
}
