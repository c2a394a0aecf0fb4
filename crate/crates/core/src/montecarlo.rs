//! Monte Carlo validation: SINR satisfaction under fresh CSI errors,
//! feasibility curves and the empty-cell power audit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{binomial_se, clopper_pearson};
use crate::error::{CoordError, Result};
use crate::experiment::Instance;
use crate::geometry::{achieved_sinr, CoordMode, SymbolDraw};
use crate::parallel::Execution;
use crate::scenario::{derive_seed, linear_to_db, CsiEstimate, Scenario};
use crate::schemes::{PrecoderSolution, Scheme, SchemeKind, SchemeOptions};

const TRIAL_STREAM: u64 = 5;
/// Floor for dB samples of a zero SINR.
pub const DB_FLOOR: f64 = -300.0;
/// Relative slack when comparing achieved SINR with its target.
pub const TARGET_SLACK: f64 = 1e-6;

pub fn coord_mode(scheme: Scheme) -> CoordMode {
    match scheme {
        Scheme::Ci(k) if !k.is_full() => CoordMode::Partial,
        _ => CoordMode::Full,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub scheme: Scheme,
    pub seed: u64,
    pub n_trials: usize,
    pub gamma_target_db: Vec<f64>,
    /// Fraction of trials with the user's SINR at or above its target.
    pub per_user_satisfaction: Vec<f64>,
    /// 95% Clopper–Pearson interval per user.
    pub per_user_ci: Vec<(f64, f64)>,
    /// Fraction of trials where every user meets its target.
    pub joint_satisfaction: f64,
    /// `[user][trial]`, floored at [`DB_FLOOR`].
    pub sinr_samples_db: Vec<Vec<f64>>,
    /// Worst shortfall below target over all users and trials (dB, >= 0).
    pub violation_max_db: f64,
}

impl MonteCarloReport {
    pub fn violation_fraction(&self, u: usize) -> f64 {
        1.0 - self.per_user_satisfaction[u]
    }

    pub fn standard_error(&self, u: usize) -> f64 {
        binomial_se(self.per_user_satisfaction[u], self.n_trials)
    }

    /// Satisfaction of user `u` re-evaluated against another target.
    pub fn satisfaction_at(&self, u: usize, gamma_db: f64) -> f64 {
        let thr = gamma_db + linear_to_db(1.0 - TARGET_SLACK);
        let s = &self.sinr_samples_db[u];
        s.iter().filter(|&&v| v >= thr).count() as f64 / s.len().max(1) as f64
    }
}

/// Evaluates `sol` on `n_trials` channels `h = ĥ + e` with fresh errors
/// from the estimate's model. Trial `t` draws from a seed derived from
/// `(seed, t)` only, so results do not depend on `exec`.
pub fn estimate_outage(
    s: &Scenario,
    csi: &CsiEstimate,
    draw: &SymbolDraw,
    sol: &PrecoderSolution,
    n_trials: usize,
    seed: u64,
    exec: Execution,
) -> Result<MonteCarloReport> {
    if n_trials < 100 {
        return Err(CoordError::config("n_trials", "at least 100 trials are required"));
    }
    let k = s.n_users();
    let targets: Vec<f64> = s.users.iter().map(|u| u.gamma()).collect();
    let mode = coord_mode(sol.scheme);
    let trials: Vec<Vec<f64>> = exec.map(n_trials, |t| {
        let Some(pre) = &sol.precoders else {
            return vec![0.0; k];
        };
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, TRIAL_STREAM, t as u64));
        let e = csi.sample_errors(&mut rng);
        let h = csi.h_hat.combine(&e, 1.0);
        achieved_sinr(&h, pre, draw, s, mode).unwrap_or_else(|_| vec![0.0; k])
    });
    let mut samples = vec![Vec::with_capacity(n_trials); k];
    let mut hits = vec![0usize; k];
    let mut joint = 0usize;
    let mut worst: f64 = 0.0;
    for tr in &trials {
        let mut all = true;
        for u in 0..k {
            let g = tr[u];
            let db = if g > 0.0 { linear_to_db(g).max(DB_FLOOR) } else { DB_FLOOR };
            samples[u].push(db);
            if g >= targets[u] * (1.0 - TARGET_SLACK) {
                hits[u] += 1;
            } else {
                all = false;
                worst = worst.max(s.users[u].gamma_db - db);
            }
        }
        if all {
            joint += 1;
        }
    }
    let n = n_trials as f64;
    Ok(MonteCarloReport {
        scheme: sol.scheme,
        seed,
        n_trials,
        gamma_target_db: s.users.iter().map(|u| u.gamma_db).collect(),
        per_user_satisfaction: hits.iter().map(|&h| h as f64 / n).collect(),
        per_user_ci: hits.iter().map(|&h| clopper_pearson(h, n_trials, 0.95)).collect(),
        joint_satisfaction: joint as f64 / n,
        sinr_samples_db: samples,
        violation_max_db: worst,
    })
}

/// Counts of samples per `bin_db`-wide bin, as `(lower edge, count)`.
/// Floored samples are left out.
pub fn histogram(samples_db: &[f64], bin_db: f64) -> Vec<(f64, usize)> {
    let v: Vec<f64> = samples_db.iter().copied().filter(|&x| x > DB_FLOOR).collect();
    if v.is_empty() || !(bin_db > 0.0) {
        return Vec::new();
    }
    let lo = (v.iter().copied().fold(f64::INFINITY, f64::min) / bin_db).floor();
    let hi = (v.iter().copied().fold(f64::NEG_INFINITY, f64::max) / bin_db).floor();
    let n = (hi - lo) as usize + 1;
    let mut counts = vec![0usize; n];
    for x in v {
        let i = ((x / bin_db).floor() - lo) as usize;
        counts[i.min(n - 1)] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| ((lo + i as f64) * bin_db, c))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityPoint {
    pub scheme: Scheme,
    pub gamma_db: f64,
    pub n_feasible: usize,
    pub n_total: usize,
}

impl FeasibilityPoint {
    pub fn probability(&self) -> f64 {
        self.n_feasible as f64 / self.n_total.max(1) as f64
    }
}

/// A solution is feasible when it solved to optimality within every
/// per-BS budget.
pub fn is_feasible(sol: &PrecoderSolution, p_max: f64) -> bool {
    sol.is_optimal() && sol.per_bs_power_w.iter().all(|&p| p <= p_max * (1.0 + 1e-6))
}

/// Feasibility probability per scheme and target over channel seeds
/// `0..n_seeds` (one symbol draw each).
pub fn feasibility_sweep(
    template: &Scenario,
    gamma_grid_db: &[f64],
    n_seeds: usize,
    schemes: &[Scheme],
    opts: &SchemeOptions,
    exec: Execution,
) -> Result<Vec<FeasibilityPoint>> {
    if gamma_grid_db.is_empty() {
        return Err(CoordError::config("grid", "must be non-empty"));
    }
    let mut out = Vec::new();
    for &g in gamma_grid_db {
        let mut s = template.clone();
        s.set_gamma_db(g);
        let flags: Vec<Result<Vec<bool>>> = exec.map(n_seeds, |seed| {
            let inst = Instance::generate(&s, seed as u64, 0)?;
            schemes
                .iter()
                .map(|&k| Ok(is_feasible(&inst.solve(k, opts)?, s.p_max)))
                .collect()
        });
        let mut counts = vec![0usize; schemes.len()];
        for f in flags {
            for (c, ok) in counts.iter_mut().zip(f?) {
                *c += ok as usize;
            }
        }
        for (i, &k) in schemes.iter().enumerate() {
            out.push(FeasibilityPoint {
                scheme: k,
                gamma_db: g,
                n_feasible: counts[i],
                n_total: n_seeds,
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SilentBsRow {
    pub scheme: Scheme,
    pub status: String,
    pub per_bs_power_w: Vec<f64>,
}

/// Per-BS transmit power of each scheme on one instance that has at least
/// one empty cell.
pub fn silent_bs_audit(inst: &Instance, schemes: &[Scheme], opts: &SchemeOptions) -> Result<Vec<SilentBsRow>> {
    if !inst.scenario.k_per_cell.contains(&0) {
        return Err(CoordError::config("k_users", "audit needs a cell without users"));
    }
    schemes
        .iter()
        .map(|&k| {
            let sol = inst.solve(k, opts)?;
            Ok(SilentBsRow {
                scheme: k,
                status: sol.status.as_str().to_string(),
                per_bs_power_w: sol.per_bs_power_w,
            })
        })
        .collect()
}

/// True for the schemes whose guarantee is a probability level `η`.
pub fn is_chance_scheme(scheme: Scheme) -> bool {
    matches!(
        scheme,
        Scheme::Ci(SchemeKind::FullCiProb | SchemeKind::PartialCiProb)
            | Scheme::Baseline(crate::schemes::BaselineKind::CbfProb)
    )
}
