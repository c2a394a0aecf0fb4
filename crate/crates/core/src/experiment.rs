//! Random problem instances and batched runs over sweep grids.

use serde::{Deserialize, Serialize};

use crate::error::{CoordError, Result};
use crate::geometry::SymbolDraw;
use crate::parallel::Execution;
use crate::scenario::{
    build_statistical_csi, corrupt_csi, generate_channels, ChannelSet, CsiEstimate, Scenario,
    StatMode, StatisticalCsi,
};
use crate::schemes::{solve_scheme, PrecoderSolution, Scheme, SchemeInput, SchemeOptions};

/// One channel realization with its estimate and a symbol draw.
#[derive(Clone, Debug)]
pub struct Instance {
    pub scenario: Scenario,
    pub truth: ChannelSet,
    pub csi: CsiEstimate,
    pub draw: SymbolDraw,
    pub stat: StatisticalCsi,
    pub channel_seed: u64,
    pub symbol_draw: u64,
}

impl Instance {
    /// Places users and draws channels from `channel_seed`; the symbol
    /// vector is the `symbol_draw`-th draw for that seed.
    pub fn generate(template: &Scenario, channel_seed: u64, symbol_draw: u64) -> Result<Self> {
        let scenario = template.with_user_layout(channel_seed);
        let truth = generate_channels(&scenario, channel_seed);
        let csi = corrupt_csi(&truth, &scenario, channel_seed);
        let draw = SymbolDraw::random(&scenario, channel_seed, symbol_draw);
        let stat = build_statistical_csi(&scenario, StatMode::Analytic)?;
        Ok(Self {
            scenario,
            truth,
            csi,
            draw,
            stat,
            channel_seed,
            symbol_draw,
        })
    }

    /// Same channels and symbols, with the estimate replaced.
    pub fn with_csi(&self, csi: CsiEstimate) -> Self {
        Self { csi, ..self.clone() }
    }

    pub fn input(&self) -> SchemeInput<'_> {
        SchemeInput {
            scenario: &self.scenario,
            truth: &self.truth,
            csi: &self.csi,
            draw: &self.draw,
            stat: Some(&self.stat),
        }
    }

    pub fn solve(&self, scheme: Scheme, opts: &SchemeOptions) -> Result<PrecoderSolution> {
        solve_scheme(scheme, &self.input(), opts)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    GammaDb,
    SigmaE,
    KUsers,
}

impl std::str::FromStr for SweepAxis {
    type Err = CoordError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gamma_db" => Ok(SweepAxis::GammaDb),
            "sigma_e" => Ok(SweepAxis::SigmaE),
            "k_users" => Ok(SweepAxis::KUsers),
            _ => Err(CoordError::config("axis", format!("unknown sweep axis `{s}`"))),
        }
    }
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::GammaDb => "gamma_db",
            SweepAxis::SigmaE => "sigma_e",
            SweepAxis::KUsers => "k_users",
        }
    }

    /// Copy of `base` with the axis set to `value`.
    pub fn apply(self, base: &Scenario, value: f64) -> Result<Scenario> {
        match self {
            SweepAxis::GammaDb => {
                let mut s = base.clone();
                s.set_gamma_db(value);
                Ok(s)
            }
            SweepAxis::SigmaE => {
                if !(value >= 0.0) {
                    return Err(CoordError::config("sigma_e", "must be nonnegative"));
                }
                let mut s = base.clone();
                s.set_sigma(value);
                Ok(s)
            }
            SweepAxis::KUsers => {
                if value < 0.0 || value.fract() != 0.0 {
                    return Err(CoordError::config("k_users", format!("{value} is not a count")));
                }
                let mut cfg = base.config.clone();
                cfg.k_users = crate::scenario::OneOrMany::One(value as usize);
                cfg.user_positions = None;
                // per-user lists no longer line up with the new count
                cfg.sinr_targets_db = crate::scenario::OneOrMany::One(base.users.first().map_or(0.0, |u| u.gamma_db));
                cfg.csi_error_std = crate::scenario::OneOrMany::One(base.users.first().map_or(0.0, |u| u.sigma));
                cfg.eta = crate::scenario::OneOrMany::One(base.users.first().map_or(0.8, |u| u.eta));
                Scenario::from_config(cfg)
            }
        }
    }
}

/// Parses `start:stop:step` (inclusive) or a comma-separated list.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let bad = || CoordError::config("grid", format!("cannot parse `{text}`"));
    let parts: Vec<&str> = text.split(':').collect();
    let grid = if parts.len() == 3 {
        let v: Vec<f64> = parts
            .iter()
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let (a, b, step) = (v[0], v[1], v[2]);
        if !(step > 0.0) || b < a {
            return Err(bad());
        }
        let n = ((b - a) / step + 1e-9).floor() as usize;
        (0..=n).map(|i| a + step * i as f64).collect()
    } else {
        text.split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?
    };
    if grid.is_empty() {
        return Err(bad());
    }
    Ok(grid)
}

/// One solved (point, scheme, channel seed, symbol draw).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scheme: String,
    pub axis_value: f64,
    pub channel_seed: u64,
    pub symbol_draw: u64,
    pub gamma_target_db: f64,
    pub sigma_e: f64,
    pub status: String,
    pub total_power_w: f64,
    pub power_bs: Vec<f64>,
    pub relaxation_gap: f64,
    pub solve_iterations: usize,
    pub satisfaction: Vec<f64>,
}

impl RunRecord {
    pub fn from_solution(inst: &Instance, axis_value: f64, sol: &PrecoderSolution) -> Self {
        let first = inst.scenario.users.first();
        Self {
            scheme: sol.scheme.to_string(),
            axis_value,
            channel_seed: inst.channel_seed,
            symbol_draw: inst.symbol_draw,
            gamma_target_db: first.map_or(f64::NAN, |u| u.gamma_db),
            sigma_e: first.map_or(f64::NAN, |u| u.sigma),
            status: sol.status.as_str().to_string(),
            total_power_w: sol.total_power_w,
            power_bs: sol.per_bs_power_w.clone(),
            relaxation_gap: sol.relaxation_gap,
            solve_iterations: sol.iterations,
            satisfaction: Vec::new(),
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == cicoord_conic::SolveStatus::Optimal.as_str()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub grid: Vec<f64>,
    pub schemes: Vec<Scheme>,
    pub n_channel_seeds: usize,
    pub n_symbol_draws: usize,
    /// First channel seed; seeds run `seed0..seed0 + n_channel_seeds`.
    pub seed0: u64,
}

/// Solves every (grid point, channel seed, symbol draw, scheme) and returns
/// records in that nested order. Points run through `exec`; the order of
/// the output does not depend on it.
pub fn run_sweep(base: &Scenario, spec: &SweepSpec, opts: &SchemeOptions, exec: Execution) -> Result<Vec<RunRecord>> {
    if spec.grid.is_empty() || spec.schemes.is_empty() || spec.n_channel_seeds == 0 || spec.n_symbol_draws == 0 {
        return Err(CoordError::config("sweep", "grid, schemes and counts must be non-empty"));
    }
    let scenarios: Vec<Scenario> = spec
        .grid
        .iter()
        .map(|&v| spec.axis.apply(base, v))
        .collect::<Result<_>>()?;
    let per_point = spec.n_channel_seeds * spec.n_symbol_draws;
    let jobs = spec.grid.len() * per_point;
    let out = exec.map(jobs, |job| -> Result<Vec<RunRecord>> {
        let (pi, rest) = (job / per_point, job % per_point);
        let (ci, di) = (rest / spec.n_symbol_draws, rest % spec.n_symbol_draws);
        let inst = Instance::generate(&scenarios[pi], spec.seed0 + ci as u64, di as u64)?;
        spec.schemes
            .iter()
            .map(|&k| Ok(RunRecord::from_solution(&inst, spec.grid[pi], &inst.solve(k, opts)?)))
            .collect()
    });
    let mut records = Vec::with_capacity(jobs * spec.schemes.len());
    for r in out {
        records.extend(r?);
    }
    Ok(records)
}

/// Mean power and feasibility of one (scheme, axis value) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub scheme: String,
    pub axis_value: f64,
    pub n_runs: usize,
    pub n_optimal: usize,
    /// Mean total power over optimal runs (W).
    pub mean_power_w: f64,
    pub feasibility: f64,
}

/// Groups records by (scheme, axis value), in order of first appearance.
pub fn summarize(records: &[RunRecord]) -> Vec<SweepSummary> {
    let mut keys: Vec<(String, f64)> = Vec::new();
    for r in records {
        if !keys.iter().any(|(s, v)| *s == r.scheme && *v == r.axis_value) {
            keys.push((r.scheme.clone(), r.axis_value));
        }
    }
    keys.into_iter()
        .map(|(scheme, v)| {
            let rows: Vec<&RunRecord> = records
                .iter()
                .filter(|r| r.scheme == scheme && r.axis_value == v)
                .collect();
            let ok: Vec<&&RunRecord> = rows.iter().filter(|r| r.is_optimal()).collect();
            let mean = if ok.is_empty() {
                f64::NAN
            } else {
                ok.iter().map(|r| r.total_power_w).sum::<f64>() / ok.len() as f64
            };
            SweepSummary {
                scheme,
                axis_value: v,
                n_runs: rows.len(),
                n_optimal: ok.len(),
                mean_power_w: mean,
                feasibility: ok.len() as f64 / rows.len() as f64,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("0:50:10").unwrap(), vec![0.0, 10.0, 20.0, 30.0, 40.0, 50.0]);
        assert_eq!(parse_grid("1e-3, 0.01").unwrap(), vec![1e-3, 0.01]);
        assert!(parse_grid("5:0:1").is_err());
        assert!(parse_grid("a,b").is_err());
    }
}
