//! `cicoord`: batch runs of the multi-cell CI precoding schemes.
//!
//! Every command writes a deterministic CSV (JSON for `gen-scenario`) whose
//! first line is a `#` comment with the config hash. Exit status is 0 on
//! success, 2 for configuration errors and 3 when a solve broke down
//! numerically (unless `--tolerate-failures`).

mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use cicoord::analysis::{coordination_overhead, variable_count, OverheadModel};
use cicoord::experiment::{parse_grid, run_sweep, summarize, RunRecord, SweepAxis, SweepSpec};
use cicoord::montecarlo::estimate_outage;
use cicoord::{CoordError, Execution, Instance, Scenario, ScenarioConfig, Scheme, SchemeOptions};

use output::{num, read_runs, run_header, run_row, short_hash, Table};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, configuration or input files.
    Config(String),
    /// A solve or model build failed.
    Solver(String),
}

impl CliError {
    fn io(e: std::io::Error) -> Self {
        CliError::Config(e.to_string())
    }

    fn csv(e: csv::Error) -> Self {
        CliError::Config(e.to_string())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
        }
    }
}

impl From<CoordError> for CliError {
    fn from(e: CoordError) -> Self {
        match e {
            CoordError::Config { .. } | CoordError::Parse(_) => CliError::Config(e.to_string()),
            _ => CliError::Solver(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "cicoord", version, about = "Multi-cell constructive-interference precoding experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario JSON. The built-in three-cell setup when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (stdout when omitted).
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    /// Leave the generation time out of the header line.
    #[arg(long, global = true)]
    no_timestamp: bool,
    /// Exit 0 even when some solves failed numerically.
    #[arg(long, global = true)]
    tolerate_failures: bool,
    /// Run on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    /// Error-ball law: chi_square_m or exact_gamma.
    #[arg(long, global = true, default_value = "chi_square_m")]
    ball_law: String,
    /// Interference coupling: exact, lifting or ccp.
    #[arg(long, global = true, default_value = "exact")]
    coupling: String,
}

#[derive(Subcommand)]
enum Command {
    /// Resolve the configuration and place users for one seed (JSON).
    GenScenario {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Solve one channel realization with each scheme.
    Solve {
        #[arg(long, default_value = "all")]
        schemes: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        draw: u64,
    },
    /// Solve over a grid of targets, error levels or user counts.
    Sweep {
        /// gamma_db, sigma_e or k_users.
        #[arg(long)]
        axis: String,
        /// `start:stop:step` or a comma-separated list.
        #[arg(long)]
        grid: String,
        #[arg(long, default_value = "all")]
        schemes: String,
        #[arg(long, default_value_t = 10)]
        seeds: usize,
        #[arg(long, default_value_t = 1)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        seed0: u64,
    },
    /// Per-user SINR satisfaction under fresh CSI errors.
    Montecarlo {
        #[arg(long, default_value = "all")]
        schemes: String,
        #[arg(long, default_value_t = 1)]
        seeds: usize,
        #[arg(long, default_value_t = 0)]
        seed0: u64,
        #[arg(long, default_value_t = 2000)]
        trials: usize,
    },
    /// Per-BS power on a layout with at least one empty cell.
    AuditSilentBs {
        #[arg(long, default_value = "all")]
        schemes: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Backhaul bits per coordination round against the BS count.
    Overhead {
        /// BS counts, as a grid.
        #[arg(long, default_value = "2:5:1")]
        n: String,
    },
    /// Mean power and feasibility per scheme and grid point of a run table.
    Report {
        #[arg(long)]
        input: PathBuf,
    },
}

struct Ctx {
    config: ScenarioConfig,
    hash: String,
    opts: SchemeOptions,
    exec: Execution,
    out: Option<PathBuf>,
    timestamp: bool,
}

impl Ctx {
    fn new(c: &Common) -> Result<Self, CliError> {
        let config: ScenarioConfig = match &c.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => ScenarioConfig::default(),
        };
        let canonical = serde_json::to_string(&config).map_err(|e| CliError::Config(e.to_string()))?;
        let opts = SchemeOptions {
            ball_law: parse_enum("ball-law", &c.ball_law)?,
            coupling: parse_enum("coupling", &c.coupling)?,
            ..Default::default()
        };
        Ok(Self {
            config,
            hash: short_hash(&canonical),
            opts,
            exec: if c.sequential { Execution::Sequential } else { Execution::default() },
            out: c.out.clone(),
            timestamp: !c.no_timestamp,
        })
    }

    fn scenario(&self) -> Result<Scenario, CliError> {
        Ok(Scenario::from_config(self.config.clone())?)
    }

    fn write(&self, t: &Table) -> Result<(), CliError> {
        t.write(self.out.as_deref(), &self.hash, self.timestamp)
    }
}

/// Parses a snake_case enum value through its serde name.
fn parse_enum<T: DeserializeOwned>(flag: &str, v: &str) -> Result<T, CliError> {
    serde_json::from_value(serde_json::Value::String(v.to_string()))
        .map_err(|_| CliError::Config(format!("--{flag}: unknown value `{v}`")))
}

fn parse_schemes(list: &str) -> Result<Vec<Scheme>, CliError> {
    if list == "all" {
        return Ok(Scheme::ALL.to_vec());
    }
    list.split(',').map(|s| Ok(s.trim().parse::<Scheme>()?)).collect()
}

fn is_failure(status: &str) -> bool {
    status == "numerical_failure" || status == "max_iterations"
}

/// Number of records whose solve broke down.
fn failures<'a>(records: impl IntoIterator<Item = &'a RunRecord>) -> usize {
    records.into_iter().filter(|r| is_failure(&r.status)).count()
}

fn solve_all(inst: &Instance, schemes: &[Scheme], ctx: &Ctx) -> Result<Vec<RunRecord>, CliError> {
    ctx.exec
        .map(schemes.len(), |i| {
            let sol = inst.solve(schemes[i], &ctx.opts)?;
            Ok(RunRecord::from_solution(inst, f64::NAN, &sol))
        })
        .into_iter()
        .collect()
}

fn run_table(ctx: &Ctx, n_bs: usize, records: &[RunRecord]) -> Table {
    let mut t = Table::new(run_header(n_bs, false, None));
    for r in records {
        t.push(run_row(&ctx.hash, r, n_bs, None, None));
    }
    t
}

fn run(cli: Cli) -> Result<usize, CliError> {
    let ctx = Ctx::new(&cli.common)?;
    match cli.command {
        Command::GenScenario { seed } => {
            let s = ctx.scenario()?.with_user_layout(seed);
            let doc = serde_json::json!({ "config_hash": ctx.hash, "seed": seed, "scenario": s });
            let mut text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Config(e.to_string()))?;
            text.push('\n');
            output::emit(ctx.out.as_deref(), text.as_bytes())?;
            Ok(0)
        }
        Command::Solve { schemes, seed, draw } => {
            let schemes = parse_schemes(&schemes)?;
            let s = ctx.scenario()?;
            let inst = Instance::generate(&s, seed, draw)?;
            let records = solve_all(&inst, &schemes, &ctx)?;
            ctx.write(&run_table(&ctx, s.n_bs, &records))?;
            Ok(failures(&records))
        }
        Command::Sweep { axis, grid, schemes, seeds, draws, seed0 } => {
            let spec = SweepSpec {
                axis: axis.parse::<SweepAxis>()?,
                grid: parse_grid(&grid)?,
                schemes: parse_schemes(&schemes)?,
                n_channel_seeds: seeds,
                n_symbol_draws: draws,
                seed0,
            };
            let s = ctx.scenario()?;
            let records = run_sweep(&s, &spec, &ctx.opts, ctx.exec)?;
            let mut t = Table::new(run_header(s.n_bs, true, None));
            for r in &records {
                t.push(run_row(&ctx.hash, r, s.n_bs, Some(spec.axis.as_str()), None));
            }
            ctx.write(&t)?;
            Ok(failures(&records))
        }
        Command::Montecarlo { schemes, seeds, seed0, trials } => {
            let schemes = parse_schemes(&schemes)?;
            if seeds == 0 {
                return Err(CliError::Config("--seeds must be at least 1".into()));
            }
            let s = ctx.scenario()?;
            let k = s.n_users();
            let mut records = Vec::new();
            for seed in seed0..seed0 + seeds as u64 {
                let inst = Instance::generate(&s, seed, 0)?;
                for &scheme in &schemes {
                    let sol = inst.solve(scheme, &ctx.opts)?;
                    let mut r = RunRecord::from_solution(&inst, f64::NAN, &sol);
                    if sol.is_optimal() {
                        let rep = estimate_outage(&inst.scenario, &inst.csi, &inst.draw, &sol, trials, seed, ctx.exec)?;
                        r.satisfaction = rep.per_user_satisfaction;
                    }
                    records.push(r);
                }
            }
            let mut t = Table::new(run_header(s.n_bs, false, Some(k)));
            for r in &records {
                t.push(run_row(&ctx.hash, r, s.n_bs, None, Some(k)));
            }
            ctx.write(&t)?;
            Ok(failures(&records))
        }
        Command::AuditSilentBs { schemes, seed } => {
            let schemes = parse_schemes(&schemes)?;
            let s = ctx.scenario()?;
            if !s.k_per_cell.contains(&0) {
                return Err(CliError::Config("k_users: the audit needs a cell without users".into()));
            }
            let inst = Instance::generate(&s, seed, 0)?;
            let records = solve_all(&inst, &schemes, &ctx)?;
            ctx.write(&run_table(&ctx, s.n_bs, &records))?;
            Ok(failures(&records))
        }
        Command::Overhead { n } => {
            let grid = parse_grid(&n)?;
            let k = *ctx.scenario()?.k_per_cell.iter().max().unwrap_or(&0) as u64;
            let mut t = Table::new(["config_hash", "n_bs", "k_per_cell", "scheme", "overhead_bits", "precoders"]);
            for v in grid {
                if v < 1.0 || v.fract() != 0.0 {
                    return Err(CliError::Config(format!("--n: {v} is not a BS count")));
                }
                let model = OverheadModel {
                    n: v as u64,
                    k,
                    chi_c: ctx.config.chi_c,
                    chi_s: ctx.config.chi_s,
                    m_antennas: ctx.config.m_antennas as u64,
                    ..Default::default()
                };
                for scheme in Scheme::ALL {
                    t.push(vec![
                        ctx.hash.clone(),
                        model.n.to_string(),
                        k.to_string(),
                        scheme.to_string(),
                        coordination_overhead(scheme, &model).to_string(),
                        variable_count(scheme, model.n as usize, k as usize).to_string(),
                    ]);
                }
            }
            ctx.write(&t)?;
            Ok(0)
        }
        Command::Report { input } => {
            let records = read_runs(&input)?;
            let mut t = Table::new(["config_hash", "scheme", "axis_value", "n_runs", "n_optimal", "feasibility", "mean_power_w"]);
            for row in summarize(&records) {
                t.push(vec![
                    ctx.hash.clone(),
                    row.scheme,
                    num(row.axis_value),
                    row.n_runs.to_string(),
                    row.n_optimal.to_string(),
                    num(row.feasibility),
                    num(row.mean_power_w),
                ]);
            }
            ctx.write(&t)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let tolerate = cli.common.tolerate_failures;
    match run(cli) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(n) if tolerate => {
            eprintln!("warning: {n} solve(s) failed numerically");
            ExitCode::SUCCESS
        }
        Ok(n) => {
            eprintln!("error: {n} solve(s) failed numerically (pass --tolerate-failures to accept)");
            ExitCode::from(3)
        }
        Err(e) => {
            match &e {
                CliError::Config(m) | CliError::Solver(m) => eprintln!("error: {m}"),
            }
            ExitCode::from(e.exit_code())
        }
    }
}
