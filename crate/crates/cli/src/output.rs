//! CSV tables with a one-line `#` header.

use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use cicoord::experiment::RunRecord;
use sha2::{Digest, Sha256};

use crate::CliError;

/// First 16 hex digits of the SHA-256 of `text`.
pub fn short_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Shortest round-trip form, so equal values always print the same.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Writes to `path`, or stdout when `None`. The leading comment carries
    /// the config hash and, unless suppressed, the generation time.
    pub fn write(&self, path: Option<&Path>, config_hash: &str, timestamp: bool) -> Result<(), CliError> {
        let mut buf = Vec::new();
        let mut line = format!("# cicoord {} config {config_hash}", env!("CARGO_PKG_VERSION"));
        if timestamp {
            let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
            line.push_str(&format!(" generated_unix {secs}"));
        }
        writeln!(buf, "{line}").map_err(CliError::io)?;
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(&self.header).map_err(CliError::csv)?;
            for r in &self.rows {
                w.write_record(r).map_err(CliError::csv)?;
            }
            w.flush().map_err(CliError::io)?;
        }
        emit(path, &buf)
    }
}

pub fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| CliError::Config(format!("{}: {e}", p.display()))),
        None => std::io::stdout().write_all(bytes).map_err(CliError::io),
    }
}

/// Columns of a run table. `axis` adds the sweep coordinate, `n_users`
/// the per-user satisfaction columns.
pub fn run_header(n_bs: usize, axis: bool, n_users: Option<usize>) -> Vec<String> {
    let mut h: Vec<String> = vec!["config_hash".into(), "scheme".into()];
    if axis {
        h.push("axis".into());
        h.push("axis_value".into());
    }
    for c in ["channel_seed", "symbol_draw", "gamma_target_db", "sigma_e", "status", "total_power_w"] {
        h.push(c.into());
    }
    h.extend((1..=n_bs).map(|j| format!("power_bs_{j}")));
    h.push("relaxation_gap".into());
    h.push("solve_iterations".into());
    if let Some(k) = n_users {
        h.extend((1..=k).map(|u| format!("satisfaction_user_{u}")));
    }
    h
}

pub fn run_row(hash: &str, r: &RunRecord, n_bs: usize, axis: Option<&str>, n_users: Option<usize>) -> Vec<String> {
    let mut row = vec![hash.to_string(), r.scheme.clone()];
    if let Some(a) = axis {
        row.push(a.to_string());
        row.push(num(r.axis_value));
    }
    row.push(r.channel_seed.to_string());
    row.push(r.symbol_draw.to_string());
    row.push(num(r.gamma_target_db));
    row.push(num(r.sigma_e));
    row.push(r.status.clone());
    row.push(num(r.total_power_w));
    row.extend((0..n_bs).map(|j| r.power_bs.get(j).map_or(String::new(), |&p| num(p))));
    row.push(num(r.relaxation_gap));
    row.push(r.solve_iterations.to_string());
    if let Some(k) = n_users {
        row.extend((0..k).map(|u| r.satisfaction.get(u).map_or(String::new(), |&s| num(s))));
    }
    row
}

/// Reads a run table back. The sweep coordinate falls back to the SINR
/// target for tables without one.
pub fn read_runs(path: &Path) -> Result<Vec<RunRecord>, CliError> {
    let mut rd = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let header = rd.headers().map_err(CliError::csv)?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let need = |name: &str| col(name).ok_or_else(|| CliError::Config(format!("column `{name}` missing")));
    let (scheme, status, power) = (need("scheme")?, need("status")?, need("total_power_w")?);
    let (seed, draw, gamma, sigma) = (need("channel_seed")?, need("symbol_draw")?, need("gamma_target_db")?, need("sigma_e")?);
    let axis = col("axis_value");
    let gap = col("relaxation_gap");
    let iters = col("solve_iterations");
    let bs_cols: Vec<usize> = (1..).map_while(|j| col(&format!("power_bs_{j}"))).collect();
    let sat_cols: Vec<usize> = (1..).map_while(|u| col(&format!("satisfaction_user_{u}"))).collect();

    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(CliError::csv)?;
        let f = |i: usize| -> Result<f64, CliError> {
            rec[i].parse().map_err(|_| CliError::Config(format!("bad number `{}`", &rec[i])))
        };
        let u = |i: usize| -> Result<u64, CliError> {
            rec[i].parse().map_err(|_| CliError::Config(format!("bad integer `{}`", &rec[i])))
        };
        out.push(RunRecord {
            scheme: rec[scheme].to_string(),
            axis_value: f(axis.unwrap_or(gamma))?,
            channel_seed: u(seed)?,
            symbol_draw: u(draw)?,
            gamma_target_db: f(gamma)?,
            sigma_e: f(sigma)?,
            status: rec[status].to_string(),
            total_power_w: f(power)?,
            power_bs: bs_cols.iter().map(|&i| f(i)).collect::<Result<_, _>>()?,
            relaxation_gap: gap.map_or(Ok(f64::NAN), f)?,
            solve_iterations: iters.map_or(Ok(0), u)? as usize,
            satisfaction: sat_cols
                .iter()
                .filter(|&&i| !rec[i].is_empty())
                .map(|&i| f(i))
                .collect::<Result<_, _>>()?,
        });
    }
    Ok(out)
}
