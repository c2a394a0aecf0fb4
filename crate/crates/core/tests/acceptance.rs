//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion.
//! Set `ACCEPTANCE_STRICT=1` to exit non-zero when any fails.

use std::process::ExitCode;
use std::time::Instant;

use cicoord::analysis::{barrier_parameter, coordination_overhead, OverheadModel};
use cicoord::bounds::{binomial_se, empirical_coverage, BallLaw, BoundKind, BoundParams};
use cicoord::experiment::{run_sweep, SweepAxis, SweepSpec};
use cicoord::montecarlo::{estimate_outage, feasibility_sweep, silent_bs_audit};
use cicoord::scenario::{CsiEstimate, OneOrMany, Placement};
use cicoord::schemes::build_scheme;
use cicoord::{BaselineKind, Execution, Instance, PrecoderSolution, Scenario, ScenarioConfig, Scheme, SchemeKind, SchemeOptions};
use cicoord_conic::ConeForm;

const FULL_PROB: Scheme = Scheme::Ci(SchemeKind::FullCiProb);
const FULL_DET: Scheme = Scheme::Ci(SchemeKind::FullCiDet);
const PART_PROB: Scheme = Scheme::Ci(SchemeKind::PartialCiProb);
const PART_DET: Scheme = Scheme::Ci(SchemeKind::PartialCiDet);
const STAT: Scheme = Scheme::Ci(SchemeKind::StatCi);
const COMP: Scheme = Scheme::Baseline(BaselineKind::CompPerfectCsi);
const CBF_DET: Scheme = Scheme::Baseline(BaselineKind::CbfDet);

/// Relaxation gaps of every optimal solve in criteria 1 to 7.
#[derive(Default)]
struct GapLog {
    worst: f64,
    n: usize,
    exceed: Vec<String>,
}

impl GapLog {
    fn record(&mut self, label: &str, sol: &PrecoderSolution) {
        if !sol.is_optimal() {
            return;
        }
        self.n += 1;
        self.worst = self.worst.max(sol.relaxation_gap);
        if !(sol.relaxation_gap <= 1e-5) {
            self.exceed.push(format!("{label}: {:.2e}", sol.relaxation_gap));
        }
    }
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn scenario(f: impl FnOnce(&mut ScenarioConfig)) -> Scenario {
    let mut cfg = ScenarioConfig::default();
    f(&mut cfg);
    Scenario::from_config(cfg).expect("valid configuration")
}

fn analytic_oracle(gaps: &mut GapLog) -> Verdict {
    let start = Instant::now();
    let s = scenario(|c| {
        c.n_bs = 1;
        c.k_users = OneOrMany::One(1);
        c.csi_error_std = OneOrMany::One(0.0);
    });
    let opts = SchemeOptions::default();
    let mut worst: f64 = 0.0;
    let mut bad = Vec::new();
    for seed in 0..20 {
        let inst = Instance::generate(&s, seed, 0).unwrap();
        let h2: f64 = inst.truth.link(0, 0).iter().map(|z| z.norm_sqr()).sum();
        let want = s.sigma_n2 * s.users[0].gamma() / h2;
        for k in Scheme::ALL {
            let sol = inst.solve(k, &opts).unwrap();
            gaps.record(&format!("c1 {k} seed {seed}"), &sol);
            let rel = (sol.total_power_w / want - 1.0).abs();
            if !(rel <= 1e-4) {
                bad.push(format!("{k}@{seed}"));
            }
            worst = worst.max(if rel.is_nan() { f64::INFINITY } else { rel });
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        bad.is_empty() && secs < 60.0,
        format!("max rel err {worst:.2e} over 20 channels x 8 schemes, {secs:.1}s {bad:?}"),
    )
}

fn power_ordering(gaps: &mut GapLog) -> Verdict {
    let start = Instant::now();
    let base = scenario(|_| {});
    let order = [FULL_PROB, FULL_DET, COMP, PART_PROB, PART_DET, STAT, CBF_DET];
    let spec = SweepSpec {
        axis: SweepAxis::GammaDb,
        grid: vec![20.0],
        schemes: order.to_vec(),
        n_channel_seeds: 20,
        n_symbol_draws: 10,
        seed0: 0,
    };
    let recs = run_sweep(&base, &spec, &SchemeOptions::default(), Execution::default()).unwrap();
    for r in &recs {
        if r.is_optimal() && !(r.relaxation_gap <= 1e-5) {
            gaps.exceed.push(format!("c2 {} seed {} draw {}: {:.2e}", r.scheme, r.channel_seed, r.symbol_draw, r.relaxation_gap));
        }
        if r.is_optimal() {
            gaps.n += 1;
            gaps.worst = gaps.worst.max(r.relaxation_gap);
        }
    }
    // means over the instances every scheme solved
    let per = order.len();
    let mut sums = vec![0.0; per];
    let mut feasible = vec![0usize; per];
    let mut common = 0usize;
    for chunk in recs.chunks(per) {
        for (i, r) in chunk.iter().enumerate() {
            feasible[i] += r.is_optimal() as usize;
        }
        if chunk.iter().all(|r| r.is_optimal()) {
            common += 1;
            for (i, r) in chunk.iter().enumerate() {
                sums[i] += r.total_power_w;
            }
        }
    }
    let means: Vec<f64> = sums.iter().map(|s| s / common.max(1) as f64).collect();
    let ordered = common > 0 && means.windows(2).all(|w| w[0] <= w[1]);
    let secs = start.elapsed().as_secs_f64();
    let table: Vec<String> = order
        .iter()
        .zip(&means)
        .zip(&feasible)
        .map(|((k, m), f)| format!("{k}={m:.4e}({f})"))
        .collect();
    verdict(
        ordered && secs < 1800.0,
        format!("{common}/{} common instances, {secs:.0}s: {}", recs.len() / per, table.join(" ")),
    )
}

fn chance_calibration(gaps: &mut GapLog) -> Verdict {
    let s = scenario(|c| {
        c.eta = OneOrMany::One(0.8);
        c.csi_error_std = OneOrMany::One(0.01);
    });
    let opts = SchemeOptions::default();
    let n = 2000;
    let floor = 0.8 - 3.0 * binomial_se(0.8, n);
    let mut worst = 1.0f64;
    let mut solved = 0;
    for seed in 0..5 {
        let inst = Instance::generate(&s, seed, 0).unwrap();
        for k in [FULL_PROB, PART_PROB] {
            let sol = inst.solve(k, &opts).unwrap();
            gaps.record(&format!("c3 {k} seed {seed}"), &sol);
            if !sol.is_optimal() {
                continue;
            }
            solved += 1;
            let rep = estimate_outage(&inst.scenario, &inst.csi, &inst.draw, &sol, n, 1000 + seed, Execution::default()).unwrap();
            worst = rep.per_user_satisfaction.iter().fold(worst, |a, &b| a.min(b));
        }
    }
    verdict(
        solved == 10 && worst >= floor,
        format!("min per-user satisfaction {worst:.4} (floor {floor:.4}), {solved}/10 solves"),
    )
}

fn worst_case_calibration(gaps: &mut GapLog) -> Verdict {
    let s = scenario(|c| c.delta = 0.99);
    let n = 2000;
    let ceiling = 0.01 + 3.0 * binomial_se(0.01, n);
    let mut worst = 0.0f64;
    let mut faithful = 0.0f64;
    let mut solved = 0;
    for (law, slot) in [(BallLaw::ExactGamma, 0), (BallLaw::ChiSquareM, 1)] {
        let opts = SchemeOptions { ball_law: law, ..Default::default() };
        for seed in 0..5 {
            let inst = Instance::generate(&s, seed, 0).unwrap();
            for k in [FULL_DET, PART_DET] {
                let sol = inst.solve(k, &opts).unwrap();
                gaps.record(&format!("c4 {k} seed {seed}"), &sol);
                if !sol.is_optimal() {
                    continue;
                }
                let rep = estimate_outage(&inst.scenario, &inst.csi, &inst.draw, &sol, n, 2000 + seed, Execution::default()).unwrap();
                let v = (0..rep.per_user_satisfaction.len()).map(|u| rep.violation_fraction(u)).fold(0.0, f64::max);
                if slot == 0 {
                    solved += 1;
                    worst = worst.max(v);
                } else {
                    faithful = faithful.max(v);
                }
            }
        }
    }
    verdict(
        solved == 10 && worst <= ceiling,
        format!("max violation {worst:.4} (ceiling {ceiling:.4}), chi-square(M) ball {faithful:.4}, {solved}/10 solves"),
    )
}

/// Power along a grid, with `+∞` for an infeasible point.
fn non_decreasing(p: &[f64]) -> bool {
    p.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-6))
}

fn monotonicity(gaps: &mut GapLog) -> Verdict {
    let s = scenario(|c| c.eta = OneOrMany::One(0.8));
    let opts = SchemeOptions::default();
    let mut checked = 0;
    let mut bad = Vec::new();
    let power = |sol: &PrecoderSolution| {
        if sol.is_optimal() {
            Some(sol.total_power_w)
        } else if sol.status == cicoord_conic::SolveStatus::Infeasible {
            Some(f64::INFINITY)
        } else {
            None
        }
    };
    for seed in 0..10 {
        let base = Instance::generate(&s, seed, 0).unwrap();
        for k in Scheme::ALL {
            let mut along_gamma = Vec::new();
            for g in [0.0, 10.0, 20.0, 30.0] {
                let mut inst = base.clone();
                inst.scenario.set_gamma_db(g);
                let sol = inst.solve(k, &opts).unwrap();
                gaps.record(&format!("c5 {k} seed {seed} gamma {g}"), &sol);
                along_gamma.push(power(&sol));
            }
            let mut along_sigma = Vec::new();
            for sg in [0.0, 1e-3, 1e-2] {
                let mut inst = base.clone();
                inst.scenario.set_sigma(sg);
                inst.csi = CsiEstimate::assumed(&base.csi.h_hat, &inst.scenario);
                let sol = inst.solve(k, &opts).unwrap();
                gaps.record(&format!("c5 {k} seed {seed} sigma {sg}"), &sol);
                along_sigma.push(power(&sol));
            }
            for (axis, v) in [("gamma", along_gamma), ("sigma", along_sigma)] {
                checked += 1;
                match v.into_iter().collect::<Option<Vec<f64>>>() {
                    Some(p) if non_decreasing(&p) => {}
                    Some(p) => bad.push(format!("{k}@{seed}/{axis} {p:.3?}")),
                    None => bad.push(format!("{k}@{seed}/{axis} solver failure")),
                }
            }
        }
    }
    verdict(bad.is_empty(), format!("{checked} sequences, violations {bad:?}"))
}

fn feasibility_ordering(gaps: &mut GapLog) -> Verdict {
    let s = scenario(|c| c.p_max = 100.0);
    let schemes = [FULL_DET, PART_DET, CBF_DET];
    let pts = feasibility_sweep(&s, &[45.0], 50, &schemes, &SchemeOptions::default(), Execution::default()).unwrap();
    gaps.n += pts.iter().map(|p| p.n_feasible).sum::<usize>();
    let f: Vec<f64> = pts.iter().map(|p| p.probability()).collect();
    verdict(
        f[0] >= f[1] && f[1] >= f[2],
        format!("feasibility at 45 dB over 50 seeds: full-det {:.2}, partial-det {:.2}, cbf-det {:.2}", f[0], f[1], f[2]),
    )
}

fn silent_bs(gaps: &mut GapLog) -> Verdict {
    let s = scenario(|c| {
        c.k_users = OneOrMany::Many(vec![3, 3, 0]);
        c.placement = Placement::Edge;
        c.sinr_targets_db = OneOrMany::One(0.0);
    });
    let inst = Instance::generate(&s, s.config.rng_seed, 0).unwrap();
    let opts = SchemeOptions::default();
    for k in [FULL_DET, PART_DET, STAT] {
        gaps.record(&format!("c7 {k}"), &inst.solve(k, &opts).unwrap());
    }
    let rows = silent_bs_audit(&inst, &[FULL_DET, PART_DET, STAT], &opts).unwrap();
    let ok_row = |r: &cicoord::montecarlo::SilentBsRow| r.status == "optimal";
    let full = &rows[0].per_bs_power_w;
    let max_full = full.iter().copied().fold(0.0, f64::max);
    let pass = rows.iter().all(ok_row)
        && rows[1].per_bs_power_w[2] <= 1e-6
        && rows[2].per_bs_power_w[2] <= 1e-6
        && full[2] >= 0.1 * max_full;
    let fmt = |v: &[f64]| v.iter().map(|p| format!("{p:.2e}")).collect::<Vec<_>>().join("/");
    verdict(
        pass,
        format!(
            "per-BS W: full-det {} partial-det {} stat-ci {}",
            fmt(full),
            fmt(&rows[1].per_bs_power_w),
            fmt(&rows[2].per_bs_power_w)
        ),
    )
}

fn table_exactness() -> Verdict {
    let m = OverheadModel { n: 3, k: 3, chi_c: 10, chi_s: 70, ..Default::default() };
    let full = coordination_overhead(FULL_PROB, &m);
    let part = coordination_overhead(PART_DET, &m);
    let stat = coordination_overhead(STAT, &m);
    let b1 = barrier_parameter(SchemeKind::FullCiProb, 3, 4, 3);
    let b2 = barrier_parameter(SchemeKind::FullCiDet, 3, 4, 3);
    let rel = |a: f64, b: f64| ((a - b) / b).abs();
    let pass = full == 1800 && part == 540 && stat == 0 && rel(b1, 174f64.sqrt()) <= 1e-12 && rel(b2, 96f64.sqrt()) <= 1e-12;
    verdict(pass, format!("overhead {full}/{part}/{stat} bits, beta1^2 {:.12}, beta2^2 {:.12}", b1 * b1, b2 * b2))
}

fn bound_coverage() -> Verdict {
    let b = BoundParams { delta: 0.99, m_antennas: 4, n_bs: 3, theta: std::f64::consts::FRAC_PI_4, sigma: 0.01 };
    let l3 = empirical_coverage(BoundKind::Ball(BallLaw::ExactGamma), &b, 100_000, 7).unwrap();
    let l2 = empirical_coverage(BoundKind::Linear, &b, 100_000, 8).unwrap();
    verdict(
        (l3 - 0.99).abs() <= 0.005 && (0.95..=1.0).contains(&l2),
        format!("ball coverage {l3:.4}, linear-bound coverage {l2:.4}"),
    )
}

fn soc_lmi_equivalence() -> Verdict {
    let s = scenario(|_| {});
    let soc = SchemeOptions::default();
    let lmi = SchemeOptions { cone_form: ConeForm::Lmi, ..Default::default() };
    let mut worst: f64 = 0.0;
    let mut n_ok = 0;
    for seed in 0..20 {
        let inst = Instance::generate(&s, seed, 0).unwrap();
        let a = inst.solve(FULL_PROB, &soc).unwrap();
        let b = inst.solve(FULL_PROB, &lmi).unwrap();
        if a.is_optimal() && b.is_optimal() {
            n_ok += 1;
            worst = worst.max((a.total_power_w - b.total_power_w).abs() / a.total_power_w);
        }
    }
    verdict(n_ok == 20 && worst <= 1e-6, format!("max rel diff {worst:.2e} on {n_ok}/20 instances"))
}

fn variable_counts() -> Verdict {
    let opts = SchemeOptions::default();
    let mut lines = Vec::new();
    let mut pass = true;
    for k_users in [4usize, 3] {
        let s = scenario(|c| c.k_users = OneOrMany::One(k_users));
        let inst = Instance::generate(&s, 0, 0).unwrap();
        let count = |k: Scheme| build_scheme(k, &inst.input(), &opts).unwrap().program.meta.precoder_count();
        let ci: Vec<usize> = SchemeKind::ALL.iter().map(|&k| count(Scheme::Ci(k))).collect();
        let bl: Vec<usize> = [COMP, Scheme::Baseline(BaselineKind::CbfProb), CBF_DET].iter().map(|&k| count(k)).collect();
        pass &= ci.iter().all(|&c| c == 3) && bl.iter().all(|&c| c == 3 * k_users);
        lines.push(format!("K={k_users}: CI {ci:?} vs baselines {bl:?}"));
    }
    verdict(pass, lines.join("; "))
}

fn main() -> ExitCode {
    let mut gaps = GapLog::default();
    let mut results: Vec<(u32, &str, Verdict)> = Vec::new();
    results.push((1, "analytic single-user oracle", analytic_oracle(&mut gaps)));
    results.push((2, "mean power ordering at 20 dB", power_ordering(&mut gaps)));
    results.push((3, "chance-constraint calibration", chance_calibration(&mut gaps)));
    results.push((4, "worst-case calibration", worst_case_calibration(&mut gaps)));
    results.push((5, "monotonicity in target and error", monotonicity(&mut gaps)));
    results.push((6, "feasibility ordering at 45 dB", feasibility_ordering(&mut gaps)));
    results.push((7, "silent BS audit", silent_bs(&mut gaps)));
    let gap_pass = gaps.exceed.is_empty();
    let gap_detail = format!("{} optimal solves, worst gap {:.2e}, exceedances {:?}", gaps.n, gaps.worst, gaps.exceed);
    results.push((8, "rank-one tightness", verdict(gap_pass, gap_detail)));
    results.push((9, "overhead and barrier parameters", table_exactness()));
    results.push((10, "bound coverage", bound_coverage()));
    results.push((11, "SOC and LMI chance forms agree", soc_lmi_equivalence()));
    results.push((12, "precoder variable counts", variable_counts()));

    let mut failed = 0;
    for (id, name, v) in &results {
        let tag = if v.pass { "PASS" } else { "FAIL" };
        failed += (!v.pass) as usize;
        println!("criterion {id:>2} {tag} {name}: {}", v.detail);
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    // failures are reported above; ACCEPTANCE_STRICT=1 also turns them into
    // a non-zero exit
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if failed > 0 && strict {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
