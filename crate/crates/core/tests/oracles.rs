//! Solutions checked against closed forms, simpler schemes and invariance
//! requirements.

use cicoord::experiment::{run_sweep, SweepAxis, SweepSpec};
use cicoord::geometry::Precoders;
use cicoord::montecarlo::estimate_outage;
use cicoord::scenario::{CsiEstimate, OneOrMany};
use cicoord::{BaselineKind, Execution, Instance, Scenario, ScenarioConfig, Scheme, SchemeKind, SchemeOptions};

fn scenario(f: impl FnOnce(&mut ScenarioConfig)) -> Scenario {
    let mut cfg = ScenarioConfig::default();
    f(&mut cfg);
    Scenario::from_config(cfg).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

#[test]
fn one_cell_full_and_partial_coincide_without_error() {
    // with one BS there is no inter-cell term, so the interference margin
    // is zero at the optimum
    let s = scenario(|c| {
        c.n_bs = 1;
        c.k_users = OneOrMany::One(3);
        c.csi_error_std = OneOrMany::One(0.0);
    });
    let opts = SchemeOptions::default();
    for seed in 0..4 {
        let inst = Instance::generate(&s, seed, 0).unwrap();
        let full = inst.solve(Scheme::Ci(SchemeKind::FullCiDet), &opts).unwrap();
        for kind in [SchemeKind::PartialCiDet, SchemeKind::PartialCiProb, SchemeKind::FullCiProb] {
            let other = inst.solve(Scheme::Ci(kind), &opts).unwrap();
            assert!(other.is_optimal(), "{kind:?}");
            assert!(rel(full.total_power_w, other.total_power_w) < 1e-5, "{kind:?} seed {seed}");
        }
    }
}

#[test]
fn joint_transmission_never_costs_more_than_coordinated_beams() {
    // with exact CSI the CBF feasible set is a subset of the CoMP one
    let s = scenario(|c| {
        c.csi_error_std = OneOrMany::One(0.0);
        c.sinr_targets_db = OneOrMany::One(10.0);
    });
    let opts = SchemeOptions::default();
    for seed in 0..4 {
        let inst = Instance::generate(&s, seed, 0).unwrap();
        let comp = inst.solve(Scheme::Baseline(BaselineKind::CompPerfectCsi), &opts).unwrap();
        let cbf = inst.solve(Scheme::Baseline(BaselineKind::CbfDet), &opts).unwrap();
        assert!(comp.is_optimal() && cbf.is_optimal());
        assert!(comp.total_power_w <= cbf.total_power_w * (1.0 + 1e-6), "seed {seed}");
    }
}

#[test]
fn error_free_det_solutions_meet_every_target() {
    let s = scenario(|c| c.csi_error_std = OneOrMany::One(0.0));
    let opts = SchemeOptions::default();
    let inst = Instance::generate(&s, 2, 0).unwrap();
    for k in [Scheme::Ci(SchemeKind::FullCiDet), Scheme::Ci(SchemeKind::PartialCiDet), Scheme::Baseline(BaselineKind::CbfDet)] {
        let sol = inst.solve(k, &opts).unwrap();
        let rep = estimate_outage(&inst.scenario, &inst.csi, &inst.draw, &sol, 200, 0, Execution::Sequential).unwrap();
        assert!(rep.per_user_satisfaction.iter().all(|&p| p == 1.0), "{k}");
        assert_eq!(rep.joint_satisfaction, 1.0);
    }
}

#[test]
fn silenced_precoders_satisfy_nobody() {
    let s = scenario(|_| {});
    let inst = Instance::generate(&s, 0, 0).unwrap();
    let mut sol = inst.solve(Scheme::Ci(SchemeKind::FullCiProb), &SchemeOptions::default()).unwrap();
    sol.precoders = sol.precoders.map(|p: Precoders| p.scaled(0.0));
    let rep = estimate_outage(&inst.scenario, &inst.csi, &inst.draw, &sol, 200, 0, Execution::Sequential).unwrap();
    assert!(rep.per_user_satisfaction.iter().all(|&p| p == 0.0));
}

#[test]
fn power_grows_with_the_assumed_error() {
    let s = scenario(|c| c.sinr_targets_db = OneOrMany::One(15.0));
    let opts = SchemeOptions::default();
    let base = Instance::generate(&s, 1, 0).unwrap();
    for k in [Scheme::Ci(SchemeKind::FullCiDet), Scheme::Ci(SchemeKind::PartialCiProb)] {
        let mut last = 0.0;
        for sigma in [0.0, 2e-3, 5e-3, 1e-2] {
            let mut inst = base.clone();
            inst.scenario.set_sigma(sigma);
            inst.csi = CsiEstimate::assumed(&base.csi.h_hat, &inst.scenario);
            let sol = inst.solve(k, &opts).unwrap();
            assert!(sol.is_optimal());
            assert!(sol.total_power_w >= last * (1.0 - 1e-6), "{k} at {sigma}");
            last = sol.total_power_w;
        }
    }
}

#[test]
fn results_do_not_depend_on_the_execution_policy() {
    let s = scenario(|_| {});
    let spec = SweepSpec {
        axis: SweepAxis::GammaDb,
        grid: vec![5.0, 15.0],
        schemes: vec![Scheme::Ci(SchemeKind::FullCiProb), Scheme::Ci(SchemeKind::StatCi)],
        n_channel_seeds: 3,
        n_symbol_draws: 2,
        seed0: 11,
    };
    let opts = SchemeOptions::default();
    let a = run_sweep(&s, &spec, &opts, Execution::Sequential).unwrap();
    let b = run_sweep(&s, &spec, &opts, Execution::Parallel).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 2 * 3 * 2 * 2);

    let inst = Instance::generate(&s, 4, 0).unwrap();
    let sol = inst.solve(Scheme::Ci(SchemeKind::FullCiProb), &opts).unwrap();
    let mc = |e| estimate_outage(&inst.scenario, &inst.csi, &inst.draw, &sol, 400, 3, e).unwrap();
    assert_eq!(mc(Execution::Sequential), mc(Execution::Parallel));
}

#[test]
fn empty_cells_stay_silent_under_partial_coordination() {
    let s = scenario(|c| {
        c.k_users = OneOrMany::Many(vec![2, 2, 0]);
        c.sinr_targets_db = OneOrMany::One(0.0);
    });
    let inst = Instance::generate(&s, 0, 0).unwrap();
    for k in [Scheme::Ci(SchemeKind::PartialCiDet), Scheme::Ci(SchemeKind::StatCi)] {
        let sol = inst.solve(k, &SchemeOptions::default()).unwrap();
        assert!(sol.is_optimal());
        assert_eq!(sol.per_bs_power_w[2], 0.0, "{k}");
    }
}
