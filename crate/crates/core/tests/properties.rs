use proptest::prelude::*;

use cicoord::bounds::{nu_squared, rho_squared, xi_squared, BallLaw, BoundParams};
use cicoord::geometry::ci_margin;
use cicoord::montecarlo::estimate_outage;
use cicoord::scenario::{corrupt_csi, generate_channels, CsiEstimate, OneOrMany};
use cicoord::{Execution, Instance, Scenario, ScenarioConfig, Scheme, SchemeKind, SchemeOptions};
use num_complex::Complex64;

fn scenario(n_bs: usize, k: usize, m: usize) -> Scenario {
    Scenario::from_config(ScenarioConfig {
        n_bs,
        k_users: OneOrMany::One(k),
        m_antennas: m,
        ..Default::default()
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn users_stay_inside_their_cell(seed in any::<u64>(), n_bs in 1usize..5, k in 1usize..5) {
        let s = scenario(n_bs, k, 2).with_user_layout(seed);
        prop_assert_eq!(s.n_users(), n_bs * k);
        for (u, user) in s.users.iter().enumerate() {
            let d = s.distance(user.cell, u);
            prop_assert!(d >= s.config.min_user_distance_m - 1e-9 && d <= s.config.cell_radius_m + 1e-9);
        }
    }

    #[test]
    fn generation_is_a_function_of_the_seed(seed in any::<u64>()) {
        let s = scenario(3, 2, 2).with_user_layout(seed);
        prop_assert_eq!(generate_channels(&s, seed), generate_channels(&s, seed));
        let c = generate_channels(&s, seed);
        prop_assert_eq!(corrupt_csi(&c, &s, seed), corrupt_csi(&c, &s, seed));
        prop_assert_ne!(generate_channels(&s, seed), generate_channels(&s, seed.wrapping_add(1)));
    }

    #[test]
    fn path_gain_falls_with_distance(d1 in 10.0f64..5000.0, d2 in 10.0f64..5000.0) {
        let pl = ScenarioConfig::default().path_loss;
        let (near, far) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
        prop_assert!(pl.gain(near) >= pl.gain(far));
    }

    #[test]
    fn radii_grow_with_confidence_and_error(
        d1 in 0.5f64..0.999, d2 in 0.5f64..0.999, s1 in 0.0f64..0.1, s2 in 0.0f64..0.1, m in 1usize..9,
    ) {
        let (dl, dh) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
        let (sl, sh) = if s1 < s2 { (s1, s2) } else { (s2, s1) };
        let p = |delta, sigma| BoundParams { delta, m_antennas: m, n_bs: 3, theta: std::f64::consts::FRAC_PI_4, sigma };
        for f in [xi_squared, rho_squared] {
            prop_assert!(f(&p(dl, sl)).unwrap() <= f(&p(dh, sh)).unwrap() + 1e-12);
        }
        for law in [BallLaw::ChiSquareM, BallLaw::ExactGamma] {
            prop_assert!(nu_squared(&p(dl, sl), law).unwrap() <= nu_squared(&p(dh, sh), law).unwrap() + 1e-12);
        }
        let r = rho_squared(&p(dh, 0.01)).unwrap() / xi_squared(&p(dh, 0.01)).unwrap();
        prop_assert!((r - 1.0 / 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn ci_margin_is_rotation_symmetric_and_scale_quadratic(re in -5.0f64..5.0, im in -5.0f64..5.0, a in 0.1f64..10.0) {
        let theta = std::f64::consts::PI / 4.0;
        let r = Complex64::new(re, im);
        prop_assert!((ci_margin(r, theta, 1.0) - ci_margin(r.conj(), theta, 1.0)).abs() < 1e-12);
        let g = ci_margin(r, theta, 1.0);
        prop_assert!((ci_margin(r * a, theta, 1.0) - a * a * g).abs() <= 1e-9 * (1.0 + a * a * g));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    // without CSI error the CI constraints are homogeneous in √Γ
    #[test]
    fn error_free_power_is_linear_in_the_target(seed in 0u64..1000, g in 0.0f64..15.0) {
        let mut s = scenario(3, 2, 4);
        s.set_sigma(0.0);
        let opts = SchemeOptions::default();
        for kind in [SchemeKind::FullCiDet, SchemeKind::FullCiProb] {
            let mut lo = Instance::generate(&s, seed, 0).unwrap();
            lo.scenario.set_gamma_db(g);
            let mut hi = lo.clone();
            hi.scenario.set_gamma_db(g + 10.0);
            let (a, b) = (lo.solve(Scheme::Ci(kind), &opts).unwrap(), hi.solve(Scheme::Ci(kind), &opts).unwrap());
            prop_assert!(a.is_optimal() && b.is_optimal());
            let ratio = b.total_power_w / a.total_power_w;
            prop_assert!((ratio - 10.0).abs() < 1e-4 * 10.0, "{kind:?} ratio {ratio}");
        }
    }

    #[test]
    fn satisfaction_never_rises_with_the_target(seed in 0u64..1000) {
        let s = scenario(3, 2, 4);
        let inst = Instance::generate(&s, seed, 0).unwrap();
        let sol = inst.solve(Scheme::Ci(SchemeKind::FullCiProb), &SchemeOptions::default()).unwrap();
        let rep = estimate_outage(&inst.scenario, &inst.csi, &inst.draw, &sol, 500, seed, Execution::Sequential).unwrap();
        for u in 0..s.n_users() {
            prop_assert_eq!(rep.sinr_samples_db[u].len(), 500);
            let v: Vec<f64> = (0..12).map(|i| rep.satisfaction_at(u, -10.0 + 4.0 * i as f64)).collect();
            prop_assert!(v.windows(2).all(|w| w[1] <= w[0]));
            prop_assert!(v.iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }
}

#[test]
fn estimate_without_error_is_the_truth() {
    let mut s = scenario(2, 2, 3);
    s.set_sigma(0.0);
    let truth = generate_channels(&s, 9);
    let csi = corrupt_csi(&truth, &s, 9);
    assert_eq!(csi.h_hat, truth);
    assert_eq!(CsiEstimate::exact(&truth, &s).h_hat, truth);
}
