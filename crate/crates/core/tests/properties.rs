use coupletime_core::bkr::{simulate_bkr_with, SwitchLabels};
use coupletime_core::delay::DelayKernel;
use coupletime_core::levy::{from_levy, to_levy, DiffusionState, LevyPair};
use coupletime_core::reflection::{mgf_closed_form, quadrant_phi};
use coupletime_core::sim_kernel::{bridge_maximum_from_uniform, crossing_probability};
use coupletime_core::RngStream;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn levy_transform_round_trips(x in -10.0f64..10.0, l in 0.0f64..10.0) {
        let pair = to_levy(DiffusionState { x, l }).unwrap();
        prop_assert!(pair.s >= pair.b);
        let sign = if x < 0.0 { -1 } else { 1 };
        let back = from_levy(pair, sign).unwrap();
        prop_assert!((back.x - x).abs() <= 1e-12 * (1.0 + l));
        prop_assert_eq!(back.l, l);
    }

    #[test]
    fn levy_pair_rejects_s_below_b(b in -5.0f64..5.0, d in 1e-9f64..5.0) {
        prop_assert!(LevyPair::<f64>::new(b, b - d).is_err());
    }

    #[test]
    fn crossing_probability_is_a_probability(x0 in -3.0f64..3.0, x1 in -3.0f64..3.0, level in -3.0f64..3.0, h in 1e-4f64..4.0) {
        let p = crossing_probability(x0, x1, level, h);
        prop_assert!((0.0..=1.0).contains(&p));
        // Time reversal.
        prop_assert!((p - crossing_probability(x1, x0, level, h)).abs() < 1e-15);
        // Endpoints on opposite sides of the level always cross.
        if (x0 - level) * (x1 - level) < 0.0 {
            prop_assert_eq!(p, 1.0);
        }
    }

    #[test]
    fn bridge_maximum_dominates_endpoints(x0 in -3.0f64..3.0, x1 in -3.0f64..3.0, h in 1e-4f64..4.0, u in 1e-12f64..1.0) {
        let m = bridge_maximum_from_uniform(x0, x1, h, u);
        prop_assert!(m >= x0 && m >= x1);
        prop_assert!(m <= bridge_maximum_from_uniform(x0, x1, h, u * 0.5));
    }

    #[test]
    fn mgf_is_decreasing_in_gap_and_rate(gap in 0.05f64..3.0, alpha in 0.05f64..5.0) {
        let v = mgf_closed_form(gap, alpha).unwrap().value;
        prop_assert!(v > 0.0 && v < 1.0);
        prop_assert!(mgf_closed_form(gap * 1.1, alpha).unwrap().value <= v);
        prop_assert!(mgf_closed_form(gap, alpha * 1.1).unwrap().value <= v);
    }

    #[test]
    fn phi_range(u in 1e-6f64..5.0, v in 1e-6f64..5.0) {
        let phi = quadrant_phi(u, v).unwrap();
        prop_assert!(phi > 0.0 && phi <= 1.0 + 1e-15);
        prop_assert!((quadrant_phi(u, u).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn delayed_clock_is_causal_and_monotone(eps in 1e-3f64..0.499, t in 0.0f64..100.0, dt in 0.0f64..1.0) {
        let k = DelayKernel::new(eps).unwrap();
        let s = k.sigma(t);
        prop_assert!(s >= 0.0 && s <= t);
        if t > 0.0 {
            prop_assert!(s < t || k.psi(t) < f64::EPSILON * t);
        }
        prop_assert!(k.sigma(t + dt) >= s);
    }

    #[test]
    fn bkr_scheme_invariants(x0 in -2.0f64..2.0, y0 in -2.0f64..2.0, seed in 0u64..1000, flipped in any::<bool>()) {
        prop_assume!(x0.abs() + y0.abs() > 1e-3);
        let labels = if flipped { SwitchLabels::Flipped } else { SwitchLabels::Consistent };
        let mut r = RngStream::new(seed, 0);
        let dt = 1e-4;
        let p = simulate_bkr_with(&mut r, x0, y0, dt, 0.2, labels).unwrap();
        let h = 0.5 * (x0.abs() + y0.abs());
        let scale = 1.0 + p.states.iter().map(|s| s.ell().max(s.a.abs())).fold(0.0, f64::max);
        prop_assert!(p.max_constraint_residual() <= 4.0 * f64::EPSILON * scale);
        prop_assert!(p.min_ell_increment() >= -5.0 * dt.sqrt());
        prop_assert!(p.min_ell() >= 2.0 * h - 5.0 * dt.sqrt());
        if !flipped {
            prop_assert!(p.protection_holds());
        }
        for w in p.states.windows(2) {
            let da = (w[1].a - w[0].a).abs();
            prop_assert!(((w[1].x - w[0].x).abs() - da).abs() <= 4.0 * f64::EPSILON * scale);
            prop_assert!(((w[1].y - w[0].y).abs() - da).abs() <= 4.0 * f64::EPSILON * scale);
        }
    }
}
