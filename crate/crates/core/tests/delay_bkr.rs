use coupletime_core::bkr::{
    concatenated_bkr_coupling, delayed_variant_coupling, delayed_variant_coupling_with, reconstruct_tilde_x,
    simulate_bkr, variant_coupling, variant_coupling_with, BkrOptions, BkrOutcome, BkrPlan,
};
use coupletime_core::delay::{
    calibrate_stage_epsilons, concatenated_coupling, solve_delayed_coupling, solve_delayed_coupling_with,
    DelayKernel, DelayOptions, DelayOutcome, StagePlan,
};
use coupletime_core::stats::{replicate_map, MeanSe};
use coupletime_core::{DiffusionState, Error, RngStream, StepPolicy};

fn st(x: f64, l: f64) -> DiffusionState {
    DiffusionState { x, l }
}

#[test]
fn delayed_sup_distance_shrinks_with_eps() {
    let rng = RngStream::new(31, 0);
    let opts = DelayOptions::new(StepPolicy::uniform(1e-4), 1.0);
    let means: Vec<MeanSe> = [0.1, 0.05]
        .into_iter()
        .map(|eps| {
            let k = DelayKernel::new(eps).unwrap();
            let v = replicate_map(&rng, 1000, |_, mut r| {
                solve_delayed_coupling_with(&mut r, st(0.0, 0.5), st(0.0, 0.0), &k, &opts)
                    .unwrap()
                    .sup_distance
                    .powi(2)
            });
            MeanSe::from_samples(&v)
        })
        .collect();
    for (m, eps) in means.iter().zip([0.1, 0.05]) {
        assert!(m.mean <= 105.557 * eps + 3.0 * m.se);
    }
    assert!(means[1].mean <= means[0].mean + 3.0 * (means[0].se + means[1].se));
}

#[test]
fn delayed_solver_refuses_unresolved_kernel() {
    let mut r = RngStream::new(32, 0);
    let e = solve_delayed_coupling(&mut r, st(0.0, 0.5), st(0.0, 0.0), 1e-3, 1e-2, 1.0);
    assert!(matches!(e, Err(Error::InvalidGrid(_))));
    let e = delayed_variant_coupling(&mut r, (1.0, 0.5), (-0.5, 0.2), 1e-3, 1e-2, 1.0);
    assert!(matches!(e, Err(Error::InvalidGrid(_))));
}

#[test]
fn first_stage_defaults_at_most_a_quarter_of_the_time() {
    let cal = calibrate_stage_epsilons(&RngStream::new(33, 0), 2, 1e-4).unwrap();
    let e1 = cal.epsilons[0];
    // Worst-case start scaled by ε₁: X = 0, L = ε₁ against |X̂| = ε₁, L̂ = 0.
    let k = DelayKernel::new(1e-3 * e1 * e1).unwrap();
    let opts = DelayOptions::new(StepPolicy::adaptive(1e-4 * e1 * e1), 0.25);
    let rng = RngStream::new(34, 0);
    let n = 2000;
    let defaults = replicate_map(&rng, n, |_, mut r| {
        let run = solve_delayed_coupling_with(&mut r, st(0.0, e1), st(e1, 0.0), &k, &opts).unwrap();
        run.outcome != DelayOutcome::Coupled
    });
    let p = MeanSe::proportion(defaults.iter().filter(|&&d| d).count(), n);
    assert!(p.mean <= 0.25 + 3.0 * p.se, "{} ± {}", p.mean, p.se);
}

#[test]
fn concatenation_terminates_quickly() {
    let cal = calibrate_stage_epsilons(&RngStream::new(3, 0), 5, 1e-4).unwrap();
    let plan = StagePlan::new(cal.epsilons, 1e-4).unwrap();
    let rng = RngStream::new(35, 0);
    let n = 200;
    let ledgers = replicate_map(&rng, n, |i, _| {
        concatenated_coupling(&rng.replicate(i as u64), st(0.0, 0.5), st(0.0, 0.0), &plan).unwrap()
    });
    let attempts: usize = ledgers.iter().map(|l| l.attempts()).sum();
    assert!(n as f64 / attempts as f64 >= 0.5);
    let short = ledgers.iter().filter(|l| l.stages.len() <= 20).count();
    assert!(short as f64 >= 0.95 * n as f64);
    for l in &ledgers {
        assert!(l.coupled);
        assert_eq!(l.last, l.last_hat);
    }
}

#[test]
fn reconstruction_matches_coupled_copy() {
    let rng = RngStream::new(36, 0);
    let mut checked = 0;
    for i in 0..100 {
        let mut r = rng.replicate(i);
        let mut opts = BkrOptions::new(1e-4, 50.0);
        opts.record = true;
        let run = variant_coupling_with(&mut r, (0.8, -0.2), (0.1, 0.6), &opts).unwrap();
        let Some(t1) = run.t1 else { continue };
        checked += 1;
        let xt = reconstruct_tilde_x(&run.x_path(), 0.1).unwrap();
        assert_eq!(xt[0], 0.1);
        for (p, v) in run.path.iter().zip(&xt) {
            assert!((p.reference.x - v).abs() < 1e-12);
            if p.t >= t1 {
                assert_eq!(p.driver.x, p.reference.x);
            }
        }
        // The meeting point is the midpoint of the starting abscissae.
        let hit = run.path.iter().find(|p| p.t == t1).unwrap();
        assert_eq!(hit.driver.x, 0.45);
    }
    assert!(checked >= 80);
}

#[test]
fn variant_coupling_checks_hold_on_long_runs() {
    let rng = RngStream::new(37, 0);
    let runs = replicate_map(&rng, 200, |_, mut r| {
        variant_coupling_with(&mut r, (0.6, 0.4), (-0.3, 0.9), &BkrOptions::new(1e-4, f64::INFINITY)).unwrap()
    });
    for run in &runs {
        assert_eq!(run.outcome, BkrOutcome::Coupled);
        assert!(run.diagnostics.max_reconstruction_error < 1e-12);
        assert_eq!(run.diagnostics.max_post_t1_gap, 0.0);
        assert!(run.diagnostics.domination_holds);
        assert_eq!(run.last.driver, run.last.reference);
    }
}

#[test]
fn merged_copies_stay_identical() {
    let mut r = RngStream::new(38, 0);
    let k = DelayKernel::new(0.01).unwrap();
    let mut opts = BkrOptions::new(1e-4, 1e4);
    opts.after = 1.0;
    opts.record = true;
    let run = delayed_variant_coupling_with(&mut r, (0.6, 0.4), (-0.3, 0.9), &k, &opts).unwrap();
    let t2 = run.t2.unwrap();
    assert!(run.last.t >= t2 + 1.0 - 1e-12);
    for p in run.path.iter().filter(|p| p.t >= t2) {
        assert_eq!(p.driver, p.reference);
    }
    let mut r = RngStream::new(38, 1);
    let run = variant_coupling(&mut r, (0.6, 0.4), (-0.3, 0.9), 1e-4).unwrap();
    assert!(run.protection_holds());
}

#[test]
fn delayed_bkr_gap_is_small() {
    let rng = RngStream::new(39, 0);
    let k = DelayKernel::new(0.05).unwrap();
    let opts = BkrOptions::new(1e-4, 1e6);
    let n = 500;
    let gaps = replicate_map(&rng, n, |_, mut r| {
        let run = delayed_variant_coupling_with(&mut r, (0.6, 0.4), (-0.3, 0.9), &k, &opts).unwrap();
        // Runs still uncoupled at the horizon count as exceeding δ.
        if run.outcome == BkrOutcome::Coupled {
            run.gap().unwrap()
        } else {
            f64::INFINITY
        }
    });
    let exceed = gaps.iter().filter(|&&g| g > 0.2).count();
    assert!(exceed as f64 <= 0.2 * n as f64, "{exceed} of {n}");
}

#[test]
fn reduced_pair_increments() {
    // Off the axes, |X| + |Y| is constant over a step; crossings of the y-axis
    // (sign changes of X) do not occur within the steps kept here.
    let mut r = RngStream::new(40, 0);
    let p = simulate_bkr(&mut r, 0.7, 0.4, 1e-5, 2.0).unwrap();
    let mut kept = 0;
    for w in p.states.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.x.signum() != b.x.signum() || a.x == 0.0 || b.x == 0.0 {
            continue;
        }
        kept += 1;
        let dy = b.y.abs() - a.y.abs();
        let dx = b.x.abs() - a.x.abs();
        let dl_y = (b.ell() - a.ell()).max(0.0);
        assert!((dy - (-dx + dl_y)).abs() < 1e-12);
        if a.y.signum() == b.y.signum() {
            assert!((b.ell() - a.ell()).abs() < 1e-12);
        }
    }
    assert!(kept > 1000);
}

#[test]
fn staged_bkr_coupling_restarts_rarely() {
    let cal = calibrate_stage_epsilons(&RngStream::new(3, 0), 5, 1e-4).unwrap();
    let plan = BkrPlan::new(StagePlan::new(cal.epsilons, 1e-4).unwrap());
    let rng = RngStream::new(41, 0);
    let n = 200;
    let ledgers = replicate_map(&rng, n, |i, _| {
        concatenated_bkr_coupling(&rng.replicate(i as u64), (0.6, 0.4), (-0.3, 0.9), &plan).unwrap()
    });
    let few = ledgers.iter().filter(|l| l.coupled && l.restarts <= 5).count();
    assert!(few as f64 >= 0.95 * n as f64, "{few} of {n}");
    for l in &ledgers {
        assert_eq!(l.last, l.last_hat);
    }
}

#[test]
fn origin_start_is_unsupported() {
    let mut r = RngStream::new(42, 0);
    assert!(matches!(variant_coupling(&mut r, (0.0, 0.0), (1.0, 0.0), 1e-4), Err(Error::UnsupportedStart(_))));
    let cal_free = StagePlan::new(vec![0.1, 0.01], 1e-4).unwrap();
    let e = concatenated_bkr_coupling(&r, (1.0, 1.0), (0.0, 0.0), &BkrPlan::new(cal_free));
    assert!(matches!(e, Err(Error::UnsupportedStart(_))));
}
