//! Acceptance suite: one check per criterion, each printed as a PASS/FAIL line.
//! Runs as a plain binary (`harness = false`) so the lines always appear.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use coupletime_core::bkr::{simulate_bkr, variant_coupling_with, BkrOptions, BkrOutcome};
use coupletime_core::delay::{
    calibrate_stage_epsilons, concatenated_coupling, delay_bound_constant, sign_flip_frequency, sign_flip_probability,
    solve_delayed_coupling_with, DelayKernel, DelayOptions, StagePlan,
};
use coupletime_core::levy::simulate_levy_terminal;
use coupletime_core::maximal::{joint_density, maximal_mgf, overlap_integral, total_mass, ShiftedJointLaw};
use coupletime_core::quadrature::{integrate, integrate_lower, integrate_upper, QuadOptions};
use coupletime_core::reflection::{
    estimate_coupling_cdf, m1_tail, mgf_closed_form, mgf_quadrature, phi_drift, rao_blackwell_mgf,
    run_reflection_sync_with, CouplingConfig, QuadrantCoupling, RunOptions,
};
use coupletime_core::stats::{replicate_map, MeanSe};
use coupletime_core::{DiffusionState, RngStream, StepPolicy, TimeGrid};
use statrs::distribution::{ChiSquared, ContinuousCDF};

type Outcome = Result<String, String>;

fn verdict(pass: bool, detail: String) -> Outcome {
    if pass {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn reference_config() -> CouplingConfig {
    CouplingConfig::new(1.0, 1.0, 0.0, 0.0).unwrap()
}

fn mgf_identity() -> Outcome {
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    for alpha in [0.25f64, 1.0, 4.0] {
        for gap in [0.5, 1.0, 2.0] {
            let closed = mgf_closed_form(gap, alpha).map_err(|e| e.to_string())?.value;
            let quad = mgf_quadrature(0.5 * gap, alpha).map_err(|e| e.to_string())?.value;
            worst = worst.max((closed - quad).abs() / closed);
        }
    }
    let secs = started.elapsed().as_secs_f64();
    verdict(
        worst < 1e-8 && secs < 1.0,
        format!("max relative error {worst:.2e} (< 1e-8), {secs:.3} s (< 1 s)"),
    )
}

fn rao_blackwell() -> Outcome {
    let started = Instant::now();
    let cfg = reference_config();
    let est = rao_blackwell_mgf(&RngStream::new(2, 0), &cfg, 1.0, 100_000, 1e-4).map_err(|e| e.to_string())?;
    let closed: f64 = mgf_closed_form(1.0, 1.0).map_err(|e| e.to_string())?.value;
    let z = (est.estimate - closed) / est.se;
    let secs = started.elapsed().as_secs_f64();
    verdict(
        z.abs() <= 3.0 && est.se < 5e-3 && secs < 300.0,
        format!(
            "estimate {:.6} ± {:.2e} vs closed form {closed:.6} ({z:+.2} SE), {secs:.1} s",
            est.estimate, est.se
        ),
    )
}

fn m1_law() -> Outcome {
    let cfg = reference_config();
    let b = 0.5;
    let mut opts = RunOptions::new(StepPolicy::adaptive(1e-4));
    opts.stop_after_t1 = true;
    let rng = RngStream::new(3, 0);
    let m1 = replicate_map(&rng, 100_000, |_, mut r| run_reflection_sync_with(&mut r, &cfg, &opts).map(|run| run.m1));
    let m1 = m1.into_iter().collect::<Result<Vec<f64>, _>>().map_err(|e| e.to_string())?;
    let mut pass = true;
    let mut parts = Vec::new();
    for a in [0.5 * b, b, 2.0 * b] {
        let p = MeanSe::proportion(m1.iter().filter(|&&m| m >= 1.0 + a).count(), m1.len());
        let want = m1_tail(a, b).map_err(|e| e.to_string())?;
        let z = (p.mean - want) / p.se;
        pass &= z.abs() <= 3.0;
        parts.push(format!("a={a}: {:.4} vs {want:.4} ({z:+.2} SE)", p.mean));
    }
    verdict(pass, parts.join("; "))
}

/// Mass of `{s_lo ≤ S < s_hi, d_lo ≤ S - B < d_hi}` under `law`.
fn cell_probability(law: &ShiftedJointLaw, s: (f64, f64), d: (f64, f64)) -> f64 {
    let opts = QuadOptions::new(1e-12, 1e-10);
    let inner = |sv: f64| {
        if d.1.is_infinite() {
            integrate_lower(|b: f64| joint_density(b, sv, law), sv - d.0, &opts).unwrap().value
        } else {
            integrate(|b: f64| joint_density(b, sv, law), sv - d.1, sv - d.0, &opts).unwrap().value
        }
    };
    if s.1.is_infinite() {
        integrate_upper(inner, s.0, &opts).unwrap().value
    } else {
        integrate(inner, s.0, s.1, &opts).unwrap().value
    }
}

fn joint_density_law() -> Outcome {
    let law = ShiftedJointLaw::<f64>::new(0.0, 0.0, 1.0).map_err(|e| e.to_string())?;
    let (mass, _) = total_mass(&law).map_err(|e| e.to_string())?;
    let tail = cell_probability(&law, (1.0, f64::INFINITY), (0.0, f64::INFINITY));

    let s_edges = [0.0, 0.4, 0.8, 1.2, 1.7, f64::INFINITY];
    let d_edges = [0.0, 0.3, 0.7, 1.2, 2.0, f64::INFINITY];
    let n = 100_000;
    let grid = TimeGrid::new(0.0, 0.25, 4).map_err(|e| e.to_string())?;
    let rng = RngStream::new(4, 0);
    let pairs = replicate_map(&rng, n, |_, mut r| simulate_levy_terminal(&mut r, 0.0, 0.0, &grid).unwrap());
    let bin = |v: f64, edges: &[f64]| edges.windows(2).position(|w| v >= w[0] && v < w[1]).unwrap();
    let mut counts = [0usize; 25];
    for p in &pairs {
        counts[bin(p.s, &s_edges) * 5 + bin(p.s - p.b, &d_edges)] += 1;
    }
    let mut chi2 = 0.0;
    for i in 0..5 {
        for j in 0..5 {
            let e = n as f64 * cell_probability(&law, (s_edges[i], s_edges[i + 1]), (d_edges[j], d_edges[j + 1]));
            let o = counts[i * 5 + j] as f64;
            chi2 += (o - e) * (o - e) / e;
        }
    }
    let pval = 1.0 - ChiSquared::new(24.0).unwrap().cdf(chi2);
    verdict(
        (mass - 1.0).abs() <= 1e-6 && (tail - 0.31731).abs() <= 1e-4 && pval > 1e-3,
        format!("mass {mass:.10}, P(S_1 > 1) = {tail:.6}, chi-square {chi2:.1} on 24 dof (p = {pval:.3})"),
    )
}

fn non_maximality() -> Outcome {
    let started = Instant::now();
    let cfg = reference_config();
    let overlap = overlap_integral(&cfg, 1.0).map_err(|e| e.to_string())?;
    let cdf = estimate_coupling_cdf(&RngStream::new(5, 0), &cfg, &[1.0], 100_000, 1e-4).map_err(|e| e.to_string())?;
    let margin = overlap.coupling_prob - cdf[0].cdf;
    let se = (cdf[0].se.powi(2) + overlap.quadrature_error.powi(2)).sqrt();

    let maximal = maximal_mgf(&cfg, 1.0).map_err(|e| e.to_string())?;
    let closed: f64 = mgf_closed_form(1.0, 1.0).map_err(|e| e.to_string())?.value;
    let quad = mgf_quadrature(0.5f64, 1.0).map_err(|e| e.to_string())?;
    let num_err = maximal.error + quad.error.max((closed - quad.value).abs());
    let mgf_margin = maximal.value - closed;
    let secs = started.elapsed().as_secs_f64();
    verdict(
        margin > 5.0 * se && mgf_margin > 5.0 * num_err && secs < 600.0,
        format!(
            "overlap(1) {:.5} vs immersed {:.5} ({:.1} SE); maximal mgf {:.6} vs {closed:.6} ({:.1e} × error), {secs:.1} s",
            overlap.coupling_prob,
            cdf[0].cdf,
            margin / se,
            maximal.value,
            mgf_margin / num_err
        ),
    )
}

fn delay_constant() -> Outcome {
    let started = Instant::now();
    let c = delay_bound_constant().map_err(|e| e.to_string())?;
    let secs = started.elapsed().as_secs_f64();
    verdict(
        (c - 105.557).abs() <= 1e-3 && secs < 1.0,
        format!("constant {c:.6} (105.557 ± 1e-3), {secs:.3} s"),
    )
}

fn sign_flip() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (k, (t, eps)) in [(1.0, 0.2), (0.5, 0.3), (2.0, 0.4), (0.1, 0.45), (0.3, 0.2)].into_iter().enumerate() {
        let m = sign_flip_frequency(&RngStream::new(7, k as u64), t, eps, 100_000).map_err(|e| e.to_string())?;
        let p: f64 = sign_flip_probability(t, eps).map_err(|e| e.to_string())?;
        let z = (m.mean - p) / m.se;
        pass &= z.abs() <= 3.0;
        parts.push(format!("({t},{eps}) {z:+.2} SE"));
    }
    verdict(pass, parts.join(", "))
}

fn delayed_bound() -> Outcome {
    let c = delay_bound_constant().map_err(|e| e.to_string())?;
    let start = DiffusionState { x: 0.0, l: 0.5 };
    let start_hat = DiffusionState { x: 0.0, l: 0.0 };
    let mut pass = true;
    let mut parts = Vec::new();
    for (k, eps) in [0.02, 0.05, 0.1].into_iter().enumerate() {
        let kernel = DelayKernel::new(eps).map_err(|e| e.to_string())?;
        // The step must resolve the initial lag ψ = ε³, or the delayed copy
        // degenerates into the undelayed reference.
        let opts = DelayOptions::new(StepPolicy::uniform(f64::min(2.5e-5, 0.25 * eps * eps * eps)), 1.0);
        let sq = replicate_map(&RngStream::new(8, k as u64), 10_000, |_, mut r| {
            solve_delayed_coupling_with(&mut r, start, start_hat, &kernel, &opts).map(|run| run.sup_distance.powi(2))
        });
        let sq = sq.into_iter().collect::<Result<Vec<f64>, _>>().map_err(|e| e.to_string())?;
        let m = MeanSe::from_samples(&sq);
        pass &= m.mean <= c * eps + 3.0 * m.se;
        parts.push(format!("eps {eps}: {:.5} ± {:.5} ≤ {:.3}", m.mean, m.se, c * eps));
    }
    verdict(pass, parts.join("; "))
}

fn concatenation() -> Outcome {
    let cal = calibrate_stage_epsilons(&RngStream::new(9, 0), 5, 1e-4).map_err(|e| e.to_string())?;
    let plan = StagePlan::new(cal.epsilons, 1e-4).map_err(|e| e.to_string())?;
    let rng = RngStream::new(9, 1);
    let n = 200;
    let ledgers = replicate_map(&rng, n, |i, _| {
        concatenated_coupling(
            &rng.replicate(i as u64),
            DiffusionState { x: 0.0, l: 0.5 },
            DiffusionState { x: 0.0, l: 0.0 },
            &plan,
        )
    });
    let ledgers = ledgers.into_iter().collect::<Result<Vec<_>, _>>().map_err(|e| e.to_string())?;
    let attempts: usize = ledgers.iter().map(|l| l.attempts()).sum();
    let coupled = ledgers.iter().filter(|l| l.coupled).count();
    let success = coupled as f64 / attempts as f64;
    let short = ledgers.iter().filter(|l| l.coupled && l.stages.len() <= 20).count();
    verdict(
        success >= 0.5 && short as f64 >= 0.95 * n as f64,
        format!("per-attempt success {success:.3} (≥ 0.5), {short}/{n} within 20 stages (≥ 95%)"),
    )
}

fn bkr_invariants() -> Outcome {
    let dt: f64 = 1e-4;
    let tol = 5.0 * dt.sqrt();
    let (x0, y0) = (0.3, -0.7);
    let h = 0.5 * (x0 as f64).abs() + 0.5 * (y0 as f64).abs();
    let rng = RngStream::new(10, 0);
    let paths = replicate_map(&rng, 500, |_, mut r| simulate_bkr(&mut r, x0, y0, dt, 1.0));
    let paths = paths.into_iter().collect::<Result<Vec<_>, _>>().map_err(|e| e.to_string())?;
    let mut residual: f64 = 0.0;
    let mut exact = true;
    let mut min_inc = f64::INFINITY;
    let mut min_ell = f64::INFINITY;
    let mut protected = 0;
    for p in &paths {
        let scale = 1.0 + p.states.iter().map(|s| s.ell().max(s.a.abs())).fold(0.0, f64::max);
        let r = p.max_constraint_residual();
        exact &= r <= 4.0 * f64::EPSILON * scale;
        residual = residual.max(r);
        min_inc = min_inc.min(p.min_ell_increment());
        min_ell = min_ell.min(p.min_ell());
        protected += p.protection_holds() as usize;
    }
    verdict(
        exact && min_inc >= -tol && min_ell >= 2.0 * h - tol && protected == paths.len(),
        format!(
            "constraint residual {residual:.1e} (rounding), min Δℓ {min_inc:.1e}, min ℓ {min_ell:.6} (2h = {}), protection {protected}/500",
            2.0 * h
        ),
    )
}

fn bkr_variant() -> Outcome {
    let rng = RngStream::new(11, 0);
    let opts = BkrOptions::new(1e-4, f64::INFINITY);
    let runs = replicate_map(&rng, 500, |_, mut r| variant_coupling_with(&mut r, (0.6, 0.4), (-0.3, 0.9), &opts));
    let runs = runs.into_iter().collect::<Result<Vec<_>, _>>().map_err(|e| e.to_string())?;
    let recon = runs.iter().map(|r| r.diagnostics.max_reconstruction_error).fold(0.0, f64::max);
    let post = runs.iter().map(|r| r.diagnostics.max_post_t1_gap).fold(0.0, f64::max);
    let coupled = runs.iter().filter(|r| r.outcome == BkrOutcome::Coupled).count();
    let dominated = runs.iter().filter(|r| r.diagnostics.domination_holds).count();
    verdict(
        recon <= 1e-12 && post == 0.0 && coupled == 500 && dominated == 500,
        format!("reconstruction error {recon:.1e}, post-T1 gap {post}, coupled {coupled}/500, domination {dominated}/500"),
    )
}

fn phi_diagnostic() -> Outcome {
    let (u0, v0, horizon, n) = (1.0, 0.5, 0.05, 100_000);
    let refl = phi_drift(&RngStream::new(12, 0), u0, v0, QuadrantCoupling::Reflection, horizon, n).map_err(|e| e.to_string())?;
    let sync = phi_drift(&RngStream::new(12, 1), u0, v0, QuadrantCoupling::Synchronized, horizon, n).map_err(|e| e.to_string())?;
    let zr = refl.mean / refl.se;
    let zs = sync.mean / sync.se;
    verdict(
        zr.abs() <= 3.0 && zs < -3.0,
        format!(
            "reflection drift {:.2e} ({zr:+.2} SE), synchronized drift {:.2e} ({zs:+.2} SE)",
            refl.mean, sync.mean
        ),
    )
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let base = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance-determinism");
    let _ = std::fs::remove_dir_all(&base);
    let mut outputs = Vec::new();
    for (run, workers) in [(0, 1), (1, 3)] {
        let out = base.join(format!("run{run}"));
        let status = Command::new(env!("CARGO_BIN_EXE_coupletime"))
            .args(["--seed", "17", "--workers", &workers.to_string(), "--out"])
            .arg(&out)
            .arg("check")
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(format!("check exited with {}", status.status));
        }
        outputs.push(csv_files(&out));
    }
    let same = outputs[0] == outputs[1];
    verdict(
        same && !outputs[0].is_empty(),
        format!("{} CSV files byte-identical with --workers 1 and 3: {same}", outputs[0].len()),
    )
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 13] = [
        (1, "closed-form transform vs quadrature", mgf_identity),
        (2, "Rao-Blackwellized Monte Carlo transform", rao_blackwell),
        (3, "midpoint overshoot law", m1_law),
        (4, "joint law of (B, S)", joint_density_law),
        (5, "maximal coupling beats the immersed coupling", non_maximality),
        (6, "delay bound constant", delay_constant),
        (7, "sign-flip probability", sign_flip),
        (8, "delayed-coupling sup bound", delayed_bound),
        (9, "concatenated coupling terminates", concatenation),
        (10, "BKR scheme invariants", bkr_invariants),
        (11, "BKR variant coupling", bkr_variant),
        (12, "quadrant potential drift", phi_diagnostic),
        (13, "check determinism", determinism),
    ];
    let only: Option<u32> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = Vec::new();
    for (id, name, f) in criteria {
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let started = Instant::now();
        let result = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = started.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS criterion {id} ({name}): {detail} [{secs:.1} s]"),
            Err(detail) => {
                println!("FAIL criterion {id} ({name}): {detail} [{secs:.1} s]");
                failed.push(id);
            }
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
