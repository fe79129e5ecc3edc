//! The subcommands: each reads an [`ExperimentConfig`], writes CSV tables and
//! SVG plots into an [`OutputDir`] and returns summary lines for the terminal.

use anyhow::Result;
use coupletime_core::bkr::{concatenated_bkr_coupling, variant_coupling_with, BkrOptions, BkrPlan};
use coupletime_core::delay::{
    calibrate_stage_epsilons, delay_bound_constant, solve_delayed_coupling_with, DelayKernel, DelayOptions, StagePlan,
};
use coupletime_core::levy::{path_csv, simulate_levy_path};
use coupletime_core::maximal::{maximal_mgf, overlap_curve};
use coupletime_core::reflection::{
    estimate_coupling_cdf, mgf_closed_form, mgf_quadrature, rao_blackwell_mgf, run_reflection_sync_with, RunOptions,
};
use coupletime_core::stats::{replicate_map, MeanSe};
use coupletime_core::{CouplingConfig, DiffusionState, RngStream, StepPolicy, TimeGrid};

use crate::config::{ConfigError, ExperimentConfig};
use crate::output::{num, opt, Csv, OutputDir};
use crate::svg::{region_diagram, thin, Chart, Series};

const PLOT_POINTS: usize = 4000;

// Stream tags, so that every table draws from its own replicate family.
const TAG_MGF: u64 = 1;
const TAG_CDF: u64 = 2;
const TAG_DELAY: u64 = 3;
const TAG_CALIBRATION: u64 = 4;
const TAG_BKR: u64 = 5;
const TAG_PATHS: u64 = 6;

fn root(cfg: &ExperimentConfig, tag: u64) -> RngStream {
    RngStream::new(cfg.seed, tag)
}

fn coupling_start(cfg: &ExperimentConfig) -> Result<CouplingConfig> {
    let [b0, s0, bt0, st0] = cfg.start;
    Ok(CouplingConfig::new(b0, s0, bt0, st0)?)
}

/// Summary of the MGF table.
pub struct MgfReport {
    pub max_rel_error: f64,
    pub lines: Vec<String>,
}

/// `mgf.csv` (alpha,b,closed_form,quadrature,mc_estimate,mc_se), `mgf_cdf.csv`
/// (t,cdf,se) and `mgf.svg`.
pub fn cmd_mgf(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<MgfReport> {
    let c = coupling_start(cfg)?;
    if c.is_singular() {
        return Err(ConfigError(
            "singular start: equal supremum floors s0 = s̃0 couple at the first meeting, so the two-stage transform does not apply".into(),
        )
        .into());
    }
    if !c.is_closed_form_case() {
        return Err(ConfigError("the closed-form transform needs starts with s0 = b0 and s̃0 = b̃0".into()).into());
    }
    let n = c.normalized();
    let gap = n.b0 - n.b_tilde0;
    let rng = root(cfg, TAG_MGF);
    let mut csv = Csv::new(&["alpha", "b", "closed_form", "quadrature", "mc_estimate", "mc_se"]);
    let mut rows = Vec::new();
    let mut max_rel: f64 = 0.0;
    for (i, &alpha) in cfg.alpha_grid.iter().enumerate() {
        let closed = mgf_closed_form(gap, alpha)?.value;
        let quad = mgf_quadrature(0.5 * gap, alpha)?.value;
        let mc = rao_blackwell_mgf(&rng.child(i as u64), &c, alpha, cfg.replicates, cfg.dt)?;
        max_rel = max_rel.max((closed - quad).abs() / closed);
        csv.row(&[num(alpha), num(0.5 * gap), num(closed), num(quad), num(mc.estimate), num(mc.se)]);
        rows.push((alpha, closed, quad, mc));
    }
    out.write("mgf.csv", &csv.finish())?;

    let cdf = estimate_coupling_cdf(&root(cfg, TAG_CDF), &c, &cfg.t_grid, cfg.replicates, cfg.dt)?;
    let mut csv = Csv::new(&["t", "cdf", "se"]);
    for p in &cdf {
        csv.row(&[num(p.t), num(p.cdf), num(p.se)]);
    }
    out.write("mgf_cdf.csv", &csv.finish())?;

    let chart = Chart {
        title: "Coupling-time transform E[exp(-α T)]".into(),
        x_label: "α".into(),
        y_label: "transform".into(),
        log_x: true,
        series: vec![
            Series::line("closed form", rows.iter().map(|r| (r.0, r.1)).collect()),
            Series::line("quadrature", rows.iter().map(|r| (r.0, r.2)).collect()).with_markers(),
            Series::line("Monte Carlo ± 3 SE", rows.iter().map(|r| (r.0, r.3.estimate)).collect())
                .with_band(rows.iter().map(|r| (r.0, r.3.estimate - 3.0 * r.3.se, r.3.estimate + 3.0 * r.3.se)).collect())
                .with_markers(),
        ],
    };
    out.write("mgf.svg", &chart.render())?;
    let mut lines = vec![format!("max |closed - quadrature| / closed = {max_rel:.3e}")];
    for (alpha, closed, _, mc) in &rows {
        lines.push(format!(
            "alpha {alpha}: closed {closed:.6}, Monte Carlo {:.6} ± {:.6} ({:+.2} SE)",
            mc.estimate,
            mc.se,
            (mc.estimate - closed) / mc.se
        ));
    }
    Ok(MgfReport {
        max_rel_error: max_rel,
        lines,
    })
}

pub struct MaximalReport {
    /// Largest `(overlap - immersed_cdf)` in combined-SE units over the time grid.
    pub max_margin_se: f64,
    pub monotone: bool,
    pub lines: Vec<String>,
}

/// `maximal.csv` (t,overlap,tv,immersed_cdf,immersed_se), `maximal_summary.csv`
/// (alpha,maximal_mgf,immersed_mgf) and `maximal.svg`.
pub fn cmd_maximal_compare(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<MaximalReport> {
    let c = coupling_start(cfg)?;
    let overlap = overlap_curve(&c, &cfg.t_grid)?;
    let cdf = estimate_coupling_cdf(&root(cfg, TAG_CDF), &c, &cfg.t_grid, cfg.replicates, cfg.dt)?;
    let mut csv = Csv::new(&["t", "overlap", "tv", "immersed_cdf", "immersed_se"]);
    let mut margin = f64::NEG_INFINITY;
    for (o, p) in overlap.iter().zip(&cdf) {
        csv.row(&[num(o.t), num(o.coupling_prob), num(o.tv), num(p.cdf), num(p.se)]);
        let se = (p.se * p.se + o.quadrature_error * o.quadrature_error).sqrt();
        margin = margin.max((o.coupling_prob - p.cdf) / se);
    }
    out.write("maximal.csv", &csv.finish())?;
    let mut ts: Vec<(f64, f64)> = overlap.iter().map(|o| (o.t, o.coupling_prob)).collect();
    ts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let monotone = ts.windows(2).all(|w| w[1].1 >= w[0].1 - 1e-9);

    let mut lines = vec![format!("maximum margin of the overlap over the immersed coupling: {margin:.2} SE")];
    if c.is_closed_form_case() {
        let gap = c.normalized().b0 - c.normalized().b_tilde0;
        let mut csv = Csv::new(&["alpha", "maximal_mgf", "immersed_mgf"]);
        for &alpha in &cfg.alpha_grid {
            let m = maximal_mgf(&c, alpha)?;
            let imm = mgf_closed_form(gap, alpha)?.value;
            csv.row(&[num(alpha), num(m.value), num(imm)]);
            lines.push(format!(
                "alpha {alpha}: maximal {:.6} ± {:.1e} vs immersed {imm:.6}",
                m.value, m.error
            ));
        }
        out.write("maximal_summary.csv", &csv.finish())?;
    }
    let chart = Chart {
        title: "Maximal vs immersed coupling".into(),
        x_label: "t".into(),
        y_label: "P(coupled by t)".into(),
        log_x: false,
        series: vec![
            Series::line("maximal (overlap)", overlap.iter().map(|o| (o.t, o.coupling_prob)).collect()).with_markers(),
            Series::line("reflection/synchronized ± 3 SE", cdf.iter().map(|p| (p.t, p.cdf)).collect())
                .with_band(cdf.iter().map(|p| (p.t, p.cdf - 3.0 * p.se, p.cdf + 3.0 * p.se)).collect())
                .with_markers(),
        ],
    };
    out.write("maximal.svg", &chart.render())?;
    Ok(MaximalReport {
        max_margin_se: margin,
        monotone,
        lines,
    })
}

pub struct DelayRow {
    pub eps: f64,
    pub mean_sup_sq: MeanSe,
    pub bound: f64,
}

/// `delay.csv` (eps,dt,mean_sup_sq,se,bound) and `delay.svg`.
pub fn cmd_delay_demo(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<Vec<DelayRow>> {
    let c = delay_bound_constant()?;
    let start = DiffusionState {
        x: cfg.delay_start[0],
        l: cfg.delay_start[1],
    };
    let start_hat = DiffusionState {
        x: cfg.delay_start_hat[0],
        l: cfg.delay_start_hat[1],
    };
    let rng = root(cfg, TAG_DELAY);
    let mut rows = Vec::new();
    let mut csv = Csv::new(&["eps", "dt", "mean_sup_sq", "se", "bound"]);
    for (i, &eps) in cfg.eps_grid.iter().enumerate() {
        let kernel = DelayKernel::new(eps)?;
        // Resolve the initial lag ε³; a coarser grid reproduces the undelayed reference.
        let dt = cfg.dt.min(0.25 * eps * eps * eps);
        let opts = DelayOptions::new(StepPolicy::uniform(dt), cfg.delay_horizon);
        let r = rng.child(i as u64);
        let sq: Vec<Result<f64>> = replicate_map(&r, cfg.replicates, |_, mut s| {
            Ok(solve_delayed_coupling_with(&mut s, start, start_hat, &kernel, &opts)?.sup_distance.powi(2))
        });
        let sq = sq.into_iter().collect::<Result<Vec<f64>>>()?;
        let m = MeanSe::from_samples(&sq);
        csv.row(&[num(eps), num(dt), num(m.mean), num(m.se), num(c * eps)]);
        rows.push(DelayRow {
            eps,
            mean_sup_sq: m,
            bound: c * eps,
        });
    }
    out.write("delay.csv", &csv.finish())?;
    let chart = Chart {
        title: "Delayed coupling: mean squared sup distance".into(),
        x_label: "ε".into(),
        y_label: "E[sup |B̂ - B̃|²]".into(),
        log_x: false,
        series: vec![
            Series::line("simulated ± 3 SE", rows.iter().map(|r| (r.eps, r.mean_sup_sq.mean)).collect())
                .with_band(
                    rows.iter()
                        .map(|r| (r.eps, r.mean_sup_sq.mean - 3.0 * r.mean_sup_sq.se, r.mean_sup_sq.mean + 3.0 * r.mean_sup_sq.se))
                        .collect(),
                )
                .with_markers(),
            Series::line("bound C·ε", rows.iter().map(|r| (r.eps, r.bound)).collect()),
        ],
    };
    out.write("delay.svg", &chart.render())?;
    Ok(rows)
}

pub struct BkrReport {
    pub runs: usize,
    pub coupled: usize,
    pub max_restarts: usize,
    pub lines: Vec<String>,
}

/// `bkr.csv` (t1,t2,restarts,total_time), `bkr_ledgers.csv`
/// (run_id,stages,defaults,total_time), `bkr_path.csv` (t,x,y,k,x_tilde,y_tilde)
/// and `bkr_region.svg`.
pub fn cmd_bkr(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<BkrReport> {
    let start = (cfg.bkr_start[0], cfg.bkr_start[1]);
    let start_hat = (cfg.bkr_start_hat[0], cfg.bkr_start_hat[1]);
    // Sample path of the variant coupling (also rejects origin starts early).
    let mut opts = BkrOptions::new(cfg.dt, cfg.path_horizon);
    opts.record = true;
    let run = variant_coupling_with(&mut root(cfg, TAG_PATHS).child(1), start, start_hat, &opts)?;
    out.write("bkr_path.csv", &run.csv())?;
    let h = 0.5 * (start.0.abs() + start.1.abs());
    let driver: Vec<(f64, f64)> = run.path.iter().map(|p| (p.driver.x, p.driver.y)).collect();
    let reference: Vec<(f64, f64)> = run.path.iter().map(|p| (p.reference.x, p.reference.y)).collect();
    out.write(
        "bkr_region.svg",
        &region_diagram(
            "BKR variant coupling",
            h,
            &[("driver", thin(&driver, PLOT_POINTS)), ("reference", thin(&reference, PLOT_POINTS))],
        ),
    )?;

    let cal = calibrate_stage_epsilons(&root(cfg, TAG_CALIBRATION), cfg.stages, cfg.dt)?;
    let plan = BkrPlan::new(StagePlan::new(cal.epsilons, cfg.dt)?);
    let rng = root(cfg, TAG_BKR);
    let ledgers = replicate_map(&rng, cfg.bkr_runs, |i, _| {
        concatenated_bkr_coupling(&rng.replicate(i as u64), start, start_hat, &plan)
    });
    let ledgers = ledgers.into_iter().collect::<coupletime_core::Result<Vec<_>>>()?;
    let mut runs = Csv::new(&["t1", "t2", "restarts", "total_time"]);
    let mut led = Csv::new(&["run_id", "stages", "defaults", "total_time"]);
    for (i, l) in ledgers.iter().enumerate() {
        runs.row(&[opt(l.t1), opt(l.t2), l.restarts.to_string(), num(l.total_time)]);
        led.row(&[i.to_string(), l.stages.len().to_string(), l.defaults().to_string(), num(l.total_time)]);
    }
    out.write("bkr.csv", &runs.finish())?;
    out.write("bkr_ledgers.csv", &led.finish())?;
    let coupled = ledgers.iter().filter(|l| l.coupled).count();
    let max_restarts = ledgers.iter().map(|l| l.restarts).max().unwrap_or(0);
    let few = ledgers.iter().filter(|l| l.restarts <= 5).count();
    Ok(BkrReport {
        runs: ledgers.len(),
        coupled,
        max_restarts,
        lines: vec![format!(
            "{coupled}/{} staged BKR runs coupled; {few} within 5 restarts (max {max_restarts})",
            ledgers.len()
        )],
    })
}

/// `paths_coupling.csv` (t,b,s,b_tilde,s_tilde) with `paths_coupling.svg`,
/// `levy.csv` (t,b,s) with `levy.svg`, and `paths_bkr.svg`.
pub fn cmd_paths(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<Vec<String>> {
    let c = coupling_start(cfg)?;
    let mut opts = RunOptions::new(StepPolicy::adaptive(cfg.dt));
    opts.record = true;
    opts.horizon = cfg.path_horizon;
    let run = run_reflection_sync_with(&mut root(cfg, TAG_PATHS).child(0), &c, &opts)?;
    let mut csv = Csv::new(&["t", "b", "s", "b_tilde", "s_tilde"]);
    for p in &run.path {
        csv.row(&[num(p.t), num(p.b), num(p.s), num(p.b_tilde), num(p.s_tilde)]);
    }
    out.write("paths_coupling.csv", &csv.finish())?;
    let pts = thin(&run.path, PLOT_POINTS);
    let chart = Chart {
        title: "Reflection/synchronized coupling".into(),
        x_label: "t".into(),
        y_label: "value".into(),
        log_x: false,
        series: vec![
            Series::line("B", pts.iter().map(|p| (p.t, p.b)).collect()),
            Series::line("B̃", pts.iter().map(|p| (p.t, p.b_tilde)).collect()),
            Series::line("S", pts.iter().map(|p| (p.t, p.s)).collect()),
            Series::line("S̃", pts.iter().map(|p| (p.t, p.s_tilde)).collect()),
        ],
    };
    out.write("paths_coupling.svg", &chart.render())?;

    let grid = TimeGrid::covering(1.0, cfg.dt.max(1e-4))?;
    let levy = simulate_levy_path(&mut root(cfg, TAG_PATHS).child(2), 0.0, 0.0, &grid)?;
    out.write("levy.csv", &path_csv(&grid, &levy))?;
    let idx: Vec<usize> = thin(&(0..levy.len()).collect::<Vec<_>>(), PLOT_POINTS);
    let chart = Chart {
        title: "Brownian motion and its running supremum".into(),
        x_label: "t".into(),
        y_label: "value".into(),
        log_x: false,
        series: vec![
            Series::line("B", idx.iter().map(|&k| (grid.time(k), levy[k].b)).collect()),
            Series::line("S", idx.iter().map(|&k| (grid.time(k), levy[k].s)).collect()),
            Series::line("|X| = S - B", idx.iter().map(|&k| (grid.time(k), levy[k].abs_x())).collect()),
        ],
    };
    out.write("levy.svg", &chart.render())?;

    let start = (cfg.bkr_start[0], cfg.bkr_start[1]);
    let start_hat = (cfg.bkr_start_hat[0], cfg.bkr_start_hat[1]);
    let mut opts = BkrOptions::new(cfg.dt, cfg.path_horizon);
    opts.record = true;
    let bkr = variant_coupling_with(&mut root(cfg, TAG_PATHS).child(1), start, start_hat, &opts)?;
    let h = 0.5 * (start.0.abs() + start.1.abs());
    let d: Vec<(f64, f64)> = bkr.path.iter().map(|p| (p.driver.x, p.driver.y)).collect();
    let r: Vec<(f64, f64)> = bkr.path.iter().map(|p| (p.reference.x, p.reference.y)).collect();
    out.write(
        "paths_bkr.svg",
        &region_diagram("BKR diffusion paths", h, &[("driver", thin(&d, PLOT_POINTS)), ("reference", thin(&r, PLOT_POINTS))]),
    )?;
    Ok(vec![format!(
        "coupling run: T1 = {}, T_couple = {}; BKR run: T1 = {}, T2 = {}",
        opt(run.t1),
        opt(run.t_couple),
        opt(bkr.t1),
        opt(bkr.t2)
    )])
}
