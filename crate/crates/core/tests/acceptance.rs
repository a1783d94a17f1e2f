//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL` line; run
//! with `--nocapture --test-threads=1` to see them in order.

use std::sync::OnceLock;
use std::time::Instant;

use fbd_core::analysis::*;
use fbd_core::experiment::{preset_depinning, Backend, ExperimentConfig};
use fbd_core::fluctuations::{local_fluct_mass, local_fluct_ratio, FluctuationLedger};
use fbd_core::kernels::Epsilon;
use fbd_core::profile::{Domain, DomainKind, ProfileFn};
use fbd_core::scheme::{run, step, SchemeConfig, Trajectory};
use fbd_core::state::{to_p, Mode, SimState};

fn report(k: usize, ok: bool, detail: String) {
    println!("criterion {k:>2}: {} {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {k} failed: {detail}");
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn analytic_preset() -> ExperimentConfig {
    ExperimentConfig { backend: Backend::Analytic, ..preset_depinning() }
}

fn preset_runs() -> &'static [(ExperimentConfig, SimState, Trajectory); 2] {
    static RUNS: OnceLock<[(ExperimentConfig, SimState, Trajectory); 2]> = OnceLock::new();
    RUNS.get_or_init(|| {
        [preset_depinning(), analytic_preset()].map(|cfg| {
            let (init, traj) = cfg.run().unwrap();
            (cfg, init, traj)
        })
    })
}

fn sweep() -> &'static (SweepConfig, DiagnosticsReport) {
    static SWEEP: OnceLock<(SweepConfig, DiagnosticsReport)> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let cfg = SweepConfig::depinning_default(preset_depinning());
        let (rep, _) = converge_sweep(&cfg).unwrap();
        assert!(rep.complete());
        (cfg, rep)
    })
}

#[test]
fn criterion_01_depinning() {
    let start = Instant::now();
    let (_, traj) = preset_depinning().run().unwrap();
    let secs = start.elapsed().as_secs_f64();
    let t = depinning_time(&traj);
    report(1, (0.04..=0.06).contains(&t) && secs < 60.0, format!("first LM step at t = {t:.4}, run took {secs:.2} s"));
}

#[test]
fn criterion_02_jump_invariant() {
    let mut worst = [0.0_f64; 2];
    for (k, (cfg, _, traj)) in preset_runs().iter().enumerate() {
        let tol = if cfg.backend == Backend::Analytic { 0.0 } else { 10.0 * cfg.domain.h };
        worst[k] = traj.jumps.iter().map(|j| (j - 2.0).abs()).fold(0.0, f64::max);
        assert!(worst[k] <= tol);
    }
    report(2, worst[0] <= 10.0 / 400.0 && worst[1] == 0.0, format!("max |jump - 2|: fd {:.1e}, analytic {:.1e}", worst[0], worst[1]));
}

#[test]
fn criterion_03_speed_bound() {
    let bound = 0.5 * 7.0 * 0.01;
    let mut ok = true;
    let mut max_shift = 0.0_f64;
    for (_, _, traj) in preset_runs() {
        for s in traj.shifts() {
            ok &= (0.0..=bound).contains(&s);
            max_shift = max_shift.max(s);
        }
    }
    // barrier data: u = 0 left of 0, 2 + alpha x right of 0
    let mut barrier_err = 0.0_f64;
    for &(e, alpha) in &[(0.1, 7.0), (0.05, 7.0), (0.1, 3.0)] {
        let d = Domain::new(DomainKind::WholeLine, -2.0, 2.0, 0.0025).unwrap();
        let u = ProfileFn::from_fn_with_jump(d, 0.0, 0.0, 2.0, |x| if x <= 0.0 { 0.0 } else { alpha * x + 2.0 }).unwrap();
        let s = SimState::new(u, alpha).unwrap();
        let out = step(&s, &SchemeConfig::new(Epsilon::new(e).unwrap())).unwrap();
        barrier_err = barrier_err.max((out.xi_shift - e * (1.0 + 0.5 * alpha * e).ln()).abs());
    }
    ok &= barrier_err <= 1e-10;
    report(3, ok, format!("max shift {max_shift:.5} <= {bound}, barrier closed-form error {barrier_err:.1e}"));
}

#[test]
fn criterion_04_flow_rule() {
    let mut ok = true;
    let mut detail = String::new();
    for (cfg, _, traj) in preset_runs() {
        let tol = if cfg.backend == Backend::Analytic { 1e-6 } else { 10.0 * cfg.domain.h };
        let rep = flow_rule_check(traj, tol);
        ok &= rep.passed() && !traj.modes.contains(&Some(Mode::RM));
        detail += &format!("{:?}: {} violations; ", cfg.backend, rep.violations.len());
    }
    // admissible data with a moving phase
    let d = Domain::new(DomainKind::WholeLine, -2.0, 2.0, 0.0025).unwrap();
    let u = ProfileFn::from_fn_with_jump(d, 0.3, 0.0, 2.0, |x| if x <= 0.3 { 0.0 } else { 3.0 * (x - 0.3) + 2.0 }).unwrap();
    let cfg = SchemeConfig { strict: true, ..SchemeConfig::new(Epsilon::new(0.1).unwrap()) };
    let traj = run(SimState::new(u, 3.0).unwrap(), &cfg, 0.3, &[]).unwrap();
    let rep = flow_rule_check(&traj, 1e-6);
    ok &= rep.passed() && traj.shifts().iter().any(|&s| s > 0.0);
    detail += &format!("admissible barrier: {} violations", rep.violations.len());
    report(4, ok, detail);
}

#[test]
fn criterion_05_decomposition() {
    let (_, init, _) = &preset_runs()[1];
    let times = [0.03, 0.06, 0.1, 0.17, 0.25];
    let traj = run(init.clone(), &analytic_preset().scheme_config().unwrap(), 0.25, &times).unwrap();
    assert!(traj.shifts().iter().any(|&s| s > 0.0));
    let led = FluctuationLedger::from_run(init, &traj).unwrap();
    let defect = traj
        .snapshots
        .iter()
        .map(|s| to_p(&s.u, 1e-12).unwrap().sup_distance(&led.p(s.n)))
        .fold(0.0, f64::max);
    report(5, defect <= 1e-8, format!("max |p - (q - f)| = {defect:.2e} over {} times", times.len()));
}

#[test]
fn criterion_06_fluctuation_mass() {
    let mut worst = 0.0_f64;
    let mut moving = 0;
    for (cfg, _, traj) in preset_runs() {
        let eps = cfg.eps().unwrap();
        for w in traj.xis.windows(2).filter(|w| w[1] < w[0]) {
            moving += 1;
            worst = worst.max((local_fluct_mass(eps, w[0], w[1]).unwrap() - 2.0 * (w[0] - w[1])).abs());
        }
    }
    report(6, moving > 0 && worst <= 1e-8, format!("{moving} moving steps, max mass defect {worst:.1e}"));
}

#[test]
fn criterion_07_local_fluctuation_scaling() {
    let speed = 0.6;
    let vals: Vec<f64> = [0.1, 0.05, 0.025]
        .iter()
        .map(|&e| {
            let eps = Epsilon::new(e).unwrap();
            let xis: Vec<f64> = (0..20).map(|n| -speed * n as f64 * e * e).collect();
            xis.windows(2).map(|w| local_fluct_ratio(eps, w[0], w[1]).unwrap()).fold(0.0, f64::max) / e
        })
        .collect();
    let (lo, hi) = vals.iter().fold((f64::INFINITY, 0.0_f64), |(a, b), &v| (a.min(v), b.max(v)));
    report(7, hi <= 2.0 * lo, format!("sup ratio / eps = {vals:.4?}"));
}

#[test]
fn criterion_08_regular_part_order() {
    let (_, rep) = sweep();
    let errs: Vec<f64> = rep.members.iter().map(|m| m.q_heat_error).collect();
    let orders = &rep.rate_estimates["q_heat_error"];
    report(8, orders.iter().all(|&o| o >= 0.8), format!("errors {}, orders {orders:.3?}", sci(&errs)));
}

#[test]
fn criterion_09_negligible_fluctuations() {
    let (cfg, rep) = sweep();
    let first = &rep.members[0];
    let last = rep.members.last().unwrap();
    assert!((first.eps / last.eps - 2.0).abs() < 1e-12, "{:?}", cfg.eps2_list);
    let factors: Vec<f64> = (0..4).map(|i| first.neg_sup[i] / last.neg_sup[i]).collect();
    report(9, factors.iter().all(|&f| f >= 1.6), format!("shrink factors when eps halves: {factors:.3?}"));
}

#[test]
fn criterion_10_holder_stability() {
    let (_, rep) = sweep();
    let spread = |v: Vec<f64>| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        v.iter().copied().fold(0.0, f64::max) / lo
    };
    let time = spread(rep.holder_quotients.iter().map(|h| h.time).collect());
    let space = spread(rep.holder_quotients.iter().map(|h| h.space).collect());
    report(10, time < 1.5 && space < 1.5, format!("max/min over sweep: time {time:.3}, space {space:.3}"));
}

#[test]
fn criterion_11_kernel_gap() {
    let start = Instant::now();
    let eps = Epsilon::new(0.1).unwrap();
    let rows = kernel_gap_study(eps, &[4, 16, 64, 256, 1024], None, 0.1 / 40.0).unwrap();
    let at16 = rows[1].gap_normalized;
    let max_gap = rows.iter().map(|r| r.gap_normalized).fold(0.0, f64::max);
    let weights = cauchy_weight_table(&[1, 10, 100, 1000]);
    let col = |f: fn(&CauchyWeightRow) -> f64| (weights.iter().map(f).fold(0.0, f64::max), f(&weights[1]));
    let (b_max, b_10) = col(|r| r.int_b);
    let (s_max, s_10) = col(|r| r.int_b_over_s2);
    let secs = start.elapsed().as_secs_f64();
    let ok = max_gap <= 2.0 * at16 && b_max <= 2.0 * b_10 && s_max <= 2.0 * s_10 && secs < 120.0;
    let gaps: Vec<f64> = rows.iter().map(|r| r.gap_normalized).collect();
    report(11, ok, format!("normalized gaps {gaps:.4?}, int B max {b_max:.4}, int B/s^2 max {s_max:.4}, {secs:.1} s"));
}

#[test]
fn criterion_12_cauchy_decay() {
    let (_, rep) = sweep();
    let dec = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
    report(
        12,
        dec(&rep.xi_distances) && dec(&rep.p_distances),
        format!("xi distances {}, p distances {}", sci(&rep.xi_distances), sci(&rep.p_distances)),
    );
}

#[test]
fn criterion_13_stefan_residual() {
    let (_, rep) = sweep();
    let decreasing = rep.stefan_residuals.windows(2).all(|w| w[1] < w[0]);
    // slope-jump trace of the preset member: dip below 1.0, later above 1.5
    let trace = &rep.members[0].slope_jumps;
    let dip = trace.iter().position(|&(_, j)| j.abs() < 1.0);
    let recovered = dip.is_some_and(|k| trace[k..].iter().any(|&(_, j)| j.abs() > 1.5));
    let min = trace.iter().map(|p| p.1.abs()).fold(f64::INFINITY, f64::min);
    let after = dip.map_or(f64::NAN, |k| trace[k..].iter().map(|p| p.1.abs()).fold(0.0, f64::max));
    report(
        13,
        decreasing && dip.is_some() && recovered,
        format!(
            "mean residuals {:.4?}; slope jump min {min:.3}, max after dip {after:.3} (needs < 1.0 then > 1.5)",
            rep.stefan_residuals
        ),
    );
}
