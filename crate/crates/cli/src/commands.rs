use std::path::Path;

use fbd_core::analysis::{
    converge_sweep, depinning_time, early_motion, flow_rule_check, kernel_gap_study, cauchy_weight_table, stefan_residual,
    unit_gap_at_origin, FlowRuleReport, KernelGapRow, CauchyWeightRow, StefanProbe, STEFAN_WINDOW,
};
use fbd_core::error::Error;
use fbd_core::experiment::{ExperimentConfig, ExperimentError};
use fbd_core::fluctuations::FluctuationLedger;
use fbd_core::kernels::Epsilon;
use fbd_core::profile::{DomainKind, ProfileFn};
use fbd_core::scheme::{step_count, Trajectory};
use fbd_core::state::{to_p, SimState, JUMP_TOL};
use serde::Serialize;

use crate::config::RunConfig;
use crate::output::{num, Out};
use crate::CliError;

fn experiment_error(e: ExperimentError) -> CliError {
    match &e {
        ExperimentError::Setup(_) => CliError::config(e.to_string()),
        ExperimentError::Run(r) => match r.error {
            Error::Inadmissible { .. } => CliError::new(2, e.to_string()),
            _ => CliError::new(3, e.to_string()),
        },
    }
}

fn solver(e: Error) -> CliError {
    CliError::new(3, e.to_string())
}

fn validate(exp: &ExperimentConfig) -> Result<Epsilon, CliError> {
    exp.validate().map_err(|e| CliError::config(format!("experiment.{e}")))?;
    exp.eps().map_err(|e| CliError::config(e.to_string()))
}

fn all_step_times(eps: Epsilon, t_final: f64) -> Vec<f64> {
    (0..=step_count(eps, t_final)).map(|k| k as f64 * eps.dt()).collect()
}

fn profiles(traj: &Trajectory) -> Result<Vec<ProfileFn>, CliError> {
    let mut out: Vec<Option<ProfileFn>> = vec![None; traj.n_steps() + 1];
    for s in &traj.snapshots {
        out[s.n] = Some(to_p(&s.u, JUMP_TOL).map_err(solver)?);
    }
    out.into_iter()
        .map(|p| p.ok_or_else(|| CliError::new(3, "missing profile snapshot".into())))
        .collect()
}

#[derive(Serialize)]
struct ProfileSidecar {
    t_requested: f64,
    t: f64,
    n: usize,
    jump_pos: f64,
    left_limit: f64,
    right_limit: f64,
    alpha: f64,
}

fn profile_rows(f: &ProfileFn) -> Vec<Vec<String>> {
    let d = f.domain();
    (0..d.n_points()).map(|j| vec![num(d.x(j)), num(f.samples()[j])]).collect()
}

fn time_comment(t_req: f64, n: usize, dt: f64) -> Vec<String> {
    vec![format!("t = {} (requested {}, step {n})", num(n as f64 * dt), num(t_req))]
}

#[derive(Serialize)]
struct SimulateReport {
    eps2: f64,
    n_steps: usize,
    alpha: f64,
    depinning_time: Option<f64>,
    xi_final: f64,
    flow_rule: FlowRuleReport,
    early_motion: usize,
    admissibility_warnings: usize,
    stefan_probe: f64,
    stefan_mean: Option<f64>,
    stefan: Vec<StefanProbe>,
}

pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let exp = &cfg.experiment;
    let eps = validate(exp)?;
    let dt = eps.dt();
    let (init, traj) = exp.run_with_snapshots(&all_step_times(eps, exp.t_final)).map_err(experiment_error)?;
    let ps = profiles(&traj)?;
    let out = Out::new(out)?;

    let rows: Vec<Vec<String>> = (0..=traj.n_steps())
        .map(|n| {
            let mode = traj.modes[n].map_or("-".to_string(), |m| m.to_string());
            vec![num(traj.times[n]), num(traj.xis[n]), mode, num(traj.p_at_xi[n])]
        })
        .collect();
    out.csv("interface.csv", &[], &["t", "xi", "mode", "p_at_xi"], &rows)?;

    for (k, &t_req) in exp.snapshot_times.iter().enumerate() {
        let n = traj.index_at(t_req);
        let snap = traj.snapshot(n).ok_or_else(|| CliError::new(3, format!("no snapshot at step {n}")))?;
        let comment = time_comment(t_req, n, dt);
        out.csv(&format!("snapshot_{k}_u.csv"), &comment, &["x", "value"], &profile_rows(&snap.u))?;
        out.csv(&format!("snapshot_{k}_p.csv"), &comment, &["x", "value"], &profile_rows(&ps[n]))?;
        let j = snap.u.jump().ok_or_else(|| CliError::new(3, "snapshot without interface".into()))?;
        out.json(
            &format!("snapshot_{k}.json"),
            &ProfileSidecar {
                t_requested: t_req,
                t: n as f64 * dt,
                n,
                jump_pos: j.pos,
                left_limit: j.left,
                right_limit: j.right,
                alpha: init.alpha,
            },
        )?;
    }

    let probe = 3.0 * eps.value();
    let dep = depinning_time(&traj);
    let half = STEFAN_WINDOW / 2;
    let stefan: Vec<StefanProbe> = (half..=traj.n_steps().saturating_sub(half))
        .filter(|&n| n as f64 * dt >= dep + half as f64 * dt - 1e-12)
        .filter_map(|n| stefan_residual(&traj, &ps, n as f64 * dt, probe).ok())
        .collect();
    let stefan_mean = (!stefan.is_empty()).then(|| stefan.iter().map(|s| s.residual).sum::<f64>() / stefan.len() as f64);
    let tol = match exp.backend.domain_kind() {
        DomainKind::WholeLine => 1e-6,
        DomainKind::BoundedNeumann => 10.0 * exp.domain.h,
    };
    let report = SimulateReport {
        eps2: dt,
        n_steps: traj.n_steps(),
        alpha: init.alpha,
        depinning_time: dep.is_finite().then_some(dep),
        xi_final: traj.final_state.xi,
        flow_rule: flow_rule_check(&traj, tol),
        early_motion: early_motion(&traj, 0.05),
        admissibility_warnings: traj.admissibility_warnings(),
        stefan_probe: probe,
        stefan_mean,
        stefan,
    };
    out.json("diagnostics.json", &report)?;
    println!(
        "simulate: {} steps, depinning at {}, xi(T) = {:.6}, {} flow-rule violations, {} admissibility warnings",
        report.n_steps,
        report.depinning_time.map_or("never".into(), |t| format!("t = {t:.4}")),
        report.xi_final,
        report.flow_rule.violations.len(),
        report.admissibility_warnings
    );
    Ok(())
}

#[derive(Serialize)]
struct SplitSummary {
    t_requested: f64,
    t: f64,
    n: usize,
    /// `max |p - (q - f)|` on the grid
    identity_defect: f64,
    /// `max |f - f_ess4 - Σ f_neg|`
    telescoping_defect: f64,
    f_sup: f64,
    ess4_sup: f64,
    neg_sup: [f64; 4],
}

pub fn decompose(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let exp = &cfg.experiment;
    let eps = validate(exp)?;
    let dt = eps.dt();
    let times = cfg.decompose.times.clone().unwrap_or_else(|| exp.snapshot_times.clone());
    for (k, &t) in times.iter().enumerate() {
        if !(t.is_finite() && (0.0..=exp.t_final).contains(&t)) {
            return Err(CliError::config(format!("decompose.times[{k}]: {t} outside [0, {}]", exp.t_final)));
        }
    }
    // the last stage needs the shift after the requested step
    let n_last = step_count(eps, exp.t_final);
    let longer = ExperimentConfig { t_final: (n_last + 1) as f64 * dt, ..exp.clone() };
    let (init, traj) = longer.run_with_snapshots(&times).map_err(experiment_error)?;
    let ledger = FluctuationLedger::from_run(&init, &traj).map_err(solver)?;
    let out = Out::new(out)?;
    let mut summary = Vec::new();
    for (k, &t_req) in times.iter().enumerate() {
        let n = traj.index_at(t_req);
        let t = n as f64 * dt;
        let sp = ledger.split(t).map_err(solver)?;
        let snap = traj.snapshot(n).ok_or_else(|| CliError::new(3, format!("no snapshot at step {n}")))?;
        let p = to_p(&snap.u, JUMP_TOL).map_err(solver)?;
        let (q, f) = (ledger.q(n), ledger.f(n));
        let neg = sp.neg_total();
        let d = p.domain();
        let mut identity = 0.0_f64;
        let rows: Vec<Vec<String>> = (0..d.n_points())
            .map(|j| {
                let x = d.x(j);
                let (pv, qv, fv) = (p.samples()[j], q.eval(x), f.eval(x));
                identity = identity.max((pv - (qv - fv)).abs());
                vec![num(x), num(pv), num(qv), num(fv), num(sp.ess[3].eval(x)), num(neg.eval(x))]
            })
            .collect();
        let comment = time_comment(t_req, n, dt);
        out.csv(&format!("decompose_{k}.csv"), &comment, &["x", "p", "q", "f", "f_ess4", "f_neg_total"], &rows)?;
        let split_rows: Vec<Vec<String>> = (0..d.n_points())
            .map(|j| {
                let x = d.x(j);
                std::iter::once(num(x))
                    .chain(sp.ess.iter().chain(&sp.neg).map(|g| num(g.eval(x))))
                    .collect()
            })
            .collect();
        let header = ["x", "f_ess1", "f_ess2", "f_ess3", "f_ess4", "f_neg1", "f_neg2", "f_neg3", "f_neg4"];
        out.csv(&format!("split_{k}.csv"), &comment, &header, &split_rows)?;
        summary.push(SplitSummary {
            t_requested: t_req,
            t,
            n,
            identity_defect: identity,
            telescoping_defect: sp.telescoping_defect(),
            f_sup: sp.f.sup_norm(),
            ess4_sup: sp.ess[3].sup_norm(),
            neg_sup: [0, 1, 2, 3].map(|i| sp.neg[i].sup_norm()),
        });
    }
    out.json("decompose.json", &summary)?;
    let worst = summary.iter().map(|s| s.identity_defect).fold(0.0, f64::max);
    println!("decompose: {} times, max |p - (q - f)| = {worst:.3e}", summary.len());
    Ok(())
}

fn sweep_table(rep: &fbd_core::analysis::DiagnosticsReport) -> String {
    let mut s = format!(
        "{:>10} {:>10} {:>10} {:>11} {:>11} {:>11} {:>11} {:>11} {:>9} {:>9} {:>10}\n",
        "eps2", "depinning", "xi(T)", "q-heat", "neg1", "neg2", "neg3", "neg4", "hold-t", "hold-x", "stefan"
    );
    for m in &rep.members {
        s += &format!(
            "{:>10.6} {:>10} {:>10.6} {:>11.3e} {:>11.3e} {:>11.3e} {:>11.3e} {:>11.3e} {:>9.4} {:>9.4} {:>10.4}\n",
            m.eps2,
            m.depinning_time.map_or("never".into(), |t| format!("{t:.4}")),
            m.xi_final,
            m.q_heat_error,
            m.neg_sup[0],
            m.neg_sup[1],
            m.neg_sup[2],
            m.neg_sup[3],
            m.holder.time,
            m.holder.space,
            m.stefan_mean
        );
    }
    for (k, (x, p)) in rep.xi_distances.iter().zip(&rep.p_distances).enumerate() {
        s += &format!("pair {k}: sup|xi - xi'| = {x:.3e}, sup|p - p'| = {p:.3e}\n");
    }
    for (name, orders) in &rep.rate_estimates {
        let o: Vec<String> = orders.iter().map(|v| format!("{v:.3}")).collect();
        s += &format!("order {name}: {}\n", o.join(" "));
    }
    for st in rep.status.iter().filter(|st| st.error.is_some()) {
        s += &format!("FAILED eps2 = {}: {}\n", st.eps2, st.error.as_deref().unwrap_or(""));
    }
    s
}

pub fn sweep(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    validate(&cfg.experiment)?;
    let sc = cfg.sweep_config();
    sc.validate().map_err(|e| CliError::config(format!("sweep: {e}")))?;
    let (rep, _) = converge_sweep(&sc).map_err(solver)?;
    let out = Out::new(out)?;
    out.json("sweep_report.json", &rep)?;
    let mut rate_rows = Vec::new();
    for (name, orders) in &rep.rate_estimates {
        for (k, o) in orders.iter().enumerate() {
            rate_rows.push(vec![name.clone(), k.to_string(), num(*o)]);
        }
    }
    out.csv("rates.csv", &[], &["quantity", "pair", "order"], &rate_rows)?;
    let member_rows: Vec<Vec<String>> = rep
        .members
        .iter()
        .map(|m| {
            let mut r = vec![num(m.eps2), num(m.depinning_time.unwrap_or(f64::INFINITY)), num(m.xi_final), num(m.q_heat_error)];
            r.extend(m.neg_sup.iter().map(|v| num(*v)));
            r.extend([m.ess4_sup, m.ess4_dx_l2, m.holder.time, m.holder.space, m.stefan_mean].map(num));
            r
        })
        .collect();
    let header = [
        "eps2", "depinning_time", "xi_final", "q_heat_error", "neg1", "neg2", "neg3", "neg4", "ess4_sup", "ess4_dx_l2",
        "holder_time", "holder_space", "stefan_mean",
    ];
    out.csv("members.csv", &[], &header, &member_rows)?;
    for (k, m) in rep.members.iter().enumerate() {
        let rows: Vec<Vec<String>> = m
            .stefan
            .iter()
            .map(|p| [p.t, p.xi, p.xi_dot, p.slope_left, p.slope_right, p.slope_jump, p.residual].map(num).to_vec())
            .collect();
        let h = ["t", "xi", "xi_dot", "slope_left", "slope_right", "slope_jump", "residual"];
        out.csv(&format!("stefan_{k}.csv"), &[format!("eps2 = {}", num(m.eps2))], &h, &rows)?;
    }
    let table = sweep_table(&rep);
    out.text("sweep_table.txt", &table)?;
    print!("{table}");
    if rep.complete() {
        Ok(())
    } else {
        Err(CliError::new(4, "some sweep members failed; partial report written".into()))
    }
}

#[derive(Serialize)]
struct KernelReport {
    eps: f64,
    h: f64,
    unit_gap_at_origin: f64,
    gaps: Vec<KernelGapRow>,
    cauchy_weights: Vec<CauchyWeightRow>,
}

pub fn kernelcheck(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let k = &cfg.kernelcheck;
    let eps = Epsilon::new(k.eps).map_err(|e| CliError::config(format!("kernelcheck.eps: {e}")))?;
    if !(k.points_per_eps.is_finite() && k.points_per_eps >= 4.0) {
        return Err(CliError::config("kernelcheck.points_per_eps: must be at least 4".into()));
    }
    if k.n_list.contains(&0) || k.cauchy_n_list.contains(&0) {
        return Err(CliError::config("kernelcheck: n values must be positive".into()));
    }
    let h = k.eps / k.points_per_eps;
    let data: Option<ProfileFn> = if k.data_gap {
        validate(&cfg.experiment)?;
        let init: SimState = cfg.experiment.initial_state().map_err(|e| CliError::config(e.to_string()))?;
        Some(init.to_p().map_err(solver)?)
    } else {
        None
    };
    let gaps = kernel_gap_study(eps, &k.n_list, data.as_ref(), h).map_err(solver)?;
    let weights = cauchy_weight_table(&k.cauchy_n_list);
    let out = Out::new(out)?;
    let rows: Vec<Vec<String>> = gaps
        .iter()
        .map(|r| {
            let mut v = vec![r.n.to_string()];
            v.extend([r.gap, r.gap_normalized, r.data_gap, r.data_gap_normalized].map(num));
            v
        })
        .collect();
    out.csv("kernel_gap.csv", &[], &["n", "gap", "gap_normalized", "data_gap", "data_gap_normalized"], &rows)?;
    let rows: Vec<Vec<String>> =
        weights.iter().map(|r| vec![r.n.to_string(), num(r.int_b), num(r.int_b_over_s2)]).collect();
    out.csv("cauchy_weights.csv", &[], &["n", "int_b", "int_b_over_s2"], &rows)?;
    let report = KernelReport { eps: k.eps, h, unit_gap_at_origin: unit_gap_at_origin(eps), gaps, cauchy_weights: weights };
    out.json("kernelcheck.json", &report)?;
    println!("{:>6} {:>12} {:>12} {:>12}", "n", "gap", "eps n^1.5 gap", "data gap");
    for r in &report.gaps {
        println!("{:>6} {:>12.5e} {:>12.5} {:>12.5}", r.n, r.gap, r.gap_normalized, r.data_gap_normalized);
    }
    println!("{:>6} {:>12} {:>12}", "n", "int B", "int B/s^2");
    for r in &report.cauchy_weights {
        println!("{:>6} {:>12.6} {:>12.6}", r.n, r.int_b, r.int_b_over_s2);
    }
    Ok(())
}
