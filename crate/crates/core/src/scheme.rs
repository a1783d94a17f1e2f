//! One step of the implicit scheme and the time march.
//!
//! Each step convolves `uⁿ` with `g_eps`, reads off the propagation mode from
//! `ũⁿ(ξⁿ)`, moves the interface to the nearest point where `ũⁿ` reaches the
//! threshold (if it moves at all) and inserts the jump profile there.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{convolve_g, eval_s, Convolution, Epsilon};
use crate::profile::{Domain, DomainKind, Jump, ProfileFn};
use crate::state::{check_admissible, AdmissibilityReport, Mode, SimState};

/// Threshold semantics are exact: `1.0` is still standing.
pub fn classify(u_tilde_at_xi: f64) -> Result<Mode> {
    if u_tilde_at_xi.is_nan() {
        Err(Error::NanInput)
    } else if u_tilde_at_xi > 1.0 {
        Ok(Mode::LM)
    } else if u_tilde_at_xi < -1.0 {
        Ok(Mode::RM)
    } else {
        Ok(Mode::ST)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub xi: f64,
    /// `|ũ(xi) ∓ 1|`
    pub residual: f64,
}

const MAX_BISECTIONS: usize = 200;

/// Nearest crossing of the threshold in the direction of motion.
///
/// For `LM` the grid cells left of `xi_old` are scanned in order until
/// `ũ - 1` changes sign, which selects the largest root below `xi_old`; the
/// bracket is then bisected to width `x_tol`. `RM` is the mirror image
/// (`x ↦ 2 xi - x`, `u ↦ -u`) with threshold `-1`.
pub fn find_new_interface(
    u_tilde: impl Fn(f64) -> f64,
    grid: &Domain,
    xi_old: f64,
    mode: Mode,
    x_tol: f64,
) -> Result<Root> {
    let sigma = match mode {
        Mode::LM => 1.0,
        Mode::RM => -1.0,
        Mode::ST => {
            return Err(Error::InvalidParameter("standing interfaces do not move".into()));
        }
    };
    // positive where the interface still has to move on
    let phi = |x: f64| sigma * u_tilde(x) - 1.0;
    let exhausted = || Error::DomainExhausted {
        level: sigma,
        xi: xi_old,
        direction: if sigma > 0.0 { "left" } else { "right" },
        left: grid.left,
        right: grid.right,
    };
    if phi(xi_old).is_nan() {
        return Err(Error::NanInput);
    }
    if phi(xi_old) <= 0.0 {
        return Ok(Root { xi: xi_old, residual: phi(xi_old).abs() });
    }

    // scan nodes strictly beyond xi_old in the direction of motion
    let n = grid.n_cells();
    let mut inner = xi_old;
    let mut outer = None;
    if sigma > 0.0 {
        let mut j = grid.floor_index(xi_old);
        if grid.x(j) >= xi_old {
            if j == 0 {
                return Err(exhausted());
            }
            j -= 1;
        }
        loop {
            let x = grid.x(j);
            if phi(x) <= 0.0 {
                outer = Some(x);
                break;
            }
            inner = x;
            if j == 0 {
                break;
            }
            j -= 1;
        }
    } else {
        let mut j = (grid.floor_index(xi_old) + 1).min(n);
        while grid.x(j) <= xi_old && j < n {
            j += 1;
        }
        if grid.x(j) > xi_old {
            loop {
                let x = grid.x(j);
                if phi(x) <= 0.0 {
                    outer = Some(x);
                    break;
                }
                inner = x;
                if j == n {
                    break;
                }
                j += 1;
            }
        }
    }
    let Some(mut out) = outer else {
        return Err(exhausted());
    };
    // invariant: phi(inner) > 0 >= phi(out)
    let mut inn = inner;
    for _ in 0..MAX_BISECTIONS {
        if (inn - out).abs() <= x_tol {
            break;
        }
        let mid = 0.5 * (inn + out);
        if mid == inn || mid == out {
            break;
        }
        if phi(mid) > 0.0 {
            inn = mid;
        } else {
            out = mid;
        }
    }
    let (ri, ro) = (phi(inn).abs(), phi(out).abs());
    Ok(if ri < ro {
        Root { xi: inn, residual: ri }
    } else {
        Root { xi: out, residual: ro }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub eps: Epsilon,
    /// Bracket width for the interface root, relative to the domain width.
    pub root_tol: f64,
    pub admissibility_tol: f64,
    /// Fail instead of warning when a state is not admissible.
    pub strict: bool,
}

impl SchemeConfig {
    pub fn new(eps: Epsilon) -> Self {
        Self { eps, root_tol: 1e-12, admissibility_tol: 1e-8, strict: false }
    }
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state_next: SimState,
    pub mode: Mode,
    pub u_tilde_at_xi: f64,
    pub xi_shift: f64,
    pub root_residual: f64,
    /// Whether the whole-line window had to be widened to find the root.
    pub widened: bool,
}

/// One step `uⁿ ↦ uⁿ⁺¹ = ũⁿ + s_eps(· - ξⁿ⁺¹)`.
pub fn step(state: &SimState, cfg: &SchemeConfig) -> Result<StepOutcome> {
    match step_on(state, cfg) {
        Err(Error::DomainExhausted { .. }) if state.u.domain().kind == DomainKind::WholeLine => {
            let mut wide = state.clone();
            wide.u = state.u.widened(state.u.domain().width());
            let mut out = step_on(&wide, cfg)?;
            out.widened = true;
            Ok(out)
        }
        other => other,
    }
}

fn step_on(state: &SimState, cfg: &SchemeConfig) -> Result<StepOutcome> {
    let eps = cfg.eps;
    let conv = convolve_g(eps, &state.u)?;
    let v = conv.eval(state.xi);
    let mode = classify(v)?;
    let (xi_new, residual) = match mode {
        Mode::ST => (state.xi, 0.0),
        _ => {
            let d = state.u.domain();
            let root = find_new_interface(|x| conv.eval(x), d, state.xi, mode, cfg.root_tol * d.width())?;
            (root.xi, root.residual)
        }
    };
    let u_next = insert_jump(eps, &conv, xi_new)?;
    Ok(StepOutcome {
        state_next: SimState {
            u: u_next,
            xi: xi_new,
            n: state.n + 1,
            alpha: state.alpha,
            mode_last: Some(mode),
        },
        mode,
        u_tilde_at_xi: v,
        xi_shift: state.xi - xi_new,
        root_residual: residual,
        widened: false,
    })
}

/// `ũ + s_eps(· - xi)` with the limits at `xi` set to `ũ(xi) ∓ 1`.
pub fn insert_jump(eps: Epsilon, conv: &Convolution, xi: f64) -> Result<ProfileFn> {
    let d = *conv.domain();
    let samples = conv
        .node_values()
        .iter()
        .enumerate()
        .map(|(j, &v)| v + eval_s(eps, d.x(j) - xi))
        .collect();
    let (left, right) = unit_jump_limits(conv.eval(xi));
    ProfileFn::with_jump(d, samples, Jump { pos: xi, left, right })
}

/// `(v - 1, v + 1)` rounded to a common binary grid so that the difference
/// is exactly 2 in floating point. The shift is below one ulp of `|v| + 1`.
pub fn unit_jump_limits(v: f64) -> (f64, f64) {
    let left = v - 1.0;
    let m = left.abs() + 2.0;
    let q = 2f64.powi(m.log2().floor() as i32 - 51);
    let left = (left / q).round() * q;
    (left, left + 2.0)
}

/// Profile recorded at a requested time, snapped to the last step not after it.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t_requested: f64,
    pub t: f64,
    pub n: usize,
    pub u: ProfileFn,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub eps: Epsilon,
    pub alpha: f64,
    /// `tⁿ = n eps²`, one entry per state.
    pub times: Vec<f64>,
    pub xis: Vec<f64>,
    /// Mode of the step that produced each state; `None` for the initial one.
    pub modes: Vec<Option<Mode>>,
    /// `pⁿ(ξⁿ)`, the interface value of `p`.
    pub p_at_xi: Vec<f64>,
    /// Interface jump of each state.
    pub jumps: Vec<f64>,
    /// `ũⁿ(ξⁿ)` and root residual of each step.
    pub u_tilde_at_xi: Vec<f64>,
    pub root_residuals: Vec<f64>,
    pub admissibility: Vec<AdmissibilityReport>,
    pub snapshots: Vec<Snapshot>,
    pub final_state: SimState,
}

impl Trajectory {
    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn t_final(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Per-step shifts `ξⁿ - ξⁿ⁺¹`.
    pub fn shifts(&self) -> Vec<f64> {
        self.xis.windows(2).map(|w| w[0] - w[1]).collect()
    }

    /// `ξ_eps(t)`, piecewise constant in time.
    pub fn xi_at(&self, t: f64) -> f64 {
        self.xis[self.index_at(t)]
    }

    /// Index `n` with `t ∈ [n eps², (n+1) eps²)`, clamped to the run.
    pub fn index_at(&self, t: f64) -> usize {
        let n = (t / self.eps.dt() + 1e-9).floor().max(0.0) as usize;
        n.min(self.n_steps())
    }

    pub fn admissibility_warnings(&self) -> usize {
        self.admissibility.iter().filter(|r| !r.passed()).count()
    }

    pub fn snapshot(&self, n: usize) -> Option<&Snapshot> {
        self.snapshots.iter().find(|s| s.n == n)
    }
}

#[derive(Debug, Clone)]
pub struct RunError {
    pub error: Error,
    /// Everything computed before the failure.
    pub partial: Box<Trajectory>,
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (after {} steps)", self.error, self.partial.n_steps())
    }
}

impl std::error::Error for RunError {}

/// Number of steps for a final time, tolerant of `T / eps²` landing just
/// below an integer.
pub fn step_count(eps: Epsilon, t_final: f64) -> usize {
    (t_final / eps.dt() + 1e-9).floor() as usize
}

/// Runs `floor(T / eps²)` steps and records the requested snapshots.
pub fn run(
    init: SimState,
    cfg: &SchemeConfig,
    t_final: f64,
    snapshot_times: &[f64],
) -> std::result::Result<Trajectory, RunError> {
    let eps = cfg.eps;
    let dt = eps.dt();
    let n_total = step_count(eps, t_final);
    let jump0 = init.jump();
    let report0 = check_admissible(&init, cfg.admissibility_tol);
    let mut traj = Trajectory {
        eps,
        alpha: init.alpha,
        times: vec![0.0],
        xis: vec![init.xi],
        modes: vec![None],
        p_at_xi: vec![jump0.left + 1.0],
        jumps: vec![jump0.size()],
        u_tilde_at_xi: Vec::with_capacity(n_total),
        root_residuals: Vec::with_capacity(n_total),
        admissibility: vec![report0],
        snapshots: Vec::new(),
        final_state: init.clone(),
    };
    let fail = |traj: Trajectory, error: Error| RunError { error, partial: Box::new(traj) };

    if let Err(e) = eps.check_horizon(t_final) {
        return Err(fail(traj, e));
    }
    let mut wanted: Vec<(f64, usize)> = Vec::new();
    for &t in snapshot_times {
        if !(t.is_finite() && t >= 0.0) {
            return Err(fail(traj, Error::InvalidParameter(format!("snapshot time {t} must be >= 0"))));
        }
        wanted.push((t, step_count(eps, t).min(n_total)));
    }
    if cfg.strict && !report0.passed() {
        let detail = report0.failures().join("; ");
        return Err(fail(traj, Error::Inadmissible { step: 0, detail }));
    }
    let record = |traj: &mut Trajectory, state: &SimState| {
        for &(t_req, n) in &wanted {
            if n == state.n {
                traj.snapshots.push(Snapshot { t_requested: t_req, t: n as f64 * dt, n, u: state.u.clone() });
            }
        }
    };
    record(&mut traj, &init);

    let mut state = init;
    for _ in 0..n_total {
        let out = match step(&state, cfg) {
            Ok(o) => o,
            Err(e) => {
                traj.final_state = state;
                return Err(fail(traj, e));
            }
        };
        state = out.state_next;
        let j = state.jump();
        let report = check_admissible(&state, cfg.admissibility_tol);
        traj.times.push(state.n as f64 * dt);
        traj.xis.push(state.xi);
        traj.modes.push(Some(out.mode));
        traj.p_at_xi.push(j.left + 1.0);
        traj.jumps.push(j.size());
        traj.u_tilde_at_xi.push(out.u_tilde_at_xi);
        traj.root_residuals.push(out.root_residual);
        traj.admissibility.push(report);
        record(&mut traj, &state);
        if cfg.strict && !report.passed() {
            let detail = report.failures().join("; ");
            let n = state.n;
            traj.final_state = state;
            return Err(fail(traj, Error::Inadmissible { step: n, detail }));
        }
    }
    traj.snapshots.sort_by(|a, b| a.t_requested.total_cmp(&b.t_requested));
    traj.final_state = state;
    Ok(traj)
}
