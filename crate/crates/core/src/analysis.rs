//! Diagnostics for runs and ε-sweeps: the exact heat solution of
//! piecewise-linear data, Stefan and flow-rule residuals, Hölder quotients of
//! the essential fluctuation, kernel-power gaps and the sweep harness.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use libm::{erf, erfc};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::experiment::{ExperimentConfig, ExperimentError};
use crate::fluctuations::{local_fluct_mass, local_fluct_ratio, FluctuationLedger};
use crate::kernels::{conv_power, convolve_g, eval_g, eval_h, Epsilon, KernelKind};
use crate::profile::{Domain, DomainKind, ProfileFn};
use crate::quadrature::{l2_norm_uniform, Composite};
use crate::scheme::{step_count, Trajectory};
use crate::state::{to_p, Mode, SimState, JUMP_TOL};

/// Steps in the centred difference quotient for the interface speed.
pub const STEFAN_WINDOW: usize = 10;

// ---------------------------------------------------------------------------
// exact heat flow of piecewise-linear data

/// Whole-line heat flow of a linearly continued piecewise-linear profile.
///
/// With `p = c + b (x - y₀) + Σ κ_k (x - y_k)₊ + (J/2) sgn(x - ξ)` and
/// `σ² = 2t`, each ramp evolves into `d Φ(d/σ) + σ φ(d/σ)` with `d = x - y_k`
/// and the step into `(J/2) erf((x - ξ)/(2√t))`.
#[derive(Debug, Clone)]
pub struct HeatSolution {
    y0: f64,
    c0: f64,
    slope0: f64,
    ramps: Vec<(f64, f64)>,
    step: Option<(f64, f64)>,
}

impl HeatSolution {
    pub fn new(p: &ProfileFn) -> Self {
        let knots = p.knots();
        let step = p.jump().filter(|j| j.size() != 0.0).map(|j| (j.pos, j.size()));
        let half = step.map_or(0.0, |(_, s)| 0.5 * s);
        // continuous part: one-sided values minus the half step
        let cont = |x: f64, v: f64| match step {
            Some((pos, _)) if x < pos => v + half,
            Some((pos, _)) if x > pos => v - half,
            _ => v,
        };
        let slopes: Vec<f64> = knots
            .windows(2)
            .map(|w| {
                let (a, b) = (&w[0], &w[1]);
                let va = if step.is_some_and(|(pos, _)| pos == a.x) { a.right - half } else { cont(a.x, a.right) };
                let vb = if step.is_some_and(|(pos, _)| pos == b.x) { b.left + half } else { cont(b.x, b.left) };
                (vb - va) / (b.x - a.x)
            })
            .collect();
        let ramps = (1..knots.len() - 1)
            .map(|k| (knots[k].x, slopes[k] - slopes[k - 1]))
            .filter(|&(_, kappa)| kappa != 0.0)
            .collect();
        let k0 = &knots[0];
        Self { y0: k0.x, c0: cont(k0.x, k0.right), slope0: slopes[0], ramps, step }
    }

    pub fn eval(&self, t: f64, x: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::InvalidParameter(format!("heat time {t} must be positive")));
        }
        let sigma = (2.0 * t).sqrt();
        let mut v = self.c0 + self.slope0 * (x - self.y0);
        for &(y, kappa) in &self.ramps {
            let d = x - y;
            let z = d / sigma;
            let cdf = 0.5 * erfc(-z / std::f64::consts::SQRT_2);
            let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
            v += kappa * (d * cdf + sigma * pdf);
        }
        if let Some((pos, size)) = self.step {
            v += 0.5 * size * erf((x - pos) / (2.0 * t.sqrt()));
        }
        Ok(v)
    }
}

/// `(G₀(t) * p_ini)(x)` for piecewise-linear `p_ini` continued linearly.
pub fn heat_exact(p_ini: &ProfileFn, t: f64, x: f64) -> Result<f64> {
    HeatSolution::new(p_ini).eval(t, x)
}

/// The same profile on a whole-line grid with identical nodes.
pub fn on_whole_line(p: &ProfileFn) -> ProfileFn {
    let wl = Domain { kind: DomainKind::WholeLine, ..*p.domain() };
    ProfileFn::from_parts(wl, p.samples().to_vec(), p.jump())
}

// ---------------------------------------------------------------------------
// Stefan condition

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StefanProbe {
    pub t: f64,
    pub n: usize,
    pub xi: f64,
    pub xi_dot: f64,
    pub slope_left: f64,
    pub slope_right: f64,
    /// `∂ₓp(ξ+) - ∂ₓp(ξ-)`.
    pub slope_jump: f64,
    /// `|2 ξ̇ + slope_jump|`.
    pub residual: f64,
}

/// Degree of the one-sided least-squares fits.
pub const SLOPE_FIT_DEGREE: usize = 3;

/// Least-squares polynomial fit of the samples in `[from, to]`, returning the
/// derivative of the fit at `at`.
fn fitted_slope(p: &ProfileFn, from: f64, to: f64, at: f64) -> Result<f64> {
    let d = p.domain();
    let k = SLOPE_FIT_DEGREE + 1;
    let (mid, half) = (0.5 * (from + to), 0.5 * (to - from));
    let pts: Vec<(f64, f64)> = (0..d.n_points())
        .map(|j| (d.x(j), p.samples()[j]))
        .filter(|&(x, _)| x >= from && x <= to)
        .map(|(x, v)| ((x - mid) / half, v))
        .collect();
    if pts.len() < 2 * k {
        return Err(Error::InvalidParameter(format!("too few grid points in [{from}, {to}] for a slope fit")));
    }
    // normal equations in the scaled variable, Gauss-Jordan with partial pivoting
    let mut m = vec![vec![0.0; k + 1]; k];
    for &(z, v) in &pts {
        let mut pw = 1.0;
        let mut row = [0.0; 8];
        for r in row.iter_mut().take(k) {
            *r = pw;
            pw *= z;
        }
        for i in 0..k {
            for j in 0..k {
                m[i][j] += row[i] * row[j];
            }
            m[i][k] += row[i] * v;
        }
    }
    for c in 0..k {
        let piv = (c..k).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())).unwrap();
        m.swap(c, piv);
        for r in 0..k {
            if r != c {
                let f = m[r][c] / m[c][c];
                for j in c..=k {
                    m[r][j] -= f * m[c][j];
                }
            }
        }
    }
    let z = (at - mid) / half;
    let mut slope = 0.0;
    let mut pw = 1.0;
    for i in 1..k {
        slope += i as f64 * m[i][k] / m[i][i] * pw;
        pw *= z;
    }
    Ok(slope / half)
}

/// One-sided derivatives `∂ₓp(ξ-)` and `∂ₓp(ξ+)`: polynomial least-squares
/// fits on `[ξ - 2δ, ξ - δ]` and `[ξ + δ, ξ + 2δ]`, extrapolated to `ξ`.
pub fn slope_jump(p: &ProfileFn, xi: f64, probe: f64) -> Result<(f64, f64)> {
    let d = p.domain();
    if xi - 2.0 * probe < d.left || xi + 2.0 * probe > d.right {
        return Err(Error::InvalidParameter(format!("probe {probe} leaves the grid around xi = {xi}")));
    }
    Ok((
        fitted_slope(p, xi - 2.0 * probe, xi - probe, xi)?,
        fitted_slope(p, xi + probe, xi + 2.0 * probe, xi)?,
    ))
}

/// Stefan residual at time `t`. `profiles[n]` is `pⁿ`; the speed is the
/// centred difference of `ξ` over [`STEFAN_WINDOW`] steps.
pub fn stefan_residual(traj: &Trajectory, profiles: &[ProfileFn], t: f64, probe: f64) -> Result<StefanProbe> {
    let eps = traj.eps;
    if probe < 3.0 * eps.value() * (1.0 - 1e-12) {
        return Err(Error::InvalidParameter(format!("probe {probe} is closer than 3 eps to the interface")));
    }
    let n = traj.index_at(t);
    let half = STEFAN_WINDOW / 2;
    let dt = eps.dt();
    if n < half || n + half > traj.n_steps() || t < 0.0 {
        return Err(Error::WindowOutOfRange {
            from: t - half as f64 * dt,
            to: t + half as f64 * dt,
            t_final: traj.t_final(),
        });
    }
    if profiles.len() <= n {
        return Err(Error::HistoryTooShort { needed: n, available: profiles.len().saturating_sub(1) });
    }
    let xi = traj.xis[n];
    let xi_dot = (traj.xis[n + half] - traj.xis[n - half]) / (STEFAN_WINDOW as f64 * dt);
    let (sl, sr) = slope_jump(&profiles[n], xi, probe)?;
    let jump = sr - sl;
    Ok(StefanProbe {
        t,
        n,
        xi,
        xi_dot,
        slope_left: sl,
        slope_right: sr,
        slope_jump: jump,
        residual: (2.0 * xi_dot + jump).abs(),
    })
}

// ---------------------------------------------------------------------------
// flow rule

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    /// Standing with `p(ξ)` outside `[-1, 1]`.
    StandingOutsideBand,
    /// Moving left with `p(ξ) != 1`.
    MovingOffThreshold,
    /// A right-moving step.
    RightMoving,
    /// `ξ` increased.
    Rightward,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub step: usize,
    pub kind: ViolationKind,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRuleReport {
    pub tol: f64,
    pub steps: usize,
    pub violations: Vec<Violation>,
    pub worst: f64,
}

impl FlowRuleReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every step of a run against the hysteretic flow rule.
pub fn flow_rule_check(traj: &Trajectory, tol: f64) -> FlowRuleReport {
    let mut violations = Vec::new();
    let mut push = |step, kind, magnitude: f64| violations.push(Violation { step, kind, magnitude });
    for n in 1..traj.xis.len() {
        let p = traj.p_at_xi[n];
        match traj.modes[n] {
            Some(Mode::ST) => {
                let out = (p.abs() - 1.0).max(0.0);
                if out > tol {
                    push(n, ViolationKind::StandingOutsideBand, out);
                }
            }
            Some(Mode::LM) => {
                if (p - 1.0).abs() > tol {
                    push(n, ViolationKind::MovingOffThreshold, (p - 1.0).abs());
                }
            }
            Some(Mode::RM) => push(n, ViolationKind::RightMoving, traj.xis[n] - traj.xis[n - 1]),
            None => {}
        }
        let up = traj.xis[n] - traj.xis[n - 1];
        if up > 0.0 {
            push(n, ViolationKind::Rightward, up);
        }
    }
    let worst = violations.iter().map(|v| v.magnitude).fold(0.0, f64::max);
    FlowRuleReport { tol, steps: traj.n_steps(), violations, worst }
}

/// Left-moving steps started from a state with `p(ξ) < 1 - delta`. The limit
/// model forbids these; at finite `eps` the kernel average lets a few through.
pub fn early_motion(traj: &Trajectory, delta: f64) -> usize {
    (1..traj.xis.len())
        .filter(|&n| traj.modes[n] == Some(Mode::LM) && traj.p_at_xi[n - 1] < 1.0 - delta)
        .count()
}

/// First time at which a left-moving step has happened; infinite if never.
pub fn depinning_time(traj: &Trajectory) -> f64 {
    traj.modes
        .iter()
        .position(|m| *m == Some(Mode::LM))
        .map_or(f64::INFINITY, |n| traj.times[n])
}

/// Largest `|(pⁿ⁺¹ - pⁿ)/eps² - D² pⁿ⁺¹|` over interior nodes farther than
/// `collar` from both interface positions.
pub fn bulk_residual(prev: &ProfileFn, next: &ProfileFn, dt: f64, xis: (f64, f64), collar: f64) -> f64 {
    let d = next.domain();
    let (a, b) = (prev.samples(), next.samples());
    let h2 = d.h * d.h;
    (1..d.n_points() - 1)
        .filter(|&j| {
            let x = d.x(j);
            (x - xis.0).abs() > collar && (x - xis.1).abs() > collar
        })
        .map(|j| ((b[j] - a[j]) / dt - (b[j + 1] - 2.0 * b[j] + b[j - 1]) / h2).abs())
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Hölder quotients

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderSampling {
    pub t_range: (f64, f64),
    pub x_range: (f64, f64),
    pub pairs: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderQuotients {
    pub gamma: f64,
    /// `sup |f(t₂,x) - f(t₁,x)| / |t₂ - t₁|^γ`
    pub time: f64,
    /// `sup |f(t,x₂) - f(t,x₁)| / |x₂ - x₁|^{1/2}`
    pub space: f64,
}

pub fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 0.5 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("Hölder exponent {gamma} must lie in (0, 1/2)")))
    }
}

/// Empirical Hölder quotients of `f(t, x)` over seeded random pairs. The
/// sample points depend only on the sampling description, so runs with
/// different `eps` are compared on identical points.
pub fn holder_quotient<F>(f: F, gamma: f64, s: &HolderSampling) -> Result<HolderQuotients>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    check_gamma(gamma)?;
    let (t0, t1) = s.t_range;
    let (x0, x1) = s.x_range;
    if !(t0 < t1 && x0 < x1) {
        return Err(Error::InvalidParameter("empty sampling window".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let pts: Vec<[f64; 4]> = (0..s.pairs)
        .map(|_| {
            [
                rng.random_range(t0..t1),
                rng.random_range(t0..t1),
                rng.random_range(x0..x1),
                rng.random_range(x0..x1),
            ]
        })
        .collect();
    let (time, space) = pts
        .par_iter()
        .map(|&[ta, tb, xa, xb]| {
            let qt = if ta != tb { (f(tb, xa) - f(ta, xa)).abs() / (tb - ta).abs().powf(gamma) } else { 0.0 };
            let qx = if xa != xb { (f(ta, xb) - f(ta, xa)).abs() / (xb - xa).abs().sqrt() } else { 0.0 };
            (qt, qx)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
    Ok(HolderQuotients { gamma, time, space })
}

// ---------------------------------------------------------------------------
// kernel powers

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelGapRow {
    pub n: usize,
    /// `sup |g^{*n} - h^{*n}|` on the grid.
    pub gap: f64,
    /// `eps n^{3/2} gap`
    pub gap_normalized: f64,
    /// `sup |g^{*n} * q - h^{*n} * q|`
    pub data_gap: f64,
    /// `√n / eps · data_gap / ‖q″‖₁`
    pub data_gap_normalized: f64,
}

/// Symmetric grid with the origin as a node, wide enough for `conv_power`.
pub fn power_grid(eps: Epsilon, n: usize, h: f64) -> Result<Domain> {
    let half = 20.0 * eps.value() * (n as f64).sqrt() + 10.0 * eps.value();
    let cells = (half / h).ceil();
    Domain::new(DomainKind::BoundedNeumann, -cells * h, cells * h, h)
}

/// Second antiderivative of a sampled kernel that vanishes at the left end.
fn double_primitive(h: f64, k: &[f64]) -> Vec<f64> {
    let mut first = vec![0.0; k.len()];
    let mut second = vec![0.0; k.len()];
    for j in 1..k.len() {
        first[j] = first[j - 1] + 0.5 * h * (k[j] + k[j - 1]);
        second[j] = second[j - 1] + 0.5 * h * (first[j] + first[j - 1]);
    }
    second
}

/// Gap table for the exponential and Gaussian kernel powers. With data, the
/// data-convolved gap uses that `(K * q)` for piecewise-linear `q` is
/// `Σ κ_k Ψ(· - y_k)` with `Ψ` the second primitive of `K` (affine parts
/// cancel because both kernels preserve them).
pub fn kernel_gap_study(eps: Epsilon, n_list: &[usize], data: Option<&ProfileFn>, h: f64) -> Result<Vec<KernelGapRow>> {
    let ramps: Vec<(f64, f64)> = match data {
        Some(q) => {
            if q.jump_size().abs() > JUMP_TOL {
                return Err(Error::InvalidParameter("data for the gap study must be continuous".into()));
            }
            HeatSolution::new(q).ramps
        }
        None => Vec::new(),
    };
    let mass: f64 = ramps.iter().map(|r| r.1.abs()).sum();
    n_list
        .par_iter()
        .map(|&n| {
            let grid = power_grid(eps, n, h)?;
            let g = conv_power(KernelKind::G, eps, n, &grid)?;
            let hh = conv_power(KernelKind::H, eps, n, &grid)?;
            let gap = g.sup_distance(&hh);
            let nf = n as f64;
            let (data_gap, data_gap_normalized) = if ramps.is_empty() {
                (0.0, 0.0)
            } else {
                let diff: Vec<f64> = g.samples().iter().zip(hh.samples()).map(|(a, b)| a - b).collect();
                let psi = ProfileFn::new(grid, double_primitive(grid.h, &diff))?;
                let lo = ramps.iter().map(|r| r.0).fold(f64::INFINITY, f64::min) + grid.left;
                let hi = ramps.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max) + grid.right;
                let m = ((hi - lo) / grid.h).ceil() as usize;
                let sup = (0..=m)
                    .map(|j| {
                        let x = lo + j as f64 * grid.h;
                        ramps
                            .iter()
                            .map(|&(y, k)| {
                                let z = x - y;
                                if z <= grid.left || z >= grid.right { 0.0 } else { k * psi.eval(z) }
                            })
                            .sum::<f64>()
                            .abs()
                    })
                    .fold(0.0, f64::max);
                (sup, sup * nf.sqrt() / (eps.value() * mass))
            };
            Ok(KernelGapRow { n, gap, gap_normalized: eps.value() * nf.powf(1.5) * gap, data_gap, data_gap_normalized })
        })
        .collect()
}

/// Pointwise gap at the origin for `n = 1`, `g_eps(0) - h_eps(0)`.
pub fn unit_gap_at_origin(eps: Epsilon) -> f64 {
    eval_g(eps, 0.0) - eval_h(eps, 0.0)
}

/// `A_n(s) - A_∞(s)` with `A_n = (1 + s²/n)^{-n}`, `A_∞ = exp(-s²)`.
fn a_gap(n: f64, s: f64) -> f64 {
    let s2 = s * s;
    let log_an = -n * (s2 / n).ln_1p();
    if s2 > 700.0 {
        return log_an.exp();
    }
    (-s2).exp() * (s2 + log_an).exp_m1()
}

/// `(∫ B_n, ∫ s⁻² B_n)` over the real line, `B_n = n |A_n - A_∞|`, by
/// Gauss–Legendre after `s = √n tan θ`.
pub fn cauchy_weight_integrals(n: usize) -> (f64, f64) {
    let nf = n as f64;
    let rn = nf.sqrt();
    let mut breaks: Vec<f64> = [0.0, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 16.0, 32.0, 64.0]
        .iter()
        .map(|s: &f64| (s / rn).atan())
        .collect();
    breaks.push(std::f64::consts::FRAC_PI_2);
    let q = Composite::new(20, 8);
    let b = |th: f64| {
        let s = rn * th.tan();
        let jac = rn / th.cos().powi(2);
        (nf * a_gap(nf, s), jac, s)
    };
    let i0 = q.integrate(&breaks, |th| {
        let (v, jac, _) = b(th);
        v * jac
    });
    let i2 = q.integrate(&breaks, |th| {
        let (v, _, _) = b(th);
        // s⁻² ds = dθ / (√n sin²θ)
        v / (rn * th.sin().powi(2))
    });
    (2.0 * i0, 2.0 * i2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CauchyWeightRow {
    pub n: usize,
    pub int_b: f64,
    pub int_b_over_s2: f64,
}

pub fn cauchy_weight_table(n_list: &[usize]) -> Vec<CauchyWeightRow> {
    n_list
        .iter()
        .map(|&n| {
            let (a, b) = cauchy_weight_integrals(n);
            CauchyWeightRow { n, int_b: a, int_b_over_s2: b }
        })
        .collect()
}

/// `√π Γ(n - 1/2) / Γ(n)`, the integral of `(1 + z²)^{-n}`.
pub fn cauchy_power_integral(n: usize) -> f64 {
    let nf = n as f64;
    (0.5 * std::f64::consts::PI.ln() + ln_gamma(nf - 0.5) - ln_gamma(nf)).exp()
}

// ---------------------------------------------------------------------------
// sweep

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub base: ExperimentConfig,
    /// Strictly decreasing time steps.
    pub eps2_list: Vec<f64>,
    pub gamma: f64,
    /// Defaults to the step times of the coarsest member.
    #[serde(default)]
    pub comparison_times: Option<Vec<f64>>,
    /// Time of the regular-part comparison with the heat flow.
    pub heat_time: f64,
    /// Stefan probe distance in units of `eps`.
    pub probe_factor: f64,
    pub holder_pairs: usize,
    pub seed: u64,
}

impl SweepConfig {
    pub fn depinning_default(base: ExperimentConfig) -> Self {
        Self {
            base,
            eps2_list: vec![0.01, 0.005, 0.0025],
            gamma: 0.25,
            comparison_times: None,
            heat_time: 0.1,
            probe_factor: 3.0,
            holder_pairs: 4000,
            seed: 7,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_gamma(self.gamma)?;
        if self.eps2_list.len() < 3 {
            return Err(Error::InvalidParameter(format!(
                "eps2_list: need at least 3 values to estimate rates, got {}",
                self.eps2_list.len()
            )));
        }
        if self.eps2_list.windows(2).any(|w| !(w[1] < w[0])) || self.eps2_list.iter().any(|&e| !(e > 0.0)) {
            return Err(Error::InvalidParameter("eps2_list: must be positive and strictly decreasing".into()));
        }
        if !(self.heat_time > 0.0 && self.heat_time <= self.base.t_final) {
            return Err(Error::InvalidParameter(format!("heat_time: {} outside (0, t_final]", self.heat_time)));
        }
        if !(self.probe_factor >= 3.0) {
            return Err(Error::InvalidParameter("probe_factor: must be at least 3".into()));
        }
        if self.holder_pairs == 0 {
            return Err(Error::InvalidParameter("holder_pairs: must be positive".into()));
        }
        self.base.validate()
    }

    fn times(&self) -> Vec<f64> {
        match &self.comparison_times {
            Some(t) => t.clone(),
            None => {
                let dt = self.eps2_list[0];
                (0..=step_count(Epsilon::from_eps2(dt).unwrap(), self.base.t_final)).map(|k| k as f64 * dt).collect()
            }
        }
    }

    /// Hölder sampling window shared by all members.
    pub fn holder_sampling(&self) -> HolderSampling {
        let t_hi = self.base.t_final - 2.0 * self.eps2_list[0];
        let d = &self.base.domain;
        let x_lo = 0.5 * (d.left + self.base.init.xi0);
        let x_hi = 0.5 * (d.right + self.base.init.xi0);
        HolderSampling { t_range: (0.0, t_hi), x_range: (x_lo, x_hi), pairs: self.holder_pairs, seed: self.seed }
    }
}

/// Everything computed for one member of a sweep.
#[derive(Debug, Clone)]
pub struct MemberRun {
    pub eps: Epsilon,
    pub init: SimState,
    pub traj: Trajectory,
    /// `pⁿ` for every step.
    pub profiles: Vec<ProfileFn>,
    /// Fluctuation ledger on the whole-line version of the grid.
    pub ledger: FluctuationLedger,
}

impl MemberRun {
    pub fn p_at(&self, t: f64) -> &ProfileFn {
        &self.profiles[self.traj.index_at(t)]
    }

    /// Mid-step times `(n + 1/2) eps²` at which all four stages exist.
    pub fn split_times(&self) -> Vec<f64> {
        let dt = self.eps.dt();
        (0..self.ledger.n_steps()).map(|n| (n as f64 + 0.5) * dt).collect()
    }
}

/// Runs one member and builds its ledger.
pub fn run_member(base: &ExperimentConfig, eps2: f64) -> std::result::Result<MemberRun, ExperimentError> {
    let cfg = base.with_eps2(eps2);
    let eps = cfg.eps().map_err(ExperimentError::Setup)?;
    let all: Vec<f64> = (0..=step_count(eps, cfg.t_final)).map(|k| k as f64 * eps.dt()).collect();
    let (init, traj) = cfg.run_with_snapshots(&all)?;
    let setup = |e| ExperimentError::Setup(e);
    let mut by_step = vec![None; traj.n_steps() + 1];
    for s in &traj.snapshots {
        by_step[s.n] = Some(to_p(&s.u, JUMP_TOL).map_err(setup)?);
    }
    let profiles: Vec<ProfileFn> = by_step.into_iter().map(|p| p.expect("snapshot at every step")).collect();
    let p0 = on_whole_line(&init.to_p().map_err(setup)?);
    let ledger = FluctuationLedger::new(eps, &p0, &traj.xis).map_err(setup)?;
    Ok(MemberRun { eps, init, traj, profiles, ledger })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberReport {
    pub eps2: f64,
    pub eps: f64,
    pub n_steps: usize,
    /// `None` when the interface never moves.
    pub depinning_time: Option<f64>,
    pub xi_final: f64,
    pub flow_rule: FlowRuleReport,
    pub early_motion: usize,
    pub admissibility_warnings: usize,
    /// `max |pⁿ - (qⁿ - fⁿ)|` over all steps, run backend.
    pub decomposition_defect: f64,
    /// `max |∫rⁿ - 2(ξⁿ - ξⁿ⁺¹)|` over all steps.
    pub mass_defect: f64,
    /// `max_n sup_x |rⁿ - r_essⁿ| / r_essⁿ / eps`.
    pub local_ratio_over_eps: f64,
    /// `sup_t ‖f_negᵢ‖∞` over mid-step times.
    pub neg_sup: [f64; 4],
    pub ess4_sup: f64,
    pub ess4_dx_l2: f64,
    pub holder: HolderQuotients,
    /// `sup_x |q_eps - heat flow|` at the heat time.
    pub q_heat_error: f64,
    /// Mean Stefan residual over the moving phase.
    pub stefan_mean: f64,
    pub bulk_residual: f64,
    /// `(t, ⟦∂ₓp⟧)` at every step where the probes fit.
    pub slope_jumps: Vec<(f64, f64)>,
    pub stefan: Vec<StefanProbe>,
}

fn flow_tol(run: &MemberRun) -> f64 {
    match run.init.u.domain().kind {
        DomainKind::WholeLine => 1e-6,
        DomainKind::BoundedNeumann => 10.0 * run.init.u.domain().h,
    }
}

/// Sup of `|q_eps(t) - G₀(t) * p⁰|` over the grid, with `q` computed on the
/// whole line.
pub fn regular_part_error(eps: Epsilon, p0: &ProfileFn, t: f64) -> Result<f64> {
    let p0 = on_whole_line(p0);
    let n = step_count(eps, t);
    let mut q = p0.clone();
    for _ in 0..n {
        q = convolve_g(eps, &q)?.to_profile(q.jump().map(|j| j.pos));
    }
    let heat = HeatSolution::new(&p0);
    let tn = n as f64 * eps.dt();
    let d = q.domain();
    let mut err = 0.0_f64;
    for j in 0..d.n_points() {
        let x = d.x(j);
        err = err.max((q.samples()[j] - heat.eval(tn, x)?).abs());
    }
    Ok(err)
}

pub fn member_report(run: &MemberRun, sweep: &SweepConfig) -> Result<MemberReport> {
    let eps = run.eps;
    let traj = &run.traj;
    let led = &run.ledger;
    let dt = eps.dt();

    // the decomposition on the run's own backend reproduces p
    let own = FluctuationLedger::new(eps, &run.init.to_p()?, &traj.xis)?;
    let decomposition_defect = (0..=traj.n_steps())
        .map(|n| run.profiles[n].sup_distance(&own.p(n)))
        .fold(0.0, f64::max);

    let mut mass_defect = 0.0_f64;
    let mut ratio = 0.0_f64;
    for s in led.steps() {
        if s.xi_old > s.xi_new {
            mass_defect = mass_defect.max((local_fluct_mass(eps, s.xi_old, s.xi_new)? - 2.0 * (s.xi_old - s.xi_new)).abs());
            ratio = ratio.max(local_fluct_ratio(eps, s.xi_old, s.xi_new)?);
        }
    }

    let splits: Vec<_> = run.split_times().par_iter().map(|&t| led.split(t)).collect::<Result<_>>()?;
    let mut neg_sup = [0.0_f64; 4];
    let mut ess4_sup = 0.0_f64;
    let mut ess4_dx_l2 = 0.0_f64;
    for sp in &splits {
        for (m, g) in neg_sup.iter_mut().zip(&sp.neg) {
            *m = m.max(g.sup_norm());
        }
        let e4 = &sp.ess[3];
        ess4_sup = ess4_sup.max(e4.sup_norm());
        let h = e4.domain().h;
        let dx: Vec<f64> = e4.samples().windows(2).map(|w| (w[1] - w[0]) / h).collect();
        ess4_dx_l2 = ess4_dx_l2.max(l2_norm_uniform(h, &dx));
    }

    let holder = holder_quotient(|t, x| led.ess4_at(t, x).unwrap_or(f64::NAN), sweep.gamma, &sweep.holder_sampling())?;
    let q_heat_error = regular_part_error(eps, &run.init.to_p()?, sweep.heat_time)?;

    let probe = sweep.probe_factor * eps.value();
    let dep = depinning_time(traj);
    let half = STEFAN_WINDOW / 2;
    let mut slope_jumps = Vec::new();
    let mut stefan = Vec::new();
    for n in 0..=traj.n_steps() {
        let t = n as f64 * dt;
        if let Ok((sl, sr)) = slope_jump(&run.profiles[n], traj.xis[n], probe) {
            slope_jumps.push((t, sr - sl));
        }
        if n >= half && n + half <= traj.n_steps() && t >= dep + half as f64 * dt - 1e-12 {
            stefan.push(stefan_residual(traj, &run.profiles, t, probe)?);
        }
    }
    let stefan_mean = if stefan.is_empty() {
        f64::NAN
    } else {
        stefan.iter().map(|s| s.residual).sum::<f64>() / stefan.len() as f64
    };
    let collar = 5.0 * eps.value();
    let bulk = (0..traj.n_steps())
        .map(|n| bulk_residual(&run.profiles[n], &run.profiles[n + 1], dt, (traj.xis[n], traj.xis[n + 1]), collar))
        .fold(0.0, f64::max);

    Ok(MemberReport {
        eps2: dt,
        eps: eps.value(),
        n_steps: traj.n_steps(),
        depinning_time: dep.is_finite().then_some(dep),
        xi_final: *traj.xis.last().unwrap(),
        flow_rule: flow_rule_check(traj, flow_tol(run)),
        early_motion: early_motion(traj, 0.05),
        admissibility_warnings: traj.admissibility_warnings(),
        decomposition_defect,
        mass_defect,
        local_ratio_over_eps: ratio / eps.value(),
        neg_sup,
        ess4_sup,
        ess4_dx_l2,
        holder,
        q_heat_error,
        stefan_mean,
        bulk_residual: bulk,
        slope_jumps,
        stefan,
    })
}

/// `sup_t |ξ_a(t) - ξ_b(t)|` over the given times.
pub fn xi_distance(a: &Trajectory, b: &Trajectory, times: &[f64]) -> f64 {
    times.iter().map(|&t| (a.xi_at(t) - b.xi_at(t)).abs()).fold(0.0, f64::max)
}

/// `sup |p_a(t, x) - p_b(t, x)|` over the given times and the nodes of `a`.
pub fn p_distance(a: &MemberRun, b: &MemberRun, times: &[f64]) -> f64 {
    times
        .iter()
        .map(|&t| {
            let (pa, pb) = (a.p_at(t), b.p_at(t));
            let d = pa.domain();
            (0..d.n_points()).map(|j| (pa.samples()[j] - pb.eval(d.x(j))).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Empirical orders `ln(e_k / e_{k+1}) / ln(eps_k / eps_{k+1})`.
pub fn orders(eps: &[f64], err: &[f64]) -> Vec<f64> {
    eps.windows(2)
        .zip(err.windows(2))
        .map(|(e, r)| (r[0] / r[1]).ln() / (e[0] / e[1]).ln())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberStatus {
    pub eps2: f64,
    /// Present when the member failed.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub seed: u64,
    pub gamma: f64,
    pub comparison_times: Vec<f64>,
    pub status: Vec<MemberStatus>,
    pub members: Vec<MemberReport>,
    /// Distances between consecutive members.
    pub xi_distances: Vec<f64>,
    pub p_distances: Vec<f64>,
    pub rate_estimates: BTreeMap<String, Vec<f64>>,
    pub holder_quotients: Vec<HolderQuotients>,
    pub stefan_residuals: Vec<f64>,
    pub depinning_times: Vec<Option<f64>>,
}

impl DiagnosticsReport {
    pub fn complete(&self) -> bool {
        self.status.iter().all(|s| s.error.is_none())
    }
}

/// Runs every member (in parallel) and compares consecutive ones. Failed
/// members are reported in `status`; the comparisons then only cover the
/// members that finished.
pub fn converge_sweep(cfg: &SweepConfig) -> Result<(DiagnosticsReport, Vec<MemberRun>)> {
    cfg.validate()?;
    let outcomes: Vec<std::result::Result<MemberRun, String>> = cfg
        .eps2_list
        .par_iter()
        .map(|&e2| run_member(&cfg.base, e2).map_err(|e| e.to_string()))
        .collect();
    let status = cfg
        .eps2_list
        .iter()
        .zip(&outcomes)
        .map(|(&eps2, o)| MemberStatus { eps2, error: o.as_ref().err().cloned() })
        .collect();
    let runs: Vec<MemberRun> = outcomes.into_iter().filter_map(|o| o.ok()).collect();
    let members: Vec<MemberReport> = runs.par_iter().map(|r| member_report(r, cfg)).collect::<Result<_>>()?;
    let times = cfg.times();
    let xi_distances: Vec<f64> = runs.windows(2).map(|w| xi_distance(&w[0].traj, &w[1].traj, &times)).collect();
    let p_distances: Vec<f64> = runs.windows(2).map(|w| p_distance(&w[0], &w[1], &times)).collect();

    let eps: Vec<f64> = members.iter().map(|m| m.eps).collect();
    let mut rates = BTreeMap::new();
    rates.insert("q_heat_error".to_string(), orders(&eps, &members.iter().map(|m| m.q_heat_error).collect::<Vec<_>>()));
    for i in 0..4 {
        let e: Vec<f64> = members.iter().map(|m| m.neg_sup[i]).collect();
        rates.insert(format!("neg{}", i + 1), orders(&eps, &e));
    }
    rates.insert("stefan_mean".into(), orders(&eps, &members.iter().map(|m| m.stefan_mean).collect::<Vec<_>>()));
    if eps.len() >= 3 {
        let mid: Vec<f64> = eps.windows(2).map(|w| (w[0] * w[1]).sqrt()).collect();
        rates.insert("xi_distance".into(), orders(&mid, &xi_distances));
        rates.insert("p_distance".into(), orders(&mid, &p_distances));
    }
    let report = DiagnosticsReport {
        seed: cfg.seed,
        gamma: cfg.gamma,
        comparison_times: times,
        status,
        holder_quotients: members.iter().map(|m| m.holder).collect(),
        stefan_residuals: members.iter().map(|m| m.stefan_mean).collect(),
        depinning_times: members.iter().map(|m| m.depinning_time).collect(),
        members,
        xi_distances,
        p_distances,
        rate_estimates: rates,
    };
    Ok((report, runs))
}

#[cfg(test)]
mod tests;
