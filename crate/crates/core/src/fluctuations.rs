//! Splitting `pⁿ = qⁿ - fⁿ` into a regular part and interface fluctuations.
//!
//! Since `s_eps = sgn - g * sgn`, one step of the scheme reads
//! `pⁿ⁺¹ = g * pⁿ - rⁿ` with the local fluctuation
//! `rⁿ = (g * sgn)(· - ξⁿ⁺¹) - (g * sgn)(· - ξⁿ) >= 0`. The regular part
//! `qⁿ⁺¹ = g * qⁿ` starts from `p⁰` and the global fluctuation
//! `fⁿ⁺¹ = g * fⁿ + rⁿ` from zero.
//!
//! `fⁿ` is further compared with four essential surrogates built from the
//! interface history alone: `r` replaced by a scaled copy of `g` at the
//! midpoint of each shift (stage 1), `g`-powers replaced by heat kernels
//! (stage 2), the heat kernel evaluated at the continuous time (stage 3),
//! and finally the ramped kernel `H_eps` (stage 4), which makes the last
//! sum continuous in time. The differences between consecutive stages are
//! the negligible parts.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{convolve_g, eval_heat, eval_heps, Epsilon};
use crate::profile::{Domain, Jump, ProfileFn};
use crate::quadrature::Composite;
use crate::scheme::Trajectory;
use crate::state::{SimState, JUMP_TOL};

fn check_shift(xi_old: f64, xi_new: f64) -> Result<()> {
    if !(xi_old.is_finite() && xi_new.is_finite()) {
        return Err(Error::InvalidParameter("interface positions must be finite".into()));
    }
    if xi_new > xi_old {
        return Err(Error::RightwardShift { xi_old, xi_new });
    }
    Ok(())
}

/// `rⁿ(x)` for a shift `xi_old -> xi_new <= xi_old`.
pub fn local_fluct_value(eps: Epsilon, xi_old: f64, xi_new: f64, x: f64) -> f64 {
    let e = eps.value();
    let d = xi_old - xi_new;
    if d == 0.0 {
        return 0.0;
    }
    if x <= xi_new {
        -((x - xi_new) / e).exp() * (-d / e).exp_m1()
    } else if x >= xi_old {
        -((xi_old - x) / e).exp() * (-d / e).exp_m1()
    } else {
        -(-(x - xi_new) / e).exp_m1() - (-(xi_old - x) / e).exp_m1()
    }
}

/// `r_essⁿ(x) = 2 (ξⁿ - ξⁿ⁺¹) g_eps(x - mⁿ)` with `mⁿ` the midpoint of the shift.
pub fn local_fluct_ess_value(eps: Epsilon, xi_old: f64, xi_new: f64, x: f64) -> f64 {
    let e = eps.value();
    let mid = 0.5 * (xi_old + xi_new);
    (xi_old - xi_new) / e * (-(x - mid).abs() / e).exp()
}

fn sample_on(grid: &Domain, track: f64, f: impl Fn(f64) -> f64) -> Result<ProfileFn> {
    let samples = grid.points().into_iter().map(&f).collect();
    if track > grid.left && track < grid.right {
        ProfileFn::with_jump(*grid, samples, Jump::node(track, f(track)))
    } else {
        ProfileFn::new(*grid, samples)
    }
}

/// Local fluctuation on a grid, with an exact node at `xi_new`.
pub fn local_fluct(eps: Epsilon, xi_old: f64, xi_new: f64, grid: &Domain) -> Result<ProfileFn> {
    check_shift(xi_old, xi_new)?;
    sample_on(grid, xi_new, |x| local_fluct_value(eps, xi_old, xi_new, x))
}

/// Essential surrogate of the local fluctuation, with an exact node at `xi_new`.
pub fn local_fluct_ess(eps: Epsilon, xi_old: f64, xi_new: f64, grid: &Domain) -> Result<ProfileFn> {
    check_shift(xi_old, xi_new)?;
    sample_on(grid, xi_new, |x| local_fluct_ess_value(eps, xi_old, xi_new, x))
}

/// Whole-line integral of `rⁿ` by Gauss–Legendre on the three branches.
pub fn local_fluct_mass(eps: Epsilon, xi_old: f64, xi_new: f64) -> Result<f64> {
    check_shift(xi_old, xi_new)?;
    let e = eps.value();
    let breaks = [xi_new - 50.0 * e, xi_new, xi_old, xi_old + 50.0 * e];
    Ok(Composite::new(12, 40).integrate(&breaks, |x| local_fluct_value(eps, xi_old, xi_new, x)))
}

/// `sup_x |r - r_ess| / r_ess`. Outside the shift interval the quotient is
/// the constant `|2 sinh(μ/2) - μ| / μ`; inside it is sampled densely.
pub fn local_fluct_ratio(eps: Epsilon, xi_old: f64, xi_new: f64) -> Result<f64> {
    check_shift(xi_old, xi_new)?;
    if xi_old == xi_new {
        return Ok(0.0);
    }
    let mu = (xi_old - xi_new) / eps.value();
    let outer = ((2.0 * (0.5 * mu).sinh() - mu) / mu).abs();
    let inner = (0..=2000)
        .map(|k| xi_new + (xi_old - xi_new) * k as f64 / 2000.0)
        .map(|x| {
            let r = local_fluct_value(eps, xi_old, xi_new, x);
            let re = local_fluct_ess_value(eps, xi_old, xi_new, x);
            (r - re).abs() / re
        })
        .fold(0.0, f64::max);
    Ok(outer.max(inner))
}

/// `qⁿ⁺¹ = g * qⁿ`, with an exact node at `track` when given.
pub fn regular_part_step(eps: Epsilon, q: &ProfileFn, track: Option<f64>) -> Result<ProfileFn> {
    Ok(convolve_g(eps, q)?.to_profile(track))
}

/// `fⁿ⁺¹ = g * fⁿ + rⁿ`; the result keeps the tracked node of `r`.
pub fn accumulate_f(eps: Epsilon, f: &ProfileFn, r: &ProfileFn) -> Result<ProfileFn> {
    let gf = convolve_g(eps, f)?.to_profile(r.jump().map(|j| j.pos));
    Ok(gf.zip_with(r, |a, b| a + b))
}

/// Records of one step `ξⁿ -> ξⁿ⁺¹`.
#[derive(Debug, Clone)]
pub struct StepFluct {
    pub xi_old: f64,
    pub xi_new: f64,
    pub r: ProfileFn,
    pub r_ess: ProfileFn,
}

impl StepFluct {
    /// `μₙ = (ξⁿ - ξⁿ⁺¹) / eps`.
    pub fn mu(&self, eps: Epsilon) -> f64 {
        (self.xi_old - self.xi_new) / eps.value()
    }
}

/// Regular part, global fluctuation and first essential stage for every
/// step of a run, all on the grid of the initial data.
///
/// Every profile of index `n` carries an exact node at `ξⁿ`, so that the
/// linear combination `q - f` commutes with the interpolation used by the
/// scheme itself.
#[derive(Debug, Clone)]
pub struct FluctuationLedger {
    eps: Epsilon,
    xis: Vec<f64>,
    steps: Vec<StepFluct>,
    q: Vec<ProfileFn>,
    f: Vec<ProfileFn>,
    ess1: Vec<ProfileFn>,
}

/// The eight profiles of the four-stage split at one time.
#[derive(Debug, Clone)]
pub struct FluctuationSplit {
    pub t: f64,
    /// Step index with `t ∈ [n eps², (n+1) eps²)`.
    pub n: usize,
    pub f: ProfileFn,
    pub ess: [ProfileFn; 4],
    pub neg: [ProfileFn; 4],
}

impl FluctuationSplit {
    /// `f - ess₄ - Σ negᵢ`, zero up to rounding.
    pub fn telescoping_defect(&self) -> f64 {
        let sum = self.neg.iter().fold(self.ess[3].clone(), |acc, g| acc.zip_with(g, |a, b| a + b));
        self.f.sup_distance(&sum)
    }

    pub fn neg_total(&self) -> ProfileFn {
        let z = self.f.map(|_, _| 0.0);
        self.neg.iter().fold(z, |acc, g| acc.zip_with(g, |a, b| a + b))
    }
}

impl FluctuationLedger {
    /// Builds the ledger from `p⁰` and the interface history `ξ⁰, ξ¹, …`.
    /// The convolution backend follows the domain kind of `p0`.
    pub fn new(eps: Epsilon, p0: &ProfileFn, xis: &[f64]) -> Result<Self> {
        if xis.is_empty() {
            return Err(Error::InvalidParameter("empty interface history".into()));
        }
        if p0.jump_size().abs() > JUMP_TOL {
            return Err(Error::BrokenStefanContinuity { jump: 2.0 + p0.jump_size() });
        }
        let grid = *p0.domain();
        let q0 = match p0.jump() {
            Some(j) if j.pos == xis[0] => p0.clone(),
            _ => sample_on(&grid, xis[0], |x| p0.eval(x))?,
        };
        let zero = q0.map(|_, _| 0.0);
        let n_steps = xis.len() - 1;
        let mut ledger = Self {
            eps,
            xis: xis.to_vec(),
            steps: Vec::with_capacity(n_steps),
            q: Vec::with_capacity(n_steps + 1),
            f: Vec::with_capacity(n_steps + 1),
            ess1: Vec::with_capacity(n_steps + 1),
        };
        ledger.q.push(q0);
        ledger.f.push(zero.clone());
        ledger.ess1.push(zero);
        for w in xis.windows(2) {
            let (xo, xn) = (w[0], w[1]);
            let r = local_fluct(eps, xo, xn, &grid)?;
            let r_ess = local_fluct_ess(eps, xo, xn, &grid)?;
            let q = regular_part_step(eps, ledger.q.last().unwrap(), r.jump().map(|j| j.pos))?;
            let f = accumulate_f(eps, ledger.f.last().unwrap(), &r)?;
            let e1 = accumulate_f(eps, ledger.ess1.last().unwrap(), &r_ess)?;
            ledger.q.push(q);
            ledger.f.push(f);
            ledger.ess1.push(e1);
            ledger.steps.push(StepFluct { xi_old: xo, xi_new: xn, r, r_ess });
        }
        Ok(ledger)
    }

    /// Ledger of a finished run started from `init`.
    pub fn from_run(init: &SimState, traj: &Trajectory) -> Result<Self> {
        Self::new(traj.eps, &init.to_p()?, &traj.xis)
    }

    pub fn eps(&self) -> Epsilon {
        self.eps
    }

    pub fn xis(&self) -> &[f64] {
        &self.xis
    }

    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn step(&self, n: usize) -> &StepFluct {
        &self.steps[n]
    }

    pub fn steps(&self) -> &[StepFluct] {
        &self.steps
    }

    pub fn q(&self, n: usize) -> &ProfileFn {
        &self.q[n]
    }

    pub fn f(&self, n: usize) -> &ProfileFn {
        &self.f[n]
    }

    pub fn ess1(&self, n: usize) -> &ProfileFn {
        &self.ess1[n]
    }

    /// `qⁿ - fⁿ`, which reproduces `pⁿ` of the run.
    pub fn p(&self, n: usize) -> ProfileFn {
        self.q[n].zip_with(&self.f[n], |a, b| a - b)
    }

    /// Index `n` with `t ∈ [n eps², (n+1) eps²)`.
    pub fn index_at(&self, t: f64) -> Result<usize> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::InvalidParameter(format!("time {t} must be >= 0")));
        }
        let n = (t / self.eps.dt() + 1e-9).floor() as usize;
        if n > self.n_steps() {
            return Err(Error::HistoryTooShort { needed: n, available: self.n_steps() });
        }
        Ok(n)
    }

    /// Shift weights `2 (ξⁱ⁻¹ - ξⁱ)` and midpoints for `i = 1..=upto`.
    fn sources(&self, upto: usize) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        self.xis[..=upto]
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[0] != w[1])
            .map(|(k, w)| (k + 1, 2.0 * (w[0] - w[1]), 0.5 * (w[0] + w[1])))
    }

    /// Stage 2 at step index `n`: heat kernels at the discrete ages.
    pub fn ess2_at(&self, n: usize, x: f64) -> f64 {
        let dt = self.eps.dt();
        self.sources(n)
            .map(|(i, c, m)| c * eval_heat((n - i + 1) as f64 * dt, x - m))
            .sum()
    }

    /// Stage 3: heat kernels at the continuous ages `t - (i - 1) eps²`.
    pub fn ess3_at(&self, t: f64, x: f64) -> Result<f64> {
        let n = self.index_at(t)?;
        let dt = self.eps.dt();
        Ok(self
            .sources(n)
            .map(|(i, c, m)| c * eval_heat(t - (i - 1) as f64 * dt, x - m))
            .sum())
    }

    /// Stage 4: ramped heat kernels; uses the shift of the step in progress.
    pub fn ess4_at(&self, t: f64, x: f64) -> Result<f64> {
        let n = self.index_at(t)?;
        if n + 1 > self.n_steps() {
            return Err(Error::HistoryTooShort { needed: n + 1, available: self.n_steps() });
        }
        let dt = self.eps.dt();
        Ok(self
            .sources(n + 1)
            .map(|(i, c, m)| c * eval_heps(self.eps, t - (i - 1) as f64 * dt, x - m))
            .sum())
    }

    /// All four essential stages and the negligible differences at time `t`,
    /// on the grid of the ledger with an exact node at `ξⁿ`.
    pub fn split(&self, t: f64) -> Result<FluctuationSplit> {
        let n = self.index_at(t)?;
        self.ess4_at(t, 0.0)?;
        let f = self.f[n].clone();
        let e1 = self.ess1[n].clone();
        let e2 = f.map(|x, _| self.ess2_at(n, x));
        let e3 = f.map(|x, _| self.ess3_at(t, x).unwrap());
        let e4 = f.map(|x, _| self.ess4_at(t, x).unwrap());
        let diff = |a: &ProfileFn, b: &ProfileFn| a.zip_with(b, |u, v| u - v);
        let neg = [diff(&f, &e1), diff(&e1, &e2), diff(&e2, &e3), diff(&e3, &e4)];
        Ok(FluctuationSplit { t, n, f, ess: [e1, e2, e3, e4], neg })
    }
}

/// Splits at several times in parallel.
pub fn split_fluctuations(ledger: &FluctuationLedger, times: &[f64]) -> Result<Vec<FluctuationSplit>> {
    times.par_iter().map(|&t| ledger.split(t)).collect()
}
