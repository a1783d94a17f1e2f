//! Closed-form kernels and the two realisations of `u ↦ g_eps * u`.
//!
//! `g_eps(x) = exp(-|x|/eps) / (2 eps)` is the Green's function of
//! `I - eps² ∂ₓ²`, so convolving with it is the same as solving one implicit
//! Euler step of the heat equation with time step `eps²`. The whole-line
//! backend integrates the exponential against a piecewise-linear profile in
//! closed form; the bounded backend solves the finite-difference system with
//! homogeneous Neumann rows.

mod analytic;
mod neumann;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::profile::{Domain, DomainKind, Jump, ProfileFn};

pub use analytic::AnalyticConvolution;
pub use neumann::{neumann_sign_response, solve_implicit_neumann, NeumannConvolution};

/// Kernel scale; the time step of the scheme is `eps²`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Epsilon(f64);

impl Epsilon {
    pub fn new(eps: f64) -> Result<Self> {
        if eps.is_finite() && eps > 0.0 {
            Ok(Self(eps))
        } else {
            Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")))
        }
    }

    pub fn from_eps2(eps2: f64) -> Result<Self> {
        if eps2.is_finite() && eps2 > 0.0 {
            Ok(Self(eps2.sqrt()))
        } else {
            Err(Error::InvalidParameter(format!("eps² must be positive, got {eps2}")))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// Time step `eps²`.
    #[inline]
    pub fn dt(self) -> f64 {
        self.0 * self.0
    }

    /// Checks the standing assumption `eps² <= T`.
    pub fn check_horizon(self, t_final: f64) -> Result<()> {
        if self.dt() > t_final {
            return Err(Error::InvalidParameter(format!(
                "time step {} exceeds final time {t_final}",
                self.dt()
            )));
        }
        Ok(())
    }
}

#[inline]
pub fn eval_g(eps: Epsilon, x: f64) -> f64 {
    let e = eps.value();
    (-x.abs() / e).exp() / (2.0 * e)
}

/// Jump profile `sgn - g * sgn`; left branch at `x = 0`.
#[inline]
pub fn eval_s(eps: Epsilon, x: f64) -> f64 {
    let e = eps.value();
    if x <= 0.0 {
        -(x / e).exp()
    } else {
        (-x / e).exp()
    }
}

/// `(g * sgn)(x) = sgn(x) (1 - exp(-|x|/eps))`, continuous with value 0 at 0.
#[inline]
pub fn eval_g_sgn(eps: Epsilon, x: f64) -> f64 {
    let e = eps.value();
    -(-x.abs() / e).exp_m1() * x.signum() * (x != 0.0) as u8 as f64
}

/// Heat kernel `G₀(t, x)`. Panics for `t <= 0`.
#[inline]
pub fn eval_heat(t: f64, x: f64) -> f64 {
    assert!(t > 0.0, "heat kernel needs t > 0, got {t}");
    (-x * x / (4.0 * t)).exp() / (4.0 * PI * t).sqrt()
}

/// `h_eps = G₀(eps², ·)`.
#[inline]
pub fn eval_h(eps: Epsilon, x: f64) -> f64 {
    eval_heat(eps.dt(), x)
}

/// Heat kernel with a linear ramp in time on `[0, eps²]`; zero for `t <= 0`.
#[inline]
pub fn eval_heps(eps: Epsilon, t: f64, x: f64) -> f64 {
    let dt = eps.dt();
    if t <= 0.0 {
        0.0
    } else if t <= dt {
        t / dt * eval_heat(dt, x)
    } else {
        eval_heat(t, x)
    }
}

/// Closed-form `n`-fold self-convolution of `g_eps` (the density of a sum of
/// `n` Laplace variables), evaluated in log space.
#[derive(Debug, Clone)]
pub struct GPower {
    eps: f64,
    n: usize,
    log_coeffs: Vec<f64>,
}

impl GPower {
    pub fn new(eps: Epsilon, n: usize) -> Self {
        assert!(n >= 1);
        let nf = n as f64;
        let base = -ln_gamma(nf) - nf * std::f64::consts::LN_2;
        // term j multiplies |y|^(n-1-j)
        let log_coeffs = (0..n)
            .map(|j| {
                let jf = j as f64;
                base + ln_gamma(nf + jf) - ln_gamma(jf + 1.0) - ln_gamma(nf - jf)
                    - jf * std::f64::consts::LN_2
            })
            .collect();
        Self { eps: eps.value(), n, log_coeffs }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let y = (x / self.eps).abs();
        let n = self.n;
        if y == 0.0 {
            return self.log_coeffs[n - 1].exp() / self.eps;
        }
        let ly = y.ln();
        let terms = self
            .log_coeffs
            .iter()
            .enumerate()
            .map(|(j, c)| c + (n - 1 - j) as f64 * ly);
        let m = terms.clone().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = terms.map(|t| (t - m).exp()).sum();
        (m + s.ln() - y).exp() / self.eps
    }
}

/// Result of convolving a profile with `g_eps`; continuous and evaluable
/// anywhere on its domain.
#[derive(Debug, Clone)]
pub enum Convolution {
    Analytic(AnalyticConvolution),
    Neumann(NeumannConvolution),
}

impl Convolution {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Convolution::Analytic(c) => c.eval(x),
            Convolution::Neumann(c) => c.eval(x),
        }
    }

    /// Values at the grid nodes.
    pub fn node_values(&self) -> &[f64] {
        match self {
            Convolution::Analytic(c) => c.node_values(),
            Convolution::Neumann(c) => c.node_values(),
        }
    }

    pub fn domain(&self) -> &Domain {
        match self {
            Convolution::Analytic(c) => c.domain(),
            Convolution::Neumann(c) => c.domain(),
        }
    }

    /// Continuous profile on the grid; `track` adds an exact node there.
    pub fn to_profile(&self, track: Option<f64>) -> ProfileFn {
        let jump = track.map(|pos| Jump::node(pos, self.eval(pos)));
        ProfileFn::from_parts(*self.domain(), self.node_values().to_vec(), jump)
    }
}

/// Convolves `f` with `g_eps`, choosing the backend from the domain kind.
pub fn convolve_g(eps: Epsilon, f: &ProfileFn) -> Result<Convolution> {
    match f.domain().kind {
        DomainKind::WholeLine => {
            f.linear_growth()?;
            Ok(Convolution::Analytic(AnalyticConvolution::new(eps, f)))
        }
        DomainKind::BoundedNeumann => Ok(Convolution::Neumann(NeumannConvolution::new(eps, f))),
    }
}

/// `g_eps * f` as a profile, keeping the tracked point of `f` as an exact node.
pub fn convolve_g_profile(eps: Epsilon, f: &ProfileFn) -> Result<ProfileFn> {
    let c = convolve_g(eps, f)?;
    Ok(c.to_profile(f.jump().map(|j| j.pos)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    /// exponential kernel `g_eps`
    G,
    /// Gaussian `h_eps = G₀(eps², ·)`
    H,
}

/// `n`-fold self-convolution of `g_eps` or `h_eps` sampled on a grid that
/// contains the origin as a node.
///
/// The Gaussian power is exact, `G₀(n eps², ·)`. The exponential power is
/// built from a discrete delta by `n` implicit solves with Neumann rows, the
/// same operator the bounded backend uses.
pub fn conv_power(kind: KernelKind, eps: Epsilon, n: usize, grid: &Domain) -> Result<ProfileFn> {
    if n == 0 {
        return Err(Error::InvalidParameter("convolution power must be >= 1".into()));
    }
    let required = 20.0 * eps.value() * (n as f64).sqrt();
    let available = (-grid.left).min(grid.right);
    if available < required {
        return Err(Error::GridTooNarrow { required, available });
    }
    match kind {
        KernelKind::H => {
            let t = n as f64 * eps.dt();
            ProfileFn::from_fn(*grid, |x| eval_heat(t, x))
        }
        KernelKind::G => {
            let j0 = grid.floor_index(0.0 + 0.5 * grid.h);
            if grid.x(j0).abs() > 1e-9 * grid.h {
                return Err(Error::InvalidDomain("origin must be a grid node".into()));
            }
            let mut w = vec![0.0; grid.n_points()];
            w[j0] = 1.0 / grid.h;
            for _ in 0..n {
                w = solve_implicit_neumann(eps, grid.h, &w);
            }
            ProfileFn::new(*grid, w)
        }
    }
}
