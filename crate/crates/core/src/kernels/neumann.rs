//! Convolution with `g_eps` on a bounded interval with Neumann conditions.
//!
//! The continuous part is obtained from the three-point discretisation of
//! `(I - eps² ∂ₓ²) v = f_c` with ghost-point Neumann rows. The jump part uses
//! the exact Neumann response to `sgn(· - xi)`, so the sharp interface does
//! not pass through the finite-difference operator.

use super::Epsilon;
use crate::profile::{Domain, ProfileFn};

/// Solves `(I - eps² D_h) v = f` with reflecting ends by the Thomas algorithm.
pub fn solve_implicit_neumann(eps: Epsilon, h: f64, f: &[f64]) -> Vec<f64> {
    let n = f.len();
    assert!(n >= 3, "need at least three nodes");
    let a = eps.dt() / (h * h);
    let diag = 1.0 + 2.0 * a;
    // super-diagonal coefficients after elimination
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = -2.0 * a / diag;
    d[0] = f[0] / diag;
    for j in 1..n {
        let lower = if j == n - 1 { -2.0 * a } else { -a };
        let upper = if j == n - 1 { 0.0 } else { -a };
        let denom = diag - lower * c[j - 1];
        c[j] = upper / denom;
        d[j] = (f[j] - lower * d[j - 1]) / denom;
    }
    let mut v = vec![0.0; n];
    v[n - 1] = d[n - 1];
    for j in (0..n - 1).rev() {
        v[j] = d[j] - c[j] * v[j + 1];
    }
    v
}

/// Exact solution `w` of `w - eps² w'' = sgn(x - xi)` on `[left, right]`
/// with `w' = 0` at both ends. Only non-positive exponents are evaluated.
pub fn neumann_sign_response(eps: Epsilon, xi: f64, left: f64, right: f64, x: f64) -> f64 {
    let e = eps.value();
    let a = (xi - left) / e;
    let b = (right - xi) / e;
    let denom = -(-2.0 * (a + b)).exp_m1();
    if x <= xi {
        let y = (x - left) / e;
        -1.0 + ((x - xi) / e).exp() * (-(-2.0 * b).exp_m1()) * (1.0 + (-2.0 * y).exp()) / denom
    } else {
        let z = (right - x) / e;
        1.0 - ((xi - x) / e).exp() * (-(-2.0 * a).exp_m1()) * (1.0 + (-2.0 * z).exp()) / denom
    }
}

#[derive(Debug, Clone)]
pub struct NeumannConvolution {
    eps: Epsilon,
    domain: Domain,
    cont: Vec<f64>,
    jump: Option<(f64, f64)>,
    nodes: Vec<f64>,
}

impl NeumannConvolution {
    pub fn new(eps: Epsilon, f: &ProfileFn) -> Self {
        let d = *f.domain();
        let jump = f.jump().filter(|j| j.size() != 0.0).map(|j| (j.pos, j.size()));
        let fc: Vec<f64> = match jump {
            None => f.samples().to_vec(),
            Some((pos, size)) => f
                .samples()
                .iter()
                .enumerate()
                .map(|(j, &v)| if d.x(j) <= pos { v + 0.5 * size } else { v - 0.5 * size })
                .collect(),
        };
        let cont = solve_implicit_neumann(eps, d.h, &fc);
        let nodes = match jump {
            None => cont.clone(),
            Some((pos, size)) => cont
                .iter()
                .enumerate()
                .map(|(j, &v)| v + 0.5 * size * neumann_sign_response(eps, pos, d.left, d.right, d.x(j)))
                .collect(),
        };
        Self { eps, domain: d, cont, jump, nodes }
    }

    /// Evaluates inside the interval; arguments outside are clamped.
    pub fn eval(&self, x: f64) -> f64 {
        let d = &self.domain;
        let x = x.clamp(d.left, d.right);
        let lo = d.floor_index(x).min(d.n_cells() - 1);
        let t = (x - d.x(lo)) / d.h;
        let c = self.cont[lo] + (self.cont[lo + 1] - self.cont[lo]) * t;
        match self.jump {
            None => c,
            Some((pos, size)) => {
                c + 0.5 * size * neumann_sign_response(self.eps, pos, d.left, d.right, x)
            }
        }
    }

    pub fn node_values(&self) -> &[f64] {
        &self.nodes
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }
}
