//! Whole-line convolution of a piecewise-linear profile with `g_eps`.
//!
//! Write `f = f_c + (J/2) sgn(· - xi)` with `f_c` continuous. Continued
//! linearly, `f_c(x) = a + b x + Σ κ_k (x - y_k)₊` where `κ_k` are the slope
//! changes at the interior knots. Since `g * (x - y)₊ = (x - y)₊ +
//! (eps/2) exp(-|x - y|/eps)` and `g` preserves affine functions,
//!
//! `g * f = f_c + (eps/2) Σ κ_k exp(-|x - y_k|/eps) + (J/2) (g * sgn)(x - xi)`.
//!
//! The exponential sum is evaluated at every knot in O(N) with two decaying
//! running sums.

use super::{eval_g_sgn, Epsilon};
use crate::profile::{Domain, ProfileFn};

#[derive(Debug, Clone)]
pub struct AnalyticConvolution {
    eps: Epsilon,
    domain: Domain,
    xs: Vec<f64>,
    fc: Vec<f64>,
    slopes: Vec<f64>,
    /// Σ_{i <= k} κ_i exp(-(x_k - y_i)/eps)
    lsum: Vec<f64>,
    /// Σ_{i >= k} κ_i exp(-(y_i - x_k)/eps)
    rsum: Vec<f64>,
    jump: Option<(f64, f64)>,
    nodes: Vec<f64>,
}

impl AnalyticConvolution {
    pub fn new(eps: Epsilon, f: &ProfileFn) -> Self {
        let e = eps.value();
        let knots = f.knots();
        let m = knots.len();
        let jump = f.jump().filter(|j| j.size() != 0.0).map(|j| (j.pos, j.size()));
        let half = jump.map_or(0.0, |(_, s)| 0.5 * s);
        let xi = jump.map_or(f64::NAN, |(p, _)| p);

        let xs: Vec<f64> = knots.iter().map(|k| k.x).collect();
        let fc: Vec<f64> = knots
            .iter()
            .map(|k| {
                if jump.is_none() {
                    k.left
                } else if k.x == xi {
                    0.5 * (k.left + k.right)
                } else if k.x < xi {
                    k.left + half
                } else {
                    k.left - half
                }
            })
            .collect();
        let slopes: Vec<f64> = (0..m - 1)
            .map(|k| (fc[k + 1] - fc[k]) / (xs[k + 1] - xs[k]))
            .collect();
        let mut kappa = vec![0.0; m];
        for k in 1..m - 1 {
            kappa[k] = slopes[k] - slopes[k - 1];
        }
        let decay: Vec<f64> = (0..m - 1).map(|k| (-(xs[k + 1] - xs[k]) / e).exp()).collect();
        let mut lsum = vec![0.0; m];
        lsum[0] = kappa[0];
        for k in 1..m {
            lsum[k] = lsum[k - 1] * decay[k - 1] + kappa[k];
        }
        let mut rsum = vec![0.0; m];
        rsum[m - 1] = kappa[m - 1];
        for k in (0..m - 1).rev() {
            rsum[k] = rsum[k + 1] * decay[k] + kappa[k];
        }

        let mut out = Self {
            eps,
            domain: *f.domain(),
            xs,
            fc,
            slopes,
            lsum,
            rsum,
            jump,
            nodes: Vec::new(),
        };
        out.nodes = f.domain().points().into_iter().map(|x| out.eval(x)).collect();
        out
    }

    pub fn eval(&self, x: f64) -> f64 {
        let e = self.eps.value();
        let m = self.xs.len();
        let (fc, k_sum) = if x <= self.xs[0] {
            let d = x - self.xs[0];
            (self.fc[0] + self.slopes[0] * d, self.rsum[0] * (d / e).exp())
        } else if x >= self.xs[m - 1] {
            let d = x - self.xs[m - 1];
            (
                self.fc[m - 1] + self.slopes[m - 2] * d,
                self.lsum[m - 1] * (-d / e).exp(),
            )
        } else {
            let k = (self.xs.partition_point(|&y| y <= x) - 1).min(m - 2);
            let da = x - self.xs[k];
            let db = self.xs[k + 1] - x;
            (
                self.fc[k] + self.slopes[k] * da,
                self.lsum[k] * (-da / e).exp() + self.rsum[k + 1] * (-db / e).exp(),
            )
        };
        let jump_part = self
            .jump
            .map_or(0.0, |(p, s)| 0.5 * s * eval_g_sgn(self.eps, x - p));
        fc + 0.5 * e * k_sum + jump_part
    }

    pub fn node_values(&self) -> &[f64] {
        &self.nodes
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }
}
