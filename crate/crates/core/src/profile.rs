//! Grids and piecewise-linear profiles with one tracked discontinuity.
//!
//! A [`ProfileFn`] stores samples on a uniform grid plus, optionally, one
//! tracked point that need not lie on the grid. At the tracked point the
//! profile keeps exact one-sided limits, so a jump is represented sharply
//! instead of being smeared over a cell. Between nodes the profile is the
//! piecewise-linear interpolant; beyond the grid it is continued linearly
//! with the slope of the outermost segment.
//!
//! Samples at grid points `x <= jump.pos` belong to the left branch.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boundary treatment of the computational window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainKind {
    /// The grid is a window onto the real line; data continue linearly.
    WholeLine,
    /// A bounded interval with homogeneous Neumann conditions.
    BoundedNeumann,
}

/// Uniform grid on `[left, right]` including both endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub kind: DomainKind,
    pub left: f64,
    pub right: f64,
    pub h: f64,
}

impl Domain {
    /// Builds a grid; `h` is adjusted so that it divides the interval exactly.
    pub fn new(kind: DomainKind, left: f64, right: f64, h: f64) -> Result<Self> {
        if !(left.is_finite() && right.is_finite() && h.is_finite()) {
            return Err(Error::InvalidDomain("non-finite bounds or spacing".into()));
        }
        if left >= right {
            return Err(Error::InvalidDomain(format!("left {left} >= right {right}")));
        }
        if h <= 0.0 {
            return Err(Error::InvalidDomain(format!("grid spacing {h} must be positive")));
        }
        let cells = ((right - left) / h).round().max(2.0);
        let h_exact = (right - left) / cells;
        if ((h_exact - h) / h).abs() > 1e-6 {
            return Err(Error::InvalidDomain(format!(
                "spacing {h} does not divide [{left}, {right}]"
            )));
        }
        Ok(Self { kind, left, right, h: h_exact })
    }

    pub fn n_cells(&self) -> usize {
        ((self.right - self.left) / self.h).round() as usize
    }

    pub fn n_points(&self) -> usize {
        self.n_cells() + 1
    }

    pub fn width(&self) -> f64 {
        self.right - self.left
    }

    #[inline]
    pub fn x(&self, j: usize) -> f64 {
        if j == self.n_cells() {
            self.right
        } else {
            self.left + j as f64 * self.h
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points()).map(|j| self.x(j)).collect()
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.left && x <= self.right
    }

    /// Index of the last grid point `<= x`, clamped to the grid.
    pub fn floor_index(&self, x: f64) -> usize {
        let j = ((x - self.left) / self.h).floor();
        if j < 0.0 {
            0
        } else {
            (j as usize).min(self.n_cells())
        }
    }

    /// Resolution rule: at least four grid points per e-fold of the kernel.
    pub fn check_resolution(&self, eps: f64) -> Result<()> {
        if self.h > eps / 4.0 * (1.0 + 1e-12) {
            return Err(Error::InvalidDomain(format!(
                "grid spacing {} exceeds eps/4 = {}",
                self.h,
                eps / 4.0
            )));
        }
        Ok(())
    }

    /// Same spacing, extended by at least `extra` on both sides.
    pub fn widened(&self, extra: f64) -> Domain {
        let cells = (extra / self.h).ceil();
        Domain {
            kind: self.kind,
            left: self.left - cells * self.h,
            right: self.right + cells * self.h,
            h: self.h,
        }
    }
}

/// Exact one-sided limits at the tracked point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub pos: f64,
    pub left: f64,
    pub right: f64,
}

impl Jump {
    pub fn size(&self) -> f64 {
        self.right - self.left
    }

    /// A tracked node without a discontinuity.
    pub fn node(pos: f64, value: f64) -> Self {
        Self { pos, left: value, right: value }
    }
}

/// Interpolation node with separate left and right values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Knot {
    pub x: f64,
    pub left: f64,
    pub right: f64,
}

/// Tracked points closer than this fraction of `h` to a grid node replace it.
const MERGE_FRACTION: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileFn {
    domain: Domain,
    samples: Vec<f64>,
    jump: Option<Jump>,
}

impl ProfileFn {
    pub fn new(domain: Domain, samples: Vec<f64>) -> Result<Self> {
        Self::build(domain, samples, None)
    }

    pub fn with_jump(domain: Domain, samples: Vec<f64>, jump: Jump) -> Result<Self> {
        Self::build(domain, samples, Some(jump))
    }

    /// Accepts any number of tracked points and rejects more than one.
    pub fn with_jumps(domain: Domain, samples: Vec<f64>, jumps: Vec<Jump>) -> Result<Self> {
        if jumps.len() > 1 {
            return Err(Error::TooManyJumps { count: jumps.len() });
        }
        Self::build(domain, samples, jumps.into_iter().next())
    }

    fn build(domain: Domain, samples: Vec<f64>, jump: Option<Jump>) -> Result<Self> {
        if samples.len() != domain.n_points() {
            return Err(Error::InvalidParameter(format!(
                "expected {} samples, got {}",
                domain.n_points(),
                samples.len()
            )));
        }
        if let Some(bad) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sample {bad} at x = {} is not finite",
                domain.x(bad)
            )));
        }
        if let Some(j) = jump {
            if !(j.left.is_finite() && j.right.is_finite() && j.pos.is_finite()) {
                return Err(Error::InvalidParameter("tracked limits must be finite".into()));
            }
            if j.pos <= domain.left || j.pos >= domain.right {
                return Err(Error::InvalidParameter(format!(
                    "tracked point {} must lie strictly inside [{}, {}]",
                    j.pos, domain.left, domain.right
                )));
            }
        }
        Ok(Self { domain, samples, jump })
    }

    /// Samples a continuous function on the grid.
    pub fn from_fn(domain: Domain, f: impl Fn(f64) -> f64) -> Result<Self> {
        let samples = domain.points().into_iter().map(f).collect();
        Self::new(domain, samples)
    }

    /// Samples a function with a discontinuity at `pos`; `f` must return the
    /// left-branch value at `pos` itself.
    pub fn from_fn_with_jump(
        domain: Domain,
        pos: f64,
        left: f64,
        right: f64,
        f: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        let samples = domain.points().into_iter().map(f).collect();
        Self::with_jump(domain, samples, Jump { pos, left, right })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn jump(&self) -> Option<Jump> {
        self.jump
    }

    pub fn jump_size(&self) -> f64 {
        self.jump.map_or(0.0, |j| j.size())
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    /// Interpolation nodes: grid points plus the tracked point.
    pub fn knots(&self) -> Vec<Knot> {
        let d = &self.domain;
        let mut out = Vec::with_capacity(self.samples.len() + 1);
        let merge = MERGE_FRACTION * d.h;
        let mut pending = self.jump;
        for (j, &v) in self.samples.iter().enumerate() {
            let x = d.x(j);
            if let Some(jp) = pending {
                if (x - jp.pos).abs() <= merge {
                    out.push(Knot { x: jp.pos, left: jp.left, right: jp.right });
                    pending = None;
                    continue;
                }
                if jp.pos < x {
                    out.push(Knot { x: jp.pos, left: jp.left, right: jp.right });
                    pending = None;
                }
            }
            out.push(Knot { x, left: v, right: v });
        }
        out
    }

    /// Evaluates the interpolant (left limit at the tracked point).
    pub fn eval(&self, x: f64) -> f64 {
        let d = &self.domain;
        let lo = d.floor_index(x).min(d.n_cells() - 1);
        let (mut xa, mut va) = (d.x(lo), self.samples[lo]);
        let (mut xb, mut vb) = (d.x(lo + 1), self.samples[lo + 1]);
        if let Some(jp) = self.jump {
            if x == jp.pos {
                return jp.left;
            }
            let merge = MERGE_FRACTION * d.h;
            let side = if x < jp.pos { jp.left } else { jp.right };
            if (jp.pos - xa).abs() <= merge {
                xa = jp.pos;
                va = side;
            } else if (jp.pos - xb).abs() <= merge {
                xb = jp.pos;
                vb = side;
            } else if jp.pos > xa && jp.pos < xb {
                if x < jp.pos {
                    xb = jp.pos;
                    vb = jp.left;
                } else {
                    xa = jp.pos;
                    va = jp.right;
                }
            }
        }
        va + (vb - va) * (x - xa) / (xb - xa)
    }

    /// Right limit of the interpolant.
    pub fn eval_right(&self, x: f64) -> f64 {
        match self.jump {
            Some(jp) if x == jp.pos => jp.right,
            _ => self.eval(x),
        }
    }

    /// Slopes of the two outermost segments.
    pub fn end_slopes(&self) -> (f64, f64) {
        let k = self.knots();
        let n = k.len();
        let sl = (k[1].left - k[0].right) / (k[1].x - k[0].x);
        let sr = (k[n - 1].left - k[n - 2].right) / (k[n - 1].x - k[n - 2].x);
        (sl, sr)
    }

    /// Witnesses `(a, b)` of `|f(x)| <= a + b |x|` for the linearly continued
    /// interpolant on the whole line.
    pub fn linear_growth(&self) -> Result<(f64, f64)> {
        let (sl, sr) = self.end_slopes();
        if !(sl.is_finite() && sr.is_finite()) {
            return Err(Error::GrowthCheckFailed("end slopes are not finite".into()));
        }
        let b = sl.abs().max(sr.abs());
        let a = self
            .knots()
            .iter()
            .map(|k| k.left.abs().max(k.right.abs()) + b * k.x.abs())
            .fold(0.0, f64::max);
        if !a.is_finite() {
            return Err(Error::GrowthCheckFailed("offset is not finite".into()));
        }
        Ok((a, b))
    }

    /// Exact integral of the interpolant over the grid window.
    pub fn integral(&self) -> f64 {
        self.knots()
            .windows(2)
            .map(|w| 0.5 * (w[0].right + w[1].left) * (w[1].x - w[0].x))
            .sum()
    }

    /// Total variation of the slope, i.e. the mass of the second derivative
    /// measure. Infinite when the profile has a nonzero jump.
    pub fn second_derivative_mass(&self) -> f64 {
        if self.jump_size() != 0.0 {
            return f64::INFINITY;
        }
        let k = self.knots();
        let slopes: Vec<f64> = k
            .windows(2)
            .map(|w| (w[1].left - w[0].right) / (w[1].x - w[0].x))
            .collect();
        slopes.windows(2).map(|s| (s[1] - s[0]).abs()).sum()
    }

    /// Largest absolute value over samples and tracked limits.
    pub fn sup_norm(&self) -> f64 {
        let mut m = self.samples.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if let Some(j) = self.jump {
            m = m.max(j.left.abs()).max(j.right.abs());
        }
        m
    }

    /// Largest difference over grid samples and, when both profiles track
    /// the same point, the tracked limits.
    pub fn sup_distance(&self, other: &ProfileFn) -> f64 {
        let mut m = self
            .samples
            .iter()
            .zip(&other.samples)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        if let (Some(a), Some(b)) = (self.jump, other.jump) {
            if a.pos == b.pos {
                m = m.max((a.left - b.left).abs()).max((a.right - b.right).abs());
            }
        }
        m
    }

    /// Pointwise combination of two profiles on the same grid; the tracked
    /// point of `self` is kept and `other` is evaluated there.
    pub fn zip_with(&self, other: &ProfileFn, f: impl Fn(f64, f64) -> f64) -> ProfileFn {
        debug_assert_eq!(self.samples.len(), other.samples.len());
        let samples = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(&a, &b)| f(a, b))
            .collect();
        let jump = self.jump.map(|j| {
            let (ol, or) = match other.jump {
                Some(o) if o.pos == j.pos => (o.left, o.right),
                _ => (other.eval(j.pos), other.eval_right(j.pos)),
            };
            Jump { pos: j.pos, left: f(j.left, ol), right: f(j.right, or) }
        });
        ProfileFn { domain: self.domain, samples, jump }
    }

    pub fn map(&self, f: impl Fn(f64, f64) -> f64) -> ProfileFn {
        let samples = self
            .samples
            .iter()
            .enumerate()
            .map(|(j, &v)| f(self.domain.x(j), v))
            .collect();
        let jump = self.jump.map(|j| Jump {
            pos: j.pos,
            left: f(j.pos, j.left),
            right: f(j.pos, j.right),
        });
        ProfileFn { domain: self.domain, samples, jump }
    }

    /// Extends the grid on both sides by linear continuation.
    pub fn widened(&self, extra: f64) -> ProfileFn {
        let d = self.domain.widened(extra);
        let samples = d.points().into_iter().map(|x| self.eval(x)).collect();
        ProfileFn { domain: d, samples, jump: self.jump }
    }

    /// Same grid, different tracked point (the old one is dropped).
    pub(crate) fn from_parts(domain: Domain, samples: Vec<f64>, jump: Option<Jump>) -> Self {
        Self { domain, samples, jump }
    }
}
