//! Small quadrature helpers shared by the diagnostics and the tests.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;

/// Composite Gauss–Legendre rule over a partition.
#[derive(Debug, Clone)]
pub struct Composite {
    rule: GaussLegendre,
    sub: usize,
}

impl Composite {
    /// `order` nodes per panel, each partition interval split into `sub` panels.
    pub fn new(order: usize, sub: usize) -> Self {
        let order = NonZeroUsize::new(order.max(1)).unwrap();
        Self { rule: GaussLegendre::new(order), sub: sub.max(1) }
    }

    /// Integrates over `[breaks[0], breaks[last]]`; `f` only needs to be smooth
    /// between consecutive breakpoints. Unsorted or repeated points are fine.
    pub fn integrate(&self, breaks: &[f64], mut f: impl FnMut(f64) -> f64) -> f64 {
        let mut pts: Vec<f64> = breaks.iter().copied().filter(|x| x.is_finite()).collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let mut total = 0.0;
        for w in pts.windows(2) {
            let step = (w[1] - w[0]) / self.sub as f64;
            for k in 0..self.sub {
                let a = w[0] + k as f64 * step;
                let b = if k + 1 == self.sub { w[1] } else { a + step };
                total += self.rule.integrate(a, b, &mut f);
            }
        }
        total
    }
}

/// Trapezoid rule on a uniform grid.
pub fn trapezoid_uniform(h: f64, ys: &[f64]) -> f64 {
    match ys.len() {
        0 | 1 => 0.0,
        n => h * (ys[1..n - 1].iter().sum::<f64>() + 0.5 * (ys[0] + ys[n - 1])),
    }
}

/// `(∫ f²)^{1/2}` by the trapezoid rule on a uniform grid.
pub fn l2_norm_uniform(h: f64, ys: &[f64]) -> f64 {
    let sq: Vec<f64> = ys.iter().map(|v| v * v).collect();
    trapezoid_uniform(h, &sq).sqrt()
}
