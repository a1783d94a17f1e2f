//! Single-interface states, the bilinear map `u ↔ p` and admissibility.
//!
//! With the bilinear constitutive law the phases are `u <= 0` and `u >= 0`,
//! the interface carries a jump of height 2, and `p = u - sgn(· - xi)` is
//! continuous at the interface.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::{DomainKind, Jump, ProfileFn};

/// Lower bound of `u` in the left phase.
pub const U_LOWER: f64 = -2.0;
/// Jump height of `u` at the interface.
pub const INTERFACE_JUMP: f64 = 2.0;
/// Band of admissible interface values of `p`.
pub const P_LOWER: f64 = -1.0;
pub const P_UPPER: f64 = 1.0;

/// Default tolerance on the interface jump in [`to_p`].
pub const JUMP_TOL: f64 = 1e-8;

/// Propagation mode of one scheme step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// left-moving interface
    LM,
    /// right-moving interface
    RM,
    /// standing interface
    ST,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::LM => "LM",
            Mode::RM => "RM",
            Mode::ST => "ST",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub u: ProfileFn,
    pub xi: f64,
    pub n: usize,
    pub alpha: f64,
    pub mode_last: Option<Mode>,
}

impl SimState {
    /// Initial state; the interface is the tracked point of `u`.
    pub fn new(u: ProfileFn, alpha: f64) -> Result<Self> {
        let jump = u
            .jump()
            .ok_or_else(|| Error::InvalidParameter("profile has no tracked interface".into()))?;
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
        }
        Ok(Self { xi: jump.pos, u, n: 0, alpha, mode_last: None })
    }

    pub fn jump(&self) -> Jump {
        self.u.jump().expect("state profile tracks the interface")
    }

    pub fn to_p(&self) -> Result<ProfileFn> {
        to_p(&self.u, JUMP_TOL)
    }
}

/// `p = u - sgn(· - xi)`, where `xi` is the tracked point of `u`.
pub fn to_p(u: &ProfileFn, tol: f64) -> Result<ProfileFn> {
    let j = u
        .jump()
        .ok_or_else(|| Error::InvalidParameter("profile has no tracked interface".into()))?;
    if (j.size() - INTERFACE_JUMP).abs() > tol {
        return Err(Error::BrokenStefanContinuity { jump: j.size() });
    }
    let samples = u
        .samples()
        .iter()
        .enumerate()
        .map(|(k, &v)| if u.domain().x(k) <= j.pos { v + 1.0 } else { v - 1.0 })
        .collect();
    let jump = Jump { pos: j.pos, left: j.left + 1.0, right: j.right - 1.0 };
    Ok(ProfileFn::from_parts(*u.domain(), samples, Some(jump)))
}

/// `u = p + sgn(· - xi)`; `p` is evaluated at `xi` unless it already tracks it.
pub fn from_p(p: &ProfileFn, xi: f64) -> Result<ProfileFn> {
    let (pl, pr) = match p.jump() {
        Some(j) if j.pos == xi => (j.left, j.right),
        _ => {
            let v = p.eval(xi);
            (v, v)
        }
    };
    let d = *p.domain();
    let samples = p
        .samples()
        .iter()
        .enumerate()
        .map(|(k, &v)| if d.x(k) <= xi { v - 1.0 } else { v + 1.0 })
        .collect();
    ProfileFn::with_jump(d, samples, Jump { pos: xi, left: pl - 1.0, right: pr + 1.0 })
}

/// Outcome of one condition of the admissibility definition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub passed: bool,
    /// Largest violation; zero when the condition holds strictly.
    pub worst: f64,
    /// Where the largest violation occurs.
    pub location: Option<f64>,
}

impl ConditionReport {
    fn from_worst(worst: f64, location: Option<f64>, tol: f64) -> Self {
        Self { passed: worst <= tol, worst, location }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub tol: f64,
    pub regularity: ConditionReport,
    pub jump: ConditionReport,
    pub sign: ConditionReport,
    pub majorant: ConditionReport,
}

impl AdmissibilityReport {
    pub fn passed(&self) -> bool {
        self.conditions().iter().all(|(_, c)| c.passed)
    }

    pub fn conditions(&self) -> [(&'static str, ConditionReport); 4] {
        [
            ("regularity", self.regularity),
            ("jump", self.jump),
            ("sign", self.sign),
            ("majorant", self.majorant),
        ]
    }

    /// One line per failing condition.
    pub fn failures(&self) -> Vec<String> {
        self.conditions()
            .iter()
            .filter(|(_, c)| !c.passed)
            .map(|(name, c)| match c.location {
                Some(x) => format!("{name}: violation {:.6e} at x = {x}", c.worst),
                None => format!("{name}: violation {:.6e}", c.worst),
            })
            .collect()
    }
}

fn track_worst(worst: &mut (f64, Option<f64>), v: f64, x: f64) {
    if v > worst.0 {
        *worst = (v, Some(x));
    }
}

/// Evaluates the four admissibility conditions on the grid plus the exact
/// one-sided limits at the interface.
pub fn check_admissible(state: &SimState, tol: f64) -> AdmissibilityReport {
    let u = &state.u;
    let d = u.domain();
    let xi = state.xi;

    let regularity = match u.jump() {
        Some(j) if j.pos == xi && u.samples().iter().all(|v| v.is_finite()) => {
            ConditionReport { passed: true, worst: 0.0, location: None }
        }
        Some(j) => ConditionReport {
            passed: false,
            worst: (j.pos - xi).abs(),
            location: Some(j.pos),
        },
        None => ConditionReport { passed: false, worst: f64::INFINITY, location: None },
    };
    let (left_lim, right_lim) = u.jump().map_or((u.eval(xi), u.eval(xi)), |j| (j.left, j.right));

    let jump_err = (right_lim - left_lim - INTERFACE_JUMP).abs();
    let jump = ConditionReport::from_worst(jump_err, Some(xi), tol);

    let mut sign = (0.0, None);
    let mut maj = (0.0, None);
    track_worst(&mut sign, left_lim, xi);
    track_worst(&mut sign, U_LOWER - left_lim, xi);
    track_worst(&mut sign, -right_lim, xi);
    track_worst(&mut maj, right_lim - INTERFACE_JUMP, xi);
    for (k, &v) in u.samples().iter().enumerate() {
        let x = d.x(k);
        if x <= xi {
            track_worst(&mut sign, v, x);
            track_worst(&mut sign, U_LOWER - v, x);
        } else {
            track_worst(&mut sign, -v, x);
            track_worst(&mut maj, v - state.alpha * (x - xi) - INTERFACE_JUMP, x);
        }
    }
    if d.kind == DomainKind::WholeLine {
        // the linear continuation must respect the majorant at infinity too
        let (_, sr) = u.end_slopes();
        if sr - state.alpha > tol {
            maj = (f64::INFINITY, Some(f64::INFINITY));
        }
    }
    AdmissibilityReport {
        tol,
        regularity,
        jump,
        sign: ConditionReport::from_worst(sign.0, sign.1, tol),
        majorant: ConditionReport::from_worst(maj.0, maj.1, tol),
    }
}

/// Smallest majorant slope: `sup_{x > xi} (u(x) - 2)/(x - xi)`, clamped at 0.
/// On whole-line domains the slope of the linear continuation also counts.
pub fn min_alpha(state: &SimState) -> f64 {
    let u = &state.u;
    let d = u.domain();
    let xi = state.xi;
    if let Some(j) = u.jump() {
        if j.right > INTERFACE_JUMP {
            return f64::INFINITY;
        }
    }
    let mut a = u
        .samples()
        .iter()
        .enumerate()
        .filter(|(k, _)| d.x(*k) > xi)
        .map(|(k, &v)| (v - INTERFACE_JUMP) / (d.x(k) - xi))
        .fold(0.0_f64, f64::max);
    if d.kind == DomainKind::WholeLine {
        a = a.max(u.end_slopes().1);
    }
    a
}
