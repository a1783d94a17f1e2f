//! Experiment descriptions: grid, backend, horizon and piecewise-linear
//! initial data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::Epsilon;
use crate::profile::{Domain, DomainKind, ProfileFn};
use crate::scheme::{run, RunError, SchemeConfig, Trajectory};
use crate::state::{min_alpha, SimState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    /// Whole line, closed-form convolution.
    Analytic,
    /// Bounded interval, finite differences with Neumann rows.
    FdNeumann,
}

impl Backend {
    pub fn domain_kind(self) -> DomainKind {
        match self {
            Backend::Analytic => DomainKind::WholeLine,
            Backend::FdNeumann => DomainKind::BoundedNeumann,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub left: f64,
    pub right: f64,
    pub h: f64,
}

/// `u(x) = slope x + intercept` on `[x_from, x_to]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub x_from: f64,
    pub x_to: f64,
    pub slope: f64,
    pub intercept: f64,
}

impl Segment {
    pub fn eval(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    pub xi0: f64,
    pub segments: Vec<Segment>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Root bracket width relative to the domain width.
    pub root: f64,
    pub admissibility: f64,
    /// Target accuracy of diagnostic quadratures.
    pub quadrature: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { root: 1e-12, admissibility: 1e-8, quadrature: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Time step `eps²`.
    pub eps2: f64,
    pub backend: Backend,
    pub domain: DomainSpec,
    pub t_final: f64,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    /// Majorant slope; computed from the data when absent.
    #[serde(default)]
    pub alpha: Option<f64>,
    pub init: InitSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub strict: bool,
}

/// Failure before the first step or during the run.
#[derive(Debug, Clone)]
pub enum ExperimentError {
    Setup(Error),
    Run(RunError),
}

impl ExperimentError {
    pub fn error(&self) -> &Error {
        match self {
            ExperimentError::Setup(e) => e,
            ExperimentError::Run(r) => &r.error,
        }
    }
}

impl std::fmt::Display for ExperimentError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExperimentError::Setup(e) => write!(f, "{e}"),
            ExperimentError::Run(r) => write!(f, "{r}"),
        }
    }
}

impl std::error::Error for ExperimentError {}

fn bad(key: &str, msg: impl std::fmt::Display) -> Error {
    Error::InvalidParameter(format!("{key}: {msg}"))
}

/// Initial data of the depinning experiment: `2x - 0.6` left and `7x + 1.4`
/// right of the origin on `[-2, 2]`, bounded backend, `eps² = 0.01`.
pub fn preset_depinning() -> ExperimentConfig {
    ExperimentConfig {
        eps2: 0.01,
        backend: Backend::FdNeumann,
        domain: DomainSpec { left: -2.0, right: 2.0, h: 1.0 / 400.0 },
        t_final: 0.25,
        snapshot_times: vec![0.01, 0.03, 0.05, 0.08, 0.15, 0.25],
        alpha: Some(7.0),
        init: InitSpec {
            xi0: 0.0,
            segments: vec![
                Segment { x_from: -2.0, x_to: 0.0, slope: 2.0, intercept: -0.6 },
                Segment { x_from: 0.0, x_to: 2.0, slope: 7.0, intercept: 1.4 },
            ],
        },
        tolerances: Tolerances::default(),
        strict: false,
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps2.is_finite() && self.eps2 > 0.0) {
            return Err(bad("eps2", format!("{} must be positive", self.eps2)));
        }
        if !(self.t_final.is_finite() && self.t_final >= self.eps2) {
            return Err(bad("t_final", format!("{} must be at least eps2 = {}", self.t_final, self.eps2)));
        }
        let d = &self.domain;
        let grid = Domain::new(self.backend.domain_kind(), d.left, d.right, d.h).map_err(|e| bad("domain", e))?;
        grid.check_resolution(self.eps2.sqrt()).map_err(|e| bad("domain.h", e))?;
        for (k, &t) in self.snapshot_times.iter().enumerate() {
            if !(t.is_finite() && (0.0..=self.t_final).contains(&t)) {
                return Err(bad(&format!("snapshot_times[{k}]"), format!("{t} outside [0, {}]", self.t_final)));
            }
        }
        if let Some(a) = self.alpha {
            if !(a.is_finite() && a > 0.0) {
                return Err(bad("alpha", format!("{a} must be positive")));
            }
        }
        let tol = &self.tolerances;
        for (key, v) in [("root", tol.root), ("admissibility", tol.admissibility), ("quadrature", tol.quadrature)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(bad(&format!("tolerances.{key}"), format!("{v} must be positive")));
            }
        }
        let init = &self.init;
        if !(init.xi0 > d.left && init.xi0 < d.right) {
            return Err(bad("init.xi0", format!("{} must lie inside ({}, {})", init.xi0, d.left, d.right)));
        }
        let segs = &init.segments;
        if segs.is_empty() {
            return Err(bad("init.segments", "at least one segment is required"));
        }
        for (k, s) in segs.iter().enumerate() {
            let key = format!("init.segments[{k}]");
            if ![s.x_from, s.x_to, s.slope, s.intercept].iter().all(|v| v.is_finite()) {
                return Err(bad(&key, "all fields must be finite"));
            }
            if s.x_from >= s.x_to {
                return Err(bad(&format!("{key}.x_to"), format!("{} must exceed x_from = {}", s.x_to, s.x_from)));
            }
            if k > 0 && s.x_from != segs[k - 1].x_to {
                return Err(bad(&format!("{key}.x_from"), format!("{} does not continue at {}", s.x_from, segs[k - 1].x_to)));
            }
            if k > 0 && s.x_from != init.xi0 {
                let (l, r) = (segs[k - 1].eval(s.x_from), s.eval(s.x_from));
                if (l - r).abs() > 1e-12 * (1.0 + l.abs()) {
                    return Err(bad(&format!("{key}.intercept"), format!("data jump {l} -> {r} away from xi0")));
                }
            }
        }
        if segs[0].x_from > d.left || segs[segs.len() - 1].x_to < d.right {
            return Err(bad("init.segments", format!("must cover [{}, {}]", d.left, d.right)));
        }
        Ok(())
    }

    pub fn eps(&self) -> Result<Epsilon> {
        Epsilon::from_eps2(self.eps2)
    }

    pub fn grid(&self) -> Result<Domain> {
        let d = &self.domain;
        Domain::new(self.backend.domain_kind(), d.left, d.right, d.h)
    }

    pub fn scheme_config(&self) -> Result<SchemeConfig> {
        Ok(SchemeConfig {
            eps: self.eps()?,
            root_tol: self.tolerances.root,
            admissibility_tol: self.tolerances.admissibility,
            strict: self.strict,
        })
    }

    /// Left and right limits of the data at `x`.
    fn limits(&self, x: f64) -> (f64, f64) {
        let segs = &self.init.segments;
        let left = segs.iter().find(|s| s.x_from < x && x <= s.x_to).unwrap_or(&segs[0]);
        let right = segs.iter().find(|s| s.x_from <= x && x < s.x_to).unwrap_or(&segs[segs.len() - 1]);
        (left.eval(x), right.eval(x))
    }

    pub fn initial_state(&self) -> Result<SimState> {
        self.validate()?;
        let xi = self.init.xi0;
        let (ul, ur) = self.limits(xi);
        let u = ProfileFn::from_fn_with_jump(self.grid()?, xi, ul, ur, |x| {
            let (l, r) = self.limits(x);
            if x <= xi {
                l
            } else {
                r
            }
        })?;
        let mut state = SimState::new(u, 1.0)?;
        state.alpha = match self.alpha {
            Some(a) => a,
            None => min_alpha(&state),
        };
        if !state.alpha.is_finite() {
            return Err(bad("alpha", "the data admit no finite majorant slope"));
        }
        Ok(state)
    }

    /// Same experiment with another time step.
    pub fn with_eps2(&self, eps2: f64) -> Self {
        Self { eps2, ..self.clone() }
    }

    pub fn run(&self) -> std::result::Result<(SimState, Trajectory), ExperimentError> {
        self.run_with_snapshots(&self.snapshot_times)
    }

    /// Runs the experiment recording the given snapshot times instead of the
    /// configured ones.
    pub fn run_with_snapshots(
        &self,
        times: &[f64],
    ) -> std::result::Result<(SimState, Trajectory), ExperimentError> {
        let init = self.initial_state().map_err(ExperimentError::Setup)?;
        let cfg = self.scheme_config().map_err(ExperimentError::Setup)?;
        let traj = run(init.clone(), &cfg, self.t_final, times).map_err(ExperimentError::Run)?;
        Ok((init, traj))
    }
}
