use super::*;
use crate::experiment::preset_depinning;
use crate::kernels::{eval_heat, GPower};
use crate::scheme::{run, SchemeConfig};
use approx::assert_abs_diff_eq;
use proptest::prelude::*;

fn eps(e: f64) -> Epsilon {
    Epsilon::new(e).unwrap()
}

fn depinning_like(kind: DomainKind, h: f64) -> SimState {
    let d = Domain::new(kind, -2.0, 2.0, h).unwrap();
    let u = ProfileFn::from_fn_with_jump(d, 0.0, -0.6, 1.4, |x| if x <= 0.0 { 2.0 * x - 0.6 } else { 7.0 * x + 1.4 })
        .unwrap();
    SimState::new(u, 7.0).unwrap()
}

// ∫ G₀(t, x - y) p(y) dy with p continued linearly, split at the kinks
fn heat_by_quadrature(p: &ProfileFn, t: f64, x: f64) -> f64 {
    let d = p.domain();
    let (sl, sr) = p.end_slopes();
    let (vl, vr) = (p.samples()[0], *p.samples().last().unwrap());
    let ext = |y: f64| {
        if y < d.left {
            vl + sl * (y - d.left)
        } else if y > d.right {
            vr + sr * (y - d.right)
        } else {
            p.eval(y)
        }
    };
    let w = 14.0 * (2.0 * t).sqrt();
    let mut br = vec![x - w, x + w];
    br.extend(p.knots().iter().map(|k| k.x).filter(|y| (y - x).abs() < w));
    br.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Composite::new(20, 24).integrate(&br, |y| eval_heat(t, x - y) * ext(y))
}

#[test]
fn heat_exact_matches_quadrature() {
    let s = depinning_like(DomainKind::BoundedNeumann, 0.05);
    let p = s.to_p().unwrap();
    for &t in &[0.001, 0.02, 0.1] {
        for &x in &[-1.3, -0.2, -0.01, 0.0, 0.03, 0.5, 1.9] {
            assert_abs_diff_eq!(heat_exact(&p, t, x).unwrap(), heat_by_quadrature(&p, t, x), epsilon = 1e-11);
        }
    }
    assert!(heat_exact(&p, 0.0, 0.0).is_err());
}

// Crank-Nicolson on [-4, 4] with Dirichlet values from the linear tails
fn crank_nicolson(init: impl Fn(f64) -> f64, h: f64, dt: f64, t_end: f64) -> (Vec<f64>, Vec<f64>) {
    let m = (8.0 / h).round() as usize;
    let xs: Vec<f64> = (0..=m).map(|j| -4.0 + j as f64 * h).collect();
    let mut u: Vec<f64> = xs.iter().map(|&x| init(x)).collect();
    let r = dt / (h * h);
    let n = m - 1;
    let (a, b) = (-0.5 * r, 1.0 + r);
    let mut c = vec![0.0; n];
    c[0] = a / b;
    for i in 1..n {
        c[i] = a / (b - a * c[i - 1]);
    }
    let mut dd = vec![0.0; n];
    for _ in 0..(t_end / dt).round() as usize {
        for i in 0..n {
            let j = i + 1;
            let mut rhs = 0.5 * r * (u[j - 1] + u[j + 1]) + (1.0 - r) * u[j];
            if i == 0 {
                rhs -= a * u[0];
            }
            if i == n - 1 {
                rhs -= a * u[m];
            }
            dd[i] = if i == 0 { rhs / b } else { (rhs - a * dd[i - 1]) / (b - a * c[i - 1]) };
        }
        for i in (0..n).rev() {
            u[i + 1] = if i + 1 < n { dd[i] - c[i] * u[i + 2] } else { dd[i] };
        }
    }
    (xs, u)
}

#[test]
fn heat_exact_matches_fine_time_stepping_on_preset_data() {
    let p = depinning_like(DomainKind::BoundedNeumann, 0.01).to_p().unwrap();
    let heat = HeatSolution::new(&p);
    let (xs, u) = crank_nicolson(|x| heat.eval(1e-300, x).unwrap(), 1e-3, 1e-6, 0.05);
    let j0 = xs.iter().position(|x| x.abs() < 1e-12).unwrap();
    assert_abs_diff_eq!(u[j0], heat.eval(0.05, 0.0).unwrap(), epsilon = 1e-6);
}

#[test]
fn heat_semigroup() {
    let p = depinning_like(DomainKind::BoundedNeumann, 0.05).to_p().unwrap();
    let heat = HeatSolution::new(&p);
    let (t1, t2): (f64, f64) = (0.013, 0.04);
    for &x in &[-0.7, -0.05, 0.0, 0.2, 1.1] {
        let w = 14.0 * (2.0 * t2).sqrt();
        let twice = Composite::new(20, 40).integrate(&[x - w, 0.0, x + w], |y| {
            eval_heat(t2, x - y) * heat.eval(t1, y).unwrap()
        });
        assert_abs_diff_eq!(twice, heat.eval(t1 + t2, x).unwrap(), epsilon = 1e-8);
    }
}

#[test]
fn heat_exact_matches_crank_nicolson() {
    let d = Domain::new(DomainKind::WholeLine, -1.0, 1.0, 0.1).unwrap();
    let p = ProfileFn::from_fn(d, |x| if x < -0.3 { 0.5 * x } else if x < 0.4 { 2.0 * x + 0.45 } else { 1.25 - x }).unwrap();
    let heat = HeatSolution::new(&p);
    let t_end = 0.1;
    let (xs, u) = crank_nicolson(|x| heat.eval(1e-300, x).unwrap(), 1e-3, 1e-5, t_end);
    for (j, &x) in xs.iter().enumerate() {
        if x.abs() <= 1.5 {
            assert!((u[j] - heat.eval(t_end, x).unwrap()).abs() < 1e-6, "x = {x}");
        }
    }
}

#[test]
fn cauchy_weight_closed_forms() {
    let sqpi = std::f64::consts::PI.sqrt();
    for n in [1usize, 2, 3, 5, 10, 40, 200] {
        let nf = n as f64;
        let (i0, i2) = cauchy_weight_integrals(n);
        let want0 = nf * (nf.sqrt() * cauchy_power_integral(n) - sqpi);
        let partial: f64 = (1..=n).map(cauchy_power_integral).sum();
        let want2 = nf * (2.0 * sqpi - partial / nf.sqrt());
        assert_abs_diff_eq!(i0, want0, epsilon = 1e-9 * want0.abs().max(1.0));
        assert_abs_diff_eq!(i2, want2, epsilon = 1e-9 * want2.abs().max(1.0));
    }
    assert_abs_diff_eq!(cauchy_power_integral(1), std::f64::consts::PI, epsilon = 1e-14);
    // bounded in n
    let big = cauchy_weight_table(&[1000, 4000]);
    assert!(big.iter().all(|r| r.int_b < 1.0 && r.int_b_over_s2 < 3.0));
}

#[test]
fn unit_gap_value() {
    assert_abs_diff_eq!(unit_gap_at_origin(eps(0.1)), 2.179052, epsilon = 1e-6);
    let rows = kernel_gap_study(eps(0.1), &[1], None, 0.1 / 40.0).unwrap();
    assert_abs_diff_eq!(rows[0].gap, 2.1790, epsilon = 1e-3);
    assert_abs_diff_eq!(rows[0].gap_normalized, 0.21790, epsilon = 1e-4);
}

#[test]
fn kernel_gap_against_closed_form_powers() {
    let e = eps(0.1);
    let rows = kernel_gap_study(e, &[2, 3, 6], None, 0.1 / 40.0).unwrap();
    for r in &rows {
        let g = GPower::new(e, r.n);
        let t = r.n as f64 * e.dt();
        let oracle = (-4000..=4000)
            .map(|k| k as f64 * 1e-4)
            .map(|x| (g.eval(x) - eval_heat(t, x)).abs())
            .fold(0.0, f64::max);
        assert!((r.gap - oracle).abs() < 2e-3 * oracle, "n = {}: {} vs {}", r.n, r.gap, oracle);
    }
}

#[test]
fn data_gap_against_quadrature() {
    let e = eps(0.1);
    let d = Domain::new(DomainKind::WholeLine, -2.0, 2.0, 0.01).unwrap();
    let q = ProfileFn::from_fn(d, |x| 1.5 * x.abs()).unwrap();
    let rows = kernel_gap_study(e, &[1, 4], Some(&q), 0.1 / 40.0).unwrap();
    for r in &rows {
        let g = GPower::new(e, r.n);
        let t = r.n as f64 * e.dt();
        let w = 40.0 * e.value() * (r.n as f64).sqrt();
        let oracle = (-60..=60)
            .map(|k| k as f64 * 0.01)
            .map(|x| {
                Composite::new(16, 80)
                    .integrate(&[x - w, 0.0_f64.min(x), 0.0_f64.max(x), x + w], |y| {
                        (g.eval(x - y) - eval_heat(t, x - y)) * 1.5 * y.abs()
                    })
                    .abs()
            })
            .fold(0.0, f64::max);
        assert!((r.data_gap - oracle).abs() < 1e-3 * oracle, "n = {}: {} vs {}", r.n, r.data_gap, oracle);
        assert_abs_diff_eq!(r.data_gap_normalized, r.data_gap * (r.n as f64).sqrt() / (0.1 * 3.0), epsilon = 1e-12);
    }
    let jumpy = depinning_like(DomainKind::WholeLine, 0.01).u;
    assert!(kernel_gap_study(e, &[1], Some(&jumpy), 0.01).is_err());
}

#[test]
fn slope_jump_of_exact_corner() {
    let d = Domain::new(DomainKind::BoundedNeumann, -1.0, 1.0, 0.01).unwrap();
    let p = ProfileFn::from_fn(d, |x| if x < 0.1 { 2.0 * x } else { 0.2 + 7.0 * (x - 0.1) }).unwrap();
    let (l, r) = slope_jump(&p, 0.1, 0.3).unwrap();
    assert_abs_diff_eq!(l, 2.0, epsilon = 1e-9);
    assert_abs_diff_eq!(r, 7.0, epsilon = 1e-9);
    assert!(slope_jump(&p, 0.1, 0.5).is_err());
    // cubic data are reproduced, so the extrapolated slopes are exact
    let c = ProfileFn::from_fn(d, |x| x * x * x - 0.5 * x * x).unwrap();
    let (l, r) = slope_jump(&c, 0.2, 0.25).unwrap();
    assert_abs_diff_eq!(l, 3.0 * 0.04 - 0.2, epsilon = 1e-9);
    assert_abs_diff_eq!(r, 3.0 * 0.04 - 0.2, epsilon = 1e-9);
}

#[test]
fn stefan_window_bounds() {
    let init = depinning_like(DomainKind::WholeLine, 0.01);
    let e = eps(0.1);
    let all: Vec<f64> = (0..=25).map(|k| k as f64 * 0.01).collect();
    let traj = run(init, &SchemeConfig::new(e), 0.25, &all).unwrap();
    let profiles: Vec<ProfileFn> = traj.snapshots.iter().map(|s| to_p(&s.u, JUMP_TOL).unwrap()).collect();
    assert!(matches!(stefan_residual(&traj, &profiles, 0.03, 0.3), Err(Error::WindowOutOfRange { .. })));
    assert!(matches!(stefan_residual(&traj, &profiles, 0.22, 0.3), Err(Error::WindowOutOfRange { .. })));
    assert!(stefan_residual(&traj, &profiles, 0.15, 0.2).is_err());
    let pr = stefan_residual(&traj, &profiles, 0.15, 0.3).unwrap();
    assert_eq!(pr.n, 15);
    assert!(pr.xi_dot < 0.0);
    assert_abs_diff_eq!(pr.residual, (2.0 * pr.xi_dot + pr.slope_jump).abs(), epsilon = 1e-15);
}

#[test]
fn flow_rule_and_depinning() {
    let init = depinning_like(DomainKind::WholeLine, 0.01);
    let traj = run(init, &SchemeConfig::new(eps(0.1)), 0.25, &[]).unwrap();
    let rep = flow_rule_check(&traj, 1e-8);
    assert!(rep.passed(), "{rep:?}");
    assert_eq!(rep.steps, 25);
    assert_abs_diff_eq!(depinning_time(&traj), 0.05, epsilon = 1e-12);

    let mut bad = traj.clone();
    bad.modes[3] = Some(Mode::RM);
    bad.p_at_xi[2] = 1.4;
    bad.modes[2] = Some(Mode::ST);
    bad.xis[4] = bad.xis[3] + 0.01;
    let rep = flow_rule_check(&bad, 1e-8);
    let kinds: Vec<ViolationKind> = rep.violations.iter().map(|v| v.kind).collect();
    assert!(kinds.contains(&ViolationKind::StandingOutsideBand));
    assert!(kinds.contains(&ViolationKind::RightMoving));
    assert!(kinds.contains(&ViolationKind::Rightward));
    assert_abs_diff_eq!(rep.worst, 0.4, epsilon = 1e-12);

    let mut still = traj;
    for m in still.modes.iter_mut().skip(1) {
        *m = Some(Mode::ST);
    }
    assert_eq!(depinning_time(&still), f64::INFINITY);
}

#[test]
fn bulk_residual_of_exact_implicit_step() {
    let d = Domain::new(DomainKind::BoundedNeumann, -1.0, 1.0, 0.01).unwrap();
    let dt = 0.003;
    let a = ProfileFn::from_fn(d, |x| x * x).unwrap();
    let b = ProfileFn::from_fn(d, |x| x * x + 2.0 * dt).unwrap();
    assert!(bulk_residual(&a, &b, dt, (0.0, 0.0), 0.1) < 1e-9);
    let c = ProfileFn::from_fn(d, |x| x * x + 3.0 * dt).unwrap();
    assert_abs_diff_eq!(bulk_residual(&a, &c, dt, (0.0, 0.0), 0.1), 1.0, epsilon = 1e-8);
}

#[test]
fn holder_sampling_is_seeded() {
    let s = HolderSampling { t_range: (0.0, 1.0), x_range: (-1.0, 1.0), pairs: 500, seed: 3 };
    let f = |t: f64, x: f64| t.powf(0.25) + x;
    let a = holder_quotient(f, 0.25, &s).unwrap();
    let b = holder_quotient(f, 0.25, &s).unwrap();
    assert_eq!(a, b);
    assert!(a.time <= 1.0 + 1e-12 && a.time > 0.5);
    assert!(a.space <= 2f64.sqrt() + 1e-12 && a.space > 1.0);
    let other = holder_quotient(f, 0.25, &HolderSampling { seed: 4, ..s }).unwrap();
    assert_ne!(a, other);
    assert!(holder_quotient(f, 0.5, &s).is_err());
    assert!(holder_quotient(f, 0.0, &s).is_err());
}

#[test]
fn orders_of_power_laws() {
    let e = [0.1, 0.05, 0.025];
    let err: Vec<f64> = e.iter().map(|x: &f64| 3.0 * x.powf(1.5)).collect();
    for o in orders(&e, &err) {
        assert_abs_diff_eq!(o, 1.5, epsilon = 1e-12);
    }
}

#[test]
fn sweep_validation() {
    let mut s = SweepConfig::depinning_default(preset_depinning());
    s.validate().unwrap();
    s.eps2_list = vec![0.01, 0.005];
    assert!(s.validate().unwrap_err().to_string().contains("eps2_list"));
    s.eps2_list = vec![0.01, 0.005, 0.005];
    assert!(s.validate().is_err());
    let mut s = SweepConfig::depinning_default(preset_depinning());
    s.gamma = 0.6;
    assert!(s.validate().is_err());
    let mut s = SweepConfig::depinning_default(preset_depinning());
    s.probe_factor = 2.0;
    assert!(s.validate().is_err());
}

#[test]
fn regular_part_converges_to_heat_flow() {
    let p = depinning_like(DomainKind::BoundedNeumann, 0.01).to_p().unwrap();
    let errs: Vec<f64> = [0.01, 0.0025]
        .iter()
        .map(|&e2| regular_part_error(Epsilon::from_eps2(e2).unwrap(), &p, 0.1).unwrap())
        .collect();
    assert!(errs[1] < 0.5 * errs[0], "{errs:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn heat_preserves_affine_data(a in -3.0f64..3.0, b in -3.0f64..3.0, t in 1e-4f64..1.0, x in -5.0f64..5.0) {
        let d = Domain::new(DomainKind::WholeLine, -1.0, 1.0, 0.1).unwrap();
        let p = ProfileFn::from_fn(d, |y| a + b * y).unwrap();
        prop_assert!((heat_exact(&p, t, x).unwrap() - (a + b * x)).abs() < 1e-12 * (1.0 + x.abs()) * (1.0 + b.abs()));
    }

    #[test]
    fn unit_gap_scales_like_inverse_eps(e in 0.05f64..0.2) {
        let v = unit_gap_at_origin(eps(e)) * e;
        prop_assert!((v - (0.5 - 1.0 / (4.0 * std::f64::consts::PI).sqrt())).abs() < 1e-14);
    }
}

#[test]
fn standing_sweep_measures_the_regular_part_alone() {
    // p = 0.3 |x| never reaches the threshold, so only diffusion differs between members
    let mut base = preset_depinning();
    base.alpha = Some(1.0);
    base.init.segments[0].slope = -0.3;
    base.init.segments[0].intercept = -1.0;
    base.init.segments[1].slope = 0.3;
    base.init.segments[1].intercept = 1.0;
    let cfg = SweepConfig { holder_pairs: 200, ..SweepConfig::depinning_default(base) };
    let (rep, _) = converge_sweep(&cfg).unwrap();
    assert!(rep.members.iter().all(|m| m.depinning_time.is_none()));
    assert!(rep.xi_distances.iter().all(|&d| d == 0.0));
    // comparisons start at t = eps_max², where the eps²/√t branch of the
    // regular-part error already dominates
    let order = rep.rate_estimates["p_distance"][0];
    assert!((0.8..=2.2).contains(&order), "order {order}, distances {:?}", rep.p_distances);
}
