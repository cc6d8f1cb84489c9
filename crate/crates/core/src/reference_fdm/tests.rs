use super::*;

fn heat_problem(n: usize) -> RadialProblem {
    let r_max = 4.0;
    RadialProblem {
        mu: 1.0,
        chi: 0.0,
        eps: 1.0,
        lambda: 0.0,
        r_max,
        rho0: RadialProblem::ball_profile(r_max, n, 1.0, 1.0),
        c0: vec![0.0; n],
    }
}

/// Free-space heat flow of a uniform ball (radius `a`, density `d0`).
fn heat_ball(r: f64, t: f64, a: f64, d0: f64) -> f64 {
    let s = (4.0 * t).sqrt();
    let erfs = 0.5 * (libm::erf((a - r) / s) + libm::erf((a + r) / s));
    let gauss = s / (2.0 * r * PI.sqrt()) * ((-(r - a).powi(2) / (s * s)).exp() - (-(r + a).powi(2) / (s * s)).exp());
    d0 * (erfs - gauss)
}

/// The same solution as a radial image integral, by composite Simpson.
fn heat_ball_integral(r: f64, t: f64, a: f64, d0: f64) -> f64 {
    let n = 4000;
    let h = a / n as f64;
    let f = |q: f64| q * ((-(r - q).powi(2) / (4.0 * t)).exp() - (-(r + q).powi(2) / (4.0 * t)).exp());
    let mut acc = f(0.0) + f(a);
    for i in 1..n {
        acc += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    d0 / (r * (4.0 * PI * t).sqrt()) * acc * h / 3.0
}

#[test]
fn heat_oracle_closed_form_matches_integral() {
    for r in [0.1, 0.5, 0.99, 1.3, 2.0] {
        let a = heat_ball(r, 0.05, 1.0, 2.0);
        let b = heat_ball_integral(r, 0.05, 1.0, 2.0);
        assert!((a - b).abs() < 1e-10, "r={r}: {a} vs {b}");
    }
}

#[test]
fn pure_heat_flow_converges_to_the_analytic_solution() {
    let t = 0.05;
    let d0 = 1.0 / (4.0 / 3.0 * PI);
    let err = |n: usize, dt: f64| {
        let mut s = RadialSolver::new(heat_problem(n)).unwrap();
        s.advance_to(t, dt).unwrap();
        let g = s.grid();
        g.r.iter()
            .zip(&g.rho)
            .skip(1)
            .filter(|(r, _)| **r < 3.0)
            .map(|(r, v)| (v - heat_ball(*r, t, 1.0, d0)).abs())
            .fold(0.0, f64::max)
    };
    let e1 = err(201, 2e-4);
    let e2 = err(401, 1e-4);
    let e3 = err(801, 5e-5);
    assert!(e1 < 0.01 * d0, "{e1}");
    assert!(e1 / e2 > 1.8 && e2 / e3 > 1.8, "{e1} {e2} {e3}");
}

#[test]
fn zero_density_stays_zero_and_concentration_decays() {
    let n = 101;
    let mut p = heat_problem(n);
    p.rho0 = vec![0.0; n];
    p.c0 = vec![1.5; n];
    p.chi = 1.0;
    p.eps = 1e-2;
    p.lambda = 0.5;
    let mut s = RadialSolver::new(p.clone()).unwrap();
    let dt = 1e-3;
    for k in 1..=20 {
        s.step(dt).unwrap();
        assert!(s.rho().iter().all(|v| *v == 0.0));
        let expect = 1.5 * (p.eps / dt / (p.eps / dt + p.lambda * p.lambda)).powi(k);
        assert!(s.c().iter().all(|v| (v - expect).abs() < 1e-12 * expect));
    }
}

#[test]
fn ball_profile_carries_the_exact_mass() {
    let p = RadialProblem::ball_profile(4.0, 333, 1.0, 20.0);
    let s = RadialSolver::new(RadialProblem {
        rho0: p,
        c0: vec![0.0; 333],
        ..heat_problem(333)
    })
    .unwrap();
    assert!((s.mass() - 20.0).abs() < 1e-12);
}

#[test]
fn cdf_of_uniform_ball_is_cubic() {
    let mut cfg = SimulationConfig::paper_validation();
    cfg.t_final = 1e-4;
    let n = 2001;
    let p = RadialProblem::from_config(&cfg, n).unwrap();
    let s = RadialSolver::new(p).unwrap();
    let f = fdm_cdf(&s.grid()).unwrap();
    let g = s.grid();
    assert_eq!(f[0], 0.0);
    assert!((f[n - 1] - 1.0).abs() < 1e-15);
    for (r, v) in g.r.iter().zip(&f) {
        if *r <= 0.95 {
            assert!((v - r.powi(3)).abs() < 2e-3, "r={r}: {v}");
        }
    }
    assert!(f.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn cdf_of_concentrated_density() {
    let n = 50;
    let mut rho = vec![0.0; n];
    rho[0] = 1e6;
    rho[1] = 1e6;
    let g = RadialGrid {
        n_r: n,
        dr: 0.1,
        r_max: 4.9,
        r: RadialProblem::radii(4.9, n),
        rho,
        c: vec![0.0; n],
        time: 0.0,
    };
    let f = fdm_cdf(&g).unwrap();
    assert!(f[2..].iter().all(|v| (v - 1.0).abs() < 1e-12));
    let zero = RadialGrid { rho: vec![0.0; n], ..g };
    assert!(fdm_cdf(&zero).is_err());
}

#[test]
fn mass_is_conserved_at_the_validation_setting() {
    let cfg = SimulationConfig::paper_validation();
    let mut s = RadialSolver::new(RadialProblem::from_config(&cfg, 2000).unwrap()).unwrap();
    let m0 = s.mass();
    for _ in 0..10_000 {
        s.step(1e-5).unwrap();
    }
    assert!(((s.mass() - m0) / m0).abs() < 1e-3);
    assert!(s.rho().iter().all(|v| *v >= 0.0));
}

#[test]
fn concentration_relaxes_to_the_direct_steady_solve() {
    let cfg = SimulationConfig::paper_validation();
    let mut s = RadialSolver::new(RadialProblem::from_config(&cfg, 400).unwrap()).unwrap();
    let target = s.steady_c().unwrap();
    for _ in 0..200 {
        s.step_c(1.0);
    }
    let scale = target.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let err = s.c().iter().zip(&target).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(err < 1e-8 * scale, "{err}");
}

#[test]
fn advection_cfl_violation_is_reported() {
    let mut cfg = SimulationConfig::paper_validation();
    cfg.chi = 1e4;
    let e = solve_radial(&cfg, 2000, 1e-4).unwrap_err();
    assert!(e.to_string().contains("dt_fdm"));
}

#[test]
fn off_centre_or_two_ball_configs_are_rejected() {
    let mut cfg = SimulationConfig::paper_validation();
    cfg.init_rho = InitialDensitySpec::UniformBall {
        center: [0.5, 0.0, 0.0],
        radius: 1.0,
    };
    assert!(RadialProblem::from_config(&cfg, 100).is_err());
}
