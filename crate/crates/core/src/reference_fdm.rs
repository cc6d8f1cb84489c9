//! Radially symmetric finite-volume solver for the same system, used as the
//! reference solution for a ball of particles centred at the origin.
//!
//! Nodes sit at `r_i = i dr`, `i = 0..n_r`, with `r_max = L/2`; node `i` owns
//! the shell between the neighbouring midpoints. Each step first solves the
//! concentration equation implicitly with the current density, then moves
//! the density with first-order upwind fluxes of the velocity
//! `chi dc/dr` and finally applies implicit diffusion. The origin needs no
//! boundary condition (zero face area); at `r_max` the density is held at 0
//! and the concentration has zero flux.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::{InitialDensitySpec, SimulationConfig};

/// Radial profiles at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    pub n_r: usize,
    pub dr: f64,
    pub r_max: f64,
    pub r: Vec<f64>,
    pub rho: Vec<f64>,
    pub c: Vec<f64>,
    pub time: f64,
}

/// Coefficients and initial profiles on a radial mesh of `n_r` nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProblem {
    pub mu: f64,
    pub chi: f64,
    pub eps: f64,
    pub lambda: f64,
    pub r_max: f64,
    pub rho0: Vec<f64>,
    pub c0: Vec<f64>,
}

impl RadialProblem {
    /// Mesh radii for `n` nodes on `[0, r_max]`.
    pub fn radii(r_max: f64, n: usize) -> Vec<f64> {
        let dr = r_max / (n - 1) as f64;
        (0..n).map(|i| i as f64 * dr).collect()
    }

    /// Node averages of a uniform ball of mass `mass` and radius `a`, so the
    /// discrete mass equals `mass` exactly.
    pub fn ball_profile(r_max: f64, n: usize, a: f64, mass: f64) -> Vec<f64> {
        let edges = shell_edges(r_max, n);
        let density = mass / (4.0 / 3.0 * PI * a.powi(3));
        (0..n)
            .map(|i| {
                let (lo, hi) = (edges[i], edges[i + 1]);
                let inside = hi.min(a).powi(3) - lo.min(a).powi(3);
                density * inside.max(0.0) / (hi.powi(3) - lo.powi(3))
            })
            .collect()
    }

    /// The radial problem matching a configuration whose initial density is
    /// a ball centred at the origin; `c_0 = 0`.
    pub fn from_config(cfg: &SimulationConfig, n_r: usize) -> Result<Self> {
        let (center, radius) = match &cfg.init_rho {
            InitialDensitySpec::UniformBall { center, radius } => (*center, *radius),
            _ => {
                return Err(Error::Unsupported(
                    "the radial reference needs a single uniform ball".into(),
                ))
            }
        };
        if center != [0.0; 3] {
            return Err(Error::Unsupported(
                "the radial reference needs the ball centred at the origin".into(),
            ));
        }
        if n_r < 3 {
            return Err(Error::Domain("at least 3 radial nodes are required".into()));
        }
        let r_max = cfg.domain_len / 2.0;
        Ok(Self {
            mu: cfg.mu,
            chi: cfg.chi,
            eps: cfg.eps,
            lambda: cfg.lambda,
            r_max,
            rho0: Self::ball_profile(r_max, n_r, radius, cfg.total_mass),
            c0: vec![0.0; n_r],
        })
    }
}

/// Shell boundaries: `0, dr/2, 3dr/2, ..., r_max`.
fn shell_edges(r_max: f64, n: usize) -> Vec<f64> {
    let dr = r_max / (n - 1) as f64;
    let mut e: Vec<f64> = (0..n).map(|i| (i as f64 - 0.5).max(0.0) * dr).collect();
    e.push(r_max);
    e
}

/// Solves `a_i x_{i-1} + b_i x_i + c_i x_{i+1} = d_i` (Thomas algorithm).
fn solve_tridiagonal(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    cp[0] = c[0] / b[0];
    dp[0] = d[0] / b[0];
    for i in 1..n {
        let m = b[i] - a[i] * cp[i - 1];
        cp[i] = c[i] / m;
        dp[i] = (d[i] - a[i] * dp[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = dp[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = dp[i] - cp[i] * x[i + 1];
    }
    x
}

/// Time integrator for a [`RadialProblem`].
#[derive(Debug, Clone)]
pub struct RadialSolver {
    problem: RadialProblem,
    dr: f64,
    r: Vec<f64>,
    /// Shell volumes.
    vol: Vec<f64>,
    /// `area[i]`: area of the face between nodes `i` and `i + 1`.
    area: Vec<f64>,
    rho: Vec<f64>,
    c: Vec<f64>,
    time: f64,
}

impl RadialSolver {
    pub fn new(problem: RadialProblem) -> Result<Self> {
        let n = problem.rho0.len();
        if n < 3 || problem.c0.len() != n {
            return Err(Error::Shape("initial profiles need equal length >= 3".into()));
        }
        let dr = problem.r_max / (n - 1) as f64;
        let edges = shell_edges(problem.r_max, n);
        let vol = (0..n)
            .map(|i| 4.0 / 3.0 * PI * (edges[i + 1].powi(3) - edges[i].powi(3)))
            .collect();
        let area = (0..n - 1).map(|i| 4.0 * PI * edges[i + 1].powi(2)).collect();
        let mut rho = problem.rho0.clone();
        rho[n - 1] = 0.0;
        Ok(Self {
            r: RadialProblem::radii(problem.r_max, n),
            c: problem.c0.clone(),
            problem,
            dr,
            vol,
            area,
            rho,
            time: 0.0,
        })
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Mass `sum_i V_i rho_i`.
    pub fn mass(&self) -> f64 {
        self.rho.iter().zip(&self.vol).map(|(r, v)| r * v).sum()
    }

    /// Replaces the density; for frozen-density experiments.
    pub fn set_rho(&mut self, rho: Vec<f64>) -> Result<()> {
        if rho.len() != self.rho.len() {
            return Err(Error::Shape("density length does not match the mesh".into()));
        }
        self.rho = rho;
        Ok(())
    }

    /// Assembles `diag_i u_i - sum_faces k A (u_nb - u_i) / dr` rows.
    fn diffusion_system(&self, k: f64, diag: impl Fn(usize) -> f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.rho.len();
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        let mut c = vec![0.0; n];
        for i in 0..n {
            b[i] = diag(i);
            if i > 0 {
                let g = k * self.area[i - 1] / self.dr;
                a[i] = -g;
                b[i] += g;
            }
            if i + 1 < n {
                let g = k * self.area[i] / self.dr;
                c[i] = -g;
                b[i] += g;
            }
        }
        (a, b, c)
    }

    /// Backward-Euler step of `eps c_t = Lap c - lambda^2 c + rho`.
    pub fn step_c(&mut self, dt: f64) {
        let p = &self.problem;
        let (eps, lam2) = (p.eps, p.lambda * p.lambda);
        let (a, b, c) = self.diffusion_system(1.0, |i| self.vol[i] * (eps / dt + lam2));
        let d: Vec<f64> = (0..self.c.len())
            .map(|i| self.vol[i] * (eps / dt * self.c[i] + self.rho[i]))
            .collect();
        self.c = solve_tridiagonal(&a, &b, &c, &d);
    }

    /// Upwind advection with velocity `chi dc/dr`, then implicit diffusion.
    pub fn step_rho(&mut self, dt: f64) -> Result<()> {
        let n = self.rho.len();
        let chi = self.problem.chi;
        let mut flux = vec![0.0; n - 1];
        let mut vmax = 0.0f64;
        for i in 0..n - 1 {
            let v = chi * (self.c[i + 1] - self.c[i]) / self.dr;
            vmax = vmax.max(v.abs());
            let up = if v > 0.0 { self.rho[i] } else { self.rho[i + 1] };
            flux[i] = self.area[i] * v * up;
        }
        let cfl = vmax * dt / self.dr;
        if cfl > 1.0 {
            return Err(Error::NumericalAbort {
                step: (self.time / dt).round() as u64,
                time: self.time,
                reason: format!("advection CFL number {cfl:.3} exceeds 1; reduce dt_fdm"),
            });
        }
        let mut star = self.rho.clone();
        for i in 0..n {
            let out = if i + 1 < n { flux[i] } else { 0.0 };
            let inn = if i > 0 { flux[i - 1] } else { 0.0 };
            star[i] -= dt / self.vol[i] * (out - inn);
        }
        let mu = self.problem.mu;
        let (mut a, mut b, c) = self.diffusion_system(mu, |i| self.vol[i] / dt);
        let mut d: Vec<f64> = (0..n).map(|i| self.vol[i] / dt * star[i]).collect();
        // density pinned to zero at r_max
        a[n - 1] = 0.0;
        b[n - 1] = 1.0;
        d[n - 1] = 0.0;
        self.rho = solve_tridiagonal(&a, &b, &c, &d);
        Ok(())
    }

    pub fn step(&mut self, dt: f64) -> Result<()> {
        self.step_c(dt);
        self.step_rho(dt)?;
        self.time += dt;
        Ok(())
    }

    /// Advances to `t_end` in equal steps no longer than `dt_max`.
    pub fn advance_to(&mut self, t_end: f64, dt_max: f64) -> Result<()> {
        let span = t_end - self.time;
        if span <= 0.0 {
            return Ok(());
        }
        let n = (span / dt_max * (1.0 - 1e-12)).ceil().max(1.0) as u64;
        let dt = span / n as f64;
        let t0 = self.time;
        for k in 1..=n {
            self.step(dt)?;
            self.time = t0 + k as f64 * dt;
        }
        Ok(())
    }

    /// Direct solve of `(Lap - lambda^2) c = -rho` with the current density.
    pub fn steady_c(&self) -> Result<Vec<f64>> {
        let lam2 = self.problem.lambda * self.problem.lambda;
        if lam2 == 0.0 {
            return Err(Error::Domain("steady concentration needs lambda > 0".into()));
        }
        let (a, b, c) = self.diffusion_system(1.0, |i| self.vol[i] * lam2);
        let d: Vec<f64> = (0..self.rho.len()).map(|i| self.vol[i] * self.rho[i]).collect();
        Ok(solve_tridiagonal(&a, &b, &c, &d))
    }

    pub fn grid(&self) -> RadialGrid {
        RadialGrid {
            n_r: self.r.len(),
            dr: self.dr,
            r_max: self.problem.r_max,
            r: self.r.clone(),
            rho: self.rho.clone(),
            c: self.c.clone(),
            time: self.time,
        }
    }
}

/// Solves the radial problem of `cfg` up to `cfg.t_final`.
pub fn solve_radial(cfg: &SimulationConfig, n_r: usize, dt_fdm: f64) -> Result<RadialGrid> {
    if !(dt_fdm > 0.0 && dt_fdm.is_finite()) {
        return Err(Error::Domain("dt_fdm must be positive".into()));
    }
    let mut s = RadialSolver::new(RadialProblem::from_config(cfg, n_r)?)?;
    s.advance_to(cfg.t_final, dt_fdm)?;
    Ok(s.grid())
}

/// Normalised cumulative mass `F(r_i)` by the trapezoid rule on `4 pi r^2 rho`.
pub fn fdm_cdf(sol: &RadialGrid) -> Result<Vec<f64>> {
    if sol.rho.iter().any(|v| *v < 0.0) {
        return Err(Error::Domain("negative density in the radial solution".into()));
    }
    let g: Vec<f64> = sol.r.iter().zip(&sol.rho).map(|(r, p)| 4.0 * PI * r * r * p).collect();
    let mut acc = vec![0.0; g.len()];
    for i in 1..g.len() {
        acc[i] = acc[i - 1] + 0.5 * (g[i - 1] + g[i]) * (sol.r[i] - sol.r[i - 1]);
    }
    let total = *acc.last().unwrap();
    if total <= 0.0 {
        return Err(Error::Domain(
            "density is identically zero; the CDF is undefined".into(),
        ));
    }
    Ok(acc.into_iter().map(|v| v / total).collect())
}

#[cfg(test)]
mod tests;
