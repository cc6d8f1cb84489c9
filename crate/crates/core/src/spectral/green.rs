//! Screened Green's function of `Delta - lambda^2 - eps/dt` in free space.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::SimulationConfig;
use crate::vec3::{norm, scale, Vec3};

/// Screening parameter `beta = sqrt(lambda^2 + eps/dt)` and its inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreenParams {
    pub beta: f64,
    pub lambda: f64,
    pub eps: f64,
    pub dt: f64,
}

impl GreenParams {
    pub fn new(lambda: f64, eps: f64, dt: f64) -> Result<Self> {
        let beta = (lambda * lambda + eps / dt).sqrt();
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::Domain(format!(
                "screening parameter beta = {beta} must be positive and finite"
            )));
        }
        Ok(Self { beta, lambda, eps, dt })
    }

    pub fn from_config(cfg: &SimulationConfig) -> Result<Self> {
        Self::new(cfg.lambda, cfg.eps, cfg.dt)
    }

    /// Kernel parameters with an explicit `beta` (zero gives the Newtonian
    /// kernel). Only for direct kernel evaluation.
    pub fn with_beta(beta: f64) -> Self {
        Self {
            beta,
            lambda: beta,
            eps: 0.0,
            dt: 1.0,
        }
    }
}

fn check_nonzero(x: Vec3) -> Result<f64> {
    let r = norm(x);
    if r == 0.0 || !r.is_finite() {
        return Err(Error::Domain(format!("Green's function is singular at x = {x:?}")));
    }
    Ok(r)
}

/// `K(x) = -exp(-beta |x|) / (4 pi |x|)`.
pub fn green_kernel(x: Vec3, gp: &GreenParams) -> Result<f64> {
    let r = check_nonzero(x)?;
    Ok(-(-gp.beta * r).exp() / (4.0 * PI * r))
}

/// `grad K(x) = x exp(-beta r)(1 + beta r) / (4 pi r^3)`.
pub fn green_gradient(x: Vec3, gp: &GreenParams) -> Result<Vec3> {
    check_nonzero(x)?;
    Ok(grad_kernel(x, gp.beta))
}

/// Unchecked kernel gradient for hot loops; the caller guarantees `x != 0`.
#[inline]
pub(crate) fn grad_kernel(x: Vec3, beta: f64) -> Vec3 {
    let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
    let r = r2.sqrt();
    let br = beta * r;
    let s = (-br).exp() * (1.0 + br) / (4.0 * PI * r2 * r);
    scale(x, s)
}

/// Fourier symbol of `-K`: `1 / (4 pi^2 |j|^2 / L^2 + beta^2)`.
pub fn green_multiplier(j: [i64; 3], gp: &GreenParams, domain_len: f64) -> f64 {
    let jj = (j[0] * j[0] + j[1] * j[1] + j[2] * j[2]) as f64;
    1.0 / (4.0 * PI * PI * jj / (domain_len * domain_len) + gp.beta * gp.beta)
}
