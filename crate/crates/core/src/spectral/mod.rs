//! Fourier representation of the concentration, the screened Green's
//! function and the implicit one-step field update.
//!
//! A field is `c(x) = sum_j a_j Phi_j(x)` on the periodic box `[-L/2, L/2)^3`
//! with `Phi_j(x) = prod_i phi_{j_i}(x_i)`, `phi_j(x) = exp(i 2 pi j x / L)`
//! for `j` in `-H/2 .. H/2-1`. The Nyquist index `-H/2` uses
//! `phi(x) = cos(pi H x / L)` instead, which agrees with the exponential on
//! the grid but keeps Hermitian series real everywhere. Coefficients are
//! stored in FFT order: `j` lives at slot `j mod H`, flat index
//! `(k1 * H + k2) * H + k3`.

mod eval;
mod fft;
mod green;

use std::f64::consts::PI;
use std::io::{Read, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftDirection;

pub(crate) use eval::{axis_tables, deposit, eval_gradient, eval_scalar, HalfSpectrum};
pub(crate) use fft::fft3;
pub(crate) use green::grad_kernel;
pub use green::{green_gradient, green_kernel, green_multiplier, GreenParams};

use crate::error::{Error, Result};
use crate::model::{ParticleEnsemble, SimulationConfig};
use crate::vec3::Vec3;

/// Signed mode number of FFT slot `k`.
#[inline]
pub fn signed_index(k: usize, h: usize) -> i64 {
    if k < h / 2 {
        k as i64
    } else {
        k as i64 - h as i64
    }
}

/// FFT slot of signed mode `j` (so `+H/2` aliases onto `-H/2`).
#[inline]
pub fn slot(j: i64, h: usize) -> usize {
    j.rem_euclid(h as i64) as usize
}

/// Angular wavenumber `2 pi j / L` of slot `k`.
#[inline]
pub fn wavenumber(k: usize, h: usize, domain_len: f64) -> f64 {
    2.0 * PI * signed_index(k, h) as f64 / domain_len
}

/// Real samples on the `H^3` grid `x_m = m L / H`, `m` in `-H/2 .. H/2-1`,
/// stored in FFT order like the coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid3 {
    h: usize,
    domain_len: f64,
    values: Vec<f64>,
}

impl Grid3 {
    pub fn new(h: usize, domain_len: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() != h * h * h {
            return Err(Error::Shape(format!(
                "grid of {} values does not match H = {h}",
                values.len()
            )));
        }
        Ok(Self { h, domain_len, values })
    }

    pub fn modes_per_dim(&self) -> usize {
        self.h
    }

    pub fn domain_len(&self) -> f64 {
        self.domain_len
    }

    pub fn spacing(&self) -> f64 {
        self.domain_len / self.h as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Position of flat slot `k`.
    pub fn point(&self, k: usize) -> Vec3 {
        let h = self.h;
        let dx = self.spacing();
        [
            signed_index(k / (h * h), h) as f64 * dx,
            signed_index((k / h) % h, h) as f64 * dx,
            signed_index(k % h, h) as f64 * dx,
        ]
    }

    /// Value at signed grid index `m`.
    pub fn at(&self, m: [i64; 3]) -> f64 {
        let h = self.h;
        self.values[(slot(m[0], h) * h + slot(m[1], h)) * h + slot(m[2], h)]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| f64::max(m, v.abs()))
    }
}

/// Fourier coefficients of the concentration at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    h: usize,
    domain_len: f64,
    step_index: u64,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(h: usize, domain_len: f64) -> Self {
        Self {
            h,
            domain_len,
            step_index: 0,
            coeffs: vec![Complex64::default(); h * h * h],
        }
    }

    /// Wraps an FFT-order coefficient array.
    pub fn from_coeffs(h: usize, domain_len: f64, step_index: u64, coeffs: Vec<Complex64>) -> Result<Self> {
        if h < 2 || h % 2 != 0 || coeffs.len() != h * h * h {
            return Err(Error::Shape(format!(
                "{} coefficients do not form an even H^3 array (H = {h})",
                coeffs.len()
            )));
        }
        Ok(Self {
            h,
            domain_len,
            step_index,
            coeffs,
        })
    }

    pub fn modes_per_dim(&self) -> usize {
        self.h
    }

    pub fn domain_len(&self) -> f64 {
        self.domain_len
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    pub fn set_step_index(&mut self, n: u64) {
        self.step_index = n;
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn flat_index_signed(&self, j: [i64; 3]) -> usize {
        let h = self.h;
        (slot(j[0], h) * h + slot(j[1], h)) * h + slot(j[2], h)
    }

    /// Coefficient of signed mode `j`.
    pub fn coeff(&self, j: [i64; 3]) -> Complex64 {
        self.coeffs[self.flat_index_signed(j)]
    }

    /// Signed mode of flat slot `k`.
    pub fn mode_of(&self, k: usize) -> [i64; 3] {
        let h = self.h;
        [
            signed_index(k / (h * h), h),
            signed_index((k / h) % h, h),
            signed_index(k % h, h),
        ]
    }

    /// `|omega_j|^2` of flat slot `k`.
    pub fn omega_sq(&self, k: usize) -> f64 {
        let j = self.mode_of(k);
        let s = 2.0 * PI / self.domain_len;
        s * s * (j[0] * j[0] + j[1] * j[1] + j[2] * j[2]) as f64
    }

    /// First mode `j` with `|a_{-j} - conj(a_j)| > tol`, if any.
    pub fn hermitian_violation(&self, tol: f64) -> Option<[i64; 3]> {
        (0..self.coeffs.len()).find_map(|k| {
            let j = self.mode_of(k);
            let partner = self.coeff([-j[0], -j[1], -j[2]]);
            ((partner - self.coeffs[k].conj()).norm() > tol).then_some(j)
        })
    }

    /// Unweighted Euclidean norm of the coefficient array.
    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.coeffs.iter().all(|a| a.re.is_finite() && a.im.is_finite())
    }

    /// Complex grid samples of the series after multiplying every mode by
    /// `e^{-i omega_j . shift}` (Nyquist axes by `cos(omega_N shift_i)`).
    pub(crate) fn complex_grid(&self, shift: Vec3) -> Vec<Complex64> {
        let h = self.h;
        let l = self.domain_len;
        let factors: Vec<Vec<Complex64>> = (0..3)
            .map(|d| {
                (0..h)
                    .map(|k| {
                        if k == h / 2 {
                            Complex64::new((PI * h as f64 / l * shift[d]).cos(), 0.0)
                        } else {
                            Complex64::from_polar(1.0, -wavenumber(k, h, l) * shift[d])
                        }
                    })
                    .collect()
            })
            .collect();
        let mut data = self.coeffs.clone();
        if shift != [0.0; 3] {
            for k1 in 0..h {
                for k2 in 0..h {
                    let f12 = factors[0][k1] * factors[1][k2];
                    let base = (k1 * h + k2) * h;
                    for k3 in 0..h {
                        data[base + k3] *= f12 * factors[2][k3];
                    }
                }
            }
        }
        fft3(&mut data, h, FftDirection::Inverse);
        data
    }

    pub fn to_grid(&self) -> Grid3 {
        field_to_grid(self)
    }

    pub(crate) fn half_spectrum(&self) -> HalfSpectrum {
        HalfSpectrum::from_full(&self.coeffs, self.h, |_, _, _| 1.0)
    }

    /// Binary record: `H` (u64), `L` (f64), step (u64), then `H^3` (re, im)
    /// pairs with `j1` slowest and every index ascending from `-H/2`; all
    /// little-endian.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let h = self.h;
        let half = (h / 2) as i64;
        let mut buf = Vec::with_capacity(24 + 16 * self.coeffs.len());
        buf.extend_from_slice(&(h as u64).to_le_bytes());
        buf.extend_from_slice(&self.domain_len.to_le_bytes());
        buf.extend_from_slice(&self.step_index.to_le_bytes());
        for j1 in -half..half {
            for j2 in -half..half {
                for j3 in -half..half {
                    let a = self.coeff([j1, j2, j3]);
                    buf.extend_from_slice(&a.re.to_le_bytes());
                    buf.extend_from_slice(&a.im.to_le_bytes());
                }
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let corrupt = |what: &str| Error::Checkpoint(format!("field record: {what}"));
        if bytes.len() < 24 {
            return Err(corrupt("truncated header"));
        }
        let word = |i: usize| -> [u8; 8] { bytes[8 * i..8 * i + 8].try_into().unwrap() };
        let h = u64::from_le_bytes(word(0)) as usize;
        let domain_len = f64::from_le_bytes(word(1));
        let step_index = u64::from_le_bytes(word(2));
        if h < 2 || h % 2 != 0 || h > 4096 {
            return Err(corrupt("invalid mode count"));
        }
        if bytes.len() != 24 + 16 * h * h * h {
            return Err(corrupt("length does not match header"));
        }
        let mut field = Self::zeros(h, domain_len);
        field.step_index = step_index;
        let half = (h / 2) as i64;
        let mut w = 3;
        for j1 in -half..half {
            for j2 in -half..half {
                for j3 in -half..half {
                    let idx = field.flat_index_signed([j1, j2, j3]);
                    field.coeffs[idx] = Complex64::new(f64::from_le_bytes(word(w)), f64::from_le_bytes(word(w + 1)));
                    w += 2;
                }
            }
        }
        Ok(field)
    }
}

/// Grid samples `c(x_m)` by inverse DFT; imaginary parts are dropped.
pub fn field_to_grid(f: &SpectralField) -> Grid3 {
    shifted_grid_values(f, [0.0; 3])
}

/// Samples `c(x_m - xbar)` on the grid.
pub fn shifted_grid_values(f: &SpectralField, xbar: Vec3) -> Grid3 {
    let data = f.complex_grid(xbar);
    Grid3 {
        h: f.h,
        domain_len: f.domain_len,
        values: data.into_iter().map(|z| z.re).collect(),
    }
}

/// Coefficients of the trigonometric interpolant of grid samples.
pub fn field_from_grid(g: &Grid3) -> SpectralField {
    let h = g.h;
    let mut data: Vec<Complex64> = g.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft3(&mut data, h, FftDirection::Forward);
    let n = (h * h * h) as f64;
    for a in &mut data {
        *a /= n;
    }
    SpectralField {
        h,
        domain_len: g.domain_len,
        step_index: 0,
        coeffs: data,
    }
}

/// Series values `c(x)` at arbitrary points.
pub fn values_at_points(f: &SpectralField, pts: &[Vec3]) -> Vec<f64> {
    let b = f.half_spectrum();
    pts.par_iter()
        .map(|x| {
            let (t1, _) = axis_tables(x[0], f.h, f.domain_len);
            let (t2, _) = axis_tables(x[1], f.h, f.domain_len);
            let (t3, _) = axis_tables(x[2], f.h, f.domain_len);
            eval_scalar(&b, &t1, &t2, &t3)
        })
        .collect()
}

/// Spectral gradient `sum_j i omega_j a_j Phi_j(x)` at arbitrary points.
pub fn gradient_at_points(f: &SpectralField, pts: &[Vec3]) -> Vec<Vec3> {
    let b = f.half_spectrum();
    pts.par_iter()
        .map(|x| eval_gradient([&b, &b, &b], *x, f.domain_len))
        .collect()
}

/// `(M0 / (P L^3)) sum_p conj(Phi_j(X_p))` for every mode.
pub fn deposit_density(rho: &ParticleEnsemble, h: usize, domain_len: f64) -> Vec<Complex64> {
    let scale = rho.weight / domain_len.powi(3);
    deposit(&rho.positions, h, domain_len, scale)
}

fn check_update_inputs(prev: &SpectralField, rho: &ParticleEnsemble, cfg: &SimulationConfig) -> Result<()> {
    if cfg.eps == 0.0 {
        return Err(Error::Unsupported(
            "eps = 0 (elliptic concentration equation) is not supported".into(),
        ));
    }
    if prev.h != cfg.modes_per_dim || prev.domain_len != cfg.domain_len {
        return Err(Error::Shape(format!(
            "field has H = {}, L = {} but config has H = {}, L = {}",
            prev.h, prev.domain_len, cfg.modes_per_dim, cfg.domain_len
        )));
    }
    if rho.step_index != prev.step_index + 1 {
        return Err(Error::Domain(format!(
            "field at step {} cannot absorb particles at step {}",
            prev.step_index, rho.step_index
        )));
    }
    Ok(())
}

/// One implicit step: `a_n = (a_{n-1} + (dt/eps) rho_hat) / (1 + Z_j)` with
/// `Z_j = (dt/eps)(|omega_j|^2 + lambda^2)`.
pub fn update_field(prev: &SpectralField, rho: &ParticleEnsemble, cfg: &SimulationConfig) -> Result<SpectralField> {
    check_update_inputs(prev, rho, cfg)?;
    let rho_hat = deposit_density(rho, prev.h, prev.domain_len);
    let r = cfg.dt / cfg.eps;
    let lam2 = cfg.lambda * cfg.lambda;
    let coeffs = (0..prev.coeffs.len())
        .map(|k| {
            let z = r * (prev.omega_sq(k) + lam2);
            (prev.coeffs[k] + r * rho_hat[k]) / (1.0 + z)
        })
        .collect();
    Ok(SpectralField {
        h: prev.h,
        domain_len: prev.domain_len,
        step_index: rho.step_index,
        coeffs,
    })
}

/// The same step written as a decay by `(eps/dt) G_j` followed by the
/// deposit filtered by `G_j = 1 / (|omega_j|^2 + beta^2)`.
pub fn update_field_two_stage(
    prev: &SpectralField,
    rho: &ParticleEnsemble,
    cfg: &SimulationConfig,
) -> Result<SpectralField> {
    check_update_inputs(prev, rho, cfg)?;
    let gp = GreenParams::from_config(cfg)?;
    let rho_hat = deposit_density(rho, prev.h, prev.domain_len);
    let coeffs = (0..prev.coeffs.len())
        .map(|k| {
            let g = green_multiplier(prev.mode_of(k), &gp, prev.domain_len);
            let decayed = prev.coeffs[k] * (cfg.eps / cfg.dt * g);
            decayed + rho_hat[k] * g
        })
        .collect();
    Ok(SpectralField {
        h: prev.h,
        domain_len: prev.domain_len,
        step_index: rho.step_index,
        coeffs,
    })
}

/// Which per-mode stability bound to test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilityBound {
    /// `|a_0| + M0 / (|omega|^2 + lambda^2)`.
    Mass,
    /// `|a_0| + M0 / (L^3 (|omega|^2 + lambda^2))`, sharp for this
    /// normalisation of the deposit.
    MassDensity,
}

/// First mode whose coefficient exceeds the stability bound relative to the
/// initial field, with a relative slack of `1e-12`.
pub fn stability_violation(
    field: &SpectralField,
    initial: &SpectralField,
    total_mass: f64,
    lambda: f64,
    bound: StabilityBound,
) -> Option<[i64; 3]> {
    let m = match bound {
        StabilityBound::Mass => total_mass,
        StabilityBound::MassDensity => total_mass / field.domain_len.powi(3),
    };
    (0..field.coeffs.len()).find_map(|k| {
        let limit = initial.coeffs[k].norm() + m / (field.omega_sq(k) + lambda * lambda);
        (field.coeffs[k].norm() > limit * (1.0 + 1e-12)).then(|| field.mode_of(k))
    })
}
