//! Direct evaluation of Fourier series at arbitrary points and the adjoint
//! (particle deposit), both over the Hermitian half spectrum `k3 <= H/2`.
//!
//! Basis per dimension: `e^{i w_k x}` for `k != H/2` and `cos(w_N x)` for the
//! Nyquist index, so that series with Hermitian coefficients are real at every
//! point, not only on the grid.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use super::signed_index;
use crate::ops;
use crate::vec3::Vec3;

/// Values of the 1D basis (or its derivative) at one coordinate, split into
/// real and imaginary parts, in FFT index order.
#[derive(Debug, Clone)]
pub(crate) struct AxisTable {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl AxisTable {
    fn with_len(h: usize) -> Self {
        Self {
            re: vec![0.0; h],
            im: vec![0.0; h],
        }
    }
}

pub(crate) fn axis_tables(x: f64, h: usize, domain_len: f64) -> (AxisTable, AxisTable) {
    let mut val = AxisTable::with_len(h);
    let mut der = AxisTable::with_len(h);
    let nyq = h / 2;
    for k in 0..h {
        let w = 2.0 * PI * signed_index(k, h) as f64 / domain_len;
        if k == nyq {
            let wn = PI * h as f64 / domain_len;
            val.re[k] = (wn * x).cos();
            der.re[k] = -wn * (wn * x).sin();
        } else {
            let (s, c) = (w * x).sin_cos();
            val.re[k] = c;
            val.im[k] = s;
            der.re[k] = -w * s;
            der.im[k] = w * c;
        }
    }
    (val, der)
}

/// Coefficients for `k3 in 0..=H/2`, laid out `(k1 * H + k2) * nz + k3`.
#[derive(Debug, Clone)]
pub(crate) struct HalfSpectrum {
    pub h: usize,
    pub nz: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl HalfSpectrum {
    pub fn zeros(h: usize) -> Self {
        let nz = h / 2 + 1;
        Self {
            h,
            nz,
            re: vec![0.0; h * h * nz],
            im: vec![0.0; h * h * nz],
        }
    }

    /// Builds from a full FFT-order array, scaling each mode by `w(k1,k2,k3)`.
    pub fn from_full(full: &[Complex64], h: usize, w: impl Fn(usize, usize, usize) -> f64) -> Self {
        let mut s = Self::zeros(h);
        let nz = s.nz;
        for k1 in 0..h {
            for k2 in 0..h {
                for k3 in 0..nz {
                    let v = full[(k1 * h + k2) * h + k3] * w(k1, k2, k3);
                    let i = (k1 * h + k2) * nz + k3;
                    s.re[i] = v.re;
                    s.im[i] = v.im;
                }
            }
        }
        s
    }

    /// Expands to the full FFT-order array using Hermitian symmetry.
    pub fn to_full(&self) -> Vec<Complex64> {
        let (h, nz) = (self.h, self.nz);
        let mut full = vec![Complex64::default(); h * h * h];
        for k1 in 0..h {
            for k2 in 0..h {
                for k3 in 0..h {
                    let v = if k3 < nz {
                        let i = (k1 * h + k2) * nz + k3;
                        Complex64::new(self.re[i], self.im[i])
                    } else {
                        let i = (((h - k1) % h) * h + (h - k2) % h) * nz + (h - k3);
                        Complex64::new(self.re[i], -self.im[i])
                    };
                    full[(k1 * h + k2) * h + k3] = v;
                }
            }
        }
        full
    }

    fn add(&mut self, other: &HalfSpectrum) {
        for (a, b) in self.re.iter_mut().zip(&other.re) {
            *a += b;
        }
        for (a, b) in self.im.iter_mut().zip(&other.im) {
            *a += b;
        }
    }
}

#[inline]
fn finish(ur: &[f64], ui: &[f64], t: &AxisTable) -> f64 {
    let nz = ur.len();
    let mut acc = 0.0;
    for k in 0..nz {
        let v = ur[k] * t.re[k] - ui[k] * t.im[k];
        acc += if k == 0 || k == nz - 1 { v } else { 2.0 * v };
    }
    acc
}

/// `sum_k B_k T1[k1] T2[k2] T3[k3]` over the full spectrum of a real series.
pub(crate) fn eval_scalar(b: &HalfSpectrum, t1: &AxisTable, t2: &AxisTable, t3: &AxisTable) -> f64 {
    let (h, nz) = (b.h, b.nz);
    let mut ur = vec![0.0; nz];
    let mut ui = vec![0.0; nz];
    for k1 in 0..h {
        let (ar, ai) = (t1.re[k1], t1.im[k1]);
        for k2 in 0..h {
            let tr = ar * t2.re[k2] - ai * t2.im[k2];
            let ti = ar * t2.im[k2] + ai * t2.re[k2];
            let base = (k1 * h + k2) * nz;
            let br = &b.re[base..base + nz];
            let bi = &b.im[base..base + nz];
            for k in 0..nz {
                ur[k] += br[k] * tr - bi[k] * ti;
                ui[k] += br[k] * ti + bi[k] * tr;
            }
        }
    }
    ops::add_spectral((h * h * nz) as u64);
    finish(&ur, &ui, t3)
}

/// Three series evaluated at one point; component `a` differentiates along
/// axis `a` (a gradient when all three spectra coincide).
pub(crate) fn eval_gradient(b: [&HalfSpectrum; 3], x: Vec3, domain_len: f64) -> Vec3 {
    let h = b[0].h;
    let nz = b[0].nz;
    let (v1, d1) = axis_tables(x[0], h, domain_len);
    let (v2, d2) = axis_tables(x[1], h, domain_len);
    let (v3, d3) = axis_tables(x[2], h, domain_len);
    let mut u = [
        [vec![0.0; nz], vec![0.0; nz]],
        [vec![0.0; nz], vec![0.0; nz]],
        [vec![0.0; nz], vec![0.0; nz]],
    ];
    for k1 in 0..h {
        for k2 in 0..h {
            let pairs = [
                (d1.re[k1], d1.im[k1], v2.re[k2], v2.im[k2]),
                (v1.re[k1], v1.im[k1], d2.re[k2], d2.im[k2]),
                (v1.re[k1], v1.im[k1], v2.re[k2], v2.im[k2]),
            ];
            let base = (k1 * h + k2) * nz;
            for a in 0..3 {
                let (ar, ai, cr, ci) = pairs[a];
                let tr = ar * cr - ai * ci;
                let ti = ar * ci + ai * cr;
                let br = &b[a].re[base..base + nz];
                let bi = &b[a].im[base..base + nz];
                let [ur, ui] = &mut u[a];
                for k in 0..nz {
                    ur[k] += br[k] * tr - bi[k] * ti;
                    ui[k] += br[k] * ti + bi[k] * tr;
                }
            }
        }
    }
    ops::add_spectral(3 * (h * h * nz) as u64);
    [
        finish(&u[0][0], &u[0][1], &v3),
        finish(&u[1][0], &u[1][1], &v3),
        finish(&u[2][0], &u[2][1], &d3),
    ]
}

const DEPOSIT_BLOCK: usize = 256;

/// `scale * sum_p conj(Phi_k(X_p))` for every mode, as a full FFT-order
/// array. Blocks of particles are summed in parallel and reduced in a fixed
/// order, so the result does not depend on the thread count.
pub(crate) fn deposit(positions: &[Vec3], h: usize, domain_len: f64, scale: f64) -> Vec<Complex64> {
    let partials: Vec<HalfSpectrum> = positions
        .par_chunks(DEPOSIT_BLOCK)
        .map(|block| {
            let mut acc = HalfSpectrum::zeros(h);
            let nz = acc.nz;
            for x in block {
                let (t1, _) = axis_tables(x[0], h, domain_len);
                let (t2, _) = axis_tables(x[1], h, domain_len);
                let (t3, _) = axis_tables(x[2], h, domain_len);
                for k1 in 0..h {
                    let (ar, ai) = (t1.re[k1], -t1.im[k1]);
                    for k2 in 0..h {
                        let (cr, ci) = (t2.re[k2], -t2.im[k2]);
                        let tr = ar * cr - ai * ci;
                        let ti = ar * ci + ai * cr;
                        let base = (k1 * h + k2) * nz;
                        let or = &mut acc.re[base..base + nz];
                        for k in 0..nz {
                            or[k] += tr * t3.re[k] + ti * t3.im[k];
                        }
                        let oi = &mut acc.im[base..base + nz];
                        for k in 0..nz {
                            oi[k] += ti * t3.re[k] - tr * t3.im[k];
                        }
                    }
                }
            }
            ops::add_spectral((block.len() * h * h * nz) as u64);
            acc
        })
        .collect();
    let mut total = HalfSpectrum::zeros(h);
    for p in &partials {
        total.add(p);
    }
    for v in total.re.iter_mut().chain(total.im.iter_mut()) {
        *v *= scale;
    }
    total.to_full()
}
