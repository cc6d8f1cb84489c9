//! One Euler-Maruyama step of the particle density: Brownian motion, the
//! random-batch pair interaction and the drift from the previous field.

use std::io::{Read, Write};

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use rustfft::FftDirection;

use crate::error::{Error, Result};
use crate::model::{ParticleEnsemble, SimulationConfig};
use crate::ops;
use crate::rng::{BrownianNoise, Purpose, RngStream};
use crate::spectral::{
    eval_gradient, fft3, grad_kernel, gradient_at_points, shifted_grid_values, signed_index, wavenumber, GreenParams,
    HalfSpectrum, SpectralField,
};
use crate::vec3::{add, norm, scale, sub, wrap_periodic, Vec3};

/// Offset from `x` to the centre of its grid cell of width `L/H`.
pub fn cell_shift(x: Vec3, domain_len: f64, h: usize) -> Vec3 {
    let dx = domain_len / h as f64;
    let c = |v: f64| 0.5 * dx + (v / dx).floor() * dx - v;
    [c(x[0]), c(x[1]), c(x[2])]
}

/// The random batch of particle `owner`: indices drawn with replacement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchDraw {
    pub owner: usize,
    pub members: Vec<usize>,
}

/// `R` i.i.d. uniform indices in `0..P` from the `(Batch, step, p)` stream.
pub fn sample_batch(rng: &RngStream, p_total: usize, r: usize, owner: usize, step: u64) -> BatchDraw {
    assert!(r >= 1 && r <= p_total, "batch size must be in 1..=P");
    let mut s = rng.stream(Purpose::Batch, step, owner as u64);
    BatchDraw {
        owner,
        members: (0..r).map(|_| s.gen_range(0..p_total)).collect(),
    }
}

/// Pairs closer than this are skipped in the interaction sum.
pub fn pair_cutoff(cfg: &SimulationConfig) -> f64 {
    cfg.domain_len / (2.0 * cfg.modes_per_dim as f64)
}

#[inline]
fn pair_term(xp: Vec3, xs: Vec3, beta: f64, d_min: f64) -> Vec3 {
    let d = sub(xp, xs);
    if norm(d) < d_min {
        [0.0; 3]
    } else {
        grad_kernel(d, beta)
    }
}

/// `-(chi M0 dt / R) sum_{s in batch, s != p, |X_p - X_s| >= d_min} grad K(X_p - X_s)`.
pub fn pair_drift(
    ensemble: &ParticleEnsemble,
    p: usize,
    batch: &BatchDraw,
    gp: &GreenParams,
    cfg: &SimulationConfig,
) -> Vec3 {
    debug_assert_eq!(batch.owner, p);
    let d_min = pair_cutoff(cfg);
    let xp = ensemble.positions[p];
    let mut acc = [0.0; 3];
    for &s in batch.members.iter().filter(|&&s| s != p) {
        acc = add(acc, pair_term(xp, ensemble.positions[s], gp.beta, d_min));
    }
    ops::add_pairs(batch.members.len() as u64);
    scale(acc, -cfg.chi * cfg.total_mass * cfg.dt / batch.members.len() as f64)
}

/// The interaction over all other particles with weight `M0 / P`.
pub fn full_pair_drift(ensemble: &ParticleEnsemble, p: usize, gp: &GreenParams, cfg: &SimulationConfig) -> Vec3 {
    let d_min = pair_cutoff(cfg);
    let xp = ensemble.positions[p];
    let mut acc = [0.0; 3];
    for (q, &xq) in ensemble.positions.iter().enumerate() {
        if q != p {
            acc = add(acc, pair_term(xp, xq, gp.beta, d_min));
        }
    }
    ops::add_pairs(ensemble.len() as u64);
    scale(acc, -cfg.chi * cfg.dt * ensemble.weight)
}

/// Field drift evaluated literally: sample `c(x_j - xbar)` on the grid by a
/// shifted inverse transform and sum against the kernel gradient at the
/// minimum-image offsets `x + xbar - x_j`, all of norm at least `L/(2H)`.
///
/// Costs `O(H^3 log H)` per point; [`FieldDrift`] evaluates the same sum
/// through precomputed spectral multipliers.
pub fn field_drift(field: &SpectralField, x: Vec3, gp: &GreenParams, cfg: &SimulationConfig) -> Vec3 {
    let h = field.modes_per_dim();
    let l = field.domain_len();
    let xw = wrap_periodic(x, l);
    let xbar = cell_shift(xw, l, h);
    let centre = add(xw, xbar);
    let grid = shifted_grid_values(field, xbar);
    let mut acc = [0.0; 3];
    for (k, &c) in grid.values().iter().enumerate() {
        let y = wrap_periodic(sub(centre, grid.point(k)), l);
        acc = add(acc, scale(grad_kernel(y, gp.beta), c));
    }
    let cell = (l / h as f64).powi(3);
    scale(acc, -cfg.eps * cfg.chi * cell)
}

/// Per-mode multipliers `D_a(m)` of the grid quadrature: the quadrature
/// applied to a field equals `sum_m a_m D_a(m) d/dx_a Phi_m(x)`.
///
/// With the kernel offsets wrapped to the symmetric lattice
/// `y = (d + 1/2) L/H`, the quadrature is a discrete convolution
/// independent of the evaluation point, so its symbol is the DFT of the
/// sampled kernel gradient. Depends only on `(H, L, beta)`.
#[derive(Debug, Clone)]
pub struct DriftMultipliers {
    h: usize,
    domain_len: f64,
    beta: f64,
    d: [Vec<f64>; 3],
}

impl DriftMultipliers {
    pub fn new(h: usize, domain_len: f64, beta: f64) -> Self {
        let dx = domain_len / h as f64;
        let n = h * h * h;
        let y = |k: usize| (signed_index(k, h) as f64 + 0.5) * dx;
        let mut samples = vec![vec![Complex64::default(); n]; 3];
        for k in 0..n {
            let g = grad_kernel([y(k / (h * h)), y((k / h) % h), y(k % h)], beta);
            for a in 0..3 {
                samples[a][k] = Complex64::new(g[a], 0.0);
            }
        }
        let cell = dx * dx * dx;
        let d = std::array::from_fn(|a| {
            let mut s = std::mem::take(&mut samples[a]);
            fft3(&mut s, h, FftDirection::Forward);
            (0..n)
                .map(|k| {
                    let m = [k / (h * h), (k / h) % h, k % h];
                    let ma = m[a];
                    if signed_index(ma, h) == 0 {
                        return 0.0;
                    }
                    let msum: i64 = m.iter().map(|&mi| signed_index(mi, h)).sum();
                    let phase = Complex64::from_polar(1.0, -std::f64::consts::PI * msum as f64 / h as f64);
                    let f = s[k] * phase * cell;
                    // F = -i G with G real, and D = -G / omega_a
                    let w = wavenumber(ma, h, domain_len);
                    (Complex64::new(0.0, -1.0) * f).re / w
                })
                .collect()
        });
        Self { h, domain_len, beta, d }
    }

    pub fn for_config(cfg: &SimulationConfig) -> Result<Self> {
        let gp = GreenParams::from_config(cfg)?;
        Ok(Self::new(cfg.modes_per_dim, cfg.domain_len, gp.beta))
    }

    /// `D_a` at signed mode `j`.
    pub fn get(&self, a: usize, j: [i64; 3]) -> f64 {
        let h = self.h;
        let s = |v: i64| v.rem_euclid(h as i64) as usize;
        self.d[a][(s(j[0]) * h + s(j[1])) * h + s(j[2])]
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// The field drift `-eps chi (quadrature)` of one field, ready for
/// evaluation at many points.
#[derive(Debug, Clone)]
pub struct FieldDrift {
    domain_len: f64,
    b: [HalfSpectrum; 3],
}

impl FieldDrift {
    pub fn new(field: &SpectralField, mult: &DriftMultipliers, eps: f64, chi: f64) -> Result<Self> {
        if field.modes_per_dim() != mult.h || field.domain_len() != mult.domain_len {
            return Err(Error::Shape("field and drift multipliers disagree on H or L".into()));
        }
        let h = mult.h;
        let b = std::array::from_fn(|a| {
            HalfSpectrum::from_full(field.coeffs(), h, |k1, k2, k3| {
                -eps * chi * mult.d[a][(k1 * h + k2) * h + k3]
            })
        });
        Ok(Self {
            domain_len: field.domain_len(),
            b,
        })
    }

    pub fn at(&self, x: Vec3) -> Vec3 {
        eval_gradient([&self.b[0], &self.b[1], &self.b[2]], x, self.domain_len)
    }
}

/// The three displacement contributions of one particle in one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftBreakdown {
    pub field_part: Vec3,
    pub pair_part: Vec3,
    pub noise: Vec3,
}

/// How the pair interaction is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairMode {
    RandomBatch,
    /// All `P - 1` partners; the `O(P^2)` reference.
    Full,
}

/// Particle update with everything that does not change between steps
/// precomputed.
///
/// Each step reads only the frozen step-`n` ensemble (a Jacobi sweep), so
/// particles are updated in parallel and the result is independent of the
/// schedule.
#[derive(Debug, Clone)]
pub struct Stepper {
    cfg: SimulationConfig,
    gp: GreenParams,
    mult: DriftMultipliers,
    rng: RngStream,
    noise: BrownianNoise,
    pair_mode: PairMode,
}

impl Stepper {
    pub fn new(cfg: &SimulationConfig, rng: RngStream) -> Result<Self> {
        let gp = GreenParams::from_config(cfg)?;
        Ok(Self {
            cfg: cfg.clone(),
            gp,
            mult: DriftMultipliers::new(cfg.modes_per_dim, cfg.domain_len, gp.beta),
            rng,
            noise: BrownianNoise::new(rng),
            pair_mode: PairMode::RandomBatch,
        })
    }

    pub fn with_noise(mut self, noise: BrownianNoise) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_pair_mode(mut self, mode: PairMode) -> Self {
        self.pair_mode = mode;
        self
    }

    pub fn config(&self) -> &SimulationConfig {
        &self.cfg
    }

    fn noise_scale(&self) -> f64 {
        (2.0 * self.cfg.mu * self.cfg.dt).sqrt()
    }

    /// `X_1 = X_0 + chi grad c_0(X_0) dt + sqrt(2 mu dt) N_0`.
    pub fn first_step(&self, ens: &ParticleEnsemble, field0: &SpectralField) -> Result<ParticleEnsemble> {
        if ens.step_index != 0 {
            return Err(Error::Domain(format!(
                "first step needs the step-0 ensemble, got step {}",
                ens.step_index
            )));
        }
        let grads = gradient_at_points(field0, &ens.positions);
        let s = self.noise_scale();
        let positions = ens
            .positions
            .par_iter()
            .zip(grads.par_iter())
            .enumerate()
            .map(|(p, (&x, &g))| {
                let drift = scale(g, self.cfg.chi * self.cfg.dt);
                add(add(x, drift), scale(self.noise.increment(0, p as u64), s))
            })
            .collect();
        Ok(ParticleEnsemble::new(positions, ens.weight, 1))
    }

    /// Advances the step-`n` ensemble with the step-`(n-1)` field.
    pub fn step(&self, ens: &ParticleEnsemble, field: &SpectralField) -> Result<ParticleEnsemble> {
        let labels: Vec<u64> = (0..ens.len() as u64).collect();
        Ok(self.step_labelled(ens, field, &labels)?.0)
    }

    pub fn step_with_breakdown(
        &self,
        ens: &ParticleEnsemble,
        field: &SpectralField,
    ) -> Result<(ParticleEnsemble, Vec<DriftBreakdown>)> {
        let labels: Vec<u64> = (0..ens.len() as u64).collect();
        self.step_labelled(ens, field, &labels)
    }

    /// As [`Stepper::step`], but particle `p` draws its randomness from
    /// address `labels[p]`, and batch draws name particles by label.
    /// `labels` must be a permutation of `0..P`.
    pub fn step_labelled(
        &self,
        ens: &ParticleEnsemble,
        field: &SpectralField,
        labels: &[u64],
    ) -> Result<(ParticleEnsemble, Vec<DriftBreakdown>)> {
        let n = ens.step_index;
        if n == 0 || field.step_index() + 1 != n {
            return Err(Error::Domain(format!(
                "particle step {n} needs the field of step {}, got step {}",
                n.saturating_sub(1),
                field.step_index()
            )));
        }
        let p_total = ens.len();
        if labels.len() != p_total {
            return Err(Error::Shape("one label per particle required".into()));
        }
        let mut by_label = vec![usize::MAX; p_total];
        for (p, &lab) in labels.iter().enumerate() {
            let slot = by_label
                .get_mut(lab as usize)
                .filter(|s| **s == usize::MAX)
                .ok_or_else(|| Error::Shape("labels are not a permutation".into()))?;
            *slot = p;
        }
        let drift = FieldDrift::new(field, &self.mult, self.cfg.eps, self.cfg.chi)?;
        let s = self.noise_scale();
        let r = self.cfg.batch_size;
        let results: Vec<(Vec3, DriftBreakdown)> = (0..p_total)
            .into_par_iter()
            .map(|p| {
                let x = ens.positions[p];
                let lab = labels[p];
                let field_part = drift.at(x);
                let pair_part = match self.pair_mode {
                    PairMode::RandomBatch => {
                        let mut batch = sample_batch(&self.rng, p_total, r, lab as usize, n);
                        batch.owner = p;
                        for m in &mut batch.members {
                            *m = by_label[*m];
                        }
                        pair_drift(ens, p, &batch, &self.gp, &self.cfg)
                    }
                    PairMode::Full => full_pair_drift(ens, p, &self.gp, &self.cfg),
                };
                let noise = scale(self.noise.increment(n, lab), s);
                let next = add(add(add(x, field_part), pair_part), noise);
                (
                    next,
                    DriftBreakdown {
                        field_part,
                        pair_part,
                        noise,
                    },
                )
            })
            .collect();
        let (positions, parts) = results.into_iter().unzip();
        Ok((ParticleEnsemble::new(positions, ens.weight, n + 1), parts))
    }
}

/// One particle step with the default random-batch interaction.
pub fn step_particles(
    ens: &ParticleEnsemble,
    field_prev: &SpectralField,
    cfg: &SimulationConfig,
    rng: &RngStream,
) -> Result<ParticleEnsemble> {
    Stepper::new(cfg, *rng)?.step(ens, field_prev)
}

/// The special first step driven by the spectral gradient of `c_0`.
pub fn first_step(
    ens0: &ParticleEnsemble,
    field0: &SpectralField,
    cfg: &SimulationConfig,
    rng: &RngStream,
) -> Result<ParticleEnsemble> {
    Stepper::new(cfg, *rng)?.first_step(ens0, field0)
}

/// Binary snapshot: `P` (u64), step (u64), time (f64), then `P` little-endian
/// `(x, y, z)` triples.
pub fn write_particles<W: Write>(ens: &ParticleEnsemble, time: f64, mut w: W) -> Result<()> {
    let mut buf = Vec::with_capacity(24 + 24 * ens.len());
    buf.extend_from_slice(&(ens.len() as u64).to_le_bytes());
    buf.extend_from_slice(&ens.step_index.to_le_bytes());
    buf.extend_from_slice(&time.to_le_bytes());
    for x in &ens.positions {
        for v in x {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Reads a snapshot back; `weight` is not stored and must be supplied.
pub fn read_particles<R: Read>(mut r: R, weight: f64) -> Result<(ParticleEnsemble, f64)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < 24 {
        return Err(Error::Checkpoint("particle record: truncated header".into()));
    }
    let word = |i: usize| -> [u8; 8] { bytes[8 * i..8 * i + 8].try_into().unwrap() };
    let p = u64::from_le_bytes(word(0)) as usize;
    let step = u64::from_le_bytes(word(1));
    let time = f64::from_le_bytes(word(2));
    if bytes.len() != 24 + 24 * p {
        return Err(Error::Checkpoint(
            "particle record: length does not match header".into(),
        ));
    }
    let positions = (0..p)
        .map(|i| {
            let b = 3 + 3 * i;
            [
                f64::from_le_bytes(word(b)),
                f64::from_le_bytes(word(b + 1)),
                f64::from_le_bytes(word(b + 2)),
            ]
        })
        .collect();
    Ok((ParticleEnsemble::new(positions, weight, step), time))
}

/// `x,y,z` CSV for plotting.
pub fn write_particles_csv<W: Write>(ens: &ParticleEnsemble, mut w: W) -> Result<()> {
    writeln!(w, "x,y,z")?;
    for x in &ens.positions {
        writeln!(w, "{},{},{}", x[0], x[1], x[2])?;
    }
    Ok(())
}
