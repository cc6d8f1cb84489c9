//! Run configuration, initial conditions and the particle ensemble.

use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, Result};
use crate::rng::{Purpose, RngStream};
use crate::spectral::SpectralField;
use crate::vec3::Vec3;

/// Initial particle density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialDensitySpec {
    /// Uniform density on a ball.
    UniformBall { center: Vec3, radius: f64 },
    /// Two uniform balls of equal radius; `mass_split` is the fraction of
    /// the mass in the first one.
    TwoSpheres {
        centers: [Vec3; 2],
        radius: f64,
        mass_split: f64,
    },
}

impl InitialDensitySpec {
    pub fn balls(&self) -> Vec<(Vec3, f64)> {
        match self {
            InitialDensitySpec::UniformBall { center, radius } => vec![(*center, *radius)],
            InitialDensitySpec::TwoSpheres { centers, radius, .. } => {
                vec![(centers[0], *radius), (centers[1], *radius)]
            }
        }
    }
}

/// One Fourier mode of the initial concentration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeAmplitude {
    pub index: [i64; 3],
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

/// Initial chemical concentration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialFieldSpec {
    #[default]
    Zero,
    Modes(Vec<ModeAmplitude>),
}

fn default_trials() -> usize {
    1
}

/// All model and discretisation parameters of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    /// Diffusivity of the organisms.
    pub mu: f64,
    /// Chemotactic sensitivity.
    pub chi: f64,
    /// Parabolic relaxation parameter of the concentration equation.
    pub eps: f64,
    /// Decay rate (enters squared).
    pub lambda: f64,
    /// Side length of the periodic box `[-L/2, L/2]^3`.
    pub domain_len: f64,
    /// Fourier modes per dimension (even).
    pub modes_per_dim: usize,
    pub particles: usize,
    pub batch_size: usize,
    pub dt: f64,
    pub t_final: f64,
    pub total_mass: f64,
    pub seed: u64,
    pub init_rho: InitialDensitySpec,
    #[serde(default)]
    pub init_c: InitialFieldSpec,
    #[serde(default = "default_trials")]
    pub trials: usize,
}

impl SimulationConfig {
    /// Parameters of the radial validation experiment (ball of radius 1,
    /// 10^4 particles, 24 modes, T = 0.1).
    pub fn paper_validation() -> Self {
        Self {
            mu: 1.0,
            chi: 1.0,
            eps: 1e-4,
            lambda: 0.1,
            domain_len: 8.0,
            modes_per_dim: 24,
            particles: 10_000,
            batch_size: 100,
            dt: 1e-4,
            t_final: 0.1,
            total_mass: 20.0,
            seed: 2024,
            init_rho: InitialDensitySpec::UniformBall {
                center: [0.0; 3],
                radius: 1.0,
            },
            init_c: InitialFieldSpec::Zero,
            trials: 1,
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: SimulationConfig = serde_json::from_str(s)?;
        Ok(cfg)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// `floor(T / dt)`, tolerant to the representation error of the ratio.
    pub fn num_steps(&self) -> u64 {
        (self.t_final / self.dt * (1.0 + 1e-12)).floor() as u64
    }

    /// Mass carried by each particle.
    pub fn particle_weight(&self) -> f64 {
        self.total_mass / self.particles as f64
    }

    /// `beta^2 = lambda^2 + eps / dt`.
    pub fn beta_squared(&self) -> f64 {
        self.lambda * self.lambda + self.eps / self.dt
    }

    pub fn rng(&self) -> RngStream {
        RngStream::new(self.seed)
    }

    /// Returns the config unchanged iff every invariant holds.
    pub fn validate(self) -> Result<Self> {
        validate_config(self)
    }
}

fn positive(v: f64, name: &'static str) -> std::result::Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::NonPositive(name))
    }
}

fn non_negative(v: f64, name: &'static str) -> std::result::Result<(), ConfigError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(ConfigError::Negative(name))
    }
}

pub fn validate_config(raw: SimulationConfig) -> Result<SimulationConfig> {
    check(&raw, true)?;
    Ok(raw)
}

/// Like [`validate_config`] but admits `mu = 0` and `chi = 0`, which the
/// solver handles (frozen or field-free dynamics) and tests rely on.
pub(crate) fn check_runnable(c: &SimulationConfig) -> Result<()> {
    check(c, false)?;
    Ok(())
}

fn check(c: &SimulationConfig, strict: bool) -> std::result::Result<(), ConfigError> {
    if strict {
        positive(c.mu, "mu")?;
        positive(c.chi, "chi")?;
    } else {
        non_negative(c.mu, "mu")?;
        non_negative(c.chi, "chi")?;
    }
    non_negative(c.eps, "eps")?;
    non_negative(c.lambda, "lambda")?;
    positive(c.domain_len, "domain_len")?;
    if c.modes_per_dim < 2 || c.modes_per_dim % 2 != 0 {
        return Err(ConfigError::OddModes(c.modes_per_dim));
    }
    if c.particles == 0 {
        return Err(ConfigError::NoParticles);
    }
    if c.batch_size == 0 {
        return Err(ConfigError::EmptyBatch);
    }
    if c.batch_size > c.particles {
        return Err(ConfigError::BatchExceedsParticles {
            batch: c.batch_size,
            particles: c.particles,
        });
    }
    positive(c.dt, "dt")?;
    positive(c.t_final, "t_final")?;
    if c.dt > c.t_final * (1.0 + 1e-12) {
        return Err(ConfigError::DtExceedsFinalTime {
            dt: c.dt,
            t_final: c.t_final,
        });
    }
    positive(c.total_mass, "total_mass")?;
    if c.eps == 0.0 && c.lambda == 0.0 {
        return Err(ConfigError::ScreeningUndefined);
    }
    if c.trials == 0 {
        return Err(ConfigError::NoTrials);
    }
    let half = 0.5 * c.domain_len;
    for (center, radius) in c.init_rho.balls() {
        positive(radius, "radius")?;
        if center.iter().any(|x| !x.is_finite() || x.abs() + radius >= half) {
            return Err(ConfigError::BallOutsideDomain {
                center,
                radius,
                half_len: half,
            });
        }
    }
    if let InitialDensitySpec::TwoSpheres { mass_split, .. } = c.init_rho {
        if !(mass_split > 0.0 && mass_split < 1.0) {
            return Err(ConfigError::MassSplit(mass_split));
        }
    }
    if let InitialFieldSpec::Modes(modes) = &c.init_c {
        let half_modes = c.modes_per_dim / 2;
        for m in modes {
            if m.index.iter().any(|j| j.unsigned_abs() as usize > half_modes) {
                return Err(ConfigError::ModeOutOfRange {
                    index: m.index,
                    half: half_modes,
                });
            }
        }
    }
    Ok(())
}

/// `P` particle positions of equal mass `M0 / P`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub positions: Vec<Vec3>,
    pub weight: f64,
    pub step_index: u64,
}

impl ParticleEnsemble {
    pub fn new(positions: Vec<Vec3>, weight: f64, step_index: u64) -> Self {
        Self {
            positions,
            weight,
            step_index,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.weight * self.positions.len() as f64
    }

    pub fn all_finite(&self) -> bool {
        self.positions.iter().flatten().all(|v| v.is_finite())
    }
}

/// Uniform point in the ball by inverse CDF: three uniforms per draw.
fn uniform_in_ball<R: Rng>(rng: &mut R, center: Vec3, radius: f64) -> Vec3 {
    let cos_theta: f64 = 2.0 * rng.gen::<f64>() - 1.0;
    let phi = 2.0 * std::f64::consts::PI * rng.gen::<f64>();
    let r = radius * rng.gen::<f64>().cbrt();
    let sin_theta = (1.0 - cos_theta * cos_theta).max(0.0).sqrt();
    [
        center[0] + r * sin_theta * phi.cos(),
        center[1] + r * sin_theta * phi.sin(),
        center[2] + r * cos_theta,
    ]
}

/// Draws the `P` i.i.d. initial positions. Particle `p` uses only its own
/// addressed stream.
pub fn sample_initial_particles(cfg: &SimulationConfig, rng: &RngStream) -> ParticleEnsemble {
    let positions = (0..cfg.particles as u64)
        .map(|p| {
            let mut r = rng.stream(Purpose::InitialSample, 0, p);
            match &cfg.init_rho {
                InitialDensitySpec::UniformBall { center, radius } => uniform_in_ball(&mut r, *center, *radius),
                InitialDensitySpec::TwoSpheres {
                    centers,
                    radius,
                    mass_split,
                } => {
                    let which = if r.gen::<f64>() < *mass_split { 0 } else { 1 };
                    uniform_in_ball(&mut r, centers[which], *radius)
                }
            }
        })
        .collect();
    ParticleEnsemble::new(positions, cfg.particle_weight(), 0)
}

/// Builds the initial spectral field. Indices `+H/2` alias onto `-H/2`.
pub fn init_field(cfg: &SimulationConfig) -> Result<SpectralField> {
    let h = cfg.modes_per_dim;
    let mut field = SpectralField::zeros(h, cfg.domain_len);
    if let InitialFieldSpec::Modes(modes) = &cfg.init_c {
        let half = (h / 2) as i64;
        for m in modes {
            if m.index.iter().any(|j| j.abs() > half) {
                return Err(ConfigError::ModeOutOfRange {
                    index: m.index,
                    half: h / 2,
                }
                .into());
            }
            let idx = field.flat_index_signed(m.index);
            field.coeffs_mut()[idx] += Complex64::new(m.re, m.im);
        }
        let scale = field.coeffs().iter().map(|a| a.norm()).fold(0.0_f64, f64::max).max(1.0);
        if let Some(bad) = field.hermitian_violation(1e-12 * scale) {
            return Err(ConfigError::NotHermitian(bad).into());
        }
    }
    Ok(field)
}
