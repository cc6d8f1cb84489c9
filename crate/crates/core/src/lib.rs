//! Stochastic interacting particle-field solver for the three-dimensional
//! fully parabolic Keller-Segel system, with a radial finite-volume
//! reference solver and convergence diagnostics.

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod model;
pub mod ops;
pub mod particles;
pub mod reference_fdm;
pub mod rng;
pub mod simulation;
pub mod spectral;
pub mod vec3;

pub use error::{ConfigError, Error, Result};
pub use model::{
    init_field, sample_initial_particles, validate_config, InitialDensitySpec, InitialFieldSpec, ModeAmplitude,
    ParticleEnsemble, SimulationConfig,
};
pub use rng::{BrownianNoise, Purpose, RngStream};
pub use spectral::{GreenParams, Grid3, SpectralField};
