//! Counter-addressed random streams.
//!
//! Every draw in a run is addressed by `(seed, trial, purpose, step, particle)`.
//! The first four words form a ChaCha key and the particle index selects the
//! ChaCha stream, so a draw never depends on which thread asked for it or in
//! what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::vec3::Vec3;

/// What a stream is used for. Distinct tags never share key material.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    InitialSample,
    Brownian,
    Batch,
    PairSelection,
    Custom(u32),
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::InitialSample => 1,
            Purpose::Brownian => 2,
            Purpose::Batch => 3,
            Purpose::PairSelection => 4,
            Purpose::Custom(c) => 0x1000_0000 + u64::from(c),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
    trial: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, trial: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn trial(&self) -> u64 {
        self.trial
    }

    /// Independent sub-stream family for replication `trial`.
    pub fn for_trial(&self, trial: u64) -> Self {
        Self { seed: self.seed, trial }
    }

    /// The generator for one `(purpose, step, particle)` address.
    pub fn stream(&self, purpose: Purpose, step: u64, particle: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[0..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.trial.to_le_bytes());
        key[16..24].copy_from_slice(&purpose.tag().to_le_bytes());
        key[24..32].copy_from_slice(&step.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(particle);
        rng
    }

    /// Standard 3D normal vector at the given address.
    pub fn normal3(&self, purpose: Purpose, step: u64, particle: u64) -> Vec3 {
        let mut rng = self.stream(purpose, step, particle);
        [
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
        ]
    }
}

/// Brownian increments for the particle update.
///
/// With `substeps = k > 1` the standard normal for coarse step `n` is
/// `sum_{i<k} Z(n*k + i) / sqrt(k)`, where `Z` are the normals of a grid `k`
/// times finer. Runs at different step sizes that share a seed then see the
/// same Brownian path.
#[derive(Debug, Clone, Copy)]
pub struct BrownianNoise {
    rng: RngStream,
    substeps: u64,
}

impl BrownianNoise {
    pub fn new(rng: RngStream) -> Self {
        Self { rng, substeps: 1 }
    }

    pub fn coupled(rng: RngStream, substeps: u64) -> Self {
        assert!(substeps >= 1, "substeps must be >= 1");
        Self { rng, substeps }
    }

    pub fn substeps(&self) -> u64 {
        self.substeps
    }

    pub fn increment(&self, step: u64, particle: u64) -> Vec3 {
        if self.substeps == 1 {
            return self.rng.normal3(Purpose::Brownian, step, particle);
        }
        let mut acc = [0.0; 3];
        for i in 0..self.substeps {
            let z = self.rng.normal3(Purpose::Brownian, step * self.substeps + i, particle);
            acc[0] += z[0];
            acc[1] += z[1];
            acc[2] += z[2];
        }
        let s = 1.0 / (self.substeps as f64).sqrt();
        [acc[0] * s, acc[1] * s, acc[2] * s]
    }
}
