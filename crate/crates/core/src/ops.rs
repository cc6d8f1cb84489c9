//! Process-wide operation counters used to check the per-step cost model.

use std::sync::atomic::{AtomicU64, Ordering};

static PAIR_EVALS: AtomicU64 = AtomicU64::new(0);
static SPECTRAL_MACS: AtomicU64 = AtomicU64::new(0);

/// Counter values at one instant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounts {
    /// Kernel gradient evaluations in the pair interaction.
    pub pair_evals: u64,
    /// Complex multiply-adds in series evaluation and deposit.
    pub spectral_macs: u64,
}

impl OpCounts {
    pub fn since(self, earlier: OpCounts) -> OpCounts {
        OpCounts {
            pair_evals: self.pair_evals - earlier.pair_evals,
            spectral_macs: self.spectral_macs - earlier.spectral_macs,
        }
    }
}

pub fn snapshot() -> OpCounts {
    OpCounts {
        pair_evals: PAIR_EVALS.load(Ordering::Relaxed),
        spectral_macs: SPECTRAL_MACS.load(Ordering::Relaxed),
    }
}

pub(crate) fn add_pairs(n: u64) {
    PAIR_EVALS.fetch_add(n, Ordering::Relaxed);
}

pub(crate) fn add_spectral(n: u64) {
    SPECTRAL_MACS.fetch_add(n, Ordering::Relaxed);
}
