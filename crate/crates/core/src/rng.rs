//! Seeded random substreams.
//!
//! Every Monte-Carlo trial owns four independent generators derived from the
//! master seed, the SNR index, the trial index and a fixed stream label. A
//! trial's draws therefore do not depend on execution order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type TrialRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamLabel {
    Training,
    Channel,
    Noise0,
    Noise1,
}

impl StreamLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            StreamLabel::Training => "training",
            StreamLabel::Channel => "channel",
            StreamLabel::Noise0 => "noise0",
            StreamLabel::Noise1 => "noise1",
        }
    }

    /// Noise stream for training symbol `m`.
    pub fn noise(m: usize) -> Self {
        if m == 0 {
            StreamLabel::Noise0
        } else {
            StreamLabel::Noise1
        }
    }
}

/// SHA-256 of (master seed, SNR index, trial index, label) keyed into ChaCha8.
pub fn substream(master_seed: u64, snr_index: usize, trial_index: usize, label: StreamLabel) -> TrialRng {
    let mut hasher = Sha256::new();
    hasher.update(b"ofdm-sync/substream/v1");
    hasher.update(master_seed.to_le_bytes());
    hasher.update((snr_index as u64).to_le_bytes());
    hasher.update((trial_index as u64).to_le_bytes());
    hasher.update(label.as_str().as_bytes());
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(seed)
}
