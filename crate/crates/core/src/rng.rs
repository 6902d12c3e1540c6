//! Reproducible random streams.
//!
//! Each replica gets its own ChaCha8 stream. The key is derived from the
//! master seed and a lane tag, the replica index selects the ChaCha stream
//! id, so stream `r` is available without generating streams `0..r`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Seed derivation rule: `(master, lane, replica)` determines the stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedPolicy {
    pub master: u64,
    pub lane: u64,
    pub replica: u64,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SeedPolicy {
    pub fn new(master: u64) -> Self {
        SeedPolicy {
            master,
            lane: 0,
            replica: 0,
        }
    }

    /// Replica `r` of this policy.
    pub fn replica(self, replica: u64) -> Self {
        SeedPolicy { replica, ..self }
    }

    /// An independent lane, for a second walk inside the same replica.
    pub fn lane(self, lane: u64) -> Self {
        SeedPolicy {
            lane: splitmix64(self.lane ^ splitmix64(lane.wrapping_add(1))),
            ..self
        }
    }

    fn key(&self) -> [u8; 32] {
        let mut key = [0u8; 32];
        let mut s = self.master ^ self.lane.rotate_left(17);
        for chunk in key.chunks_exact_mut(8) {
            s = splitmix64(s);
            chunk.copy_from_slice(&s.to_le_bytes());
        }
        key
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key());
        rng.set_stream(self.replica);
        rng
    }
}
