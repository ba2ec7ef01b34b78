//! Named, independently seeded random streams.
//!
//! Each call site draws from its own stream, so toggling one site (for
//! example switching dropout off) never shifts the numbers another site
//! sees.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// 64-bit FNV-1a; stable across platforms and releases.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Seed for stream `name` under a base seed.
pub fn derive_seed(seed: u64, name: &str) -> u64 {
    let mut bytes = seed.to_le_bytes().to_vec();
    bytes.extend_from_slice(name.as_bytes());
    fnv1a(&bytes)
}

#[derive(Debug, Clone)]
pub struct RngStreams {
    seed: u64,
    streams: BTreeMap<String, ChaCha8Rng>,
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        RngStreams {
            seed,
            streams: BTreeMap::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&mut self, name: &str) -> &mut ChaCha8Rng {
        let seed = self.seed;
        self.streams
            .entry(name.to_string())
            .or_insert_with(|| ChaCha8Rng::seed_from_u64(derive_seed(seed, name)))
    }

    /// Word positions of every stream touched so far.
    pub fn positions(&self) -> BTreeMap<String, u128> {
        self.streams
            .iter()
            .map(|(k, r)| (k.clone(), r.get_word_pos()))
            .collect()
    }

    pub fn restore(seed: u64, positions: &BTreeMap<String, u128>) -> Self {
        let mut s = RngStreams::new(seed);
        for (name, &pos) in positions {
            s.stream(name).set_word_pos(pos);
        }
        s
    }
}
