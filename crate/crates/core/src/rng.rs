//! Named, counter-derived random substreams.
//!
//! Every random draw in the crate comes from a stream keyed by
//! `(seed, label, index)`, e.g. `("gibbs.chain", 3)` or
//! `("bootstrap.replicate", 17)`. Streams are independent of scheduling, so
//! parallel and sequential execution give identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mix(seed: u64, label: &str, index: u64) -> [u8; 32] {
    let mut h = splitmix64(seed);
    for b in label.bytes() {
        h = splitmix64(h ^ b as u64);
    }
    h = splitmix64(h ^ index);
    let mut out = [0u8; 32];
    let mut s = h;
    for chunk in out.chunks_mut(8) {
        s = splitmix64(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    out
}

/// Independent generator for the named substream.
pub fn substream(seed: u64, label: &str, index: u64) -> StreamRng {
    ChaCha8Rng::from_seed(mix(seed, label, index))
}

/// Derive a child seed (for passing to code that takes a plain `u64`).
pub fn child_seed(seed: u64, label: &str, index: u64) -> u64 {
    let b = mix(seed, label, index);
    u64::from_le_bytes(b[..8].try_into().unwrap())
}
