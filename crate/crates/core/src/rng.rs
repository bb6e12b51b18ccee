//! Named, keyed random substreams.
//!
//! Every random quantity in the crate is drawn from a [`ChaCha8Rng`] whose
//! seed is a hash of the master seed, a stream name and a list of integer
//! keys. Two substreams with different names or keys are statistically
//! independent, and the values a substream produces do not depend on which
//! other substreams were consumed before it or on which thread it runs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn absorb(state: &mut u64, word: u64) {
    *state ^= word;
    splitmix64(state);
}

/// Derives a 64-bit seed for the substream `(name, keys)` of `seed`.
pub fn derive_seed(seed: u64, name: &str, keys: &[u64]) -> u64 {
    let mut state = seed;
    splitmix64(&mut state);
    for chunk in name.as_bytes().chunks(8) {
        let mut buf = [0u8; 8];
        buf[..chunk.len()].copy_from_slice(chunk);
        absorb(&mut state, u64::from_le_bytes(buf));
    }
    absorb(&mut state, name.len() as u64);
    for &k in keys {
        absorb(&mut state, k);
    }
    absorb(&mut state, keys.len() as u64);
    splitmix64(&mut state)
}

/// Returns the generator for substream `(name, keys)` of `seed`.
pub fn substream(seed: u64, name: &str, keys: &[u64]) -> StreamRng {
    let mut state = derive_seed(seed, name, keys);
    let mut bytes = [0u8; 32];
    for chunk in bytes.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}
