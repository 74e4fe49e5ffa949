//! Counter-based random streams.
//!
//! Every random draw is addressed by `(seed, family, index)`: the seed and the
//! family (one environment, one replica batch, ...) select a ChaCha8 key, the
//! index selects the 64-bit stream inside that key. A site or replica is thus
//! a pure function of its address, independent of window size, evaluation
//! order and worker count.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Stream families. Distinct families never share a key.
pub const FAMILY_ENV: u64 = 0x656e_7669_726f_6e00;
pub const FAMILY_WALK: u64 = 0x7761_6c6b_0000_0000;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn derive_key(seed: u64, family: u64, member: u64) -> [u8; 32] {
    let mut state = seed ^ family.rotate_left(17);
    let _ = splitmix64(&mut state);
    state ^= member.wrapping_mul(0xd6e8_feb8_6659_fd93);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key
}

/// Random stream at address `(seed, family, member, index)`.
pub fn stream(seed: u64, family: u64, member: u64, index: i64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(derive_key(seed, family, member));
    rng.set_stream(index as u64);
    rng
}

/// Uniform in `[0, 1)` with 53 random bits.
pub fn unit_f64(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// The single uniform attached to site `x` of environment `member`.
pub fn site_uniform(seed: u64, member: u64, x: i64) -> f64 {
    unit_f64(&mut stream(seed, FAMILY_ENV, member, x))
}
