//! Named random streams derived from one root seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a over the stream name.
fn stream_id(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Generator for the sub-stream `name` of `root`. Distinct names give
/// independent streams; the same pair always gives the same sequence.
pub fn stream(root: u64, name: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(stream_id(name));
    rng
}

/// A derived `u64` seed for components that take a plain seed.
pub fn derive(root: u64, name: &str) -> u64 {
    use rand::RngCore;
    stream(root, name).next_u64()
}
