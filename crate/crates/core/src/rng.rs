//! Seeded substreams for deterministic parallel generation.
//!
//! Every random draw in the crate comes from a ChaCha8 generator addressed by
//! `(seed, domain, index)`. The domain separates independent purposes (mode
//! draws, per-channel thinning, per-channel jitter) and the index selects the
//! ChaCha stream, usually a chunk number. Work split across threads therefore
//! consumes exactly the same numbers as a sequential run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SubstreamRng = ChaCha8Rng;

/// Purpose tag mixed into the key of a substream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Modes,
    Thinning(u8),
    Jitter(u8),
}

impl Domain {
    fn tag(self) -> u64 {
        match self {
            Domain::Modes => 0x6d6f_6465_7300_0000,
            Domain::Thinning(ch) => 0x7468_696e_0000_0000 | u64::from(ch),
            Domain::Jitter(ch) => 0x6a69_7474_0000_0000 | u64::from(ch),
        }
    }
}

/// Generator for substream `index` of `domain` under `seed`.
pub fn substream(seed: u64, domain: Domain, index: u64) -> SubstreamRng {
    let key = mix64(seed ^ mix64(domain.tag()));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
