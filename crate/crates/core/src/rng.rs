//! Named, reproducible random streams derived from one master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent purposes that draw randomness.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Generator,
    Selection,
    Matrix,
    Phantom,
    Noise,
    Candidates,
    Power,
    RipSampling,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Generator => 0x67656e,
            Stream::Selection => 0x73656c,
            Stream::Matrix => 0x6d6174,
            Stream::Phantom => 0x706861,
            Stream::Noise => 0x6e6f69,
            Stream::Candidates => 0x63616e,
            Stream::Power => 0x706f77,
            Stream::RipSampling => 0x726970,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for `(stream, index)` under `master`.
pub fn derive_seed(master: u64, stream: Stream, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ stream.tag().rotate_left(40)) ^ index)
}

pub fn stream_rng(master: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream, index))
}
