//! Seed handling. One master seed per run; independent ChaCha streams are
//! carved out of it so that, e.g., changing the noise level never perturbs
//! the initial clocks or the sampled topology.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose-tagged sub-streams of a run's master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    ClockInit = 1,
    Topology = 2,
    Noise = 3,
    UpdateOrder = 4,
}

pub fn stream_rng(master_seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream as u64);
    rng
}

/// SplitMix64 finalizer; a bijection on `u64`.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the `run_index`-th run of a sweep. Distinct indices give distinct
/// seeds because both steps are bijections of `u64`.
pub fn derive_run_seed(base_seed: u64, run_index: u64) -> u64 {
    mix64(base_seed.wrapping_add(run_index.wrapping_mul(0x9e37_79b9_7f4a_7c15)))
}
