//! Seeded ChaCha8 substreams: sample `k` of a run always draws from stream
//! `k` of the run seed, independent of scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type LabRng = ChaCha8Rng;

pub fn substream(seed: u64, stream: u64) -> LabRng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

pub fn uniform(r: &mut LabRng, lo: f64, hi: f64) -> f64 {
    r.gen_range(lo..hi)
}

pub fn normal(r: &mut LabRng) -> f64 {
    r.sample(rand_distr::StandardNormal)
}
