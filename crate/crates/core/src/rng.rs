//! Seeded random streams. Every random decision is drawn from a ChaCha
//! stream keyed by (session seed, purpose, index), so a run can be resumed at
//! any iteration without carrying generator state around.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Select = 1,
    Simulate = 2,
    Explore = 3,
    Generate = 4,
}

pub fn stream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 56) ^ index);
    rng
}

/// Uniform pick from a nonempty slice.
pub fn pick<T: Copy>(items: &[T], rng: &mut impl Rng) -> T {
    items[rng.random_range(0..items.len())]
}
