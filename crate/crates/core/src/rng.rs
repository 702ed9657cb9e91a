//! Deterministic RNG substreams.
//!
//! Every parallel task gets its own ChaCha stream keyed by a logical task id,
//! so results are identical regardless of thread count or scheduling order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Master seed wrapper handing out independent substreams.
#[derive(Clone, Copy, Debug)]
pub struct SeedTree {
    seed: u64,
}

impl SeedTree {
    pub fn new(seed: u64) -> Self {
        SeedTree { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Substream for logical task `id`. Streams with distinct ids never overlap.
    pub fn stream(&self, id: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(splitmix(id).into());
        rng
    }

    /// Two-level id for nested task grids.
    pub fn stream2(&self, outer: u64, inner: u64) -> ChaCha8Rng {
        self.stream(splitmix(outer).wrapping_add(inner))
    }
}

// splitmix64 finalizer; spreads small consecutive ids over the stream space.
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Exponential(1) sample by inversion; avoids ln(0).
pub fn exp1<R: rand::Rng>(rng: &mut R) -> f64 {
    let u: f64 = rng.random::<f64>();
    -(1.0 - u).ln()
}
