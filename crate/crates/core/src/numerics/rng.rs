use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// SplitMix64 finalizer, used to derive per-trial seeds.
pub fn mix_seed(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Reproducible source of standard-normal draws.
///
/// The generator is ChaCha8 keyed by `seed` via `SeedableRng::seed_from_u64`;
/// normals come from the ziggurat sampler in `rand_distr::StandardNormal`.
/// Both are platform independent, so a seed fixes the draw sequence. Trial `k`
/// of an ensemble with base seed `s` uses the stream seeded by
/// `mix_seed(s ^ k)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn for_trial(base_seed: u64, trial: u64) -> Self {
        Self::new(mix_seed(base_seed ^ trial))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Wiener increment over `dt`.
    pub fn wiener(&mut self, dt: f64) -> f64 {
        dt.sqrt() * self.normal()
    }
}
