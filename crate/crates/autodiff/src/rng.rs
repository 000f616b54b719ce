use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

/// The one PRNG used across the workspace: xoshiro256++ seeded through
/// splitmix64, so a `u64` seed fixes the whole stream.
pub type Rng = Xoshiro256PlusPlus;

pub fn seeded(seed: u64) -> Rng {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}
