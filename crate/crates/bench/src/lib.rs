//! Inputs shared by the benchmarks.

use bell_lab_core::generate::{random_model, KernelKind, RandomModelConfig};
use bell_lab_core::model::TheoryModel;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `count` random product-kernel models of the given shape, fixed by `seed`.
pub fn product_models(seed: u64, count: usize, settings: usize, states: usize, exact: bool) -> Vec<TheoryModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = RandomModelConfig {
        alice_settings: settings,
        bob_settings: settings,
        states,
        kind: KernelKind::Product,
        exact,
    };
    (0..count).map(|_| random_model(&mut rng, &cfg)).collect()
}
