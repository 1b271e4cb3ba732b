//! Shared fixtures for the criterion benches.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use edgesched::dataset::random_instance_of_len;
use edgesched::{ProblemInstance, TaskCatalog};

/// A reproducible instance of the given size.
pub fn fixture_instance(n: usize, seed: u64) -> ProblemInstance {
    let catalog = TaskCatalog::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_instance_of_len(&catalog, n, &mut rng).expect("valid size")
}
