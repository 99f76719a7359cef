mod common;

use landtriage_core::Exec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn routing_matches_exhaustive_oracle() {
    for seed in [1u64, 2, 3] {
        assert_eq!(common::routing_mismatches(200, seed * 7919), 0, "seed {seed}");
    }
}

#[test]
fn sequential_and_parallel_routing_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..100 {
        let inst = common::random_routing_instance(&mut rng);
        assert_eq!(
            common::implementation_route(&inst, Exec::Sequential),
            common::implementation_route(&inst, Exec::Parallel)
        );
    }
}
