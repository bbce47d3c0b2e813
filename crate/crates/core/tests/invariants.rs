mod common;

use common::props::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn coherence_starts_at_one_and_stays_bounded(
        n in 1usize..=3, seed in any::<u64>(), field in 0.0f64..3000.0, e in 0.0f64..100.0, ps in any::<bool>(),
    ) {
        normalized_and_bounded(n, seed, field, e, ps)?;
    }

    #[test]
    fn raw_initial_coherence_is_one_half(field in -3000.0f64..3000.0, e in 0.0f64..200.0, d in 500.0f64..5000.0) {
        raw_l0_is_one_half(field, e, d)?;
    }

    #[test]
    fn hamiltonian_is_hermitian(
        n in 1usize..=3, seed in any::<u64>(), bx in -500.0f64..500.0, bz in -3000.0f64..3000.0, ps in any::<bool>(),
    ) {
        hermitian(n, seed, bx, bz, ps)?;
    }

    #[test]
    fn dipolar_coupling_scales_as_inverse_cube(
        dir in prop::array::uniform3(-1.0f64..1.0), r in 1.5f64..10.0, k in 1.1f64..4.0,
    ) {
        inverse_cube(dir, r, k)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 4, ..ProptestConfig::default() })]

    #[test]
    fn reruns_are_bitwise_identical(seed in any::<u64>()) {
        deterministic_rerun(seed)?;
    }
}
