use hetflow::dynamics::{Dynamics, InvariantChecker, Observer, SimState};
use hetflow::scenarios::{make_obstacles, random_config, scale_config, ObstacleKind};
use hetflow::stats::{check_extended_bounds, mean_density};
use hetflow::zerorange::embed_and_compare;
use hetflow::{Domain, Exact, ObstacleField, ParticleConfig, Scalar};
use proptest::prelude::*;

fn ring(l: i64) -> Domain<Exact> {
    Domain::ring(Exact::from_int(l)).unwrap()
}

fn field(l: i64, count: usize, cap_halves: i64, seed: u64) -> ObstacleField<Exact> {
    make_obstacles(
        &ObstacleKind::Uniform { count, seed },
        &ring(l),
        Exact::from_ratio(cap_halves, 2),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn extended_bounds_hold(l in 5i64..80, count in 1usize..25, cap in 1i64..6, seed in any::<u64>()) {
        let z = field(l, count, cap, seed);
        let r = check_extended_bounds(&z).unwrap();
        prop_assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn chain_advances_by_one_index(l in 5i64..60, count in 1usize..15, cap in 1i64..6, seed in any::<u64>()) {
        let z = field(l, count, cap, seed);
        let x = z.extend().as_particle_config();
        let n = x.len();
        let next = Dynamics::new(&z).step(&SimState::new(x.clone(), &z).unwrap()).0;
        for i in 0..n {
            let want = if i + 1 < n { x.lifted(i + 1) } else { x.lifted(0) + Exact::from_int(l) };
            prop_assert_eq!(next.lifted(i), want);
        }
    }

    #[test]
    fn random_runs_keep_invariants(
        l in 5i64..40,
        count in 0usize..10,
        n in 1usize..25,
        waits in proptest::collection::vec(0u32..3, 10),
        seed in any::<u64>(),
    ) {
        let base = field(l, count, 2, seed);
        let m = base.len();
        let z = base.with_waits(waits[..m].to_vec()).unwrap();
        let x = random_config(z.domain(), n, seed ^ 1).unwrap();
        let mut checker = InvariantChecker::new(&z, seed);
        let mut obs: [&mut dyn Observer<Exact>; 1] = [&mut checker];
        Dynamics::new(&z).run(SimState::new(x, &z).unwrap(), 60, &mut obs, &[]).unwrap();
        prop_assert!(checker.is_clean(), "{:?}", checker.violations);
    }

    #[test]
    fn integer_rings_match_zero_range(l in 2i64..25, coords in proptest::collection::vec(0i64..25, 1..30)) {
        let mut c: Vec<Exact> = coords.iter().map(|&k| Exact::from_int(k % l)).collect();
        c.sort();
        let x = ParticleConfig::new(ring(l), c).unwrap();
        prop_assert!(embed_and_compare(&x, 200).unwrap().identical());
    }

    #[test]
    fn scaling_multiplies_ring_density(blocks in 1usize..8, k in 1u32..5, n in 1u32..5, seed in any::<u64>()) {
        let count = blocks * n as usize;
        let x = random_config(&ring(50), count, seed).unwrap();
        let y = scale_config(&x, k, n).unwrap();
        prop_assert_eq!(mean_density(&y), mean_density(&x) * Exact::from_ratio(k as i64, n as i64));
    }
}
