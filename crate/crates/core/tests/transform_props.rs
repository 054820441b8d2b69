mod common;

use common::{dynamics, matrix, random_tree, rng, topology_with};
use consensus_forge::linalg::{multiset_distance, spectrum};
use consensus_forge::synthesis::{design_theorem2, TargetPoles};
use consensus_forge::transform::{
    assemble_closed_loop, assemble_closed_loop_product, assemble_dst_closed_loop, build_transformed_system,
};
use consensus_forge::{GainSet, ProtocolMode};
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn sum_and_product_assemblies_agree(
        seed in any::<u64>(),
        agents in 2usize..=6,
        n in 1usize..=3,
        m in 1usize..=2,
        full in any::<bool>(),
    ) {
        let mut r = rng(seed);
        let d = dynamics(&mut r, n, m);
        let tree = random_tree(&mut r, agents);
        let topo = topology_with(&mut r, &tree, 0.3, false);
        let mode = if full { ProtocolMode::FullNeighbor } else { ProtocolMode::DstOnly };
        let ts = build_transformed_system(&d, &topo, &tree, mode).unwrap();
        let gains = GainSet::new((0..agents).map(|_| matrix(&mut r, m, n)).collect(), mode);
        let sum = assemble_closed_loop(&ts, &gains).unwrap();
        let product = assemble_closed_loop_product(&ts, &gains).unwrap();
        let scale = 1.0 + sum.amax();
        prop_assert!((&sum - &product).amax() <= 1e-12 * scale);
        if !full {
            let rows = assemble_dst_closed_loop(&d, &topo, &tree, &gains).unwrap();
            prop_assert!((&sum - &rows).amax() <= 1e-12 * scale);
        }
    }

    #[test]
    fn kronecker_identity(seed in any::<u64>(), len in 1usize..=5, n in 1usize..=3, m in 1usize..=2) {
        let mut r = rng(seed);
        let p = matrix(&mut r, len, 1);
        let g = matrix(&mut r, 1, len);
        let b = matrix(&mut r, n, m);
        let k = matrix(&mut r, m, n);
        let lhs = p.kronecker(&b) * &k * g.kronecker(&DMatrix::<f64>::identity(n, n));
        let rhs = (&p * &g).kronecker(&(&b * &k));
        prop_assert!((lhs - rhs).amax() <= 1e-12 * (1.0 + 10.0f64.powi(2)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn tree_only_loop_is_block_upper_triangular(seed in any::<u64>(), agents in 2usize..=6, n in 1usize..=3) {
        let mut r = rng(seed);
        let d = dynamics(&mut r, n, 1);
        let tree = random_tree(&mut r, agents);
        let topo = topology_with(&mut r, &tree, 0.3, true);
        let gains = GainSet::new((0..agents).map(|_| matrix(&mut r, 1, n)).collect(), ProtocolMode::DstOnly);
        let m = assemble_dst_closed_loop(&d, &topo, &tree, &gains).unwrap();
        for row in 0..agents - 1 {
            for col in 0..row {
                prop_assert!(m.view((row * n, col * n), (n, n)).iter().all(|&v| v == 0.0));
            }
        }
    }

    /// With distinct targets per agent, the spectrum is exactly the union of
    /// the placed blocks.
    #[test]
    fn tree_only_spectrum_is_union_of_targets(seed in any::<u64>(), agents in 2usize..=6) {
        let mut r = rng(seed);
        let tree = random_tree(&mut r, agents);
        let topo = topology_with(&mut r, &tree, 0.3, true);
        let d = common::rotation();
        let mut per_agent = Vec::new();
        let mut expected = Vec::new();
        for q in 0..agents {
            let t = if q == tree.root() {
                None
            } else {
                let re = -(0.5 + 0.4 * q as f64 + r.gen_range(0.0..0.1));
                let im = 0.3 + 0.25 * q as f64;
                let pair = vec![Complex64::new(re, im), Complex64::new(re, -im)];
                expected.extend(pair.iter().copied());
                Some(pair)
            };
            per_agent.push(t);
        }
        let gains = design_theorem2(&d, &topo, &tree, &TargetPoles::PerAgent(per_agent)).unwrap();
        let m = assemble_dst_closed_loop(&d, &topo, &tree, &gains).unwrap();
        let dist = multiset_distance(&spectrum(&m), &expected).unwrap();
        prop_assert!(dist <= 1e-8, "{dist}");
    }
}
