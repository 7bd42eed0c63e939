mod support;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::oracles::*;
use ucpd_core::cmdp::{
    conditional_residual, inner_product, mix_with_uniform, recover_policy, unnormalized_kl, validate_occupancy, MdpLayout,
    OccupancyMeasure, StageFunction,
};
use ucpd_core::env::{sample_episode, true_occupancy};
use ucpd_core::learner::{membership_check, ConfidenceSet};

const LAYOUTS: [&[usize]; 4] = [&[1, 2, 1], &[1, 3, 2, 1], &[1, 2, 2, 2, 1], &[1, 3, 3, 1]];

fn layout_for(index: usize, actions: usize) -> MdpLayout {
    MdpLayout::new(LAYOUTS[index % LAYOUTS.len()], actions).unwrap()
}

fn random_occupancy(rng: &mut ChaCha8Rng, layout: &MdpLayout) -> OccupancyMeasure {
    let kernel = random_kernel(rng, layout);
    true_occupancy(layout, &random_policy(rng, layout), &kernel)
}

fn layer_l1(layout: &MdpLayout, a: &OccupancyMeasure, b: &OccupancyMeasure, k: usize) -> f64 {
    layout.edge_range(k).map(|e| (a.values()[e] - b.values()[e]).abs()).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kl_dominates_squared_l1(seed in any::<u64>(), shape in 0usize..4, actions in 2usize..4) {
        let layout = layout_for(shape, actions);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = mix_with_uniform(&random_occupancy(&mut rng, &layout), &layout, 0.05).unwrap();
        let b = mix_with_uniform(&random_occupancy(&mut rng, &layout), &layout, 0.05).unwrap();
        let kl = unnormalized_kl(&a, &b).unwrap();
        let per_layer: f64 = (0..layout.depth()).map(|k| 0.5 * layer_l1(&layout, &a, &b, k).powi(2)).sum();
        let total = a.l1_distance(&b);
        prop_assert!(kl >= per_layer - 1e-12);
        prop_assert!(per_layer >= total * total / (2.0 * layout.depth() as f64) - 1e-12);
    }

    #[test]
    fn policy_round_trip(seed in any::<u64>(), shape in 0usize..4, actions in 2usize..4) {
        let layout = layout_for(shape, actions);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kernel = random_kernel(&mut rng, &layout);
        let theta = true_occupancy(&layout, &random_policy(&mut rng, &layout), &kernel);
        prop_assert!(validate_occupancy(&theta, &layout).unwrap().is_ok());
        prop_assert!(conditional_residual(&theta, &kernel, &layout) <= 1e-12);
        let again = true_occupancy(&layout, &recover_policy(&theta, &layout).unwrap(), &kernel);
        prop_assert!(theta.l1_distance(&again) <= 1e-12);
    }

    #[test]
    fn mixing_stays_in_the_polytope(seed in any::<u64>(), shape in 0usize..4, lambda in 0.0f64..=1.0) {
        let layout = layout_for(shape, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = random_occupancy(&mut rng, &layout);
        let mixed = mix_with_uniform(&theta, &layout, lambda).unwrap();
        prop_assert!(validate_occupancy(&mixed, &layout).unwrap().is_ok());
        if lambda > 0.0 {
            prop_assert!(mixed.values().iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn inner_product_is_bilinear(seed in any::<u64>(), shape in 0usize..4, x in -3.0f64..3.0, y in -3.0f64..3.0) {
        let layout = layout_for(shape, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || StageFunction::from_values(&layout, (0..layout.edge_count()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let f = draw();
        let g = draw();
        let mut combo = f.scaled(x);
        combo.add_scaled(y, &g);
        let theta = random_occupancy(&mut rng, &layout);
        let lhs = inner_product(&combo, &theta).unwrap();
        let rhs = x * inner_product(&f, &theta).unwrap() + y * inner_product(&g, &theta).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12);
        let other = random_occupancy(&mut rng, &layout);
        let blend = OccupancyMeasure::from_values(
            &layout,
            theta.values().iter().zip(other.values()).map(|(a, b)| 0.3 * a + 0.7 * b).collect(),
        ).unwrap();
        let split = 0.3 * inner_product(&f, &theta).unwrap() + 0.7 * inner_product(&f, &other).unwrap();
        prop_assert!((inner_product(&f, &blend).unwrap() - split).abs() <= 1e-12);
    }

    #[test]
    fn cleared_membership_agrees_with_ratio_form(seed in any::<u64>(), shape in 0usize..4) {
        let layout = layout_for(shape, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p_hat = random_kernel(&mut rng, &layout).values().to_vec();
        let eps = (0..layout.pair_count()).map(|_| rng.random_range(0.0..1.0)).collect();
        let cs = ConfidenceSet { p_hat, epsilon: eps, epoch: 1, horizon: 10, zeta: 0.1 };
        let theta = mix_with_uniform(&random_occupancy(&mut rng, &layout), &layout, 0.2).unwrap();
        let mass = theta.pair_mass(&layout);
        let ratio_ok = (0..layout.pair_count()).all(|pair| {
            let start = layout.pair_edge_start(pair);
            let dist: f64 = cs.p_hat_row(&layout, pair).iter().enumerate()
                .map(|(j, p)| (theta.values()[start + j] / mass[pair] - p).abs())
                .sum();
            dist <= cs.epsilon[pair]
        });
        let cleared = membership_check(&theta, &cs, &layout);
        prop_assert_eq!(ratio_ok, cleared.holds(0.0));
    }
}

/// Wilson–Hilferty upper quantile of χ²(df) at standard normal score `z`.
fn chi_square_quantile(df: f64, z: f64) -> f64 {
    let c = 2.0 / (9.0 * df);
    df * (1.0 - c + z * c.sqrt()).powi(3)
}

#[test]
fn sampled_edge_frequencies_match_the_occupancy() {
    let layout = MdpLayout::new(&[1, 3, 2, 1], 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let kernel = random_kernel(&mut rng, &layout);
    let policy = random_policy(&mut rng, &layout);
    let theta = true_occupancy(&layout, &policy, &kernel);
    let n = 50_000;
    let mut counts = vec![0u64; layout.edge_count()];
    let mut act = ChaCha8Rng::seed_from_u64(10);
    let mut env = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..n {
        let path = sample_episode(&layout, &kernel, &policy, &mut act, &mut env);
        for (s, a, next) in path.steps {
            counts[layout.edge_index(s, a, next).unwrap()] += 1;
        }
    }
    for k in 0..layout.depth() {
        let cells: Vec<usize> = layout.edge_range(k).filter(|&e| theta.values()[e] > 0.0).collect();
        let stat: f64 = cells
            .iter()
            .map(|&e| {
                let expected = n as f64 * theta.values()[e];
                (counts[e] as f64 - expected).powi(2) / expected
            })
            .sum();
        let critical = chi_square_quantile((cells.len() - 1) as f64, 3.09);
        assert!(stat <= critical, "layer {k}: χ² = {stat:.2} > {critical:.2}");
    }
}
