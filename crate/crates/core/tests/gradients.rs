mod common;

use intentlab::maddpg::{actor_spec, critic_spec};
use intentlab::nn::{soft_update, Matrix, Mlp, Want};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn analytic_gradients_match_central_differences() {
    for seed in 0..100 {
        common::gradient_check(seed).unwrap();
    }
}

#[test]
fn forward_matches_straight_line_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for spec in [actor_spec(), critic_spec()] {
        let net = Mlp::init(spec, &mut rng);
        for _ in 0..20 {
            let x: Vec<f64> = (0..spec.input_dim).map(|_| rand::Rng::gen_range(&mut rng, -2.0..2.0)).collect();
            let (pre, out) = common::naive_forward(&spec, net.params(), &x);
            let trace = net.forward(&x).unwrap();
            for (a, b) in trace.output.iter().zip(&out) {
                assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
            for (h, z) in trace.h1.iter().zip(&pre[0]) {
                assert!((h - z.max(0.0)).abs() <= 1e-12 * (1.0 + z.abs()));
            }
            assert_eq!(trace, net.forward(&x).unwrap());
        }
    }
}

#[test]
fn batch_gradients_are_sums_of_single_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let net = common::random_small_mlp(&mut rng);
    let spec = *net.spec();
    let rows: Vec<Vec<f64>> = (0..6)
        .map(|_| (0..spec.input_dim).map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect())
        .collect();
    let ups: Vec<Vec<f64>> = (0..6)
        .map(|_| (0..spec.output_dim).map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect())
        .collect();
    let trace = net.forward_batch(&Matrix::from_rows(&rows).unwrap()).unwrap();
    let batch = net.backward_batch(&trace, &Matrix::from_rows(&ups).unwrap(), Want::BOTH).unwrap();
    let mut sum = vec![0.0; spec.param_count()];
    for (x, g) in rows.iter().zip(&ups) {
        let (p, input) = net.backward(&net.forward(x).unwrap(), g).unwrap();
        sum.iter_mut().zip(&p).for_each(|(s, v)| *s += v);
        let r = rows.iter().position(|r| r == x).unwrap();
        for (a, b) in batch.input.as_ref().unwrap().row(r).iter().zip(&input) {
            assert!((a - b).abs() < 1e-12);
        }
    }
    for (a, b) in batch.params.unwrap().iter().zip(&sum) {
        assert!((a - b).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn hidden_activations_are_non_negative(seed in 0u64..1000, scale in 0.1f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Mlp::init(actor_spec(), &mut rng);
        let x: Vec<f64> = (0..14).map(|_| scale * rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect();
        let t = net.forward(&x).unwrap();
        prop_assert!(t.h1.iter().chain(&t.h2).all(|&h| h >= 0.0));
        prop_assert!(t.output.iter().all(|&a| (0.0..=1.0).contains(&a)));
    }

    #[test]
    fn soft_update_contracts_geometrically(seed in 0u64..200, tau in 0.01f64..1.0, steps in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let source = common::random_small_mlp(&mut rng);
        let mut target = Mlp::from_params(*source.spec(), source.params().iter().map(|p| p + 1.0).collect()).unwrap();
        let dist = |t: &Mlp| t.params().iter().zip(source.params()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let d0 = dist(&target);
        for _ in 0..steps {
            soft_update(&mut target, &source, tau).unwrap();
        }
        let expected = d0 * (1.0 - tau).powi(steps as i32);
        prop_assert!((dist(&target) - expected).abs() <= 1e-9 * d0);
    }
}
