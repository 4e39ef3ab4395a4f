use partivae::diffcore::{adam_step, mlp_backward, mlp_forward, AdamConfig, AdamState, MlpParams};
use partivae::oracles::log_sum_exp;
use partivae::relax::{kuma_cdf, kuma_sample, soft_indicator};
use partivae::targets::rank_round;
use partivae::{rng, RankTarget};
use proptest::prelude::*;
use rand::Rng;

fn random_net(input: usize, hidden: usize, output: usize, seed: u64) -> MlpParams {
    let mut r = rng::stream(seed, &[0]);
    let mut p = MlpParams::glorot(input, hidden, output, &mut r);
    for v in p.b1.iter_mut().chain(p.b2.iter_mut()) {
        *v = r.gen_range(-0.5..0.5);
    }
    for v in p.w2.as_mut_slice() {
        *v = r.gen_range(-0.5..0.5);
    }
    p
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Largest relative error between the taped gradient of `c · output` and
/// central differences, over every parameter and input entry.
fn mlp_fd_error(input: usize, hidden: usize, output: usize, seed: u64) -> f64 {
    let mut params = random_net(input, hidden, output, seed);
    let mut r = rng::stream(seed, &[1]);
    let x: Vec<f64> = (0..input).map(|_| r.gen_range(-1.5..1.5)).collect();
    let c: Vec<f64> = (0..output).map(|_| r.gen_range(-1.0..1.0)).collect();
    let objective = |p: &MlpParams, x: &[f64]| -> f64 {
        let (out, _) = mlp_forward(p, x).unwrap();
        out.iter().zip(&c).map(|(o, w)| o * w).sum()
    };
    let (_, tape) = mlp_forward(&params, &x).unwrap();
    let (grads, input_grad) = mlp_backward(&params, &tape, &c).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let n_blocks = 4;
    for block in 0..n_blocks {
        let len = params.blocks()[block].len();
        for k in 0..len {
            let orig = params.blocks()[block][k];
            params.blocks_mut()[block][k] = orig + h;
            let up = objective(&params, &x);
            params.blocks_mut()[block][k] = orig - h;
            let down = objective(&params, &x);
            params.blocks_mut()[block][k] = orig;
            let fd = (up - down) / (2.0 * h);
            worst = worst.max(rel_err(fd, grads.blocks()[block][k]));
        }
    }
    let mut xp = x.clone();
    for k in 0..input {
        xp[k] = x[k] + h;
        let up = objective(&params, &xp);
        xp[k] = x[k] - h;
        let down = objective(&params, &xp);
        xp[k] = x[k];
        worst = worst.max(rel_err((up - down) / (2.0 * h), input_grad[k]));
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn mlp_gradients_match_finite_differences(seed in any::<u64>()) {
        for (i, h, o) in [(2, 4, 2), (8, 32, 8), (16, 64, 16)] {
            let err = mlp_fd_error(i, h, o, seed);
            prop_assert!(err < 1e-4, "arch ({i},{h},{o}) seed {seed}: rel err {err}");
        }
    }

    #[test]
    fn zero_gradient_adam_leaves_params(seed in any::<u64>(), steps in 1usize..5) {
        let mut p = random_net(3, 5, 2, seed);
        let before = p.clone();
        let zero = p.zeros_like();
        let mut state = AdamState::new(p.n_params(), AdamConfig::default());
        for _ in 0..steps {
            adam_step(&mut p, &zero, &mut state).unwrap();
        }
        prop_assert_eq!(p, before);
        prop_assert_eq!(state.step, steps as u64);
    }

    #[test]
    fn soft_indicator_is_complementary(d in -5.0f64..5.0, k in 0.1f64..500.0) {
        prop_assert_eq!(soft_indicator(d, k) + soft_indicator(-d, k), 1.0);
    }

    #[test]
    fn kumaraswamy_cdf_recovers_noise(a in 0.05f64..20.0, b in 0.05f64..20.0, u in 1e-6f64..(1.0 - 1e-6)) {
        let x = kuma_sample(a, b, u).unwrap().x;
        if x > 0.0 && x < 1.0 {
            prop_assert!((kuma_cdf(a, b, x) - u).abs() < 1e-10);
        }
    }

    #[test]
    fn rounding_preserves_pairwise_violations(seed in any::<u64>(), n in 2usize..12, m in 0usize..40) {
        let (comps, _) = RankTarget::synthetic(n, m, 0.8, seed).unwrap();
        let t = RankTarget::new(n, comps.clone(), 0.8).unwrap();
        let mut r = rng::stream(seed, &[2]);
        let x: Vec<f64> = (0..n).map(|_| r.gen::<f64>()).collect();
        let ranks = rank_round(&x);
        let direct = comps.iter().filter(|&&(i, j)| x[i] > x[j]).count();
        prop_assert_eq!(t.violations(&ranks).unwrap(), direct);
    }

    #[test]
    fn soft_violations_converge_to_hard_count(seed in any::<u64>(), n in 2usize..10, m in 1usize..30) {
        let (comps, _) = RankTarget::synthetic(n, m, 0.7, seed).unwrap();
        let t = RankTarget::new(n, comps, 0.7).unwrap();
        let mut r = rng::stream(seed, &[3]);
        // well-separated distinct values so a finite k is close to the limit
        let mut slots: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            slots.swap(i, r.gen_range(0..=i));
        }
        let x: Vec<f64> = slots.iter().map(|&s| (s as f64 + 0.5) / n as f64).collect();
        let hard = t.violations(&rank_round(&x)).unwrap() as f64;
        let soft = t.soft_violations(&x, 1e5).unwrap();
        prop_assert!((soft - hard).abs() < 1e-9);
    }

    #[test]
    fn log_sum_exp_is_overflow_free(shift in -1e4f64..1e4, len in 1usize..50) {
        let values: Vec<f64> = (0..len).map(|k| shift - k as f64).collect();
        let got = log_sum_exp(&values);
        let reference = shift + (0..len).map(|k| (-(k as f64)).exp()).sum::<f64>().ln();
        prop_assert!(got.is_finite());
        prop_assert!((got - reference).abs() <= 1e-12 * shift.abs().max(1.0));
    }
}
