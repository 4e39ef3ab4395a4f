use partivae::oracles::{enumerate_ln_z, ising_exact_ln_z};
use partivae::rng;
use partivae::vaecore::{estimate_ln_z, train_from};
use partivae::{Graph, IsingTarget, LatentSpec, RankTarget, SbmTarget, TargetModel, TrainConfig, Vae};
use rand::Rng;

fn random_target(seed: u64) -> TargetModel {
    let mut r = rng::stream(seed, &[20]);
    match r.gen_range(0..3) {
        0 => TargetModel::Ising(IsingTarget::new(r.gen_range(3..5), r.gen_range(0.0..1.0)).unwrap()),
        1 => {
            let n = r.gen_range(6..13);
            let (g, _) = Graph::planted(n, 0.7, 0.15, seed).unwrap();
            TargetModel::Sbm(SbmTarget::new(g, r.gen_range(0.4..0.9), r.gen_range(0.02..0.3)).unwrap())
        }
        _ => {
            let n = r.gen_range(3..7);
            let w = r.gen_range(0.55..0.95);
            let (c, _) = RankTarget::synthetic(n, r.gen_range(0..25), w, seed).unwrap();
            TargetModel::Rank(RankTarget::new(n, c, w).unwrap())
        }
    }
}

#[test]
fn hard_estimates_never_exceed_exact_ln_z() {
    for seed in 0..30u64 {
        let mut target = random_target(seed);
        let mut r = rng::stream(seed, &[21]);
        let dim = [0, 1, 2, 4][r.gen_range(0..4)];
        let cfg = TrainConfig {
            n_steps: [0, 20, 200][r.gen_range(0..3)],
            hidden: 16,
            batch_size: 16,
            seed,
            ..Default::default()
        };
        let mut vae = Vae::new(&target, LatentSpec::new(dim), cfg.hidden, &cfg.relax, seed);
        // untrained networks with random output layers are far from optimal
        for v in vae.decoder.w2.as_mut_slice() {
            *v = r.gen_range(-1.0..1.0);
        }
        let out = train_from(&mut target, vae, &cfg).unwrap();
        let est = estimate_ln_z(&target, &out.vae, 2000, seed).unwrap();
        let exact = enumerate_ln_z(&target).unwrap().ln_z;
        assert!(
            est.mean <= exact + 3.0 * est.stderr,
            "seed {seed}: {} ± {} above {exact}",
            est.mean,
            est.stderr
        );
    }
}

#[test]
fn flat_ising_bound_is_sixteen_ln_two() {
    let mut target = TargetModel::Ising(IsingTarget::new(4, 0.0).unwrap());
    let cfg = TrainConfig {
        n_steps: 200,
        hidden: 16,
        ..Default::default()
    };
    let vae = Vae::new(&target, LatentSpec::new(1), cfg.hidden, &cfg.relax, 0);
    let out = train_from(&mut target, vae, &cfg).unwrap();
    let est = estimate_ln_z(&target, &out.vae, 5000, 1).unwrap();
    let exact = ising_exact_ln_z(4, 0.0).unwrap();
    assert!((exact - 16.0 * std::f64::consts::LN_2).abs() < 1e-12);
    assert!((est.mean - exact).abs() < 0.005 * exact);
}
