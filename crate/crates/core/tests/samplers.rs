use partivae::oracles::{enumerate_ln_z, mcmc_ising, mcmc_rank, mcmc_sbm, spin_expectation, McmcConfig};
use partivae::targets::parse_labels;
use partivae::{Graph, IsingTarget, RankTarget, SbmTarget, TargetModel};

#[test]
fn ising_chain_matches_enumeration() {
    let t = IsingTarget::new(3, 0.2).unwrap();
    let model = TargetModel::Ising(t.clone());
    let exact = enumerate_ln_z(&model).unwrap();
    let bonds = t.bonds().to_vec();
    let nn = spin_expectation(&model, exact.ln_z, |x| {
        bonds.iter().map(|&(i, j)| x[i] * x[j]).sum::<f64>() / bonds.len() as f64
    })
    .unwrap();

    let samples = mcmc_ising(&t, &McmcConfig::new(1_000_000, t.n(), 1)).unwrap();
    let k = samples.len() as f64;
    for i in 0..t.n() {
        let m = samples.iter().map(|s| s[i] as f64).sum::<f64>() / k;
        assert!((m - exact.marginals[i]).abs() < 0.01, "site {i}: {m}");
    }
    let corr = samples
        .iter()
        .map(|s| bonds.iter().map(|&(i, j)| (s[i] * s[j]) as f64).sum::<f64>() / bonds.len() as f64)
        .sum::<f64>()
        / k;
    assert!((corr - nn).abs() < 0.01, "nn correlation {corr} vs {nn}");
}

#[test]
fn sbm_on_empty_graph_is_uniform() {
    let t = SbmTarget::new(Graph::new(6, vec![]).unwrap(), 0.3, 0.3).unwrap();
    let samples = mcmc_sbm(&t, &McmcConfig::new(100_000, 6, 2)).unwrap();
    for i in 0..6 {
        let p = samples.iter().filter(|s| s[i] > 0).count() as f64 / samples.len() as f64;
        assert!((p - 0.5).abs() < 0.01, "node {i}: {p}");
    }
}

#[test]
fn sbm_on_two_cliques_respects_them() {
    let mut edges = Vec::new();
    for base in [0, 4] {
        for i in 0..4 {
            for j in i + 1..4 {
                edges.push((base + i, base + j));
            }
        }
    }
    let t = SbmTarget::new(Graph::new(8, edges).unwrap(), 0.95, 0.02).unwrap();
    let samples = mcmc_sbm(&t, &McmcConfig::new(20_000, 8, 3)).unwrap();
    let respecting = samples
        .iter()
        .filter(|s| s[..4].iter().all(|&v| v == s[0]) && s[4..].iter().all(|&v| v == s[4]) && s[0] != s[4])
        .count();
    assert!(respecting as f64 / samples.len() as f64 > 0.9);
}

#[test]
fn sbm_chain_matches_enumerated_co_membership() {
    let (g, _) = Graph::planted(12, 0.7, 0.15, 4).unwrap();
    let t = SbmTarget::new(g, 0.7, 0.15).unwrap();
    let model = TargetModel::Sbm(t.clone());
    let ln_z = enumerate_ln_z(&model).unwrap().ln_z;
    let samples = mcmc_sbm(&t, &McmcConfig::new(200_000, 12, 5)).unwrap();
    for i in 0..12 {
        for j in i + 1..12 {
            let exact = spin_expectation(&model, ln_z, |x| if x[i] == x[j] { 1.0 } else { 0.0 }).unwrap();
            let got = samples.iter().filter(|s| s[i] == s[j]).count() as f64 / samples.len() as f64;
            assert!((got - exact).abs() < 0.02, "pair ({i},{j}): {got} vs {exact}");
        }
    }
}

#[test]
fn rank_chain_matches_enumerated_positions() {
    let (c, _) = RankTarget::synthetic(6, 20, 0.75, 6).unwrap();
    let t = RankTarget::new(6, c, 0.75).unwrap();
    let exact = enumerate_ln_z(&TargetModel::Rank(t.clone())).unwrap();
    let position = exact.position.unwrap();
    let samples = mcmc_rank(&t, &McmcConfig::new(1_000_000 / 6, 6, 7)).unwrap();
    for obj in 0..6 {
        let mut hist = [0.0; 6];
        for s in &samples {
            hist[s[obj] - 1] += 1.0 / samples.len() as f64;
        }
        let tv: f64 = 0.5 * hist.iter().zip(&position[obj]).map(|(a, b)| (a - b).abs()).sum::<f64>();
        assert!(tv < 0.02, "object {obj}: tv {tv}");
    }
}

#[test]
fn rank_chain_at_half_reliability_is_uniform() {
    let (c, _) = RankTarget::synthetic(5, 12, 0.5, 8).unwrap();
    let t = RankTarget::new(5, c, 0.5).unwrap();
    let samples = mcmc_rank(&t, &McmcConfig::new(100_000, 5, 9)).unwrap();
    for obj in 0..5 {
        for k in 1..=5 {
            let p = samples.iter().filter(|s| s[obj] == k).count() as f64 / samples.len() as f64;
            assert!((p - 0.2).abs() < 0.01, "object {obj} rank {k}: {p}");
        }
    }
}

#[test]
fn karate_data_loads() {
    let g = Graph::parse(include_str!("../data/karate.edges"), "karate.edges", None).unwrap();
    assert_eq!(g.n(), 34);
    assert_eq!(g.edges().len(), 78);
    let labels = parse_labels(include_str!("../data/karate.factions"), "karate.factions").unwrap();
    assert_eq!(labels.len(), 34);
    assert_eq!(labels.iter().filter(|&&l| l > 0).count(), 17);
    // the two leaders head opposite factions
    assert_ne!(labels[0], labels[33]);
    assert_eq!(g.degree(0), 16);
    assert_eq!(g.degree(33), 17);
}
