//! Target distributions `f(x)`.
//!
//! Each target evaluates `ln f` exactly on hard configurations and, for
//! training, on relaxed configurations together with the gradient with
//! respect to `x` and to any learnable target parameters.
//!
//! Spin configurations (Ising, SBM) are `±1` values stored as `f64`; relaxed
//! spins live in `(−1, 1)`. Rankings are stored as 1-based ranks `1..=n`,
//! where rank 1 is the best object; relaxed rankings are points of the unit
//! cube whose sort order gives the ranks.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::relax::{sigmoid, soft_indicator, soft_indicator_grad};
use crate::rng;

fn check_len(context: &'static str, expected: usize, x: &[f64]) -> Result<()> {
    if x.len() != expected {
        return Err(Error::dim(context, expected, x.len()));
    }
    Ok(())
}

/// Ferromagnetic Ising model on an `L × L` torus with `J = 1`, `h = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct IsingTarget {
    side: usize,
    beta: f64,
    bonds: Vec<(usize, usize)>,
}

impl IsingTarget {
    pub fn new(side: usize, beta: f64) -> Result<Self> {
        if side < 3 {
            return Err(Error::Config(format!(
                "lattice side must be at least 3 (got {side}); smaller tori double-count bonds"
            )));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::Parameter {
                name: "beta",
                value: beta,
                reason: "inverse temperature must be finite and non-negative",
            });
        }
        let mut bonds = Vec::with_capacity(2 * side * side);
        for r in 0..side {
            for c in 0..side {
                let i = r * side + c;
                bonds.push((i, r * side + (c + 1) % side));
                bonds.push((i, ((r + 1) % side) * side + c));
            }
        }
        Ok(Self { side, beta, bonds })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn n(&self) -> usize {
        self.side * self.side
    }

    pub fn bonds(&self) -> &[(usize, usize)] {
        &self.bonds
    }

    pub fn bond_sum(&self, x: &[f64]) -> f64 {
        self.bonds.iter().map(|&(i, j)| x[i] * x[j]).sum()
    }

    /// `β Σ x_i x_j`; the same polynomial serves hard and relaxed spins.
    pub fn log_f(&self, x: &[f64]) -> Result<f64> {
        check_len("ising log_f", self.n(), x)?;
        Ok(self.beta * self.bond_sum(x))
    }

    /// `ln f` plus its gradient with respect to `x`, added into `grad_x`.
    pub fn log_f_grad(&self, x: &[f64], grad_x: &mut [f64]) -> f64 {
        let mut s = 0.0;
        for &(i, j) in &self.bonds {
            s += x[i] * x[j];
            grad_x[i] += self.beta * x[j];
            grad_x[j] += self.beta * x[i];
        }
        self.beta * s
    }

    /// Bond-sum change from flipping spin `i` of a hard configuration.
    pub fn flip_delta(&self, x: &[i8], i: usize) -> i32 {
        let (r, c) = (i / self.side, i % self.side);
        let l = self.side;
        let nb = [
            r * l + (c + 1) % l,
            r * l + (c + l - 1) % l,
            ((r + 1) % l) * l + c,
            ((r + l - 1) % l) * l + c,
        ];
        let s: i32 = nb.iter().map(|&j| x[j] as i32).sum();
        -2 * x[i] as i32 * s
    }
}

/// Simple undirected graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<bool>,
}

impl Graph {
    pub fn new(n: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let mut adjacency = vec![false; n * n];
        let mut canon = Vec::with_capacity(edges.len());
        for (k, &(u, v)) in edges.iter().enumerate() {
            if u >= n || v >= n {
                return Err(Error::Config(format!("edge {k} ({u}, {v}) references a node >= {n}")));
            }
            if u == v {
                return Err(Error::Config(format!("edge {k} is a self-loop on node {u}")));
            }
            if adjacency[u * n + v] {
                return Err(Error::Config(format!("duplicate edge ({u}, {v})")));
            }
            adjacency[u * n + v] = true;
            adjacency[v * n + u] = true;
            canon.push((u.min(v), u.max(v)));
        }
        Ok(Self {
            n,
            edges: canon,
            adjacency,
        })
    }

    /// Parses a whitespace-separated `u v` edge list. Blank lines and lines
    /// starting with `#` are ignored. The node count is one more than the
    /// largest index unless `n` is given.
    pub fn parse(text: &str, source_name: &str, n: Option<usize>) -> Result<Self> {
        let mut edges = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse {
                source_name: source_name.to_string(),
                line: lineno + 1,
                message,
            };
            let pair = parse_index_pair(line).map_err(err)?;
            let (u, v) = pair;
            if u == v {
                return Err(err(format!("self-loop on node {u}")));
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(err(format!("duplicate edge {u} {v}")));
            }
            edges.push(pair);
        }
        let max_index = edges.iter().map(|&(u, v)| u.max(v) + 1).max().unwrap_or(0);
        let n = n.unwrap_or(max_index);
        if max_index > n {
            return Err(Error::Parse {
                source_name: source_name.to_string(),
                line: 0,
                message: format!("edge references node {} but n = {n}", max_index - 1),
            });
        }
        Self::new(n, edges)
    }

    /// Two equal blocks (first `n / 2` nodes in group a) with independent
    /// edges at probability `p_in` inside and `p_out` across blocks.
    pub fn planted(n: usize, p_in: f64, p_out: f64, seed: u64) -> Result<(Self, Vec<i8>)> {
        let mut r = rng::stream(seed, &[rng::label::DATA]);
        let labels: Vec<i8> = (0..n).map(|i| if i < n / 2 { 1 } else { -1 }).collect();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let p = if labels[i] == labels[j] { p_in } else { p_out };
                if r.gen::<f64>() < p {
                    edges.push((i, j));
                }
            }
        }
        Ok((Self::new(n, edges)?, labels))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency[u * self.n + v]
    }

    pub fn degree(&self, u: usize) -> usize {
        (0..self.n).filter(|&v| self.has_edge(u, v)).count()
    }
}

fn parse_index_pair(line: &str) -> std::result::Result<(usize, usize), String> {
    let mut it = line.split_whitespace();
    let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
        return Err(format!("expected two indices, found {line:?}"));
    };
    let a = a.parse::<usize>().map_err(|e| format!("bad index {a:?}: {e}"))?;
    let b = b.parse::<usize>().map_err(|e| format!("bad index {b:?}: {e}"))?;
    Ok((a, b))
}

/// Parses one `0`/`1` group label per line into spins (`1 → +1`, `0 → −1`).
pub fn parse_labels(text: &str, source_name: &str) -> Result<Vec<i8>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        out.push(match line {
            "1" => 1,
            "0" => -1,
            other => {
                return Err(Error::Parse {
                    source_name: source_name.to_string(),
                    line: lineno + 1,
                    message: format!("expected label 0 or 1, found {other:?}"),
                })
            }
        });
    }
    Ok(out)
}

fn logit(p: f64) -> f64 {
    p.ln() - (-p).ln_1p()
}

/// Two-group stochastic block model posterior numerator with
/// `ω(a, a) = ω(b, b) = ω_in`, `ω(a, b) = ω_out` and a uniform label prior.
#[derive(Debug, Clone, PartialEq)]
pub struct SbmTarget {
    graph: Graph,
    omega_in_logit: f64,
    omega_out_logit: f64,
}

impl SbmTarget {
    pub const GROUPS: usize = 2;

    pub fn new(graph: Graph, omega_in: f64, omega_out: f64) -> Result<Self> {
        for (name, w) in [("omega_in", omega_in), ("omega_out", omega_out)] {
            if !(w > 0.0 && w < 1.0) {
                return Err(Error::Parameter {
                    name,
                    value: w,
                    reason: "edge probability must lie strictly inside (0, 1)",
                });
            }
        }
        Ok(Self {
            graph,
            omega_in_logit: logit(omega_in),
            omega_out_logit: logit(omega_out),
        })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn omega_in(&self) -> f64 {
        sigmoid(self.omega_in_logit)
    }

    pub fn omega_out(&self) -> f64 {
        sigmoid(self.omega_out_logit)
    }

    pub fn logits(&self) -> [f64; 2] {
        [self.omega_in_logit, self.omega_out_logit]
    }

    pub fn set_logits(&mut self, logits: [f64; 2]) {
        self.omega_in_logit = logits[0];
        self.omega_out_logit = logits[1];
    }

    fn omegas_checked(&self) -> Result<(f64, f64)> {
        let (wi, wo) = (self.omega_in(), self.omega_out());
        for (name, w) in [("omega_in", wi), ("omega_out", wo)] {
            if !(w > 0.0 && w < 1.0) {
                return Err(Error::Parameter {
                    name,
                    value: w,
                    reason: "edge probability saturated at 0 or 1",
                });
            }
        }
        Ok((wi, wo))
    }

    /// `−n ln 2 + Σ_{i<j} [G_ij ln ω_ij + (1 − G_ij) ln(1 − ω_ij)]` with
    /// `ω_ij = ω_out + (ω_in − ω_out)(1 + x_i x_j)/2`.
    pub fn log_f(&self, x: &[f64]) -> Result<f64> {
        check_len("sbm log_f", self.n(), x)?;
        let (wi, wo) = self.omegas_checked()?;
        let n = self.n();
        let mut total = -(n as f64) * (Self::GROUPS as f64).ln();
        for i in 0..n {
            for j in i + 1..n {
                let w = wo + (wi - wo) * 0.5 * (1.0 + x[i] * x[j]);
                total += if self.graph.has_edge(i, j) {
                    w.ln()
                } else {
                    (-w).ln_1p()
                };
            }
        }
        Ok(total)
    }

    /// `ln f`, adding `∂ ln f/∂x` into `grad_x` and, when given,
    /// `upstream · ∂ ln f/∂(logit ω_in, logit ω_out)` into `param_grad`.
    pub fn log_f_grad(&self, x: &[f64], grad_x: &mut [f64], param_grad: Option<(f64, &mut [f64])>) -> f64 {
        let (wi, wo) = (self.omega_in(), self.omega_out());
        let n = self.n();
        let mut total = -(n as f64) * (Self::GROUPS as f64).ln();
        let (mut g_in, mut g_out) = (0.0, 0.0);
        for i in 0..n {
            for j in i + 1..n {
                let p = 0.5 * (1.0 + x[i] * x[j]);
                let w = wo + (wi - wo) * p;
                let (val, dw) = if self.graph.has_edge(i, j) {
                    (w.ln(), 1.0 / w)
                } else {
                    ((-w).ln_1p(), -1.0 / (1.0 - w))
                };
                total += val;
                let dp = dw * (wi - wo) * 0.5;
                grad_x[i] += dp * x[j];
                grad_x[j] += dp * x[i];
                g_in += dw * p;
                g_out += dw * (1.0 - p);
            }
        }
        if let Some((upstream, out)) = param_grad {
            out[0] += upstream * g_in * wi * (1.0 - wi);
            out[1] += upstream * g_out * wo * (1.0 - wo);
        }
        total
    }

    /// Gradient of the relaxed `ln f` with respect to the two omega logits,
    /// scaled by `upstream`.
    pub fn param_grads(&self, x: &[f64], upstream: f64) -> Result<[f64; 2]> {
        check_len("sbm param_grads", self.n(), x)?;
        let mut scratch = vec![0.0; self.n()];
        let mut out = [0.0; 2];
        self.log_f_grad(x, &mut scratch, Some((upstream, &mut out)));
        Ok(out)
    }
}

/// Noisy-comparison ranking posterior `f(x) = w^m ((1 − w)/w)^{V(x)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankTarget {
    n: usize,
    comparisons: Vec<(usize, usize)>,
    w: f64,
    by_object: Vec<Vec<usize>>,
}

impl RankTarget {
    pub fn new(n: usize, comparisons: Vec<(usize, usize)>, w: f64) -> Result<Self> {
        if !(w > 0.0 && w < 1.0) {
            return Err(Error::Parameter {
                name: "w",
                value: w,
                reason: "comparison reliability must lie strictly inside (0, 1)",
            });
        }
        let mut by_object = vec![Vec::new(); n];
        for (k, &(i, j)) in comparisons.iter().enumerate() {
            if i >= n || j >= n {
                return Err(Error::Config(format!("comparison {k} ({i}, {j}) references an object >= {n}")));
            }
            if i == j {
                return Err(Error::Config(format!("comparison {k} compares object {i} with itself")));
            }
            by_object[i].push(k);
            by_object[j].push(k);
        }
        Ok(Self {
            n,
            comparisons,
            w,
            by_object,
        })
    }

    /// Parses `i j` lines meaning `i` beat `j`. Repeats are kept.
    pub fn parse_comparisons(text: &str, source_name: &str) -> Result<Vec<(usize, usize)>> {
        let mut out = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse {
                source_name: source_name.to_string(),
                line: lineno + 1,
                message,
            };
            let (i, j) = parse_index_pair(line).map_err(err)?;
            if i == j {
                return Err(err(format!("object {i} compared with itself")));
            }
            out.push((i, j));
        }
        Ok(out)
    }

    /// Synthetic instance: a hidden random ranking and `m` comparisons between
    /// uniformly chosen distinct pairs, each agreeing with the hidden order
    /// with probability `w`. Returns the comparisons and the hidden ranks.
    pub fn synthetic(n: usize, m: usize, w: f64, seed: u64) -> Result<(Vec<(usize, usize)>, Vec<usize>)> {
        if n < 2 && m > 0 {
            return Err(Error::Config("need at least two objects to compare".into()));
        }
        let mut r = rng::stream(seed, &[rng::label::DATA]);
        let mut truth: Vec<usize> = (1..=n).collect();
        truth.shuffle(&mut r);
        let mut comps = Vec::with_capacity(m);
        for _ in 0..m {
            let i = r.gen_range(0..n);
            let mut j = r.gen_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            let (better, worse) = if truth[i] < truth[j] { (i, j) } else { (j, i) };
            if r.gen::<f64>() < w {
                comps.push((better, worse));
            } else {
                comps.push((worse, better));
            }
        }
        Ok((comps, truth))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.comparisons.len()
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn set_w(&mut self, w: f64) {
        self.w = w;
    }

    pub fn comparisons(&self) -> &[(usize, usize)] {
        &self.comparisons
    }

    /// Indices of comparisons involving `object`.
    pub fn comparisons_of(&self, object: usize) -> &[usize] {
        &self.by_object[object]
    }

    /// `ln((1 − w)/w)`, the log-weight of one violation.
    pub fn log_ratio(&self) -> f64 {
        (-self.w).ln_1p() - self.w.ln()
    }

    /// Number of comparisons `i ≺ j` with `rank_i > rank_j`.
    pub fn violations(&self, ranks: &[usize]) -> Result<usize> {
        check_permutation(ranks, self.n)?;
        Ok(self.violations_unchecked(ranks))
    }

    pub(crate) fn violations_unchecked(&self, ranks: &[usize]) -> usize {
        self.comparisons
            .iter()
            .filter(|&&(i, j)| ranks[i] > ranks[j])
            .count()
    }

    pub fn log_f_from_violations(&self, v: usize) -> f64 {
        self.m() as f64 * self.w.ln() + v as f64 * self.log_ratio()
    }

    pub fn log_f_hard(&self, ranks: &[usize]) -> Result<f64> {
        Ok(self.log_f_from_violations(self.violations(ranks)?))
    }

    /// Steep-sigmoid violation count `Σ_{i≺j} σ(k(x_i − x_j))`.
    pub fn soft_violations(&self, x: &[f64], k: f64) -> Result<f64> {
        check_len("rank soft_violations", self.n, x)?;
        Ok(self
            .comparisons
            .iter()
            .map(|&(i, j)| soft_indicator(x[i] - x[j], k))
            .sum())
    }

    /// Relaxed `ln f`, adding `∂ ln f/∂x` into `grad_x`.
    pub fn log_f_soft_grad(&self, x: &[f64], k: f64, grad_x: &mut [f64]) -> f64 {
        let lr = self.log_ratio();
        let mut v = 0.0;
        for &(i, j) in &self.comparisons {
            let d = x[i] - x[j];
            v += soft_indicator(d, k);
            let g = lr * soft_indicator_grad(d, k);
            grad_x[i] += g;
            grad_x[j] -= g;
        }
        self.m() as f64 * self.w.ln() + v * lr
    }

    pub fn log_f_soft(&self, x: &[f64], k: f64) -> Result<f64> {
        let v = self.soft_violations(x, k)?;
        Ok(self.m() as f64 * self.w.ln() + v * self.log_ratio())
    }

    /// `upstream · ∂(relaxed ln f)/∂w`.
    pub fn w_grad(&self, x: &[f64], k: f64, upstream: f64) -> Result<f64> {
        let v = self.soft_violations(x, k)?;
        let w = self.w;
        Ok(upstream * (self.m() as f64 / w - v * (1.0 / (1.0 - w) + 1.0 / w)))
    }
}

fn check_permutation(ranks: &[usize], n: usize) -> Result<()> {
    if ranks.len() != n {
        return Err(Error::dim("ranking", n, ranks.len()));
    }
    let mut seen = vec![false; n];
    for &r in ranks {
        if r == 0 || r > n || seen[r - 1] {
            return Err(Error::Config(format!("{ranks:?} is not a permutation of 1..={n}")));
        }
        seen[r - 1] = true;
    }
    Ok(())
}

/// Ranks of a relaxed ranking by ascending sort order (ties by index).
pub fn rank_round(x: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
    let mut ranks = vec![0; x.len()];
    for (pos, &obj) in order.iter().enumerate() {
        ranks[obj] = pos + 1;
    }
    ranks
}

/// Variables of a target: binary spins or a ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Spin,
    Rank,
}

/// One of the supported targets, behind a uniform interface.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetModel {
    Ising(IsingTarget),
    Sbm(SbmTarget),
    Rank(RankTarget),
}

impl TargetModel {
    pub fn n_vars(&self) -> usize {
        match self {
            TargetModel::Ising(t) => t.n(),
            TargetModel::Sbm(t) => t.n(),
            TargetModel::Rank(t) => t.n(),
        }
    }

    pub fn domain(&self) -> Domain {
        match self {
            TargetModel::Rank(_) => Domain::Rank,
            _ => Domain::Spin,
        }
    }

    /// Exact `ln f` of a hard sample. Spins are `±1`; a ranking sample is a
    /// point of the unit cube and is scored by its sort order.
    pub fn log_f_hard(&self, x: &[f64]) -> Result<f64> {
        match self {
            TargetModel::Ising(t) => t.log_f(x),
            TargetModel::Sbm(t) => t.log_f(x),
            TargetModel::Rank(t) => {
                check_len("rank log_f", t.n(), x)?;
                t.log_f_hard(&rank_round(x))
            }
        }
    }

    /// Relaxed `ln f`, adding `∂/∂x` into `grad_x` and, when `param_grad` is
    /// given, `upstream · ∂/∂θ` for the unconstrained learnable parameters.
    pub fn log_f_soft_grad(
        &self,
        x: &[f64],
        sigmoid_k: f64,
        grad_x: &mut [f64],
        param_grad: Option<(f64, &mut [f64])>,
    ) -> f64 {
        match self {
            TargetModel::Ising(t) => t.log_f_grad(x, grad_x),
            TargetModel::Sbm(t) => t.log_f_grad(x, grad_x, param_grad),
            TargetModel::Rank(t) => {
                let val = t.log_f_soft_grad(x, sigmoid_k, grad_x);
                if let Some((upstream, out)) = param_grad {
                    let rho = w_to_unconstrained(t.w());
                    let s = sigmoid(rho);
                    let dw = t.w_grad(x, sigmoid_k, upstream).unwrap_or(0.0);
                    out[0] += dw * 0.5 * s * (1.0 - s);
                }
                val
            }
        }
    }

    pub fn log_f_soft(&self, x: &[f64], sigmoid_k: f64) -> Result<f64> {
        match self {
            TargetModel::Ising(t) => t.log_f(x),
            TargetModel::Sbm(t) => t.log_f(x),
            TargetModel::Rank(t) => t.log_f_soft(x, sigmoid_k),
        }
    }

    /// Number of learnable target parameters (omega logits, or the
    /// reliability `w` through `w = 1/2 + σ(ρ)/2`).
    pub fn n_params(&self) -> usize {
        match self {
            TargetModel::Ising(_) => 0,
            TargetModel::Sbm(_) => 2,
            TargetModel::Rank(_) => 1,
        }
    }

    /// Learnable parameters in unconstrained form.
    pub fn params(&self) -> Vec<f64> {
        match self {
            TargetModel::Ising(_) => vec![],
            TargetModel::Sbm(t) => t.logits().to_vec(),
            TargetModel::Rank(t) => vec![w_to_unconstrained(t.w())],
        }
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.n_params() {
            return Err(Error::dim("target params", self.n_params(), p.len()));
        }
        match self {
            TargetModel::Ising(_) => {}
            TargetModel::Sbm(t) => t.set_logits([p[0], p[1]]),
            TargetModel::Rank(t) => t.set_w(0.5 + 0.5 * sigmoid(p[0])),
        }
        Ok(())
    }
}

fn w_to_unconstrained(w: f64) -> f64 {
    logit((2.0 * w - 1.0).clamp(1e-300, 1.0 - 1e-16))
}
