//! The reversed variational autoencoder.
//!
//! Latent codes `y ∈ {±1}^D` have a fair-coin prior. The decoder maps `y` to
//! a product distribution `R(x | y)` over the target variables, and the
//! encoder maps `x` to a product of Bernoullis `Q(y | x)`. For every choice of
//! the two networks,
//!
//! ```text
//! ln Z ≥ E_{y ~ P, x ~ R(·|y)} [ ln f(x) + ln Q(y|x) − ln P(y) − ln R(x|y) ]
//! ```
//!
//! Training maximizes a relaxed Monte Carlo estimate of the right-hand side
//! (binary Concrete spins, reparameterized `(0, 1)` draws for rankings).
//! Reported bounds always use hard samples and exact log-masses.
//!
//! For ranking targets the decoder is a density on the unit cube. Each order
//! simplex has volume `1/n!`, so the cube bound estimates `ln Z − ln n!`; the
//! term below adds `ln n!` back.

use serde::{Deserialize, Serialize};

use crate::diffcore::{mlp_backward_accumulate, mlp_forward, AdamConfig, AdamState, MlpParams};
use crate::error::{Error, Result};
use crate::relax::{gumbel_soft_spin, harden_spin, log_2cosh, sigmoid, RelaxConfig, UnitFamily};
use crate::rng::{self, label};
use crate::targets::{rank_round, Domain, TargetModel};

/// Lower clamp for relaxed ranking coordinates; the upper clamp is `1 − RANK_CLAMP`.
pub const RANK_CLAMP: f64 = 1e-6;

/// Offset making a zero decoder output map to shape parameters `a = b = 1`.
const SHAPE_SHIFT: f64 = 0.541_324_854_612_918_1; // ln(e − 1)
const SHAPE_FLOOR: f64 = 1e-6;

#[inline]
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Number of auxiliary binary variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentSpec {
    pub dim: usize,
}

impl LatentSpec {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }

    /// `ln P(y) = −D ln 2` for every code.
    pub fn log_prior(&self) -> f64 {
        -(self.dim as f64) * std::f64::consts::LN_2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMode {
    Hard,
    Relaxed,
}

/// Monte Carlo estimate of the bound, in nats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElboEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub mode: EstimateMode,
}

impl ElboEstimate {
    fn from_terms(terms: &[f64], mode: EstimateMode) -> Self {
        let n = terms.len();
        let mean = terms.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            terms.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            mean,
            stderr: (var / n as f64).sqrt(),
            n_samples: n,
            mode,
        }
    }

    /// Sample variance of the individual terms.
    pub fn term_variance(&self) -> f64 {
        self.stderr * self.stderr * self.n_samples as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub n_steps: usize,
    pub hidden: usize,
    pub seed: u64,
    pub eval_samples: usize,
    /// Train the target's own parameters (omega for SBM, w for ranking)
    /// jointly with the networks.
    pub learn_target_params: bool,
    pub relax: RelaxConfig,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            n_steps: 5000,
            hidden: 1024,
            seed: 0,
            eval_samples: 100_000,
            learn_target_params: false,
            relax: RelaxConfig::default(),
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.hidden == 0 {
            return Err(Error::Config("hidden must be at least 1".into()));
        }
        if self.eval_samples < 2 {
            return Err(Error::Config("eval_samples must be at least 2".into()));
        }
        self.relax.validate()
    }
}

/// Decoder and encoder networks.
#[derive(Debug, Clone, PartialEq)]
pub struct Vae {
    latent: LatentSpec,
    domain: Domain,
    n_vars: usize,
    family: UnitFamily,
    /// `y → φ` (spins, length n) or `y → raw shape parameters` (rankings, length 2n).
    pub decoder: MlpParams,
    /// `x → θ`; absent when `D = 0`.
    pub encoder: Option<MlpParams>,
}

impl Vae {
    /// Glorot hidden layers and zero output layers, so that `R` and `Q`
    /// start out exactly uniform.
    pub fn new(target: &TargetModel, latent: LatentSpec, hidden: usize, relax: &RelaxConfig, seed: u64) -> Self {
        let mut r = rng::stream(seed, &[label::INIT]);
        let n = target.n_vars();
        let domain = target.domain();
        let out = match domain {
            Domain::Spin => n,
            Domain::Rank => 2 * n,
        };
        let decoder = MlpParams::glorot_zero_output(latent.dim, hidden, out, &mut r);
        let encoder = (latent.dim > 0).then(|| MlpParams::glorot_zero_output(n, hidden, latent.dim, &mut r));
        Self {
            latent,
            domain,
            n_vars: n,
            family: UnitFamily(relax.beta_mode),
            decoder,
            encoder,
        }
    }

    /// Assembles a model from existing networks, checking shapes.
    pub fn from_parts(
        target: &TargetModel,
        latent: LatentSpec,
        relax: &RelaxConfig,
        decoder: MlpParams,
        encoder: Option<MlpParams>,
    ) -> Result<Self> {
        let n = target.n_vars();
        let out = match target.domain() {
            Domain::Spin => n,
            Domain::Rank => 2 * n,
        };
        if decoder.in_dim() != latent.dim || decoder.out_dim() != out {
            return Err(Error::dim("decoder shape", out, decoder.out_dim()));
        }
        match (&encoder, latent.dim) {
            (None, 0) => {}
            (Some(e), d) if d > 0 && e.in_dim() == n && e.out_dim() == d => {}
            (Some(e), d) => return Err(Error::dim("encoder shape", d, e.out_dim())),
            (None, d) => return Err(Error::dim("encoder shape", d, 0)),
        }
        Ok(Self {
            latent,
            domain: target.domain(),
            n_vars: n,
            family: UnitFamily(relax.beta_mode),
            decoder,
            encoder,
        })
    }

    pub fn latent(&self) -> LatentSpec {
        self.latent
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn family(&self) -> UnitFamily {
        self.family
    }

    /// Sets the decoder output bias, e.g. to start from chosen fields.
    pub fn set_decoder_bias(&mut self, bias: &[f64]) -> Result<()> {
        if bias.len() != self.decoder.b2.len() {
            return Err(Error::dim("decoder bias", self.decoder.b2.len(), bias.len()));
        }
        self.decoder.b2.copy_from_slice(bias);
        Ok(())
    }

    /// Decoder fields `φ(y)` for spin targets.
    pub fn fields(&self, y: &[f64]) -> Result<Vec<f64>> {
        Ok(mlp_forward(&self.decoder, y)?.0)
    }

    /// Shape parameters `(a_i, b_i)` of `R(· | y)` for ranking targets.
    pub fn shapes(&self, y: &[f64]) -> Result<Vec<(f64, f64)>> {
        let raw = mlp_forward(&self.decoder, y)?.0;
        let n = self.n_vars;
        Ok((0..n)
            .map(|i| (shape(raw[i]), shape(raw[n + i])))
            .collect())
    }

    /// Encoder fields `θ(x)`; empty when `D = 0`.
    pub fn encoder_fields(&self, x: &[f64]) -> Result<Vec<f64>> {
        match &self.encoder {
            Some(e) => Ok(mlp_forward(e, x)?.0),
            None => Ok(Vec::new()),
        }
    }

    fn n_params(&self) -> usize {
        self.decoder.n_params() + self.encoder.as_ref().map_or(0, |e| e.n_params())
    }
}

#[inline]
fn shape(raw: f64) -> f64 {
    softplus(raw + SHAPE_SHIFT) + SHAPE_FLOOR
}

#[inline]
fn shape_grad(raw: f64) -> f64 {
    sigmoid(raw + SHAPE_SHIFT)
}

/// The factors of one hard ELBO term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElboTerm {
    pub total: f64,
    pub log_f: f64,
    pub log_q: f64,
    pub log_prior: f64,
    pub log_r: f64,
    /// `ln n!` for ranking targets, zero otherwise.
    pub volume: f64,
}

fn finite(value: f64, factor: &'static str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Evaluation { factor })
    }
}

fn log_q(vae: &Vae, y: &[f64], x: &[f64]) -> Result<f64> {
    let theta = vae.encoder_fields(x)?;
    Ok(y.iter().zip(&theta).map(|(&yj, &t)| yj * t - log_2cosh(t)).sum())
}

/// `ln f(x) + ln Q(y|x) − ln P(y) − ln R(x|y)` for a hard latent code and a
/// hard sample (`±1` spins, or a point of the unit cube for rankings).
pub fn elbo_term(target: &TargetModel, vae: &Vae, y: &[f64], x: &[f64]) -> Result<ElboTerm> {
    if y.len() != vae.latent.dim {
        return Err(Error::dim("elbo_term y", vae.latent.dim, y.len()));
    }
    if x.len() != target.n_vars() || vae.n_vars != target.n_vars() {
        return Err(Error::dim("elbo_term x", target.n_vars(), x.len()));
    }
    let log_r = match vae.domain {
        Domain::Spin => {
            let phi = vae.fields(y)?;
            x.iter().zip(&phi).map(|(&xi, &p)| xi * p - log_2cosh(p)).sum()
        }
        Domain::Rank => {
            let shapes = vae.shapes(y)?;
            let mut lr = 0.0;
            for (&xi, &(a, b)) in x.iter().zip(&shapes) {
                lr += vae.family.log_density(a, b, xi)?.value;
            }
            lr
        }
    };
    assemble(target, vae, &HardDraw { y: y.to_vec(), x: x.to_vec(), key: None, log_r })
}

/// One hard draw. For rankings `key` holds `ln x`, which orders the objects
/// even where `x` itself underflows, and `x` is the clamped point fed to the
/// encoder; `log_r` is the density of the unclamped draw.
struct HardDraw {
    y: Vec<f64>,
    x: Vec<f64>,
    key: Option<Vec<f64>>,
    log_r: f64,
}

fn assemble(target: &TargetModel, vae: &Vae, d: &HardDraw) -> Result<ElboTerm> {
    let (log_f, volume) = match vae.domain {
        Domain::Spin => (target.log_f_hard(&d.x)?, 0.0),
        Domain::Rank => (
            target.log_f_hard(d.key.as_deref().unwrap_or(&d.x))?,
            ln_factorial(d.x.len()),
        ),
    };
    let log_f = finite(log_f, "ln f")?;
    let log_r = finite(d.log_r, "ln R")?;
    let log_q = finite(log_q(vae, &d.y, &d.x)?, "ln Q")?;
    let log_prior = vae.latent.log_prior();
    Ok(ElboTerm {
        total: log_f + volume + log_q - log_prior - log_r,
        log_f,
        log_q,
        log_prior,
        log_r,
        volume,
    })
}

/// Draws a hard latent code from the prior and a hard sample from `R(· | y)`.
fn draw_hard<R: rand::Rng + ?Sized>(vae: &Vae, r: &mut R) -> Result<HardDraw> {
    let y: Vec<f64> = (0..vae.latent.dim)
        .map(|_| harden_spin(0.0, rng::open_uniform(r)).map(f64::from))
        .collect::<Result<_>>()?;
    match vae.domain {
        Domain::Spin => {
            let phi = vae.fields(&y)?;
            let x: Vec<f64> = phi
                .iter()
                .map(|&p| harden_spin(2.0 * p, rng::open_uniform(r)).map(f64::from))
                .collect::<Result<_>>()?;
            let log_r = x.iter().zip(&phi).map(|(&xi, &p)| xi * p - log_2cosh(p)).sum();
            Ok(HardDraw { y, x, key: None, log_r })
        }
        Domain::Rank => {
            let shapes = vae.shapes(&y)?;
            let mut x = Vec::with_capacity(shapes.len());
            let mut key = Vec::with_capacity(shapes.len());
            let mut log_r = 0.0;
            for &(a, b) in &shapes {
                let d = vae.family.sample_log(a, b, rng::open_uniform(r))?;
                x.push(d.ln_x.exp().clamp(RANK_CLAMP, 1.0 - RANK_CLAMP));
                key.push(d.ln_x);
                log_r += d.log_density;
            }
            Ok(HardDraw { y, x, key: Some(key), log_r })
        }
    }
}

/// Hard-sample estimate of the bound from `n_samples` independent draws.
pub fn estimate_ln_z(target: &TargetModel, vae: &Vae, n_samples: usize, seed: u64) -> Result<ElboEstimate> {
    if n_samples < 2 {
        return Err(Error::Config("n_samples must be at least 2".into()));
    }
    if vae.n_vars != target.n_vars() {
        return Err(Error::dim("estimate_ln_z", target.n_vars(), vae.n_vars));
    }
    let mut terms = Vec::with_capacity(n_samples);
    for s in 0..n_samples {
        let mut r = rng::stream(seed, &[label::EVAL, s as u64]);
        terms.push(assemble(target, vae, &draw_hard(vae, &mut r)?)?.total);
    }
    Ok(ElboEstimate::from_terms(&terms, EstimateMode::Hard))
}

/// Hard samples `x`: spins as `±1`, rankings as ranks `1..=n` obtained from
/// the sort order of the relaxed draw.
pub fn sample_x(vae: &Vae, n_samples: usize, seed: u64) -> Result<Vec<Vec<i32>>> {
    (0..n_samples)
        .map(|s| {
            let mut r = rng::stream(seed, &[label::SAMPLE, s as u64]);
            let d = draw_hard(vae, &mut r)?;
            Ok(match &d.key {
                None => d.x.iter().map(|&v| v as i32).collect(),
                Some(key) => rank_round(key).into_iter().map(|k| k as i32).collect(),
            })
        })
        .collect()
}

/// Uniform noise for one relaxed sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleNoise {
    pub y: Vec<f64>,
    pub x: Vec<f64>,
}

impl SampleNoise {
    pub fn draw(latent_dim: usize, n_vars: usize, seed: u64, path: &[u64]) -> Self {
        let mut r = rng::stream(seed, path);
        let y = (0..latent_dim).map(|_| rng::open_uniform(&mut r)).collect();
        let x = (0..n_vars).map(|_| rng::open_uniform(&mut r)).collect();
        Self { y, x }
    }
}

/// Gradient of the relaxed objective, laid out like the trainable state.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeGrads {
    pub decoder: MlpParams,
    pub encoder: Option<MlpParams>,
    pub target: Vec<f64>,
}

impl VaeGrads {
    pub fn zeros(vae: &Vae, n_target_params: usize) -> Self {
        Self {
            decoder: vae.decoder.zeros_like(),
            encoder: vae.encoder.as_ref().map(|e| e.zeros_like()),
            target: vec![0.0; n_target_params],
        }
    }

    fn is_finite(&self) -> bool {
        self.decoder.is_finite()
            && self.encoder.as_ref().map_or(true, |e| e.is_finite())
            && self.target.iter().all(|v| v.is_finite())
    }
}

/// Relaxed objective of one sample; when `grads` is given, adds
/// `scale · ∇(objective)` into it.
fn relaxed_sample(
    target: &TargetModel,
    vae: &Vae,
    relax: &RelaxConfig,
    noise: &SampleNoise,
    grads: Option<(&mut VaeGrads, f64)>,
) -> Result<f64> {
    let n = vae.n_vars;
    let d = vae.latent.dim;
    if noise.y.len() != d || noise.x.len() != n {
        return Err(Error::dim("sample noise", d + n, noise.y.len() + noise.x.len()));
    }
    let y: Vec<f64> = noise
        .y
        .iter()
        .map(|&u| gumbel_soft_spin(0.0, relax.tau, u).map(|s| s.value))
        .collect::<Result<_>>()?;
    let (raw, dec_tape) = mlp_forward(&vae.decoder, &y)?;

    // x̃ with d x̃_i / d(raw) and the ln R contribution with its partials
    let mut x = vec![0.0; n];
    let mut log_r = 0.0;
    let mut volume = 0.0;
    let mut dx_draw_a = vec![0.0; n];
    let mut dx_draw_b = vec![0.0; n];
    // ∂(−ln R)/∂raw holding x fixed, and ∂ ln R/∂x
    let mut neg_logr_draw = vec![0.0; raw.len()];
    let mut logr_dx = vec![0.0; n];
    match vae.domain {
        Domain::Spin => {
            for i in 0..n {
                let phi = raw[i];
                let s = gumbel_soft_spin(2.0 * phi, relax.tau, noise.x[i])?;
                x[i] = s.value;
                dx_draw_a[i] = 2.0 * s.d_log_odds;
                log_r += s.value * phi - log_2cosh(phi);
                neg_logr_draw[i] = -s.value + phi.tanh();
                logr_dx[i] = phi;
            }
        }
        Domain::Rank => {
            volume = ln_factorial(n);
            for i in 0..n {
                let (ra, rb) = (raw[i], raw[n + i]);
                let (a, b) = (shape(ra), shape(rb));
                let (ga, gb) = (shape_grad(ra), shape_grad(rb));
                let s = vae.family.sample(a, b, noise.x[i])?;
                let (xi, dxa, dxb) = if s.x < RANK_CLAMP || s.x > 1.0 - RANK_CLAMP {
                    (s.x.clamp(RANK_CLAMP, 1.0 - RANK_CLAMP), 0.0, 0.0)
                } else {
                    (s.x, s.dx_da, s.dx_db)
                };
                let ld = vae.family.log_density(a, b, xi)?;
                x[i] = xi;
                log_r += ld.value;
                dx_draw_a[i] = dxa * ga;
                dx_draw_b[i] = dxb * gb;
                neg_logr_draw[i] = -ld.d_a * ga;
                neg_logr_draw[n + i] = -ld.d_b * gb;
                logr_dx[i] = ld.d_x;
            }
        }
    }

    let mut grad_x = vec![0.0; n];
    let learn = grads.as_ref().map_or(false, |(g, _)| !g.target.is_empty());
    let scale = grads.as_ref().map_or(1.0, |(_, s)| *s);
    let mut target_grad = vec![0.0; target.n_params()];
    let log_f = target.log_f_soft_grad(
        &x,
        relax.sigmoid_k,
        &mut grad_x,
        learn.then_some((1.0, target_grad.as_mut_slice())),
    );

    let mut log_q = 0.0;
    let enc = match &vae.encoder {
        Some(e) => {
            let (theta, tape) = mlp_forward(e, &x)?;
            let mut g_theta = vec![0.0; d];
            for j in 0..d {
                log_q += y[j] * theta[j] - log_2cosh(theta[j]);
                g_theta[j] = y[j] - theta[j].tanh();
            }
            Some((e, tape, g_theta))
        }
        None => None,
    };

    let value = log_f + volume + log_q - vae.latent.log_prior() - log_r;
    if !value.is_finite() {
        return Err(Error::Evaluation {
            factor: "relaxed objective",
        });
    }

    let Some((grads, _)) = grads else {
        return Ok(value);
    };

    // dJ/dx from ln f, ln Q (through the encoder input) and −ln R
    let mut dj_dx = grad_x;
    if let Some((e, tape, mut g_theta)) = enc {
        g_theta.iter_mut().for_each(|g| *g *= scale);
        let mut enc_in = vec![0.0; n];
        let enc_grads = grads.encoder.as_mut().expect("encoder gradient buffer");
        mlp_backward_accumulate(e, &tape, &g_theta, enc_grads, Some(&mut enc_in))?;
        for i in 0..n {
            dj_dx[i] = scale * dj_dx[i] + enc_in[i];
        }
    } else {
        dj_dx.iter_mut().for_each(|g| *g *= scale);
    }
    for i in 0..n {
        dj_dx[i] -= scale * logr_dx[i];
    }

    let mut dj_draw: Vec<f64> = neg_logr_draw.iter().map(|g| scale * g).collect();
    match vae.domain {
        Domain::Spin => {
            for i in 0..n {
                dj_draw[i] += dj_dx[i] * dx_draw_a[i];
            }
        }
        Domain::Rank => {
            for i in 0..n {
                dj_draw[i] += dj_dx[i] * dx_draw_a[i];
                dj_draw[n + i] += dj_dx[i] * dx_draw_b[i];
            }
        }
    }
    mlp_backward_accumulate(&vae.decoder, &dec_tape, &dj_draw, &mut grads.decoder, None)?;
    if learn {
        for (g, t) in grads.target.iter_mut().zip(&target_grad) {
            *g += scale * t;
        }
    }
    Ok(value)
}

/// Batch-mean relaxed objective and its gradient for explicit noise.
///
/// Target-parameter gradients are included when `learn_target_params` is set.
pub fn relaxed_objective(
    target: &TargetModel,
    vae: &Vae,
    relax: &RelaxConfig,
    noise: &[SampleNoise],
    learn_target_params: bool,
) -> Result<(f64, VaeGrads)> {
    let n_tp = if learn_target_params { target.n_params() } else { 0 };
    let mut grads = VaeGrads::zeros(vae, n_tp);
    let scale = 1.0 / noise.len().max(1) as f64;
    let mut total = 0.0;
    for nz in noise {
        total += relaxed_sample(target, vae, relax, nz, Some((&mut grads, scale)))?;
    }
    Ok((total * scale, grads))
}

/// Relaxed-mode estimate (the training objective) over fresh noise.
pub fn estimate_relaxed(
    target: &TargetModel,
    vae: &Vae,
    relax: &RelaxConfig,
    n_samples: usize,
    seed: u64,
) -> Result<ElboEstimate> {
    if n_samples < 2 {
        return Err(Error::Config("n_samples must be at least 2".into()));
    }
    let terms = (0..n_samples)
        .map(|s| {
            let nz = SampleNoise::draw(vae.latent.dim, vae.n_vars, seed, &[label::EVAL, u64::MAX, s as u64]);
            relaxed_sample(target, vae, relax, &nz, None)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ElboEstimate::from_terms(&terms, EstimateMode::Relaxed))
}

/// Trained networks plus the per-step batch-mean relaxed objective.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub vae: Vae,
    pub trace: Vec<f64>,
}

/// Trains fresh networks for `latent` on `target`.
pub fn train(target: &mut TargetModel, latent: LatentSpec, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let vae = Vae::new(target, latent, cfg.hidden, &cfg.relax, cfg.seed);
    train_from(target, vae, cfg)
}

/// Continues training from the given networks (and target parameters).
pub fn train_from(target: &mut TargetModel, mut vae: Vae, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if vae.n_vars != target.n_vars() || vae.domain != target.domain() {
        return Err(Error::dim("train_from model", target.n_vars(), vae.n_vars));
    }
    vae.family = UnitFamily(cfg.relax.beta_mode);
    let n_tp = if cfg.learn_target_params { target.n_params() } else { 0 };
    let mut adam = AdamState::new(vae.n_params() + n_tp, cfg.adam);
    let mut tparams = target.params();
    let mut trace = Vec::with_capacity(cfg.n_steps);

    for step in 0..cfg.n_steps {
        let noise: Vec<SampleNoise> = (0..cfg.batch_size)
            .map(|b| {
                SampleNoise::draw(
                    vae.latent.dim,
                    vae.n_vars,
                    cfg.seed,
                    &[label::TRAIN, step as u64, b as u64],
                )
            })
            .collect();
        let (value, grads) = relaxed_objective(target, &vae, &cfg.relax, &noise, cfg.learn_target_params)
            .map_err(|e| Error::Training {
                step,
                reason: e.to_string(),
            })?;
        if !value.is_finite() || !grads.is_finite() {
            return Err(Error::Training {
                step,
                reason: "non-finite objective or gradient".into(),
            });
        }
        trace.push(value);

        let mut params: Vec<&mut [f64]> = vae.decoder.blocks_mut().into_iter().collect();
        let mut gs: Vec<&[f64]> = grads.decoder.blocks().into_iter().collect();
        if let (Some(e), Some(ge)) = (vae.encoder.as_mut(), grads.encoder.as_ref()) {
            params.extend(e.blocks_mut());
            gs.extend(ge.blocks());
        }
        if n_tp > 0 {
            params.push(&mut tparams[..]);
            gs.push(&grads.target);
        }
        adam.step(&mut params, &gs).map_err(|e| Error::Training {
            step,
            reason: e.to_string(),
        })?;
        if n_tp > 0 {
            target.set_params(&tparams)?;
        }
    }
    Ok(TrainOutcome { vae, trace })
}

/// One row of a latent-dimension sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub dim: usize,
    pub estimate: ElboEstimate,
    pub outcome: TrainOutcome,
    /// Target after training (differs from the input only when its
    /// parameters are learned).
    pub target: TargetModel,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Index into `rows` of the largest bound; ties go to the smallest `D`.
    pub best: usize,
}

/// Seed used for the sweep entry with latent dimension `dim`.
pub fn sweep_seed(seed: u64, dim: usize) -> u64 {
    rng::derive_seed(seed, &[label::SWEEP, dim as u64])
}

/// Trains one model per latent dimension and reports every hard bound.
pub fn sweep_d(target: &TargetModel, dims: &[usize], cfg: &TrainConfig) -> Result<SweepResult> {
    sweep_d_with(target, dims, cfg, None)
}

/// [`sweep_d`] with every decoder starting from the given output bias
/// (initial fields for spin targets).
pub fn sweep_d_with(
    target: &TargetModel,
    dims: &[usize],
    cfg: &TrainConfig,
    decoder_bias: Option<&[f64]>,
) -> Result<SweepResult> {
    if dims.is_empty() {
        return Err(Error::Config("D_set must not be empty".into()));
    }
    let mut rows = Vec::with_capacity(dims.len());
    for &dim in dims {
        let mut run_cfg = cfg.clone();
        run_cfg.seed = sweep_seed(cfg.seed, dim);
        let mut t = target.clone();
        let mut vae = Vae::new(&t, LatentSpec::new(dim), run_cfg.hidden, &run_cfg.relax, run_cfg.seed);
        if let Some(bias) = decoder_bias {
            vae.set_decoder_bias(bias)?;
        }
        let outcome = train_from(&mut t, vae, &run_cfg)?;
        let estimate = estimate_ln_z(&t, &outcome.vae, cfg.eval_samples, run_cfg.seed)?;
        rows.push(SweepRow {
            dim,
            estimate,
            outcome,
            target: t,
        });
    }
    let best = best_row(&rows);
    Ok(SweepResult { rows, best })
}

fn best_row(rows: &[SweepRow]) -> usize {
    let mut best = 0;
    for (k, row) in rows.iter().enumerate() {
        let b = &rows[best];
        if row.estimate.mean > b.estimate.mean || (row.estimate.mean == b.estimate.mean && row.dim < b.dim) {
            best = k;
        }
    }
    best
}

/// Constant product distribution fitted by the same training loop with `D = 0`.
#[derive(Debug, Clone)]
pub struct MeanFieldResult {
    pub fields: Vec<f64>,
    pub estimate: ElboEstimate,
    pub outcome: TrainOutcome,
}

pub fn mean_field(target: &mut TargetModel, cfg: &TrainConfig) -> Result<MeanFieldResult> {
    if target.domain() != Domain::Spin {
        return Err(Error::Config("mean-field fields are defined for spin targets only".into()));
    }
    let outcome = train(target, LatentSpec::new(0), cfg)?;
    let fields = outcome.vae.fields(&[])?;
    let estimate = estimate_ln_z(target, &outcome.vae, cfg.eval_samples, cfg.seed)?;
    Ok(MeanFieldResult {
        fields,
        estimate,
        outcome,
    })
}
