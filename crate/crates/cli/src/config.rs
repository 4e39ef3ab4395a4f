//! Experiment configuration (JSON, unknown keys rejected).

use std::fs;
use std::path::{Path, PathBuf};

use partivae::diffcore::AdamConfig;
use partivae::oracles::{McmcConfig, RankProposal};
use partivae::relax::RelaxConfig;
use partivae::targets::parse_labels;
use partivae::{Domain, Graph, IsingTarget, RankTarget, SbmTarget, TargetModel, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Largest accepted latent dimension.
pub const MAX_LATENT_DIM: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub target: TargetSpec,
    /// Latent dimension for `train`; also the one-element sweep.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent_dim: Option<usize>,
    /// Latent dimensions for `sweep`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_set: Option<Vec<usize>>,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mcmc: Option<McmcSection>,
    /// Model file read by `sample` and `estimate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    /// Number of configurations written by `sample`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    Ising {
        side: usize,
        beta: f64,
    },
    Sbm {
        /// Edge list file; exclusive with `planted`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        graph: Option<PathBuf>,
        /// Node count for `graph` (default: largest index + 1).
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        planted: Option<PlantedSpec>,
        omega_in: f64,
        omega_out: f64,
    },
    Ranking {
        /// Comparison file; exclusive with `synthetic`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        comparisons: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        synthetic: Option<SyntheticSpec>,
        w: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedSpec {
    pub n: usize,
    pub p_in: f64,
    pub p_out: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n: usize,
    pub m: usize,
    #[serde(default)]
    pub seed: u64,
}

/// Training settings; the seed comes from the top level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub batch_size: usize,
    pub n_steps: usize,
    pub hidden: usize,
    pub eval_samples: usize,
    pub learn_target_params: bool,
    pub relax: RelaxConfig,
    pub adam: AdamConfig,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            batch_size: t.batch_size,
            n_steps: t.n_steps,
            hidden: t.hidden,
            eval_samples: t.eval_samples,
            learn_target_params: t.learn_target_params,
            relax: t.relax,
            adam: t.adam,
        }
    }
}

/// Starting fields `scale · label_i` read from a 0/1 label file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    pub labels: PathBuf,
    #[serde(default = "default_init_scale")]
    pub scale: f64,
}

fn default_init_scale() -> f64 {
    3.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McmcSection {
    pub n_sweeps: usize,
    /// Default: 10% of `n_sweeps`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
    /// Proposals between recorded samples. Default: one sweep.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thin: Option<usize>,
    #[serde(default = "default_proposal")]
    pub proposal: RankProposal,
}

fn default_proposal() -> RankProposal {
    RankProposal::RandomTransposition
}

/// A parsed configuration plus the directory its relative paths refer to.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub base_dir: PathBuf,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn check_prob(name: &str, p: f64) -> CliResult<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(config_err(format!("{name} = {p} must lie strictly inside (0, 1)")))
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str, source: &Path) -> CliResult<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| config_err(format!("{}: {e}", source.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Range checks that do not need the dataset files.
    pub fn validate(&self) -> CliResult<()> {
        match &self.target {
            TargetSpec::Ising { side, beta } => {
                if *side < 3 {
                    return Err(config_err(format!("target.side = {side} must be at least 3")));
                }
                if !(beta.is_finite() && *beta >= 0.0) {
                    return Err(config_err(format!("target.beta = {beta} must be finite and non-negative")));
                }
            }
            TargetSpec::Sbm {
                graph,
                planted,
                omega_in,
                omega_out,
                n,
            } => {
                check_prob("target.omega_in", *omega_in)?;
                check_prob("target.omega_out", *omega_out)?;
                match (graph, planted) {
                    (Some(_), None) => {}
                    (None, Some(p)) => {
                        if n.is_some() {
                            return Err(config_err("target.n applies to a graph file, not to planted"));
                        }
                        if p.n < 2 {
                            return Err(config_err("target.planted.n must be at least 2"));
                        }
                        check_prob("target.planted.p_in", p.p_in)?;
                        check_prob("target.planted.p_out", p.p_out)?;
                    }
                    _ => return Err(config_err("target needs exactly one of graph, planted")),
                }
            }
            TargetSpec::Ranking {
                comparisons,
                synthetic,
                w,
                n,
            } => {
                check_prob("target.w", *w)?;
                match (comparisons, synthetic) {
                    (Some(_), None) => {}
                    (None, Some(s)) => {
                        if n.is_some() {
                            return Err(config_err("target.n applies to a comparison file, not to synthetic"));
                        }
                        if s.n < 2 {
                            return Err(config_err("target.synthetic.n must be at least 2"));
                        }
                    }
                    _ => return Err(config_err("target needs exactly one of comparisons, synthetic")),
                }
            }
        }
        for &d in self.latent_dim.iter().chain(self.d_set.iter().flatten()) {
            if d > MAX_LATENT_DIM {
                return Err(config_err(format!("latent dimension {d} exceeds {MAX_LATENT_DIM}")));
            }
        }
        if matches!(&self.d_set, Some(v) if v.is_empty()) {
            return Err(config_err("d_set must not be empty"));
        }
        if self.train.eval_samples < 2 {
            return Err(config_err("train.eval_samples must be at least 2"));
        }
        self.train_config().validate()?;
        if let Some(init) = &self.init {
            if !init.scale.is_finite() {
                return Err(config_err("init.scale must be finite"));
            }
            if matches!(self.target, TargetSpec::Ranking { .. }) {
                return Err(config_err("init.labels applies to spin targets only"));
            }
        }
        if let Some(m) = &self.mcmc {
            self.mcmc_config(m, 1).validate()?;
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            batch_size: t.batch_size,
            n_steps: t.n_steps,
            hidden: t.hidden,
            seed: self.seed,
            eval_samples: t.eval_samples,
            learn_target_params: t.learn_target_params,
            relax: t.relax,
            adam: t.adam,
        }
    }

    pub fn mcmc_config(&self, m: &McmcSection, n_vars: usize) -> McmcConfig {
        let mut c = McmcConfig::new(m.n_sweeps, n_vars, partivae::rng::derive_seed(self.seed, &[partivae::rng::label::MCMC]));
        if let Some(b) = m.burn_in {
            c.burn_in = b;
        }
        if let Some(t) = m.thin {
            c.thin = t;
        }
        c.proposal = m.proposal;
        c
    }
}

impl LoadedConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::data(path, e))?;
        let config = ExperimentConfig::parse(&text, path)?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { config, base_dir })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn read(&self, p: &Path) -> CliResult<(PathBuf, String)> {
        let full = self.resolve(p);
        let text = fs::read_to_string(&full).map_err(|e| CliError::data(&full, e))?;
        Ok((full, text))
    }

    /// Builds the target, reading any dataset files.
    pub fn target(&self) -> CliResult<TargetModel> {
        let data_err = |full: &Path, e: partivae::Error| match e {
            partivae::Error::Parse { line, message, .. } => CliError::data(full, format!("line {line}: {message}")),
            other => CliError::data(full, other),
        };
        Ok(match &self.config.target {
            TargetSpec::Ising { side, beta } => TargetModel::Ising(IsingTarget::new(*side, *beta)?),
            TargetSpec::Sbm {
                graph,
                n,
                planted,
                omega_in,
                omega_out,
            } => {
                let g = match (graph, planted) {
                    (Some(p), _) => {
                        let (full, text) = self.read(p)?;
                        Graph::parse(&text, &full.display().to_string(), *n).map_err(|e| data_err(&full, e))?
                    }
                    (None, Some(p)) => Graph::planted(p.n, p.p_in, p.p_out, p.seed)?.0,
                    (None, None) => unreachable!("validated"),
                };
                TargetModel::Sbm(SbmTarget::new(g, *omega_in, *omega_out)?)
            }
            TargetSpec::Ranking {
                comparisons,
                n,
                synthetic,
                w,
            } => {
                let (n, comps) = match (comparisons, synthetic) {
                    (Some(p), _) => {
                        let (full, text) = self.read(p)?;
                        let comps = RankTarget::parse_comparisons(&text, &full.display().to_string())
                            .map_err(|e| data_err(&full, e))?;
                        let inferred = comps.iter().map(|&(i, j)| i.max(j) + 1).max().unwrap_or(0);
                        let n = n.unwrap_or(inferred);
                        if n < inferred {
                            return Err(CliError::data(
                                &full,
                                format!("object index {} out of range for n = {n}", inferred - 1),
                            ));
                        }
                        (n, comps)
                    }
                    (None, Some(s)) => (s.n, RankTarget::synthetic(s.n, s.m, *w, s.seed)?.0),
                    (None, None) => unreachable!("validated"),
                };
                TargetModel::Rank(RankTarget::new(n, comps, *w)?)
            }
        })
    }

    /// Initial decoder fields from `init.labels`, if configured.
    pub fn initial_fields(&self, target: &TargetModel) -> CliResult<Option<Vec<f64>>> {
        let Some(init) = &self.config.init else {
            return Ok(None);
        };
        if target.domain() != Domain::Spin {
            return Err(config_err("init.labels applies to spin targets only"));
        }
        let (full, text) = self.read(&init.labels)?;
        let labels = parse_labels(&text, &full.display().to_string()).map_err(|e| match e {
            partivae::Error::Parse { line, message, .. } => CliError::data(&full, format!("line {line}: {message}")),
            other => CliError::data(&full, other),
        })?;
        if labels.len() != target.n_vars() {
            return Err(CliError::data(
                &full,
                format!("{} labels for {} variables", labels.len(), target.n_vars()),
            ));
        }
        Ok(Some(labels.iter().map(|&l| init.scale * l as f64).collect()))
    }

    pub fn out_dir(&self, flag: Option<&Path>) -> CliResult<PathBuf> {
        match (flag, &self.config.out) {
            (Some(p), _) => Ok(p.to_path_buf()),
            (None, Some(p)) => Ok(self.resolve(p)),
            (None, None) => Err(CliError::Usage("no output directory: pass --out or set \"out\"".into())),
        }
    }
}
