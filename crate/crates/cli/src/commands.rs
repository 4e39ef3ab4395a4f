use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use partivae::oracles::{enumerate_ln_z, ising_exact_ln_z, mcmc_ising, mcmc_rank, mcmc_sbm, onsager_ln_z_per_site};
use partivae::vaecore::{estimate_ln_z, sample_x, sweep_d_with};
use partivae::{Domain, TargetModel};
use serde_json::{json, Value};

use crate::config::LoadedConfig;
use crate::error::{CliError, CliResult};
use crate::model::{target_kind, SavedModel};
use crate::record::{canonical_json, DimEstimate, RunRecord, ARTIFACT_VERSION};

/// Command-line overrides shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub n: Option<usize>,
}

/// A loaded configuration with overrides applied and the output directory
/// created.
pub struct Run {
    pub loaded: LoadedConfig,
    pub out: PathBuf,
    pub overrides: Overrides,
}

impl Run {
    pub fn prepare(config_path: &Path, overrides: Overrides) -> CliResult<Self> {
        let mut loaded = LoadedConfig::load(config_path)?;
        if let Some(s) = overrides.seed {
            loaded.config.seed = s;
        }
        let out = loaded.out_dir(overrides.out.as_deref())?;
        fs::create_dir_all(&out).map_err(|e| CliError::data(&out, e))?;
        Ok(Self { loaded, out, overrides })
    }

    fn seed(&self) -> u64 {
        self.loaded.config.seed
    }

    fn write(&self, name: &str, contents: &str) -> CliResult<()> {
        let path = self.out.join(name);
        fs::write(&path, contents).map_err(|e| CliError::data(&path, e))
    }

    /// Configuration snapshot stored in records: defaults filled in, the
    /// output directory left out so that records do not depend on it.
    fn snapshot(&self) -> Value {
        let mut c = self.loaded.config.clone();
        c.out = None;
        serde_json::to_value(&c).expect("config serializes")
    }

    fn model_path(&self) -> CliResult<PathBuf> {
        match (&self.overrides.model, &self.loaded.config.model) {
            (Some(p), _) => Ok(p.clone()),
            (None, Some(p)) => Ok(self.loaded.resolve(p)),
            (None, None) => Err(CliError::Usage("no model: pass --model or set \"model\"".into())),
        }
    }

    fn write_timing(&self, start: Instant) -> CliResult<()> {
        self.write(
            "timing.json",
            &canonical_json(&json!({ "wall_clock_seconds": start.elapsed().as_secs_f64() })),
        )
    }
}

pub fn target_params(t: &TargetModel) -> BTreeMap<String, f64> {
    match t {
        TargetModel::Ising(_) => BTreeMap::new(),
        TargetModel::Sbm(s) => BTreeMap::from([
            ("omega_in".to_string(), s.omega_in()),
            ("omega_out".to_string(), s.omega_out()),
        ]),
        TargetModel::Rank(r) => BTreeMap::from([("w".to_string(), r.w())]),
    }
}

fn trace_csv(trace: &[f64]) -> String {
    let mut s = String::from("step,objective\n");
    for (k, v) in trace.iter().enumerate() {
        writeln!(s, "{k},{v}").unwrap();
    }
    s
}

fn configs_csv<T: std::fmt::Display>(n_vars: usize, rows: impl IntoIterator<Item = Vec<T>>) -> String {
    let mut s = (0..n_vars).map(|i| format!("x{i}")).collect::<Vec<_>>().join(",");
    s.push('\n');
    for row in rows {
        let line = row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
        s.push_str(&line);
        s.push('\n');
    }
    s
}

pub fn train(run: &Run) -> CliResult<()> {
    let c = &run.loaded.config;
    let dim = match (c.latent_dim, &c.d_set) {
        (Some(d), _) => d,
        (None, Some(v)) if v.len() == 1 => v[0],
        _ => return Err(CliError::Usage("train needs latent_dim (or a one-element d_set)".into())),
    };
    train_dims(run, &[dim], "train")
}

pub fn sweep(run: &Run) -> CliResult<()> {
    let c = &run.loaded.config;
    let dims = match (&c.d_set, c.latent_dim) {
        (Some(v), _) => v.clone(),
        (None, Some(d)) => vec![d],
        (None, None) => return Err(CliError::Usage("sweep needs d_set".into())),
    };
    train_dims(run, &dims, "sweep")
}

fn train_dims(run: &Run, dims: &[usize], command: &str) -> CliResult<()> {
    let start = Instant::now();
    let target = run.loaded.target()?;
    let fields = run.loaded.initial_fields(&target)?;
    let cfg = run.loaded.config.train_config();
    let result = sweep_d_with(&target, dims, &cfg, fields.as_deref())?;
    let best = &result.rows[result.best];

    let estimates: Vec<DimEstimate> = result
        .rows
        .iter()
        .map(|r| DimEstimate {
            latent_dim: r.dim,
            run_seed: partivae::vaecore::sweep_seed(cfg.seed, r.dim),
            estimate: r.estimate,
        })
        .collect();
    let record = RunRecord {
        artifact_version: ARTIFACT_VERSION.into(),
        command: command.into(),
        seed: cfg.seed,
        config: run.snapshot(),
        estimates: estimates.clone(),
        best_latent_dim: best.dim,
        target_params: target_params(&best.target),
        trace: best.outcome.trace.clone(),
    };
    run.write("record.json", &record.to_canonical()?)?;
    run.write("trace.csv", &trace_csv(&best.outcome.trace))?;
    SavedModel::new(&best.target, &best.outcome.vae, cfg.relax).write(&run.out.join("model.bin"))?;
    if command == "sweep" {
        let mut table = String::from("latent_dim,mean,stderr,n_samples,run_seed\n");
        for e in &estimates {
            writeln!(
                table,
                "{},{},{},{},{}",
                e.latent_dim, e.estimate.mean, e.estimate.stderr, e.estimate.n_samples, e.run_seed
            )
            .unwrap();
        }
        run.write("sweep.csv", &table)?;
    }
    run.write_timing(start)
}

fn load_model(run: &Run) -> CliResult<(TargetModel, partivae::Vae)> {
    let mut target = run.loaded.target()?;
    let path = run.model_path()?;
    let vae = SavedModel::read(&path)?.into_vae(&mut target, &path)?;
    Ok((target, vae))
}

pub fn sample(run: &Run) -> CliResult<()> {
    let n = run
        .overrides
        .n
        .or(run.loaded.config.n_samples)
        .ok_or_else(|| CliError::Usage("no sample count: pass --n or set \"n_samples\"".into()))?;
    let (target, vae) = load_model(run)?;
    let rows = sample_x(&vae, n, run.seed())?;
    run.write("samples.csv", &configs_csv(target.n_vars(), rows))
}

pub fn estimate(run: &Run) -> CliResult<()> {
    let start = Instant::now();
    let (target, vae) = load_model(run)?;
    let cfg = run.loaded.config.train_config();
    let est = estimate_ln_z(&target, &vae, cfg.eval_samples, run.seed())?;
    let record = RunRecord {
        artifact_version: ARTIFACT_VERSION.into(),
        command: "estimate".into(),
        seed: run.seed(),
        config: run.snapshot(),
        estimates: vec![DimEstimate {
            latent_dim: vae.latent().dim,
            run_seed: run.seed(),
            estimate: est,
        }],
        best_latent_dim: vae.latent().dim,
        target_params: target_params(&target),
        trace: Vec::new(),
    };
    run.write("record.json", &record.to_canonical()?)?;
    run.write_timing(start)
}

pub fn oracle(run: &Run) -> CliResult<()> {
    let target = run.loaded.target()?;
    let mut doc = serde_json::Map::new();
    doc.insert("target_kind".into(), json!(target_kind(&target)));
    doc.insert("n_vars".into(), json!(target.n_vars()));
    doc.insert("artifact_version".into(), json!(ARTIFACT_VERSION));
    let enumeration = match enumerate_ln_z(&target) {
        Ok(e) => Some(e),
        // the transfer-matrix value still exists for large Ising lattices
        Err(partivae::Error::Capacity(msg)) if matches!(target, TargetModel::Ising(_)) => {
            doc.insert("enumeration_skipped".into(), json!(msg));
            None
        }
        Err(e) => return Err(e.into()),
    };
    if let Some(e) = enumeration {
        let top: Vec<Value> = e
            .top_states
            .iter()
            .map(|(s, p)| json!({ "state": s, "probability": p }))
            .collect();
        let mut en = json!({ "ln_z": e.ln_z, "marginals": e.marginals, "top_states": top });
        if let Some(pos) = e.position {
            en["position"] = json!(pos);
        }
        doc.insert("enumeration".into(), en);
    }
    if let TargetModel::Ising(t) = &target {
        let tm = ising_exact_ln_z(t.side(), t.beta())?;
        doc.insert("transfer_matrix".into(), json!({ "ln_z": tm }));
        doc.insert(
            "onsager_ln_z_per_site".into(),
            json!(onsager_ln_z_per_site(t.beta())),
        );
    }
    run.write("oracle.json", &canonical_json(&Value::Object(doc)))
}

pub fn mcmc(run: &Run) -> CliResult<()> {
    let target = run.loaded.target()?;
    let section = run
        .loaded
        .config
        .mcmc
        .as_ref()
        .ok_or_else(|| CliError::Usage("mcmc needs an \"mcmc\" section".into()))?;
    let n = target.n_vars();
    let cfg = run.loaded.config.mcmc_config(section, n);
    let (samples, marginals) = match &target {
        TargetModel::Ising(t) => spin_outputs(mcmc_ising(t, &cfg)?, n),
        TargetModel::Sbm(t) => spin_outputs(mcmc_sbm(t, &cfg)?, n),
        TargetModel::Rank(t) => {
            let s = mcmc_rank(t, &cfg)?;
            let k = s.len().max(1) as f64;
            let mut hist = vec![vec![0.0; n]; n];
            for r in &s {
                for (i, &rank) in r.iter().enumerate() {
                    hist[i][rank - 1] += 1.0 / k;
                }
            }
            let mut m = String::from("object,mean_position\n");
            let mut p = String::from("object,rank,probability\n");
            for (i, row) in hist.iter().enumerate() {
                let mean: f64 = row.iter().enumerate().map(|(r, q)| (r + 1) as f64 * q).sum();
                writeln!(m, "{i},{mean}").unwrap();
                for (r, q) in row.iter().enumerate() {
                    writeln!(p, "{i},{},{q}", r + 1).unwrap();
                }
            }
            run.write("positions.csv", &p)?;
            (configs_csv(n, s), m)
        }
    };
    run.write("samples.csv", &samples)?;
    run.write("marginals.csv", &marginals)?;
    let summary = json!({
        "artifact_version": ARTIFACT_VERSION,
        "config": run.snapshot(),
        "mcmc": cfg,
        "n_recorded": samples.lines().count() - 1,
        "domain": if target.domain() == Domain::Spin { "spin" } else { "rank" },
    });
    run.write("mcmc.json", &canonical_json(&summary))
}

fn spin_outputs(samples: Vec<Vec<i8>>, n: usize) -> (String, String) {
    let k = samples.len().max(1) as f64;
    let mut means = vec![0.0; n];
    for s in &samples {
        for (m, &v) in means.iter_mut().zip(s) {
            *m += v as f64 / k;
        }
    }
    let mut m = String::from("site,mean\n");
    for (i, v) in means.iter().enumerate() {
        writeln!(m, "{i},{v}").unwrap();
    }
    (configs_csv(n, samples), m)
}
