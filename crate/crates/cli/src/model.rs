//! Model files.
//!
//! Layout:
//! 1. the 8 bytes `PVAEMDL1`;
//! 2. header length in bytes, little-endian `u64`;
//! 3. the header, canonical JSON (see [`ModelHeader`]);
//! 4. every block listed in the header, in order, as little-endian `f64`,
//!    matrices row-major.
//!
//! Blocks are `decoder.{w1,b1,w2,b2}`, then `encoder.{w1,b1,w2,b2}` when
//! the latent dimension is positive, then `target.params` (possibly empty).

use std::fs;
use std::path::Path;

use partivae::diffcore::{DenseMatrix, MlpParams};
use partivae::relax::RelaxConfig;
use partivae::{Domain, LatentSpec, TargetModel, Vae};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::record::to_canonical;

const MAGIC: &[u8; 8] = b"PVAEMDL1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockShape {
    pub name: String,
    /// `[rows, cols]` for matrices, `[len]` for vectors.
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelHeader {
    pub format_version: u32,
    /// `ising`, `sbm` or `ranking`.
    pub target_kind: String,
    pub n_vars: usize,
    pub latent_dim: usize,
    pub hidden: usize,
    pub relax: RelaxConfig,
    pub blocks: Vec<BlockShape>,
}

/// Trained networks plus the target parameters they were trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel {
    pub header: ModelHeader,
    pub decoder: MlpParams,
    pub encoder: Option<MlpParams>,
    pub target_params: Vec<f64>,
}

pub fn target_kind(t: &TargetModel) -> &'static str {
    match t {
        TargetModel::Ising(_) => "ising",
        TargetModel::Sbm(_) => "sbm",
        TargetModel::Rank(_) => "ranking",
    }
}

fn net_blocks(prefix: &str, p: &MlpParams) -> Vec<BlockShape> {
    let shape = |name: &str, shape: Vec<usize>| BlockShape {
        name: format!("{prefix}.{name}"),
        shape,
    };
    vec![
        shape("w1", vec![p.w1.rows(), p.w1.cols()]),
        shape("b1", vec![p.b1.len()]),
        shape("w2", vec![p.w2.rows(), p.w2.cols()]),
        shape("b2", vec![p.b2.len()]),
    ]
}

impl SavedModel {
    pub fn new(target: &TargetModel, vae: &Vae, relax: RelaxConfig) -> Self {
        let mut blocks = net_blocks("decoder", &vae.decoder);
        if let Some(e) = &vae.encoder {
            blocks.extend(net_blocks("encoder", e));
        }
        let target_params = target.params();
        blocks.push(BlockShape {
            name: "target.params".into(),
            shape: vec![target_params.len()],
        });
        Self {
            header: ModelHeader {
                format_version: 1,
                target_kind: target_kind(target).into(),
                n_vars: target.n_vars(),
                latent_dim: vae.latent().dim,
                hidden: vae.decoder.hidden_dim(),
                relax,
                blocks,
            },
            decoder: vae.decoder.clone(),
            encoder: vae.encoder.clone(),
            target_params,
        }
    }

    pub fn to_bytes(&self) -> CliResult<Vec<u8>> {
        let header = to_canonical(&self.header)?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        let mut push = |xs: &[f64]| {
            for x in xs {
                out.extend_from_slice(&x.to_le_bytes());
            }
        };
        for b in self.decoder.blocks() {
            push(b);
        }
        if let Some(e) = &self.encoder {
            for b in e.blocks() {
                push(b);
            }
        }
        push(&self.target_params);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> CliResult<Self> {
        let bad = |msg: &str| CliError::data(path, msg);
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("not a partivae model file"));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = bytes.get(16..).ok_or_else(|| bad("truncated header"))?;
        if body.len() < hlen {
            return Err(bad("truncated header"));
        }
        let header: ModelHeader =
            serde_json::from_slice(&body[..hlen]).map_err(|e| CliError::data(path, format!("header: {e}")))?;
        let data = &body[hlen..];
        let total: usize = header.blocks.iter().map(|b| b.shape.iter().product::<usize>()).sum();
        if data.len() != 8 * total {
            return Err(CliError::data(
                path,
                format!("expected {} data bytes, found {}", 8 * total, data.len()),
            ));
        }
        let mut values = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let mut blocks = Vec::with_capacity(header.blocks.len());
        for b in &header.blocks {
            let len = b.shape.iter().product();
            blocks.push((b, values.by_ref().take(len).collect::<Vec<f64>>()));
        }
        let expected_names: Vec<&str> = {
            let mut v = vec!["decoder.w1", "decoder.b1", "decoder.w2", "decoder.b2"];
            if header.latent_dim > 0 {
                v.extend(["encoder.w1", "encoder.b1", "encoder.w2", "encoder.b2"]);
            }
            v.push("target.params");
            v
        };
        let names: Vec<&str> = header.blocks.iter().map(|b| b.name.as_str()).collect();
        if names != expected_names {
            return Err(CliError::data(path, format!("unexpected block list {names:?}")));
        }
        let net = |k: usize| -> CliResult<MlpParams> {
            let mat = |(b, v): &(&BlockShape, Vec<f64>)| -> CliResult<DenseMatrix> {
                if b.shape.len() != 2 {
                    return Err(CliError::data(path, format!("{} must be a matrix", b.name)));
                }
                DenseMatrix::from_vec(b.shape[0], b.shape[1], v.clone()).map_err(|e| CliError::data(path, e))
            };
            MlpParams::from_parts(mat(&blocks[k])?, blocks[k + 1].1.clone(), mat(&blocks[k + 2])?, blocks[k + 3].1.clone())
                .map_err(|e| CliError::data(path, e))
        };
        let decoder = net(0)?;
        let encoder = if header.latent_dim > 0 { Some(net(4)?) } else { None };
        let target_params = blocks.last().unwrap().1.clone();
        if !target_params.iter().all(|v| v.is_finite()) {
            return Err(bad("non-finite target parameter"));
        }
        Ok(Self {
            header,
            decoder,
            encoder,
            target_params,
        })
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| CliError::data(path, e))
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let bytes = fs::read(path).map_err(|e| CliError::data(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    /// Rebuilds the networks for `target`, checking that the model was
    /// trained on a target of the same kind and size, and applies the
    /// saved target parameters.
    pub fn into_vae(self, target: &mut TargetModel, path: &Path) -> CliResult<Vae> {
        let kind = target_kind(target);
        if self.header.target_kind != kind || self.header.n_vars != target.n_vars() {
            return Err(CliError::data(
                path,
                format!(
                    "model is for a {} target with {} variables, config describes {} with {}",
                    self.header.target_kind,
                    self.header.n_vars,
                    kind,
                    target.n_vars()
                ),
            ));
        }
        if self.target_params.len() != target.n_params() {
            return Err(CliError::data(path, "target parameter count does not match"));
        }
        target.set_params(&self.target_params)?;
        let expected_out = match target.domain() {
            Domain::Spin => target.n_vars(),
            Domain::Rank => 2 * target.n_vars(),
        };
        if self.decoder.out_dim() != expected_out {
            return Err(CliError::data(path, "decoder output size does not match the target"));
        }
        Vae::from_parts(
            target,
            LatentSpec::new(self.header.latent_dim),
            &self.header.relax,
            self.decoder,
            self.encoder,
        )
        .map_err(|e| CliError::data(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use partivae::IsingTarget;

    #[test]
    fn model_bytes_round_trip() {
        let t = TargetModel::Ising(IsingTarget::new(3, 0.4).unwrap());
        let mut vae = Vae::new(&t, LatentSpec::new(2), 5, &RelaxConfig::default(), 3);
        vae.set_decoder_bias(&[0.25; 9]).unwrap();
        let saved = SavedModel::new(&t, &vae, RelaxConfig::default());
        let bytes = saved.to_bytes().unwrap();
        let back = SavedModel::from_bytes(&bytes, Path::new("m.bin")).unwrap();
        assert_eq!(back, saved);
        let mut t2 = t.clone();
        assert_eq!(back.into_vae(&mut t2, Path::new("m.bin")).unwrap(), vae);
    }

    #[test]
    fn truncated_or_foreign_files_are_rejected() {
        let t = TargetModel::Ising(IsingTarget::new(3, 0.4).unwrap());
        let vae = Vae::new(&t, LatentSpec::new(0), 4, &RelaxConfig::default(), 3);
        let bytes = SavedModel::new(&t, &vae, RelaxConfig::default()).to_bytes().unwrap();
        assert!(SavedModel::from_bytes(&bytes[..bytes.len() - 8], Path::new("m")).is_err());
        assert!(SavedModel::from_bytes(b"not a model at all", Path::new("m")).is_err());
    }

    #[test]
    fn mismatched_target_is_rejected() {
        let t = TargetModel::Ising(IsingTarget::new(3, 0.4).unwrap());
        let vae = Vae::new(&t, LatentSpec::new(1), 4, &RelaxConfig::default(), 3);
        let saved = SavedModel::new(&t, &vae, RelaxConfig::default());
        let mut other = TargetModel::Ising(IsingTarget::new(4, 0.4).unwrap());
        assert!(matches!(
            saved.into_vae(&mut other, Path::new("m")),
            Err(CliError::Data { .. })
        ));
    }
}
