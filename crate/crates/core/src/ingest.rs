//! Model manifests: loading, validation, and derivation from architecture
//! hyperparameters.
//!
//! A manifest is a JSON file describing one model — precision, architecture
//! scalars, the named parameter operators, and the accounted element totals.
//! [`load_manifest`] parses and cross-checks one into a [`ModelProfile`];
//! [`derive_profile`] builds the same thing from standard decoder
//! hyperparameters when no manifest exists; [`choose_chunk_size`] picks the
//! pool chunk size with the least padding waste.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ChunkConfig, ModelProfile, OperatorKind, OperatorRecord, PrecisionSpec};

/// Chunk-size candidates tried by default: powers of two from 1 Mi to 128 Mi
/// elements.
pub fn default_chunk_candidates() -> Vec<u64> {
    (20..=27).map(|p| 1u64 << p).collect()
}

/// Decoder hyperparameters sufficient to reconstruct the parameter layout.
///
/// `num_embeddings` counts the embedding tables feeding the first layer
/// (token embeddings plus any learned position table); each is modeled at
/// `vocab_size * hidden_size` elements. `ffn_multiplier` is the MLP expansion
/// factor. The byte widths override the mixed-precision defaults and feed the
/// output head's parameter bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureSpec {
    pub vocab_size: u64,
    pub hidden_size: u64,
    pub num_layers: u64,
    pub num_embeddings: u64,
    #[serde(default = "default_heads")]
    pub num_attention_heads: u64,
    #[serde(default = "default_ffn_multiplier")]
    pub ffn_multiplier: u64,
    #[serde(default)]
    pub tie_lm_head: bool,
    #[serde(default = "default_half_bytes")]
    pub half_bytes: u64,
    #[serde(default = "default_full_bytes")]
    pub full_bytes: u64,
    #[serde(default)]
    pub lm_head_bytes: Option<u64>,
}

fn default_heads() -> u64 {
    1
}

fn default_ffn_multiplier() -> u64 {
    4
}

fn default_half_bytes() -> u64 {
    2
}

fn default_full_bytes() -> u64 {
    4
}

impl ArchitectureSpec {
    pub fn validate(&self) -> Result<()> {
        for (field, value) in [
            ("vocab_size", self.vocab_size),
            ("hidden_size", self.hidden_size),
            ("num_layers", self.num_layers),
            ("num_embeddings", self.num_embeddings),
            ("num_attention_heads", self.num_attention_heads),
            ("ffn_multiplier", self.ffn_multiplier),
        ] {
            if value == 0 {
                return Err(Error::invalid(field, "must be at least 1"));
            }
        }
        if !self.hidden_size.is_multiple_of(self.num_attention_heads) {
            return Err(Error::invalid(
                "hidden_size",
                format!(
                    "{} is not divisible by num_attention_heads ({})",
                    self.hidden_size, self.num_attention_heads
                ),
            ));
        }
        Ok(())
    }

    /// The byte widths as a [`PrecisionSpec`]; `lm_head_bytes` defaults to
    /// the half width.
    pub fn precision(&self) -> PrecisionSpec {
        PrecisionSpec {
            half_bytes: self.half_bytes,
            full_bytes: self.full_bytes,
            lm_head_bytes: self.lm_head_bytes.unwrap_or(self.half_bytes),
        }
    }
}

/// Builds a [`ModelProfile`] from decoder hyperparameters.
///
/// Counting rules:
///
/// * each embedding table holds `vocab_size * hidden_size` elements;
/// * each layer holds four `hidden^2` attention projections and two
///   `ffn_multiplier * hidden^2` MLP projections, all linear;
/// * per-layer biases and layernorms (and the final layernorm) are emitted
///   as records for transparency but excluded from the accounted totals —
///   their memory lives in allocator slack;
/// * the output head is `vocab_size * hidden_size` elements priced at the
///   half width; when `tie_lm_head` is set it shares storage with the token
///   embedding, which the profile records as a flag while still charging the
///   head's bytes (the estimate is dominated by the logits either way).
pub fn derive_profile(arch: &ArchitectureSpec, name: &str) -> Result<ModelProfile> {
    arch.validate()?;
    let h = arch.hidden_size;
    let per_embedding = arch.vocab_size * h;
    let mut operators = Vec::new();
    for i in 0..arch.num_embeddings {
        let name = match i {
            0 => "embed_tokens".to_string(),
            1 => "embed_positions".to_string(),
            n => format!("embed_{n}"),
        };
        operators.push(OperatorRecord::new(name, OperatorKind::Embedding, per_embedding));
    }
    let ffn_width = arch.ffn_multiplier * h;
    for layer in 0..arch.num_layers {
        for proj in ["q_proj", "k_proj", "v_proj", "out_proj"] {
            operators.push(OperatorRecord::new(
                format!("layers.{layer}.self_attn.{proj}"),
                OperatorKind::Linear,
                h * h,
            ));
        }
        operators.push(OperatorRecord::new(
            format!("layers.{layer}.mlp.fc1"),
            OperatorKind::Linear,
            h * ffn_width,
        ));
        operators.push(OperatorRecord::new(
            format!("layers.{layer}.mlp.fc2"),
            OperatorKind::Linear,
            ffn_width * h,
        ));
        // Attention (4h), fc1 (ffn*h), and fc2 (h) biases, lumped per layer.
        operators.push(OperatorRecord::new(
            format!("layers.{layer}.biases"),
            OperatorKind::Bias,
            4 * h + ffn_width + h,
        ));
        for norm in ["self_attn_layer_norm", "final_layer_norm"] {
            operators.push(OperatorRecord::new(
                format!("layers.{layer}.{norm}"),
                OperatorKind::LayerNorm,
                2 * h,
            ));
        }
    }
    operators.push(OperatorRecord::new(
        "final_layer_norm",
        OperatorKind::LayerNorm,
        2 * h,
    ));

    let embed_params = arch.num_embeddings * per_embedding;
    let other_params = arch.num_layers * (4 * h * h + 2 * arch.ffn_multiplier * h * h);
    let profile = ModelProfile {
        name: name.to_string(),
        operators,
        dict_size: arch.vocab_size,
        hidden_size: h,
        layer_count: arch.num_layers,
        embedding_count: arch.num_embeddings,
        embed_params,
        other_params,
        lm_head_param_bytes: per_embedding * arch.half_bytes,
        lm_head_tied: arch.tie_lm_head,
    };
    profile.validate()?;
    Ok(profile)
}

/// Picks the chunk size with the least padding waste.
///
/// Waste is `ceil(other_params / size) * size - other_params`. A candidate
/// must be at least as large as the largest chunked (linear) operator, since
/// a chunk has to hold any single operator whole. Ties go to the smaller
/// size. Errors if no candidate clears the largest operator.
pub fn choose_chunk_size(model: &ModelProfile, candidates: &[u64]) -> Result<ChunkConfig> {
    let required = model.largest_chunked_operator();
    let mut best: Option<(u64, u64)> = None; // (waste, size)
    for &size in candidates {
        if size == 0 || size < required {
            continue;
        }
        let waste = model.other_params.div_ceil(size) * size - model.other_params;
        let better = match best {
            None => true,
            Some((best_waste, best_size)) => {
                waste < best_waste || (waste == best_waste && size < best_size)
            }
        };
        if better {
            best = Some((waste, size));
        }
    }
    match best {
        Some((_, size)) => ChunkConfig::new(size),
        None => Err(Error::NoFeasibleChunkSize { required }),
    }
}

/// Per-model precision block of the manifest file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestPrecision {
    pub half_bytes: u64,
    pub full_bytes: u64,
    #[serde(default)]
    pub lm_head_bytes: Option<u64>,
}

/// The manifest file: one model's description, as stored on disk.
///
/// `embed_p` and `other_p` declare the accounted element totals and must
/// match the sum over embedding and linear operators; `lm_p_bytes` is the
/// output head's parameter storage in bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub name: String,
    #[serde(default)]
    pub precision: Option<ManifestPrecision>,
    pub architecture: ArchitectureSpec,
    pub operators: Vec<OperatorRecord>,
    pub embed_p: u64,
    pub other_p: u64,
    pub lm_p_bytes: u64,
}

impl Manifest {
    /// Parses and validates a manifest from a JSON string.
    pub fn from_json(json: &str, origin: &str) -> Result<Manifest> {
        let manifest: Manifest = serde_json::from_str(json).map_err(|e| Error::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        manifest.validate()?;
        Ok(manifest)
    }

    /// Reads, parses, and validates a manifest file.
    pub fn load(path: &Path) -> Result<Manifest> {
        let json = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Manifest::from_json(&json, &path.display().to_string())
    }

    /// Serializes back to the on-disk JSON form.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serialization cannot fail")
    }

    /// Cross-checks the declared totals and scalars.
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::invalid("name", "must not be empty"));
        }
        self.architecture.validate()?;
        self.precision().validate()?;
        let accounted: u64 = self
            .operators
            .iter()
            .filter(|op| op.kind.is_accounted())
            .map(|op| op.param_count)
            .sum();
        if self.embed_p + self.other_p != accounted {
            return Err(Error::invalid(
                "embed_p/other_p",
                format!(
                    "declared element total {} does not match the embedding+linear \
                     operator sum {accounted}",
                    self.embed_p + self.other_p
                ),
            ));
        }
        Ok(())
    }

    /// The effective precision: the explicit block when present, otherwise
    /// the architecture's byte widths.
    pub fn precision(&self) -> PrecisionSpec {
        match self.precision {
            Some(p) => PrecisionSpec {
                half_bytes: p.half_bytes,
                full_bytes: p.full_bytes,
                lm_head_bytes: p.lm_head_bytes.unwrap_or(p.half_bytes),
            },
            None => self.architecture.precision(),
        }
    }

    /// The validated model profile this manifest describes.
    pub fn profile(&self) -> ModelProfile {
        ModelProfile {
            name: self.name.clone(),
            operators: self.operators.clone(),
            dict_size: self.architecture.vocab_size,
            hidden_size: self.architecture.hidden_size,
            layer_count: self.architecture.num_layers,
            embedding_count: self.architecture.num_embeddings,
            embed_params: self.embed_p,
            other_params: self.other_p,
            lm_head_param_bytes: self.lm_p_bytes,
            lm_head_tied: self.architecture.tie_lm_head,
        }
    }

    /// Derives a complete manifest from architecture hyperparameters: the
    /// operator list and totals come from [`derive_profile`], while the
    /// architecture block is kept verbatim.
    pub fn from_derivation(arch: &ArchitectureSpec, name: &str) -> Result<Manifest> {
        let profile = derive_profile(arch, name)?;
        let prec = arch.precision();
        Ok(Manifest {
            name: name.to_string(),
            precision: Some(ManifestPrecision {
                half_bytes: prec.half_bytes,
                full_bytes: prec.full_bytes,
                lm_head_bytes: Some(prec.lm_head_bytes),
            }),
            architecture: *arch,
            operators: profile.operators,
            embed_p: profile.embed_params,
            other_p: profile.other_params,
            lm_p_bytes: profile.lm_head_param_bytes,
        })
    }

    /// Rebuilds the on-disk form from a profile and precision (the inverse
    /// of [`Manifest::profile`]).
    pub fn from_profile(profile: &ModelProfile, prec: &PrecisionSpec) -> Manifest {
        Manifest {
            name: profile.name.clone(),
            precision: Some(ManifestPrecision {
                half_bytes: prec.half_bytes,
                full_bytes: prec.full_bytes,
                lm_head_bytes: Some(prec.lm_head_bytes),
            }),
            architecture: ArchitectureSpec {
                vocab_size: profile.dict_size,
                hidden_size: profile.hidden_size,
                num_layers: profile.layer_count,
                num_embeddings: profile.embedding_count,
                num_attention_heads: 1,
                ffn_multiplier: 4,
                tie_lm_head: profile.lm_head_tied,
                half_bytes: prec.half_bytes,
                full_bytes: prec.full_bytes,
                lm_head_bytes: Some(prec.lm_head_bytes),
            },
            operators: profile.operators.clone(),
            embed_p: profile.embed_params,
            other_p: profile.other_params,
            lm_p_bytes: profile.lm_head_param_bytes,
        }
    }
}

/// Loads a manifest file into a validated [`ModelProfile`].
pub fn load_manifest(path: &Path) -> Result<ModelProfile> {
    Ok(Manifest::load(path)?.profile())
}
