use serde::{Deserialize, Serialize};

use super::ClassifierError;
use crate::featurizer::{FEATURE_WIDTH, SEQ_LEN};

/// Architecture and training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub seq_len: usize,
    pub input_dim: usize,
    pub embed_dim: usize,
    pub ffn_hidden: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub out_dim: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub input_layernorm: bool,
    pub pad_mask: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl ModelConfig {
    /// Full-size model: 1024×21 input, width 24, FFN 128, 2 layers.
    pub fn paper() -> Self {
        Self {
            seq_len: SEQ_LEN,
            input_dim: FEATURE_WIDTH,
            embed_dim: 24,
            ffn_hidden: 128,
            n_layers: 2,
            n_heads: 4,
            out_dim: 1,
            lr: 0.00002,
            epochs: 100,
            batch_size: 32,
            seed: 0,
            input_layernorm: true,
            pad_mask: false,
        }
    }

    /// Small model that trains in seconds on a CPU.
    pub fn desk() -> Self {
        Self {
            seq_len: 128,
            embed_dim: 16,
            ffn_hidden: 64,
            n_layers: 1,
            n_heads: 2,
            lr: 0.001,
            epochs: 10,
            ..Self::paper()
        }
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        let bad = |m: String| Err(ClassifierError::InvalidConfig(m));
        for (name, v) in [
            ("seq_len", self.seq_len),
            ("input_dim", self.input_dim),
            ("embed_dim", self.embed_dim),
            ("ffn_hidden", self.ffn_hidden),
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("batch_size", self.batch_size),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if self.out_dim != 1 {
            return bad(format!("out_dim must be 1 (binary head), got {}", self.out_dim));
        }
        if self.embed_dim % self.n_heads != 0 {
            return bad(format!(
                "embed_dim {} is not divisible by n_heads {}",
                self.embed_dim, self.n_heads
            ));
        }
        if self.embed_dim % 2 != 0 {
            return bad(format!("embed_dim {} must be even", self.embed_dim));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad(format!("learning rate {} must be positive", self.lr));
        }
        Ok(())
    }

    /// Stable serialization used for hashing and checkpoint headers.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        crate::rng::sha256_hex(self.to_canonical_json().as_bytes())
    }
}
