use rand::Rng;

use super::{ClassifierError, ModelConfig};
use crate::dataset::Label;
use crate::featurizer::FeatureMatrix;
use crate::nn::{
    encoder_layer, layer_norm, linear, positional_encoding, AttentionParams, EncoderParams, Graph,
    Real, Tensor, Var,
};
use crate::rng::child_rng;

const LAYER_PARAM_NAMES: [&str; 16] = [
    "ln1.gain", "ln1.bias", "attn.wq", "attn.bq", "attn.wk", "attn.bk", "attn.wv", "attn.bv",
    "attn.wo", "attn.bo", "ln2.gain", "ln2.bias", "ffn.w1", "ffn.b1", "ffn.w2", "ffn.b2",
];

/// Kind of initialization a parameter receives.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Init {
    /// `U(-1/√fan_in, 1/√fan_in)`
    Uniform { fan_in: usize },
    Ones,
    Zeros,
}

/// Name, shape and initializer of every parameter in declaration order.
pub fn parameter_layout(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    layout_with_init(cfg)
        .into_iter()
        .map(|(n, s, _)| (n, s))
        .collect()
}

fn layout_with_init(cfg: &ModelConfig) -> Vec<(String, Vec<usize>, Init)> {
    let d = cfg.embed_dim;
    let h = cfg.ffn_hidden;
    let mut out = vec![
        ("input.weight".to_string(), vec![cfg.input_dim, d], Init::Uniform { fan_in: cfg.input_dim }),
        ("input.bias".to_string(), vec![d], Init::Uniform { fan_in: cfg.input_dim }),
    ];
    if cfg.input_layernorm {
        out.push(("input_norm.gain".into(), vec![d], Init::Ones));
        out.push(("input_norm.bias".into(), vec![d], Init::Zeros));
    }
    for l in 0..cfg.n_layers {
        for name in LAYER_PARAM_NAMES {
            let (shape, init) = match name {
                "ln1.gain" | "ln2.gain" => (vec![d], Init::Ones),
                "ln1.bias" | "ln2.bias" => (vec![d], Init::Zeros),
                "ffn.w1" => (vec![d, h], Init::Uniform { fan_in: d }),
                "ffn.b1" => (vec![h], Init::Uniform { fan_in: d }),
                "ffn.w2" => (vec![h, d], Init::Uniform { fan_in: h }),
                "ffn.b2" => (vec![d], Init::Uniform { fan_in: h }),
                n if n.starts_with("attn.w") => (vec![d, d], Init::Uniform { fan_in: d }),
                _ => (vec![d], Init::Uniform { fan_in: d }),
            };
            out.push((format!("layers.{l}.{name}"), shape, init));
        }
    }
    out.push(("output.weight".into(), vec![d, cfg.out_dim], Init::Zeros));
    out.push(("output.bias".into(), vec![cfg.out_dim], Init::Zeros));
    out
}

/// Input projection → optional input layer norm → positional encoding →
/// pre-norm encoder layers → mean pool → linear → sigmoid.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    config: ModelConfig,
    params: Vec<Tensor<T>>,
    pe: Tensor<T>,
}

impl<T: Real> Model<T> {
    /// Seeded initialization; the output layer starts at zero, so every
    /// input maps to probability 0.5 before training.
    pub fn new(config: ModelConfig) -> Result<Self, ClassifierError> {
        config.validate()?;
        let mut rng = child_rng(config.seed, "init");
        let params = layout_with_init(&config)
            .into_iter()
            .map(|(_, shape, init)| match init {
                Init::Ones => Tensor::filled(&shape, T::one()),
                Init::Zeros => Tensor::zeros(&shape),
                Init::Uniform { fan_in } => {
                    let bound = 1.0 / (fan_in as f64).sqrt();
                    Tensor::from_fn(&shape, |_| T::lit(rng.gen_range(-bound..bound)))
                }
            })
            .collect();
        Self::from_parameters(config, params)
    }

    pub fn from_parameters(config: ModelConfig, params: Vec<Tensor<T>>) -> Result<Self, ClassifierError> {
        config.validate()?;
        let layout = parameter_layout(&config);
        if layout.len() != params.len()
            || layout.iter().zip(&params).any(|((_, s), p)| s.as_slice() != p.shape())
        {
            return Err(ClassifierError::InvalidConfig(
                "parameter tensors do not match the configured layout".into(),
            ));
        }
        let pe = positional_encoding(config.seq_len, config.embed_dim)?;
        Ok(Self { config, params, pe })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn parameters(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub(crate) fn parameters_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(Tensor::all_finite)
    }

    /// Converts a feature matrix into this model's input tensor.
    pub fn input_tensor(&self, fm: &FeatureMatrix) -> Result<Tensor<T>, ClassifierError> {
        if fm.rows() != self.config.seq_len || fm.cols() != self.config.input_dim {
            return Err(ClassifierError::ShapeMismatch {
                expected: (self.config.seq_len, self.config.input_dim),
                found: (fm.rows(), fm.cols()),
            });
        }
        Ok(Tensor::new(
            &[fm.rows(), fm.cols()],
            fm.values().iter().map(|&v| T::lit(v as f64)).collect(),
        )?)
    }

    /// Records the forward pass on `g`. With `trainable`, parameters become
    /// gradient-carrying leaves (returned in declaration order).
    pub fn forward(
        &self,
        g: &mut Graph<T>,
        input: Tensor<T>,
        valid_rows: usize,
        trainable: bool,
    ) -> Result<(Var, Vec<Var>), ClassifierError> {
        let cfg = &self.config;
        let vars: Vec<Var> = self
            .params
            .iter()
            .map(|p| if trainable { g.param(p.clone()) } else { g.input(p.clone()) })
            .collect();
        let mut it = vars.iter().copied();
        let mut next = || it.next().expect("layout covers every parameter");

        let valid = valid_rows.clamp(1, cfg.seq_len);
        let mask: Option<Vec<bool>> = cfg
            .pad_mask
            .then(|| (0..cfg.seq_len).map(|i| i < valid).collect());

        let x = g.input(input);
        let (w_in, b_in) = (next(), next());
        let mut h = linear(g, x, w_in, b_in)?;
        if cfg.input_layernorm {
            let (gain, bias) = (next(), next());
            h = layer_norm(g, h, gain, bias)?;
        }
        h = g.add_const(h, &self.pe)?;
        for _ in 0..cfg.n_layers {
            let p = EncoderParams {
                ln1_gain: next(),
                ln1_bias: next(),
                attn: AttentionParams {
                    wq: next(),
                    bq: next(),
                    wk: next(),
                    bk: next(),
                    wv: next(),
                    bv: next(),
                    wo: next(),
                    bo: next(),
                },
                ln2_gain: next(),
                ln2_bias: next(),
                ffn_w1: next(),
                ffn_b1: next(),
                ffn_w2: next(),
                ffn_b2: next(),
            };
            h = encoder_layer(g, h, &p, cfg.n_heads, mask.as_deref())?;
        }
        let pool_rows = if cfg.pad_mask { valid } else { cfg.seq_len };
        let pooled = g.mean_rows(h, pool_rows)?;
        let (w_out, b_out) = (next(), next());
        let logit = linear(g, pooled, w_out, b_out)?;
        let prob = g.sigmoid(logit);
        Ok((prob, vars))
    }

    /// Probability of class B for one sequence.
    pub fn predict_sequence(&self, fm: &FeatureMatrix) -> Result<f64, ClassifierError> {
        let input = self.input_tensor(fm)?;
        let mut g = Graph::new();
        let (p, _) = self.forward(&mut g, input, fm.valid_rows(), false)?;
        Ok(g.scalar(p).to_f64().unwrap_or(f64::NAN))
    }

    /// Mean probability over a user's sequences and the resulting class.
    pub fn predict_user(&self, recordings: &[&FeatureMatrix]) -> Result<(f64, Label), ClassifierError> {
        let probs = recordings
            .iter()
            .map(|fm| self.predict_sequence(fm))
            .collect::<Result<Vec<_>, _>>()?;
        user_decision(&probs)
    }
}

/// Class B exactly when the probability is at least 0.5.
pub fn sequence_class(prob: f64) -> Label {
    if prob >= 0.5 {
        Label::B
    } else {
        Label::A
    }
}

/// Averages per-sequence probabilities; class B iff the mean is ≥ 0.5.
pub fn user_decision(probs: &[f64]) -> Result<(f64, Label), ClassifierError> {
    if probs.is_empty() {
        return Err(ClassifierError::NoRecordings);
    }
    let score = probs.iter().sum::<f64>() / probs.len() as f64;
    Ok((score, sequence_class(score)))
}
