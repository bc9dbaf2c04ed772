//! Compact transformer encoder classifier.
//!
//! Word/position/type embeddings feed a stack of encoder layers (multi-head
//! self-attention plus a GELU feed-forward block, each with residual and
//! layer norm); the first-token state goes through a tanh pooler and a
//! linear head producing one logit per traffic class. Forward and backward
//! passes are written out explicitly and are generic over f32/f64 so
//! training runs at f32 while gradient checks run at f64.

pub mod checkpoint;
pub mod math;
mod net;

use std::path::PathBuf;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use math::{s, Dense, LayerNorm, Scalar};
pub use net::{ForwardCaches, ForwardOutput};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("bad model config: {reason}")]
    BadConfig { reason: String },
    #[error("token id {id} out of range for vocabulary size {vocab}")]
    IdOutOfRange { id: u32, vocab: usize },
    #[error("sequence length {seq} exceeds maximum position embeddings {max}")]
    SequenceTooLong { seq: usize, max: usize },
    #[error("shape mismatch: {reason}")]
    ShapeMismatch { reason: String },
    #[error("checkpoint version {found} unsupported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {reason}")]
    CorruptCheckpoint { reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn default_vocab_size() -> usize {
    5000
}
fn default_hidden() -> usize {
    128
}
fn default_layers() -> usize {
    2
}
fn default_heads() -> usize {
    4
}
fn default_intermediate() -> usize {
    512
}
fn default_max_position() -> usize {
    512
}
fn default_type_vocab() -> usize {
    2
}
fn default_dropout() -> f64 {
    0.1
}
fn default_n_classes() -> usize {
    15
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default = "default_vocab_size")]
    pub vocab_size: usize,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_layers")]
    pub layers: usize,
    #[serde(default = "default_heads")]
    pub heads: usize,
    #[serde(default = "default_intermediate")]
    pub intermediate: usize,
    #[serde(default = "default_max_position")]
    pub max_position: usize,
    #[serde(default = "default_type_vocab")]
    pub type_vocab: usize,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    #[serde(default = "default_n_classes")]
    pub n_classes: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: default_vocab_size(),
            hidden: default_hidden(),
            layers: default_layers(),
            heads: default_heads(),
            intermediate: default_intermediate(),
            max_position: default_max_position(),
            type_vocab: default_type_vocab(),
            dropout: default_dropout(),
            n_classes: default_n_classes(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |reason: String| Err(ModelError::BadConfig { reason });
        if self.hidden == 0 || self.heads == 0 || self.hidden % self.heads != 0 {
            return bad(format!(
                "hidden {} must be a positive multiple of heads {}",
                self.hidden, self.heads
            ));
        }
        for (name, v) in [
            ("vocab_size", self.vocab_size),
            ("layers", self.layers),
            ("intermediate", self.intermediate),
            ("max_position", self.max_position),
            ("type_vocab", self.type_vocab),
            ("n_classes", self.n_classes),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }
}

/// Closed-form parameter count for a config:
/// embeddings `(V + P + T) * H + 2H`, per layer
/// `4(H^2 + H) + 2H + (HI + I) + (IH + H) + 2H`, pooler `H^2 + H`, and the
/// class head `HC + C`.
pub fn param_count_formula(c: &ModelConfig) -> usize {
    let (v, h, i, p, t, cls) = (
        c.vocab_size,
        c.hidden,
        c.intermediate,
        c.max_position,
        c.type_vocab,
        c.n_classes,
    );
    let emb = (v + p + t) * h + 2 * h;
    let layer = 4 * (h * h + h) + 2 * h + (h * i + i) + (i * h + h) + 2 * h;
    let pooler = h * h + h;
    let head = h * cls + cls;
    emb + c.layers * layer + pooler + head
}

/// Embedding tables plus their layer norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings<F> {
    pub word: Array2<F>,
    pub position: Array2<F>,
    pub token_type: Array2<F>,
    pub norm: LayerNorm<F>,
}

/// One encoder layer: self-attention projections and the feed-forward block.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer<F> {
    pub query: Dense<F>,
    pub key: Dense<F>,
    pub value: Dense<F>,
    pub output: Dense<F>,
    pub norm1: LayerNorm<F>,
    pub ffn_inner: Dense<F>,
    pub ffn_outer: Dense<F>,
    pub norm2: LayerNorm<F>,
}

/// All trainable tensors. The same structure serves as the model's weights,
/// as a gradient set, and as optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<F> {
    pub embeddings: Embeddings<F>,
    pub encoder: Vec<EncoderLayer<F>>,
    pub pooler: Dense<F>,
    pub classifier: Dense<F>,
}

/// Borrowed view of one named tensor.
pub enum TensorRef<'a, F> {
    T1(&'a Array1<F>),
    T2(&'a Array2<F>),
}

pub enum TensorMut<'a, F> {
    T1(&'a mut Array1<F>),
    T2(&'a mut Array2<F>),
}

impl<'a, F: Scalar> TensorRef<'a, F> {
    pub fn len(&self) -> usize {
        match self {
            Self::T1(a) => a.len(),
            Self::T2(a) => a.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> Vec<usize> {
        match self {
            Self::T1(a) => vec![a.len()],
            Self::T2(a) => a.shape().to_vec(),
        }
    }

    pub fn as_slice(&self) -> &[F] {
        match self {
            Self::T1(a) => a.as_slice().expect("standard layout"),
            Self::T2(a) => a.as_slice().expect("standard layout"),
        }
    }
}

impl<'a, F: Scalar> TensorMut<'a, F> {
    pub fn as_slice_mut(&mut self) -> &mut [F] {
        match self {
            Self::T1(a) => a.as_slice_mut().expect("standard layout"),
            Self::T2(a) => a.as_slice_mut().expect("standard layout"),
        }
    }
}

impl<F: Scalar> ParamSet<F> {
    /// All-zero parameter set with the shapes implied by the config.
    pub fn zeros(c: &ModelConfig) -> Self {
        let h = c.hidden;
        let layer = || EncoderLayer {
            query: Dense::zeros(h, h),
            key: Dense::zeros(h, h),
            value: Dense::zeros(h, h),
            output: Dense::zeros(h, h),
            norm1: LayerNorm {
                gain: Array1::zeros(h),
                bias: Array1::zeros(h),
            },
            ffn_inner: Dense::zeros(h, c.intermediate),
            ffn_outer: Dense::zeros(c.intermediate, h),
            norm2: LayerNorm {
                gain: Array1::zeros(h),
                bias: Array1::zeros(h),
            },
        };
        Self {
            embeddings: Embeddings {
                word: Array2::zeros((c.vocab_size, h)),
                position: Array2::zeros((c.max_position, h)),
                token_type: Array2::zeros((c.type_vocab, h)),
                norm: LayerNorm {
                    gain: Array1::zeros(h),
                    bias: Array1::zeros(h),
                },
            },
            encoder: (0..c.layers).map(|_| layer()).collect(),
            pooler: Dense::zeros(h, h),
            classifier: Dense::zeros(h, c.n_classes),
        }
    }

    /// Named tensors in canonical order.
    pub fn tensors(&self) -> Vec<(String, TensorRef<'_, F>)> {
        let mut out: Vec<(String, TensorRef<'_, F>)> = vec![
            ("embeddings.word".into(), TensorRef::T2(&self.embeddings.word)),
            (
                "embeddings.position".into(),
                TensorRef::T2(&self.embeddings.position),
            ),
            (
                "embeddings.token_type".into(),
                TensorRef::T2(&self.embeddings.token_type),
            ),
            (
                "embeddings.norm.gain".into(),
                TensorRef::T1(&self.embeddings.norm.gain),
            ),
            (
                "embeddings.norm.bias".into(),
                TensorRef::T1(&self.embeddings.norm.bias),
            ),
        ];
        for (i, l) in self.encoder.iter().enumerate() {
            for (name, d) in [
                ("attn.query", &l.query),
                ("attn.key", &l.key),
                ("attn.value", &l.value),
                ("attn.output", &l.output),
                ("ffn.inner", &l.ffn_inner),
                ("ffn.outer", &l.ffn_outer),
            ] {
                out.push((format!("encoder.{i}.{name}.w"), TensorRef::T2(&d.w)));
                out.push((format!("encoder.{i}.{name}.b"), TensorRef::T1(&d.b)));
            }
            out.push((format!("encoder.{i}.norm1.gain"), TensorRef::T1(&l.norm1.gain)));
            out.push((format!("encoder.{i}.norm1.bias"), TensorRef::T1(&l.norm1.bias)));
            out.push((format!("encoder.{i}.norm2.gain"), TensorRef::T1(&l.norm2.gain)));
            out.push((format!("encoder.{i}.norm2.bias"), TensorRef::T1(&l.norm2.bias)));
        }
        out.push(("pooler.w".into(), TensorRef::T2(&self.pooler.w)));
        out.push(("pooler.b".into(), TensorRef::T1(&self.pooler.b)));
        out.push(("classifier.w".into(), TensorRef::T2(&self.classifier.w)));
        out.push(("classifier.b".into(), TensorRef::T1(&self.classifier.b)));
        out
    }

    /// Mutable named tensors, same order as [`tensors`].
    ///
    /// [`tensors`]: ParamSet::tensors
    pub fn tensors_mut(&mut self) -> Vec<(String, TensorMut<'_, F>)> {
        let mut out: Vec<(String, TensorMut<'_, F>)> = vec![
            (
                "embeddings.word".into(),
                TensorMut::T2(&mut self.embeddings.word),
            ),
            (
                "embeddings.position".into(),
                TensorMut::T2(&mut self.embeddings.position),
            ),
            (
                "embeddings.token_type".into(),
                TensorMut::T2(&mut self.embeddings.token_type),
            ),
            (
                "embeddings.norm.gain".into(),
                TensorMut::T1(&mut self.embeddings.norm.gain),
            ),
            (
                "embeddings.norm.bias".into(),
                TensorMut::T1(&mut self.embeddings.norm.bias),
            ),
        ];
        for (i, l) in self.encoder.iter_mut().enumerate() {
            for (name, d) in [
                ("attn.query", &mut l.query),
                ("attn.key", &mut l.key),
                ("attn.value", &mut l.value),
                ("attn.output", &mut l.output),
                ("ffn.inner", &mut l.ffn_inner),
                ("ffn.outer", &mut l.ffn_outer),
            ] {
                out.push((format!("encoder.{i}.{name}.w"), TensorMut::T2(&mut d.w)));
                out.push((format!("encoder.{i}.{name}.b"), TensorMut::T1(&mut d.b)));
            }
            out.push((
                format!("encoder.{i}.norm1.gain"),
                TensorMut::T1(&mut l.norm1.gain),
            ));
            out.push((
                format!("encoder.{i}.norm1.bias"),
                TensorMut::T1(&mut l.norm1.bias),
            ));
            out.push((
                format!("encoder.{i}.norm2.gain"),
                TensorMut::T1(&mut l.norm2.gain),
            ));
            out.push((
                format!("encoder.{i}.norm2.bias"),
                TensorMut::T1(&mut l.norm2.bias),
            ));
        }
        out.push(("pooler.w".into(), TensorMut::T2(&mut self.pooler.w)));
        out.push(("pooler.b".into(), TensorMut::T1(&mut self.pooler.b)));
        out.push(("classifier.w".into(), TensorMut::T2(&mut self.classifier.w)));
        out.push(("classifier.b".into(), TensorMut::T1(&mut self.classifier.b)));
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }
}

/// The classifier model: config, optional class names, and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier<F> {
    pub config: ModelConfig,
    pub class_names: Option<Vec<String>>,
    pub params: ParamSet<F>,
}

impl<F: Scalar> Classifier<F> {
    /// Builds a model with deterministic initialization under `seed`:
    /// embedding tables and linear weights draw from N(0, 0.02^2), biases
    /// start at zero, and layer-norm gains at one.
    pub fn build(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut params = ParamSet::zeros(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0f64, 0.02).expect("valid distribution");
        let mut fill = |a: &mut Array2<F>| {
            for v in a.iter_mut() {
                *v = s(normal.sample(&mut rng));
            }
        };
        fill(&mut params.embeddings.word);
        fill(&mut params.embeddings.position);
        fill(&mut params.embeddings.token_type);
        for l in &mut params.encoder {
            fill(&mut l.query.w);
            fill(&mut l.key.w);
            fill(&mut l.value.w);
            fill(&mut l.output.w);
            fill(&mut l.ffn_inner.w);
            fill(&mut l.ffn_outer.w);
            l.norm1.gain.fill(F::one());
            l.norm2.gain.fill(F::one());
        }
        fill(&mut params.pooler.w);
        fill(&mut params.classifier.w);
        params.embeddings.norm.gain.fill(F::one());
        Ok(Self {
            config,
            class_names: None,
            params,
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.param_count()
    }

    /// Two-column configuration summary, one parameter per row.
    pub fn summary(&self) -> String {
        let c = &self.config;
        let rows: Vec<(&str, String)> = vec![
            ("Vocabulary size", c.vocab_size.to_string()),
            ("Hidden size", c.hidden.to_string()),
            ("Number of hidden layers", c.layers.to_string()),
            ("Number of attention heads", c.heads.to_string()),
            ("Intermediate size", c.intermediate.to_string()),
            ("Maximum position embeddings", c.max_position.to_string()),
            ("Token type vocabulary", c.type_vocab.to_string()),
            ("Dropout rate", c.dropout.to_string()),
            ("Number of classes", c.n_classes.to_string()),
            ("Total number of parameters", self.param_count().to_string()),
        ];
        let mut out = String::new();
        for (name, value) in rows {
            out.push_str(&format!("{name:<28} {value}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bad_head_split_is_rejected() {
        let config = ModelConfig {
            hidden: 128,
            heads: 3,
            ..ModelConfig::default()
        };
        assert!(matches!(
            Classifier::<f32>::build(config, 0),
            Err(ModelError::BadConfig { .. })
        ));
    }

    #[test]
    fn build_is_deterministic() {
        let config = ModelConfig {
            vocab_size: 300,
            hidden: 8,
            layers: 1,
            heads: 2,
            intermediate: 16,
            max_position: 16,
            n_classes: 3,
            ..ModelConfig::default()
        };
        let a = Classifier::<f32>::build(config, 42).unwrap();
        let b = Classifier::<f32>::build(config, 42).unwrap();
        assert_eq!(a.params, b.params);
        let c = Classifier::<f32>::build(config, 43).unwrap();
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn toy_param_count_matches_shape_enumeration() {
        let config = ModelConfig {
            vocab_size: 300,
            hidden: 8,
            layers: 1,
            heads: 2,
            intermediate: 16,
            max_position: 16,
            type_vocab: 2,
            n_classes: 3,
            ..ModelConfig::default()
        };
        let model = Classifier::<f32>::build(config, 0).unwrap();
        // Independent enumeration of every tensor shape (one encoder layer).
        let layer = 4 * (8 * 8 + 8) // q,k,v,out
            + 8 + 8 // norm1
            + (8 * 16 + 16) // ffn inner
            + (16 * 8 + 8) // ffn outer
            + 8 + 8; // norm2
        let by_hand = (300 * 8) // word
            + (16 * 8) // position
            + (2 * 8) // token type
            + 8 + 8 // embedding norm
            + layer
            + (8 * 8 + 8) // pooler
            + (8 * 3 + 3); // classifier
        assert_eq!(model.param_count(), by_hand);
        assert_eq!(param_count_formula(&config), by_hand);
    }

    #[test]
    fn formula_matches_enumeration_for_random_configs() {
        let configs = [
            (301, 8, 1, 2, 16, 16, 2, 3),
            (512, 16, 2, 4, 32, 64, 2, 15),
            (1000, 32, 3, 8, 48, 128, 3, 7),
            (64, 4, 1, 1, 8, 8, 1, 2),
            (5000, 128, 2, 4, 512, 512, 2, 15),
        ];
        for (v, h, l, heads, i, p, t, c) in configs {
            let config = ModelConfig {
                vocab_size: v,
                hidden: h,
                layers: l,
                heads,
                intermediate: i,
                max_position: p,
                type_vocab: t,
                dropout: 0.1,
                n_classes: c,
            };
            let model = Classifier::<f32>::build(config, 7).unwrap();
            assert_eq!(model.param_count(), param_count_formula(&config));
        }
    }

    #[test]
    fn summary_lists_config_and_param_count() {
        let model = Classifier::<f32>::build(ModelConfig::default(), 1).unwrap();
        let text = model.summary();
        assert!(text.contains("Vocabulary size"));
        assert!(text.contains("5000"));
        assert!(text.contains("Hidden size"));
        assert!(text.contains("Total number of parameters"));
        assert!(text.contains(&model.param_count().to_string()));
    }

    #[test]
    fn layernorm_starts_at_identity() {
        let model = Classifier::<f32>::build(
            ModelConfig {
                vocab_size: 300,
                hidden: 8,
                layers: 2,
                heads: 2,
                intermediate: 16,
                max_position: 16,
                n_classes: 3,
                ..ModelConfig::default()
            },
            5,
        )
        .unwrap();
        assert!(model
            .params
            .embeddings
            .norm
            .gain
            .iter()
            .all(|&g| g == 1.0));
        assert!(model.params.encoder[1].norm2.bias.iter().all(|&b| b == 0.0));
    }
}
