//! Input embedding composition and the transformer encoder.
//!
//! The encoder input of every position is the sum of its token, position and
//! segment embeddings; under [`InjectionMode::Encoder`] and
//! [`InjectionMode::Both`] the sentence's dataset embedding (same width as
//! the token embeddings) is added to every position as well, so the dataset
//! signal is visible to all transformer layers.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::conllu::ModelInput;
use crate::layers::{normal_param, ones_param, zeros_param, Linear, EMBEDDING_STD};
use crate::model::InjectionMode;
use crate::{Error, Result, Tensor};

/// Width of the dataset embedding concatenated before the decoder.
pub const DECODER_EMBEDDING_DIM: usize = 12;

const LAYER_NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_len: usize,
    pub dropout: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            d_ff: 128,
            max_len: 128,
            dropout: 0.1,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.d_model < 2 || self.max_len < 2 || self.d_ff == 0 {
            return Err(Error::Config(format!("degenerate encoder config {self:?}")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// All lookup tables of the model.
#[derive(Debug, Clone)]
pub struct EmbeddingTables {
    pub token: Tensor,
    pub position: Tensor,
    pub segment: Tensor,
    /// `(datasets, d_model)`, present under encoder-level injection.
    pub dataset_encoder: Option<Tensor>,
    /// `(datasets, 12)`, present under decoder-level injection.
    pub dataset_decoder: Option<Tensor>,
}

impl EmbeddingTables {
    pub fn new(
        seed: u64,
        config: &EncoderConfig,
        n_words: usize,
        n_datasets: usize,
        mode: InjectionMode,
    ) -> Result<Self> {
        let d = config.d_model;
        let table = |name: &str, rows: usize, cols: usize| normal_param(seed, name, &[rows, cols], EMBEDDING_STD);
        Ok(EmbeddingTables {
            token: table("embeddings.token", n_words, d)?,
            position: table("embeddings.position", config.max_len, d)?,
            segment: table("embeddings.segment", 2, d)?,
            dataset_encoder: if mode.uses_encoder() {
                Some(table("embeddings.dataset_encoder", n_datasets, d)?)
            } else {
                None
            },
            dataset_decoder: if mode.uses_decoder() {
                Some(table("embeddings.dataset_decoder", n_datasets, DECODER_EMBEDDING_DIM)?)
            } else {
                None
            },
        })
    }

    pub fn collect(&self, out: &mut Vec<(String, Tensor)>) {
        out.push(("embeddings.token".into(), self.token.clone()));
        out.push(("embeddings.position".into(), self.position.clone()));
        out.push(("embeddings.segment".into(), self.segment.clone()));
        if let Some(t) = &self.dataset_encoder {
            out.push(("embeddings.dataset_encoder".into(), t.clone()));
        }
        if let Some(t) = &self.dataset_decoder {
            out.push(("embeddings.dataset_decoder".into(), t.clone()));
        }
    }
}

/// Token + position + segment embeddings of the `n + 1` positions, plus the
/// dataset embedding when `mode` injects at the encoder.
pub fn compose_embeddings(input: &ModelInput, tables: &EmbeddingTables, mode: InjectionMode) -> Result<Tensor> {
    let max_len = tables.position.shape()[0];
    if input.word_ids.len() > max_len {
        return Err(Error::Size(format!(
            "sentence of {} words exceeds the maximum length {}",
            input.len(),
            max_len - 1
        )));
    }
    let mut x = tables
        .token
        .embedding_lookup(&input.word_ids)?
        .add(&tables.position.embedding_lookup(&input.positions)?)?
        .add(&tables.segment.embedding_lookup(&input.segments)?)?;
    if mode.uses_encoder() {
        let table = tables
            .dataset_encoder
            .as_ref()
            .ok_or_else(|| Error::Config("encoder injection without a dataset table".into()))?;
        let d = table.shape()[1];
        let row = table.embedding_lookup(&[input.dataset_id])?.reshape(&[d])?;
        x = x.add_broadcast(&row)?;
    }
    Ok(x)
}

#[derive(Debug, Clone)]
pub struct LayerNormParams {
    pub gain: Tensor,
    pub bias: Tensor,
}

impl LayerNormParams {
    fn new(d: usize) -> Self {
        LayerNormParams {
            gain: ones_param(&[d]),
            bias: zeros_param(&[d]),
        }
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.layer_norm(&self.gain, &self.bias, LAYER_NORM_EPS)
    }

    fn collect(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        out.push((format!("{prefix}.gain"), self.gain.clone()));
        out.push((format!("{prefix}.bias"), self.bias.clone()));
    }
}

/// Post-norm transformer block: self-attention, add & norm, GELU
/// feed-forward, add & norm. The key projection has no bias: a per-query
/// constant cancels in the softmax, so such a bias would get no gradient.
#[derive(Debug, Clone)]
pub struct TransformerLayer {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub attention_norm: LayerNormParams,
    pub ff_in: Linear,
    pub ff_out: Linear,
    pub ff_norm: LayerNormParams,
}

impl TransformerLayer {
    pub fn new(seed: u64, prefix: &str, config: &EncoderConfig) -> Result<Self> {
        let d = config.d_model;
        let lin = |name: &str, i, o| Linear::new(seed, &format!("{prefix}.{name}"), i, o);
        Ok(TransformerLayer {
            query: lin("query", d, d)?,
            key: Linear::without_bias(seed, &format!("{prefix}.key"), d, d)?,
            value: lin("value", d, d)?,
            output: lin("output", d, d)?,
            attention_norm: LayerNormParams::new(d),
            ff_in: lin("ff_in", d, config.d_ff)?,
            ff_out: lin("ff_out", config.d_ff, d)?,
            ff_norm: LayerNormParams::new(d),
        })
    }

    pub fn collect(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        self.query.collect(&format!("{prefix}.query"), out);
        self.key.collect(&format!("{prefix}.key"), out);
        self.value.collect(&format!("{prefix}.value"), out);
        self.output.collect(&format!("{prefix}.output"), out);
        self.attention_norm.collect(&format!("{prefix}.attention_norm"), out);
        self.ff_in.collect(&format!("{prefix}.ff_in"), out);
        self.ff_out.collect(&format!("{prefix}.ff_out"), out);
        self.ff_norm.collect(&format!("{prefix}.ff_norm"), out);
    }

    /// Multi-head self-attention. `valid[q * len + k]` says whether query
    /// `q` may attend to key `k`; `None` lets every position see every other.
    pub fn attention(&self, x: &Tensor, n_heads: usize, valid: Option<&[bool]>) -> Result<Tensor> {
        let d = x.shape()[1];
        let dh = d / n_heads;
        let q = self.query.forward(x)?;
        let k = self.key.forward(x)?;
        let v = self.value.forward(x)?;
        let scale = 1.0 / libm::sqrt(dh as f64);
        let mut context: Option<Tensor> = None;
        for h in 0..n_heads {
            let qh = q.slice_last(h * dh, dh)?;
            let kh = k.slice_last(h * dh, dh)?;
            let vh = v.slice_last(h * dh, dh)?;
            let weights = qh.matmul(&kh.transpose()?)?.scale(scale).softmax_rows(valid)?;
            let head = weights.matmul(&vh)?;
            context = Some(match context {
                None => head,
                Some(c) => c.concat_last(&head)?,
            });
        }
        self.output.forward(&context.expect("at least one head"))
    }

    pub fn forward(
        &self,
        x: &Tensor,
        config: &EncoderConfig,
        valid: Option<&[bool]>,
        mut rng: Option<&mut dyn RngCore>,
    ) -> Result<Tensor> {
        let mut attended = self.attention(x, config.n_heads, valid)?;
        if let Some(r) = rng.as_deref_mut() {
            attended = attended.dropout(config.dropout, r)?;
        }
        let x = self.attention_norm.forward(&x.add(&attended)?)?;
        let mut ff = self.ff_out.forward(&self.ff_in.forward(&x)?.gelu())?;
        if let Some(r) = rng {
            ff = ff.dropout(config.dropout, r)?;
        }
        self.ff_norm.forward(&x.add(&ff)?)
    }
}

/// Stack of transformer layers.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub layers: Vec<TransformerLayer>,
}

fn check_finite(t: &Tensor, layer: &str) -> Result<()> {
    if t.data().iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("non-finite activation after {layer}")))
    }
}

impl Encoder {
    pub fn new(seed: u64, config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let layers = (0..config.n_layers)
            .map(|i| TransformerLayer::new(seed, &format!("encoder.layer{i}"), &config))
            .collect::<Result<_>>()?;
        Ok(Encoder { config, layers })
    }

    pub fn collect(&self, out: &mut Vec<(String, Tensor)>) {
        for (i, layer) in self.layers.iter().enumerate() {
            layer.collect(&format!("encoder.layer{i}"), out);
        }
    }

    /// Encodes composed embeddings `(len, d_model)`; dropout is applied iff
    /// an RNG is given.
    pub fn encode(
        &self,
        embeddings: &Tensor,
        valid: Option<&[bool]>,
        mut rng: Option<&mut dyn RngCore>,
    ) -> Result<Tensor> {
        if embeddings.ndim() != 2 || embeddings.shape()[1] != self.config.d_model {
            return Err(Error::Dimension {
                op: "transformer_encode",
                lhs: embeddings.shape().to_vec(),
                rhs: vec![self.config.d_model],
            });
        }
        let mut x = embeddings.clone();
        if let Some(r) = rng.as_deref_mut() {
            x = x.dropout(self.config.dropout, r)?;
        }
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(&x, &self.config, valid, rng.as_mut().map(|r| &mut **r as &mut dyn RngCore))?;
            check_finite(&x, &format!("encoder layer {i}"))?;
        }
        Ok(x)
    }

    /// Encodes several sentences packed into one matrix with attention
    /// restricted to each sentence's own block, then unpacks the rows.
    pub fn encode_packed(&self, sentences: &[Tensor]) -> Result<Vec<Tensor>> {
        let lens: Vec<usize> = sentences.iter().map(|s| s.shape()[0]).collect();
        let total: usize = lens.iter().sum();
        let mut owner = Vec::with_capacity(total);
        for (i, &l) in lens.iter().enumerate() {
            owner.extend(core::iter::repeat_n(i, l));
        }
        let valid: Vec<bool> = (0..total * total)
            .map(|idx| owner[idx / total] == owner[idx % total])
            .collect();
        let packed = Tensor::concat_rows(sentences)?;
        let encoded = self.encode(&packed, Some(&valid), None)?;
        let mut start = 0;
        lens.iter()
            .map(|&l| {
                let rows: Vec<usize> = (start..start + l).collect();
                start += l;
                encoded.embedding_lookup(&rows)
            })
            .collect()
    }
}
