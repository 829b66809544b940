//! Deep biaffine arc and label scoring.
//!
//! Encoder outputs first pass through four ReLU MLPs (arc-head, arc-dep,
//! label-head, label-dep). Arc scores are
//! `s(i, j) = dep_iᵀ · U · head_j + uᵀ · head_j`; label scores for a
//! dependent `i` attached to `j` are
//! `dep_iᵀ · U_l · head_j + W_dep[l] · dep_i + W_head[l] · head_j + b_l`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::encoder::DECODER_EMBEDDING_DIM;
use crate::layers::{xavier_param, zeros_param, Linear};
use crate::model::InjectionMode;
use crate::{Error, Result, Tensor};

/// Additive mask on self-attachment scores.
pub const SELF_ARC_MASK: f64 = -1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BiaffineConfig {
    pub d_in: usize,
    pub d_arc: usize,
    pub d_label: usize,
    pub n_labels: usize,
}

impl BiaffineConfig {
    /// Scorer input width for an encoder of width `d_model` under `mode`.
    pub fn input_width(d_model: usize, mode: InjectionMode) -> usize {
        if mode.uses_decoder() {
            d_model + DECODER_EMBEDDING_DIM
        } else {
            d_model
        }
    }
}

#[derive(Debug, Clone)]
pub struct Biaffine {
    pub config: BiaffineConfig,
    pub arc_head_mlp: Linear,
    pub arc_dep_mlp: Linear,
    pub label_head_mlp: Linear,
    pub label_dep_mlp: Linear,
    /// `(d_arc, d_arc)`
    pub arc_weight: Tensor,
    /// `(d_arc,)`
    pub arc_head_bias: Tensor,
    /// `(labels, d_label, d_label)`
    pub label_weight: Tensor,
    /// `(labels, d_label)`
    pub label_head_weight: Tensor,
    /// `(labels, d_label)`
    pub label_dep_weight: Tensor,
    /// `(labels,)`
    pub label_bias: Tensor,
}

impl Biaffine {
    pub fn new(seed: u64, config: BiaffineConfig) -> Result<Self> {
        let BiaffineConfig {
            d_in,
            d_arc,
            d_label,
            n_labels,
        } = config;
        if n_labels == 0 {
            return Err(Error::Config("the label set is empty".into()));
        }
        Ok(Biaffine {
            config,
            arc_head_mlp: Linear::new(seed, "biaffine.arc_head_mlp", d_in, d_arc)?,
            arc_dep_mlp: Linear::new(seed, "biaffine.arc_dep_mlp", d_in, d_arc)?,
            label_head_mlp: Linear::new(seed, "biaffine.label_head_mlp", d_in, d_label)?,
            label_dep_mlp: Linear::new(seed, "biaffine.label_dep_mlp", d_in, d_label)?,
            arc_weight: xavier_param(seed, "biaffine.arc_weight", &[d_arc, d_arc], d_arc, d_arc)?,
            arc_head_bias: zeros_param(&[d_arc]),
            label_weight: xavier_param(
                seed,
                "biaffine.label_weight",
                &[n_labels, d_label, d_label],
                d_label,
                d_label,
            )?,
            label_head_weight: xavier_param(
                seed,
                "biaffine.label_head_weight",
                &[n_labels, d_label],
                d_label,
                n_labels,
            )?,
            label_dep_weight: xavier_param(
                seed,
                "biaffine.label_dep_weight",
                &[n_labels, d_label],
                d_label,
                n_labels,
            )?,
            label_bias: zeros_param(&[n_labels]),
        })
    }

    pub fn n_labels(&self) -> usize {
        self.config.n_labels
    }

    pub fn collect(&self, out: &mut Vec<(String, Tensor)>) {
        self.arc_head_mlp.collect("biaffine.arc_head_mlp", out);
        self.arc_dep_mlp.collect("biaffine.arc_dep_mlp", out);
        self.label_head_mlp.collect("biaffine.label_head_mlp", out);
        self.label_dep_mlp.collect("biaffine.label_dep_mlp", out);
        out.push(("biaffine.arc_weight".into(), self.arc_weight.clone()));
        out.push(("biaffine.arc_head_bias".into(), self.arc_head_bias.clone()));
        out.push(("biaffine.label_weight".into(), self.label_weight.clone()));
        out.push(("biaffine.label_head_weight".into(), self.label_head_weight.clone()));
        out.push(("biaffine.label_dep_weight".into(), self.label_dep_weight.clone()));
        out.push(("biaffine.label_bias".into(), self.label_bias.clone()));
    }

    fn check_input(&self, encoded: &Tensor) -> Result<usize> {
        match *encoded.shape() {
            [rows, width] if width == self.config.d_in && rows >= 2 => Ok(rows - 1),
            _ => Err(Error::Dimension {
                op: "biaffine",
                lhs: encoded.shape().to_vec(),
                rhs: vec![self.config.d_in],
            }),
        }
    }

    /// `(n, n + 1)` arc scores for `encoded` of shape `(n + 1, d_in)`, row
    /// 0 being the root. Self-attachments carry [`SELF_ARC_MASK`].
    pub fn arc_scores(&self, encoded: &Tensor) -> Result<Tensor> {
        let n = self.check_input(encoded)?;
        let d_arc = self.config.d_arc;
        let words: Vec<usize> = (1..=n).collect();
        let dep = self.arc_dep_mlp.forward(&encoded.embedding_lookup(&words)?)?.relu();
        let head = self.arc_head_mlp.forward(encoded)?.relu();
        let bilinear = dep.matmul(&self.arc_weight)?.matmul(&head.transpose()?)?;
        let head_bias = head
            .matmul(&self.arc_head_bias.reshape(&[d_arc, 1])?)?
            .reshape(&[n + 1])?;
        let mut mask = vec![0.0; n * (n + 1)];
        for i in 0..n {
            mask[i * (n + 1) + i + 1] = SELF_ARC_MASK;
        }
        bilinear
            .add_broadcast(&head_bias)?
            .add(&Tensor::new(&[n, n + 1], mask)?)
    }

    /// `(n, labels)` label scores for every word attached to `heads[i]`.
    pub fn label_scores(&self, encoded: &Tensor, heads: &[usize]) -> Result<Tensor> {
        let n = self.check_input(encoded)?;
        if heads.len() != n {
            return Err(Error::Dimension {
                op: "label_scores",
                lhs: vec![n],
                rhs: vec![heads.len()],
            });
        }
        for (i, &h) in heads.iter().enumerate() {
            if h > n || h == i + 1 {
                return Err(Error::Index {
                    what: "head",
                    index: h,
                    size: n + 1,
                });
            }
        }
        let words: Vec<usize> = (1..=n).collect();
        let dep = self.label_dep_mlp.forward(&encoded.embedding_lookup(&words)?)?.relu();
        let head_all = self.label_head_mlp.forward(encoded)?.relu();
        let head = head_all.embedding_lookup(heads)?;
        Tensor::bilinear_pairs(&dep, &self.label_weight, &head)?
            .add(&dep.matmul(&self.label_dep_weight.transpose()?)?)?
            .add(&head.matmul(&self.label_head_weight.transpose()?)?)?
            .add_broadcast(&self.label_bias)
    }
}

/// Concatenates the `dataset_id` row of the decoder dataset table to every
/// encoder output row when `mode` injects at the decoder; otherwise returns
/// `encoded` unchanged.
pub fn inject_decoder_embedding(
    encoded: &Tensor,
    dataset_id: usize,
    table: Option<&Tensor>,
    mode: InjectionMode,
) -> Result<Tensor> {
    if !mode.uses_decoder() {
        return Ok(encoded.clone());
    }
    let table =
        table.ok_or_else(|| Error::Config("decoder injection without a dataset table".into()))?;
    let rows = encoded.shape()[0];
    let ids = vec![dataset_id; rows];
    encoded.concat_last(&table.embedding_lookup(&ids)?)
}

/// Arc cross-entropy over candidate heads plus label cross-entropy at the
/// gold heads, unweighted.
pub fn parser_loss(
    arc_scores: &Tensor,
    label_scores: &Tensor,
    gold_heads: &[usize],
    gold_labels: &[usize],
) -> Result<Tensor> {
    if gold_heads.len() != gold_labels.len() {
        return Err(Error::Usage(format!(
            "{} gold heads but {} gold labels",
            gold_heads.len(),
            gold_labels.len()
        )));
    }
    arc_scores
        .cross_entropy(gold_heads)?
        .add(&label_scores.cross_entropy(gold_labels)?)
}
