//! The full parser: embeddings, encoder, decoder injection and biaffine
//! scoring behind one parameter namespace.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::biaffine::{inject_decoder_embedding, parser_loss, Biaffine, BiaffineConfig};
use crate::conllu::ModelInput;
use crate::decode::{assign_labels, greedy_decode, mst_decode, ArcScores};
use crate::encoder::{compose_embeddings, EmbeddingTables, Encoder, EncoderConfig};
use crate::{Error, Result, Tensor};

/// Where the dataset embedding enters the parser.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InjectionMode {
    #[default]
    None,
    Encoder,
    Decoder,
    Both,
}

impl InjectionMode {
    pub const ALL: [InjectionMode; 4] = [
        InjectionMode::None,
        InjectionMode::Encoder,
        InjectionMode::Decoder,
        InjectionMode::Both,
    ];

    pub fn uses_encoder(self) -> bool {
        matches!(self, InjectionMode::Encoder | InjectionMode::Both)
    }

    pub fn uses_decoder(self) -> bool {
        matches!(self, InjectionMode::Decoder | InjectionMode::Both)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            InjectionMode::None => "none",
            InjectionMode::Encoder => "encoder",
            InjectionMode::Decoder => "decoder",
            InjectionMode::Both => "both",
        }
    }
}

impl fmt::Display for InjectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InjectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        InjectionMode::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown injection mode `{s}`")))
    }
}

/// Head selection at prediction time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decoding {
    #[default]
    Mst,
    Greedy,
}

impl FromStr for Decoding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mst" => Ok(Decoding::Mst),
            "greedy" => Ok(Decoding::Greedy),
            _ => Err(Error::Config(format!("unknown decoding `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub mode: InjectionMode,
    pub d_arc: usize,
    pub d_label: usize,
    pub n_words: usize,
    pub n_labels: usize,
    pub n_datasets: usize,
}

impl ModelConfig {
    pub fn new(encoder: EncoderConfig, mode: InjectionMode, n_words: usize, n_labels: usize, n_datasets: usize) -> Self {
        ModelConfig {
            encoder,
            mode,
            d_arc: 32,
            d_label: 32,
            n_words,
            n_labels,
            n_datasets,
        }
    }

    pub fn scorer_config(&self) -> BiaffineConfig {
        BiaffineConfig {
            d_in: BiaffineConfig::input_width(self.encoder.d_model, self.mode),
            d_arc: self.d_arc,
            d_label: self.d_label,
            n_labels: self.n_labels,
        }
    }
}

/// Heads (0 = root) and label ids of one sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prediction {
    pub heads: Vec<usize>,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct ParserModel {
    pub config: ModelConfig,
    pub embeddings: EmbeddingTables,
    pub encoder: Encoder,
    pub scorer: Biaffine,
    frozen: BTreeSet<String>,
}

impl ParserModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        if config.n_datasets == 0 && config.mode != InjectionMode::None {
            return Err(Error::Config("dataset injection needs at least one dataset".into()));
        }
        Ok(ParserModel {
            config,
            embeddings: EmbeddingTables::new(
                seed,
                &config.encoder,
                config.n_words,
                config.n_datasets,
                config.mode,
            )?,
            encoder: Encoder::new(seed, config.encoder)?,
            scorer: Biaffine::new(seed, config.scorer_config())?,
            frozen: BTreeSet::new(),
        })
    }

    pub fn mode(&self) -> InjectionMode {
        self.config.mode
    }

    /// Every parameter under its stable name, in a fixed order.
    pub fn named_parameters(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        self.embeddings.collect(&mut out);
        self.encoder.collect(&mut out);
        self.scorer.collect(&mut out);
        out
    }

    pub fn parameter(&self, name: &str) -> Option<Tensor> {
        self.named_parameters()
            .into_iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    /// Excludes `name` from [`ParserModel::trainable_parameters`].
    pub fn freeze(&mut self, name: &str) -> Result<()> {
        if self.parameter(name).is_none() {
            return Err(Error::Config(format!("no parameter named `{name}`")));
        }
        self.frozen.insert(name.to_string());
        Ok(())
    }

    pub fn frozen(&self) -> impl Iterator<Item = &str> {
        self.frozen.iter().map(String::as_str)
    }

    pub fn trainable_parameters(&self) -> Vec<Tensor> {
        self.named_parameters()
            .into_iter()
            .filter(|(n, _)| !self.frozen.contains(n))
            .map(|(_, t)| t)
            .collect()
    }

    pub fn n_parameters(&self) -> usize {
        self.named_parameters().iter().map(|(_, t)| t.numel()).sum()
    }

    /// Overwrites every parameter with the blob of the same name. The set of
    /// names and all shapes must match exactly.
    pub fn load_parameters(&self, blobs: &[(String, Vec<usize>, Vec<f64>)]) -> Result<()> {
        let params = self.named_parameters();
        if params.len() != blobs.len() {
            return Err(Error::Config(format!(
                "model has {} parameters, file has {}",
                params.len(),
                blobs.len()
            )));
        }
        for (name, tensor) in &params {
            let (_, shape, data) = blobs
                .iter()
                .find(|(n, _, _)| n == name)
                .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))?;
            if shape.as_slice() != tensor.shape() || data.len() != tensor.numel() {
                return Err(Error::Dimension {
                    op: "load_parameters",
                    lhs: tensor.shape().to_vec(),
                    rhs: shape.clone(),
                });
            }
        }
        for (name, tensor) in &params {
            let (_, _, data) = blobs.iter().find(|(n, _, _)| n == name).expect("checked above");
            tensor.data_mut().copy_from_slice(data);
        }
        Ok(())
    }

    /// Copies every parameter that `other` also has. A matrix that is wider
    /// on the input side here (the scorer MLPs under decoder injection)
    /// receives `other`'s rows as its leading rows and keeps the rest.
    pub fn copy_shared_from(&self, other: &ParserModel) -> Result<()> {
        let theirs = other.named_parameters();
        for (name, mine) in self.named_parameters() {
            let Some((_, src)) = theirs.iter().find(|(n, _)| *n == name) else {
                continue;
            };
            let (ms, ss) = (mine.shape().to_vec(), src.shape().to_vec());
            let prefix_ok = ms.len() == 2 && ss.len() == 2 && ms[1] == ss[1] && ms[0] >= ss[0];
            if ms != ss && !prefix_ok {
                return Err(Error::Dimension {
                    op: "copy_shared_from",
                    lhs: ms,
                    rhs: ss,
                });
            }
            let data = src.to_vec();
            mine.data_mut()[..data.len()].copy_from_slice(&data);
        }
        Ok(())
    }

    /// Zeroes both dataset tables (where present) and freezes them.
    pub fn zero_and_freeze_dataset_tables(&mut self) {
        let tables: Vec<Tensor> = [&self.embeddings.dataset_encoder, &self.embeddings.dataset_decoder]
            .into_iter()
            .flatten()
            .cloned()
            .collect();
        for t in &tables {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        if self.embeddings.dataset_encoder.is_some() {
            self.frozen.insert("embeddings.dataset_encoder".into());
        }
        if self.embeddings.dataset_decoder.is_some() {
            self.frozen.insert("embeddings.dataset_decoder".into());
        }
    }

    /// Independent copy with fresh parameter storage.
    pub fn deep_clone(&self) -> Self {
        let mut m = self.clone();
        let blobs: Vec<(String, Vec<usize>, Vec<f64>)> = self
            .named_parameters()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec(), t.to_vec()))
            .collect();
        m.embeddings = EmbeddingTables::new(0, &self.config.encoder, self.config.n_words, self.config.n_datasets, self.config.mode)
            .expect("valid config");
        m.encoder = Encoder::new(0, self.config.encoder).expect("valid config");
        m.scorer = Biaffine::new(0, self.config.scorer_config()).expect("valid config");
        m.load_parameters(&blobs).expect("same architecture");
        m
    }

    fn check_input(&self, input: &ModelInput) -> Result<()> {
        if input.is_empty() {
            return Err(Error::Size("cannot score an empty sentence".into()));
        }
        if self.config.mode != InjectionMode::None && input.dataset_id >= self.config.n_datasets {
            return Err(Error::Index {
                what: "dataset id",
                index: input.dataset_id,
                size: self.config.n_datasets,
            });
        }
        Ok(())
    }

    /// Scorer input `(n + 1, d_in)`: composed embeddings, transformer,
    /// decoder-side dataset concatenation. Dropout is active iff `rng` is
    /// given.
    pub fn represent(&self, input: &ModelInput, rng: Option<&mut dyn RngCore>) -> Result<Tensor> {
        self.check_input(input)?;
        let mode = self.config.mode;
        let emb = compose_embeddings(input, &self.embeddings, mode)?;
        let h = self.encoder.encode(&emb, None, rng)?;
        inject_decoder_embedding(&h, input.dataset_id, self.embeddings.dataset_decoder.as_ref(), mode)
    }

    /// Training loss of one gold sentence, labels scored at gold heads.
    pub fn loss(&self, input: &ModelInput, rng: Option<&mut dyn RngCore>) -> Result<Tensor> {
        if input.labels.len() != input.len() {
            return Err(Error::Usage("loss needs a labeled input".into()));
        }
        let h = self.represent(input, rng)?;
        let arcs = self.scorer.arc_scores(&h)?;
        let labels = self.scorer.label_scores(&h, &input.heads)?;
        parser_loss(&arcs, &labels, &input.heads, &input.labels)
    }

    /// `(n, n + 1)` arc scores and the scorer input they came from.
    pub fn scores(&self, input: &ModelInput) -> Result<(ArcScores, Tensor)> {
        let h = self.represent(input, None)?;
        let arcs = self.scorer.arc_scores(&h)?;
        Ok((ArcScores::from_tensor(&arcs)?, h))
    }

    pub fn predict(&self, input: &ModelInput, decoding: Decoding) -> Result<Prediction> {
        let (arcs, h) = self.scores(input)?;
        let heads = match decoding {
            Decoding::Mst => mst_decode(&arcs),
            Decoding::Greedy => greedy_decode(&arcs),
        };
        let labels = assign_labels(&self.scorer, &h, &heads)?;
        Ok(Prediction { heads, labels })
    }
}

/// Kink margin required of every ReLU pre-activation at a check point.
pub const GRADCHECK_KINK_MARGIN: f64 = 0.05;

/// Moves every parameter of `model` to its current value plus
/// `U(-scale, scale)` noise, redrawing until `input` sits at a point where
/// finite differences are meaningful: no ReLU pre-activation of the scorer
/// is within [`GRADCHECK_KINK_MARGIN`] of zero, and no arc-head unit is
/// active at every position (such a unit's bias only shifts every head
/// score of a row equally, so its true gradient is exactly zero and the
/// check would only measure rounding noise). Returns the number of draws.
pub fn gradcheck_point<R: rand::Rng + ?Sized>(
    model: &ParserModel,
    input: &ModelInput,
    rng: &mut R,
    scale: f64,
    max_draws: usize,
) -> Result<usize> {
    let params = model.named_parameters();
    let base: Vec<Vec<f64>> = params.iter().map(|(_, t)| t.to_vec()).collect();
    for draw in 1..=max_draws {
        for ((_, t), b) in params.iter().zip(&base) {
            let moved: Vec<f64> = b.iter().map(|v| v + rng.random_range(-scale..scale)).collect();
            t.data_mut().copy_from_slice(&moved);
        }
        if well_conditioned(model, input)? {
            return Ok(draw);
        }
    }
    Err(Error::Numeric(format!("no well-conditioned check point in {max_draws} draws")))
}

fn well_conditioned(model: &ParserModel, input: &ModelInput) -> Result<bool> {
    let h = model.represent(input, None)?;
    let s = &model.scorer;
    for (mlp, is_arc_head) in [
        (&s.arc_head_mlp, true),
        (&s.arc_dep_mlp, false),
        (&s.label_head_mlp, false),
        (&s.label_dep_mlp, false),
    ] {
        let pre = mlp.forward(&h)?.to_vec();
        if pre.iter().any(|v| v.abs() < GRADCHECK_KINK_MARGIN) {
            return Ok(false);
        }
        let width = mlp.weight.shape()[1];
        if is_arc_head && (0..width).any(|u| pre.chunks(width).all(|row| row[u] > 0.0)) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn tiny(mode: InjectionMode) -> ParserModel {
        let enc = EncoderConfig {
            d_model: 8,
            n_layers: 1,
            n_heads: 2,
            d_ff: 16,
            max_len: 16,
            dropout: 0.0,
        };
        let mut cfg = ModelConfig::new(enc, mode, 10, 3, 2);
        cfg.d_arc = 4;
        cfg.d_label = 4;
        ParserModel::new(cfg, 7).unwrap()
    }

    fn input() -> ModelInput {
        ModelInput {
            word_ids: vec![2, 5, 6, 7],
            positions: vec![0, 1, 2, 3],
            segments: vec![0; 4],
            dataset_id: 1,
            heads: vec![2, 0, 2],
            labels: vec![1, 0, 2],
        }
    }

    #[test]
    fn mode_parsing_is_case_insensitive() {
        assert_eq!("BOTH".parse::<InjectionMode>().unwrap(), InjectionMode::Both);
        assert_eq!("decoder".parse::<InjectionMode>().unwrap(), InjectionMode::Decoder);
        assert!("sideways".parse::<InjectionMode>().is_err());
    }

    #[test]
    fn scorer_width_follows_mode() {
        assert_eq!(tiny(InjectionMode::None).scorer.config.d_in, 8);
        assert_eq!(tiny(InjectionMode::Encoder).scorer.config.d_in, 8);
        assert_eq!(tiny(InjectionMode::Decoder).scorer.config.d_in, 20);
        assert_eq!(tiny(InjectionMode::Both).scorer.config.d_in, 20);
    }

    #[test]
    fn dataset_tables_exist_only_when_used() {
        let names = |m: InjectionMode| {
            tiny(m)
                .named_parameters()
                .into_iter()
                .map(|(n, _)| n)
                .filter(|n| n.contains("dataset"))
                .collect::<Vec<_>>()
        };
        assert!(names(InjectionMode::None).is_empty());
        assert_eq!(names(InjectionMode::Encoder), ["embeddings.dataset_encoder"]);
        assert_eq!(names(InjectionMode::Decoder), ["embeddings.dataset_decoder"]);
        assert_eq!(names(InjectionMode::Both).len(), 2);
    }

    #[test]
    fn predictions_are_trees_of_the_right_length() {
        for mode in InjectionMode::ALL {
            let p = tiny(mode).predict(&input(), Decoding::Mst).unwrap();
            assert_eq!(p.heads.len(), 3);
            assert!(crate::decode::is_single_root_tree(&p.heads));
            assert!(p.labels.iter().all(|&l| l < 3));
        }
    }

    #[test]
    fn invalid_dataset_is_rejected_under_injection() {
        let mut bad = input();
        bad.dataset_id = 5;
        assert!(tiny(InjectionMode::Encoder).loss(&bad, None).is_err());
        assert!(tiny(InjectionMode::None).loss(&bad, None).is_ok());
    }

    #[test]
    fn deep_clone_does_not_share_storage() {
        let m = tiny(InjectionMode::Both);
        let c = m.deep_clone();
        let before = c.predict(&input(), Decoding::Mst).unwrap();
        for (_, t) in m.named_parameters() {
            t.data_mut().iter_mut().for_each(|v| *v += 1.0);
        }
        assert_eq!(c.predict(&input(), Decoding::Mst).unwrap(), before);
        let (a, _) = c.scores(&input()).unwrap();
        let (b, _) = m.scores(&input()).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn freezing_removes_trainable_parameters() {
        let mut m = tiny(InjectionMode::Decoder);
        let all = m.trainable_parameters().len();
        m.zero_and_freeze_dataset_tables();
        assert_eq!(m.trainable_parameters().len(), all - 1);
        assert!(m.freeze("nope").is_err());
    }

    #[test]
    fn load_rejects_shape_mismatch() {
        let m = tiny(InjectionMode::None);
        let mut blobs: Vec<_> = m
            .named_parameters()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec(), t.to_vec()))
            .collect();
        assert!(m.load_parameters(&blobs).is_ok());
        blobs[0].1 = vec![1];
        assert!(m.load_parameters(&blobs).is_err());
        blobs.pop();
        assert!(m.load_parameters(&blobs).is_err());
    }
}
