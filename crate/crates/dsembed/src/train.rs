//! Training one parser on a group of treebanks.

use dsembed_core::conllu::{encode_sentence, encode_unlabeled, ModelInput, Sentence, Treebank, Vocabulary};
use dsembed_core::encoder::EncoderConfig;
use dsembed_core::eval::{evaluate_las_with, LabelMatch};
use dsembed_core::model::Decoding;
use dsembed_core::tensor::{Adam, AdamConfig};
use dsembed_core::{Error as CoreError, InjectionMode, ModelConfig, ParserModel};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::artifact::{EpochRecord, ModelArtifact};
use crate::error::Result;

/// Network sizes shared by every model of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Architecture {
    pub encoder: EncoderConfig,
    pub d_arc: usize,
    pub d_label: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            encoder: EncoderConfig::default(),
            d_arc: 32,
            d_label: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSettings {
    pub epochs: usize,
    /// Sentences per optimizer step.
    pub batch_size: usize,
    pub optimizer: AdamConfig,
    pub decoding: Decoding,
    pub label_match: LabelMatch,
    /// Words seen fewer times map to the unknown-word id.
    pub min_count: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            epochs: 60,
            batch_size: 32,
            optimizer: AdamConfig::default(),
            decoding: Decoding::Mst,
            label_match: LabelMatch::Full,
            min_count: 1,
        }
    }
}

/// Training and tune sentences of one treebank of a group.
#[derive(Debug, Clone, Copy)]
pub struct Member<'a> {
    pub name: &'a str,
    pub train: &'a [Sentence],
    pub tune: &'a [Sentence],
}

pub fn build_group_vocab(members: &[Member<'_>], min_count: usize) -> Vocabulary {
    let sources: Vec<(&str, &[Sentence])> = members.iter().map(|m| (m.name, m.train)).collect();
    Vocabulary::build(&sources, min_count)
}

pub fn init_model(arch: &Architecture, mode: InjectionMode, vocab: &Vocabulary, seed: u64) -> Result<ParserModel> {
    let mut config = ModelConfig::new(arch.encoder, mode, vocab.n_words(), vocab.n_labels(), vocab.n_datasets());
    config.d_arc = arch.d_arc;
    config.d_label = arch.d_label;
    Ok(ParserModel::new(config, seed)?)
}

/// Builds the vocabulary over the group's training splits, initializes a
/// model from `seed` and trains it.
pub fn train(
    arch: &Architecture,
    mode: InjectionMode,
    settings: &TrainSettings,
    members: &[Member<'_>],
    seed: u64,
) -> Result<ModelArtifact> {
    let vocab = build_group_vocab(members, settings.min_count);
    let model = init_model(arch, mode, &vocab, seed)?;
    train_from(model, vocab, settings, members, seed)
}

/// 1-based epoch with the highest tune LAS; ties go to the earlier epoch.
pub fn best_epoch(tune_las: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &las) in tune_las.iter().enumerate() {
        if best.is_none_or(|(_, b)| las > b) {
            best = Some((i + 1, las));
        }
    }
    best.map(|(e, _)| e)
}

/// Trains `model` in place of a fresh initialization: pooled training
/// sentences are reshuffled every epoch, each batch takes one Adam step on
/// the mean sentence loss, and after every epoch the concatenated tune
/// splits are parsed. The returned parameters are those of the best epoch.
pub fn train_from(
    model: ParserModel,
    vocab: Vocabulary,
    settings: &TrainSettings,
    members: &[Member<'_>],
    seed: u64,
) -> Result<ModelArtifact> {
    let mut pool: Vec<ModelInput> = Vec::new();
    for m in members {
        let id = vocab.require_dataset(m.name)?;
        for s in m.train {
            pool.push(encode_sentence(s, &vocab, id)?);
        }
    }
    if pool.is_empty() {
        return Err(CoreError::Config("no training sentences in the group".into()).into());
    }
    if settings.batch_size == 0 || settings.epochs == 0 {
        return Err(CoreError::Config("epochs and batch_size must be positive".into()).into());
    }
    let tune: Vec<(&str, &Sentence)> = members
        .iter()
        .flat_map(|m| m.tune.iter().map(move |s| (m.name, s)))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut adam = Adam::new(settings.optimizer, model.trainable_parameters());
    let mut log = Vec::with_capacity(settings.epochs);
    let mut best: Option<(f64, Vec<(String, Vec<usize>, Vec<f64>)>)> = None;
    let mut best_at = 0;
    let mut order: Vec<usize> = (0..pool.len()).collect();

    for epoch in 1..=settings.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (step, batch) in order.chunks(settings.batch_size).enumerate() {
            adam.zero_grad();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let loss = model.loss(&pool[i], Some(&mut rng))?;
                let value = loss.item();
                if !value.is_finite() {
                    return Err(CoreError::Numeric(format!(
                        "non-finite loss {value} at epoch {epoch}, step {}",
                        step + 1
                    ))
                    .into());
                }
                total += value;
                loss.scale(scale).backward()?;
            }
            adam.step()?;
        }

        let (tune_uas, tune_las) = if tune.is_empty() {
            (0.0, 0.0)
        } else {
            let gold = Treebank::new("tune", tune.iter().map(|(_, s)| (*s).clone()).collect());
            let mut pred = gold.clone();
            for ((name, _), s) in tune.iter().zip(&mut pred.sentences) {
                parse_sentence(&model, &vocab, s, name, settings.decoding)?;
            }
            let r = evaluate_las_with(&gold, &pred, settings.label_match)?;
            (r.uas, r.las)
        };
        log.push(EpochRecord {
            epoch,
            mean_loss: total / pool.len() as f64,
            tune_uas,
            tune_las,
        });
        // Without tune data the last epoch is kept.
        if tune.is_empty() || best.as_ref().is_none_or(|(b, _)| tune_las > *b) {
            best = Some((tune_las, snapshot(&model)));
            best_at = epoch;
        }
    }

    let (_, params) = best.expect("at least one epoch");
    model.load_parameters(&params)?;
    Ok(ModelArtifact {
        model,
        vocab,
        seed,
        log,
        best_epoch: best_at,
    })
}

fn snapshot(model: &ParserModel) -> Vec<(String, Vec<usize>, Vec<f64>)> {
    model
        .named_parameters()
        .into_iter()
        .map(|(n, t)| (n, t.shape().to_vec(), t.to_vec()))
        .collect()
}

/// Dataset id used for `name`; injection modes require a known dataset.
pub fn dataset_for(model: &ParserModel, vocab: &Vocabulary, name: &str) -> Result<usize> {
    if model.mode() == InjectionMode::None {
        Ok(vocab.dataset_id(name).unwrap_or(0))
    } else {
        Ok(vocab.require_dataset(name)?)
    }
}

/// Replaces the heads and deprels of `sentence` with the model's parse.
pub fn parse_sentence(
    model: &ParserModel,
    vocab: &Vocabulary,
    sentence: &mut Sentence,
    dataset: &str,
    decoding: Decoding,
) -> Result<()> {
    if sentence.is_empty() {
        return Ok(());
    }
    let id = dataset_for(model, vocab, dataset)?;
    let input = encode_unlabeled(sentence, vocab, id)?;
    let p = model.predict(&input, decoding)?;
    let labels: Vec<&str> = p
        .labels
        .iter()
        .map(|&l| vocab.label(l).expect("label id from the scorer"))
        .collect();
    sentence.set_parse(&p.heads, &labels);
    Ok(())
}

/// Parses every sentence of `treebank` as data from `dataset`; all other
/// columns pass through.
pub fn parse_treebank(artifact: &ModelArtifact, treebank: &Treebank, dataset: &str, decoding: Decoding) -> Result<Treebank> {
    dataset_for(&artifact.model, &artifact.vocab, dataset)?;
    let mut out = treebank.clone();
    for s in &mut out.sentences {
        parse_sentence(&artifact.model, &artifact.vocab, s, dataset, decoding)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn best_epoch_prefers_the_earlier_tie() {
        assert_eq!(best_epoch(&[10.0, 50.0, 30.0]), Some(2));
        assert_eq!(best_epoch(&[40.0, 40.0]), Some(1));
        assert_eq!(best_epoch(&[]), None);
    }
}
