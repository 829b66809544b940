use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{Sentence, Treebank};
use crate::{Error, Result};

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const ROOT_ID: usize = 2;

const RESERVED: [&str; 3] = ["<pad>", "<unk>", "<root>"];

/// Word, label and dataset inventories of one experiment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    words: Vec<String>,
    labels: Vec<String>,
    datasets: Vec<String>,
    #[serde(skip)]
    word_ids: BTreeMap<String, usize>,
    #[serde(skip)]
    label_ids: BTreeMap<String, usize>,
    #[serde(skip)]
    dataset_ids: BTreeMap<String, usize>,
}

fn index(items: &[String]) -> BTreeMap<String, usize> {
    items.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect()
}

impl Vocabulary {
    /// Builds the inventories from `(dataset name, training sentences)`
    /// pairs. Ids follow first occurrence, so identical input order gives
    /// identical ids.
    pub fn build(sources: &[(&str, &[Sentence])], min_count: usize) -> Self {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        let mut first_seen: Vec<&str> = Vec::new();
        let mut labels: Vec<String> = Vec::new();
        let mut label_ids = BTreeMap::new();
        let mut datasets = Vec::new();
        for (name, sentences) in sources {
            if !datasets.iter().any(|d: &String| d == name) {
                datasets.push(name.to_string());
            }
            for tok in sentences.iter().flat_map(|s| &s.tokens) {
                let c = counts.entry(tok.form.as_str()).or_insert(0);
                if *c == 0 {
                    first_seen.push(tok.form.as_str());
                }
                *c += 1;
                if !label_ids.contains_key(&tok.deprel) {
                    label_ids.insert(tok.deprel.clone(), labels.len());
                    labels.push(tok.deprel.clone());
                }
            }
        }
        let mut words: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        words.extend(
            first_seen
                .into_iter()
                .filter(|w| counts[w] >= min_count.max(1))
                .map(|w| w.to_string()),
        );
        Self::from_parts(words, labels, datasets)
    }

    /// Rebuilds lookup maps from the id-ordered inventories.
    pub fn from_parts(words: Vec<String>, labels: Vec<String>, datasets: Vec<String>) -> Self {
        Vocabulary {
            word_ids: index(&words),
            label_ids: index(&labels),
            dataset_ids: index(&datasets),
            words,
            labels,
            datasets,
        }
    }

    /// Restores the lookup maps after deserialization.
    pub fn reindex(self) -> Self {
        Self::from_parts(self.words, self.labels, self.datasets)
    }

    pub fn word_id(&self, form: &str) -> usize {
        self.word_ids.get(form).copied().unwrap_or(UNK_ID)
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        self.words.get(id).map(String::as_str)
    }

    pub fn label_id(&self, label: &str) -> Option<usize> {
        self.label_ids.get(label).copied()
    }

    pub fn label(&self, id: usize) -> Option<&str> {
        self.labels.get(id).map(String::as_str)
    }

    pub fn dataset_id(&self, name: &str) -> Option<usize> {
        self.dataset_ids.get(name).copied()
    }

    pub fn dataset(&self, id: usize) -> Option<&str> {
        self.datasets.get(id).map(String::as_str)
    }

    /// Dataset id for `name`, or an error listing the known datasets.
    pub fn require_dataset(&self, name: &str) -> Result<usize> {
        self.dataset_id(name).ok_or_else(|| Error::UnknownDataset {
            name: name.to_string(),
            known: self.datasets.join(", "),
        })
    }

    pub fn n_words(&self) -> usize {
        self.words.len()
    }

    pub fn n_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn n_datasets(&self) -> usize {
        self.datasets.len()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn datasets(&self) -> &[String] {
        &self.datasets
    }
}

/// Builds a vocabulary over the sentences of `treebanks` (pass training
/// splits); dataset ids follow the slice order.
pub fn build_vocab(treebanks: &[Treebank], min_count: usize) -> Vocabulary {
    let sources: Vec<(&str, &[Sentence])> = treebanks
        .iter()
        .map(|t| (t.name.as_str(), t.sentences.as_slice()))
        .collect();
    Vocabulary::build(&sources, min_count)
}

/// A sentence in model index space. Position 0 is the artificial root, so
/// sequences have `n + 1` entries while `heads` and `labels` have `n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelInput {
    pub word_ids: Vec<usize>,
    pub positions: Vec<usize>,
    pub segments: Vec<usize>,
    pub dataset_id: usize,
    pub heads: Vec<usize>,
    /// Empty for unlabeled inputs.
    pub labels: Vec<usize>,
}

impl ModelInput {
    /// Number of real words.
    pub fn len(&self) -> usize {
        self.word_ids.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn encode_words(s: &Sentence, v: &Vocabulary, dataset_id: usize) -> Result<ModelInput> {
    if dataset_id >= v.n_datasets() {
        return Err(Error::Index {
            what: "dataset id",
            index: dataset_id,
            size: v.n_datasets(),
        });
    }
    let n = s.len();
    let mut word_ids = Vec::with_capacity(n + 1);
    word_ids.push(ROOT_ID);
    word_ids.extend(s.tokens.iter().map(|t| v.word_id(&t.form)));
    Ok(ModelInput {
        word_ids,
        positions: (0..=n).collect(),
        segments: alloc::vec![0; n + 1],
        dataset_id,
        heads: s.heads(),
        labels: Vec::new(),
    })
}

/// Numericalizes a gold sentence; labels outside the vocabulary are errors.
pub fn encode_sentence(s: &Sentence, v: &Vocabulary, dataset_id: usize) -> Result<ModelInput> {
    let mut input = encode_words(s, v, dataset_id)?;
    input.labels = s
        .tokens
        .iter()
        .map(|t| v.label_id(&t.deprel).ok_or_else(|| Error::UnknownLabel(t.deprel.clone())))
        .collect::<Result<_>>()?;
    Ok(input)
}

/// Numericalizes a sentence for prediction; gold columns are carried over
/// as-is and labels are left empty.
pub fn encode_unlabeled(s: &Sentence, v: &Vocabulary, dataset_id: usize) -> Result<ModelInput> {
    encode_words(s, v, dataset_id)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tb(name: &str, words: &[(&str, usize, &str)]) -> Treebank {
        Treebank::new(name, alloc::vec![Sentence::from_triples(words)])
    }

    #[test]
    fn shared_labels_and_ordered_datasets() {
        let a = tb("a", &[("x", 2, "nsubj"), ("y", 0, "root")]);
        let b = tb("b", &[("y", 0, "root"), ("z", 1, "nsubj")]);
        let v = build_vocab(&[a, b], 1);
        assert_eq!(v.n_labels(), 2);
        assert_eq!(v.label_id("nsubj"), Some(0));
        assert_eq!(v.dataset_id("a"), Some(0));
        assert_eq!(v.dataset_id("b"), Some(1));
        assert_eq!(v.word_id("x"), 3);
    }

    #[test]
    fn rare_words_map_to_unk() {
        let a = tb("a", &[("once", 2, "dep"), ("twice", 0, "root"), ("twice", 2, "dep")]);
        let v = build_vocab(&[a], 2);
        assert_eq!(v.word_id("once"), UNK_ID);
        assert_ne!(v.word_id("twice"), UNK_ID);
        assert_eq!(v.word_id("never"), UNK_ID);
    }

    #[test]
    fn encoding_prepends_root() {
        let t = tb("a", &[("He", 2, "nsubj"), ("left", 0, "root")]);
        let v = build_vocab(core::slice::from_ref(&t), 1);
        let m = encode_sentence(&t.sentences[0], &v, 0).unwrap();
        assert_eq!(m.word_ids.len(), 3);
        assert_eq!(m.word_ids[0], ROOT_ID);
        assert_eq!(m.heads, alloc::vec![2, 0]);
        assert_eq!(m.positions, alloc::vec![0, 1, 2]);
        assert_eq!(m.segments, alloc::vec![0, 0, 0]);
        let oov = Sentence::from_triples(&[("She", 2, "nsubj"), ("left", 0, "root")]);
        assert_eq!(encode_sentence(&oov, &v, 0).unwrap().word_ids[1], UNK_ID);
        let unknown = Sentence::from_triples(&[("He", 0, "punct")]);
        assert!(matches!(encode_sentence(&unknown, &v, 0), Err(Error::UnknownLabel(_))));
        assert!(encode_unlabeled(&unknown, &v, 0).unwrap().labels.is_empty());
        assert!(encode_sentence(&t.sentences[0], &v, 1).is_err());
    }
}
