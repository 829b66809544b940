use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Sentence, Treebank};
use crate::{Error, Result};

/// Treebanks below this many sentences are split by proportion.
pub const PROPORTIONAL_LIMIT: usize = 3000;
/// Fixed tune and dev size for larger treebanks.
pub const HELD_OUT_SIZE: usize = 750;
pub const DEFAULT_CAP: usize = 20_000;

/// Where the sentence cap is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapPlacement {
    /// Cap only the training portion; tune and dev keep their policy size.
    #[default]
    AfterSplit,
    /// Truncate the whole treebank before splitting.
    BeforeSplit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitPolicy {
    pub cap: usize,
    pub cap_placement: CapPlacement,
    /// Shuffle (seeded) before splitting instead of cutting the file order.
    pub shuffle: bool,
}

impl Default for SplitPolicy {
    fn default() -> Self {
        SplitPolicy {
            cap: DEFAULT_CAP,
            cap_placement: CapPlacement::AfterSplit,
            shuffle: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSizes {
    pub train: usize,
    pub tune: usize,
    pub dev: usize,
    /// Sentences dropped by the cap.
    pub discarded: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SplitResult {
    pub train: Vec<Sentence>,
    pub tune: Vec<Sentence>,
    pub dev: Vec<Sentence>,
}

fn proportional(n: usize) -> (usize, usize, usize) {
    let train = n.div_ceil(2);
    let tune = n / 4;
    (train, tune, n - train - tune)
}

/// Split sizes for `n` sentences: below 3,000 sentences half/quarter/rest,
/// otherwise 750 each for tune and dev and the rest for training, with
/// training capped.
pub fn split_sizes(n: usize, policy: &SplitPolicy) -> Result<SplitSizes> {
    if n < 4 {
        return Err(Error::Size(format!(
            "cannot split a treebank of {n} sentences (need at least 4)"
        )));
    }
    let (usable, mut discarded) = match policy.cap_placement {
        CapPlacement::BeforeSplit if n > policy.cap => (policy.cap, n - policy.cap),
        _ => (n, 0),
    };
    let (mut train, tune, dev) = if usable < PROPORTIONAL_LIMIT {
        proportional(usable)
    } else {
        (usable - 2 * HELD_OUT_SIZE, HELD_OUT_SIZE, HELD_OUT_SIZE)
    };
    if train > policy.cap {
        discarded += train - policy.cap;
        train = policy.cap;
    }
    Ok(SplitSizes {
        train,
        tune,
        dev,
        discarded,
    })
}

/// Splits with the default policy: contiguous train | tune | dev in file
/// order. The seed only matters when shuffling is enabled.
pub fn split_treebank(treebank: &Treebank, seed: u64) -> Result<SplitResult> {
    split_treebank_with(treebank, seed, &SplitPolicy::default())
}

pub fn split_treebank_with(treebank: &Treebank, seed: u64, policy: &SplitPolicy) -> Result<SplitResult> {
    let n = treebank.sentences.len();
    let sizes = split_sizes(n, policy)?;
    let mut order: Vec<usize> = (0..n).collect();
    if policy.shuffle {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let usable = match policy.cap_placement {
        CapPlacement::BeforeSplit => n.min(policy.cap),
        CapPlacement::AfterSplit => n,
    };
    let order = &order[..usable];
    // Training comes first; an after-split cap drops its tail.
    let train_span = usable - sizes.tune - sizes.dev;
    let take = |idx: &[usize]| -> Vec<Sentence> {
        idx.iter().map(|&i| treebank.sentences[i].clone()).collect()
    };
    Ok(SplitResult {
        train: take(&order[..sizes.train]),
        tune: take(&order[train_span..train_span + sizes.tune]),
        dev: take(&order[train_span + sizes.tune..]),
    })
}
