//! Declarative experiment description, read from TOML.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use dsembed_core::conllu::{language_from_name, SplitPolicy};
use dsembed_core::{Error as CoreError, InjectionMode};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Result};
use crate::train::{Architecture, TrainSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Regime {
    /// One model per treebank, no dataset embedding.
    Mono,
    /// One model per cluster, no dataset embedding.
    Concat,
    /// One model per cluster with each configured injection mode.
    Cluster,
    /// One model over every treebank with each configured injection mode.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EvalSplit {
    #[default]
    Dev,
    /// The separate `test` file of every treebank.
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreebankEntry {
    pub name: String,
    pub path: PathBuf,
    /// Defaults to the name prefix before `_`.
    #[serde(default)]
    pub language: Option<String>,
    #[serde(default)]
    pub cluster: Option<String>,
    #[serde(default)]
    pub test: Option<PathBuf>,
}

impl TreebankEntry {
    pub fn language(&self) -> &str {
        self.language.as_deref().unwrap_or_else(|| language_from_name(&self.name))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSettings {
    #[serde(flatten)]
    pub policy: SplitPolicy,
    /// Only used when `policy.shuffle` is set.
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TestProtocol {
    /// Fold the tune split into training when evaluating on test; the last
    /// epoch is then kept.
    pub concat_tune: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub treebanks: Vec<TreebankEntry>,
    pub regimes: Vec<Regime>,
    /// Injection modes for the CLUSTER and ALL regimes.
    pub modes: Vec<InjectionMode>,
    pub seeds: Vec<u64>,
    pub eval_split: EvalSplit,
    pub architecture: Architecture,
    pub train: TrainSettings,
    pub split: SplitSettings,
    pub test_protocol: TestProtocol,
    /// Cells trained concurrently.
    pub workers: usize,
    pub save_models: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "experiment".into(),
            treebanks: Vec::new(),
            regimes: vec![Regime::Mono, Regime::Concat, Regime::Cluster],
            modes: vec![InjectionMode::Decoder, InjectionMode::Encoder, InjectionMode::Both],
            seeds: (1..=5).collect(),
            eval_split: EvalSplit::Dev,
            architecture: Architecture::default(),
            train: TrainSettings::default(),
            split: SplitSettings::default(),
            test_protocol: TestProtocol::default(),
            workers: 1,
            save_models: false,
        }
    }
}

/// One column of the results: a regime with a fixed injection mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Setting {
    pub name: String,
    pub regime: Regime,
    pub mode: InjectionMode,
}

/// Treebanks trained together, as indices into `treebanks`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Group {
    pub name: String,
    pub members: Vec<usize>,
}

fn config_err(msg: String) -> crate::Error {
    CoreError::Config(msg).into()
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Reads `path` and resolves relative treebank paths against its
    /// directory. Returns the config and the verbatim text.
    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for tb in &mut config.treebanks {
            tb.path = base.join(&tb.path);
            if let Some(t) = &mut tb.test {
                *t = base.join(&*t);
            }
        }
        Ok((config, text))
    }

    pub fn validate(&self) -> Result<()> {
        if self.treebanks.is_empty() {
            return Err(config_err("no treebanks listed".into()));
        }
        let mut names = BTreeSet::new();
        for tb in &self.treebanks {
            if !names.insert(tb.name.as_str()) {
                return Err(config_err(format!("treebank name `{}` listed twice", tb.name)));
            }
            if self.eval_split == EvalSplit::Test && tb.test.is_none() {
                return Err(config_err(format!("eval_split is TEST but `{}` has no test file", tb.name)));
            }
        }
        if self.regimes.is_empty() || self.seeds.is_empty() {
            return Err(config_err("regimes and seeds must not be empty".into()));
        }
        let needs_modes = self.regimes.iter().any(|r| matches!(r, Regime::Cluster | Regime::All));
        if needs_modes && self.modes.is_empty() {
            return Err(config_err("CLUSTER and ALL need at least one mode".into()));
        }
        if self.workers == 0 {
            return Err(config_err("workers must be at least 1".into()));
        }
        self.architecture.encoder.validate()?;
        Ok(())
    }

    /// Settings in config order: `mono`, `concat`, `cluster-<mode>`,
    /// `all-<mode>`.
    pub fn settings(&self) -> Vec<Setting> {
        let mut out = Vec::new();
        for &regime in &self.regimes {
            match regime {
                Regime::Mono | Regime::Concat => out.push(Setting {
                    name: if regime == Regime::Mono { "mono" } else { "concat" }.into(),
                    regime,
                    mode: InjectionMode::None,
                }),
                Regime::Cluster | Regime::All => {
                    let prefix = if regime == Regime::Cluster { "cluster" } else { "all" };
                    for &mode in &self.modes {
                        out.push(Setting {
                            name: format!("{prefix}-{mode}"),
                            regime,
                            mode,
                        });
                    }
                }
            }
        }
        out
    }

    /// Training groups of a regime. Treebanks without a cluster form their
    /// own group under CONCAT and CLUSTER.
    pub fn groups(&self, regime: Regime) -> Vec<Group> {
        match regime {
            Regime::Mono => self
                .treebanks
                .iter()
                .enumerate()
                .map(|(i, tb)| Group {
                    name: tb.name.clone(),
                    members: vec![i],
                })
                .collect(),
            Regime::All => vec![Group {
                name: "all".into(),
                members: (0..self.treebanks.len()).collect(),
            }],
            Regime::Concat | Regime::Cluster => {
                let mut groups: Vec<Group> = Vec::new();
                for (i, tb) in self.treebanks.iter().enumerate() {
                    let name = tb.cluster.clone().unwrap_or_else(|| tb.name.clone());
                    match groups.iter_mut().find(|g| g.name == name) {
                        Some(g) => g.members.push(i),
                        None => groups.push(Group { name, members: vec![i] }),
                    }
                }
                groups
            }
        }
    }

    /// Number of treebanks in the config cluster of treebank `i`.
    pub fn cluster_size(&self, i: usize) -> usize {
        match &self.treebanks[i].cluster {
            Some(c) => self.treebanks.iter().filter(|t| t.cluster.as_ref() == Some(c)).count(),
            None => 1,
        }
    }

    /// Whether another treebank of the same language shares the cluster.
    pub fn has_same_language(&self, i: usize) -> bool {
        let me = &self.treebanks[i];
        me.cluster.is_some()
            && self
                .treebanks
                .iter()
                .enumerate()
                .any(|(j, t)| j != i && t.cluster == me.cluster && t.language() == me.language())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = r#"
        regimes = ["MONO", "CONCAT", "CLUSTER", "ALL"]
        modes = ["encoder", "both"]
        seeds = [1, 2]

        [train]
        epochs = 3

        [[treebanks]]
        name = "nl_alpino"
        path = "nl.conllu"
        cluster = "af-de-nl"

        [[treebanks]]
        name = "nl_lassysmall"
        path = "nl2.conllu"
        cluster = "af-de-nl"

        [[treebanks]]
        name = "af_afribooms"
        path = "af.conllu"
        cluster = "af-de-nl"

        [[treebanks]]
        name = "kk_ktb"
        path = "kk.conllu"
    "#;

    #[test]
    fn parses_and_expands() {
        let c = ExperimentConfig::from_toml(TEXT).unwrap();
        c.validate().unwrap();
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.train.batch_size, 32);
        let names: Vec<_> = c.settings().into_iter().map(|s| s.name).collect();
        assert_eq!(names, ["mono", "concat", "cluster-encoder", "cluster-both", "all-encoder", "all-both"]);
        assert_eq!(c.groups(Regime::Mono).len(), 4);
        let clusters = c.groups(Regime::Cluster);
        assert_eq!(clusters.len(), 2);
        assert_eq!(clusters[0].members, [0, 1, 2]);
        assert_eq!(clusters[1].name, "kk_ktb");
        assert_eq!(c.groups(Regime::All)[0].members.len(), 4);
        assert_eq!(c.cluster_size(0), 3);
        assert_eq!(c.cluster_size(3), 1);
        assert!(c.has_same_language(0));
        assert!(!c.has_same_language(2));
        assert!(!c.has_same_language(3));
    }

    #[test]
    fn rejects_duplicates_and_missing_test_files() {
        let mut c = ExperimentConfig::from_toml(TEXT).unwrap();
        c.treebanks[1].name = "nl_alpino".into();
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::from_toml(TEXT).unwrap();
        c.eval_split = EvalSplit::Test;
        assert!(c.validate().is_err());
        assert!(ExperimentConfig::from_toml("regime = 3").is_err());
    }

    #[test]
    fn defaults_follow_the_experimental_setup() {
        let c = ExperimentConfig::default();
        assert_eq!(c.seeds, [1, 2, 3, 4, 5]);
        assert_eq!(c.train.epochs, 60);
        assert_eq!(c.train.batch_size, 32);
        assert_eq!(c.eval_split, EvalSplit::Dev);
    }
}
