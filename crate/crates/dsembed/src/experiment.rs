//! The full matrix of regimes, modes, groups and seeds.
//!
//! Run directory layout:
//!
//! ```text
//! config.toml                      verbatim copy of the experiment config
//! cells/<setting>/<group>/seed-<s>/
//!     status.json                  ok or the error of this cell
//!     reports.json  log.tsv  <treebank>.pred.conllu  [model.dsm]
//! manifest.json                    every cell with its status
//! per_seed.tsv  mean.tsv  mean_reports.json  subsets.tsv  subsets.txt
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use dsembed_core::conllu::{split_treebank_with, Sentence, SplitResult, Treebank};
use dsembed_core::eval::{aggregate_subsets, attach_baseline, evaluate_las_with, seed_average, EvalReport, SubsetTable};
use dsembed_core::InjectionMode;
use serde::{Deserialize, Serialize};

use crate::config::{EvalSplit, ExperimentConfig, Group, Setting};
use crate::error::{io_err, Result};
use crate::io::{read_treebank, write_treebank};
use crate::report::{reports_tsv, seed_reports_tsv, subset_text, subset_tsv, SettingReports};
use crate::train::{parse_treebank, train, Member};

/// A treebank after splitting, with its evaluation sentences.
#[derive(Debug, Clone)]
pub struct PreparedTreebank {
    pub source: Treebank,
    pub split: SplitResult,
    pub eval: Vec<Sentence>,
}

#[derive(Debug, Clone)]
pub struct Cell {
    pub setting: Setting,
    pub group: Group,
    pub seed: u64,
}

impl Cell {
    pub fn dir(&self, run_dir: &Path) -> PathBuf {
        run_dir
            .join("cells")
            .join(&self.setting.name)
            .join(&self.group.name)
            .join(format!("seed-{}", self.seed))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStatus {
    pub setting: String,
    pub group: String,
    pub seed: u64,
    pub ok: bool,
    pub error: Option<String>,
    pub best_epoch: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub cells: Vec<CellStatus>,
    pub failures: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentResults {
    pub manifest: Manifest,
    /// `(seed, setting, report)` for every successful cell member.
    pub per_seed: Vec<(u64, String, EvalReport)>,
    pub means: Vec<SettingReports>,
    pub subsets: SubsetTable,
}

pub fn prepare(config: &ExperimentConfig) -> Result<Vec<PreparedTreebank>> {
    config
        .treebanks
        .iter()
        .map(|entry| {
            let mut source = read_treebank(&entry.path, &entry.name)?;
            source.language = entry.language().to_string();
            source.cluster = entry.cluster.clone();
            let split = split_treebank_with(&source, config.split.seed, &config.split.policy)?;
            let eval = match (config.eval_split, &entry.test) {
                (EvalSplit::Test, Some(path)) => read_treebank(path, &entry.name)?.sentences,
                _ => split.dev.clone(),
            };
            Ok(PreparedTreebank { source, split, eval })
        })
        .collect()
}

pub fn cells(config: &ExperimentConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for setting in config.settings() {
        for group in config.groups(setting.regime) {
            for &seed in &config.seeds {
                out.push(Cell {
                    setting: setting.clone(),
                    group: group.clone(),
                    seed,
                });
            }
        }
    }
    out
}

/// Trains one cell and evaluates every member of its group.
pub fn run_cell(config: &ExperimentConfig, data: &[PreparedTreebank], cell: &Cell, dir: &Path) -> Result<(usize, Vec<EvalReport>)> {
    let fold_tune = config.eval_split == EvalSplit::Test && config.test_protocol.concat_tune;
    let train_sets: Vec<Vec<Sentence>> = cell
        .group
        .members
        .iter()
        .map(|&i| {
            let s = &data[i].split;
            let mut t = s.train.clone();
            if fold_tune {
                t.extend(s.tune.iter().cloned());
            }
            t
        })
        .collect();
    let members: Vec<Member<'_>> = cell
        .group
        .members
        .iter()
        .zip(&train_sets)
        .map(|(&i, train)| Member {
            name: &config.treebanks[i].name,
            train,
            tune: if fold_tune { &[] } else { &data[i].split.tune },
        })
        .collect();
    let mode = if cell.setting.regime == crate::config::Regime::Mono {
        InjectionMode::None
    } else {
        cell.setting.mode
    };
    let artifact = train(&config.architecture, mode, &config.train, &members, cell.seed)?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut log = String::from("epoch\tmean_loss\ttune_uas\ttune_las\n");
    for e in &artifact.log {
        log.push_str(&format!("{}\t{:.6}\t{:.2}\t{:.2}\n", e.epoch, e.mean_loss, e.tune_uas, e.tune_las));
    }
    let log_path = dir.join("log.tsv");
    fs::write(&log_path, log).map_err(io_err(&log_path))?;
    if config.save_models {
        artifact.save(&dir.join("model.dsm"))?;
    }

    let mut reports = Vec::new();
    for (&i, train) in cell.group.members.iter().zip(&train_sets) {
        let entry = &config.treebanks[i];
        let gold = Treebank::new(&entry.name, data[i].eval.clone());
        let pred = parse_treebank(&artifact, &gold, &entry.name, config.train.decoding)?;
        write_treebank(&dir.join(format!("{}.pred.conllu", entry.name)), &pred)?;
        let mut r = evaluate_las_with(&gold, &pred, config.train.label_match)?;
        r.treebank = entry.name.clone();
        r.metadata.train_size = train.len();
        r.metadata.cluster_size = config.cluster_size(i);
        r.metadata.has_same_language_treebank = config.has_same_language(i);
        reports.push(r);
    }
    let path = dir.join("reports.json");
    fs::write(&path, serde_json::to_vec_pretty(&reports)?).map_err(io_err(&path))?;
    Ok((artifact.best_epoch, reports))
}

/// Seed means per setting in config order, with the mono baseline attached
/// when a `mono` setting exists.
pub fn summarize(config: &ExperimentConfig, per_seed: &[(u64, String, EvalReport)]) -> Result<(Vec<SettingReports>, SubsetTable)> {
    let mut means = Vec::new();
    for setting in config.settings() {
        let mut reports = Vec::new();
        for tb in &config.treebanks {
            let runs: Vec<EvalReport> = per_seed
                .iter()
                .filter(|(_, s, r)| *s == setting.name && r.treebank == tb.name)
                .map(|(_, _, r)| r.clone())
                .collect();
            if !runs.is_empty() {
                reports.push(seed_average(&runs)?);
            }
        }
        means.push(SettingReports {
            setting: setting.name,
            reports,
        });
    }
    let mono = means.iter().find(|s| s.setting == "mono").map(|s| s.reports.clone());
    let with_baseline = match &mono {
        Some(mono) => {
            for s in &mut means {
                attach_baseline(&mut s.reports, mono);
            }
            means
                .iter()
                .all(|s| s.reports.iter().all(|r| r.metadata.mono_baseline_las.is_some()))
        }
        None => false,
    };
    let columns: Vec<(String, Vec<EvalReport>)> =
        means.iter().map(|s| (s.setting.clone(), s.reports.clone())).collect();
    let table = aggregate_subsets(&columns, with_baseline)?;
    Ok((means, table))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(io_err(path))
}

/// Runs every cell, keeping going past failures, and writes all outputs
/// under `run_dir`. `config_text` is copied verbatim.
type CellOutcome = (CellStatus, Vec<EvalReport>);

pub fn run_experiment(config: &ExperimentConfig, config_text: &str, run_dir: &Path) -> Result<ExperimentResults> {
    config.validate()?;
    fs::create_dir_all(run_dir).map_err(io_err(run_dir))?;
    write(&run_dir.join("config.toml"), config_text)?;
    let data = prepare(config)?;
    let cells = cells(config);

    let next = AtomicUsize::new(0);
    let done: Mutex<Vec<Option<CellOutcome>>> = Mutex::new(vec![None; cells.len()]);
    std::thread::scope(|scope| {
        for _ in 0..config.workers.min(cells.len()) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(cell) = cells.get(k) else { break };
                let dir = cell.dir(run_dir);
                let outcome = run_cell(config, &data, cell, &dir);
                let status = CellStatus {
                    setting: cell.setting.name.clone(),
                    group: cell.group.name.clone(),
                    seed: cell.seed,
                    ok: outcome.is_ok(),
                    error: outcome.as_ref().err().map(ToString::to_string),
                    best_epoch: outcome.as_ref().ok().map(|(e, _)| *e),
                };
                if fs::create_dir_all(&dir).is_ok() {
                    let _ = fs::write(dir.join("status.json"), serde_json::to_vec_pretty(&status).unwrap_or_default());
                }
                let reports = outcome.map(|(_, r)| r).unwrap_or_default();
                done.lock().expect("no poisoned workers")[k] = Some((status, reports));
            });
        }
    });

    let mut statuses = Vec::new();
    let mut per_seed = Vec::new();
    for (cell, slot) in cells.iter().zip(done.into_inner().expect("workers joined")) {
        let (status, reports) = slot.expect("every cell ran");
        statuses.push(status);
        per_seed.extend(reports.into_iter().map(|r| (cell.seed, cell.setting.name.clone(), r)));
    }
    let manifest = Manifest {
        name: config.name.clone(),
        failures: statuses.iter().filter(|s| !s.ok).count(),
        cells: statuses,
    };
    write(&run_dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    write(&run_dir.join("per_seed.tsv"), seed_reports_tsv(&per_seed))?;

    let (means, subsets) = summarize(config, &per_seed)?;
    write(&run_dir.join("mean.tsv"), reports_tsv(&means))?;
    write(&run_dir.join("mean_reports.json"), serde_json::to_vec_pretty(&means)?)?;
    write(&run_dir.join("subsets.tsv"), subset_tsv(&subsets))?;
    write(&run_dir.join("subsets.txt"), subset_text(&subsets))?;
    Ok(ExperimentResults {
        manifest,
        per_seed,
        means,
        subsets,
    })
}
