use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dsembed::artifact::ModelArtifact;
use dsembed::config::ExperimentConfig;
use dsembed::core::conllu::{split_treebank_with, CapPlacement, Treebank};
use dsembed::core::eval::{aggregate_subsets, evaluate_las_with, LabelMatch};
use dsembed::core::model::Decoding;
use dsembed::core::{Error as CoreError, InjectionMode};
use dsembed::experiment::run_experiment;
use dsembed::io::{name_from_path, read_treebank, write_treebank};
use dsembed::report::{subset_text, subset_tsv, SettingReports};
use dsembed::train::{parse_treebank, train, Member};
use dsembed::{gradcheck, Error, Result};

#[derive(Parser)]
#[command(name = "dsembed", version, about = "Dependency parsing with dataset embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split a CoNLL-U file into train, tune and dev files.
    Split {
        input: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Defaults to the file name up to `-ud-`.
        #[arg(long)]
        name: Option<String>,
        #[arg(long, default_value_t = 20_000)]
        cap: usize,
        /// Truncate the whole file to the cap before splitting.
        #[arg(long)]
        cap_before_split: bool,
        #[arg(long)]
        shuffle: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train one parser on one or more treebanks.
    Train {
        /// `NAME=PATH` or `PATH`; repeat for a group.
        #[arg(long = "treebank", required = true)]
        treebanks: Vec<String>,
        #[arg(long, default_value = "none")]
        mode: InjectionMode,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Experiment config supplying `architecture`, `train` and `split`.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        /// Train and tune on whole files instead of splitting them.
        #[arg(long)]
        no_split: bool,
    },
    /// Parse a CoNLL-U file with a trained model.
    Parse {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Dataset the sentences come from; required under injection.
        #[arg(long)]
        dataset: Option<String>,
        #[arg(long, default_value = "mst")]
        decoding: Decoding,
    },
    /// Score a predicted CoNLL-U file against gold.
    Eval {
        gold: PathBuf,
        pred: PathBuf,
        #[arg(long, value_enum, default_value = "full")]
        label_match: LabelArg,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Subset table from setting reports (such as `mean_reports.json`).
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        tsv: Option<PathBuf>,
    },
    /// Run a full experiment matrix.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        run_dir: PathBuf,
    },
    /// Run the gradient verification suite.
    Gradcheck {
        #[arg(long, default_value_t = 5)]
        seeds: u64,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum LabelArg {
    Full,
    Base,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn split(input: &Path, out_dir: &Path, name: Option<String>, cap: usize, before: bool, shuffle: bool, seed: u64) -> Result<()> {
    let name = name.unwrap_or_else(|| name_from_path(input));
    let tb = read_treebank(input, &name)?;
    let mut policy = dsembed::core::conllu::SplitPolicy {
        cap,
        shuffle,
        ..Default::default()
    };
    if before {
        policy.cap_placement = CapPlacement::BeforeSplit;
    }
    let r = split_treebank_with(&tb, seed, &policy)?;
    for (part, sentences) in [("train", r.train), ("tune", r.tune), ("dev", r.dev)] {
        let n = sentences.len();
        let path = out_dir.join(format!("{name}-{part}.conllu"));
        write_treebank(&path, &Treebank::new(&name, sentences))?;
        println!("{part}\t{n}\t{}", path.display());
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn train_cmd(
    specs: &[String],
    mode: InjectionMode,
    seed: u64,
    out: &Path,
    config: Option<&Path>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    no_split: bool,
) -> Result<()> {
    let mut cfg = match config {
        Some(p) => ExperimentConfig::load(p)?.0,
        None => ExperimentConfig::default(),
    };
    cfg.train.epochs = epochs.unwrap_or(cfg.train.epochs);
    cfg.train.batch_size = batch_size.unwrap_or(cfg.train.batch_size);
    let mut data = Vec::new();
    for spec in specs {
        let (name, path) = match spec.split_once('=') {
            Some((n, p)) => (n.to_string(), PathBuf::from(p)),
            None => (name_from_path(Path::new(spec)), PathBuf::from(spec)),
        };
        let tb = read_treebank(&path, &name)?;
        let (train, tune) = if no_split {
            (tb.sentences.clone(), tb.sentences)
        } else {
            let r = split_treebank_with(&tb, cfg.split.seed, &cfg.split.policy)?;
            (r.train, r.tune)
        };
        data.push((name, train, tune));
    }
    let members: Vec<Member<'_>> = data
        .iter()
        .map(|(name, train, tune)| Member { name, train, tune })
        .collect();
    let artifact = train(&cfg.architecture, mode, &cfg.train, &members, seed)?;
    for e in &artifact.log {
        println!("epoch {}\tloss {:.4}\ttune UAS {:.2}\tLAS {:.2}", e.epoch, e.mean_loss, e.tune_uas, e.tune_las);
    }
    println!("best epoch {}", artifact.best_epoch);
    artifact.save(out)
}

fn parse_cmd(model: &Path, input: &Path, output: &Path, dataset: Option<String>, decoding: Decoding) -> Result<()> {
    let artifact = ModelArtifact::load(model)?;
    let dataset = match dataset {
        Some(d) => d,
        None if artifact.model.mode() == InjectionMode::None => name_from_path(input),
        None => {
            return Err(CoreError::UnknownDataset {
                name: "(none given)".into(),
                known: artifact.vocab.datasets().join(", "),
            }
            .into())
        }
    };
    let tb = read_treebank(input, &dataset)?;
    let pred = parse_treebank(&artifact, &tb, &dataset, decoding)?;
    write_treebank(output, &pred)
}

fn eval_cmd(gold: &Path, pred: &Path, label: LabelArg, json: Option<&Path>) -> Result<()> {
    let name = name_from_path(gold);
    let g = read_treebank(gold, &name)?;
    let p = read_treebank(pred, &name)?;
    let labels = match label {
        LabelArg::Full => LabelMatch::Full,
        LabelArg::Base => LabelMatch::Base,
    };
    let r = evaluate_las_with(&g, &p, labels)?;
    println!("UAS {:.2}\nLAS {:.2}\ntokens {}", r.uas, r.las, r.n_scored_tokens);
    if let Some(path) = json {
        write_text(path, &serde_json::to_string_pretty(&r)?)?;
    }
    Ok(())
}

fn report_cmd(inputs: &[PathBuf], tsv: Option<&Path>) -> Result<()> {
    let mut settings: Vec<SettingReports> = Vec::new();
    for path in inputs {
        let bytes = fs::read(path).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        settings.extend(serde_json::from_slice::<Vec<SettingReports>>(&bytes)?);
    }
    let with_baseline = settings
        .iter()
        .all(|s| s.reports.iter().all(|r| r.metadata.mono_baseline_las.is_some()));
    let columns: Vec<_> = settings.into_iter().map(|s| (s.setting, s.reports)).collect();
    let table = aggregate_subsets(&columns, with_baseline)?;
    print!("{}", subset_text(&table));
    if let Some(path) = tsv {
        write_text(path, &subset_tsv(&table))?;
    }
    Ok(())
}

fn gradcheck_cmd(seeds: u64) -> Result<bool> {
    let seeds: Vec<u64> = (0..seeds).collect();
    let lines = gradcheck::run_suite(&seeds)?;
    let mut ok = true;
    for l in &lines {
        ok &= l.passed();
        println!(
            "{}\t{:<24} seed {}\tmax rel err {:.3e}\t{} coords",
            if l.passed() { "PASS" } else { "FAIL" },
            l.name,
            l.seed,
            l.max_relative_error,
            l.coordinates
        );
    }
    let worst = lines.iter().map(|l| l.max_relative_error).fold(0.0, f64::max);
    println!("{} checks, worst {worst:.3e}, tolerance {:.0e}", lines.len(), gradcheck::TOLERANCE);
    Ok(ok)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Split {
            input,
            out_dir,
            name,
            cap,
            cap_before_split,
            shuffle,
            seed,
        } => split(&input, &out_dir, name, cap, cap_before_split, shuffle, seed)?,
        Command::Train {
            treebanks,
            mode,
            seed,
            out,
            config,
            epochs,
            batch_size,
            no_split,
        } => train_cmd(&treebanks, mode, seed, &out, config.as_deref(), epochs, batch_size, no_split)?,
        Command::Parse {
            model,
            input,
            output,
            dataset,
            decoding,
        } => parse_cmd(&model, &input, &output, dataset, decoding)?,
        Command::Eval {
            gold,
            pred,
            label_match,
            json,
        } => eval_cmd(&gold, &pred, label_match, json.as_deref())?,
        Command::Report { inputs, tsv } => report_cmd(&inputs, tsv.as_deref())?,
        Command::Experiment { config, run_dir } => {
            let (cfg, text) = ExperimentConfig::load(&config)?;
            let results = run_experiment(&cfg, &text, &run_dir)?;
            print!("{}", subset_text(&results.subsets));
            println!(
                "{} cells, {} failed; outputs in {}",
                results.manifest.cells.len(),
                results.manifest.failures,
                run_dir.display()
            );
            return Ok(results.manifest.failures == 0);
        }
        Command::Gradcheck { seeds } => return gradcheck_cmd(seeds),
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
