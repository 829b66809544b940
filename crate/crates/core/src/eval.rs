//! Attachment scores, seed averaging and subset aggregation.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::conllu::Treebank;
use crate::{Error, Result};

/// Size bucket upper bounds in training sentences: small, medium, large.
pub const SIZE_BUCKETS: [(&str, usize); 3] = [("small", 1_000), ("medium", 10_000), ("large", 20_000)];

/// How predicted and gold dependency relations are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMatch {
    /// Whole deprel string, subtypes included.
    #[default]
    Full,
    /// Only the part before the first `:`.
    Base,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub train_size: usize,
    pub cluster_size: usize,
    pub has_same_language_treebank: bool,
    pub mono_baseline_las: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub treebank: String,
    pub uas: f64,
    pub las: f64,
    pub n_scored_tokens: usize,
    pub metadata: ReportMetadata,
}

pub fn evaluate_las(gold: &Treebank, pred: &Treebank) -> Result<EvalReport> {
    evaluate_las_with(gold, pred, LabelMatch::Full)
}

pub fn evaluate_las_with(gold: &Treebank, pred: &Treebank, labels: LabelMatch) -> Result<EvalReport> {
    if gold.sentences.len() != pred.sentences.len() {
        let first = gold.sentences.len().min(pred.sentences.len()) + 1;
        return Err(Error::Eval(format!(
            "gold has {} sentences, prediction {}; first divergent sentence is {first}",
            gold.sentences.len(),
            pred.sentences.len()
        )));
    }
    let base = |s: &str| match labels {
        LabelMatch::Full => s.to_string(),
        LabelMatch::Base => s.split(':').next().unwrap_or("").to_string(),
    };
    let (mut total, mut heads, mut both) = (0usize, 0usize, 0usize);
    for (i, (g, p)) in gold.sentences.iter().zip(&pred.sentences).enumerate() {
        if g.len() != p.len() {
            return Err(Error::Eval(format!(
                "sentence {} has {} gold words but {} predicted",
                i + 1,
                g.len(),
                p.len()
            )));
        }
        for (gt, pt) in g.tokens.iter().zip(&p.tokens) {
            total += 1;
            if gt.head == pt.head {
                heads += 1;
                if base(&gt.deprel) == base(&pt.deprel) {
                    both += 1;
                }
            }
        }
    }
    let pct = |k: usize| if total == 0 { 0.0 } else { 100.0 * k as f64 / total as f64 };
    Ok(EvalReport {
        treebank: gold.name.clone(),
        uas: pct(heads),
        las: pct(both),
        n_scored_tokens: total,
        metadata: ReportMetadata::default(),
    })
}

/// Arithmetic mean of UAS and LAS over seeds; metadata from the first.
pub fn seed_average(reports: &[EvalReport]) -> Result<EvalReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::Eval("no seed reports to average".into()))?;
    if let Some(other) = reports.iter().find(|r| r.treebank != first.treebank) {
        return Err(Error::Eval(format!(
            "seed reports mix treebanks `{}` and `{}`",
            first.treebank, other.treebank
        )));
    }
    let k = reports.len() as f64;
    Ok(EvalReport {
        treebank: first.treebank.clone(),
        uas: reports.iter().map(|r| r.uas).sum::<f64>() / k,
        las: reports.iter().map(|r| r.las).sum::<f64>() / k,
        n_scored_tokens: first.n_scored_tokens,
        metadata: first.metadata.clone(),
    })
}

/// Copies each MONO report's LAS into the metadata of the matching report.
pub fn attach_baseline(reports: &mut [EvalReport], mono: &[EvalReport]) {
    for r in reports {
        if let Some(m) = mono.iter().find(|m| m.treebank == r.treebank) {
            r.metadata.mono_baseline_las = Some(m.las);
        }
    }
}

pub fn size_bucket(train_size: usize) -> &'static str {
    SIZE_BUCKETS
        .iter()
        .find(|(_, limit)| train_size <= *limit)
        .map_or("large", |(name, _)| name)
}

pub fn baseline_bucket(mono_las: f64) -> &'static str {
    if mono_las < 50.0 {
        "LAS<50"
    } else if mono_las <= 80.0 {
        "50<LAS<80"
    } else {
        "LAS>80"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsetCell {
    /// Unweighted mean LAS; `None` for an empty subset.
    pub mean: Option<f64>,
    pub count: usize,
}

/// Filter rows by setting columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetTable {
    pub settings: Vec<String>,
    pub rows: Vec<(String, Vec<SubsetCell>)>,
}

impl SubsetTable {
    pub fn cell(&self, filter: &str, setting: &str) -> Option<SubsetCell> {
        let col = self.settings.iter().position(|s| s == setting)?;
        self.rows.iter().find(|(f, _)| f == filter).map(|(_, c)| c[col])
    }
}

type Filter = fn(&EvalReport) -> bool;

fn filters(with_baseline: bool) -> Vec<(&'static str, Filter)> {
    let mut f: Vec<(&'static str, Filter)> = alloc::vec![
        ("all", |_| true),
        ("+sameLang", |r| r.metadata.has_same_language_treebank),
        ("-sameLang", |r| !r.metadata.has_same_language_treebank),
        ("cluster==2", |r| r.metadata.cluster_size == 2),
        ("cluster>2", |r| r.metadata.cluster_size > 2),
    ];
    if with_baseline {
        f.push(("LAS<50", |r| r.metadata.mono_baseline_las.is_some_and(|l| baseline_bucket(l) == "LAS<50")));
        f.push(("50<LAS<80", |r| {
            r.metadata.mono_baseline_las.is_some_and(|l| baseline_bucket(l) == "50<LAS<80")
        }));
        f.push(("LAS>80", |r| r.metadata.mono_baseline_las.is_some_and(|l| baseline_bucket(l) == "LAS>80")));
    }
    f.push(("small", |r| size_bucket(r.metadata.train_size) == "small"));
    f.push(("medium", |r| size_bucket(r.metadata.train_size) == "medium"));
    f.push(("large", |r| size_bucket(r.metadata.train_size) == "large"));
    f
}

/// Unweighted mean LAS of every subset filter for every setting. Baseline
/// rows need `mono_baseline_las` on every report.
pub fn aggregate_subsets(settings: &[(String, Vec<EvalReport>)], with_baseline: bool) -> Result<SubsetTable> {
    if with_baseline {
        for (setting, reports) in settings {
            if let Some(r) = reports.iter().find(|r| r.metadata.mono_baseline_las.is_none()) {
                return Err(Error::Config(format!(
                    "treebank `{}` in setting `{setting}` has no mono baseline",
                    r.treebank
                )));
            }
        }
    }
    let rows = filters(with_baseline)
        .into_iter()
        .map(|(name, keep)| {
            let cells = settings
                .iter()
                .map(|(_, reports)| {
                    let las: Vec<f64> = reports.iter().filter(|r| keep(r)).map(|r| r.las).collect();
                    SubsetCell {
                        mean: (!las.is_empty()).then(|| las.iter().sum::<f64>() / las.len() as f64),
                        count: las.len(),
                    }
                })
                .collect();
            (name.to_string(), cells)
        })
        .collect();
    Ok(SubsetTable {
        settings: settings.iter().map(|(s, _)| s.clone()).collect(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conllu::Sentence;
    use alloc::vec;

    fn report(name: &str, las: f64, train: usize) -> EvalReport {
        EvalReport {
            treebank: name.into(),
            uas: las,
            las,
            n_scored_tokens: 10,
            metadata: ReportMetadata {
                train_size: train,
                cluster_size: 2,
                has_same_language_treebank: false,
                mono_baseline_las: Some(las),
            },
        }
    }

    fn tb(words: &[(&str, usize, &str)]) -> Treebank {
        Treebank::new("x_y", vec![Sentence::from_triples(words)])
    }

    #[test]
    fn identical_trees_score_100() {
        let g = tb(&[("a", 2, "nsubj"), ("b", 0, "root"), ("c", 2, "obj")]);
        let r = evaluate_las(&g, &g).unwrap();
        assert_eq!((r.uas, r.las, r.n_scored_tokens), (100.0, 100.0, 3));
    }

    #[test]
    fn hand_counted_scores() {
        let g = tb(&[("a", 2, "nsubj"), ("b", 0, "root"), ("c", 2, "obj")]);
        let p = tb(&[("a", 2, "nsubj"), ("b", 0, "root"), ("c", 1, "obj")]);
        let r = evaluate_las(&g, &p).unwrap();
        assert!((r.uas - 200.0 / 3.0).abs() < 1e-9 && (r.las - 200.0 / 3.0).abs() < 1e-9);
        let p = tb(&[("a", 2, "obj"), ("b", 0, "root"), ("c", 1, "obj")]);
        let r = evaluate_las(&g, &p).unwrap();
        assert!((r.las - 100.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn base_label_matching_ignores_subtypes() {
        let g = tb(&[("a", 2, "nsubj:pass"), ("b", 0, "root")]);
        let p = tb(&[("a", 2, "nsubj"), ("b", 0, "root")]);
        assert_eq!(evaluate_las(&g, &p).unwrap().las, 50.0);
        assert_eq!(evaluate_las_with(&g, &p, LabelMatch::Base).unwrap().las, 100.0);
    }

    #[test]
    fn misaligned_input_names_the_sentence() {
        let g = Treebank::new("g", vec![Sentence::from_triples(&[("a", 0, "root")]); 2]);
        let p = Treebank::new(
            "g",
            vec![
                Sentence::from_triples(&[("a", 0, "root")]),
                Sentence::from_triples(&[("a", 0, "root"), ("b", 1, "x")]),
            ],
        );
        let err = evaluate_las(&g, &p).unwrap_err();
        assert!(format!("{err}").contains("sentence 2"));
    }

    #[test]
    fn seed_means() {
        let r = seed_average(&[report("a", 80.0, 1), report("a", 82.0, 1)]).unwrap();
        assert_eq!(r.las, 81.0);
        assert_eq!(seed_average(&[report("a", 77.0, 1)]).unwrap().las, 77.0);
        assert!(seed_average(&[report("a", 1.0, 1), report("b", 1.0, 1)]).is_err());
        assert!(seed_average(&[]).is_err());
    }

    #[test]
    fn subset_means_and_buckets() {
        let s = vec![("mono".to_string(), vec![report("a", 80.0, 900), report("b", 90.0, 15_000)])];
        let t = aggregate_subsets(&s, true).unwrap();
        assert_eq!(t.cell("all", "mono").unwrap().mean, Some(85.0));
        assert_eq!(t.cell("small", "mono").unwrap().count, 1);
        assert_eq!(t.cell("large", "mono").unwrap().count, 1);
        assert_eq!(t.cell("LAS>80", "mono").unwrap().count, 1);
        assert_eq!(t.cell("+sameLang", "mono").unwrap().mean, None);
        assert_eq!(size_bucket(1000), "small");
        assert_eq!(size_bucket(1001), "medium");
        assert_eq!(size_bucket(20_000), "large");
    }

    #[test]
    fn missing_baseline_is_a_config_error() {
        let mut r = report("a", 80.0, 10);
        r.metadata.mono_baseline_las = None;
        let s = vec![("concat".to_string(), vec![r])];
        assert!(matches!(aggregate_subsets(&s, true), Err(Error::Config(_))));
        assert!(aggregate_subsets(&s, false).is_ok());
    }
}
