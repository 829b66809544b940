#![allow(dead_code)]

use dsembed::core::encoder::EncoderConfig;
use dsembed::core::eval::{EvalReport, ReportMetadata};
use dsembed::train::{Architecture, TrainSettings};

pub fn tiny_arch() -> Architecture {
    Architecture {
        encoder: EncoderConfig {
            d_model: 16,
            n_layers: 1,
            n_heads: 2,
            d_ff: 32,
            max_len: 32,
            dropout: 0.1,
        },
        d_arc: 8,
        d_label: 8,
    }
}

pub fn quick_settings(epochs: usize) -> TrainSettings {
    TrainSettings {
        epochs,
        batch_size: 8,
        ..TrainSettings::default()
    }
}

/// Cluster, treebank and mono LAS rows of the published dev results.
pub fn table1_mono() -> Vec<(String, String, f64)> {
    include_str!("../fixtures/table1_mono.tsv")
        .lines()
        .skip(1)
        .map(|l| {
            let c: Vec<&str> = l.split('\t').collect();
            (c[0].to_string(), c[1].to_string(), c[2].parse().unwrap())
        })
        .collect()
}

/// Mono reports of the fixture with cluster metadata filled in.
pub fn table1_reports() -> Vec<EvalReport> {
    let rows = table1_mono();
    let lang = |n: &str| n.split('_').next().unwrap().to_string();
    rows.iter()
        .map(|(cluster, name, las)| {
            let size = rows.iter().filter(|(c, _, _)| c == cluster).count();
            let same = rows
                .iter()
                .any(|(c, n, _)| c == cluster && n != name && lang(n) == lang(name));
            EvalReport {
                treebank: name.clone(),
                uas: *las,
                las: *las,
                n_scored_tokens: 1,
                metadata: ReportMetadata {
                    train_size: 0,
                    cluster_size: size,
                    has_same_language_treebank: same,
                    mono_baseline_las: Some(*las),
                },
            }
        })
        .collect()
}
