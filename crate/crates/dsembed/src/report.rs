//! Tab-separated and aligned text renderings of results.

use std::fmt::Write;

use dsembed_core::eval::{EvalReport, SubsetTable};
use serde::{Deserialize, Serialize};

/// Reports of one setting (a results column).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingReports {
    pub setting: String,
    pub reports: Vec<EvalReport>,
}

const REPORT_COLUMNS: &str = "setting\ttreebank\tuas\tlas\ttokens\ttrain_size\tcluster_size\tsame_lang\tmono_las";

fn report_row(out: &mut String, setting: &str, seed: Option<u64>, r: &EvalReport) {
    let m = &r.metadata;
    if let Some(s) = seed {
        let _ = write!(out, "{s}\t");
    }
    let mono = m.mono_baseline_las.map(|v| format!("{v:.2}")).unwrap_or_default();
    let _ = writeln!(
        out,
        "{setting}\t{}\t{:.2}\t{:.2}\t{}\t{}\t{}\t{}\t{mono}",
        r.treebank, r.uas, r.las, r.n_scored_tokens, m.train_size, m.cluster_size, m.has_same_language_treebank
    );
}

pub fn reports_tsv(settings: &[SettingReports]) -> String {
    let mut out = format!("{REPORT_COLUMNS}\n");
    for s in settings {
        for r in &s.reports {
            report_row(&mut out, &s.setting, None, r);
        }
    }
    out
}

/// Per-seed rows `(seed, setting, report)`.
pub fn seed_reports_tsv(rows: &[(u64, String, EvalReport)]) -> String {
    let mut out = format!("seed\t{REPORT_COLUMNS}\n");
    for (seed, setting, r) in rows {
        report_row(&mut out, setting, Some(*seed), r);
    }
    out
}

/// Filter rows by setting columns; cells are `mean` and `count`.
pub fn subset_tsv(table: &SubsetTable) -> String {
    let mut out = String::from("filter");
    for s in &table.settings {
        let _ = write!(out, "\t{s}\t{s}_n");
    }
    out.push('\n');
    for (filter, cells) in &table.rows {
        out.push_str(filter);
        for c in cells {
            let mean = c.mean.map(|m| format!("{m:.2}")).unwrap_or_else(|| "-".into());
            let _ = write!(out, "\t{mean}\t{}", c.count);
        }
        out.push('\n');
    }
    out
}

/// Aligned table with rows labelled `filter-count`.
pub fn subset_text(table: &SubsetTable) -> String {
    let labels: Vec<String> = table
        .rows
        .iter()
        .map(|(f, cells)| format!("{f}-{}", cells.first().map_or(0, |c| c.count)))
        .collect();
    let first = labels.iter().map(String::len).max().unwrap_or(0).max("filter".len());
    let widths: Vec<usize> = table.settings.iter().map(|s| s.len().max(6)).collect();
    let mut out = format!("{:<first$}", "filter");
    for (s, w) in table.settings.iter().zip(&widths) {
        let _ = write!(out, "  {s:>w$}");
    }
    out.push('\n');
    for (label, (_, cells)) in labels.iter().zip(&table.rows) {
        let _ = write!(out, "{label:<first$}");
        for (c, w) in cells.iter().zip(&widths) {
            let mean = c.mean.map(|m| format!("{m:.2}")).unwrap_or_else(|| "-".into());
            let _ = write!(out, "  {mean:>w$}");
        }
        out.push('\n');
    }
    out
}
