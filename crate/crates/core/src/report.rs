//! Index of the plot-ready tables in a run directory.
//!
//! Every run writes `run.json` naming its artifacts. [`emit_report`] checks
//! that they are all present, that each CSV carries its documented header,
//! and writes `report.json` with the column schemas and row counts.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_csv, read_json, write_json};
use crate::repro::{RunRecord, RUN_RECORD};

pub const REPORT_INDEX: &str = "report.json";

/// Documented layout of one CSV artifact.
pub struct TableSchema {
    pub file: &'static str,
    pub title: &'static str,
    pub columns: &'static [(&'static str, &'static str)],
}

pub const SCHEMAS: &[TableSchema] = &[
    TableSchema {
        file: "table2.csv",
        title: "word errors per region code on the rearranged test set, plus a simulated test set",
        columns: &[
            ("condition", "region code (r1r2r3 ... r1s1s1) or simulation"),
            ("errors", "substitutions + deletions + insertions"),
            ("words", "reference words"),
            ("wer", "errors / words"),
        ],
    },
    TableSchema {
        file: "mmi_wer.csv",
        title: "lattice-rescoring word error rate per extended Baum-Welch pass",
        columns: &[
            ("scales", "name of the acoustic scale map"),
            ("pass", "0 before training, then one row per pass"),
            ("errors", "word errors"),
            ("words", "reference words"),
            ("wer", "errors / words"),
            ("max_change", "largest relative parameter change in this pass"),
        ],
    },
    TableSchema {
        file: "score_tracks.csv",
        title: "mean acoustic score per phone along the training passes",
        columns: &[
            ("scales", "name of the acoustic scale map"),
            ("pass", "extended Baum-Welch pass"),
            ("phone", "center phone"),
            ("mean_score", "mean frame score over the aligned training frames"),
        ],
    },
    TableSchema {
        file: "state_scores.csv",
        title: "per-state score moments and null envelope",
        columns: &[
            ("dataset", "corpus the scores come from"),
            ("state", "tied state id"),
            ("occupancy", "summed posterior weight"),
            ("mean_score", "weighted mean score"),
            ("score_variance", "weighted score variance"),
            ("lower", "lower envelope bound"),
            ("upper", "upper envelope bound"),
            ("inside", "variance within the envelope"),
        ],
    },
    TableSchema {
        file: "hist_score_variance.csv",
        title: "histogram of per-state score variances",
        columns: &[
            ("dataset", "corpus the scores come from"),
            ("bin_left", "left edge of the bin"),
            ("count", "states in the bin"),
        ],
    },
    TableSchema {
        file: "corr_within.csv",
        title: "adjacent-frame score correlation inside state regions, per state",
        columns: &[
            ("dataset", "corpus the scores come from"),
            ("state", "tied state id"),
            ("examples", "adjacent pairs used"),
            ("rho", "lag-one correlation"),
        ],
    },
    TableSchema {
        file: "corr_between.csv",
        title: "correlation between the lead scores of consecutive regions, per speaker",
        columns: &[
            ("dataset", "corpus the scores come from"),
            ("speaker", "speaker id"),
            ("regions", "regions in the speaker's utterances"),
            ("rho", "lag-one correlation of lead scores"),
            ("shuffled", "same statistic after shuffling the lead scores"),
        ],
    },
    TableSchema {
        file: "cepstral.csv",
        title: "word errors with and without the appended differences",
        columns: &[
            ("features", "static+deltas or static"),
            ("dim", "feature dimension"),
            ("test_set", "simulated, resampled or real"),
            ("errors", "word errors"),
            ("words", "reference words"),
            ("wer", "errors / words"),
        ],
    },
    TableSchema {
        file: "train_log.csv",
        title: "log-likelihood before each Baum-Welch pass",
        columns: &[("pass", "pass index from 0"), ("loglik", "total log-likelihood")],
    },
    TableSchema {
        file: "region_stats.csv",
        title: "state-region counts per utterance",
        columns: &[
            ("utt", "utterance id"),
            ("frames", "frames in the utterance"),
            ("regions", "maximal constant-state runs"),
            ("mean_length", "frames / regions"),
        ],
    },
];

pub fn schema(file: &str) -> Option<&'static TableSchema> {
    SCHEMAS.iter().find(|s| s.file == file)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnEntry {
    pub name: String,
    pub description: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub file: String,
    pub title: String,
    pub rows: usize,
    pub columns: Vec<ColumnEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportIndex {
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    pub tables: Vec<TableEntry>,
    /// Non-tabular artifacts (JSON summaries, corpora, models).
    pub other: Vec<String>,
}

/// Check the artifacts listed in `run.json` and write `report.json`.
pub fn emit_report(dir: &Path) -> Result<ReportIndex> {
    let record_path = dir.join(RUN_RECORD);
    if !record_path.is_file() {
        return Err(Error::MissingArtifacts {
            dir: dir.to_path_buf(),
            missing: vec![RUN_RECORD.to_string()],
        });
    }
    let record: RunRecord = read_json(&record_path)?;
    let missing: Vec<String> = record
        .artifacts
        .iter()
        .filter(|a| !dir.join(a.as_str()).is_file())
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingArtifacts {
            dir: dir.to_path_buf(),
            missing,
        });
    }
    let mut tables = Vec::new();
    let mut other = Vec::new();
    for a in &record.artifacts {
        let Some(s) = schema(a) else {
            other.push(a.clone());
            continue;
        };
        let path = dir.join(a);
        let (header, rows) = read_csv(&path)?;
        let expected: Vec<&str> = s.columns.iter().map(|c| c.0).collect();
        if header != expected {
            return Err(Error::format(
                path.display().to_string(),
                format!("header {header:?} differs from {expected:?}"),
            ));
        }
        tables.push(TableEntry {
            file: a.clone(),
            title: s.title.to_string(),
            rows: rows.len(),
            columns: s
                .columns
                .iter()
                .map(|(n, d)| ColumnEntry {
                    name: n.to_string(),
                    description: d.to_string(),
                })
                .collect(),
        });
    }
    let index = ReportIndex {
        command: record.command,
        seed: record.seed,
        config_hash: record.config_hash,
        tables,
        other,
    };
    write_json(&dir.join(REPORT_INDEX), &index)?;
    Ok(index)
}
