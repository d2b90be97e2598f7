//! Report files.
//!
//! `report.json` carries the tool version, FLOPs convention and a full config
//! echo; the CSV and JSONL files are flat tables keyed by method and seed.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use gstds_core::spectral::BatchSpectrum;
use gstds_core::train::SelectionRecord;

use crate::harness::{Comparison, ComparisonReport, ProjectionRow};

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

pub type Result<T> = std::result::Result<T, ExportError>;

pub const METRICS: [&str; 7] = ["train_acc", "val_acc", "train_loss", "val_loss", "samples", "flops", "mean_ratio"];

pub fn report_json(report: &ComparisonReport) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(report).expect("reports serialize");
    out.push(b'\n');
    out
}

/// One row per (method, seed, epoch, metric).
pub fn metrics_csv(report: &ComparisonReport) -> String {
    let mut out = String::from("method,seed,epoch,metric,value\n");
    for run in &report.runs {
        for m in &run.epochs {
            let values = [
                m.train_acc.to_string(),
                m.val_acc.to_string(),
                m.train_loss.to_string(),
                m.val_loss.to_string(),
                m.samples_processed.to_string(),
                m.flops_this_epoch.to_string(),
                m.mean_ratio_this_epoch.to_string(),
            ];
            for (name, v) in METRICS.iter().zip(values) {
                writeln!(out, "{},{},{},{name},{v}", run.method, run.seed, m.epoch).unwrap();
            }
        }
    }
    out
}

pub fn selections_jsonl<'a>(records: impl IntoIterator<Item = &'a SelectionRecord>) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn projections_csv(rows: &[ProjectionRow]) -> String {
    let mut out = String::from("method,seed,epoch,batch,id,label,selected,pc1,pc2\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.method, r.seed, r.epoch, r.batch, r.id, r.label, r.selected as u8, r.pc1, r.pc2
        )
        .unwrap();
    }
    out
}

/// Similarity, Laplacian and Fiedler vector of one batch as plain text.
pub fn spectral_dump(batch: usize, ids: &[u64], s: &BatchSpectrum) -> String {
    let n = ids.len();
    let mut out = String::new();
    writeln!(out, "# batch {batch}").unwrap();
    writeln!(out, "ids {}", join(ids.iter())).unwrap();
    writeln!(out, "lambda2 {}", s.scores.lambda2).unwrap();
    writeln!(out, "lambda2_repeated {}", s.scores.lambda2_repeated).unwrap();
    writeln!(out, "fiedler {}", join(s.scores.phi.iter())).unwrap();
    writeln!(out, "ranking {}", join(s.ranking.order.iter().map(|&p| ids[p]))).unwrap();
    writeln!(out, "similarity").unwrap();
    for i in 0..n {
        writeln!(out, "{}", join((0..n).map(|j| s.similarity.get(i, j)))).unwrap();
    }
    writeln!(out, "laplacian").unwrap();
    for i in 0..n {
        writeln!(out, "{}", join((0..n).map(|j| s.laplacian.get(i, j)))).unwrap();
    }
    out
}

fn join<T: ToString>(items: impl Iterator<Item = T>) -> String {
    items.map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

fn write(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|source| ExportError::Io { path: path.to_owned(), source })
}

/// Writes report.json, metrics.csv, selections.jsonl and, when present,
/// projections.csv into `dir`. Every run's `selection_log` points at the
/// shared selections file.
pub fn write_comparison(dir: &Path, comparison: &Comparison) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| ExportError::Io { path: dir.to_owned(), source })?;
    let mut report = comparison.report.clone();
    for run in &mut report.runs {
        run.selection_log = Some("selections.jsonl".to_owned());
    }
    write(&dir.join("report.json"), &report_json(&report))?;
    write(&dir.join("metrics.csv"), metrics_csv(&report).as_bytes())?;
    write(&dir.join("selections.jsonl"), selections_jsonl(comparison.records.iter().flatten()).as_bytes())?;
    if !comparison.projections.is_empty() {
        write(&dir.join("projections.csv"), projections_csv(&comparison.projections).as_bytes())?;
    }
    Ok(())
}

pub fn read_report(path: &Path) -> Result<ComparisonReport> {
    let bytes = fs::read(path).map_err(|source| ExportError::Io { path: path.to_owned(), source })?;
    serde_json::from_slice(&bytes).map_err(|source| ExportError::Json { path: path.to_owned(), source })
}

pub fn read_selections(path: &Path) -> Result<Vec<SelectionRecord>> {
    let text = fs::read_to_string(path).map_err(|source| ExportError::Io { path: path.to_owned(), source })?;
    text.lines()
        .filter(|l| !l.is_empty())
        .map(|l| serde_json::from_str(l).map_err(|source| ExportError::Json { path: path.to_owned(), source }))
        .collect()
}
