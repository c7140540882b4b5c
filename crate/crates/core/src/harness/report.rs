//! Writing sweep results: run records as JSON lines, a summary CSV and a
//! long-format curve CSV with the closed-form overlay.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::sweep::{RunRecord, SummaryRow, SweepOutput};
use crate::theory::TheoryPoint;

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn records_jsonl(records: &[RunRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialise"));
        out.push('\n');
    }
    out
}

/// `method,p,mean_wga,std_wga,n`.
pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("method,p,mean_wga,std_wga,n\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.method,
            r.p,
            opt(r.mean_wga),
            opt(r.std_wga),
            r.n
        )
        .expect("string write");
    }
    out
}

/// `series,p,wga,std` with one series per method plus `theory-balanced`
/// (downsampling/upweighting) and `theory-erm` when available.
pub fn curves_csv(rows: &[SummaryRow], theory: Option<&[TheoryPoint]>) -> String {
    let mut out = String::from("series,p,wga,std\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{}",
            r.method,
            r.p,
            opt(r.mean_wga),
            opt(r.std_wga)
        )
        .expect("string write");
    }
    for t in theory.unwrap_or_default() {
        writeln!(out, "theory-balanced,{},{},", t.p, t.wga_ds).expect("string write");
    }
    for t in theory.unwrap_or_default() {
        writeln!(out, "theory-erm,{},{},", t.p, t.wga_erm).expect("string write");
    }
    out
}

/// Paths of the files written by [`write_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub records: PathBuf,
    pub summary: PathBuf,
    pub curves: PathBuf,
}

/// Writes `records.jsonl`, `summary.csv` and `curves.csv` into `dir`.
pub fn write_report(output: &SweepOutput, dir: &Path) -> Result<ReportFiles> {
    if output.records.is_empty() {
        return Err(Error::EmptyDataset("no records to report".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = ReportFiles {
        records: dir.join("records.jsonl"),
        summary: dir.join("summary.csv"),
        curves: dir.join("curves.csv"),
    };
    let write = |p: &Path, s: String| std::fs::write(p, s).map_err(|e| Error::io(p, e));
    write(&files.records, records_jsonl(&output.records))?;
    write(&files.summary, summary_csv(&output.summary))?;
    write(
        &files.curves,
        curves_csv(&output.summary, output.theory.as_deref()),
    )?;
    Ok(files)
}

/// Reads records back from a JSON-lines file.
pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i as u64 + 1,
                message: e.to_string(),
            })
        })
        .collect()
}
