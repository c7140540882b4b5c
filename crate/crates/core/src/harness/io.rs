//! Embedding CSV files.
//!
//! Header `x0,…,x{m−1},y,d` with an optional trailing `d_tilde` column.
//! Features are written with 17 significant digits so a save/load cycle
//! reproduces every `f64` exactly. An optional sidecar `<file>.meta.json`
//! fixes the number of classes and domains and names the groups; without it
//! both counts are inferred from the labels (at least 2).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMeta {
    pub num_classes: usize,
    pub num_domains: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub group_names: Vec<String>,
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads an embedding CSV and its sidecar, if any.
pub fn load_embeddings(path: &Path) -> Result<(LabeledDataset, Option<EmbeddingMeta>)> {
    let meta = match std::fs::read_to_string(meta_path(path)) {
        Ok(text) => Some(
            serde_json::from_str::<EmbeddingMeta>(&text)
                .map_err(|e| parse_err(&meta_path(path), e.line() as u64, e.to_string()))?,
        ),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(Error::io(meta_path(path), e)),
    };
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    let has_tilde = names.last() == Some(&"d_tilde");
    let label_cols = if has_tilde { 3 } else { 2 };
    if names.len() < label_cols + 1 {
        return Err(Error::SchemaMismatch(format!(
            "header {names:?} has no feature columns"
        )));
    }
    let m = names.len() - label_cols;
    let expected: Vec<String> = (0..m)
        .map(|j| format!("x{j}"))
        .chain(["y".to_string(), "d".to_string()])
        .chain(has_tilde.then(|| "d_tilde".to_string()))
        .collect();
    if names != expected {
        return Err(Error::SchemaMismatch(format!(
            "header {names:?}, expected {expected:?}"
        )));
    }

    let mut values = Vec::new();
    let mut y = Vec::new();
    let mut d = Vec::new();
    let mut tilde = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != names.len() {
            return Err(Error::SchemaMismatch(format!(
                "line {line}: {} fields, header has {}",
                record.len(),
                names.len()
            )));
        }
        for j in 0..m {
            let v: f64 = record[j].trim().parse().map_err(|_| {
                parse_err(
                    path,
                    line,
                    format!("x{j} = '{}' is not a number", &record[j]),
                )
            })?;
            if !v.is_finite() {
                return Err(parse_err(path, line, format!("x{j} is not finite")));
            }
            values.push(v);
        }
        let label = |col: usize, name: &str| -> Result<usize> {
            record[col].trim().parse().map_err(|_| {
                parse_err(
                    path,
                    line,
                    format!("{name} = '{}' is not a label", &record[col]),
                )
            })
        };
        let yi = label(m, "y")?;
        let di = label(m + 1, "d")?;
        if let Some(meta) = &meta {
            if yi >= meta.num_classes {
                return Err(parse_err(
                    path,
                    line,
                    format!("y = {yi} but K = {}", meta.num_classes),
                ));
            }
            if di >= meta.num_domains {
                return Err(parse_err(
                    path,
                    line,
                    format!("d = {di} but M = {}", meta.num_domains),
                ));
            }
        }
        y.push(yi);
        d.push(di);
        if has_tilde {
            let t = label(m + 2, "d_tilde")?;
            if t > 1 {
                return Err(parse_err(path, line, format!("d_tilde = {t} is not 0/1")));
            }
            tilde.push(t as u8);
        }
    }
    let n = y.len();
    if n == 0 {
        return Err(Error::EmptyDataset(format!(
            "{} has no rows",
            path.display()
        )));
    }
    let (k, mm) = match &meta {
        Some(meta) => (meta.num_classes, meta.num_domains),
        None => (
            (y.iter().max().unwrap() + 1).max(2),
            (d.iter().max().unwrap() + 1).max(2),
        ),
    };
    let features = Array2::from_shape_vec((n, m), values).expect("row widths checked");
    let mut data = LabeledDataset::new(features, y, d, k, mm)?;
    if has_tilde {
        data = data.with_d_tilde(tilde)?;
    }
    Ok((data, meta))
}

/// Writes `data` as CSV plus a sidecar with its class and domain counts.
pub fn save_embeddings(data: &LabeledDataset, path: &Path, group_names: &[String]) -> Result<()> {
    let m = data.m();
    let mut out = String::new();
    let mut header: Vec<String> = (0..m).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    header.push("d".into());
    if data.d_tilde().is_some() {
        header.push("d_tilde".into());
    }
    out.push_str(&header.join(","));
    out.push('\n');
    for i in 0..data.n() {
        for v in data.row(i) {
            write!(out, "{v:.16e},").expect("string write");
        }
        write!(out, "{},{}", data.y()[i], data.d()[i]).expect("string write");
        if let Some(t) = data.d_tilde() {
            write!(out, ",{}", t[i]).expect("string write");
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))?;
    let meta = EmbeddingMeta {
        num_classes: data.num_classes(),
        num_domains: data.num_domains(),
        group_names: group_names.to_vec(),
    };
    let text = serde_json::to_string_pretty(&meta).expect("meta serialises");
    std::fs::write(meta_path(path), text + "\n").map_err(|e| Error::io(meta_path(path), e))
}
