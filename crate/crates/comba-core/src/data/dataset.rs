//! On-disk dataset format: five plain files per directory.
//!
//! - `edges.txt` — two whitespace-separated 0-based node ids per line
//! - `features.csv` — headerless comma-separated floats, one row per node
//! - `labels.txt` — one integer per line
//! - `splits.json` — `{"train":[...],"val":[...],"test":[...]}`
//! - `meta.json` — `{"name":...,"metric":"accuracy"|"roc_auc"}`
//!
//! Loading is strict: malformed content is rejected with the offending line
//! number. The only repairs are symmetrization, self-loop removal, and edge
//! deduplication, each logged with a count.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::tensor::Tensor;
use crate::train::{MetricKind, Splits};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub name: String,
    pub metric: MetricKind,
}

/// A fully validated dataset: graph, split lists, and metadata.
#[derive(Clone, Debug)]
pub struct DatasetBundle {
    pub graph: Graph,
    pub splits: Splits,
    pub meta: DatasetMeta,
    /// True when the raw edge list was not symmetric and got symmetrized.
    pub source_was_directed: bool,
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path)?;
    Ok(text.lines().map(str::to_owned).collect())
}

fn load_edges(path: &Path) -> Result<Vec<(u32, u32)>> {
    let mut edges = Vec::new();
    for (i, line) in read_lines(path)?.iter().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let a = it
            .next()
            .ok_or_else(|| parse_err(path, lineno, "missing source id"))?;
        let b = it
            .next()
            .ok_or_else(|| parse_err(path, lineno, "missing target id"))?;
        if let Some(extra) = it.next() {
            return Err(parse_err(
                path,
                lineno,
                format!("unexpected trailing token {extra:?}"),
            ));
        }
        let a: u32 = a
            .parse()
            .map_err(|e| parse_err(path, lineno, format!("bad node id {a:?}: {e}")))?;
        let b: u32 = b
            .parse()
            .map_err(|e| parse_err(path, lineno, format!("bad node id {b:?}: {e}")))?;
        edges.push((a, b));
    }
    Ok(edges)
}

fn load_features(path: &Path) -> Result<Tensor> {
    let lines = read_lines(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (i, line) in lines.iter().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for cell in line.split(',') {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|e| parse_err(path, lineno, format!("bad float {cell:?}: {e}")))?;
            row.push(v);
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(parse_err(
                    path,
                    lineno,
                    format!("row has {} columns, expected {w}", row.len()),
                ))
            }
            _ => {}
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err(path, 1, "no feature rows"));
    }
    Ok(Tensor::from_rows(&rows))
}

fn load_labels(path: &Path) -> Result<Vec<u32>> {
    let mut labels = Vec::new();
    for (i, line) in read_lines(path)?.iter().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let v: u32 = line
            .trim()
            .parse()
            .map_err(|e| parse_err(path, lineno, format!("bad label {line:?}: {e}")))?;
        labels.push(v);
    }
    Ok(labels)
}

pub fn load_dataset(dir: &Path) -> Result<DatasetBundle> {
    let raw_edges = load_edges(&dir.join("edges.txt"))?;
    let features = load_features(&dir.join("features.csv"))?;
    let labels = load_labels(&dir.join("labels.txt"))?;
    let splits: Splits = serde_json::from_str(&fs::read_to_string(dir.join("splits.json"))?)?;
    let meta: DatasetMeta = serde_json::from_str(&fs::read_to_string(dir.join("meta.json"))?)?;

    let n = features.rows();
    if labels.len() != n {
        return Err(Error::Validation(format!(
            "{} labels for {} feature rows",
            labels.len(),
            n
        )));
    }
    for &(a, b) in &raw_edges {
        if a as usize >= n || b as usize >= n {
            return Err(Error::Validation(format!(
                "edge ({a}, {b}) references a node outside [0, {n})"
            )));
        }
    }

    let directed_pairs: BTreeSet<(u32, u32)> = raw_edges.iter().copied().collect();
    let source_was_directed = directed_pairs
        .iter()
        .any(|&(a, b)| a != b && !directed_pairs.contains(&(b, a)));

    let self_loops = raw_edges.iter().filter(|&&(a, b)| a == b).count();
    let undirected: BTreeSet<(u32, u32)> = raw_edges
        .iter()
        .filter(|&&(a, b)| a != b)
        .map(|&(a, b)| (a.min(b), a.max(b)))
        .collect();
    let duplicates = raw_edges.len() - self_loops - undirected.len();
    if self_loops > 0 {
        log::info!("dropped {self_loops} self-loop(s)");
    }
    if duplicates > 0 {
        log::info!("collapsed {duplicates} duplicate edge(s) after symmetrization");
    }
    if source_was_directed {
        log::info!("edge list was directed; symmetrized");
    }

    let edges: Vec<(u32, u32)> = undirected.into_iter().collect();
    let num_classes = labels.iter().copied().max().unwrap_or(0) as usize + 1;
    let graph = Graph::new(n, &edges, features, labels, num_classes)?;
    splits.validate(n)?;
    if meta.metric == MetricKind::RocAuc && graph.num_classes() != 2 {
        return Err(Error::Validation(format!(
            "meta requests roc_auc but the labels span {} classes",
            graph.num_classes()
        )));
    }
    Ok(DatasetBundle {
        graph,
        splits,
        meta,
        source_was_directed,
    })
}

/// Write the five files in canonical form (edges once each, small id first,
/// sorted; floats in shortest round-trip notation).
pub fn save_dataset(dir: &Path, bundle: &DatasetBundle) -> Result<()> {
    fs::create_dir_all(dir)?;
    let g = &bundle.graph;

    let mut edge_lines = String::new();
    for i in 0..g.n() {
        for &j in g.neighbors(i) {
            if (i as u32) < j {
                edge_lines.push_str(&format!("{i} {j}\n"));
            }
        }
    }
    fs::write(dir.join("edges.txt"), edge_lines)?;

    let mut feat_lines = String::new();
    for i in 0..g.n() {
        let cells: Vec<String> = g.features().row(i).iter().map(f64::to_string).collect();
        feat_lines.push_str(&cells.join(","));
        feat_lines.push('\n');
    }
    fs::write(dir.join("features.csv"), feat_lines)?;

    let mut label_lines = String::new();
    for &l in g.labels() {
        label_lines.push_str(&format!("{l}\n"));
    }
    fs::write(dir.join("labels.txt"), label_lines)?;

    fs::write(
        dir.join("splits.json"),
        serde_json::to_string(&bundle.splits)?,
    )?;
    fs::write(dir.join("meta.json"), serde_json::to_string(&bundle.meta)?)?;
    Ok(())
}
