//! Canonical dataset directory: `meta.json`, `edges.tsv`, `features.tsv`,
//! optional `labels.tsv` and `splits.json`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_text, write_atomic, write_json};
use crate::error::{Error, Result};
use crate::graph::Graph;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    pub num_nodes: usize,
    pub num_features: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_classes: Option<usize>,
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Non-blank, non-comment lines with their 1-based numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_index(path: &Path, line: usize, tok: &str, n: usize, what: &str) -> Result<usize> {
    let v: usize = tok.parse().map_err(|_| {
        parse_err(
            path,
            line,
            format!("{what} {tok:?} is not a non-negative integer"),
        )
    })?;
    if v >= n {
        return Err(parse_err(
            path,
            line,
            format!("{what} {v} out of range (num_nodes = {n})"),
        ));
    }
    Ok(v)
}

/// Reads `u<TAB>v` lines.
pub fn read_pairs(path: &Path, n: usize) -> Result<Vec<(usize, usize)>> {
    let text = read_text(path)?;
    content_lines(&text)
        .map(|(ln, l)| {
            let toks: Vec<&str> = l.split_whitespace().collect();
            if toks.len() != 2 {
                return Err(parse_err(
                    path,
                    ln,
                    format!("expected 2 columns, found {}", toks.len()),
                ));
            }
            Ok((
                parse_index(path, ln, toks[0], n, "node")?,
                parse_index(path, ln, toks[1], n, "node")?,
            ))
        })
        .collect()
}

pub fn write_pairs(path: &Path, pairs: &[(usize, usize)]) -> Result<()> {
    let mut s = String::with_capacity(pairs.len() * 12);
    for (u, v) in pairs {
        let _ = writeln!(s, "{u}\t{v}");
    }
    write_atomic(path, s.as_bytes())
}

fn read_features(path: &Path, n: usize, f: usize) -> Result<Vec<f32>> {
    let text = read_text(path)?;
    let mut out = Vec::with_capacity(n * f);
    let mut rows = 0;
    for (ln, l) in content_lines(&text) {
        if rows == n {
            return Err(parse_err(
                path,
                ln,
                format!("more than num_nodes = {n} feature rows"),
            ));
        }
        let before = out.len();
        for tok in l.split_whitespace() {
            let v: f32 = tok
                .parse()
                .map_err(|_| parse_err(path, ln, format!("feature {tok:?} is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(path, ln, format!("non-finite feature {tok:?}")));
            }
            out.push(v);
        }
        if out.len() - before != f {
            return Err(parse_err(
                path,
                ln,
                format!("expected {f} features, found {}", out.len() - before),
            ));
        }
        rows += 1;
    }
    if rows != n {
        return Err(parse_err(
            path,
            text.lines().count(),
            format!("expected {n} feature rows, found {rows}"),
        ));
    }
    Ok(out)
}

fn read_labels(path: &Path, n: usize, classes: Option<usize>) -> Result<Vec<usize>> {
    let text = read_text(path)?;
    let mut labels = vec![usize::MAX; n];
    for (ln, l) in content_lines(&text) {
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(parse_err(
                path,
                ln,
                format!("expected 2 columns, found {}", toks.len()),
            ));
        }
        let node = parse_index(path, ln, toks[0], n, "node")?;
        let label: usize = toks[1].parse().map_err(|_| {
            parse_err(
                path,
                ln,
                format!("label {:?} is not a non-negative integer", toks[1]),
            )
        })?;
        if let Some(c) = classes {
            if label >= c {
                return Err(parse_err(
                    path,
                    ln,
                    format!("label {label} out of range (num_classes = {c})"),
                ));
            }
        }
        if labels[node] != usize::MAX {
            return Err(parse_err(path, ln, format!("node {node} labeled twice")));
        }
        labels[node] = label;
    }
    if let Some(missing) = labels.iter().position(|&l| l == usize::MAX) {
        return Err(parse_err(
            path,
            text.lines().count(),
            format!("node {missing} has no label"),
        ));
    }
    Ok(labels)
}

fn read_splits(path: &Path, n: usize) -> Result<BTreeMap<String, Vec<usize>>> {
    let text = read_text(path)?;
    let splits: BTreeMap<String, Vec<usize>> =
        serde_json::from_str(&text).map_err(|e| parse_err(path, e.line(), e.to_string()))?;
    for (name, nodes) in &splits {
        if let Some(&bad) = nodes.iter().find(|&&v| v >= n) {
            return Err(parse_err(
                path,
                1,
                format!("split {name:?} has node {bad} ≥ num_nodes = {n}"),
            ));
        }
    }
    Ok(splits)
}

/// Loads a dataset directory into a [`Graph`] with labels and splits attached.
pub fn load_dataset(dir: &Path) -> Result<(Graph, Meta)> {
    let meta_path = dir.join("meta.json");
    let meta: Meta = serde_json::from_str(&read_text(&meta_path)?)
        .map_err(|e| parse_err(&meta_path, e.line(), e.to_string()))?;
    let n = meta.num_nodes;
    let edges = read_pairs(&dir.join("edges.tsv"), n)?;
    let features = read_features(&dir.join("features.tsv"), n, meta.num_features)?;
    let mut g = Graph::from_edges(n, edges, meta.num_features, features)?;
    let labels_path = dir.join("labels.tsv");
    if labels_path.exists() {
        g = g.with_labels(read_labels(&labels_path, n, meta.num_classes)?)?;
    }
    let splits_path = dir.join("splits.json");
    if splits_path.exists() {
        for (name, nodes) in read_splits(&splits_path, n)? {
            g = g.with_split(&name, nodes)?;
        }
    }
    Ok((g, meta))
}

/// Writes `g` in the canonical format; features are written as given.
pub fn write_dataset(dir: &Path, g: &Graph, meta: &Meta) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join("meta.json"), meta)?;
    write_pairs(&dir.join("edges.tsv"), &g.edges().collect::<Vec<_>>())?;
    let mut s = String::new();
    for v in 0..g.num_nodes() {
        let row: Vec<String> = g.feature_row(v).iter().map(|x| x.to_string()).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    write_atomic(&dir.join("features.tsv"), s.as_bytes())?;
    if let Some(labels) = g.labels() {
        let mut s = String::new();
        for (v, l) in labels.iter().enumerate() {
            let _ = writeln!(s, "{v}\t{l}");
        }
        write_atomic(&dir.join("labels.tsv"), s.as_bytes())?;
    }
    if !g.splits().is_empty() {
        write_json(&dir.join("splits.json"), g.splits())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) {
        std::fs::write(dir.join(name), body).unwrap();
    }

    fn base(dir: &Path) {
        write(
            dir,
            "meta.json",
            r#"{"num_nodes":3,"num_features":2,"num_classes":2}"#,
        );
        write(dir, "edges.tsv", "0\t1\n# comment\n2\t1\n1\t0\n");
        write(dir, "features.tsv", "1 0\n0.5 0.5\n0 1\n");
    }

    #[test]
    fn loads_and_round_trips() {
        let d = tempfile::tempdir().unwrap();
        base(d.path());
        write(d.path(), "labels.tsv", "0\t0\n1\t1\n2\t1\n");
        write(d.path(), "splits.json", r#"{"train":[0],"test":[1,2]}"#);
        let (g, meta) = load_dataset(d.path()).unwrap();
        assert_eq!(g.num_edges(), 2);
        assert_eq!(g.labels(), Some(&[0, 1, 1][..]));
        assert_eq!(g.split("test"), Some(&[1, 2][..]));
        let out = d.path().join("copy");
        write_dataset(&out, &g, &meta).unwrap();
        let (g2, meta2) = load_dataset(&out).unwrap();
        assert_eq!(meta, meta2);
        assert_eq!(
            g2.edges().collect::<Vec<_>>(),
            g.edges().collect::<Vec<_>>()
        );
        assert_eq!(g2.features(), g.features());
        assert_eq!(g2.splits(), g.splits());
    }

    #[test]
    fn missing_features_names_the_file() {
        let d = tempfile::tempdir().unwrap();
        base(d.path());
        std::fs::remove_file(d.path().join("features.tsv")).unwrap();
        let err = load_dataset(d.path()).unwrap_err().to_string();
        assert!(err.contains("features.tsv"), "{err}");
    }

    #[test]
    fn errors_are_line_precise() {
        let d = tempfile::tempdir().unwrap();
        base(d.path());
        write(d.path(), "edges.tsv", "0\t1\n1\t7\n");
        let err = load_dataset(d.path()).unwrap_err().to_string();
        assert!(err.contains("edges.tsv:2:"), "{err}");

        base(d.path());
        write(d.path(), "features.tsv", "1 0\n0.5\n0 1\n");
        let err = load_dataset(d.path()).unwrap_err().to_string();
        assert!(
            err.contains("features.tsv:2:") && err.contains("expected 2"),
            "{err}"
        );

        base(d.path());
        write(d.path(), "labels.tsv", "0\t0\n1\t5\n2\t1\n");
        let err = load_dataset(d.path()).unwrap_err().to_string();
        assert!(err.contains("labels.tsv:2:"), "{err}");
    }
}
