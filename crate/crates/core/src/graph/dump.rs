use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::fused::{MultiViewGraph, View, ViewNode};
use crate::error::{Error, Result};

pub const NODES_FILE: &str = "graph.csv";
pub const EDGES_FILE: &str = "edges.csv";

/// Writes `graph.csv` (nodes) and `edges.csv` into `dir`.
pub fn write_graph(g: &MultiViewGraph, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let path = dir.join(NODES_FILE);
    let mut w = BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?);
    let mut out = String::from("node_index,region,view,slot\n");
    for (i, n) in g.nodes().iter().enumerate() {
        let slot = n.slot.map(|s| s.to_string()).unwrap_or_default();
        out.push_str(&format!("{i},{},{},{slot}\n", n.region, n.view));
    }
    w.write_all(out.as_bytes()).and_then(|_| w.flush()).map_err(|e| Error::io(&path, e))?;

    let path = dir.join(EDGES_FILE);
    let mut w = BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?);
    let mut out = String::from("a,b\n");
    for (a, b) in g.edges() {
        out.push_str(&format!("{a},{b}\n"));
    }
    w.write_all(out.as_bytes()).and_then(|_| w.flush()).map_err(|e| Error::io(&path, e))
}

fn parse_err(file: &Path, line: u64, column: usize, message: impl Into<String>) -> Error {
    Error::Parse { file: file.to_path_buf(), line, column, message: message.into() }
}

fn records(path: &PathBuf, header: &[&str]) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .from_path(path)
        .map_err(|e| parse_err(path, 1, 1, e.to_string()))?;
    let found = rdr.headers().map_err(|e| parse_err(path, 1, 1, e.to_string()))?;
    if found.iter().collect::<Vec<_>>() != header {
        return Err(parse_err(path, 1, 1, format!("expected header `{}`", header.join(","))));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, 1, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        out.push((line, rec));
    }
    Ok(out)
}

fn field<T: std::str::FromStr>(path: &Path, line: u64, rec: &csv::StringRecord, col: usize) -> Result<T> {
    let raw = rec.get(col).unwrap_or("");
    raw.parse().map_err(|_| parse_err(path, line, col + 1, format!("cannot parse `{raw}`")))
}

/// Reloads a graph written by [`write_graph`].
pub fn read_graph(dir: impl AsRef<Path>) -> Result<MultiViewGraph> {
    let dir = dir.as_ref();
    let path = dir.join(NODES_FILE);
    let mut nodes = Vec::new();
    for (line, rec) in records(&path, &["node_index", "region", "view", "slot"])? {
        let index: usize = field(&path, line, &rec, 0)?;
        if index != nodes.len() {
            return Err(parse_err(&path, line, 1, format!("expected node index {}", nodes.len())));
        }
        let region = field(&path, line, &rec, 1)?;
        let view: View = field(&path, line, &rec, 2)?;
        let slot = match rec.get(3).unwrap_or("") {
            "" => None,
            _ => Some(field(&path, line, &rec, 3)?),
        };
        nodes.push(ViewNode { region, view, slot });
    }
    let path = dir.join(EDGES_FILE);
    let mut edges = Vec::new();
    for (line, rec) in records(&path, &["a", "b"])? {
        edges.push((field(&path, line, &rec, 0)?, field(&path, line, &rec, 1)?));
    }
    MultiViewGraph::from_parts(nodes, &edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::fuse_views;

    #[test]
    fn round_trip() {
        let g = fuse_views(&vec![(0, 2)], &vec![(1, 7)], &vec![(1, 2)], 3, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_graph(&g, dir.path()).unwrap();
        assert_eq!(read_graph(dir.path()).unwrap(), g);
    }
}
