use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GraphError, TextAttributedGraph};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeRecord {
    id: i64,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<i64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeRecord {
    src: i64,
    dst: i64,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> GraphError + '_ {
    move |source| GraphError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_records<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<(usize, T)>, GraphError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| GraphError::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push((i + 1, record));
    }
    Ok(out)
}

/// Reads a graph from line-delimited JSON node and edge files.
///
/// File ids are remapped to `0..N` in first-seen order. Either every node has
/// a label or none does.
pub fn load_graph(
    nodes_path: impl AsRef<Path>,
    edges_path: impl AsRef<Path>,
) -> Result<TextAttributedGraph, GraphError> {
    load(nodes_path.as_ref(), Some(edges_path.as_ref()))
}

/// Reads only the node file; the graph has no edges.
pub fn load_nodes(nodes_path: impl AsRef<Path>) -> Result<TextAttributedGraph, GraphError> {
    load(nodes_path.as_ref(), None)
}

fn load(nodes_path: &Path, edges_path: Option<&Path>) -> Result<TextAttributedGraph, GraphError> {
    let nodes: Vec<(usize, NodeRecord)> = read_records(nodes_path)?;
    let mut index: HashMap<i64, usize> = HashMap::with_capacity(nodes.len());
    let mut ids = Vec::with_capacity(nodes.len());
    let mut texts = Vec::with_capacity(nodes.len());
    let mut labels = Vec::with_capacity(nodes.len());
    for (line, rec) in nodes {
        if index.insert(rec.id, ids.len()).is_some() {
            return Err(GraphError::DuplicateNode {
                path: nodes_path.to_path_buf(),
                line,
                id: rec.id,
            });
        }
        if let Some(l) = rec.label {
            if l < 0 {
                return Err(GraphError::Malformed {
                    path: nodes_path.to_path_buf(),
                    line,
                    message: format!("negative label {l}"),
                });
            }
        }
        ids.push(rec.id);
        texts.push(rec.text);
        labels.push(rec.label.map(|l| l as usize));
    }
    let labels = if labels.iter().all(Option::is_some) && !labels.is_empty() {
        Some(labels.into_iter().map(Option::unwrap).collect())
    } else if labels.iter().all(Option::is_none) {
        None
    } else {
        return Err(GraphError::PartialLabels);
    };

    let mut edges = Vec::new();
    let Some(edges_path) = edges_path else {
        return TextAttributedGraph::with_ids(ids, texts, edges, labels);
    };
    for (line, rec) in read_records::<EdgeRecord>(edges_path)? {
        let lookup = |id: i64| {
            index.get(&id).copied().ok_or(GraphError::UnknownNode {
                path: edges_path.to_path_buf(),
                line,
                id,
            })
        };
        let (a, b) = (lookup(rec.src)?, lookup(rec.dst)?);
        if a == b {
            return Err(GraphError::SelfLoopRecord {
                path: edges_path.to_path_buf(),
                line,
                id: rec.src,
            });
        }
        edges.push((a, b));
    }
    TextAttributedGraph::with_ids(ids, texts, edges, labels)
}

/// Writes the graph in the format [`load_graph`] reads, keeping the original ids.
pub fn save_graph(
    graph: &TextAttributedGraph,
    nodes_path: impl AsRef<Path>,
    edges_path: impl AsRef<Path>,
) -> Result<(), GraphError> {
    let nodes_path = nodes_path.as_ref();
    let edges_path = edges_path.as_ref();
    let mut w = BufWriter::new(File::create(nodes_path).map_err(io_err(nodes_path))?);
    for (n, text) in graph.texts().iter().enumerate() {
        let rec = NodeRecord {
            id: graph.node_ids()[n],
            text: text.clone(),
            label: graph.labels().map(|l| l[n] as i64),
        };
        let line = serde_json::to_string(&rec).expect("node record serializes");
        writeln!(w, "{line}").map_err(io_err(nodes_path))?;
    }
    w.flush().map_err(io_err(nodes_path))?;

    let mut w = BufWriter::new(File::create(edges_path).map_err(io_err(edges_path))?);
    for &(a, b) in graph.edges() {
        let rec = EdgeRecord {
            src: graph.node_ids()[a],
            dst: graph.node_ids()[b],
        };
        let line = serde_json::to_string(&rec).expect("edge record serializes");
        writeln!(w, "{line}").map_err(io_err(edges_path))?;
    }
    w.flush().map_err(io_err(edges_path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn loads_and_remaps_ids() {
        let dir = tempfile::tempdir().unwrap();
        let nodes = write(
            dir.path(),
            "n.jsonl",
            "{\"id\": 10, \"text\": \"a\", \"label\": 1}\n{\"id\": 3, \"text\": \"b\", \"label\": 0}\n",
        );
        let edges = write(
            dir.path(),
            "e.jsonl",
            "{\"src\": 10, \"dst\": 3}\n{\"src\": 3, \"dst\": 10}\n",
        );
        let g = load_graph(&nodes, &edges).unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.node_ids(), &[10, 3]);
        assert_eq!(g.labels(), Some(&[1, 0][..]));
        let n = load_nodes(&nodes).unwrap();
        assert_eq!((n.node_count(), n.edge_count()), (2, 0));
        assert_eq!(n.texts(), g.texts());
    }

    #[test]
    fn reports_line_numbers_and_bad_references() {
        let dir = tempfile::tempdir().unwrap();
        let nodes = write(
            dir.path(),
            "n.jsonl",
            "{\"id\": 0, \"text\": \"a\"}\n{\"id\": 1, \"txt\": 2}\n",
        );
        let edges = write(dir.path(), "e.jsonl", "");
        match load_graph(&nodes, &edges) {
            Err(GraphError::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }

        let nodes = write(
            dir.path(),
            "n.jsonl",
            "{\"id\": 0, \"text\": \"a\"}\n{\"id\": 0, \"text\": \"b\"}\n",
        );
        assert!(matches!(
            load_graph(&nodes, &edges),
            Err(GraphError::DuplicateNode { line: 2, id: 0, .. })
        ));

        let nodes = write(
            dir.path(),
            "n.jsonl",
            "{\"id\": 0, \"text\": \"a\"}\n{\"id\": 1, \"text\": \"b\"}\n",
        );
        let edges = write(dir.path(), "e.jsonl", "{\"src\": 0, \"dst\": 7}\n");
        assert!(matches!(
            load_graph(&nodes, &edges),
            Err(GraphError::UnknownNode { id: 7, line: 1, .. })
        ));
        let edges = write(dir.path(), "e.jsonl", "{\"src\": 1, \"dst\": 1}\n");
        assert!(matches!(
            load_graph(&nodes, &edges),
            Err(GraphError::SelfLoopRecord { .. })
        ));
        assert!(matches!(
            load_graph(dir.path().join("missing.jsonl"), &edges),
            Err(GraphError::Io { .. })
        ));
    }
}
