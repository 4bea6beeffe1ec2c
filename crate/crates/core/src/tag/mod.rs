//! Text-attributed graphs: nodes carrying raw text, undirected edges and
//! optional class labels.

mod io;
mod split;
mod synth;

use std::collections::BTreeSet;
use std::path::PathBuf;

pub use io::{load_graph, load_nodes, save_graph};
pub use split::{make_splits, round_half_up, split_nodes, SplitAssignment, SplitStrategy};
pub use synth::{generate_synthetic, SyntheticSpec};

use crate::numerics::CsrMatrix;

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: duplicate node id {id}")]
    DuplicateNode { path: PathBuf, line: usize, id: i64 },
    #[error("{path}:{line}: edge references unknown node id {id}")]
    UnknownNode { path: PathBuf, line: usize, id: i64 },
    #[error("{path}:{line}: self-loop on node id {id}")]
    SelfLoopRecord { path: PathBuf, line: usize, id: i64 },
    #[error("labels given for some nodes but not others")]
    PartialLabels,
    #[error("edge ({0}, {1}) is a self-loop")]
    SelfLoop(usize, usize),
    #[error("edge ({0}, {1}) is out of range for {2} nodes")]
    EdgeOutOfRange(usize, usize, usize),
    #[error("expected {expected} labels, got {actual}")]
    LabelCount { expected: usize, actual: usize },
    #[error("graph has no labels")]
    MissingLabels,
    #[error("invalid split fractions: train {train}, test {test}")]
    BadFractions { train: f64, test: f64 },
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
}

/// An undirected graph whose nodes carry text and, optionally, class labels.
///
/// Immutable once built. `edges` holds each undirected edge once as `(i, j)`
/// with `i < j`; the adjacency matrix holds both directions.
#[derive(Clone, Debug, PartialEq)]
pub struct TextAttributedGraph {
    node_ids: Vec<i64>,
    texts: Vec<String>,
    edges: Vec<(usize, usize)>,
    labels: Option<Vec<usize>>,
    adjacency: CsrMatrix,
}

impl TextAttributedGraph {
    /// Builds a graph with node ids `0..N`. Reversed and repeated edges are
    /// merged; self-loops are rejected.
    pub fn new(
        texts: Vec<String>,
        edges: impl IntoIterator<Item = (usize, usize)>,
        labels: Option<Vec<usize>>,
    ) -> Result<Self, GraphError> {
        let ids = (0..texts.len() as i64).collect();
        Self::with_ids(ids, texts, edges, labels)
    }

    pub(crate) fn with_ids(
        node_ids: Vec<i64>,
        texts: Vec<String>,
        edges: impl IntoIterator<Item = (usize, usize)>,
        labels: Option<Vec<usize>>,
    ) -> Result<Self, GraphError> {
        let n = texts.len();
        debug_assert_eq!(node_ids.len(), n);
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(GraphError::LabelCount {
                    expected: n,
                    actual: l.len(),
                });
            }
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(GraphError::EdgeOutOfRange(a, b, n));
            }
            if a == b {
                return Err(GraphError::SelfLoop(a, b));
            }
            set.insert((a.min(b), a.max(b)));
        }
        let edges: Vec<_> = set.into_iter().collect();
        let triplets: Vec<_> = edges.iter().flat_map(|&(a, b)| [(a, b, 1.0), (b, a, 1.0)]).collect();
        let adjacency =
            CsrMatrix::from_triplets(n, n, &triplets).expect("validated edge endpoints always form a valid CSR");
        Ok(Self {
            node_ids,
            texts,
            edges,
            labels,
            adjacency,
        })
    }

    pub fn node_count(&self) -> usize {
        self.texts.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node_ids(&self) -> &[i64] {
        &self.node_ids
    }

    pub fn texts(&self) -> &[String] {
        &self.texts
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Number of classes `C` (max label + 1), or `None` without labels.
    pub fn num_classes(&self) -> Option<usize> {
        self.labels.as_ref().map(|l| l.iter().max().map_or(0, |&m| m + 1))
    }

    /// Symmetric binary adjacency with an empty diagonal.
    pub fn adjacency(&self) -> &CsrMatrix {
        &self.adjacency
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency.row_nnz(node)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_connected_graph() {
        let g = TextAttributedGraph::new(vec!["a".into(), "b".into()], [(0, 1)], None).unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.adjacency().get(0, 1), 1.0);
        assert_eq!(g.adjacency().get(1, 0), 1.0);
        assert!(g.adjacency().is_symmetric());
    }

    #[test]
    fn reversed_edges_are_merged() {
        let g = TextAttributedGraph::new(vec!["a".into(), "b".into()], [(0, 1), (1, 0)], None).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.adjacency().nnz(), 2);
    }

    #[test]
    fn rejects_self_loops_and_bad_labels() {
        let texts = vec!["a".to_string(), "b".to_string()];
        assert!(matches!(
            TextAttributedGraph::new(texts.clone(), [(1, 1)], None),
            Err(GraphError::SelfLoop(1, 1))
        ));
        assert!(matches!(
            TextAttributedGraph::new(texts.clone(), [(0, 2)], None),
            Err(GraphError::EdgeOutOfRange(0, 2, 2))
        ));
        assert!(matches!(
            TextAttributedGraph::new(texts, [], Some(vec![0])),
            Err(GraphError::LabelCount { .. })
        ));
    }

    #[test]
    fn isolated_nodes_allowed() {
        let g = TextAttributedGraph::new(vec!["a".into(); 3], [(0, 1)], Some(vec![0, 1, 2])).unwrap();
        assert_eq!(g.degree(2), 0);
        assert_eq!(g.num_classes(), Some(3));
    }
}
