//! Graph data model, file formats, splits, and the synthetic SBM generator.

mod io;
mod sbm;
mod split;

use std::collections::BTreeSet;

pub use io::{load_graph, write_dataset, DatasetFiles, ANNOTATION_FILE, EDGE_FILE, FEATURE_FILE, PROVENANCE_FILE};
pub use sbm::{generate_sbm, SbmConfig};
pub use split::{mask_sensitive, split_links, split_nodes, LinkSplit};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Undirected, unweighted graph with dense node features.
///
/// Edges are stored once as `(u, v)` with `u < v`, sorted, without duplicates
/// or self-loops.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    features: Tensor,
}

impl Graph {
    /// Builds a graph, normalizing edge orientation and dropping duplicates
    /// and self-loops.
    pub fn new(
        num_nodes: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        features: Tensor,
    ) -> Result<Self> {
        features.expect_matrix("graph features")?;
        if features.rows() != num_nodes {
            return Err(Error::Consistency(format!(
                "feature matrix has {} rows for {} nodes",
                features.rows(),
                num_nodes
            )));
        }
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u >= num_nodes || v >= num_nodes {
                return Err(Error::Consistency(format!(
                    "edge ({u}, {v}) references a node outside 0..{num_nodes}"
                )));
            }
            if u != v {
                set.insert((u.min(v), u.max(v)));
            }
        }
        Ok(Self {
            num_nodes,
            edges: set.into_iter().collect(),
            features,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edges.binary_search(&(u.min(v), u.max(v))).is_ok()
    }

    /// Same nodes and features with a different edge set.
    pub fn with_edges(&self, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        Self::new(self.num_nodes, edges, self.features.clone())
    }

    /// Encoder input: the features, or the identity matrix (one indicator
    /// column per node) when the graph has no feature columns.
    pub fn encoder_features(&self) -> Tensor {
        if self.feature_dim() == 0 {
            Tensor::identity(self.num_nodes)
        } else {
            self.features.clone()
        }
    }

    /// Same structure with every feature set to zero.
    pub fn without_features(&self) -> Self {
        Self {
            num_nodes: self.num_nodes,
            edges: self.edges.clone(),
            features: Tensor::zeros(self.features.shape()),
        }
    }

    /// Raw symmetric 0/1 adjacency with zero diagonal.
    pub fn adjacency(&self) -> Tensor {
        let n = self.num_nodes;
        let mut a = Tensor::zeros(&[n, n]);
        for &(u, v) in &self.edges {
            a.set(u, v, 1.0);
            a.set(v, u, 1.0);
        }
        a
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_nodes];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    /// Relabels nodes so that new node `i` is old node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let mut inverse = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let features = self.features.select_rows(perm);
        Self::new(
            self.num_nodes,
            self.edges.iter().map(|&(u, v)| (inverse[u], inverse[v])),
            features,
        )
    }
}

/// Per-node annotations: utility labels, the sensitive attribute, and masks.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeAnnotations {
    pub labels: Vec<Option<usize>>,
    pub sensitive: Vec<usize>,
    /// Nodes whose sensitive attribute is visible during training.
    pub observed_mask: Vec<bool>,
    /// Nodes held out for downstream node classification.
    pub utility_test_mask: Vec<bool>,
}

impl NodeAnnotations {
    /// Fresh annotations with everything observed and no test nodes.
    pub fn new(labels: Vec<Option<usize>>, sensitive: Vec<usize>) -> Result<Self> {
        if labels.len() != sensitive.len() {
            return Err(Error::Consistency(format!(
                "{} labels but {} sensitive values",
                labels.len(),
                sensitive.len()
            )));
        }
        let n = sensitive.len();
        let ann = Self {
            labels,
            sensitive,
            observed_mask: vec![true; n],
            utility_test_mask: vec![false; n],
        };
        ann.check_dense_sensitive()?;
        Ok(ann)
    }

    pub fn len(&self) -> usize {
        self.sensitive.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sensitive.is_empty()
    }

    pub fn num_sensitive_classes(&self) -> usize {
        self.sensitive.iter().max().map_or(0, |m| m + 1)
    }

    pub fn num_label_classes(&self) -> usize {
        self.labels.iter().flatten().max().map_or(0, |m| m + 1)
    }

    pub fn observed_count(&self) -> usize {
        self.observed_mask.iter().filter(|&&b| b).count()
    }

    fn check_dense_sensitive(&self) -> Result<()> {
        let classes = self.num_sensitive_classes();
        let mut seen = vec![false; classes];
        for &s in &self.sensitive {
            seen[s] = true;
        }
        if let Some(missing) = seen.iter().position(|&b| !b) {
            return Err(Error::Consistency(format!(
                "sensitive class ids must be dense in 0..{classes}; {missing} never occurs"
            )));
        }
        Ok(())
    }
}

/// Symmetric GCN propagation matrix `D̃^{-1/2} (A + I) D̃^{-1/2}`.
pub fn normalize_adjacency(g: &Graph) -> Tensor {
    let n = g.num_nodes();
    let inv_sqrt: Vec<f64> = g
        .degrees()
        .iter()
        .map(|&d| 1.0 / ((d + 1) as f64).sqrt())
        .collect();
    let mut a = Tensor::zeros(&[n, n]);
    for i in 0..n {
        a.set(i, i, inv_sqrt[i] * inv_sqrt[i]);
    }
    for &(u, v) in g.edges() {
        let w = inv_sqrt[u] * inv_sqrt[v];
        a.set(u, v, w);
        a.set(v, u, w);
    }
    a
}
