use std::collections::HashSet;

use super::{Graph, NodeAnnotations};
use crate::error::{Error, Result};
use crate::numerics::RandomSource;

/// Held-out link prediction split.
#[derive(Clone, Debug)]
pub struct LinkSplit {
    /// The input graph with the test positives removed.
    pub train: Graph,
    pub test_pos: Vec<(usize, usize)>,
    pub test_neg: Vec<(usize, usize)>,
}

/// Holds out `round(test_fraction * |E|)` edges and an equal number of
/// uniformly sampled non-edges.
pub fn split_links(g: &Graph, test_fraction: f64, rng: &mut RandomSource) -> Result<LinkSplit> {
    if !(test_fraction > 0.0 && test_fraction < 0.5) {
        return Err(Error::config(format!(
            "link test fraction must lie in (0, 0.5), got {test_fraction}"
        )));
    }
    let m = g.num_edges();
    if m < 10 {
        return Err(Error::InfeasibleSplit(format!(
            "graph has {m} edges; at least 10 are required"
        )));
    }
    let n = g.num_nodes();
    let n_test = ((test_fraction * m as f64).round() as usize).max(1);
    let non_edges = n * (n - 1) / 2 - m;
    if non_edges < n_test {
        return Err(Error::InfeasibleSplit(format!(
            "{n_test} negative pairs needed but only {non_edges} non-edges exist"
        )));
    }

    let order = rng.permutation(m);
    let test_pos: Vec<(usize, usize)> = order[..n_test].iter().map(|&i| g.edges()[i]).collect();
    let train_edges = order[n_test..].iter().map(|&i| g.edges()[i]);
    let train = g.with_edges(train_edges)?;

    let mut chosen = HashSet::with_capacity(n_test);
    let mut test_neg = Vec::with_capacity(n_test);
    while test_neg.len() < n_test {
        let (u, v) = (rng.below(n), rng.below(n));
        if u == v || g.has_edge(u, v) {
            continue;
        }
        let pair = (u.min(v), u.max(v));
        if chosen.insert(pair) {
            test_neg.push(pair);
        }
    }

    Ok(LinkSplit {
        train,
        test_pos,
        test_neg,
    })
}

fn random_mask(n: usize, count: usize, rng: &mut RandomSource) -> Vec<bool> {
    let mut mask = vec![false; n];
    for &i in &rng.permutation(n)[..count] {
        mask[i] = true;
    }
    mask
}

/// Marks `round(test_fraction * N)` uniformly chosen nodes as the
/// node-classification test set; every other node is a training node.
pub fn split_nodes(
    ann: &NodeAnnotations,
    test_fraction: f64,
    rng: &mut RandomSource,
) -> Result<NodeAnnotations> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::config(format!(
            "node test fraction must lie in [0, 1), got {test_fraction}"
        )));
    }
    let n = ann.len();
    let count = (test_fraction * n as f64).round() as usize;
    Ok(NodeAnnotations {
        utility_test_mask: random_mask(n, count, rng),
        ..ann.clone()
    })
}

/// Marks `round(ratio * N)` uniformly chosen nodes as having an observed
/// sensitive attribute.
pub fn mask_sensitive(
    ann: &NodeAnnotations,
    observed_ratio: f64,
    rng: &mut RandomSource,
) -> Result<NodeAnnotations> {
    if !(observed_ratio > 0.0 && observed_ratio <= 1.0) {
        return Err(Error::config(format!(
            "observed ratio must lie in (0, 1], got {observed_ratio}"
        )));
    }
    let n = ann.len();
    let count = (observed_ratio * n as f64).round() as usize;
    Ok(NodeAnnotations {
        observed_mask: random_mask(n, count, rng),
        ..ann.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;
    use proptest::prelude::*;

    fn random_graph(n: usize, p: f64, seed: u64) -> Graph {
        let mut rng = RandomSource::new(seed);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.bernoulli(p) {
                    edges.push((u, v));
                }
            }
        }
        Graph::new(n, edges, Tensor::zeros(&[n, 1])).unwrap()
    }

    fn annotations(n: usize) -> NodeAnnotations {
        NodeAnnotations::new(
            (0..n).map(|i| Some(i % 2)).collect(),
            (0..n).map(|i| i % 2).collect(),
        )
        .unwrap()
    }

    #[test]
    fn ten_percent_of_a_thousand_edges() {
        // 1000 edges exactly: first 1000 pairs of a 100-node graph.
        let pairs = (0..100).flat_map(|u| (u + 1..100).map(move |v| (u, v)));
        let g = Graph::new(100, pairs.take(1000), Tensor::zeros(&[100, 1])).unwrap();
        let split = split_links(&g, 0.1, &mut RandomSource::new(0)).unwrap();
        assert_eq!(split.test_pos.len(), 100);
        assert_eq!(split.test_neg.len(), 100);
        assert_eq!(split.train.num_edges(), 900);
    }

    #[test]
    fn same_seed_same_split() {
        let g = random_graph(60, 0.1, 2);
        let a = split_links(&g, 0.1, &mut RandomSource::new(5)).unwrap();
        let b = split_links(&g, 0.1, &mut RandomSource::new(5)).unwrap();
        assert_eq!(a.test_pos, b.test_pos);
        assert_eq!(a.test_neg, b.test_neg);
        assert_eq!(a.train, b.train);
    }

    #[test]
    fn complete_graph_is_infeasible() {
        let k4 = Graph::new(
            4,
            [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)],
            Tensor::zeros(&[4, 1]),
        )
        .unwrap();
        assert!(matches!(
            split_links(&k4, 0.1, &mut RandomSource::new(0)),
            Err(Error::InfeasibleSplit(_))
        ));
        let k6_edges: Vec<_> = (0..6).flat_map(|u| (u + 1..6).map(move |v| (u, v))).collect();
        let k6 = Graph::new(6, k6_edges, Tensor::zeros(&[6, 1])).unwrap();
        assert!(matches!(
            split_links(&k6, 0.1, &mut RandomSource::new(0)),
            Err(Error::InfeasibleSplit(_))
        ));
    }

    #[test]
    fn node_split_counts() {
        let ann = annotations(100);
        let s = split_nodes(&ann, 0.2, &mut RandomSource::new(1)).unwrap();
        assert_eq!(s.utility_test_mask.iter().filter(|&&b| b).count(), 20);
        let none = split_nodes(&ann, 0.0, &mut RandomSource::new(1)).unwrap();
        assert!(none.utility_test_mask.iter().all(|&b| !b));
    }

    #[test]
    fn sensitive_mask_counts() {
        let ann = annotations(300);
        let half = mask_sensitive(&ann, 0.5, &mut RandomSource::new(3)).unwrap();
        assert_eq!(half.observed_count(), 150);
        let all = mask_sensitive(&ann, 1.0, &mut RandomSource::new(3)).unwrap();
        assert_eq!(all.observed_count(), 300);
        let again = mask_sensitive(&ann, 0.5, &mut RandomSource::new(3)).unwrap();
        assert_eq!(half.observed_mask, again.observed_mask);
        assert!(mask_sensitive(&ann, 0.0, &mut RandomSource::new(3)).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn link_split_partitions_edges(seed in 0u64..1000, frac in 0.05f64..0.45) {
            let g = random_graph(40, 0.15, seed);
            let split = split_links(&g, frac, &mut RandomSource::new(seed)).unwrap();
            prop_assert_eq!(split.test_pos.len(), split.test_neg.len());
            let mut all: Vec<_> = split.train.edges().to_vec();
            for &(u, v) in &split.test_pos {
                prop_assert!(!split.train.has_edge(u, v));
                all.push((u, v));
            }
            all.sort_unstable();
            prop_assert_eq!(&all[..], g.edges());
            for &(u, v) in &split.test_neg {
                prop_assert!(u != v);
                prop_assert!(!g.has_edge(u, v));
            }
            let adj = split.train.adjacency();
            prop_assert_eq!(adj.clone(), adj.transpose().unwrap());
        }
    }
}
