use serde::{Deserialize, Serialize};

use super::{Graph, NodeAnnotations};
use crate::error::{Error, Result};
use crate::numerics::{RandomSource, Tensor};

/// Planted-partition generator settings.
///
/// Two independent balanced partitions are planted. The *block* partition
/// drives edges with `p_in` / `p_out`, seeds the features, and (up to
/// `flip_prob` noise) is the sensitive attribute. The *label* partition is
/// the utility target; it adds its own edge layer with `label_p_in` /
/// `label_p_out` (zero by default, i.e. labels carry no structure).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SbmConfig {
    pub nodes: usize,
    pub blocks: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    pub feature_noise: f64,
    pub flip_prob: f64,
    pub label_classes: usize,
    pub label_p_in: f64,
    pub label_p_out: f64,
}

impl Default for SbmConfig {
    fn default() -> Self {
        Self {
            nodes: 300,
            blocks: 2,
            p_in: 0.05,
            p_out: 0.005,
            feature_dim: 8,
            feature_noise: 1.0,
            flip_prob: 0.1,
            label_classes: 2,
            label_p_in: 0.0,
            label_p_out: 0.0,
        }
    }
}

impl SbmConfig {
    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must lie in [0, 1], got {p}")))
            }
        };
        prob("p_in", self.p_in)?;
        prob("p_out", self.p_out)?;
        prob("label_p_in", self.label_p_in)?;
        prob("label_p_out", self.label_p_out)?;
        if self.p_out > self.p_in {
            return Err(Error::config(format!(
                "p_out ({}) must not exceed p_in ({})",
                self.p_out, self.p_in
            )));
        }
        if self.label_p_out > self.label_p_in {
            return Err(Error::config("label_p_out must not exceed label_p_in"));
        }
        if !(0.0..=0.5).contains(&self.flip_prob) {
            return Err(Error::config(format!(
                "flip_prob must lie in [0, 0.5], got {}",
                self.flip_prob
            )));
        }
        if self.blocks == 0 || self.label_classes == 0 {
            return Err(Error::config("blocks and label_classes must be positive"));
        }
        if self.nodes < self.blocks.max(self.label_classes) {
            return Err(Error::config("fewer nodes than partition classes"));
        }
        if self.feature_dim < self.blocks {
            return Err(Error::config(format!(
                "feature_dim ({}) must be at least the block count ({})",
                self.feature_dim, self.blocks
            )));
        }
        if !(self.feature_noise >= 0.0 && self.feature_noise.is_finite()) {
            return Err(Error::config("feature_noise must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Balanced assignment of `n` items to `k` classes in random order.
fn balanced_partition(n: usize, k: usize, rng: &mut RandomSource) -> Vec<usize> {
    let mut classes: Vec<usize> = (0..n).map(|i| i % k).collect();
    rng.shuffle(&mut classes);
    classes
}

/// Samples a planted-partition graph with annotations.
///
/// Returns the graph and annotations together with the block assignment.
pub fn generate_sbm(
    cfg: &SbmConfig,
    rng: &mut RandomSource,
) -> Result<(Graph, NodeAnnotations, Vec<usize>)> {
    cfg.validate()?;
    let n = cfg.nodes;
    let blocks = balanced_partition(n, cfg.blocks, rng);
    let labels = balanced_partition(n, cfg.label_classes, rng);

    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p_block = if blocks[u] == blocks[v] { cfg.p_in } else { cfg.p_out };
            let p_label = if labels[u] == labels[v] {
                cfg.label_p_in
            } else {
                cfg.label_p_out
            };
            let p = 1.0 - (1.0 - p_block) * (1.0 - p_label);
            if rng.bernoulli(p) {
                edges.push((u, v));
            }
        }
    }

    let mut features = Tensor::zeros(&[n, cfg.feature_dim]);
    for i in 0..n {
        for j in 0..cfg.feature_dim {
            let signal = if j == blocks[i] { 1.0 } else { 0.0 };
            features.set(i, j, signal + cfg.feature_noise * rng.normal());
        }
    }

    let sensitive: Vec<usize> = blocks
        .iter()
        .map(|&b| {
            if cfg.blocks > 1 && rng.bernoulli(cfg.flip_prob) {
                (b + 1 + rng.below(cfg.blocks - 1)) % cfg.blocks
            } else {
                b
            }
        })
        .collect();

    let graph = Graph::new(n, edges, features)?;
    let ann = NodeAnnotations::new(labels.into_iter().map(Some).collect(), sensitive)?;
    Ok((graph, ann, blocks))
}
