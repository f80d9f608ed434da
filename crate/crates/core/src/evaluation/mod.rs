//! Utility and privacy measurements over published embeddings.

mod attack;
mod classifier;
mod metrics;
mod sweep;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use attack::{attack_inference, node_classification, public_secret_report, GroupMetrics, GroupReport};
pub use classifier::{Classifier, FitOptions, Loss};
pub use metrics::{auc, link_auc, link_scores};
pub use sweep::{
    evaluate_prepared, prepare_data, run_experiment, run_sweep, summarize, synthesize, train_prepared, ModelKind,
    PreparedData, RunOutcome, SweepAxis, SweepCell,
};

use crate::error::{Error, Result};
use crate::graph::{LinkSplit, NodeAnnotations};
use crate::numerics::{RandomSource, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackerKind {
    Mlp,
    LinearMargin,
}

impl fmt::Display for AttackerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttackerKind::Mlp => "mlp",
            AttackerKind::LinearMargin => "linear-margin",
        })
    }
}

impl FromStr for AttackerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlp" => Ok(AttackerKind::Mlp),
            "linear-margin" | "margin" => Ok(AttackerKind::LinearMargin),
            other => Err(Error::config(format!("unknown attacker kind {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackerConfig {
    pub kind: AttackerKind,
    pub hidden: usize,
    pub folds: usize,
    pub epochs: usize,
    pub lr: f64,
    pub l2: f64,
    /// Fraction of nodes whose sensitive attribute the attacker holds.
    pub budget: f64,
}

impl Default for AttackerConfig {
    fn default() -> Self {
        Self {
            kind: AttackerKind::Mlp,
            hidden: 64,
            folds: 5,
            epochs: 200,
            lr: 0.005,
            l2: 0.1,
            budget: 0.5,
        }
    }
}

impl AttackerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::config(format!("attacker folds must be >= 2, got {}", self.folds)));
        }
        if !(self.budget > 0.0 && self.budget <= 1.0) {
            return Err(Error::config(format!(
                "attacker budget must lie in (0, 1], got {}",
                self.budget
            )));
        }
        if self.hidden == 0 || self.epochs == 0 || !(self.lr > 0.0) || !(self.l2 >= 0.0) {
            return Err(Error::config("attacker hidden, epochs and lr must be positive"));
        }
        Ok(())
    }
}

/// Downstream node classifier (multinomial logistic regression).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DownstreamConfig {
    pub epochs: usize,
    pub lr: f64,
    pub l2: f64,
}

impl Default for DownstreamConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            lr: 0.01,
            l2: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub link_test_fraction: f64,
    pub node_test_fraction: f64,
    pub classifier: DownstreamConfig,
    pub attacker: AttackerConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            link_test_fraction: 0.1,
            node_test_fraction: 0.2,
            classifier: DownstreamConfig::default(),
            attacker: AttackerConfig::default(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.link_test_fraction > 0.0 && self.link_test_fraction < 0.5) {
            return Err(Error::config("link_test_fraction must lie in (0, 0.5)"));
        }
        if !(self.node_test_fraction > 0.0 && self.node_test_fraction < 1.0) {
            return Err(Error::config("node_test_fraction must lie in (0, 1)"));
        }
        if self.classifier.epochs == 0 || !(self.classifier.lr > 0.0) || !(self.classifier.l2 >= 0.0) {
            return Err(Error::config("classifier epochs and lr must be positive"));
        }
        self.attacker.validate()
    }
}

const ATTACK_MLP_STREAM: u64 = 0x4001;
const ATTACK_MARGIN_STREAM: u64 = 0x4002;
const GROUP_STREAM: u64 = 0x4003;

/// All metrics of one embedding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub link_auc: f64,
    pub node_clf_acc: f64,
    pub attack_acc_mlp: f64,
    pub attack_acc_margin: f64,
    /// Absent when every (or no) sensitive attribute was observed.
    pub groups: Option<GroupReport>,
}

/// Runs the full measurement protocol on one embedding matrix.
pub fn evaluate(
    z: &Tensor,
    split: &LinkSplit,
    ann: &NodeAnnotations,
    cfg: &EvalConfig,
    rng: &RandomSource,
) -> Result<Metrics> {
    cfg.validate()?;
    if z.rows() != ann.len() {
        return Err(Error::Consistency(format!(
            "embedding has {} rows but the dataset has {} nodes",
            z.rows(),
            ann.len()
        )));
    }
    let train_mask: Vec<bool> = ann.utility_test_mask.iter().map(|t| !t).collect();
    let node_clf_acc = node_classification(
        z,
        &ann.labels,
        &train_mask,
        &ann.utility_test_mask,
        &cfg.classifier,
    )?;
    let attack = |kind, stream| attack_inference(z, &ann.sensitive, &cfg.attacker, kind, &mut rng.derive(stream));
    let observed = ann.observed_count();
    let groups = if observed == 0 || observed == ann.len() {
        None
    } else {
        Some(public_secret_report(
            z,
            ann,
            &cfg.classifier,
            &cfg.attacker,
            &mut rng.derive(GROUP_STREAM),
        )?)
    };
    Ok(Metrics {
        link_auc: link_auc(z, split)?,
        node_clf_acc,
        attack_acc_mlp: attack(AttackerKind::Mlp, ATTACK_MLP_STREAM)?,
        attack_acc_margin: attack(AttackerKind::LinearMargin, ATTACK_MARGIN_STREAM)?,
        groups,
    })
}

/// Column names of the report file, in order.
pub const REPORT_FIELDS: [&str; 11] = [
    "axis",
    "value",
    "seed",
    "link_auc",
    "node_clf_acc",
    "attack_acc_mlp",
    "attack_acc_margin",
    "public_acc",
    "secret_acc",
    "public_attack",
    "secret_attack",
];

/// One report record: metrics plus the configuration that produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub axis: String,
    pub value: f64,
    pub seed: u64,
    pub config_hash: String,
    pub metrics: Metrics,
}

impl EvalReport {
    pub fn csv_header() -> String {
        REPORT_FIELDS.join(",")
    }

    /// Group columns are left empty when there is no public/secret split.
    pub fn csv_row(&self) -> String {
        let m = &self.metrics;
        let opt = |f: fn(&GroupReport) -> f64| m.groups.as_ref().map(|g| f(g).to_string()).unwrap_or_default();
        [
            self.axis.clone(),
            self.value.to_string(),
            self.seed.to_string(),
            m.link_auc.to_string(),
            m.node_clf_acc.to_string(),
            m.attack_acc_mlp.to_string(),
            m.attack_acc_margin.to_string(),
            opt(|g| g.public.utility_acc),
            opt(|g| g.secret.utility_acc),
            opt(|g| g.public.attack_acc),
            opt(|g| g.secret.attack_acc),
        ]
        .join(",")
    }

    /// Metric name/value pairs used by sweep summaries.
    pub fn named_metrics(&self) -> Vec<(&'static str, Option<f64>)> {
        let m = &self.metrics;
        let g = m.groups.as_ref();
        vec![
            ("link_auc", Some(m.link_auc)),
            ("node_clf_acc", Some(m.node_clf_acc)),
            ("attack_acc_mlp", Some(m.attack_acc_mlp)),
            ("attack_acc_margin", Some(m.attack_acc_margin)),
            ("public_acc", g.map(|g| g.public.utility_acc)),
            ("secret_acc", g.map(|g| g.secret.utility_acc)),
            ("public_attack", g.map(|g| g.public.attack_acc)),
            ("secret_attack", g.map(|g| g.secret.attack_acc)),
        ]
    }
}
