use serde::{Deserialize, Serialize};

use super::classifier::{accuracy, Classifier, FitOptions, Loss};
use super::{AttackerConfig, AttackerKind, DownstreamConfig};
use crate::error::{Error, Result};
use crate::graph::NodeAnnotations;
use crate::numerics::{RandomSource, Tensor};

fn check_rows(emb: &Tensor, n: usize) -> Result<()> {
    if emb.rows() == n {
        Ok(())
    } else {
        Err(Error::Consistency(format!(
            "embedding has {} rows but {n} nodes are annotated",
            emb.rows()
        )))
    }
}

fn num_classes(values: impl IntoIterator<Item = usize>) -> usize {
    values.into_iter().max().map_or(0, |m| m + 1)
}

fn downstream_options(cfg: &DownstreamConfig) -> FitOptions {
    FitOptions {
        loss: Loss::CrossEntropy,
        hidden: None,
        epochs: cfg.epochs,
        lr: cfg.lr,
        l2: cfg.l2,
    }
}

fn attacker_options(cfg: &AttackerConfig, kind: AttackerKind) -> FitOptions {
    match kind {
        AttackerKind::Mlp => FitOptions {
            loss: Loss::CrossEntropy,
            hidden: Some(cfg.hidden),
            epochs: cfg.epochs,
            lr: cfg.lr,
            l2: cfg.l2,
        },
        AttackerKind::LinearMargin => FitOptions {
            loss: Loss::Hinge,
            hidden: None,
            epochs: cfg.epochs,
            lr: cfg.lr,
            l2: cfg.l2,
        },
    }
}

fn fit_predict(
    emb: &Tensor,
    y: &[usize],
    train: &[usize],
    test: &[usize],
    classes: usize,
    opts: &FitOptions,
    rng: &mut RandomSource,
) -> Result<Vec<usize>> {
    let ys: Vec<usize> = train.iter().map(|&i| y[i]).collect();
    let clf = Classifier::fit(&emb.select_rows(train), &ys, classes, opts, rng)?;
    clf.predict(&emb.select_rows(test))
}

/// Downstream accuracy of a logistic-regression head trained on the frozen
/// embeddings of `train_mask` nodes and scored on `test_mask` nodes.
/// Unlabeled nodes are ignored on both sides.
pub fn node_classification(
    emb: &Tensor,
    labels: &[Option<usize>],
    train_mask: &[bool],
    test_mask: &[bool],
    cfg: &DownstreamConfig,
) -> Result<f64> {
    let n = labels.len();
    check_rows(emb, n)?;
    if train_mask.len() != n || test_mask.len() != n {
        return Err(Error::Consistency("mask length differs from node count".into()));
    }
    if train_mask.iter().zip(test_mask).any(|(a, b)| *a && *b) {
        return Err(Error::contract("train and test masks overlap"));
    }
    let pick = |mask: &[bool]| -> Vec<usize> {
        (0..n).filter(|&i| mask[i] && labels[i].is_some()).collect()
    };
    let (train, test) = (pick(train_mask), pick(test_mask));
    if train.is_empty() || test.is_empty() {
        return Err(Error::contract("node classification needs labeled train and test nodes"));
    }
    let y: Vec<usize> = labels.iter().map(|l| l.unwrap_or(0)).collect();
    let first = y[train[0]];
    if train.iter().all(|&i| y[i] == first) {
        return Err(Error::DegenerateLabels(format!(
            "every training node has label {first}"
        )));
    }
    let classes = num_classes(labels.iter().flatten().copied());
    let pred = fit_predict(
        emb,
        &y,
        &train,
        &test,
        classes,
        &downstream_options(cfg),
        &mut RandomSource::new(0),
    )?;
    let truth: Vec<usize> = test.iter().map(|&i| y[i]).collect();
    Ok(accuracy(&pred, &truth))
}

/// Out-of-fold predictions for every candidate node.
struct CrossFit {
    predictions: Vec<Option<usize>>,
    fold_accuracy: Vec<f64>,
}

/// Nodes are dealt into `folds` random folds. For each fold a model is fit
/// on the `known` nodes outside it and predicts every `candidate` inside it.
#[allow(clippy::too_many_arguments)]
fn cross_fit(
    emb: &Tensor,
    y: &[usize],
    known: &[bool],
    candidate: &[bool],
    folds: usize,
    classes: usize,
    opts: &FitOptions,
    rng: &mut RandomSource,
) -> Result<CrossFit> {
    let n = y.len();
    let mut fold = vec![0; n];
    for (pos, &i) in rng.permutation(n).iter().enumerate() {
        fold[i] = pos % folds;
    }
    let mut predictions = vec![None; n];
    let mut fold_accuracy = Vec::with_capacity(folds);
    for f in 0..folds {
        let train: Vec<usize> = (0..n).filter(|&i| known[i] && fold[i] != f).collect();
        let test: Vec<usize> = (0..n).filter(|&i| candidate[i] && fold[i] == f).collect();
        if train.is_empty() {
            return Err(Error::contract(format!("fold {f} has no training nodes")));
        }
        if test.is_empty() {
            continue;
        }
        let pred = fit_predict(emb, y, &train, &test, classes, opts, rng)?;
        let truth: Vec<usize> = test.iter().map(|&i| y[i]).collect();
        fold_accuracy.push(accuracy(&pred, &truth));
        for (&i, p) in test.iter().zip(pred) {
            predictions[i] = Some(p);
        }
    }
    Ok(CrossFit {
        predictions,
        fold_accuracy,
    })
}

/// The attacker's labeled nodes: a uniform sample of `budget · N` nodes,
/// drawn independently of which attributes the defender observed.
fn attacker_known(n: usize, cfg: &AttackerConfig, rng: &mut RandomSource) -> Result<Vec<bool>> {
    let count = (cfg.budget * n as f64).round() as usize;
    if count < 2 * cfg.folds {
        return Err(Error::contract(format!(
            "attacker knows {count} labels; {} folds need at least {}",
            cfg.folds,
            2 * cfg.folds
        )));
    }
    let mut known = vec![false; n];
    for &i in &rng.permutation(n)[..count] {
        known[i] = true;
    }
    Ok(known)
}

fn attack_cross_fit(
    emb: &Tensor,
    sensitive: &[usize],
    cfg: &AttackerConfig,
    kind: AttackerKind,
    rng: &mut RandomSource,
) -> Result<CrossFit> {
    cfg.validate()?;
    let n = sensitive.len();
    check_rows(emb, n)?;
    let known = attacker_known(n, cfg, rng)?;
    let classes = num_classes(sensitive.iter().copied());
    cross_fit(
        emb,
        sensitive,
        &known,
        &vec![true; n],
        cfg.folds,
        classes,
        &attacker_options(cfg, kind),
        rng,
    )
}

/// Attribute-inference accuracy: mean over folds of a `kind` attacker
/// trained on the embeddings of its known nodes outside the fold and
/// scored on every node of the fold.
pub fn attack_inference(
    emb: &Tensor,
    sensitive: &[usize],
    cfg: &AttackerConfig,
    kind: AttackerKind,
    rng: &mut RandomSource,
) -> Result<f64> {
    let fit = attack_cross_fit(emb, sensitive, cfg, kind, rng)?;
    Ok(fit.fold_accuracy.iter().sum::<f64>() / fit.fold_accuracy.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub size: usize,
    pub utility_acc: f64,
    pub attack_acc: f64,
}

/// Utility and attack accuracy split by whether a node's sensitive
/// attribute was observed in training ("public") or not ("secret").
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub public: GroupMetrics,
    pub secret: GroupMetrics,
}

fn group_accuracy(pred: &[Option<usize>], truth: &[Option<usize>], members: &[bool]) -> f64 {
    let (mut hits, mut total) = (0usize, 0usize);
    for i in 0..truth.len() {
        if let (true, Some(p), Some(t)) = (members[i], pred[i], truth[i]) {
            total += 1;
            hits += usize::from(p == t);
        }
    }
    if total == 0 {
        f64::NAN
    } else {
        hits as f64 / total as f64
    }
}

/// Per-group metrics from out-of-fold predictions, so every node in a group
/// contributes.
pub fn public_secret_report(
    emb: &Tensor,
    ann: &NodeAnnotations,
    classifier: &DownstreamConfig,
    attacker: &AttackerConfig,
    rng: &mut RandomSource,
) -> Result<GroupReport> {
    let n = ann.len();
    check_rows(emb, n)?;
    let public = ann.observed_mask.clone();
    let secret: Vec<bool> = public.iter().map(|o| !o).collect();
    let (n_pub, n_sec) = (ann.observed_count(), n - ann.observed_count());
    if n_pub == 0 || n_sec == 0 {
        return Err(Error::contract(format!(
            "public/secret report needs both groups, got {n_pub} public and {n_sec} secret"
        )));
    }

    let labeled: Vec<bool> = ann.labels.iter().map(Option::is_some).collect();
    let y: Vec<usize> = ann.labels.iter().map(|l| l.unwrap_or(0)).collect();
    let classes = num_classes(ann.labels.iter().flatten().copied());
    let utility = cross_fit(
        emb,
        &y,
        &labeled,
        &labeled,
        attacker.folds,
        classes,
        &downstream_options(classifier),
        rng,
    )?;
    let attack = attack_cross_fit(emb, &ann.sensitive, attacker, attacker.kind, rng)?;

    let sens: Vec<Option<usize>> = ann.sensitive.iter().copied().map(Some).collect();
    let group = |members: &[bool], size| GroupMetrics {
        size,
        utility_acc: group_accuracy(&utility.predictions, &ann.labels, members),
        attack_acc: group_accuracy(&attack.predictions, &sens, members),
    };
    let report = GroupReport {
        public: group(&public, n_pub),
        secret: group(&secret, n_sec),
    };
    if report.public.utility_acc.is_nan() || report.secret.utility_acc.is_nan() {
        return Err(Error::contract("a group has no labeled nodes"));
    }
    Ok(report)
}
