use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate, EvalReport, Metrics};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::graph::{generate_sbm, mask_sensitive, split_links, split_nodes, DatasetFiles, Graph, LinkSplit, NodeAnnotations};
use crate::numerics::RandomSource;
use crate::training::{train_pvgae, train_vgae_baseline, EmbeddingMatrix, TrainFailure, TrainHistory, TrainedModel};

const DATA_STREAM: u64 = 0x3001;
const LINK_SPLIT_STREAM: u64 = 0x3002;
const NODE_SPLIT_STREAM: u64 = 0x3003;
const MASK_STREAM: u64 = 0x3004;
const EVAL_STREAM: u64 = 0x3005;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Pvgae,
    Vgae,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Pvgae => "pvgae",
            ModelKind::Vgae => "vgae",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pvgae" => Ok(ModelKind::Pvgae),
            "vgae" => Ok(ModelKind::Vgae),
            other => Err(Error::config(format!("unknown model {other:?}"))),
        }
    }
}

/// Graph, held-out links and annotated masks for one seed.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub graph: Graph,
    pub split: LinkSplit,
    pub ann: NodeAnnotations,
}

/// The synthetic graph seeded by `seed`, as written by the generator command.
pub fn synthesize(cfg: &ExperimentConfig, seed: u64) -> Result<(Graph, NodeAnnotations, Vec<usize>)> {
    generate_sbm(&cfg.dataset.synthetic, &mut RandomSource::new(seed).derive(DATA_STREAM))
}

/// Loads or generates the dataset and draws the link split, the node
/// split and the observed-attribute mask from `seed`.
pub fn prepare_data(cfg: &ExperimentConfig, seed: u64) -> Result<PreparedData> {
    let (graph, ann) = match &cfg.dataset.path {
        Some(dir) => DatasetFiles::in_dir(dir).load()?,
        None => {
            let (g, a, _) = synthesize(cfg, seed)?;
            (g, a)
        }
    };
    let rng = RandomSource::new(seed);
    let split = split_links(&graph, cfg.eval.link_test_fraction, &mut rng.derive(LINK_SPLIT_STREAM))?;
    let ann = split_nodes(&ann, cfg.eval.node_test_fraction, &mut rng.derive(NODE_SPLIT_STREAM))?;
    let ann = mask_sensitive(&ann, cfg.train.observed_ratio, &mut rng.derive(MASK_STREAM))?;
    Ok(PreparedData { graph, split, ann })
}

pub struct RunOutcome {
    pub data: PreparedData,
    pub model: TrainedModel,
    pub history: TrainHistory,
    pub embedding: EmbeddingMatrix,
}

impl RunOutcome {
    pub fn evaluate(&self, cfg: &ExperimentConfig) -> Result<Metrics> {
        evaluate_prepared(&self.embedding, &self.data, cfg)
    }
}

/// Metrics of an embedding over prepared data, with the evaluation
/// randomness drawn from the embedding's seed.
pub fn evaluate_prepared(emb: &EmbeddingMatrix, data: &PreparedData, cfg: &ExperimentConfig) -> Result<Metrics> {
    let rng = RandomSource::new(emb.seed).derive(EVAL_STREAM);
    evaluate(&emb.z, &data.split, &data.ann, &cfg.eval, &rng)
}

/// Trains the configured model on the training graph of `data`.
pub fn train_prepared(
    cfg: &ExperimentConfig,
    data: &PreparedData,
) -> std::result::Result<(TrainedModel, TrainHistory), TrainFailure> {
    let tcfg = cfg.train_config();
    let rng = RandomSource::new(cfg.seed);
    match cfg.model.kind {
        ModelKind::Pvgae => {
            train_pvgae(&data.split.train, &data.ann, &tcfg, &rng).map(|(m, h)| (TrainedModel::Pvgae(m), h))
        }
        ModelKind::Vgae => {
            train_vgae_baseline(&data.split.train, &tcfg, &rng).map(|(m, h)| (TrainedModel::Vgae(m), h))
        }
    }
}

/// Prepares data, trains on the training graph and exports embeddings.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let data = prepare_data(cfg, cfg.seed)?;
    let (model, history) = train_prepared(cfg, &data)?;
    let embedding = model.export(&data.split.train, cfg.seed, &cfg.config_hash())?;
    Ok(RunOutcome {
        data,
        model,
        history,
        embedding,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Beta,
    Dim,
    Ratio,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Beta => "beta",
            SweepAxis::Dim => "dim",
            SweepAxis::Ratio => "ratio",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "beta" => Ok(SweepAxis::Beta),
            "dim" => Ok(SweepAxis::Dim),
            "ratio" => Ok(SweepAxis::Ratio),
            other => Err(Error::config(format!(
                "unknown sweep axis {other:?}; expected beta, dim or ratio"
            ))),
        }
    }
}

impl SweepAxis {
    pub fn apply(self, base: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut cfg = base.clone();
        match self {
            SweepAxis::Beta => cfg.train.beta = value,
            SweepAxis::Ratio => cfg.train.observed_ratio = value,
            SweepAxis::Dim => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(Error::config(format!("dimension must be a positive integer, got {value}")));
                }
                cfg.model.dim = value as usize;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One (value, seed) cell of a sweep.
#[derive(Clone, Debug)]
pub struct SweepCell {
    pub value: f64,
    pub seed: u64,
    /// The failure message when the run aborted.
    pub result: std::result::Result<EvalReport, String>,
}

fn run_cell(cfg: &ExperimentConfig, axis: SweepAxis, value: f64) -> Result<EvalReport> {
    let outcome = run_experiment(cfg)?;
    Ok(EvalReport {
        axis: axis.to_string(),
        value,
        seed: cfg.seed,
        config_hash: cfg.config_hash(),
        metrics: outcome.evaluate(cfg)?,
    })
}

/// Trains and evaluates the split model for every (value, seed) pair.
///
/// Cells run concurrently on `base.workers` threads and are returned in
/// value-major order. A failing cell is recorded and the sweep continues;
/// configuration errors are reported before anything runs.
pub fn run_sweep(
    base: &ExperimentConfig,
    axis: SweepAxis,
    values: &[f64],
    seeds: &[u64],
) -> Result<Vec<SweepCell>> {
    if values.is_empty() || seeds.is_empty() {
        return Err(Error::config("a sweep needs at least one value and one seed"));
    }
    let mut jobs = Vec::with_capacity(values.len() * seeds.len());
    for &value in values {
        let cfg = axis.apply(base, value)?;
        for &seed in seeds {
            jobs.push((value, ExperimentConfig { seed, ..cfg.clone() }));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(base.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::config(format!("cannot start sweep workers: {e}")))?;
    let cells = pool.install(|| {
        jobs.par_iter()
            .map(|(value, cfg)| {
                let result = run_cell(cfg, axis, *value).map_err(|e| e.to_string());
                if let Err(msg) = &result {
                    log::warn!("{axis}={value} seed={} failed: {msg}", cfg.seed);
                }
                SweepCell {
                    value: *value,
                    seed: cfg.seed,
                    result,
                }
            })
            .collect()
    });
    Ok(cells)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// CSV with one row per (value, metric): per-seed columns, then mean and
/// sample standard deviation over the successful seeds. Failed cells read
/// `failed`; metrics that do not apply are left empty.
pub fn summarize(axis: SweepAxis, cells: &[SweepCell]) -> String {
    let mut seeds: Vec<u64> = cells.iter().map(|c| c.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let mut values: Vec<f64> = Vec::new();
    for c in cells {
        if !values.contains(&c.value) {
            values.push(c.value);
        }
    }
    values.sort_by(f64::total_cmp);

    let mut out = String::from("axis,value,metric");
    for s in &seeds {
        write!(out, ",seed_{s}").unwrap();
    }
    out.push_str(",mean,std\n");

    let metric_names: Vec<&str> = super::REPORT_FIELDS[3..].to_vec();
    for &value in &values {
        let row_cells: Vec<Option<&SweepCell>> = seeds
            .iter()
            .map(|&s| cells.iter().find(|c| c.value == value && c.seed == s))
            .collect();
        for (k, name) in metric_names.iter().enumerate() {
            write!(out, "{axis},{value},{name}").unwrap();
            let mut ok = Vec::new();
            for cell in &row_cells {
                let field = match cell.map(|c| &c.result) {
                    None => String::new(),
                    Some(Err(_)) => "failed".to_string(),
                    Some(Ok(r)) => match r.named_metrics()[k].1 {
                        Some(v) => {
                            ok.push(v);
                            v.to_string()
                        }
                        None => String::new(),
                    },
                };
                write!(out, ",{field}").unwrap();
            }
            let (mean, std) = mean_std(&ok);
            if ok.is_empty() {
                out.push_str(",,\n");
            } else {
                writeln!(out, ",{mean},{std}").unwrap();
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.dataset.synthetic.nodes = 60;
        c.dataset.synthetic.p_in = 0.2;
        c.dataset.synthetic.p_out = 0.02;
        c.model.dim = 4;
        c.model.hidden = 8;
        c.train.epochs = 10;
        c.train.log_every = 0;
        c.eval.attacker.epochs = 20;
        c.eval.classifier.epochs = 20;
        c
    }

    #[test]
    fn axis_parsing_and_application() {
        assert_eq!("dim".parse::<SweepAxis>().unwrap(), SweepAxis::Dim);
        assert!("width".parse::<SweepAxis>().is_err());
        let c = SweepAxis::Dim.apply(&tiny(), 16.0).unwrap();
        assert_eq!(c.model.dim, 16);
        assert!(SweepAxis::Dim.apply(&tiny(), 2.5).is_err());
        assert!(SweepAxis::Ratio.apply(&tiny(), 1.5).is_err());
        assert_eq!(SweepAxis::Beta.apply(&tiny(), 50.0).unwrap().train.beta, 50.0);
    }

    #[test]
    fn single_cell_matches_a_direct_run() {
        let base = tiny();
        let cells = run_sweep(&base, SweepAxis::Beta, &[2.0], &[3]).unwrap();
        assert_eq!(cells.len(), 1);
        let report = cells[0].result.as_ref().unwrap();
        let cfg = ExperimentConfig {
            seed: 3,
            ..SweepAxis::Beta.apply(&base, 2.0).unwrap()
        };
        let direct = run_experiment(&cfg).unwrap();
        assert_eq!(report.metrics, direct.evaluate(&cfg).unwrap());
    }

    #[test]
    fn cells_come_back_in_value_major_order() {
        let cells = run_sweep(&tiny(), SweepAxis::Beta, &[1.0, 0.5], &[0, 1]).unwrap();
        let keys: Vec<(f64, u64)> = cells.iter().map(|c| (c.value, c.seed)).collect();
        assert_eq!(keys, vec![(1.0, 0), (1.0, 1), (0.5, 0), (0.5, 1)]);
        let csv = summarize(SweepAxis::Beta, &cells);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "axis,value,metric,seed_0,seed_1,mean,std");
        assert!(lines.next().unwrap().starts_with("beta,0.5,link_auc,"));
        assert_eq!(csv.lines().count(), 1 + 2 * 8);
    }

    #[test]
    fn failed_cells_are_flagged_not_fatal() {
        let mut base = tiny();
        // Too few edges to hold out links.
        base.dataset.synthetic.p_in = 0.0;
        base.dataset.synthetic.p_out = 0.0;
        let cells = run_sweep(&base, SweepAxis::Beta, &[1.0], &[0]).unwrap();
        assert!(cells[0].result.is_err());
        assert!(summarize(SweepAxis::Beta, &cells).contains("failed"));
        assert!(run_sweep(&base, SweepAxis::Beta, &[], &[0]).is_err());
    }
}
