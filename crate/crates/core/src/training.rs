//! Alternating optimization of the split model, the plain baseline trainer,
//! and embedding export.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeAnnotations};
use crate::model::{encode, gnn_forward, GraphEncoder, ModelDims, PvgaeModel, VgaeModel};
use crate::numerics::{AdamState, RandomSource, Tape, Tensor};
use crate::objectives::{loss_graph, loss_sensitive, loss_vgae, GraphInputs, LossBreakdown};

const GRAPH_NOISE_STREAM: u64 = 0x2001;
const PENALTY_NOISE_STREAM: u64 = 0x2002;
const SENSITIVE_NOISE_STREAM: u64 = 0x2003;

/// Optimization schedule and sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight of the independence penalty.
    pub beta: f64,
    pub epochs: usize,
    /// Sensitive-branch steps per outer epoch.
    pub sensitive_epochs: usize,
    pub lr_sensitive: f64,
    pub lr_graph: f64,
    pub latent_dim: usize,
    pub hidden_dim: usize,
    pub seed: u64,
    pub observed_ratio: f64,
    /// Emit a progress line every this many epochs (0 disables).
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            beta: 10.0,
            epochs: 500,
            sensitive_epochs: 1,
            lr_sensitive: 0.005,
            lr_graph: 0.005,
            latent_dim: 32,
            hidden_dim: 64,
            seed: 0,
            observed_ratio: 1.0,
            log_every: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.sensitive_epochs == 0 {
            return Err(Error::config("epochs and sensitive_epochs must be at least 1"));
        }
        if !(self.lr_sensitive > 0.0 && self.lr_graph > 0.0) {
            return Err(Error::config("learning rates must be positive"));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::config(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        if self.latent_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::config("latent and hidden dimensions must be at least 1"));
        }
        if !(self.observed_ratio > 0.0 && self.observed_ratio <= 1.0) {
            return Err(Error::config(format!(
                "observed_ratio must lie in (0, 1], got {}",
                self.observed_ratio
            )));
        }
        Ok(())
    }

    fn dims(&self, g: &Graph, sensitive_classes: usize) -> ModelDims {
        ModelDims {
            feature_dim: if g.feature_dim() == 0 { g.num_nodes() } else { g.feature_dim() },
            hidden_dim: self.hidden_dim,
            latent_dim: self.latent_dim,
            sensitive_classes,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub losses: LossBreakdown,
    /// Mean |ρ̂| between `Z_x` and `Z_s` across latent dimensions.
    pub mean_abs_correlation: f64,
    pub seconds: f64,
}

/// Per-epoch loss records of one run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("epoch,kl_x,recon_x,kl_s,recon_s,penalty,total_graph,total_sensitive\n");
        for r in &self.epochs {
            let l = &r.losses;
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.epoch,
                l.kl_x,
                l.recon_x,
                l.kl_s,
                l.recon_s,
                l.penalty,
                l.total_graph,
                l.total_sensitive
            )
            .expect("write to string");
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

fn diverged(epoch: usize, err: Error, history: &TrainHistory) -> Error {
    match err {
        Error::NonFinite { .. } => Error::Diverged {
            epoch,
            cause: err.to_string(),
            last_finite: history.last().map(|r| Box::new(r.losses.clone())),
        },
        other => other,
    }
}

fn check_finite(params: &[&mut Tensor]) -> Result<()> {
    if params.iter().all(|p| p.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { op: "adam_step" })
    }
}

/// A run that failed part-way keeps the epochs completed so far.
#[derive(Debug)]
pub struct TrainFailure {
    pub error: Error,
    pub history: TrainHistory,
}

impl From<TrainFailure> for Error {
    fn from(f: TrainFailure) -> Self {
        f.error
    }
}

/// Alternating training: per outer epoch, `sensitive_epochs` Adam steps on
/// the sensitive branch, then one Adam step on the graph branch.
///
/// `ann.observed_mask` selects the sensitive attributes visible to training.
pub fn train_pvgae(
    g: &Graph,
    ann: &NodeAnnotations,
    cfg: &TrainConfig,
    rng: &RandomSource,
) -> std::result::Result<(PvgaeModel, TrainHistory), TrainFailure> {
    let mut history = TrainHistory::default();
    let fail = |error, history: &TrainHistory| TrainFailure {
        error,
        history: history.clone(),
    };
    if let Err(e) = cfg.validate() {
        return Err(fail(e, &history));
    }
    if ann.len() != g.num_nodes() {
        return Err(fail(
            Error::Consistency(format!("{} annotations for {} nodes", ann.len(), g.num_nodes())),
            &history,
        ));
    }
    if ann.observed_count() == 0 {
        return Err(fail(Error::contract("observed mask is empty"), &history));
    }

    let inputs = GraphInputs::from_graph(g);
    let mut model = PvgaeModel::init(&cfg.dims(g, ann.num_sensitive_classes()), rng);
    let mut rng_x = rng.derive(GRAPH_NOISE_STREAM);
    let mut rng_pen = rng.derive(PENALTY_NOISE_STREAM);
    let mut rng_s = rng.derive(SENSITIVE_NOISE_STREAM);
    let mut adam_s = AdamState::default();
    let mut adam_g = AdamState::default();

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let mut step = || -> Result<(LossBreakdown, f64)> {
            let mut sens = LossBreakdown::default();
            for _ in 0..cfg.sensitive_epochs {
                let eval = loss_sensitive(&model, &inputs, &ann.sensitive, &ann.observed_mask, &mut rng_s)?;
                let grads = eval.gradients()?;
                let mut params = model.sensitive_params_mut();
                adam_s.step(&mut params, &grads, cfg.lr_sensitive)?;
                check_finite(&params)?;
                sens = eval.breakdown;
            }
            let eval = loss_graph(&model, &inputs, cfg.beta, &mut rng_x, &mut rng_pen)?;
            let grads = eval.gradients()?;
            let mut params = model.graph_params_mut();
            adam_g.step(&mut params, &grads, cfg.lr_graph)?;
            check_finite(&params)?;
            let corr = eval
                .penalty_stats
                .as_ref()
                .map(|s| s.correlation.iter().map(|r| r.abs()).sum::<f64>() / s.correlation.len() as f64)
                .unwrap_or(0.0);
            let losses = LossBreakdown {
                kl_s: sens.kl_s,
                recon_s: sens.recon_s,
                total_sensitive: sens.total_sensitive,
                ..eval.breakdown
            };
            Ok((losses, corr))
        };
        let (losses, corr) = match step() {
            Ok(v) => v,
            Err(e) => return Err(fail(diverged(epoch, e, &history), &history)),
        };
        if cfg.log_every > 0 && (epoch + 1) % cfg.log_every == 0 {
            log::info!(
                "epoch {:>4}  L_G {:.5}  recon_x {:.5}  kl_x {:.5}  penalty {:.5}  L_s {:.5}  |rho| {:.3}",
                epoch + 1,
                losses.total_graph,
                losses.recon_x,
                losses.kl_x,
                losses.penalty,
                losses.total_sensitive,
                corr
            );
        }
        history.epochs.push(EpochRecord {
            epoch,
            losses,
            mean_abs_correlation: corr,
            seconds: started.elapsed().as_secs_f64(),
        });
    }
    Ok((model, history))
}

/// Trains the unprotected single-encoder baseline on the negative ELBO.
pub fn train_vgae_baseline(
    g: &Graph,
    cfg: &TrainConfig,
    rng: &RandomSource,
) -> std::result::Result<(VgaeModel, TrainHistory), TrainFailure> {
    let mut history = TrainHistory::default();
    let fail = |error, history: &TrainHistory| TrainFailure {
        error,
        history: history.clone(),
    };
    if let Err(e) = cfg.validate() {
        return Err(fail(e, &history));
    }
    let inputs = GraphInputs::from_graph(g);
    let mut model = VgaeModel::init(&cfg.dims(g, 1), rng);
    let mut rng_x = rng.derive(GRAPH_NOISE_STREAM);
    let mut adam = AdamState::default();

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let mut step = || -> Result<LossBreakdown> {
            let eval = loss_vgae(&model, &inputs, &mut rng_x)?;
            let grads = eval.gradients()?;
            let mut params = model.params_mut();
            adam.step(&mut params, &grads, cfg.lr_graph)?;
            check_finite(&params)?;
            Ok(eval.breakdown)
        };
        let losses = match step() {
            Ok(v) => v,
            Err(e) => return Err(fail(diverged(epoch, e, &history), &history)),
        };
        if cfg.log_every > 0 && (epoch + 1) % cfg.log_every == 0 {
            log::info!(
                "epoch {:>4}  loss {:.5}  recon {:.5}  kl {:.5}",
                epoch + 1,
                losses.total_graph,
                losses.recon_x,
                losses.kl_x
            );
        }
        history.epochs.push(EpochRecord {
            epoch,
            losses,
            mean_abs_correlation: 0.0,
            seconds: started.elapsed().as_secs_f64(),
        });
    }
    Ok((model, history))
}

/// Published node embeddings: posterior means of the graph-branch encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    pub z: Tensor,
    pub seed: u64,
    pub config_hash: String,
}

impl EmbeddingMatrix {
    pub fn num_nodes(&self) -> usize {
        self.z.rows()
    }

    pub fn dim(&self) -> usize {
        self.z.cols()
    }

    /// Header `N d seed config_hash`, then one whitespace-separated row per node.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{} {} {} {}\n",
            self.num_nodes(),
            self.dim(),
            self.seed,
            self.config_hash
        );
        for i in 0..self.num_nodes() {
            let row: Vec<String> = self.z.row(i).iter().map(f64::to_string).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("embedding file is empty".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::Format(format!(
                "embedding header must be \"N d seed config_hash\", got {header:?}"
            )));
        }
        let num = |s: &str, what: &str| {
            s.parse::<u64>()
                .map_err(|_| Error::Format(format!("invalid {what} {s:?} in embedding header")))
        };
        let n = num(fields[0], "N")? as usize;
        let d = num(fields[1], "d")? as usize;
        let seed = num(fields[2], "seed")?;
        let mut data = Vec::with_capacity(n * d);
        let mut rows = 0;
        for (i, line) in lines.enumerate() {
            let vals = line
                .split_whitespace()
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| Error::Format(format!("row {}: invalid value {v:?}", i + 1)))
                })
                .collect::<Result<Vec<f64>>>()?;
            if vals.len() != d {
                return Err(Error::Format(format!(
                    "row {} has {} values but the header declares d = {d}",
                    i + 1,
                    vals.len()
                )));
            }
            data.extend(vals);
            rows += 1;
        }
        if rows != n {
            return Err(Error::Format(format!(
                "header declares {n} rows but the file has {rows}"
            )));
        }
        Ok(Self {
            z: Tensor::new(vec![n, d], data)?,
            seed,
            config_hash: fields[3].to_string(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

/// Posterior means `μ_x` of the graph-branch encoder on graph `g`.
pub fn export_embeddings<M: GraphEncoder>(
    model: &M,
    g: &Graph,
    seed: u64,
    config_hash: &str,
) -> Result<EmbeddingMatrix> {
    let mut tape = Tape::new();
    let adj = tape.constant(crate::graph::normalize_adjacency(g));
    let x = tape.constant(g.encoder_features());
    let gnn = model.gnn().bind(&mut tape, false);
    let head = model.graph_head().bind(&mut tape, false);
    let h = gnn_forward(&mut tape, adj, x, &gnn)?;
    let post = encode(&mut tape, h, &head)?;
    Ok(EmbeddingMatrix {
        z: tape.value(post.mean).clone(),
        seed,
        config_hash: config_hash.to_string(),
    })
}

pub const CHECKPOINT_FORMAT: &str = "pvgae-checkpoint/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TrainedModel {
    Pvgae(PvgaeModel),
    Vgae(VgaeModel),
}

impl TrainedModel {
    pub fn export(&self, g: &Graph, seed: u64, config_hash: &str) -> Result<EmbeddingMatrix> {
        match self {
            TrainedModel::Pvgae(m) => export_embeddings(m, g, seed, config_hash),
            TrainedModel::Vgae(m) => export_embeddings(m, g, seed, config_hash),
        }
    }
}

/// Parameters plus the resolved configuration that produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub model: TrainedModel,
}

impl Checkpoint {
    pub fn new(model: TrainedModel, config: serde_json::Value, config_hash: String) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            config_hash,
            config,
            model,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let body = serde_json::to_string(self).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(path, body).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Self = serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::Format(format!(
                "unsupported checkpoint format {:?}",
                ckpt.format
            )));
        }
        Ok(ckpt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_sbm, SbmConfig};

    fn small() -> (Graph, NodeAnnotations) {
        let cfg = SbmConfig {
            nodes: 40,
            p_in: 0.3,
            p_out: 0.05,
            feature_dim: 4,
            ..SbmConfig::default()
        };
        let (g, ann, _) = generate_sbm(&cfg, &mut RandomSource::new(1)).unwrap();
        (g, ann)
    }

    fn quick(beta: f64) -> TrainConfig {
        TrainConfig {
            beta,
            epochs: 20,
            latent_dim: 4,
            hidden_dim: 8,
            log_every: 0,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn history_has_one_record_per_epoch() {
        let (g, ann) = small();
        let (_, h) = train_pvgae(&g, &ann, &quick(1.0), &RandomSource::new(0)).unwrap();
        assert_eq!(h.len(), 20);
        assert!(h.epochs.iter().all(|r| r.losses.is_finite()));
        assert_eq!(h.to_csv().lines().count(), 21);
    }

    #[test]
    fn same_seed_bit_identical_parameters() {
        let (g, ann) = small();
        let (a, ha) = train_pvgae(&g, &ann, &quick(5.0), &RandomSource::new(3)).unwrap();
        let (b, hb) = train_pvgae(&g, &ann, &quick(5.0), &RandomSource::new(3)).unwrap();
        assert_eq!(a, b);
        let strip = |h: &TrainHistory| h.epochs.iter().map(|r| r.losses.clone()).collect::<Vec<_>>();
        assert_eq!(strip(&ha), strip(&hb));
    }

    #[test]
    fn alternation_touches_only_the_scheduled_group() {
        let (g, ann) = small();
        let one = TrainConfig {
            epochs: 1,
            ..quick(1.0)
        };
        let rng = RandomSource::new(2);
        let init = PvgaeModel::init(&one.dims(&g, ann.num_sensitive_classes()), &rng);
        let (trained, _) = train_pvgae(&g, &ann, &one, &rng).unwrap();
        assert_ne!(init.sensitive, trained.sensitive);
        assert_ne!(init.sensitive_decoder, trained.sensitive_decoder);
        assert_ne!(init.gnn, trained.gnn);
        assert_ne!(init.nonsensitive, trained.nonsensitive);
    }

    #[test]
    fn invalid_config_and_empty_mask() {
        let (g, mut ann) = small();
        let bad = TrainConfig {
            epochs: 0,
            ..quick(1.0)
        };
        assert!(matches!(
            train_pvgae(&g, &ann, &bad, &RandomSource::new(0)).map_err(|f| f.error),
            Err(Error::Config(_))
        ));
        ann.observed_mask = vec![false; ann.len()];
        assert!(matches!(
            train_pvgae(&g, &ann, &quick(1.0), &RandomSource::new(0)).map_err(|f| f.error),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn divergence_reports_epoch_and_keeps_history() {
        let (g, ann) = small();
        let wild = TrainConfig {
            lr_graph: 1e300,
            epochs: 10,
            ..quick(1.0)
        };
        let failure = train_pvgae(&g, &ann, &wild, &RandomSource::new(0)).unwrap_err();
        match failure.error {
            Error::Diverged { epoch, .. } => assert_eq!(epoch, failure.history.len()),
            other => panic!("expected divergence, got {other}"),
        }
    }

    #[test]
    fn export_is_deterministic_and_shaped() {
        let (g, ann) = small();
        let (m, _) = train_pvgae(&g, &ann, &quick(1.0), &RandomSource::new(0)).unwrap();
        let a = export_embeddings(&m, &g, 0, "abc").unwrap();
        let b = export_embeddings(&m, &g, 0, "abc").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.z.shape(), &[40, 4]);
    }

    #[test]
    fn zero_model_exports_zeros() {
        let (g, _) = small();
        let dims = ModelDims {
            feature_dim: 4,
            hidden_dim: 8,
            latent_dim: 32,
            sensitive_classes: 2,
        };
        let e = export_embeddings(&PvgaeModel::zeros(&dims), &g, 0, "x").unwrap();
        assert_eq!(e.z, Tensor::zeros(&[40, 32]));
    }

    #[test]
    fn embedding_text_roundtrip_and_header_contract() {
        let z = Tensor::from_rows(&[vec![0.1, -1.0 / 3.0], vec![1e-300, 2.5]]).unwrap();
        let e = EmbeddingMatrix {
            z,
            seed: 7,
            config_hash: "deadbeef".into(),
        };
        let text = e.to_text();
        assert!(text.starts_with("2 2 7 deadbeef\n"));
        assert_eq!(EmbeddingMatrix::parse(&text).unwrap(), e);
        let bad = text.replacen("2 2 7", "2 3 7", 1);
        assert!(matches!(EmbeddingMatrix::parse(&bad), Err(Error::Format(_))));
        let short = "3 2 7 deadbeef\n0 0\n0 0\n";
        assert!(matches!(EmbeddingMatrix::parse(short), Err(Error::Format(_))));
    }

    #[test]
    fn checkpoint_roundtrip() {
        let (g, ann) = small();
        let (m, _) = train_pvgae(&g, &ann, &quick(1.0), &RandomSource::new(0)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        let ck = Checkpoint::new(TrainedModel::Pvgae(m), serde_json::json!({"a": 1}), "h".into());
        ck.write(&path).unwrap();
        assert_eq!(Checkpoint::read(&path).unwrap(), ck);
    }
}
