//! Command-line frontend: synthetic data generation, training, embedding
//! export, evaluation, attacks and sweeps, all driven by one TOML config.

use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use pvgae_core::evaluation::{
    attack_inference, evaluate_prepared, prepare_data, run_sweep, summarize, synthesize, train_prepared,
    AttackerKind, EvalReport, ModelKind, PreparedData, SweepAxis,
};
use pvgae_core::graph::write_dataset;
use pvgae_core::{Checkpoint, EmbeddingMatrix, ExperimentConfig, RandomSource};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const EMBEDDING_FILE: &str = "embeddings.txt";
pub const HISTORY_FILE: &str = "history.csv";
pub const CONFIG_FILE: &str = "config.json";
pub const REPORT_FILE: &str = "report.csv";

const ATTACK_STREAM: u64 = 0x5001;

#[derive(Debug, Parser)]
#[command(name = "pvgae", version, about = "Privacy-preserving graph embeddings")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic SBM dataset (edges, features, annotations, provenance).
    GenSynth {
        /// Target directory; defaults to `<out>/synth-s<seed>`.
        #[arg(long)]
        dir: Option<PathBuf>,
    },
    /// Train a model and write checkpoint, embeddings, history and config.
    Train {
        #[arg(long)]
        model: Option<ModelKind>,
        #[arg(long)]
        beta: Option<f64>,
        /// Dataset directory; overrides the configured dataset.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Re-export embeddings from a checkpoint.
    Embed {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Defaults to the embedding file next to the checkpoint.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Evaluate an embedding file and append a row to a report.
    Eval {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Defaults to `<out>/report.csv`.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Label recorded in the report's axis column.
        #[arg(long, default_value = "beta")]
        axis: String,
        /// Value recorded in the report; defaults to the configured beta.
        #[arg(long)]
        value: Option<f64>,
    },
    /// Run one attribute-inference attacker against an embedding file.
    Attack {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "mlp")]
        attacker: AttackerKind,
        /// Defaults to `attack-<attacker>.json` next to the embeddings.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Train and evaluate over a grid of values and seeds.
    Sweep {
        #[arg(long)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        #[arg(long)]
        workers: Option<usize>,
        /// Defaults to `<out>/sweep-<axis>-<hash>.csv`.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
}

/// Reads the config file (if any) and applies the global overrides.
pub fn load_config(global: &GlobalArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &global.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            let mut cfg: ExperimentConfig =
                toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
            cfg.anchor_paths(path.parent().unwrap_or(Path::new(".")));
            cfg
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &global.out {
        cfg.output = out.clone();
    }
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli.global)?;
    match cli.command {
        Command::GenSynth { dir } => gen_synth(&cfg, dir).map(|_| ()),
        Command::Train { model, beta, data } => {
            if let Some(m) = model {
                cfg.model.kind = m;
            }
            if let Some(b) = beta {
                cfg.train.beta = b;
            }
            set_data(&mut cfg, data);
            train(&cfg).map(|_| ())
        }
        Command::Embed { checkpoint, output } => embed(&checkpoint, output).map(|_| ()),
        Command::Eval {
            embeddings,
            data,
            report,
            axis,
            value,
        } => {
            set_data(&mut cfg, data);
            eval(&cfg, &embeddings, report, &axis, value).map(|_| ())
        }
        Command::Attack {
            embeddings,
            data,
            attacker,
            output,
        } => {
            set_data(&mut cfg, data);
            attack(&cfg, &embeddings, attacker, output).map(|_| ())
        }
        Command::Sweep {
            axis,
            values,
            seeds,
            workers,
            summary,
        } => {
            if workers.is_some() {
                cfg.workers = workers;
            }
            sweep(&cfg, axis, &values, &seeds, summary).map(|_| ())
        }
    }
}

fn set_data(cfg: &mut ExperimentConfig, data: Option<PathBuf>) {
    if data.is_some() {
        cfg.dataset.path = data;
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let body = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

/// Writes the synthetic dataset for the configured seed.
pub fn gen_synth(cfg: &ExperimentConfig, dir: Option<PathBuf>) -> Result<PathBuf> {
    cfg.dataset.synthetic.validate()?;
    let dir = dir.unwrap_or_else(|| cfg.output.join(format!("synth-s{}", cfg.seed)));
    let (graph, ann, _) = synthesize(cfg, cfg.seed)?;
    let provenance = json!({
        "generator": "sbm",
        "seed": cfg.seed,
        "synthetic": cfg.dataset.synthetic,
    });
    write_dataset(&dir, &graph, &ann, &provenance)?;
    log::info!(
        "wrote {} nodes, {} edges to {}",
        graph.num_nodes(),
        graph.num_edges(),
        dir.display()
    );
    Ok(dir)
}

/// Trains into `cfg.run_dir()` and returns that directory. A diverged run
/// still leaves its partial history and config behind.
pub fn train(cfg: &ExperimentConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let data = prepare_data(cfg, cfg.seed)?;
    let dir = cfg.run_dir();
    create_dir(&dir)?;
    write_json(&dir.join(CONFIG_FILE), &cfg.resolved_json())?;
    let hash = cfg.config_hash();
    let (model, history) = match train_prepared(cfg, &data) {
        Ok(v) => v,
        Err(failure) => {
            failure.history.write_csv(&dir.join(HISTORY_FILE))?;
            bail!(
                "{} ({} epochs of history kept in {})",
                failure.error,
                failure.history.len(),
                dir.display()
            );
        }
    };
    history.write_csv(&dir.join(HISTORY_FILE))?;
    model
        .export(&data.split.train, cfg.seed, &hash)?
        .write(&dir.join(EMBEDDING_FILE))?;
    Checkpoint::new(model, cfg.resolved_json(), hash).write(&dir.join(CHECKPOINT_FILE))?;
    log::info!("{} run written to {}", cfg.model.kind, dir.display());
    Ok(dir)
}

/// Recomputes the embeddings stored alongside a checkpoint.
pub fn embed(checkpoint: &Path, output: Option<PathBuf>) -> Result<PathBuf> {
    let ckpt = Checkpoint::read(checkpoint)?;
    let cfg: ExperimentConfig =
        serde_json::from_value(ckpt.config.clone()).context("checkpoint holds an unreadable config")?;
    cfg.validate()?;
    let output = output.unwrap_or_else(|| checkpoint.with_file_name(EMBEDDING_FILE));
    let data = prepare_data(&cfg, cfg.seed)?;
    ckpt.model.export(&data.split.train, cfg.seed, &ckpt.config_hash)?.write(&output)?;
    Ok(output)
}

/// Dataset for an embedding: the split is drawn from the embedding's seed so
/// it matches the split the embedding was trained on.
fn data_for(cfg: &ExperimentConfig, emb: &EmbeddingMatrix) -> Result<PreparedData> {
    if emb.seed != cfg.seed {
        log::warn!(
            "embedding seed {} differs from configured seed {}; using the embedding's",
            emb.seed,
            cfg.seed
        );
    }
    Ok(prepare_data(cfg, emb.seed)?)
}

/// Appends one report row (and its provenance line) for an embedding file.
pub fn eval(
    cfg: &ExperimentConfig,
    embeddings: &Path,
    report: Option<PathBuf>,
    axis: &str,
    value: Option<f64>,
) -> Result<EvalReport> {
    cfg.validate()?;
    if axis.is_empty() || axis.contains(',') {
        bail!("axis label must be non-empty and free of commas");
    }
    let emb = EmbeddingMatrix::read(embeddings)?;
    let data = data_for(cfg, &emb)?;
    let metrics = evaluate_prepared(&emb, &data, cfg)?;
    let row = EvalReport {
        axis: axis.to_string(),
        value: value.unwrap_or(cfg.train.beta),
        seed: emb.seed,
        config_hash: emb.config_hash.clone(),
        metrics,
    };
    let report = report.unwrap_or_else(|| cfg.output.join(REPORT_FILE));
    if let Some(parent) = report.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let fresh = !report.exists();
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&report)
        .with_context(|| format!("opening {}", report.display()))?;
    if fresh {
        writeln!(file, "{}", EvalReport::csv_header())?;
    }
    writeln!(file, "{}", row.csv_row())?;

    let sidecar = provenance_path(&report);
    let mut side = OpenOptions::new().create(true).append(true).open(&sidecar)?;
    let record = json!({
        "axis": row.axis,
        "value": row.value,
        "seed": row.seed,
        "embedding": embeddings,
        "embedding_config_hash": emb.config_hash,
        "attacker_labels": "sampled independently of the training observed mask",
        "config": cfg.resolved_json(),
    });
    writeln!(side, "{}", serde_json::to_string(&record)?)?;
    Ok(row)
}

fn provenance_path(file: &Path) -> PathBuf {
    let mut name = file.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".provenance.jsonl");
    file.with_file_name(name)
}

/// Attack accuracy of one attacker kind, written as JSON.
pub fn attack(cfg: &ExperimentConfig, embeddings: &Path, kind: AttackerKind, output: Option<PathBuf>) -> Result<f64> {
    cfg.validate()?;
    let emb = EmbeddingMatrix::read(embeddings)?;
    let data = data_for(cfg, &emb)?;
    let mut attacker = cfg.eval.attacker.clone();
    attacker.kind = kind;
    let mut rng = RandomSource::new(emb.seed).derive(ATTACK_STREAM);
    let acc = attack_inference(&emb.z, &data.ann.sensitive, &attacker, kind, &mut rng)?;
    let output = output.unwrap_or_else(|| embeddings.with_file_name(format!("attack-{kind}.json")));
    write_json(
        &output,
        &json!({
            "attacker": kind.to_string(),
            "accuracy": acc,
            "seed": emb.seed,
            "embedding": embeddings,
            "config": cfg.resolved_json(),
        }),
    )?;
    log::info!("{kind} attack accuracy {acc:.4}");
    Ok(acc)
}

/// Runs the sweep, writes the summary CSV and fails if any cell failed.
pub fn sweep(
    cfg: &ExperimentConfig,
    axis: SweepAxis,
    values: &[f64],
    seeds: &[u64],
    summary: Option<PathBuf>,
) -> Result<PathBuf> {
    cfg.validate()?;
    let cells = run_sweep(cfg, axis, values, seeds)?;
    let summary = summary.unwrap_or_else(|| cfg.output.join(format!("sweep-{axis}-{}.csv", cfg.config_hash())));
    if let Some(parent) = summary.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    fs::write(&summary, summarize(axis, &cells)).with_context(|| format!("writing {}", summary.display()))?;

    let mut rows = EvalReport::csv_header() + "\n";
    for cell in &cells {
        if let Ok(r) = &cell.result {
            rows.push_str(&r.csv_row());
            rows.push('\n');
        }
    }
    let report = summary.with_extension("report.csv");
    fs::write(&report, rows).with_context(|| format!("writing {}", report.display()))?;
    write_json(
        &provenance_path(&summary).with_extension("json"),
        &json!({
            "axis": axis.to_string(),
            "values": values,
            "seeds": seeds,
            "config": cfg.resolved_json(),
            "failures": cells
                .iter()
                .filter_map(|c| c.result.as_ref().err().map(|e| json!({"value": c.value, "seed": c.seed, "error": e})))
                .collect::<Vec<_>>(),
        }),
    )?;

    let failed = cells.iter().filter(|c| c.result.is_err()).count();
    if failed > 0 {
        bail!("{failed} of {} sweep cells failed; see {}", cells.len(), summary.display());
    }
    log::info!("sweep summary written to {}", summary.display());
    Ok(summary)
}
