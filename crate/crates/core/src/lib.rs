//! Privacy-preserving variational graph autoencoder.
//!
//! A shared GCN feeds two Gaussian heads: a non-sensitive head whose
//! posterior means are published as node embeddings, and a sensitive head
//! trained to reconstruct a protected node attribute. An independence
//! penalty pushes the two latent distributions apart so the published
//! embeddings leak less about the attribute.

pub mod config;
pub mod error;
pub mod evaluation;
pub mod graph;
pub mod model;
pub mod numerics;
pub mod objectives;
pub mod training;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use graph::{Graph, LinkSplit, NodeAnnotations, SbmConfig};
pub use model::{ModelDims, PvgaeModel, VgaeModel};
pub use numerics::{RandomSource, Tensor};
pub use objectives::LossBreakdown;
pub use training::{
    export_embeddings, train_pvgae, train_vgae_baseline, Checkpoint, EmbeddingMatrix, TrainConfig, TrainFailure,
    TrainHistory, TrainedModel,
};
