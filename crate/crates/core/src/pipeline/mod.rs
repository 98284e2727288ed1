//! Training loop, total loss, reconstruction, evaluation and checkpoints.

mod checkpoint;
mod config;
mod eval;
mod trainer;

pub use checkpoint::{hex, AdamSnapshot, Checkpoint, FORMAT_VERSION, MAGIC};
pub use config::{Mode, TrainConfig};
pub use eval::{
    evaluate, sphere_chamfer_l1_mesh, sphere_chamfer_l1_sphere, GroundTruth, MetricsReport, Sphere,
    DEFAULT_EVAL_SAMPLES,
};
pub use trainer::{
    denormalize, iteration_rng, reconstruct_field, total_loss, LossRecord, Model, Trainer,
    FALLBACK_WINDOW,
};

use crate::error::Result;
use crate::geometry::{PointCloud, TriangleMesh};

/// Trains on `cloud` for `config.iterations` steps. On a non-finite loss or
/// gradient the error is returned together with the last finite state.
pub fn train(
    cloud: &PointCloud,
    config: TrainConfig,
) -> std::result::Result<Trainer, (crate::Error, Option<Box<Checkpoint>>)> {
    let mut trainer = Trainer::new(cloud, config).map_err(|e| (e, None))?;
    match trainer.train() {
        Ok(_) => Ok(trainer),
        Err(e) => Err((e, Some(Box::new(trainer.checkpoint())))),
    }
}

/// Final mesh of a checkpoint, in the input's coordinates.
pub fn reconstruct(ckpt: &Checkpoint) -> Result<TriangleMesh> {
    Trainer::from_checkpoint(ckpt)?.reconstruct()
}
