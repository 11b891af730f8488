//! The estimator network: maps the stream (previous estimate, age, latest
//! measurement) to the current state estimate.
//!
//! Architecture: an LSTM over bounded features (estimate-measurement
//! deltas, measured velocity, scaled age) followed by two ReLU layers, with
//! a linear head that also sees the raw measurement and a velocity-times-age
//! extrapolation feature. The head starts at the identity-plus-extrapolation
//! solution so early training refines a sane predictor instead of fighting
//! unbounded position coordinates; everything stays trainable.
//!
//! Training is supervised MSE against simulation ground truth over truncated
//! windows, closed loop: each step feeds the network's own previous output.
//! Gradients flow through the feedback. Actor/critic losses never touch
//! these weights.

mod model;
mod pretrain;
mod train;

pub use model::{EstimatorConfig, EstimatorModel, ZeroOrderHold};
pub use pretrain::{pretrain, pretrain_into, BernoulliPolicy, PretrainConfig, PretrainReport};
pub use train::{EpisodeRecord, EpisodeRecorder, SequenceState, TrainSequence};

use std::path::Path;

use qnet_nn::checkpoint::{self, Section};

use crate::{Error, Result};

/// Saves an estimator-only checkpoint (the pre-training artifact).
pub fn save_estimator(path: &Path, model: &EstimatorModel) -> Result<()> {
    let meta = vec![
        ("input_dim".to_string(), "9".to_string()),
        ("output_dim".to_string(), "4".to_string()),
        (
            "recurrent_width".to_string(),
            model.cfg.lstm_width.to_string(),
        ),
        ("config".to_string(), serde_json::to_string(&model.cfg)?),
    ];
    let section = Section {
        name: "estimator".into(),
        meta,
        params: model.params().clone(),
    };
    checkpoint::save(path, std::slice::from_ref(&section))?;
    Ok(())
}

/// Loads the estimator section out of any checkpoint file that carries one
/// (a pre-training artifact or a full model bundle).
pub fn load_estimator(path: &Path) -> Result<EstimatorModel> {
    let section = checkpoint::load_section(path, "estimator")?;
    let cfg: EstimatorConfig = serde_json::from_str(
        section
            .meta_value("config")
            .ok_or_else(|| Error::Config("estimator section missing config meta".into()))?,
    )?;
    let mut model = EstimatorModel::new(cfg, 0);
    if model.params().tensor_count() != section.params.tensor_count() {
        return Err(Error::Config("estimator tensor layout mismatch".into()));
    }
    *model.params_mut() = section.params;
    Ok(model)
}
