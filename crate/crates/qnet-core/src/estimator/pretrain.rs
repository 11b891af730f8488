use rand::Rng;
use rand_pcg::Pcg64Mcg;
use serde::{Deserialize, Serialize};

use super::model::{EstimatorConfig, EstimatorModel, ZeroOrderHold};
use super::train::{EpisodeRecord, EpisodeRecorder};
use crate::rng;
use crate::sim::{
    run_episode, Action, EpisodeConfig, NullSink, PolicyCtx, QueryPolicy, SourceParams,
};
use crate::Result;

/// Queries i.i.d. with a fixed probability each decision instant.
#[derive(Debug, Clone)]
pub struct BernoulliPolicy {
    pub p: f64,
    rng: Pcg64Mcg,
}

impl BernoulliPolicy {
    pub fn new(p: f64) -> Self {
        BernoulliPolicy {
            p,
            rng: rng::stream(0, rng::STREAM_POLICY),
        }
    }
}

impl QueryPolicy for BernoulliPolicy {
    fn reset(&mut self, seed: u64) {
        self.rng = rng::stream(seed, rng::STREAM_POLICY);
    }

    fn act(&mut self, _ctx: &PolicyCtx) -> Action {
        if self.rng.gen::<f64>() < self.p {
            Action::Query
        } else {
            Action::DontQuery
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub episodes: u32,
    pub episode_length: u64,
    /// Episodes trained in lockstep per window batch.
    pub batch: usize,
    /// Gradient passes over each collected batch. The learning rate is
    /// fixed; data reuse is how the step budget scales.
    #[serde(default = "default_passes")]
    pub passes: u32,
    pub seed: u64,
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub source: SourceParams,
}

fn default_passes() -> u32 {
    4
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            episodes: 320,
            episode_length: 512,
            batch: 8,
            passes: default_passes(),
            seed: 1,
            estimator: EstimatorConfig::default(),
            source: SourceParams::default(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct PretrainReport {
    /// One loss per gradient step.
    pub losses: Vec<f64>,
    /// Query rate observed across all pre-training episodes.
    pub measured_query_rate: f64,
    /// Mean q/2 target across episodes, for comparison with the above.
    pub mean_target_rate: f64,
    pub episodes_run: u32,
}

/// Collects one episode of (age, latest measurement, ground truth) under
/// Bernoulli(q/2) querying with q drawn uniformly from (0,1).
fn collect_episode(
    cfg: &PretrainConfig,
    episode_idx: u32,
) -> Result<(EpisodeRecord, f64, f64)> {
    let seed = rng::mix2(cfg.seed, episode_idx as u64);
    let mut q_rng = rng::stream3(cfg.seed, 8001, episode_idx as u64);
    let q: f64 = q_rng.gen::<f64>().max(1e-9);

    let mut ep_cfg = EpisodeConfig::new((0.05, 1.0), cfg.episode_length, seed);
    ep_cfg.source = cfg.source;
    ep_cfg.clock = cfg.estimator.clock;
    ep_cfg.warmup_slots = 0;

    let mut recorder = EpisodeRecorder::default();
    let mut policy = BernoulliPolicy::new(q / 2.0);
    // The recorded stream does not depend on the estimate, so the cheap
    // zero-order hold stands in during collection.
    let stats = run_episode(
        &ep_cfg,
        Some(q),
        &mut ZeroOrderHold::new(),
        &mut policy,
        &NullSink,
        &mut recorder,
    )?;
    Ok((recorder.record, stats.query_rate, q / 2.0))
}

/// Pre-training phase: only the estimator weights are updated. The querying
/// policy is Bernoulli(q/2) with q drawn uniformly per episode, which keeps
/// the simulated facility neither starved nor congested and produces
/// measurement streams an initial estimator can learn from.
pub fn pretrain(cfg: &PretrainConfig) -> Result<(EstimatorModel, PretrainReport)> {
    let mut model = EstimatorModel::new(cfg.estimator.clone(), rng::mix2(cfg.seed, 424242));
    let report = pretrain_into(cfg, &mut model)?;
    Ok((model, report))
}

/// Same as [`pretrain`] but refines an existing model in place.
pub fn pretrain_into(cfg: &PretrainConfig, model: &mut EstimatorModel) -> Result<PretrainReport> {
    let mut report = PretrainReport::default();
    let mut rate_acc = 0.0;
    let mut target_acc = 0.0;
    let batch = cfg.batch.max(1);
    let mut episode_idx = 0u32;
    while episode_idx < cfg.episodes {
        let take = batch.min((cfg.episodes - episode_idx) as usize);
        let mut records = Vec::with_capacity(take);
        for k in 0..take {
            let (rec, rate, target) = collect_episode(cfg, episode_idx + k as u32)?;
            rate_acc += rate;
            target_acc += target;
            records.push(rec);
        }
        let refs: Vec<&EpisodeRecord> = records.iter().collect();
        for _ in 0..cfg.passes.max(1) {
            let losses = model.train_on_records(&refs)?;
            report.losses.extend(losses);
        }
        episode_idx += take as u32;
    }
    report.episodes_run = episode_idx;
    report.measured_query_rate = rate_acc / episode_idx.max(1) as f64;
    report.mean_target_rate = target_acc / episode_idx.max(1) as f64;
    Ok(report)
}
