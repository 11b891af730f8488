//! Range-model training driver: domain-randomized episodes interleaving
//! rollout, learner updates and estimator sequence updates.

use std::cell::RefCell;
use std::path::Path;
use std::rc::Rc;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use qnet_nn::checkpoint::{self, Section};

use super::learner::SacLearner;
use super::nstep::{NStepAssembler, SharedBuffer};
use super::obs::ObsAssembly;
use super::{RangeId, ReplayBuffer, SacHyper};
use crate::estimator::{EpisodeRecorder, EstimatorConfig, EstimatorModel};
use crate::policy::SingleModelAgent;
use crate::rng;
use crate::sim::{
    run_episode, Action, EpisodeConfig, NullSink, PolicyCtx, QueryPolicy, SlotClock, SlotHook,
    SlotRecord, SourceParams,
};
use crate::{Error, Result};

/// Training configuration. The defaults are the desk-scale profile: small
/// actor/critic widths and a gradient step every couple of slots keep a full
/// three-range training run inside a CPU lunch break. The reference profile
/// (batch 256, one step per slot, widths 256) is selectable through these
/// same fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub episodes: u32,
    pub episode_length: u64,
    pub seed: u64,
    /// Actor/critic hidden width.
    pub hidden: usize,
    pub batch_size: usize,
    /// One learner gradient step per this many environment slots.
    pub update_every: u64,
    /// Minimum buffered transitions before updates start.
    pub min_buffer: usize,
    pub buffer_capacity: usize,
    /// Episodes between evaluation checkpoints.
    pub eval_every: u32,
    pub eval_episodes: u32,
    #[serde(default)]
    pub source: SourceParams,
    #[serde(default)]
    pub clock: SlotClock,
    /// Wall-clock budget in seconds; on exhaustion training stops early and
    /// returns the best checkpoint so far with a warning record.
    #[serde(default)]
    pub budget_secs: Option<u64>,
    /// Gain of the centered affine reward transform the learner trains on.
    /// Raw rewards sit within 1e-4 of the ceiling at this source's error
    /// scale; amplification makes the differences visible to the critic
    /// without changing which policies are optimal.
    #[serde(default = "default_reward_gain")]
    pub reward_gain: f64,
    /// Floor of the transformed reward; runaway-staleness slots saturate
    /// here instead of stretching the critic's target range by orders of
    /// magnitude.
    #[serde(default = "default_reward_floor")]
    pub reward_floor: f64,
    /// Return the best periodically-evaluated checkpoint instead of the
    /// final one (the policy keeps exploring to the last episode; the final
    /// snapshot is not the best one by construction).
    #[serde(default)]
    pub keep_best: bool,
}

fn default_reward_gain() -> f64 {
    1600.0
}

fn default_reward_floor() -> f64 {
    -50.0
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            episodes: 2000,
            episode_length: 2000,
            seed: 1,
            hidden: 32,
            batch_size: 32,
            update_every: 2,
            min_buffer: 2000,
            buffer_capacity: ReplayBuffer::DEFAULT_CAPACITY,
            eval_every: 100,
            eval_episodes: 4,
            source: SourceParams::default(),
            clock: SlotClock::default(),
            budget_secs: None,
            reward_gain: default_reward_gain(),
            reward_floor: default_reward_floor(),
            keep_best: false,
        }
    }
}

/// Everything a deployed model needs: the estimator, the actor/critic
/// learner (critic drives deployment), the observation assembly and the
/// hyper block it was trained with.
pub struct ModelBundle {
    pub range: RangeId,
    pub hyper: SacHyper,
    pub assembly: ObsAssembly,
    pub hidden: usize,
    pub seed: u64,
    pub estimator: EstimatorModel,
    pub learner: SacLearner,
}

impl ModelBundle {
    /// Byte image of all parameter tensors; equal bytes mean equal models.
    pub fn checkpoint_bytes(&self) -> Vec<u8> {
        let mut out = self.estimator.params().byte_image();
        out.extend(self.learner.actor_params().byte_image());
        out.extend(self.learner.critic_params().byte_image());
        out.extend(self.learner.target_params().byte_image());
        out.extend(self.learner.temperature().params().byte_image());
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let est_cfg = &self.estimator.cfg;
        let manifest_meta = vec![
            ("range".to_string(), self.range.to_string()),
            ("assembly".to_string(), self.assembly.as_str().to_string()),
            ("hidden".to_string(), self.hidden.to_string()),
            ("seed".to_string(), self.seed.to_string()),
            ("hyper".to_string(), serde_json::to_string(&self.hyper)?),
        ];
        let estimator_meta = vec![
            ("input_dim".to_string(), "9".to_string()),
            ("output_dim".to_string(), "4".to_string()),
            ("recurrent_width".to_string(), est_cfg.lstm_width.to_string()),
            ("config".to_string(), serde_json::to_string(est_cfg)?),
        ];
        let sections = vec![
            Section {
                name: "manifest".into(),
                meta: manifest_meta,
                params: qnet_nn::ParameterSet::new(),
            },
            Section {
                name: "estimator".into(),
                meta: estimator_meta,
                params: self.estimator.params().clone(),
            },
            Section {
                name: "actor".into(),
                meta: vec![],
                params: self.learner.actor_params().clone(),
            },
            Section {
                name: "critic".into(),
                meta: vec![],
                params: self.learner.critic_params().clone(),
            },
            Section {
                name: "critic_target".into(),
                meta: vec![],
                params: self.learner.target_params().clone(),
            },
            Section {
                name: "temperature".into(),
                meta: vec![],
                params: self.learner.temperature().params().clone(),
            },
        ];
        checkpoint::save(path, &sections)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ModelBundle> {
        let sections = checkpoint::load(path)?;
        let find = |name: &str| -> Result<&Section> {
            sections
                .iter()
                .find(|s| s.name == name)
                .ok_or_else(|| Error::Config(format!("checkpoint missing section '{name}'")))
        };
        let manifest = find("manifest")?;
        let meta = |key: &str| -> Result<&str> {
            manifest
                .meta_value(key)
                .ok_or_else(|| Error::Config(format!("checkpoint missing meta '{key}'")))
        };
        let range = RangeId::parse(meta("range")?)
            .ok_or_else(|| Error::Config("bad range in checkpoint".into()))?;
        let assembly = ObsAssembly::parse(meta("assembly")?)
            .ok_or_else(|| Error::Config("bad assembly in checkpoint".into()))?;
        let hidden: usize = meta("hidden")?
            .parse()
            .map_err(|_| Error::Config("bad hidden width".into()))?;
        let seed: u64 = meta("seed")?
            .parse()
            .map_err(|_| Error::Config("bad seed".into()))?;
        let hyper: SacHyper = serde_json::from_str(meta("hyper")?)?;

        let est_section = find("estimator")?;
        let est_cfg: EstimatorConfig = serde_json::from_str(
            est_section
                .meta_value("config")
                .ok_or_else(|| Error::Config("estimator section missing config".into()))?,
        )?;
        let mut estimator = EstimatorModel::new(est_cfg, 0);
        if estimator.params().tensor_count() != est_section.params.tensor_count() {
            return Err(Error::Config("estimator layout mismatch".into()));
        }
        *estimator.params_mut() = est_section.params.clone();

        let learner = SacLearner::from_params(
            hyper.clone(),
            assembly.dim(),
            hidden,
            seed,
            find("actor")?.params.clone(),
            find("critic")?.params.clone(),
            find("critic_target")?.params.clone(),
            find("temperature")?.params.clone(),
        );
        Ok(ModelBundle {
            range,
            hyper,
            assembly,
            hidden,
            seed,
            estimator,
            learner,
        })
    }
}

/// Per-episode training curve row.
#[derive(Debug, Clone, Serialize)]
pub struct EpisodeTrainStat {
    pub episode: u32,
    pub q: f64,
    pub avg_reward: f64,
    pub query_rate: f64,
    pub avg_age_slots: f64,
    pub avg_err: f64,
    pub alpha: f64,
    pub entropy: f64,
    pub critic_loss: f64,
    pub actor_loss: f64,
}

impl EpisodeTrainStat {
    pub const CSV_HEADER: &'static str =
        "episode,q,avg_reward,query_rate,avg_age_slots,avg_err,alpha,entropy,critic_loss,actor_loss";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.episode,
            self.q,
            self.avg_reward,
            self.query_rate,
            self.avg_age_slots,
            self.avg_err,
            self.alpha,
            self.entropy,
            self.critic_loss,
            self.actor_loss
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalStat {
    pub episode: u32,
    pub q: f64,
    pub avg_err: f64,
    pub avg_age_slots: f64,
    pub query_rate: f64,
}

pub struct TrainOutput {
    pub bundle: ModelBundle,
    pub curve: Vec<EpisodeTrainStat>,
    pub evals: Vec<EvalStat>,
    /// Set when the wall-clock budget ran out before the episode budget.
    pub warning: Option<String>,
}

/// Samples actions from the live actor.
struct ActorPolicy {
    learner: Rc<RefCell<SacLearner>>,
    assembly: ObsAssembly,
}

impl QueryPolicy for ActorPolicy {
    fn reset(&mut self, _seed: u64) {
        // The learner's action stream is part of training state and runs
        // across episodes.
    }

    fn act(&mut self, ctx: &PolicyCtx) -> Action {
        let feats = self
            .assembly
            .features(ctx.obs, ctx.backlog, ctx.interarrival_slots);
        self.learner.borrow_mut().sample_action(&feats)
    }
}

/// Interleaves learner updates with the rollout and records the estimator
/// training stream.
struct TrainHook {
    learner: Rc<RefCell<SacLearner>>,
    buffer: SharedBuffer,
    recorder: EpisodeRecorder,
    update_every: u64,
    min_buffer: usize,
    slot_counter: u64,
    last_stats: Option<super::learner::UpdateStats>,
    update_error: Option<Error>,
}

impl SlotHook for TrainHook {
    fn on_slot(&mut self, rec: &SlotRecord) {
        self.recorder.on_slot(rec);
        self.slot_counter += 1;
        if self.update_error.is_some() || self.slot_counter % self.update_every != 0 {
            return;
        }
        let ready = { self.buffer.lock().unwrap().len() >= self.min_buffer };
        if !ready {
            return;
        }
        let mut learner = self.learner.borrow_mut();
        let buf = self.buffer.lock().unwrap();
        match learner.update_from_buffer(&buf) {
            Some(Ok(stats)) => self.last_stats = Some(stats),
            Some(Err(e)) => self.update_error = Some(e),
            None => {}
        }
    }
}

fn episode_cfg(
    cfg: &TrainConfig,
    hyper: &SacHyper,
    episode_seed: u64,
) -> EpisodeConfig {
    let mut c = EpisodeConfig::new(hyper.q_range, cfg.episode_length, episode_seed);
    c.gamma = hyper.gamma;
    c.source = cfg.source;
    c.clock = cfg.clock;
    c.warmup_slots = default_warmup_for(cfg.episode_length);
    c
}

fn default_warmup_for(len: u64) -> u64 {
    if len > 200 {
        100
    } else {
        len / 4
    }
}

/// Evaluates a snapshot of the current model greedily (critic argmax) at a
/// fixed q, averaged over `episodes` seeds.
pub fn evaluate_greedy(
    bundle: &ModelBundle,
    cfg: &TrainConfig,
    q: f64,
    episodes: u32,
    seed_base: u64,
) -> Result<EvalStat> {
    let mut err_acc = 0.0;
    let mut age_acc = 0.0;
    let mut rate_acc = 0.0;
    for k in 0..episodes {
        let fork = ModelBundle {
            range: bundle.range,
            hyper: bundle.hyper.clone(),
            assembly: bundle.assembly,
            hidden: bundle.hidden,
            seed: bundle.seed,
            estimator: bundle.estimator.fork(),
            learner: SacLearner::from_params(
                bundle.hyper.clone(),
                bundle.assembly.dim(),
                bundle.hidden,
                bundle.seed,
                bundle.learner.actor_params().clone(),
                bundle.learner.critic_params().clone(),
                bundle.learner.target_params().clone(),
                bundle.learner.temperature().params().clone(),
            ),
        };
        let agent = SingleModelAgent::new(fork);
        let mut est_handle = agent.estimator_handle();
        let mut policy = agent;
        let mut ep = episode_cfg(cfg, &bundle.hyper, rng::mix2(seed_base, k as u64));
        ep.q_range = bundle.hyper.q_range;
        let stats = run_episode(&ep, Some(q), &mut est_handle, &mut policy, &NullSink, &mut ())?;
        err_acc += stats.avg_err;
        age_acc += stats.avg_age_slots;
        rate_acc += stats.query_rate;
    }
    let n = episodes.max(1) as f64;
    Ok(EvalStat {
        episode: 0,
        q,
        avg_err: err_acc / n,
        avg_age_slots: age_acc / n,
        query_rate: rate_acc / n,
    })
}

/// Trains one range model. `pretrained` seeds the estimator weights; only a
/// pre-trained estimator gives the actor/critic a learnable signal from the
/// start.
pub fn train_qnet(
    range: RangeId,
    cfg: &TrainConfig,
    pretrained: &EstimatorModel,
) -> Result<TrainOutput> {
    train_qnet_with(range, cfg, pretrained, ObsAssembly::Standard, |_| {})
}

/// Full-control variant: choose the observation assembly and observe each
/// episode's curve row as it lands (progress reporting).
pub fn train_qnet_with(
    range: RangeId,
    cfg: &TrainConfig,
    pretrained: &EstimatorModel,
    assembly: ObsAssembly,
    mut on_episode: impl FnMut(&EpisodeTrainStat),
) -> Result<TrainOutput> {
    let hyper = SacHyper::for_range(range);
    let start = Instant::now();
    let budget = cfg.budget_secs.map(Duration::from_secs);

    let estimator = Rc::new(RefCell::new(pretrained.fork()));
    let learner = Rc::new(RefCell::new(SacLearner::new(
        {
            let mut h = hyper.clone();
            h.batch_size = cfg.batch_size;
            h
        },
        assembly.dim(),
        cfg.hidden,
        rng::mix2(cfg.seed, range as u64),
    )));
    let buffer: SharedBuffer = Arc::new(Mutex::new(ReplayBuffer::new(cfg.buffer_capacity)));

    let mut curve = Vec::with_capacity(cfg.episodes as usize);
    let mut evals = Vec::new();
    let mut warning = None;
    let mut best: Option<(f64, ModelBundle)> = None;

    let snapshot = |estimator: &EstimatorModel, learner: &SacLearner| ModelBundle {
        range,
        hyper: learner.hyper.clone(),
        assembly,
        hidden: cfg.hidden,
        seed: cfg.seed,
        estimator: estimator.fork(),
        learner: SacLearner::from_params(
            learner.hyper.clone(),
            assembly.dim(),
            cfg.hidden,
            cfg.seed,
            learner.actor_params().clone(),
            learner.critic_params().clone(),
            learner.target_params().clone(),
            learner.temperature().params().clone(),
        ),
    };

    for episode in 0..cfg.episodes {
        if let Some(b) = budget {
            if start.elapsed() > b {
                warning = Some(format!(
                    "budget of {}s exhausted after {episode} of {} episodes; returning best checkpoint so far",
                    b.as_secs(),
                    cfg.episodes
                ));
                break;
            }
        }
        let episode_seed = rng::mix2(rng::mix2(cfg.seed, range as u64), episode as u64);
        let ep_cfg = episode_cfg(cfg, &hyper, episode_seed);

        let sink = NStepAssembler::with_transform(
            hyper.n,
            hyper.gamma,
            assembly,
            super::RewardTransform::centered(cfg.reward_gain, cfg.reward_floor),
            buffer.clone(),
        );
        let mut hook = TrainHook {
            learner: learner.clone(),
            buffer: buffer.clone(),
            recorder: EpisodeRecorder::default(),
            update_every: cfg.update_every,
            min_buffer: cfg.min_buffer,
            slot_counter: 0,
            last_stats: None,
            update_error: None,
        };
        let mut policy = ActorPolicy {
            learner: learner.clone(),
            assembly,
        };
        let stats = {
            let mut est = EstimatorAdapter(estimator.clone());
            run_episode(&ep_cfg, None, &mut est, &mut policy, &sink, &mut hook)?
        };
        if let Some(e) = hook.update_error.take() {
            return Err(e);
        }

        // Estimator refinement from the episode just recorded: window count
        // tracks episode length, i.e. one sequence update per bptt window of
        // environment slots.
        {
            let mut est = estimator.borrow_mut();
            est.train_on_records(&[&hook.recorder.record])?;
        }

        let (alpha, entropy, critic_loss, actor_loss) = match hook.last_stats {
            Some(s) => (s.alpha, s.mean_entropy, s.critic_loss, s.actor_loss),
            None => (learner.borrow().alpha(), f64::NAN, f64::NAN, f64::NAN),
        };
        let row = EpisodeTrainStat {
            episode,
            q: stats.q,
            avg_reward: stats.avg_reward,
            query_rate: stats.query_rate,
            avg_age_slots: stats.avg_age_slots,
            avg_err: stats.avg_err,
            alpha,
            entropy,
            critic_loss,
            actor_loss,
        };
        on_episode(&row);
        curve.push(row);

        if cfg.eval_every > 0 && (episode + 1) % cfg.eval_every == 0 {
            let snap = snapshot(&estimator.borrow(), &learner.borrow());
            let q_mid = 0.5 * (hyper.q_range.0 + hyper.q_range.1);
            let mut eval = evaluate_greedy(&snap, cfg, q_mid, cfg.eval_episodes, rng::mix2(cfg.seed, 0xE7A1))?;
            eval.episode = episode + 1;
            let is_better = best.as_ref().map(|(e, _)| eval.avg_err < *e).unwrap_or(true);
            if is_better {
                best = Some((eval.avg_err, snap));
            }
            evals.push(eval);
        }
    }

    // Normal completion returns the final model unless best-checkpoint
    // selection is on; a budget cut always returns the best evaluated
    // checkpoint seen so far (final weights if none was).
    let bundle = match (warning.is_some() || cfg.keep_best, best) {
        (true, Some((_, b))) => b,
        _ => snapshot(&estimator.borrow(), &learner.borrow()),
    };

    Ok(TrainOutput {
        bundle,
        curve,
        evals,
        warning,
    })
}

/// Rc adapter so the live estimator can serve the episode loop while the
/// trainer updates it between episodes.
struct EstimatorAdapter(Rc<RefCell<EstimatorModel>>);

impl crate::sim::StateEstimator for EstimatorAdapter {
    fn reset(&mut self) {
        self.0.borrow_mut().reset_episode();
    }

    fn estimate(&mut self, age_slots: u64, latest: &crate::sim::Measurement) -> [f64; 4] {
        self.0.borrow_mut().estimate(age_slots, latest)
    }
}
