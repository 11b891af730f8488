use rand::Rng;
use rand_pcg::Pcg64Mcg;

use qnet_nn::{Activation, AdamConfig, Dense, ParameterSet, Tape, Var};

use super::buffer::ReplayBuffer;
use super::nstep::Transition;
use super::SacHyper;
use crate::rng;
use crate::sim::Action;
use crate::Result;

/// Default learning rate for the temperature parameter. The temperature has
/// to travel several units in log space while the actor barely moves, so it
/// gets a faster schedule than the networks.
pub const DEFAULT_LR_ALPHA: f64 = 3e-3;

/// Temperature bounds. When the achievable entropy at the optimum sits away
/// from the target, gradient tuning otherwise drives alpha without limit
/// and the soft Q-values become entropy bookkeeping that drowns the return
/// signal the deployment argmax depends on.
pub const ALPHA_MIN: f64 = 1e-6;
pub const ALPHA_MAX: f64 = 1.0;

const GRAD_CLIP_NORM: f64 = 10.0;

/// log(alpha) plus its own Adam state; alpha = exp(log_alpha) stays positive
/// by construction and clamped into [ALPHA_MIN, ALPHA_MAX] after each step.
#[derive(Debug, Clone)]
pub struct TemperatureState {
    params: ParameterSet,
    id: qnet_nn::ParamId,
    pub lr: f64,
}

impl TemperatureState {
    pub fn new(init_alpha: f64, lr: f64) -> Self {
        let mut params = ParameterSet::new();
        let id = params.add_with("log_alpha", 1, 1, |_, _| init_alpha.ln());
        TemperatureState { params, id, lr }
    }

    pub fn alpha(&self) -> f64 {
        self.params.get(self.id).data[0].exp()
    }

    pub fn log_alpha(&self) -> f64 {
        self.params.get(self.id).data[0]
    }

    /// One Adam descent step on the loss -log_alpha * (target - entropy),
    /// whose gradient is entropy - target, followed by the clamp.
    pub fn update(&mut self, mean_entropy: f64, target_entropy: f64) -> Result<f64> {
        let loss = -self.log_alpha() * (target_entropy - mean_entropy);
        let mut grads = self.params.zero_grads();
        grads.get_mut(self.id).data[0] = mean_entropy - target_entropy;
        self.params
            .adam_step(&grads, &AdamConfig::with_lr(self.lr))?;
        let v = &mut self.params.get_mut(self.id).data[0];
        *v = v.clamp(ALPHA_MIN.ln(), ALPHA_MAX.ln());
        Ok(loss)
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet {
        &mut self.params
    }

    pub fn from_params(params: ParameterSet, lr: f64) -> Self {
        let id = params.ids().next().expect("temperature tensor");
        TemperatureState { params, id, lr }
    }
}

#[derive(Debug, Clone)]
struct Mlp {
    l1: Dense,
    l2: Dense,
    head: Dense,
}

impl Mlp {
    fn new(ps: &mut ParameterSet, name: &str, in_dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        Mlp {
            l1: Dense::new(ps, &format!("{name}.l1"), in_dim, hidden, Activation::Relu, rng),
            l2: Dense::new(ps, &format!("{name}.l2"), hidden, hidden, Activation::Relu, rng),
            head: Dense::new(ps, &format!("{name}.head"), hidden, 2, Activation::Identity, rng),
        }
    }

    fn forward(&self, ps: &ParameterSet, tape: &mut Tape, x: Var) -> Var {
        let h = self.l1.forward(ps, tape, x);
        let h = self.l2.forward(ps, tape, h);
        self.head.forward(ps, tape, h)
    }

    fn eval(&self, ps: &ParameterSet, feats: &[f64]) -> [f64; 2] {
        let mut tape = Tape::new();
        let x = tape.input(feats);
        let out = self.forward(ps, &mut tape, x);
        let v = tape.value(out);
        [v[0], v[1]]
    }
}

/// Losses and diagnostics of one update step.
#[derive(Debug, Clone, Copy)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub temperature_loss: f64,
    pub alpha: f64,
    pub mean_entropy: f64,
}

/// Exposed so tests can rebuild targets with an independent summation.
#[derive(Debug, Clone)]
pub struct TargetBatchEntry {
    pub target: f64,
}

/// Discrete soft actor-critic learner over plain feature vectors.
///
/// The critic outputs exactly two Q-values; the actor outputs a PMF over the
/// two actions; expectations over actions are computed exactly.
pub struct SacLearner {
    pub hyper: SacHyper,
    pub obs_dim: usize,
    pub hidden: usize,
    actor_ps: ParameterSet,
    actor: Mlp,
    critic_ps: ParameterSet,
    critic: Mlp,
    target_ps: ParameterSet,
    temperature: TemperatureState,
    rng: Pcg64Mcg,
}

impl SacLearner {
    pub fn new(hyper: SacHyper, obs_dim: usize, hidden: usize, seed: u64) -> Self {
        let mut init_rng = rng::stream(seed, rng::STREAM_INIT);
        let mut actor_ps = ParameterSet::new();
        let actor = Mlp::new(&mut actor_ps, "actor", obs_dim, hidden, &mut init_rng);
        let mut critic_ps = ParameterSet::new();
        let critic = Mlp::new(&mut critic_ps, "critic", obs_dim, hidden, &mut init_rng);
        let target_ps = critic_ps.clone();
        SacLearner {
            hyper,
            obs_dim,
            hidden,
            actor_ps,
            actor,
            critic_ps,
            critic,
            target_ps,
            temperature: TemperatureState::new(1.0, DEFAULT_LR_ALPHA),
            rng: rng::stream(seed, rng::STREAM_LEARNER),
        }
    }

    pub fn alpha(&self) -> f64 {
        self.temperature.alpha()
    }

    pub fn temperature(&self) -> &TemperatureState {
        &self.temperature
    }

    pub fn actor_params(&self) -> &ParameterSet {
        &self.actor_ps
    }

    pub fn actor_params_mut(&mut self) -> &mut ParameterSet {
        &mut self.actor_ps
    }

    pub fn critic_params(&self) -> &ParameterSet {
        &self.critic_ps
    }

    pub fn critic_params_mut(&mut self) -> &mut ParameterSet {
        &mut self.critic_ps
    }

    pub fn target_params(&self) -> &ParameterSet {
        &self.target_ps
    }

    pub fn temperature_mut(&mut self) -> &mut TemperatureState {
        &mut self.temperature
    }

    /// Rebuilds a learner from checkpointed parameter sets. Layer handles are
    /// reconstructed against a scratch set with identical registration order,
    /// so the ids line up with the loaded tensors.
    pub fn from_params(
        hyper: SacHyper,
        obs_dim: usize,
        hidden: usize,
        seed: u64,
        actor_ps: ParameterSet,
        critic_ps: ParameterSet,
        target_ps: ParameterSet,
        temperature: ParameterSet,
    ) -> Self {
        let mut scratch_rng = rng::stream(seed, rng::STREAM_INIT);
        let mut scratch_a = ParameterSet::new();
        let actor = Mlp::new(&mut scratch_a, "actor", obs_dim, hidden, &mut scratch_rng);
        let mut scratch_c = ParameterSet::new();
        let critic = Mlp::new(&mut scratch_c, "critic", obs_dim, hidden, &mut scratch_rng);
        assert_eq!(scratch_a.tensor_count(), actor_ps.tensor_count());
        assert_eq!(scratch_c.tensor_count(), critic_ps.tensor_count());
        SacLearner {
            hyper,
            obs_dim,
            hidden,
            actor_ps,
            actor,
            critic_ps,
            critic,
            target_ps,
            temperature: TemperatureState::from_params(temperature, DEFAULT_LR_ALPHA),
            rng: rng::stream(seed, rng::STREAM_LEARNER),
        }
    }

    /// Action PMF from the actor.
    pub fn policy_pmf(&self, feats: &[f64]) -> [f64; 2] {
        let mut tape = Tape::new();
        let x = tape.input(feats);
        let logits = self.actor.forward(&self.actor_ps, &mut tape, x);
        let p = tape.softmax(logits);
        let v = tape.value(p);
        [v[0], v[1]]
    }

    /// Samples an action from the actor PMF with the learner's own stream.
    pub fn sample_action(&mut self, feats: &[f64]) -> Action {
        let p = self.policy_pmf(feats);
        if self.rng.gen::<f64>() < p[1] {
            Action::Query
        } else {
            Action::DontQuery
        }
    }

    pub fn q_values(&self, feats: &[f64]) -> [f64; 2] {
        self.critic.eval(&self.critic_ps, feats)
    }

    pub fn target_q_values(&self, feats: &[f64]) -> [f64; 2] {
        self.critic.eval(&self.target_ps, feats)
    }

    /// Soft n-step targets:
    /// y = R_n + gamma^n_used * E_a~pi [ Q_target(s'', a) - alpha log pi(a|s'') ],
    /// with the bootstrap dropped on terminal transitions.
    pub fn critic_targets(&self, batch: &[Transition]) -> Vec<f64> {
        let alpha = self.alpha();
        batch
            .iter()
            .map(|t| {
                if t.terminal {
                    return t.n_step_return;
                }
                let pmf = self.policy_pmf(&t.obs_after_n);
                let q = self.target_q_values(&t.obs_after_n);
                let mut soft = 0.0;
                for a in 0..2 {
                    let p = pmf[a].max(1e-12);
                    soft += pmf[a] * (q[a] - alpha * p.ln());
                }
                t.n_step_return + t.discount_to_bootstrap * soft
            })
            .collect()
    }

    /// One gradient step each for critic, actor and temperature, then a
    /// Polyak update of the target critic. Non-finite losses abort without
    /// touching the parameters.
    pub fn update_batch(&mut self, batch: &[Transition]) -> Result<UpdateStats> {
        assert!(!batch.is_empty());
        for t in batch {
            let finite = t.obs.iter().chain(t.obs_after_n.iter()).all(|v| v.is_finite())
                && t.n_step_return.is_finite();
            if !finite {
                return Err(qnet_nn::NnError::NonFinite {
                    context: "batch transitions",
                }
                .into());
            }
        }
        let targets = self.critic_targets(batch);
        let inv = 1.0 / batch.len() as f64;

        // Critic: MSE between Q(s, a_taken) and the soft target.
        let mut tape = Tape::new();
        let mut per_sample = Vec::with_capacity(batch.len());
        for (t, y) in batch.iter().zip(targets.iter()) {
            let x = tape.input(&t.obs);
            let q = self.critic.forward(&self.critic_ps, &mut tape, x);
            let qa = tape.pick(q, t.action.index());
            let yv = tape.scalar(*y);
            let d = tape.sub(qa, yv);
            per_sample.push(tape.mul(d, d));
        }
        let stacked = tape.concat(&per_sample);
        let critic_loss = tape.mean(stacked);
        let mut critic_grads = self.critic_ps.zero_grads();
        tape.backward(&self.critic_ps, critic_loss, &mut critic_grads)?;
        let critic_loss_val = tape.scalar_value(critic_loss);

        // Actor: E_s [ sum_a pi(a|s) (alpha log pi(a|s) - Q(s,a)) ] with the
        // critic values held constant.
        let alpha = self.alpha();
        let mut tape = Tape::new();
        let mut per_sample = Vec::with_capacity(batch.len());
        let mut entropy_acc = 0.0;
        for t in batch {
            let q = self.q_values(&t.obs);
            let x = tape.input(&t.obs);
            let logits = self.actor.forward(&self.actor_ps, &mut tape, x);
            let p = tape.softmax(logits);
            let logp = tape.log_softmax(logits);
            let scaled = tape.scale(logp, alpha);
            let qv = tape.input(&q);
            let inner = tape.sub(scaled, qv);
            per_sample.push(tape.dot(p, inner));

            let pv = tape.value(p);
            let lv = tape.value(logp);
            entropy_acc -= pv[0] * lv[0] + pv[1] * lv[1];
        }
        let stacked = tape.concat(&per_sample);
        let actor_loss = tape.mean(stacked);
        let mut actor_grads = self.actor_ps.zero_grads();
        tape.backward(&self.actor_ps, actor_loss, &mut actor_grads)?;
        let actor_loss_val = tape.scalar_value(actor_loss);
        let mean_entropy = entropy_acc * inv;

        // Apply after both backward passes succeeded.
        critic_grads.clip_global_norm(GRAD_CLIP_NORM);
        actor_grads.clip_global_norm(GRAD_CLIP_NORM);
        let adam = AdamConfig::with_lr(self.hyper.lr_actor_critic);
        self.critic_ps.adam_step(&critic_grads, &adam)?;
        self.actor_ps.adam_step(&actor_grads, &adam)?;

        let temperature_loss = self
            .temperature
            .update(mean_entropy, self.hyper.target_entropy)?;

        self.target_ps
            .polyak_from(&self.critic_ps, self.hyper.tau_polyak);

        Ok(UpdateStats {
            critic_loss: critic_loss_val,
            actor_loss: actor_loss_val,
            temperature_loss,
            alpha: self.alpha(),
            mean_entropy,
        })
    }

    /// Critic-only step against the soft targets (actor and temperature
    /// frozen). Convergence diagnostics drive this with a fixed actor.
    pub fn update_critic_only(&mut self, batch: &[Transition]) -> Result<f64> {
        let targets = self.critic_targets(batch);
        let mut tape = Tape::new();
        let mut per_sample = Vec::with_capacity(batch.len());
        for (t, y) in batch.iter().zip(targets.iter()) {
            let x = tape.input(&t.obs);
            let q = self.critic.forward(&self.critic_ps, &mut tape, x);
            let qa = tape.pick(q, t.action.index());
            let yv = tape.scalar(*y);
            let d = tape.sub(qa, yv);
            per_sample.push(tape.mul(d, d));
        }
        let stacked = tape.concat(&per_sample);
        let loss = tape.mean(stacked);
        let mut grads = self.critic_ps.zero_grads();
        tape.backward(&self.critic_ps, loss, &mut grads)?;
        grads.clip_global_norm(GRAD_CLIP_NORM);
        self.critic_ps
            .adam_step(&grads, &AdamConfig::with_lr(self.hyper.lr_actor_critic))?;
        self.target_ps
            .polyak_from(&self.critic_ps, self.hyper.tau_polyak);
        Ok(tape.scalar_value(loss))
    }

    /// Samples a batch and updates, or does nothing while the buffer is
    /// below one batch.
    pub fn update_from_buffer(&mut self, buffer: &ReplayBuffer) -> Option<Result<UpdateStats>> {
        if buffer.len() < self.hyper.batch_size {
            return None;
        }
        let batch = buffer.sample_owned(&mut self.rng, self.hyper.batch_size);
        Some(self.update_batch(&batch))
    }
}

/// Free-function form of the target rule for callers that hold the pieces
/// separately; delegates to the learner's implementation.
pub fn critic_targets(learner: &SacLearner, batch: &[Transition]) -> Vec<f64> {
    learner.critic_targets(batch)
}
