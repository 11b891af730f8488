use rand::Rng;
use rand_pcg::Pcg64Mcg;
use serde::{Deserialize, Serialize};

use crate::rng;
use crate::sim::{Action, PolicyCtx, QueryPolicy};

/// Queries at every decision instant, agnostic to network conditions.
#[derive(Debug, Clone, Copy, Default)]
pub struct AlwaysQuery;

impl QueryPolicy for AlwaysQuery {
    fn reset(&mut self, _seed: u64) {}

    fn act(&mut self, _ctx: &PolicyCtx) -> Action {
        Action::Query
    }
}

/// Never queries. Degenerate baseline used by tests.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeverQuery;

impl QueryPolicy for NeverQuery {
    fn reset(&mut self, _seed: u64) {}

    fn act(&mut self, _ctx: &PolicyCtx) -> Action {
        Action::DontQuery
    }
}

/// Queries when the instantaneous ground-truth estimation error strictly
/// exceeds delta.
#[derive(Debug, Clone, Copy)]
pub struct ThresholdPolicy {
    pub delta: f64,
}

impl ThresholdPolicy {
    pub fn new(delta: f64) -> Self {
        ThresholdPolicy { delta }
    }
}

impl QueryPolicy for ThresholdPolicy {
    fn reset(&mut self, _seed: u64) {}

    fn act(&mut self, ctx: &PolicyCtx) -> Action {
        if ctx.true_error_pos > self.delta {
            Action::Query
        } else {
            Action::DontQuery
        }
    }
}

/// Scaling variants for probabilistic querying.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmoidVariant {
    /// sigma(e_r)
    Er,
    /// sigma(e_r / N)
    ErOverN,
    /// sigma(0.5 e_r / N)
    HalfErOverN,
    /// sigma(0.33 e_r / N)
    ThirdErOverN,
}

impl SigmoidVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            SigmoidVariant::Er => "er",
            SigmoidVariant::ErOverN => "er_over_n",
            SigmoidVariant::HalfErOverN => "half_er_over_n",
            SigmoidVariant::ThirdErOverN => "third_er_over_n",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "er" => Some(SigmoidVariant::Er),
            "er_over_n" => Some(SigmoidVariant::ErOverN),
            "half_er_over_n" => Some(SigmoidVariant::HalfErOverN),
            "third_er_over_n" => Some(SigmoidVariant::ThirdErOverN),
            _ => None,
        }
    }

    pub fn argument(&self, err: f64, n_agents: u32) -> f64 {
        let n = n_agents as f64;
        match self {
            SigmoidVariant::Er => err,
            SigmoidVariant::ErOverN => err / n,
            SigmoidVariant::HalfErOverN => 0.5 * err / n,
            SigmoidVariant::ThirdErOverN => 0.33 * err / n,
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Queries with probability sigma(scaled error). Larger errors query more;
/// the 1/N factor shares the network across agents.
#[derive(Debug, Clone)]
pub struct SigmoidPolicy {
    pub variant: SigmoidVariant,
    pub n_agents: u32,
    rng: Pcg64Mcg,
}

impl SigmoidPolicy {
    pub fn new(variant: SigmoidVariant, n_agents: u32) -> Self {
        assert!(n_agents >= 1);
        SigmoidPolicy {
            variant,
            n_agents,
            rng: rng::stream(0, rng::STREAM_POLICY),
        }
    }

    pub fn query_probability(&self, err: f64) -> f64 {
        sigmoid(self.variant.argument(err, self.n_agents))
    }
}

impl QueryPolicy for SigmoidPolicy {
    fn reset(&mut self, seed: u64) {
        self.rng = rng::stream(seed, rng::STREAM_POLICY);
    }

    fn act(&mut self, ctx: &PolicyCtx) -> Action {
        let p = self.query_probability(ctx.true_error_pos);
        if self.rng.gen::<f64>() < p {
            Action::Query
        } else {
            Action::DontQuery
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sac::AgentObservation;
    use crate::sim::{Measurement, SourceState};

    fn ctx_with_err<'a>(
        obs: &'a AgentObservation,
        meas: &'a Measurement,
        err: f64,
    ) -> PolicyCtx<'a> {
        PolicyCtx {
            obs,
            latest: meas,
            true_error_pos: err,
            arrived: false,
            backlog: 0,
            interarrival_slots: 0,
        }
    }

    fn fixtures() -> (AgentObservation, Measurement) {
        (
            AgentObservation {
                estimate: [0.0; 4],
                age_slots: 1,
            },
            Measurement {
                state: SourceState::default(),
                generated_at: 0,
            },
        )
    }

    #[test]
    fn always_query_is_constant_one() {
        let (obs, meas) = fixtures();
        let mut p = AlwaysQuery;
        for err in [0.0, 1.0, 100.0] {
            assert_eq!(p.act(&ctx_with_err(&obs, &meas, err)), Action::Query);
        }
    }

    #[test]
    fn threshold_is_strict() {
        let (obs, meas) = fixtures();
        let mut p = ThresholdPolicy::new(0.25);
        assert_eq!(p.act(&ctx_with_err(&obs, &meas, 0.3)), Action::Query);
        assert_eq!(p.act(&ctx_with_err(&obs, &meas, 0.25)), Action::DontQuery);
        let mut inf = ThresholdPolicy::new(f64::INFINITY);
        assert_eq!(inf.act(&ctx_with_err(&obs, &meas, 1e12)), Action::DontQuery);
    }

    #[test]
    fn sigmoid_midpoint_and_saturation() {
        let p = SigmoidPolicy::new(SigmoidVariant::Er, 1);
        assert!((p.query_probability(0.0) - 0.5).abs() < 1e-12);
        assert!(p.query_probability(1e3) > 0.999_999);
    }

    #[test]
    fn sigmoid_empirical_frequency_matches_probability() {
        let (obs, meas) = fixtures();
        let mut p = SigmoidPolicy::new(SigmoidVariant::ErOverN, 4);
        p.reset(7);
        let err = 2.0;
        let want = p.query_probability(err);
        let n = 100_000;
        let mut queries = 0u64;
        for _ in 0..n {
            if p.act(&ctx_with_err(&obs, &meas, err)) == Action::Query {
                queries += 1;
            }
        }
        let freq = queries as f64 / n as f64;
        let sigma = (want * (1.0 - want) / n as f64).sqrt();
        assert!(
            (freq - want).abs() < 3.0 * sigma,
            "freq {freq} want {want} +- {}",
            3.0 * sigma
        );
    }

    #[test]
    fn sigmoid_probability_non_increasing_in_n() {
        let err = 3.0;
        let mut prev = f64::INFINITY;
        for n in [1u32, 2, 5, 25, 50] {
            let p = SigmoidPolicy::new(SigmoidVariant::ErOverN, n).query_probability(err);
            assert!(p <= prev);
            prev = p;
        }
    }

    #[test]
    fn variant_scales() {
        assert_eq!(SigmoidVariant::Er.argument(6.0, 3), 6.0);
        assert_eq!(SigmoidVariant::ErOverN.argument(6.0, 3), 2.0);
        assert_eq!(SigmoidVariant::HalfErOverN.argument(6.0, 3), 1.0);
        assert!((SigmoidVariant::ThirdErOverN.argument(6.0, 3) - 0.66).abs() < 1e-12);
    }

    #[test]
    fn threshold_query_rate_non_increasing_in_delta() {
        // Fixed error trace; rate as a function of delta can only fall.
        let mut rng = crate::rng::stream(31, 5);
        let errs: Vec<f64> = (0..2000).map(|_| rng.gen::<f64>() * 4.0).collect();
        let (obs, meas) = fixtures();
        let mut prev_rate = f64::INFINITY;
        for delta in [0.1, 0.25, 0.5, 1.0, 2.0, 3.0, f64::INFINITY] {
            let mut p = ThresholdPolicy::new(delta);
            let queries = errs
                .iter()
                .filter(|e| p.act(&ctx_with_err(&obs, &meas, **e)) == Action::Query)
                .count();
            let rate = queries as f64 / errs.len() as f64;
            assert!(rate <= prev_rate, "rate must not increase with delta");
            prev_rate = rate;
        }
        assert_eq!(prev_rate, 0.0, "delta = inf never queries");
    }
}
