use serde::{Deserialize, Serialize};

/// What the actor and critic see: the current state estimate and the age of
/// the freshest measurement behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentObservation {
    pub estimate: [f64; 4],
    pub age_slots: u64,
}

/// Input-assembly variants for the actor/critic networks.
///
/// - `Standard`: estimate + age (the deployed configuration).
/// - `EstimateOnly`: drops the age.
/// - `Lambda`: augments estimate + age with the query backlog counter and
///   the inter-arrival time of responses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ObsAssembly {
    #[default]
    Standard,
    EstimateOnly,
    Lambda,
}

/// Ages saturate gates if fed raw; estimates are translation-heavy in
/// position. Positions are squashed, velocities rescaled. The age enters
/// log-compressed: the decision-relevant band (a few slots to a few tens)
/// must occupy most of the feature range, while runaway staleness saturates
/// instead of dragging the network's linear tails through the fresh region.
const VEL_SCALE: f64 = 10.0;
const POS_SQUASH: f64 = 500.0;
const AGE_CAP_SLOTS: f64 = 2000.0;

fn age_feature(age_slots: u64) -> f64 {
    ((age_slots as f64).min(AGE_CAP_SLOTS)).ln_1p() / 1001f64.ln()
}

impl ObsAssembly {
    pub fn dim(&self) -> usize {
        match self {
            ObsAssembly::Standard => 5,
            ObsAssembly::EstimateOnly => 4,
            ObsAssembly::Lambda => 7,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ObsAssembly::Standard => "standard",
            ObsAssembly::EstimateOnly => "estimate-only",
            ObsAssembly::Lambda => "lambda",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "standard" => Some(ObsAssembly::Standard),
            "estimate-only" => Some(ObsAssembly::EstimateOnly),
            "lambda" => Some(ObsAssembly::Lambda),
            _ => None,
        }
    }

    pub fn features(
        &self,
        obs: &AgentObservation,
        backlog: u64,
        interarrival_slots: u64,
    ) -> Vec<f64> {
        let e = &obs.estimate;
        let mut v = vec![
            (e[0] / POS_SQUASH).tanh(),
            (e[1] / POS_SQUASH).tanh(),
            e[2] / VEL_SCALE,
            e[3] / VEL_SCALE,
        ];
        match self {
            ObsAssembly::EstimateOnly => {}
            ObsAssembly::Standard => {
                v.push(age_feature(obs.age_slots));
            }
            ObsAssembly::Lambda => {
                v.push(age_feature(obs.age_slots));
                v.push(backlog as f64 / 10.0);
                v.push(age_feature(interarrival_slots));
            }
        }
        v
    }
}
