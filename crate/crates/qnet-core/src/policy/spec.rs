use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::baselines::{AlwaysQuery, NeverQuery, SigmoidPolicy, SigmoidVariant, ThresholdPolicy};
use super::qnet::{EnsembleAgent, SingleModelAgent};
use crate::sac::train::ModelBundle;
use crate::sim::{QueryPolicy, StateEstimator};
use crate::{Error, Result};

/// Policy specification as written in experiment configs, e.g.
///
/// ```text
/// kind=always
/// kind=threshold delta=0.5
/// kind=sigmoid variant=er_over_n n_agents=25
/// kind=qnet-one ckpt=runs/one/model.qnck
/// kind=qnet-ensemble low=l.qnck mid=m.qnck high=h.qnck
/// ```
///
/// Key-value pairs are separated by spaces or commas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PolicySpec {
    Always,
    Never,
    Threshold {
        delta: f64,
    },
    Sigmoid {
        variant: SigmoidVariant,
        n_agents: u32,
    },
    QnetOne {
        ckpt: PathBuf,
    },
    QnetEnsemble {
        low: PathBuf,
        mid: PathBuf,
        high: PathBuf,
    },
}

impl FromStr for PolicySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for tok in s.split(|c| c == ' ' || c == ',').filter(|t| !t.is_empty()) {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| Error::PolicySpec(format!("expected key=value, got '{tok}'")))?;
            kv.insert(k.to_string(), v.to_string());
        }
        let kind = kv
            .remove("kind")
            .ok_or_else(|| Error::PolicySpec("missing kind=".into()))?;
        let mut take = |key: &str| -> Result<String> {
            kv.remove(key)
                .ok_or_else(|| Error::PolicySpec(format!("policy '{kind}' needs {key}=")))
        };
        let spec = match kind.as_str() {
            "always" | "always-query" => PolicySpec::Always,
            "never" | "never-query" => PolicySpec::Never,
            "threshold" => {
                let delta = take("delta")?;
                let delta = if delta == "inf" {
                    f64::INFINITY
                } else {
                    delta
                        .parse()
                        .map_err(|_| Error::PolicySpec(format!("bad delta '{delta}'")))?
                };
                PolicySpec::Threshold { delta }
            }
            "sigmoid" => {
                let variant = take("variant")?;
                let variant = SigmoidVariant::parse(&variant)
                    .ok_or_else(|| Error::PolicySpec(format!("unknown variant '{variant}'")))?;
                let n = take("n_agents")?;
                let n_agents = n
                    .parse()
                    .map_err(|_| Error::PolicySpec(format!("bad n_agents '{n}'")))?;
                if n_agents == 0 {
                    return Err(Error::PolicySpec("n_agents must be >= 1".into()));
                }
                PolicySpec::Sigmoid { variant, n_agents }
            }
            "qnet-one" => PolicySpec::QnetOne {
                ckpt: PathBuf::from(take("ckpt")?),
            },
            "qnet-ensemble" => PolicySpec::QnetEnsemble {
                low: PathBuf::from(take("low")?),
                mid: PathBuf::from(take("mid")?),
                high: PathBuf::from(take("high")?),
            },
            other => return Err(Error::PolicySpec(format!("unknown policy kind '{other}'"))),
        };
        if let Some(extra) = kv.keys().next() {
            return Err(Error::PolicySpec(format!("unknown key '{extra}'")));
        }
        Ok(spec)
    }
}

impl std::fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PolicySpec::Always => write!(f, "kind=always"),
            PolicySpec::Never => write!(f, "kind=never"),
            PolicySpec::Threshold { delta } => write!(f, "kind=threshold delta={delta}"),
            PolicySpec::Sigmoid { variant, n_agents } => write!(
                f,
                "kind=sigmoid variant={} n_agents={n_agents}",
                variant.as_str()
            ),
            PolicySpec::QnetOne { ckpt } => write!(f, "kind=qnet-one ckpt={}", ckpt.display()),
            PolicySpec::QnetEnsemble { low, mid, high } => write!(
                f,
                "kind=qnet-ensemble low={} mid={} high={}",
                low.display(),
                mid.display(),
                high.display()
            ),
        }
    }
}

/// A built policy plus, for the trained kinds, the estimator handle that
/// shares its state (the episode loop must drive that one).
pub struct BuiltPolicy {
    pub policy: Box<dyn QueryPolicy>,
    pub estimator: Option<Box<dyn StateEstimator>>,
    pub label: String,
}

/// Instantiates a policy, loading checkpoints for the trained kinds.
pub fn build_policy(spec: &PolicySpec) -> Result<BuiltPolicy> {
    let label = spec.to_string();
    let built = match spec {
        PolicySpec::Always => BuiltPolicy {
            policy: Box::new(AlwaysQuery),
            estimator: None,
            label,
        },
        PolicySpec::Never => BuiltPolicy {
            policy: Box::new(NeverQuery),
            estimator: None,
            label,
        },
        PolicySpec::Threshold { delta } => BuiltPolicy {
            policy: Box::new(ThresholdPolicy::new(*delta)),
            estimator: None,
            label,
        },
        PolicySpec::Sigmoid { variant, n_agents } => BuiltPolicy {
            policy: Box::new(SigmoidPolicy::new(*variant, *n_agents)),
            estimator: None,
            label,
        },
        PolicySpec::QnetOne { ckpt } => {
            let bundle = ModelBundle::load(ckpt)?;
            let agent = SingleModelAgent::new(bundle);
            let est = agent.estimator_handle();
            BuiltPolicy {
                policy: Box::new(agent),
                estimator: Some(Box::new(est)),
                label,
            }
        }
        PolicySpec::QnetEnsemble { low, mid, high } => {
            let bundles = vec![
                ModelBundle::load(low)?,
                ModelBundle::load(mid)?,
                ModelBundle::load(high)?,
            ];
            let agent = EnsembleAgent::new(bundles);
            let est = agent.estimator_handle();
            BuiltPolicy {
                policy: Box::new(agent),
                estimator: Some(Box::new(est)),
                label,
            }
        }
    };
    Ok(built)
}
