use std::collections::VecDeque;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::link::EmulatedLink;
use super::schedule::TraceSchedule;
use crate::policy::backlog_update;
use crate::rng;
use crate::sim::{
    source_step, AgeClock, Measurement, PolicyCtx, QueryPolicy, SlotClock, SourceParams,
    SourceState, StateEstimator,
};
use crate::sim::Action;
use crate::sac::AgentObservation;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceCategory {
    Stationary,
    NotStationary,
}

/// Four traces per two-agent experiment: an uplink and a downlink per agent.
#[derive(Debug, Clone)]
pub struct LinkAssignment {
    pub uplinks: [TraceSchedule; 2],
    pub downlinks: [TraceSchedule; 2],
    pub category: TraceCategory,
}

/// Draws the four traces randomly and without replacement from a pool.
pub fn draw_assignment(
    pool: &[TraceSchedule],
    category: TraceCategory,
    rng: &mut impl Rng,
) -> Result<LinkAssignment> {
    if pool.len() < 4 {
        return Err(Error::Trace(format!(
            "assignment needs 4 distinct traces, pool has {}",
            pool.len()
        )));
    }
    let picks = sample(rng, pool.len(), 4);
    let s = |i: usize| pool[picks.index(i)].clone();
    Ok(LinkAssignment {
        uplinks: [s(0), s(1)],
        downlinks: [s(2), s(3)],
        category,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceExperimentConfig {
    pub duration_ms: u64,
    pub seed: u64,
    /// Fixed one-way base delay added on each hop.
    pub base_delay_ms: u64,
    /// Measurement packet size on the uplink (the query flag rides it).
    pub measurement_bytes: u64,
    /// Response packet size on the downlink.
    pub response_bytes: u64,
    /// Decisions excluded from the averages.
    pub warmup_decisions: u64,
    #[serde(default)]
    pub source: SourceParams,
    #[serde(default)]
    pub clock: SlotClock,
}

impl Default for TraceExperimentConfig {
    fn default() -> Self {
        TraceExperimentConfig {
            duration_ms: 60_000,
            seed: 1,
            base_delay_ms: 10,
            measurement_bytes: 1024,
            response_bytes: 1024,
            warmup_decisions: 100,
            source: SourceParams::default(),
            clock: SlotClock::default(),
        }
    }
}

impl TraceExperimentConfig {
    fn decision_period_ms(&self) -> u64 {
        let ms = (self.clock.seconds(1.0) * 1000.0).round();
        assert!(ms >= 1.0, "decision period under a millisecond");
        ms as u64
    }
}

/// One agent's policy and estimator for a replay run.
pub struct AgentSetup {
    pub policy: Box<dyn QueryPolicy>,
    pub estimator: Box<dyn StateEstimator>,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentTraceStats {
    pub label: String,
    pub avg_age_slots: f64,
    pub avg_age_seconds: f64,
    pub mean_err: f64,
    pub std_err: f64,
    pub mean_err_sq: f64,
    pub query_rate: f64,
    pub queries_sent: u64,
    pub responses_received: u64,
    pub mean_rtt_seconds: Option<f64>,
    /// Fraction of queries with no response before experiment end.
    pub per: f64,
    #[serde(skip)]
    pub rtt_seconds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentStats {
    pub agents: Vec<AgentTraceStats>,
    pub warnings: Vec<String>,
}

struct UplinkMsg {
    arrival_ms: u64,
    agent: usize,
    meas: Measurement,
    query: bool,
    query_sent_ms: u64,
}

struct DownlinkMsg {
    arrival_ms: u64,
    meas: Measurement,
    query_sent_ms: u64,
}

struct AgentRun {
    source: SourceState,
    source_rng: rand_pcg::Pcg64Mcg,
    age: AgeClock,
    latest: Measurement,
    rx_since_decision: Vec<Measurement>,
    uplink: EmulatedLink,
    downlink: EmulatedLink,
    in_flight_up: VecDeque<UplinkMsg>,
    in_flight_down: VecDeque<DownlinkMsg>,
    outstanding_queries: VecDeque<u64>,
    backlog: u64,
    interarrival_slots: u64,
    arrived_last: bool,
    // accumulators
    queries: u64,
    queries_counted: u64,
    responses: u64,
    rtts_ms: Vec<u64>,
    acc_age: f64,
    acc_err: f64,
    acc_err_sq: f64,
    errs: Vec<f64>,
    decisions_counted: u64,
}

/// Drives two agents against one FCFS cloud responder over emulated links.
///
/// Millisecond loop; decisions every 0.1 s. Each decision instant every
/// agent sends a measurement packet with the query flag set by its policy.
/// The cloud stores the freshest measurement per agent and answers queries
/// in arrival order with zero processing time. Within one millisecond,
/// arrivals are processed before decisions and agent 0 before agent 1.
pub fn run_trace_experiment(
    assignment: &LinkAssignment,
    mut agents: Vec<AgentSetup>,
    cfg: &TraceExperimentConfig,
) -> Result<ExperimentStats> {
    if agents.len() != 2 {
        return Err(Error::Config(format!(
            "trace experiments drive exactly 2 agents, got {}",
            agents.len()
        )));
    }
    let period = cfg.decision_period_ms();
    let mut warnings = Vec::new();
    for (name, sched) in [
        ("uplink0", &assignment.uplinks[0]),
        ("uplink1", &assignment.uplinks[1]),
        ("downlink0", &assignment.downlinks[0]),
        ("downlink1", &assignment.downlinks[1]),
    ] {
        if sched.period() < cfg.duration_ms {
            warnings.push(format!(
                "{name}: trace spans {} ms < experiment {} ms; wrapping cyclically",
                sched.period(),
                cfg.duration_ms
            ));
        }
    }

    let mut runs: Vec<AgentRun> = (0..2)
        .map(|i| {
            let mut init_rng = rng::stream3(cfg.seed, rng::STREAM_INIT, i as u64);
            let source = SourceState::sample_initial(&cfg.source, &mut init_rng);
            AgentRun {
                source,
                source_rng: rng::stream3(cfg.seed, rng::STREAM_SOURCE, i as u64),
                age: AgeClock::new(),
                latest: Measurement {
                    state: source,
                    generated_at: 0,
                },
                rx_since_decision: Vec::new(),
                uplink: EmulatedLink::new(assignment.uplinks[i].clone()),
                downlink: EmulatedLink::new(assignment.downlinks[i].clone()),
                in_flight_up: VecDeque::new(),
                in_flight_down: VecDeque::new(),
                outstanding_queries: VecDeque::new(),
                backlog: 0,
                interarrival_slots: 0,
                arrived_last: true,
                queries: 0,
                queries_counted: 0,
                responses: 0,
                rtts_ms: Vec::new(),
                acc_age: 0.0,
                acc_err: 0.0,
                acc_err_sq: 0.0,
                errs: Vec::new(),
                decisions_counted: 0,
            }
        })
        .collect();

    for (i, setup) in agents.iter_mut().enumerate() {
        setup.estimator.reset();
        setup
            .policy
            .reset(rng::mix2(cfg.seed, rng::STREAM_POLICY + i as u64));
    }

    // Cloud state: freshest measurement per agent.
    let mut cloud_store: [Option<Measurement>; 2] = [None, None];

    for t in 0..cfg.duration_ms {
        // Uplink arrivals reach the cloud; responses go out immediately in
        // arrival order (zero processing time).
        for i in 0..2 {
            while runs[i]
                .in_flight_up
                .front()
                .map(|m| m.arrival_ms <= t)
                .unwrap_or(false)
            {
                let msg = runs[i].in_flight_up.pop_front().unwrap();
                let fresher = cloud_store[msg.agent]
                    .map(|m| msg.meas.generated_at > m.generated_at)
                    .unwrap_or(true);
                if fresher {
                    cloud_store[msg.agent] = Some(msg.meas);
                }
                if msg.query {
                    let response = cloud_store[msg.agent].expect("store was just fed");
                    let deliver = runs[msg.agent].downlink.send(cfg.response_bytes, t);
                    let arrival_ms = deliver + cfg.base_delay_ms;
                    runs[msg.agent].in_flight_down.push_back(DownlinkMsg {
                        arrival_ms,
                        meas: response,
                        query_sent_ms: msg.query_sent_ms,
                    });
                }
            }
        }

        // Downlink arrivals reach the agents.
        for run in runs.iter_mut() {
            while run
                .in_flight_down
                .front()
                .map(|m| m.arrival_ms <= t)
                .unwrap_or(false)
            {
                let msg = run.in_flight_down.pop_front().unwrap();
                let sent = run
                    .outstanding_queries
                    .pop_front()
                    .expect("response without outstanding query");
                debug_assert_eq!(sent, msg.query_sent_ms);
                run.rtts_ms.push(msg.arrival_ms - sent);
                run.responses += 1;
                run.rx_since_decision.push(msg.meas);
            }
        }

        if t % period != 0 {
            continue;
        }
        let slot = t / period;

        for (i, run) in runs.iter_mut().enumerate() {
            // Delivered measurements since the previous decision; the age
            // clock ticks once per decision instant on the freshest one.
            let freshest = run
                .rx_since_decision
                .iter()
                .max_by_key(|m| m.generated_at)
                .copied();
            let arrived_any = !run.rx_since_decision.is_empty();
            let arrivals = run.rx_since_decision.len() as u64;
            run.rx_since_decision.clear();

            if slot == 0 {
                // Synthetic initial measurement of the true initial state.
                run.source = source_step(&run.source, &cfg.source, &cfg.clock, &mut run.source_rng);
                run.latest = Measurement {
                    state: run.source,
                    generated_at: 0,
                };
                run.age.tick(Some(&run.latest), 0);
            } else {
                let was_fresh = run.age.tick(freshest.as_ref(), slot);
                if was_fresh {
                    run.latest = freshest.unwrap();
                }
                for _ in 0..arrivals {
                    run.backlog = backlog_update(run.backlog, false, true);
                }
                run.source = source_step(&run.source, &cfg.source, &cfg.clock, &mut run.source_rng);
            }

            let age_now = run.age.age();
            let estimate = agents[i].estimator.estimate(age_now, &run.latest);
            let truth = run.source.as_vec4();
            let mut err_sq = 0.0;
            for k in 0..4 {
                let d = estimate[k] - truth[k];
                err_sq += d * d;
            }
            let err_pos = ((estimate[0] - truth[0]).powi(2) + (estimate[1] - truth[1]).powi(2)).sqrt();

            let obs = AgentObservation {
                estimate,
                age_slots: age_now,
            };
            let ctx = PolicyCtx {
                obs: &obs,
                latest: &run.latest,
                true_error_pos: err_pos,
                arrived: run.arrived_last,
                backlog: run.backlog,
                interarrival_slots: run.interarrival_slots,
            };
            let action = agents[i].policy.act(&ctx);
            let query = action == Action::Query;

            // The sensor message goes out every decision instant; the query
            // flag rides it.
            let meas = Measurement {
                state: run.source,
                generated_at: slot,
            };
            let deliver = run.uplink.send(cfg.measurement_bytes, t);
            run.in_flight_up.push_back(UplinkMsg {
                arrival_ms: deliver + cfg.base_delay_ms,
                agent: i,
                meas,
                query,
                query_sent_ms: t,
            });
            if query {
                run.queries += 1;
                run.outstanding_queries.push_back(t);
                run.backlog = backlog_update(run.backlog, true, false);
            }

            if slot >= cfg.warmup_decisions {
                run.decisions_counted += 1;
                run.acc_age += age_now as f64;
                run.acc_err += err_pos;
                run.acc_err_sq += err_sq;
                run.errs.push(err_pos);
                run.queries_counted += u64::from(query);
            }
            run.interarrival_slots = if arrived_any {
                0
            } else {
                run.interarrival_slots + 1
            };
            run.arrived_last = arrived_any;
        }
    }

    let stats = runs
        .iter()
        .zip(agents.iter())
        .map(|(run, setup)| {
            let n = run.decisions_counted.max(1) as f64;
            let mean_err = run.acc_err / n;
            let var = run
                .errs
                .iter()
                .map(|e| (e - mean_err) * (e - mean_err))
                .sum::<f64>()
                / n;
            let avg_age_slots = run.acc_age / n;
            let mean_rtt_seconds = if run.rtts_ms.is_empty() {
                None
            } else {
                Some(
                    run.rtts_ms.iter().sum::<u64>() as f64 / run.rtts_ms.len() as f64 / 1000.0,
                )
            };
            AgentTraceStats {
                label: setup.label.clone(),
                avg_age_slots,
                avg_age_seconds: cfg.clock.seconds(avg_age_slots),
                mean_err,
                std_err: var.sqrt(),
                mean_err_sq: run.acc_err_sq / n,
                query_rate: run.queries_counted as f64 / n,
                queries_sent: run.queries,
                responses_received: run.responses,
                mean_rtt_seconds,
                per: if run.queries == 0 {
                    0.0
                } else {
                    (run.queries - run.responses) as f64 / run.queries as f64
                },
                rtt_seconds: run.rtts_ms.iter().map(|&ms| ms as f64 / 1000.0).collect(),
            }
        })
        .collect();

    Ok(ExperimentStats {
        agents: stats,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BrttClass {
    Low,
    High,
}

/// Baseline RTT classification: probes are queries sent every decision
/// instant (i.e. an always-query run); the class is decided by the median
/// probe RTT against the threshold (>= goes high).
pub fn classify_brtt(
    assignment: &LinkAssignment,
    cfg: &TraceExperimentConfig,
    threshold_seconds: f64,
) -> Result<(BrttClass, f64)> {
    use crate::estimator::ZeroOrderHold;
    use crate::policy::AlwaysQuery;
    let agents = vec![
        AgentSetup {
            policy: Box::new(AlwaysQuery),
            estimator: Box::new(ZeroOrderHold::new()),
            label: "brtt-probe".into(),
        },
        AgentSetup {
            policy: Box::new(AlwaysQuery),
            estimator: Box::new(ZeroOrderHold::new()),
            label: "brtt-probe".into(),
        },
    ];
    let stats = run_trace_experiment(assignment, agents, cfg)?;
    let mut rtts: Vec<f64> = stats
        .agents
        .iter()
        .flat_map(|a| a.rtt_seconds.iter().copied())
        .collect();
    if rtts.is_empty() {
        return Err(Error::Trace(
            "bRTT probe run produced no responses".into(),
        ));
    }
    rtts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = rtts[rtts.len() / 2];
    let class = if median >= threshold_seconds {
        BrttClass::High
    } else {
        BrttClass::Low
    };
    Ok((class, median))
}
