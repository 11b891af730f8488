//! Sweep: fan independent evaluations across a worker pool, aggregate into
//! one metrics/scatter pair.

use std::collections::VecDeque;
use std::path::PathBuf;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use qnet_core::metrics::{scatter_export, MetricsRecord};
use qnet_core::Result;

use crate::commands::{eval_sim_set, eval_trace_once, EvalSimArgs, EvalTraceArgs, SweepArgs};
use crate::manifest::{ensure_run_dir, write_manifest};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimJob {
    pub policy: String,
    pub q_grid: Vec<f64>,
    #[serde(default = "default_episodes")]
    pub episodes: u32,
    #[serde(default = "default_length")]
    pub length: u64,
    pub seed: u64,
    #[serde(default)]
    pub estimator: Option<PathBuf>,
    #[serde(default = "default_warmup")]
    pub warmup: u64,
    #[serde(default)]
    pub id: Option<String>,
}

fn default_episodes() -> u32 {
    10
}

fn default_length() -> u64 {
    2000
}

fn default_warmup() -> u64 {
    100
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceJob {
    pub up0: PathBuf,
    pub down0: PathBuf,
    pub up1: PathBuf,
    pub down1: PathBuf,
    pub policy0: String,
    pub policy1: String,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    pub seed: u64,
    #[serde(default)]
    pub estimator: Option<PathBuf>,
    #[serde(default = "default_base_delay")]
    pub base_delay_ms: u64,
    #[serde(default)]
    pub id: Option<String>,
}

fn default_duration() -> f64 {
    60.0
}

fn default_base_delay() -> u64 {
    10
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct SweepConfig {
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub sim: Vec<SimJob>,
    #[serde(default)]
    pub trace: Vec<TraceJob>,
}

enum Job {
    Sim(usize, SimJob),
    Trace(usize, TraceJob),
}

pub fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.config)?;
    let cfg: SweepConfig = serde_json::from_str(&text)?;
    ensure_run_dir(&args.out_dir)?;
    write_manifest(&args.out_dir, "sweep", &cfg)?;

    let mut queue: VecDeque<Job> = VecDeque::new();
    for (i, j) in cfg.sim.iter().enumerate() {
        queue.push_back(Job::Sim(i, j.clone()));
    }
    for (i, j) in cfg.trace.iter().enumerate() {
        queue.push_back(Job::Trace(i, j.clone()));
    }
    let total = queue.len();
    let workers = args
        .workers
        .or(cfg.workers)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
        .max(1);

    let queue = Mutex::new(queue);
    let results: Mutex<Vec<(usize, Vec<MetricsRecord>)>> = Mutex::new(Vec::new());
    let errors: Mutex<Vec<String>> = Mutex::new(Vec::new());

    std::thread::scope(|scope| {
        for _ in 0..workers.min(total.max(1)) {
            scope.spawn(|| loop {
                let job = { queue.lock().unwrap().pop_front() };
                let Some(job) = job else { break };
                match run_job(job) {
                    Ok((order, recs)) => results.lock().unwrap().push((order, recs)),
                    Err(e) => errors.lock().unwrap().push(e.to_string()),
                }
            });
        }
    });

    let errors = errors.into_inner().unwrap();
    if !errors.is_empty() {
        return Err(qnet_core::Error::Config(format!(
            "{} sweep job(s) failed: {}",
            errors.len(),
            errors.join("; ")
        )));
    }

    // Single-threaded reduce in job order.
    let mut results = results.into_inner().unwrap();
    results.sort_by_key(|(order, _)| *order);
    let records: Vec<MetricsRecord> = results.into_iter().flat_map(|(_, r)| r).collect();

    let mut metrics = String::from(MetricsRecord::CSV_HEADER);
    metrics.push('\n');
    for r in &records {
        metrics.push_str(&r.csv_row());
        metrics.push('\n');
    }
    std::fs::write(args.out_dir.join("metrics.csv"), metrics)?;
    std::fs::write(args.out_dir.join("scatter.csv"), scatter_export(&records))?;
    println!(
        "{} jobs, {} records -> {}",
        total,
        records.len(),
        args.out_dir.join("metrics.csv").display()
    );
    Ok(())
}

fn run_job(job: Job) -> Result<(usize, Vec<MetricsRecord>)> {
    match job {
        Job::Sim(order, j) => {
            let args = EvalSimArgs {
                policy: j.policy.clone(),
                episodes: j.episodes,
                length: j.length,
                q: None,
                q_grid: None,
                seed: j.seed,
                estimator: j.estimator.clone(),
                warmup: j.warmup,
                episode_config: None,
                out_dir: PathBuf::new(),
            };
            let mut records = Vec::new();
            for q in &j.q_grid {
                let id = j
                    .id
                    .clone()
                    .unwrap_or_else(|| format!("sweep-sim-{order}"));
                let (_, recs) = eval_sim_set(&args, Some(*q), &format!("{id}-q{q}"))?;
                records.extend(recs);
            }
            Ok((order, records))
        }
        Job::Trace(order, j) => {
            let args = EvalTraceArgs {
                up0: j.up0,
                down0: j.down0,
                up1: j.up1,
                down1: j.down1,
                policy0: j.policy0,
                policy1: j.policy1,
                duration_s: j.duration_s,
                seed: j.seed,
                estimator: j.estimator,
                base_delay_ms: j.base_delay_ms,
                out_dir: PathBuf::new(),
            };
            let (_, mut recs) = eval_trace_once(&args)?;
            if let Some(id) = j.id {
                for r in &mut recs {
                    r.experiment_id = format!("{id}:{}", r.experiment_id);
                }
            }
            Ok((order, recs))
        }
    }
}
