use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use qnet_core::estimator::{self, PretrainConfig, ZeroOrderHold};
use qnet_core::metrics::{
    bin_table, bin_table_csv, parse_scatter, scatter_export, MetricsRecord, SourceLabel,
};
use qnet_core::policy::{build_policy, PolicySpec};
use qnet_core::sac::train::{train_qnet_with, TrainConfig};
use qnet_core::sac::{ObsAssembly, RangeId};
use qnet_core::sim::{
    bernoulli_arrival_age_curve, run_episode, utilization_grid, EpisodeConfig, EpisodeStats,
    NullSink, SlotClock, StateEstimator,
};
use qnet_core::trace::{
    classify_brtt, parse_trace, run_trace_experiment, AgentSetup, LinkAssignment, TraceCategory,
    TraceExperimentConfig,
};
use qnet_core::{Error, Result};

use crate::manifest::{ensure_run_dir, write_manifest};
use crate::sweep;

#[derive(Parser, Debug)]
#[command(
    name = "qnet",
    version,
    about = "Learning when to query an edge-cloud over a shared, unknown network"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Pre-train the estimator under Bernoulli(q/2) querying.
    Pretrain(PretrainArgs),
    /// Train one q-range model from a pre-trained estimator.
    Train(TrainArgs),
    /// Evaluate a policy over simulated episodes.
    EvalSim(EvalSimArgs),
    /// Evaluate two agents over recorded link schedules.
    EvalTrace(EvalTraceArgs),
    /// Average age versus utilization for Bernoulli arrivals.
    AgeCurve(AgeCurveArgs),
    /// Bin a scatter CSV into 0.05 s age bins.
    BinTable(BinTableArgs),
    /// Fan a batch of evaluations across a worker pool.
    Sweep(SweepArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct PretrainArgs {
    /// Run directory for the checkpoint and report.
    #[arg(long, default_value = "runs/pretrain")]
    pub out_dir: PathBuf,
    /// JSON file with the full pre-training configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub episodes: Option<u32>,
}

#[derive(Args, Debug, Serialize)]
pub struct TrainArgs {
    /// Which model: low, mid, high or one.
    #[arg(long)]
    pub range: String,
    /// Pre-trained estimator checkpoint.
    #[arg(long)]
    pub estimator: PathBuf,
    #[arg(long, default_value = "runs/train")]
    pub out_dir: PathBuf,
    /// JSON file with the full training configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub episodes: Option<u32>,
    /// Observation assembly: standard, estimate-only or lambda.
    #[arg(long, default_value = "standard")]
    pub assembly: String,
    /// Print one line per training episode.
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Args, Debug, Serialize, Clone)]
pub struct EvalSimArgs {
    /// Policy spec, e.g. "kind=threshold delta=0.5".
    #[arg(long)]
    pub policy: String,
    #[arg(long, default_value_t = 20)]
    pub episodes: u32,
    #[arg(long, default_value_t = 2000)]
    pub length: u64,
    /// Fixed q; mutually exclusive with --q-grid.
    #[arg(long)]
    pub q: Option<f64>,
    /// Comma-separated q values, one episode set per value.
    #[arg(long)]
    pub q_grid: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Estimator for baseline policies: a checkpoint path, or "zoh".
    #[arg(long)]
    pub estimator: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub warmup: u64,
    /// Episode configuration file (JSON); overrides --length/--warmup and
    /// supplies q_range, gamma, source parameters and the slot clock.
    #[arg(long)]
    pub episode_config: Option<PathBuf>,
    #[arg(long, default_value = "runs/eval-sim")]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug, Serialize, Clone)]
pub struct EvalTraceArgs {
    #[arg(long)]
    pub up0: PathBuf,
    #[arg(long)]
    pub down0: PathBuf,
    #[arg(long)]
    pub up1: PathBuf,
    #[arg(long)]
    pub down1: PathBuf,
    #[arg(long)]
    pub policy0: String,
    #[arg(long)]
    pub policy1: String,
    #[arg(long, default_value_t = 60.0)]
    pub duration_s: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub estimator: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub base_delay_ms: u64,
    #[arg(long, default_value = "runs/eval-trace")]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct AgeCurveArgs {
    #[arg(long)]
    pub q: f64,
    #[arg(long, default_value_t = 100_000)]
    pub slots: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Comma-separated utilization grid; defaults to 0.05..0.95.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long, default_value = "runs/age-curve")]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct BinTableArgs {
    /// Scatter CSV produced by eval-sim / eval-trace / sweep.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "runs/bin-table")]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct SweepArgs {
    /// Sweep description (JSON).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "runs/sweep")]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub workers: Option<usize>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Pretrain(a) => cmd_pretrain(a),
        Command::Train(a) => cmd_train(a),
        Command::EvalSim(a) => cmd_eval_sim(a),
        Command::EvalTrace(a) => cmd_eval_trace(a),
        Command::AgeCurve(a) => cmd_age_curve(a),
        Command::BinTable(a) => cmd_bin_table(a),
        Command::Sweep(a) => sweep::cmd_sweep(a),
    }
}

fn load_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn cmd_pretrain(args: PretrainArgs) -> Result<()> {
    let mut cfg: PretrainConfig = match &args.config {
        Some(p) => load_json(p)?,
        None => PretrainConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(episodes) = args.episodes {
        cfg.episodes = episodes;
    }
    ensure_run_dir(&args.out_dir)?;
    write_manifest(&args.out_dir, "pretrain", &cfg)?;

    let (model, report) = estimator::pretrain(&cfg)?;
    estimator::save_estimator(&args.out_dir.join("estimator.qnck"), &model)?;

    let mut csv = String::from("step,loss\n");
    for (i, loss) in report.losses.iter().enumerate() {
        csv.push_str(&format!("{i},{loss}\n"));
    }
    std::fs::write(args.out_dir.join("pretrain_loss.csv"), csv)?;
    println!(
        "pretrained {} episodes, {} updates, measured query rate {:.4} (target {:.4})",
        report.episodes_run,
        report.losses.len(),
        report.measured_query_rate,
        report.mean_target_rate
    );
    println!("checkpoint: {}", args.out_dir.join("estimator.qnck").display());
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let range = RangeId::parse(&args.range)
        .ok_or_else(|| Error::Config(format!("unknown range '{}'", args.range)))?;
    let assembly = ObsAssembly::parse(&args.assembly)
        .ok_or_else(|| Error::Config(format!("unknown assembly '{}'", args.assembly)))?;
    let mut cfg: TrainConfig = match &args.config {
        Some(p) => load_json(p)?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(episodes) = args.episodes {
        cfg.episodes = episodes;
    }
    ensure_run_dir(&args.out_dir)?;
    write_manifest(&args.out_dir, "train", (&args, &cfg))?;

    let pretrained = estimator::load_estimator(&args.estimator)?;
    let verbose = args.verbose;
    let out = train_qnet_with(range, &cfg, &pretrained, assembly, |row| {
        if verbose && row.episode % 25 == 0 {
            println!(
                "episode {:>5} q={:.3} reward={:.3} rate={:.3} age={:.1} err={:.2} alpha={:.4}",
                row.episode, row.q, row.avg_reward, row.query_rate, row.avg_age_slots, row.avg_err, row.alpha
            );
        }
    })?;

    let ckpt = args.out_dir.join("model.qnck");
    out.bundle.save(&ckpt)?;
    let mut csv = String::from(qnet_core::sac::train::EpisodeTrainStat::CSV_HEADER);
    csv.push('\n');
    for row in &out.curve {
        csv.push_str(&row.csv_row());
        csv.push('\n');
    }
    std::fs::write(args.out_dir.join("train_curve.csv"), csv)?;
    let mut evals = String::from("episode,q,avg_err,avg_age_slots,query_rate\n");
    for e in &out.evals {
        evals.push_str(&format!(
            "{},{},{},{},{}\n",
            e.episode, e.q, e.avg_err, e.avg_age_slots, e.query_rate
        ));
    }
    std::fs::write(args.out_dir.join("evals.csv"), evals)?;
    if let Some(w) = &out.warning {
        std::fs::write(args.out_dir.join("WARNING"), w)?;
        eprintln!("warning: {w}");
    }
    println!("checkpoint: {}", ckpt.display());
    Ok(())
}

/// Resolves the loop estimator for baseline policies. Trained policy kinds
/// carry their own and ignore this.
fn resolve_estimator(path: &Option<PathBuf>) -> Result<Box<dyn StateEstimator>> {
    match path {
        None => Ok(Box::new(ZeroOrderHold::new())),
        Some(p) if p.as_os_str() == "zoh" => Ok(Box::new(ZeroOrderHold::new())),
        Some(p) => Ok(Box::new(estimator::load_estimator(p)?)),
    }
}

/// Runs one episode set at a fixed q and returns (per-episode rows,
/// scatter/metrics records).
pub fn eval_sim_set(
    args: &EvalSimArgs,
    q: Option<f64>,
    experiment_id: &str,
) -> Result<(Vec<EpisodeStats>, Vec<MetricsRecord>)> {
    let spec: PolicySpec = args.policy.parse()?;
    let mut built = build_policy(&spec)?;
    let mut fallback = resolve_estimator(&args.estimator)?;
    let base: Option<EpisodeConfig> = match &args.episode_config {
        Some(p) => Some(load_json(p)?),
        None => None,
    };
    let clock = base.as_ref().map(|c| c.clock).unwrap_or_default();

    let mut episodes = Vec::with_capacity(args.episodes as usize);
    let mut records = Vec::with_capacity(args.episodes as usize);
    for k in 0..args.episodes {
        let mut cfg = match &base {
            Some(b) => b.clone(),
            None => {
                let mut c = EpisodeConfig::new((0.05, 1.0), args.length, 0);
                c.warmup_slots = args.warmup.min(args.length.saturating_sub(1));
                c
            }
        };
        cfg.seed = qnet_core::rng::mix2(args.seed, k as u64);
        let stats = {
            let est: &mut dyn StateEstimator = match &mut built.estimator {
                Some(e) => e.as_mut(),
                None => fallback.as_mut(),
            };
            run_episode(&cfg, q, est, built.policy.as_mut(), &NullSink, &mut ())?
        };
        records.push(MetricsRecord::from_episode(
            experiment_id,
            &built.label,
            &stats,
            &clock,
        ));
        episodes.push(stats);
    }
    Ok((episodes, records))
}

fn parse_grid(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad grid value '{s}'")))
        })
        .collect()
}

fn cmd_eval_sim(args: EvalSimArgs) -> Result<()> {
    ensure_run_dir(&args.out_dir)?;
    write_manifest(&args.out_dir, "eval-sim", &args)?;
    let qs: Vec<Option<f64>> = match (&args.q, &args.q_grid) {
        (Some(q), None) => vec![Some(*q)],
        (None, Some(grid)) => parse_grid(grid)?.into_iter().map(Some).collect(),
        (None, None) => vec![None],
        (Some(_), Some(_)) => {
            return Err(Error::Config("--q and --q-grid are exclusive".into()))
        }
    };

    let mut episode_rows = String::from(EpisodeStats::CSV_HEADER);
    episode_rows.push('\n');
    let mut all_records = Vec::new();
    for (i, q) in qs.iter().enumerate() {
        let id = match q {
            Some(q) => format!("sim-q{q}"),
            None => "sim-random-q".to_string(),
        };
        let (eps, recs) = eval_sim_set(&args, *q, &id)?;
        for e in &eps {
            episode_rows.push_str(&e.csv_row());
            episode_rows.push('\n');
        }
        all_records.extend(recs);
        if i == 0 {
            println!(
                "{id}: avg_err {:.3} avg_age {:.2} slots rate {:.3}",
                eps.iter().map(|e| e.avg_err).sum::<f64>() / eps.len() as f64,
                eps.iter().map(|e| e.avg_age_slots).sum::<f64>() / eps.len() as f64,
                eps.iter().map(|e| e.query_rate).sum::<f64>() / eps.len() as f64,
            );
        }
    }
    std::fs::write(args.out_dir.join("episodes.csv"), episode_rows)?;
    std::fs::write(args.out_dir.join("scatter.csv"), scatter_export(&all_records))?;
    let mut metrics = String::from(MetricsRecord::CSV_HEADER);
    metrics.push('\n');
    for r in &all_records {
        metrics.push_str(&r.csv_row());
        metrics.push('\n');
    }
    std::fs::write(args.out_dir.join("metrics.csv"), metrics)?;
    Ok(())
}

/// Runs one trace experiment and returns its stats plus metrics records.
pub fn eval_trace_once(args: &EvalTraceArgs) -> Result<(qnet_core::trace::ExperimentStats, Vec<MetricsRecord>)> {
    let assignment = LinkAssignment {
        uplinks: [parse_trace(&args.up0)?, parse_trace(&args.up1)?],
        downlinks: [parse_trace(&args.down0)?, parse_trace(&args.down1)?],
        category: TraceCategory::NotStationary,
    };
    let cfg = TraceExperimentConfig {
        duration_ms: (args.duration_s * 1000.0).round() as u64,
        seed: args.seed,
        base_delay_ms: args.base_delay_ms,
        ..TraceExperimentConfig::default()
    };
    let mut agents = Vec::new();
    for spec_text in [&args.policy0, &args.policy1] {
        let spec: PolicySpec = spec_text.parse()?;
        let built = build_policy(&spec)?;
        let estimator = match built.estimator {
            Some(e) => e,
            None => resolve_estimator(&args.estimator)?,
        };
        agents.push(AgentSetup {
            policy: built.policy,
            estimator,
            label: built.label,
        });
    }
    let stats = run_trace_experiment(&assignment, agents, &cfg)?;
    for w in &stats.warnings {
        eprintln!("warning: {w}");
    }
    let trace_id = format!(
        "{}+{}",
        args.up0.file_stem().unwrap_or_default().to_string_lossy(),
        args.up1.file_stem().unwrap_or_default().to_string_lossy()
    );
    let records = stats
        .agents
        .iter()
        .map(|a| MetricsRecord {
            experiment_id: format!("trace-{}-seed{}", trace_id, args.seed),
            policy: a.label.clone(),
            q_or_trace: trace_id.clone(),
            avg_age_seconds: a.avg_age_seconds,
            mean_error: a.mean_err,
            std_error: a.std_err,
            mean_squared_error: a.mean_err_sq,
            query_rate: a.query_rate,
            mean_rtt_seconds: a.mean_rtt_seconds,
            per: Some(a.per),
            label: SourceLabel::Trace,
        })
        .collect();
    Ok((stats, records))
}

fn cmd_eval_trace(args: EvalTraceArgs) -> Result<()> {
    ensure_run_dir(&args.out_dir)?;
    write_manifest(&args.out_dir, "eval-trace", &args)?;
    let (stats, records) = eval_trace_once(&args)?;

    // bRTT class of this assignment, from an always-query probe run.
    let assignment = LinkAssignment {
        uplinks: [parse_trace(&args.up0)?, parse_trace(&args.up1)?],
        downlinks: [parse_trace(&args.down0)?, parse_trace(&args.down1)?],
        category: TraceCategory::NotStationary,
    };
    let probe_cfg = TraceExperimentConfig {
        duration_ms: (args.duration_s * 1000.0).round() as u64,
        seed: args.seed,
        base_delay_ms: args.base_delay_ms,
        ..TraceExperimentConfig::default()
    };
    let (class, median) = classify_brtt(&assignment, &probe_cfg, 0.2)?;
    std::fs::write(
        args.out_dir.join("brtt.json"),
        format!("{{\"class\":\"{class:?}\",\"median_seconds\":{median}}}\n"),
    )?;

    let mut metrics = String::from(MetricsRecord::CSV_HEADER);
    metrics.push('\n');
    for r in &records {
        metrics.push_str(&r.csv_row());
        metrics.push('\n');
    }
    std::fs::write(args.out_dir.join("metrics.csv"), metrics)?;
    std::fs::write(args.out_dir.join("scatter.csv"), scatter_export(&records))?;
    for a in &stats.agents {
        println!(
            "{}: err {:.3} age {:.3}s rate {:.3} rtt {:?} per {:.3}",
            a.label, a.mean_err, a.avg_age_seconds, a.query_rate, a.mean_rtt_seconds, a.per
        );
    }
    println!("bRTT median {median:.3}s -> {class:?}");
    Ok(())
}

fn cmd_age_curve(args: AgeCurveArgs) -> Result<()> {
    ensure_run_dir(&args.out_dir)?;
    write_manifest(&args.out_dir, "age-curve", &args)?;
    let grid = match &args.grid {
        Some(g) => parse_grid(g)?
            .into_iter()
            .map(|u| u * args.q)
            .collect::<Vec<_>>(),
        None => utilization_grid(args.q),
    };
    let points = bernoulli_arrival_age_curve(args.q, &grid, args.slots, args.seed)?;
    let clock = SlotClock::default();
    let mut csv = String::from("utilization,arrival_probability,avg_age_slots,avg_age_seconds\n");
    for p in &points {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            p.utilization,
            p.arrival_probability,
            p.average_age_slots,
            clock.seconds(p.average_age_slots)
        ));
    }
    std::fs::write(args.out_dir.join("age_curve.csv"), csv)?;
    println!(
        "q={}: {} utilization points written to {}",
        args.q,
        points.len(),
        args.out_dir.join("age_curve.csv").display()
    );
    Ok(())
}

fn cmd_bin_table(args: BinTableArgs) -> Result<()> {
    ensure_run_dir(&args.out_dir)?;
    write_manifest(&args.out_dir, "bin-table", &args)?;
    let text = std::fs::read_to_string(&args.input)?;
    let rows = parse_scatter(&text)?;
    let bins = bin_table(&rows);
    let csv = bin_table_csv(&bins);
    std::fs::write(args.out_dir.join("bins.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}
