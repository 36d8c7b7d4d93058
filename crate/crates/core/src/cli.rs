//! Experiment runner: the subcommands behind the `offloader` binary.

use std::cell::RefCell;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aco::{self, AcoParams};
use crate::callgraph::{
    dual_to_string, load_dual, save_dual, CallGraph, DualPlacementGraph, ObjectiveVector,
};
use crate::engine::{
    run_online, CacheConfig, ContextKey, DecisionSource, EngineParams, EngineState, RunReport,
};
use crate::pareto::{pareto_front, ParetoArchive};
use crate::rpc::{self, MethodRegistry, RemoteEndpoint};
use crate::sim::{
    all_local_plan, gen_benchmark, simulate, Benchmark, DeviceProfile, NetworkProfile, Workload,
};
use crate::{mix_seed, Error, Result};

/// Modeled decision latencies used for simulator-mode overhead accounting,
/// keeping bench output independent of wall-clock noise.
pub const MODELED_CACHE_MS: f64 = 0.01;
pub const MODELED_RANDOM_MS: f64 = 0.05;
pub const MODELED_ACO_MS_PER_CONSTRUCTION: f64 = 0.0004;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecutorKind {
    Sim,
    Rpc,
}

/// One experiment: a benchmark analog swept over a series of input sizes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub benchmark: String,
    /// Input sizes, smallest to largest. Empty means the benchmark default.
    pub series: Vec<f64>,
    pub runs_per_series: u64,
    pub device: DeviceProfile,
    pub server: DeviceProfile,
    /// Network profile name: good | medium | poor.
    pub network: String,
    /// Overrides the profile's jitter when set.
    pub jitter: Option<f64>,
    pub aco: AcoParams,
    pub cache: CacheConfig,
    pub ema_factor: f64,
    /// Archive-to-plan preference weight. Above 0.5 leans toward response
    /// time, the primary objective of the experiments.
    pub preference_weight: f64,
    pub executor: ExecutorKind,
    pub seed: u64,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            benchmark: "fib".into(),
            series: Vec::new(),
            runs_per_series: 25,
            device: DeviceProfile::device(),
            server: DeviceProfile::server(),
            network: "medium".into(),
            jitter: None,
            aco: AcoParams::default(),
            cache: CacheConfig::default(),
            ema_factor: 1.0,
            preference_weight: 0.7,
            executor: ExecutorKind::Sim,
            seed: 42,
            output: None,
        }
    }
}

impl ExperimentSpec {
    pub fn load(path: &std::path::Path) -> Result<ExperimentSpec> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn network_profile(&self) -> Result<NetworkProfile> {
        let mut net = NetworkProfile::by_name(&self.network)
            .ok_or_else(|| Error::Params(format!("unknown network profile {:?}", self.network)))?;
        if let Some(j) = self.jitter {
            net.jitter = j;
        }
        Ok(net)
    }

    fn engine_params(&self, series_index: u64) -> EngineParams {
        let mut aco = self.aco.clone();
        aco.seed = mix_seed(self.seed, &[0xac0, series_index]);
        EngineParams {
            aco,
            ema_factor: self.ema_factor,
            preference_weight: self.preference_weight,
            cache: self.cache.clone(),
            ..EngineParams::default()
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "offloader",
    version,
    about = "Bi-objective application offloading: graph transform, ant-colony path solver, experiment runner"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Transform a call-graph file into its dual-placement decision graph.
    Transform {
        /// Call-graph JSON file.
        input: PathBuf,
        /// Dual-graph JSON output; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Print the Pareto front of a fully measured dual-graph file.
    Solve {
        /// Dual-graph JSON file with edge weights.
        input: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Exhaustive enumeration instead of the ant-colony solver.
        #[arg(long)]
        oracle: bool,
    },
    /// Run the online decision loop on a benchmark analog and print the
    /// per-run report.
    Decide {
        #[command(flatten)]
        common: BenchArgs,
        /// Input size; benchmark's middle series value when omitted.
        #[arg(long)]
        size: Option<f64>,
    },
    /// Run the full experiment protocol and emit the summary CSV.
    Bench {
        #[command(flatten)]
        common: BenchArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Start the loopback invocation server for a benchmark analog.
    Serve {
        #[arg(long, default_value = "montecarlo")]
        benchmark: String,
        #[arg(long)]
        size: Option<f64>,
        #[arg(long, default_value_t = 0)]
        port: u16,
        #[arg(long, default_value_t = 10.0)]
        slowdown: f64,
        #[arg(long, default_value_t = 0.0)]
        delay_ms: f64,
    },
    /// Summarize a per-run report CSV.
    Report {
        /// CSV produced by `decide`.
        input: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Experiment spec JSON file.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Benchmark name: fib | matmul | det | integrate | montecarlo | facerec.
    #[arg(long)]
    pub benchmark: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Runs per series.
    #[arg(long)]
    pub runs: Option<u64>,
    /// Enable or disable the decision cache.
    #[arg(long)]
    pub cache: Option<bool>,
    /// Cache invalidation period in runs.
    #[arg(long)]
    pub invalidate_every: Option<u64>,
    /// sim | rpc.
    #[arg(long)]
    pub executor: Option<String>,
}

impl BenchArgs {
    pub fn resolve(&self) -> Result<ExperimentSpec> {
        let mut spec = match &self.spec {
            Some(p) => ExperimentSpec::load(p)?,
            None => ExperimentSpec::default(),
        };
        if let Some(b) = &self.benchmark {
            spec.benchmark = b.clone();
        }
        if let Some(s) = self.seed {
            spec.seed = s;
        }
        if let Some(r) = self.runs {
            spec.runs_per_series = r;
        }
        if let Some(c) = self.cache {
            spec.cache.enabled = c;
        }
        if let Some(p) = self.invalidate_every {
            spec.cache.invalidation_period = Some(p);
        }
        if let Some(e) = &self.executor {
            spec.executor = match e.as_str() {
                "sim" => ExecutorKind::Sim,
                "rpc" => ExecutorKind::Rpc,
                other => return Err(Error::Params(format!("unknown executor {other:?}"))),
            };
        }
        Ok(spec)
    }
}

/// Process exit code for an error, per the CLI contract: 1 usage/input,
/// 2 executor unavailable, 3 graph-state.
pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Rpc(_) => 2,
        Error::Graph(_)
        | Error::Cyclic(_)
        | Error::PathBound(_)
        | Error::Unmeasured
        | Error::DeadEnd(_)
        | Error::TraceMismatch(_) => 3,
        _ => 1,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Transform { input, output } => cmd_transform(&input, output.as_deref()),
        Command::Solve { input, seed, oracle } => {
            let out = cmd_solve(&input, seed, oracle)?;
            print!("{out}");
            Ok(())
        }
        Command::Decide { common, size } => cmd_decide(&common.resolve()?, size),
        Command::Bench { common, output } => {
            let spec = common.resolve()?;
            let csv = cmd_bench(&spec)?;
            match output.or(spec.output) {
                Some(path) => std::fs::write(path, csv)?,
                None => print!("{csv}"),
            }
            Ok(())
        }
        Command::Serve {
            benchmark,
            size,
            port,
            slowdown,
            delay_ms,
        } => cmd_serve(&benchmark, size, port, slowdown, delay_ms),
        Command::Report { input } => cmd_report(&input),
    }
}

fn cmd_transform(input: &std::path::Path, output: Option<&std::path::Path>) -> Result<()> {
    let g = CallGraph::load(input)?;
    let d = g.collapsed().transform()?;
    match output {
        Some(path) => {
            save_dual(&d, path)?;
            eprintln!(
                "wrote {} ({} nodes, {} edges, {} paths)",
                path.display(),
                d.node_count(),
                d.edge_count(),
                d.count_paths()
            );
        }
        None => print!("{}", dual_to_string(&d)?),
    }
    Ok(())
}

fn render_front(d: &DualPlacementGraph, archive: &ParetoArchive) -> String {
    let mut rows: Vec<(String, f64, f64)> = archive
        .solutions()
        .iter()
        .map(|s| (d.display_path(&s.nodes), s.cost.time_ms, s.cost.cpu_units))
        .collect();
    rows.sort_by(|a, b| {
        a.1.total_cmp(&b.1)
            .then(a.2.total_cmp(&b.2))
            .then(a.0.cmp(&b.0))
    });
    let mut out = String::new();
    for (path, t, c) in rows {
        out.push_str(&format!("{path} time={t} cpu={c}\n"));
    }
    out
}

pub fn cmd_solve(input: &std::path::Path, seed: Option<u64>, oracle: bool) -> Result<String> {
    let d = load_dual(input)?;
    if !d.all_measured() {
        return Err(Error::Unmeasured);
    }
    let archive = if oracle {
        pareto_front(&d)?
    } else {
        let mut p = AcoParams::default();
        if let Some(s) = seed {
            p.seed = s;
        }
        aco::solve(&d, &p)?
    };
    Ok(render_front(&d, &archive))
}

fn benchmark_of(spec: &ExperimentSpec) -> Result<Benchmark> {
    spec.benchmark.parse()
}

fn series_of(spec: &ExperimentSpec, bench: Benchmark) -> Vec<f64> {
    if spec.series.is_empty() {
        bench.default_series()
    } else {
        spec.series.clone()
    }
}

fn cmd_decide(spec: &ExperimentSpec, size: Option<f64>) -> Result<()> {
    let bench = benchmark_of(spec)?;
    let series = series_of(spec, bench);
    let size = size.unwrap_or(series[series.len() / 2]);
    let report = run_series(spec, bench, 0, size)?.report;
    print!("{}", report.to_csv_string()?);
    eprintln!(
        "solver invocations: {}, cache hits: {}",
        report.solver_invocations, report.cache_hits
    );
    Ok(())
}

struct RunSample {
    baseline: ObjectiveVector,
    executed: ObjectiveVector,
    success: bool,
}

struct SeriesOutcome {
    report: RunReport,
    runs: Vec<RunSample>,
}

/// Runs one series point: fresh engine, decide/execute/observe loop, plus an
/// all-local baseline per run for gain accounting. A plan with no Remote
/// nodes *is* the baseline run, so its gain is exactly zero.
fn run_series(
    spec: &ExperimentSpec,
    bench: Benchmark,
    series_index: u64,
    input: f64,
) -> Result<SeriesOutcome> {
    let w = gen_benchmark(bench, input)?;
    let net = spec.network_profile()?;
    let mut state = EngineState::init(&w.graph, spec.engine_params(series_index))?;
    let key = ContextKey::new(w.name.clone(), input, net.bandwidth);
    let runs: RefCell<Vec<RunSample>> = RefCell::new(Vec::new());

    let report = match spec.executor {
        ExecutorKind::Sim => {
            let d = state.graph().clone();
            let local_plan = all_local_plan(&d)?;
            run_online(&mut state, &key, spec.runs_per_series, |run, plan| {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, &[series_index, run, 0]));
                let trace = simulate(&d, plan, &w, input, &spec.device, &spec.server, &net, &mut rng)?;
                let baseline = if d.remote_count(&plan.nodes) == 0 {
                    trace.clone()
                } else {
                    let mut rng_b =
                        ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, &[series_index, run, 1]));
                    simulate(&d, &local_plan, &w, input, &spec.device, &spec.server, &net, &mut rng_b)?
                };
                runs.borrow_mut().push(RunSample {
                    baseline: baseline.total,
                    executed: trace.total,
                    success: trace.total.time_ms < baseline.total.time_ms,
                });
                Ok(trace)
            })?
        }
        ExecutorKind::Rpc => {
            let d = state.graph().clone();
            let local_plan = all_local_plan(&d)?;
            let registry = MethodRegistry::from_workload(&w, input);
            let template = RemoteEndpoint {
                artificial_slowdown: spec.server.cpu_speed / spec.device.cpu_speed,
                artificial_delay_ms: net.rtt_ms.min(5.0),
                ..RemoteEndpoint::default()
            };
            let handle = serve_or_unavailable(registry.clone(), &template)?;
            let endpoint = handle.endpoint(&template);
            run_online(&mut state, &key, spec.runs_per_series, |run, plan| {
                let out = rpc::run_plan(&d, plan, &registry, &endpoint, run)?;
                let baseline = if d.remote_count(&plan.nodes) == 0 {
                    out.trace.clone()
                } else {
                    rpc::run_plan(&d, &local_plan, &registry, &endpoint, run)?.trace
                };
                runs.borrow_mut().push(RunSample {
                    baseline: baseline.total,
                    executed: out.trace.total,
                    success: out.trace.total.time_ms < baseline.total.time_ms,
                });
                Ok(out.trace)
            })?
        }
    };
    Ok(SeriesOutcome {
        report,
        runs: runs.into_inner(),
    })
}

fn serve_or_unavailable(
    registry: MethodRegistry,
    endpoint: &RemoteEndpoint,
) -> Result<rpc::ServerHandle> {
    rpc::serve(registry, endpoint).map_err(|e| Error::Rpc(format!("executor unavailable: {e}")))
}

fn modeled_decision_ms(source: DecisionSource, aco: &AcoParams) -> f64 {
    match source {
        DecisionSource::Cache => MODELED_CACHE_MS,
        DecisionSource::Random => MODELED_RANDOM_MS,
        DecisionSource::Aco => {
            (aco.n_ants * aco.n_iterations) as f64 * MODELED_ACO_MS_PER_CONSTRUCTION
        }
    }
}

/// Decision-overhead fraction of total wall time for one series. Simulator
/// runs use modeled decision latencies so the CSV is reproducible; RPC runs
/// use measured ones.
fn overhead_fraction(spec: &ExperimentSpec, outcome: &SeriesOutcome) -> f64 {
    let decide: f64 = outcome
        .report
        .records
        .iter()
        .map(|r| match spec.executor {
            ExecutorKind::Sim => modeled_decision_ms(r.source, &spec.aco),
            ExecutorKind::Rpc => r.decision_ms,
        })
        .sum();
    let exec: f64 = outcome.report.records.iter().map(|r| r.time_ms).sum();
    if decide + exec <= 0.0 {
        0.0
    } else {
        decide / (decide + exec)
    }
}

/// The experiment protocol: 25 runs (default) at each of 4 input sizes, one
/// summary row per size. Column contract:
/// device,benchmark,series,success_pct,time_gain_pct,cpu_gain_pct,overhead_pct,cache_hit_pct
pub fn cmd_bench(spec: &ExperimentSpec) -> Result<String> {
    let bench = benchmark_of(spec)?;
    let series = series_of(spec, bench);
    if series.is_empty() {
        return Err(Error::Params("series must not be empty".into()));
    }
    let mut out = String::from(
        "device,benchmark,series,success_pct,time_gain_pct,cpu_gain_pct,overhead_pct,cache_hit_pct\n",
    );
    for (si, &input) in series.iter().enumerate() {
        let outcome = run_series(spec, bench, si as u64, input)?;
        let n = outcome.runs.len().max(1) as f64;
        let successes = outcome.runs.iter().filter(|r| r.success).count() as f64;
        let mean_gain = |pick: fn(&RunSample) -> (f64, f64)| {
            let sum: f64 = outcome
                .runs
                .iter()
                .map(|r| {
                    let (base, got) = pick(r);
                    if base > 0.0 {
                        (base - got) / base * 100.0
                    } else {
                        0.0
                    }
                })
                .sum();
            sum / n
        };
        let time_gain = mean_gain(|r| (r.baseline.time_ms, r.executed.time_ms));
        let cpu_gain = mean_gain(|r| (r.baseline.cpu_units, r.executed.cpu_units));
        let overhead = overhead_fraction(spec, &outcome) * 100.0;
        let cache_hit = outcome.report.cache_hits as f64 / n * 100.0;
        out.push_str(&format!(
            "{},{},{},{:.2},{:.2},{:.2},{:.2},{:.2}\n",
            spec.device.label,
            bench.name(),
            input,
            successes / n * 100.0,
            time_gain,
            cpu_gain,
            overhead,
            cache_hit,
        ));
    }
    Ok(out)
}

fn cmd_serve(benchmark: &str, size: Option<f64>, port: u16, slowdown: f64, delay_ms: f64) -> Result<()> {
    let bench: Benchmark = benchmark.parse()?;
    let series = bench.default_series();
    let size = size.unwrap_or(series[series.len() / 2]);
    let w: Workload = gen_benchmark(bench, size)?;
    let registry = MethodRegistry::from_workload(&w, size);
    let endpoint = RemoteEndpoint {
        port,
        artificial_slowdown: slowdown,
        artificial_delay_ms: delay_ms,
        ..RemoteEndpoint::default()
    };
    let handle = serve_or_unavailable(registry, &endpoint)?;
    println!("listening on {}", handle.addr());
    std::io::stdout().flush()?;
    loop {
        std::thread::park();
    }
}

fn cmd_report(input: &std::path::Path) -> Result<()> {
    let mut reader = csv::Reader::from_path(input).map_err(|e| Error::Parse(e.to_string()))?;
    let mut n = 0u64;
    let mut time = 0.0f64;
    let mut cpu = 0.0f64;
    let mut decide = 0.0f64;
    let mut by_source: std::collections::BTreeMap<String, u64> = Default::default();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Parse(e.to_string()))?;
        n += 1;
        let field = |i: usize| -> f64 {
            row.get(i)
                .and_then(|s| s.parse().ok())
                .unwrap_or(0.0)
        };
        time += field(2);
        cpu += field(3);
        decide += field(4);
        *by_source
            .entry(row.get(5).unwrap_or("?").to_string())
            .or_default() += 1;
    }
    if n == 0 {
        return Err(Error::EmptyReport);
    }
    println!("runs: {n}");
    println!("mean time_ms: {:.3}", time / n as f64);
    println!("mean cpu_units: {:.3}", cpu / n as f64);
    println!(
        "decision overhead: {:.2}%",
        if decide + time > 0.0 {
            decide / (decide + time) * 100.0
        } else {
            0.0
        }
    );
    for (source, count) in by_source {
        println!("decisions from {source}: {count}");
    }
    Ok(())
}
