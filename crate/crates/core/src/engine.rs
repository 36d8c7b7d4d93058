//! The offloading decision engine.
//!
//! Starts with an all-zero, unmeasured decision graph, explores with random
//! placement paths until every edge has a real observed weight, then runs the
//! ACO solver and picks one plan from the non-dominated archive. Observed
//! execution traces feed edge weights back (EMA), and a string-matched cache
//! keyed by execution context short-circuits repeated situations.

use std::collections::HashMap;
use std::time::Instant;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aco::{self, AcoParams};
use crate::callgraph::{CallGraph, DualPlacementGraph, MethodId, NodeId, ObjectiveVector};
use crate::pareto::{ParetoArchive, PathSolution};
use crate::{mix_seed, Error, Result};

/// One observed run: "methodId@placement" tokens, per-method compute costs,
/// and the full per-edge costs (method cost plus communication surcharge;
/// the final entry is the edge into the virtual end).
#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionTrace {
    pub tokens: Vec<String>,
    pub per_method_costs: HashMap<MethodId, ObjectiveVector>,
    pub edge_costs: Vec<ObjectiveVector>,
    pub total: ObjectiveVector,
    pub degraded: bool,
}

impl ExecutionTrace {
    pub fn empty() -> Self {
        ExecutionTrace {
            tokens: Vec::new(),
            per_method_costs: HashMap::new(),
            edge_costs: Vec::new(),
            total: ObjectiveVector::ZERO,
            degraded: false,
        }
    }
}

/// Execution context for cache matching. Exact field equality; the paper's
/// "same situation" is bucketed input size and network class.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContextKey {
    pub app_id: String,
    pub input_bucket: i32,
    pub network_bucket: u8,
}

impl ContextKey {
    pub fn new(app_id: impl Into<String>, input_size: f64, bandwidth_bytes_per_ms: f64) -> Self {
        let mbps = bandwidth_bytes_per_ms * 8.0 / 1000.0;
        let network_bucket = if mbps >= 50.0 {
            0
        } else if mbps >= 5.0 {
            1
        } else {
            2
        };
        ContextKey {
            app_id: app_id.into(),
            input_bucket: input_size.max(1.0).log2().floor() as i32,
            network_bucket,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CacheConfig {
    pub enabled: bool,
    /// A cached plan expires this many runs after it was stored. `None`
    /// disables invalidation entirely.
    pub invalidation_period: Option<u64>,
}

impl Default for CacheConfig {
    fn default() -> Self {
        CacheConfig {
            enabled: true,
            invalidation_period: Some(10),
        }
    }
}

#[derive(Debug, Clone)]
struct CacheEntry {
    plan: PathSolution,
    tokens: String,
    stored_at_run: u64,
}

/// Plan history keyed by context, with run-count-based invalidation.
#[derive(Debug, Clone, Default)]
pub struct DecisionCache {
    entries: HashMap<ContextKey, CacheEntry>,
}

impl DecisionCache {
    pub fn store(&mut self, key: ContextKey, plan: PathSolution, tokens: String, run: u64) {
        self.entries.insert(
            key,
            CacheEntry {
                plan,
                tokens,
                stored_at_run: run,
            },
        );
    }

    /// A lookup at run r hits only while r - stored_at_run < period. Expired
    /// entries are evicted.
    pub fn lookup(
        &mut self,
        key: &ContextKey,
        run: u64,
        period: Option<u64>,
    ) -> Option<(PathSolution, String)> {
        let entry = self.entries.get(key)?;
        if let Some(p) = period {
            if run.saturating_sub(entry.stored_at_run) >= p {
                self.entries.remove(key);
                return None;
            }
        }
        let entry = &self.entries[key];
        Some((entry.plan.clone(), entry.tokens.clone()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineParams {
    pub aco: AcoParams,
    /// Weight of a new observation against the stored edge weight. 1.0 means
    /// pure overwrite.
    pub ema_factor: f64,
    /// Preference weight w for picking one plan from the archive:
    /// minimize w * time_norm + (1 - w) * cpu_norm.
    pub preference_weight: f64,
    pub cache: CacheConfig,
    /// Candidate paths sampled when choosing an exploration path.
    pub explore_samples: usize,
}

impl Default for EngineParams {
    fn default() -> Self {
        EngineParams {
            aco: AcoParams::default(),
            ema_factor: 1.0,
            preference_weight: 0.5,
            cache: CacheConfig::default(),
            explore_samples: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecisionSource {
    Cache,
    Random,
    Aco,
}

impl std::fmt::Display for DecisionSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DecisionSource::Cache => write!(f, "cache"),
            DecisionSource::Random => write!(f, "random"),
            DecisionSource::Aco => write!(f, "aco"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Decision {
    pub plan: PathSolution,
    pub tokens: String,
    pub source: DecisionSource,
}

pub struct EngineState {
    graph: DualPlacementGraph,
    cache: DecisionCache,
    params: EngineParams,
    rng: ChaCha8Rng,
    run_counter: u64,
    solver_invocations: u64,
    cache_hits: u64,
}

impl EngineState {
    /// Builds an engine over the app's dual graph with all-zero unmeasured
    /// weights, an empty cache, and run counter zero.
    pub fn init(app: &CallGraph, params: EngineParams) -> Result<EngineState> {
        params.aco.validate()?;
        if !(params.ema_factor > 0.0 && params.ema_factor <= 1.0) {
            return Err(Error::Params("ema_factor must be in (0,1]".into()));
        }
        let graph = app.transform()?;
        let rng = ChaCha8Rng::seed_from_u64(mix_seed(params.aco.seed, &[0x0e11_91de]));
        Ok(EngineState {
            graph,
            cache: DecisionCache::default(),
            params,
            rng,
            run_counter: 0,
            solver_invocations: 0,
            cache_hits: 0,
        })
    }

    /// Engine over an already-built decision graph (e.g. loaded from file).
    pub fn from_graph(graph: DualPlacementGraph, params: EngineParams) -> Result<EngineState> {
        params.aco.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(mix_seed(params.aco.seed, &[0x0e11_91de]));
        Ok(EngineState {
            graph,
            cache: DecisionCache::default(),
            params,
            rng,
            run_counter: 0,
            solver_invocations: 0,
            cache_hits: 0,
        })
    }

    pub fn graph(&self) -> &DualPlacementGraph {
        &self.graph
    }

    pub fn params(&self) -> &EngineParams {
        &self.params
    }

    pub fn run_counter(&self) -> u64 {
        self.run_counter
    }

    pub fn solver_invocations(&self) -> u64 {
        self.solver_invocations
    }

    pub fn cache_hits(&self) -> u64 {
        self.cache_hits
    }

    pub fn cache_store(&mut self, key: ContextKey, plan: PathSolution) {
        let tokens = self.graph.token_string(&plan.nodes);
        self.cache.store(key, plan, tokens, self.run_counter);
    }

    pub fn cache_lookup(&mut self, key: &ContextKey) -> Option<PathSolution> {
        let period = self.params.cache.invalidation_period;
        self.cache
            .lookup(key, self.run_counter, period)
            .map(|(plan, _)| plan)
    }

    fn random_path(&mut self) -> Vec<NodeId> {
        let mut path = vec![self.graph.start()];
        let mut current = self.graph.start();
        while current != self.graph.end() {
            let out = self.graph.out_edges(current);
            let e = out[self.rng.random_range(0..out.len())];
            current = self.graph.edge(e).to;
            path.push(current);
        }
        path
    }

    fn unmeasured_on(&self, path: &[NodeId]) -> usize {
        path.windows(2)
            .filter_map(|p| self.graph.find_edge(p[0], p[1]))
            .filter(|&e| !self.graph.edge(e).measured)
            .count()
    }

    /// Seeded random plan biased toward covering unmeasured edges: among
    /// sampled candidate paths, the one touching the most unmeasured edges.
    fn explore(&mut self) -> PathSolution {
        let mut best: Option<(usize, Vec<NodeId>)> = None;
        for _ in 0..self.params.explore_samples.max(1) {
            let path = self.random_path();
            let score = self.unmeasured_on(&path);
            if best.as_ref().is_none_or(|(s, _)| score > *s) {
                best = Some((score, path));
            }
        }
        let (_, nodes) = best.expect("at least one sample");
        let cost = self.graph.path_cost(&nodes).expect("sampled path is valid");
        PathSolution { nodes, cost }
    }

    /// Picks the archive solution minimizing the normalized weighted sum.
    /// Ties break toward fewer Remote nodes, then lexicographic token order.
    fn select_plan(&self, archive: &ParetoArchive) -> PathSolution {
        let w = self.params.preference_weight;
        let costs = archive.costs();
        let (tmin, tmax) = min_max(costs.iter().map(|c| c.time_ms));
        let (cmin, cmax) = min_max(costs.iter().map(|c| c.cpu_units));
        let norm = |x: f64, lo: f64, hi: f64| if hi > lo { (x - lo) / (hi - lo) } else { 0.0 };

        let mut best: Option<(&PathSolution, f64, usize, String)> = None;
        for s in archive.solutions() {
            let score = w * norm(s.cost.time_ms, tmin, tmax)
                + (1.0 - w) * norm(s.cost.cpu_units, cmin, cmax);
            let remotes = self.graph.remote_count(&s.nodes);
            let tokens = self.graph.token_string(&s.nodes);
            let better = match &best {
                None => true,
                Some((_, bs, br, bt)) => {
                    if (score - bs).abs() > 1e-12 {
                        score < *bs
                    } else if remotes != *br {
                        remotes < *br
                    } else {
                        tokens < *bt
                    }
                }
            };
            if better {
                best = Some((s, score, remotes, tokens));
            }
        }
        best.expect("archive is non-empty").0.clone()
    }

    /// The offloading decision for one run. Cache hit, exploration path, or a
    /// fresh ACO solve, in that order of preference.
    pub fn decide(&mut self, key: &ContextKey) -> Result<Decision> {
        if self.params.cache.enabled {
            let period = self.params.cache.invalidation_period;
            if let Some((plan, tokens)) = self.cache.lookup(key, self.run_counter, period) {
                self.cache_hits += 1;
                return Ok(Decision {
                    plan,
                    tokens,
                    source: DecisionSource::Cache,
                });
            }
        }

        if !self.graph.all_measured() {
            let plan = self.explore();
            let tokens = self.graph.token_string(&plan.nodes);
            return Ok(Decision {
                plan,
                tokens,
                source: DecisionSource::Random,
            });
        }

        let mut aco_params = self.params.aco.clone();
        aco_params.seed = mix_seed(self.params.aco.seed, &[1, self.run_counter]);
        self.solver_invocations += 1;
        let archive = aco::solve(&self.graph, &aco_params)?;
        let plan = self.select_plan(&archive);
        let tokens = self.graph.token_string(&plan.nodes);
        if self.params.cache.enabled {
            self.cache
                .store(key.clone(), plan.clone(), tokens.clone(), self.run_counter);
        }
        log::debug!("aco decision {} at run {}", tokens, self.run_counter);
        Ok(Decision {
            plan,
            tokens,
            source: DecisionSource::Aco,
        })
    }

    /// Feeds real per-edge costs of an executed path back into the graph.
    /// Weight update is an EMA; with ema_factor 1.0 the observation overwrites.
    pub fn observe(&mut self, trace: &ExecutionTrace) -> Result<()> {
        if !trace.tokens.is_empty() {
            if trace.edge_costs.len() != trace.tokens.len() + 1 {
                return Err(Error::TraceMismatch(format!(
                    "expected {} edge costs, got {}",
                    trace.tokens.len() + 1,
                    trace.edge_costs.len()
                )));
            }
            let mut path = Vec::with_capacity(trace.tokens.len() + 2);
            path.push(self.graph.start());
            for t in &trace.tokens {
                let node = self
                    .graph
                    .parse_token(t)
                    .ok_or_else(|| Error::TraceMismatch(t.clone()))?;
                path.push(node);
            }
            path.push(self.graph.end());

            let mut edges = Vec::with_capacity(path.len() - 1);
            for (i, pair) in path.windows(2).enumerate() {
                let e = self.graph.find_edge(pair[0], pair[1]).ok_or_else(|| {
                    Error::TraceMismatch(
                        trace.tokens.get(i).cloned().unwrap_or_else(|| "end".into()),
                    )
                })?;
                edges.push(e);
            }
            let a = self.params.ema_factor;
            for (i, &e) in edges.iter().enumerate() {
                let measured = trace.edge_costs[i];
                let edge = self.graph.edge(e);
                let new = if edge.measured {
                    ObjectiveVector::new(
                        a * measured.time_ms + (1.0 - a) * edge.weight.time_ms,
                        a * measured.cpu_units + (1.0 - a) * edge.weight.cpu_units,
                    )
                } else {
                    measured
                };
                self.graph.set_weight(e, new);
            }
        }
        self.run_counter += 1;
        Ok(())
    }

    /// Counts a run that produced no usable trace (executor failure).
    pub fn note_failed_run(&mut self) {
        self.run_counter += 1;
    }
}

fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: u64,
    pub plan: String,
    pub time_ms: f64,
    pub cpu_units: f64,
    pub decision_ms: f64,
    pub source: DecisionSource,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub records: Vec<RunRecord>,
    pub solver_invocations: u64,
    pub cache_hits: u64,
}

impl RunReport {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["run", "plan", "time_ms", "cpu_units", "decision_ms", "source"])
            .map_err(|e| Error::Parse(e.to_string()))?;
        for r in &self.records {
            out.write_record([
                r.run.to_string(),
                r.plan.clone(),
                if r.error.is_some() {
                    String::new()
                } else {
                    r.time_ms.to_string()
                },
                if r.error.is_some() {
                    String::new()
                } else {
                    r.cpu_units.to_string()
                },
                r.decision_ms.to_string(),
                r.source.to_string(),
            ])
            .map_err(|e| Error::Parse(e.to_string()))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Decide → execute → observe loop. Executor failures are recorded per run
/// and the loop continues.
pub fn run_online<F>(
    state: &mut EngineState,
    key: &ContextKey,
    n_runs: u64,
    mut executor: F,
) -> Result<RunReport>
where
    F: FnMut(u64, &PathSolution) -> Result<ExecutionTrace>,
{
    let mut report = RunReport::default();
    for run in 0..n_runs {
        let t0 = Instant::now();
        let decision = state.decide(key)?;
        let decision_ms = t0.elapsed().as_secs_f64() * 1000.0;
        match executor(run, &decision.plan) {
            Ok(trace) => {
                let record = RunRecord {
                    run,
                    plan: decision.tokens.clone(),
                    time_ms: trace.total.time_ms,
                    cpu_units: trace.total.cpu_units,
                    decision_ms,
                    source: decision.source,
                    error: None,
                };
                state.observe(&trace)?;
                report.records.push(record);
            }
            Err(e) => {
                state.note_failed_run();
                report.records.push(RunRecord {
                    run,
                    plan: decision.tokens.clone(),
                    time_ms: 0.0,
                    cpu_units: 0.0,
                    decision_ms,
                    source: decision.source,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    report.solver_invocations = state.solver_invocations();
    report.cache_hits = state.cache_hits();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::callgraph::{CallEdge, MethodNode, Placement};

    fn app(offloadable: usize) -> CallGraph {
        let mut methods = vec![MethodNode {
            id: 0,
            name: "main".into(),
            work_units: 1.0,
            bytes_in: 0,
            bytes_out: 0,
            pinned_local: true,
        }];
        let mut calls = Vec::new();
        for i in 1..=offloadable as MethodId {
            methods.push(MethodNode {
                id: i,
                name: format!("m{i}"),
                work_units: 10.0,
                bytes_in: 8,
                bytes_out: 8,
                pinned_local: false,
            });
            calls.push(CallEdge {
                caller: i - 1,
                callee: i,
            });
        }
        CallGraph {
            methods,
            calls,
            entry: 0,
            exit: offloadable as MethodId,
        }
    }

    fn key() -> ContextKey {
        ContextKey::new("test", 100.0, 5000.0)
    }

    /// Noiseless closed-form executor: local edges cost (10, 10), remote
    /// edges (2, 1), plus (5, 0) on placement changes.
    fn toy_executor(graph: &DualPlacementGraph, plan: &PathSolution) -> ExecutionTrace {
        use crate::callgraph::NodeKind;
        let mut tokens = Vec::new();
        let mut edge_costs = Vec::new();
        let mut per_method = HashMap::new();
        let mut prev = Placement::Local;
        for &n in &plan.nodes {
            if let NodeKind::Method(dn) = graph.node(n) {
                tokens.push(graph.token(n).unwrap());
                let base = match dn.placement {
                    Placement::Local => ObjectiveVector::new(10.0, 10.0),
                    Placement::Remote => ObjectiveVector::new(2.0, 1.0),
                };
                let hop = if dn.placement != prev { 5.0 } else { 0.0 };
                edge_costs.push(ObjectiveVector::new(base.time_ms + hop, base.cpu_units));
                per_method.insert(dn.method, base);
                prev = dn.placement;
            }
        }
        let end_hop = if prev == Placement::Remote { 5.0 } else { 0.0 };
        edge_costs.push(ObjectiveVector::new(end_hop, 0.0));
        let total = edge_costs.iter().copied().sum();
        ExecutionTrace {
            tokens,
            per_method_costs: per_method,
            edge_costs,
            total,
            degraded: false,
        }
    }

    #[test]
    fn init_zeroes_everything() {
        let state = EngineState::init(&app(3), EngineParams::default()).unwrap();
        assert_eq!(state.run_counter(), 0);
        assert!(!state.graph().all_measured());
        for e in state.graph().edges() {
            assert_eq!(e.weight, ObjectiveVector::ZERO);
            assert!(!e.measured);
        }
        assert!(state.cache.is_empty());
    }

    #[test]
    fn init_pinned_only_app_single_candidate() {
        let mut g = app(0);
        g.exit = 0;
        let state = EngineState::init(&g, EngineParams::default()).unwrap();
        assert_eq!(state.graph().count_paths(), 1);
    }

    #[test]
    fn fresh_decide_is_seed_deterministic() {
        let mk = || {
            let mut state = EngineState::init(&app(3), EngineParams::default()).unwrap();
            state.decide(&key()).unwrap()
        };
        let a = mk();
        let b = mk();
        assert_eq!(a.tokens, b.tokens);
        assert_eq!(a.source, DecisionSource::Random);
        assert!(a.plan.nodes.first() == Some(&0));
    }

    #[test]
    fn cache_hit_skips_solver_and_returns_stored_plan() {
        let mut state = EngineState::init(&app(2), EngineParams::default()).unwrap();
        let k = key();
        let plan = state.decide(&k).unwrap().plan;
        state.cache_store(k.clone(), plan.clone());
        let before = state.solver_invocations();
        let d = state.decide(&k).unwrap();
        assert_eq!(d.source, DecisionSource::Cache);
        assert_eq!(d.plan.nodes, plan.nodes);
        assert_eq!(state.solver_invocations(), before);
    }

    #[test]
    fn cache_expires_after_invalidation_period() {
        let mut state = EngineState::init(&app(1), EngineParams::default()).unwrap();
        let k = key();
        let plan = state.decide(&k).unwrap().plan;
        state.cache_store(k.clone(), plan);
        state.run_counter = 10; // default period
        assert!(state.cache_lookup(&k).is_none());
        assert!(state.cache.is_empty(), "expired entry must be evicted");
    }

    #[test]
    fn cache_key_mismatch_is_a_miss() {
        let mut state = EngineState::init(&app(1), EngineParams::default()).unwrap();
        let k = key();
        let plan = state.decide(&k).unwrap().plan;
        state.cache_store(k.clone(), plan);
        let other = ContextKey {
            input_bucket: k.input_bucket + 1,
            ..k
        };
        assert!(state.cache_lookup(&other).is_none());
    }

    #[test]
    fn observe_sets_unmeasured_edge_to_real_value() {
        let mut state = EngineState::init(&app(1), EngineParams::default()).unwrap();
        let trace = ExecutionTrace {
            tokens: vec!["0@L".into(), "1@R".into()],
            per_method_costs: HashMap::new(),
            edge_costs: vec![
                ObjectiveVector::new(1.0, 1.0),
                ObjectiveVector::new(12.5, 7.0),
                ObjectiveVector::new(5.0, 0.0),
            ],
            total: ObjectiveVector::new(18.5, 8.0),
            degraded: false,
        };
        state.observe(&trace).unwrap();
        let from = state.graph.method_node(0, Placement::Local).unwrap();
        let to = state.graph.method_node(1, Placement::Remote).unwrap();
        let e = state.graph.find_edge(from, to).unwrap();
        assert!(state.graph.edge(e).measured);
        assert_eq!(state.graph.edge(e).weight, ObjectiveVector::new(12.5, 7.0));
        assert_eq!(state.run_counter(), 1);
    }

    #[test]
    fn observe_empty_trace_increments_counter_only() {
        let mut state = EngineState::init(&app(1), EngineParams::default()).unwrap();
        state.observe(&ExecutionTrace::empty()).unwrap();
        assert_eq!(state.run_counter(), 1);
        assert!(!state.graph().all_measured());
    }

    #[test]
    fn observe_rejects_bad_token() {
        let mut state = EngineState::init(&app(1), EngineParams::default()).unwrap();
        let trace = ExecutionTrace {
            tokens: vec!["9@L".into()],
            per_method_costs: HashMap::new(),
            edge_costs: vec![ObjectiveVector::ZERO, ObjectiveVector::ZERO],
            total: ObjectiveVector::ZERO,
            degraded: false,
        };
        let err = state.observe(&trace).unwrap_err();
        assert!(matches!(err, Error::TraceMismatch(t) if t == "9@L"));
    }

    #[test]
    fn repeated_identical_traces_leave_weights_fixed() {
        let g = app(2);
        let mut state = EngineState::init(&g, EngineParams::default()).unwrap();
        let k = key();
        // Drive until measured, then snapshot and run again.
        for _ in 0..40 {
            let plan = state.decide(&k).unwrap().plan;
            let trace = toy_executor(&state.graph, &plan);
            state.observe(&trace).unwrap();
        }
        assert!(state.graph().all_measured());
        let snapshot = state.graph.clone();
        for _ in 0..5 {
            let plan = state.decide(&k).unwrap().plan;
            let trace = toy_executor(&state.graph, &plan);
            state.observe(&trace).unwrap();
        }
        assert_eq!(state.graph, snapshot, "EMA fixed point under noiseless executor");
    }

    #[test]
    fn decide_never_offloads_pinned_methods() {
        use crate::callgraph::NodeKind;
        let mut g = app(3);
        g.methods[2].pinned_local = true;
        let mut state = EngineState::init(&g, EngineParams::default()).unwrap();
        let k = key();
        for _ in 0..30 {
            let plan = state.decide(&k).unwrap().plan;
            for &n in &plan.nodes {
                if let NodeKind::Method(dn) = state.graph.node(n) {
                    if dn.method == 2 {
                        assert_eq!(dn.placement, Placement::Local);
                    }
                }
            }
            let trace = toy_executor(&state.graph, &plan);
            state.observe(&trace).unwrap();
        }
    }

    #[test]
    fn measured_decision_cost_is_in_solver_archive() {
        let mut state = EngineState::init(&app(2), EngineParams::default()).unwrap();
        let k = key();
        for _ in 0..30 {
            let plan = state.decide(&k).unwrap().plan;
            let trace = toy_executor(&state.graph, &plan);
            state.observe(&trace).unwrap();
        }
        assert!(state.graph().all_measured());
        // Bypass the cache to force a solver decision.
        let mut params = state.params.clone();
        params.cache.enabled = false;
        let mut fresh = EngineState::from_graph(state.graph.clone(), params).unwrap();
        let d = fresh.decide(&k).unwrap();
        assert_eq!(d.source, DecisionSource::Aco);
        let mut aco_params = fresh.params.aco.clone();
        aco_params.seed = mix_seed(fresh.params.aco.seed, &[1, 0]);
        let archive = aco::solve(fresh.graph(), &aco_params).unwrap();
        assert!(archive.costs().contains(&d.plan.cost));
    }

    #[test]
    fn exploration_measures_all_edges_quickly() {
        // Chain with k offloadable methods: coverage within 2^k + k runs.
        for k in 1..=4u32 {
            let g = app(k as usize);
            let mut state = EngineState::init(&g, EngineParams::default()).unwrap();
            let ck = key();
            let budget = (1u64 << k) + k as u64;
            let mut runs = 0;
            while !state.graph().all_measured() && runs < budget {
                let plan = state.decide(&ck).unwrap().plan;
                let trace = toy_executor(&state.graph, &plan);
                state.observe(&trace).unwrap();
                runs += 1;
            }
            assert!(
                state.graph().all_measured(),
                "k={k}: {} unmeasured after {runs} runs",
                state.graph().unmeasured_count()
            );
        }
    }

    #[test]
    fn run_online_empty_and_solver_budget() {
        let g = app(2);
        let mut state = EngineState::init(&g, EngineParams::default()).unwrap();
        let k = key();
        let report = run_online(&mut state, &k, 0, |_, _| Ok(ExecutionTrace::empty())).unwrap();
        assert!(report.records.is_empty());

        let period = state.params.cache.invalidation_period.unwrap();
        let n = 100u64;
        let graph = state.graph.clone();
        let report = run_online(&mut state, &k, n, |_, plan| {
            // The executor sees the engine's graph only through the plan, so
            // rebuild edge costs from the node sequence.
            Ok(toy_executor(&graph, plan))
        })
        .unwrap();
        assert_eq!(report.records.len(), n as usize);
        let budget = n.div_ceil(period);
        assert!(
            report.solver_invocations <= budget,
            "{} solver calls > budget {budget}",
            report.solver_invocations
        );
        assert!(report.cache_hits > 0);
    }

    #[test]
    fn run_online_records_executor_failures() {
        let g = app(1);
        let mut state = EngineState::init(&g, EngineParams::default()).unwrap();
        let k = key();
        let report = run_online(&mut state, &k, 3, |run, _| {
            if run == 1 {
                Err(Error::Rpc("connection refused".into()))
            } else {
                Ok(ExecutionTrace::empty())
            }
        })
        .unwrap();
        assert_eq!(report.records.len(), 3);
        assert!(report.records[1].error.is_some());
        assert_eq!(state.run_counter(), 3);
    }

    #[test]
    fn report_csv_has_stable_schema() {
        let report = RunReport {
            records: vec![RunRecord {
                run: 0,
                plan: "0@L-1@R".into(),
                time_ms: 12.5,
                cpu_units: 3.0,
                decision_ms: 0.25,
                source: DecisionSource::Aco,
                error: None,
            }],
            solver_invocations: 1,
            cache_hits: 0,
        };
        let csv = report.to_csv_string().unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "run,plan,time_ms,cpu_units,decision_ms,source"
        );
        assert_eq!(lines.next().unwrap(), "0,0@L-1@R,12.5,3,0.25,aco");
    }

    #[test]
    fn context_key_bucketing() {
        let a = ContextKey::new("app", 1000.0, 50_000.0);
        assert_eq!(a.input_bucket, 9);
        assert_eq!(a.network_bucket, 0);
        let b = ContextKey::new("app", 1000.0, 5_000.0);
        assert_eq!(b.network_bucket, 1);
        let c = ContextKey::new("app", 1000.0, 500.0);
        assert_eq!(c.network_bucket, 2);
    }
}
