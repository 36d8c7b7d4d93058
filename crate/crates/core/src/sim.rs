//! Seedable device/server/network cost model and benchmark workload
//! generators. Plays the role of the context-monitoring and profiling
//! services: it is the source of "real" execution costs for the engine.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::callgraph::{
    CallEdge, CallGraph, DualPlacementGraph, MethodId, MethodNode, NodeKind, ObjectiveVector,
    Placement,
};
use crate::engine::ExecutionTrace;
use crate::pareto::PathSolution;
use crate::{Error, Result};

/// Device CPU units charged per transferred byte when marshaling a remote
/// call. Without it the CPU objective would always be zero for remote
/// placements and dominance would degenerate.
pub const MARSHAL_CPU_PER_BYTE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceProfile {
    /// Work units per millisecond.
    pub cpu_speed: f64,
    pub label: String,
}

impl DeviceProfile {
    pub fn device() -> Self {
        DeviceProfile {
            cpu_speed: 1.0,
            label: "device".into(),
        }
    }

    pub fn server() -> Self {
        DeviceProfile {
            cpu_speed: 10.0,
            label: "server".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkProfile {
    /// Bytes per millisecond.
    pub bandwidth: f64,
    /// Charged once per Local<->Remote placement transition.
    pub rtt_ms: f64,
    /// Relative standard deviation of the multiplicative cost noise.
    pub jitter: f64,
}

impl NetworkProfile {
    pub fn good() -> Self {
        NetworkProfile {
            bandwidth: 50_000.0,
            rtt_ms: 20.0,
            jitter: 0.2,
        }
    }

    pub fn medium() -> Self {
        NetworkProfile {
            bandwidth: 5_000.0,
            rtt_ms: 60.0,
            jitter: 0.2,
        }
    }

    pub fn poor() -> Self {
        NetworkProfile {
            bandwidth: 500.0,
            rtt_ms: 200.0,
            jitter: 0.2,
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "good" => Some(Self::good()),
            "medium" => Some(Self::medium()),
            "poor" => Some(Self::poor()),
            _ => None,
        }
    }
}

/// Per-method cost as a function of the workload input size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostModel {
    Constant(f64),
    Linear { base: f64, slope: f64 },
    Power { coeff: f64, exponent: f64 },
}

impl CostModel {
    pub fn eval(&self, input: f64) -> f64 {
        let v = match *self {
            CostModel::Constant(c) => c,
            CostModel::Linear { base, slope } => base + slope * input,
            CostModel::Power { coeff, exponent } => coeff * input.powf(exponent),
        };
        v.max(0.0)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MethodCost {
    pub work: f64,
    pub bytes_in: u64,
    pub bytes_out: u64,
}

/// A benchmark application analog: call-graph topology plus per-method cost
/// models over an input-size parameter.
#[derive(Debug, Clone)]
pub struct Workload {
    pub name: String,
    pub graph: CallGraph,
    pub series: Vec<f64>,
    work_models: HashMap<MethodId, CostModel>,
    bytes_in_models: HashMap<MethodId, CostModel>,
    bytes_out_models: HashMap<MethodId, CostModel>,
}

impl Workload {
    pub fn cost(&self, method: MethodId, input: f64) -> MethodCost {
        MethodCost {
            work: self
                .work_models
                .get(&method)
                .map_or(0.0, |m| m.eval(input)),
            bytes_in: self
                .bytes_in_models
                .get(&method)
                .map_or(0.0, |m| m.eval(input))
                .round() as u64,
            bytes_out: self
                .bytes_out_models
                .get(&method)
                .map_or(0.0, |m| m.eval(input))
                .round() as u64,
        }
    }

    pub fn dual_graph(&self) -> Result<DualPlacementGraph> {
        self.graph.transform()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Benchmark {
    Fib,
    Matmul,
    Det,
    Integrate,
    Montecarlo,
    Facerec,
}

impl Benchmark {
    pub const ALL: [Benchmark; 6] = [
        Benchmark::Fib,
        Benchmark::Matmul,
        Benchmark::Det,
        Benchmark::Integrate,
        Benchmark::Montecarlo,
        Benchmark::Facerec,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Benchmark::Fib => "fib",
            Benchmark::Matmul => "matmul",
            Benchmark::Det => "det",
            Benchmark::Integrate => "integrate",
            Benchmark::Montecarlo => "montecarlo",
            Benchmark::Facerec => "facerec",
        }
    }

    /// Valid input-size range for the generator.
    pub fn size_range(&self) -> (f64, f64) {
        match self {
            Benchmark::Fib => (100.0, 5000.0),
            Benchmark::Matmul => (10.0, 200.0),
            Benchmark::Det => (1.0, 8.0),
            Benchmark::Integrate => (0.5, 5.0),
            Benchmark::Montecarlo => (1.0, 100.0),
            Benchmark::Facerec => (1.0, 10.0),
        }
    }

    /// Default four-input series, smallest to largest.
    pub fn default_series(&self) -> Vec<f64> {
        match self {
            Benchmark::Fib => vec![500.0, 833.0, 1167.0, 1500.0],
            Benchmark::Matmul => vec![50.0, 60.0, 70.0, 80.0],
            Benchmark::Det => vec![2.0, 3.0, 4.0, 5.0],
            Benchmark::Integrate => vec![1.0, 1.67, 2.33, 3.0],
            Benchmark::Montecarlo => vec![10.0, 20.0, 30.0, 40.0],
            Benchmark::Facerec => vec![1.0, 2.0, 3.0, 4.0],
        }
    }
}

impl std::str::FromStr for Benchmark {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Benchmark::ALL
            .iter()
            .copied()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::UnknownBenchmark(s.to_string()))
    }
}

struct MethodSpec {
    name: &'static str,
    pinned: bool,
    work: CostModel,
    bytes_in: CostModel,
    bytes_out: CostModel,
}

fn method(name: &'static str, pinned: bool, work: CostModel) -> MethodSpec {
    MethodSpec {
        name,
        pinned,
        work,
        bytes_in: CostModel::Constant(64.0),
        bytes_out: CostModel::Constant(64.0),
    }
}

/// Builds the benchmark analog for a concrete input size. The graph's baked
/// method costs are evaluated at `size`; the cost models stay attached for
/// simulating other inputs of the same series.
pub fn gen_benchmark(benchmark: Benchmark, size: f64) -> Result<Workload> {
    let (lo, hi) = benchmark.size_range();
    if !(lo..=hi).contains(&size) {
        return Err(Error::Params(format!(
            "{} input size {size} outside supported range [{lo}, {hi}]",
            benchmark.name()
        )));
    }

    // (specs, calls, recursive pair to collapse)
    type Topology = (Vec<MethodSpec>, Vec<(u32, u32)>, Option<(u32, u32)>);
    let (specs, calls, recursion): Topology = match benchmark {
            // Tiny graph, slowly growing arithmetic work: offload gains are
            // real but modest, so jitter decides many runs.
            Benchmark::Fib => (
                vec![
                    method("main", true, CostModel::Constant(2.0)),
                    method(
                        "fib",
                        false,
                        CostModel::Linear {
                            base: 150.0,
                            slope: 0.008,
                        },
                    ),
                ],
                vec![(0, 1)],
                None,
            ),
            // Bigger transfers (matrices travel), marginal gain at small sizes.
            Benchmark::Matmul => (
                vec![
                    method("main", true, CostModel::Constant(2.0)),
                    method(
                        "build",
                        true,
                        CostModel::Linear {
                            base: 20.0,
                            slope: 0.3,
                        },
                    ),
                    MethodSpec {
                        name: "multiply",
                        pinned: false,
                        work: CostModel::Power {
                            coeff: 1.3,
                            exponent: 1.15,
                        },
                        bytes_in: CostModel::Power {
                            coeff: 16.0,
                            exponent: 2.0,
                        },
                        bytes_out: CostModel::Power {
                            coeff: 8.0,
                            exponent: 2.0,
                        },
                    },
                ],
                vec![(0, 1), (1, 2)],
                None,
            ),
            // Mutually recursive det_rec <-> minor collapse into one heavy
            // method with steep growth.
            Benchmark::Det => (
                vec![
                    method("main", true, CostModel::Constant(2.0)),
                    method(
                        "prepare",
                        true,
                        CostModel::Linear {
                            base: 5.0,
                            slope: 1.0,
                        },
                    ),
                    method(
                        "det_rec",
                        false,
                        CostModel::Power {
                            coeff: 20.45,
                            exponent: 3.1,
                        },
                    ),
                    method(
                        "minor",
                        false,
                        CostModel::Power {
                            coeff: 20.45,
                            exponent: 3.1,
                        },
                    ),
                    method(
                        "finish",
                        true,
                        CostModel::Linear {
                            base: 2.0,
                            slope: 0.5,
                        },
                    ),
                ],
                vec![(0, 1), (1, 2), (2, 3), (3, 2), (3, 4)],
                Some((2, 3)),
            ),
            Benchmark::Integrate => (
                vec![
                    method("main", true, CostModel::Constant(2.0)),
                    method(
                        "setup",
                        true,
                        CostModel::Linear {
                            base: 5.0,
                            slope: 2.0,
                        },
                    ),
                    method(
                        "quadrature",
                        false,
                        CostModel::Power {
                            coeff: 400.0,
                            exponent: 2.3,
                        },
                    ),
                    method(
                        "collect",
                        true,
                        CostModel::Linear {
                            base: 3.0,
                            slope: 1.0,
                        },
                    ),
                ],
                vec![(0, 1), (1, 2), (2, 3)],
                None,
            ),
            // Larger service graph: several offloadable stages.
            Benchmark::Montecarlo => (
                vec![
                    method("main", true, CostModel::Constant(1.0)),
                    method(
                        "init",
                        false,
                        CostModel::Linear {
                            base: 1.0,
                            slope: 0.05,
                        },
                    ),
                    method(
                        "simulate",
                        false,
                        CostModel::Linear {
                            base: 0.5,
                            slope: 0.02,
                        },
                    ),
                    method(
                        "sample_a",
                        false,
                        CostModel::Power {
                            coeff: 0.04,
                            exponent: 2.0,
                        },
                    ),
                    method(
                        "sample_b",
                        false,
                        CostModel::Power {
                            coeff: 0.04,
                            exponent: 2.0,
                        },
                    ),
                    method(
                        "sample_c",
                        false,
                        CostModel::Power {
                            coeff: 0.04,
                            exponent: 2.0,
                        },
                    ),
                    method(
                        "aggregate",
                        false,
                        CostModel::Linear {
                            base: 1.0,
                            slope: 0.05,
                        },
                    ),
                    method("report", true, CostModel::Constant(1.0)),
                ],
                vec![(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7)],
                None,
            ),
            // The largest graph of the suite.
            Benchmark::Facerec => (
                vec![
                    method("main", true, CostModel::Constant(1.0)),
                    method(
                        "capture",
                        true,
                        CostModel::Linear {
                            base: 2.0,
                            slope: 0.5,
                        },
                    ),
                    method(
                        "normalize",
                        false,
                        CostModel::Power {
                            coeff: 3.0,
                            exponent: 1.2,
                        },
                    ),
                    method(
                        "histogram",
                        false,
                        CostModel::Linear {
                            base: 4.0,
                            slope: 1.0,
                        },
                    ),
                    method(
                        "project_1",
                        false,
                        CostModel::Power {
                            coeff: 8.0,
                            exponent: 1.5,
                        },
                    ),
                    method(
                        "project_2",
                        false,
                        CostModel::Power {
                            coeff: 8.0,
                            exponent: 1.5,
                        },
                    ),
                    method(
                        "project_3",
                        false,
                        CostModel::Power {
                            coeff: 8.0,
                            exponent: 1.5,
                        },
                    ),
                    method(
                        "project_4",
                        false,
                        CostModel::Power {
                            coeff: 8.0,
                            exponent: 1.5,
                        },
                    ),
                    method(
                        "project_5",
                        false,
                        CostModel::Power {
                            coeff: 8.0,
                            exponent: 1.5,
                        },
                    ),
                    method(
                        "distance",
                        false,
                        CostModel::Linear {
                            base: 6.0,
                            slope: 1.0,
                        },
                    ),
                    method(
                        "rank",
                        false,
                        CostModel::Linear {
                            base: 2.0,
                            slope: 0.5,
                        },
                    ),
                    method("display", true, CostModel::Constant(1.0)),
                ],
                vec![
                    (0, 1),
                    (1, 2),
                    (2, 3),
                    (3, 4),
                    (4, 5),
                    (5, 6),
                    (6, 7),
                    (7, 8),
                    (8, 9),
                    (9, 10),
                    (10, 11),
                ],
                None,
            ),
        };

    let methods: Vec<MethodNode> = specs
        .iter()
        .enumerate()
        .map(|(i, s)| MethodNode {
            id: i as MethodId,
            name: s.name.to_string(),
            work_units: s.work.eval(size),
            bytes_in: s.bytes_in.eval(size).round() as u64,
            bytes_out: s.bytes_out.eval(size).round() as u64,
            pinned_local: s.pinned,
        })
        .collect();
    let exit = (methods.len() - 1) as MethodId;
    let graph = CallGraph {
        methods,
        calls: calls
            .into_iter()
            .map(|(a, b)| CallEdge {
                caller: a,
                callee: b,
            })
            .collect(),
        entry: 0,
        exit,
    };

    let mut work_models = HashMap::new();
    let mut bytes_in_models = HashMap::new();
    let mut bytes_out_models = HashMap::new();
    for (i, s) in specs.iter().enumerate() {
        work_models.insert(i as MethodId, s.work);
        bytes_in_models.insert(i as MethodId, s.bytes_in);
        bytes_out_models.insert(i as MethodId, s.bytes_out);
    }

    let mut graph = graph;
    if let Some((a, b)) = recursion {
        // The recursive pair merges under the smaller id; its cost models add.
        let collapsed = graph.collapsed();
        let keep = a.min(b);
        let drop = a.max(b);
        let merge = |models: &mut HashMap<MethodId, CostModel>| {
            if let (Some(&CostModel::Power { coeff: c1, exponent }), Some(&CostModel::Power { coeff: c2, .. })) =
                (models.get(&keep), models.get(&drop))
            {
                models.insert(
                    keep,
                    CostModel::Power {
                        coeff: c1 + c2,
                        exponent,
                    },
                );
            }
            models.remove(&drop);
        };
        merge(&mut work_models);
        bytes_in_models.remove(&drop);
        bytes_out_models.remove(&drop);
        graph = collapsed;
    }

    Ok(Workload {
        name: benchmark.name().to_string(),
        graph,
        series: benchmark.default_series(),
        work_models,
        bytes_in_models,
        bytes_out_models,
    })
}

fn noise(jitter: f64, rng: &mut impl Rng) -> f64 {
    if jitter <= 0.0 {
        return 1.0;
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal is valid");
    (1.0 + jitter * normal.sample(rng)).max(0.05)
}

/// Executes a placement plan under the cost model and returns the observed
/// trace. Local methods cost work/dev_speed time and `work` CPU; remote
/// methods cost work/srv_speed plus transfer time, and a marshaling CPU
/// charge on the device. RTT is charged once per placement transition.
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    d: &DualPlacementGraph,
    plan: &PathSolution,
    w: &Workload,
    input: f64,
    dev: &DeviceProfile,
    srv: &DeviceProfile,
    net: &NetworkProfile,
    rng: &mut impl Rng,
) -> Result<ExecutionTrace> {
    let mut tokens = Vec::new();
    let mut edge_costs = Vec::new();
    let mut per_method = HashMap::new();
    let mut prev = Placement::Local; // virtual start lives on the device

    for &n in &plan.nodes {
        let dn = match d.node(n) {
            NodeKind::Method(dn) => dn,
            NodeKind::Start | NodeKind::End => continue,
        };
        let cost = w.cost(dn.method, input);
        let bytes = (cost.bytes_in + cost.bytes_out) as f64;
        let (mut time, mut cpu) = match dn.placement {
            Placement::Local => (cost.work / dev.cpu_speed, cost.work),
            Placement::Remote => (
                cost.work / srv.cpu_speed + bytes / net.bandwidth,
                MARSHAL_CPU_PER_BYTE * bytes,
            ),
        };
        let method_cost = ObjectiveVector::new(time * noise(net.jitter, rng), cpu);
        time = method_cost.time_ms;
        cpu = method_cost.cpu_units * noise(net.jitter, rng);
        if dn.placement != prev {
            time += net.rtt_ms * noise(net.jitter, rng);
        }
        tokens.push(
            d.token(n)
                .ok_or_else(|| Error::Graph(format!("node {n} has no token")))?,
        );
        edge_costs.push(ObjectiveVector::new(time, cpu));
        per_method.insert(dn.method, method_cost);
        prev = dn.placement;
    }
    // Returning results to the device is one more transition.
    let end_time = if prev == Placement::Remote {
        net.rtt_ms * noise(net.jitter, rng)
    } else {
        0.0
    };
    edge_costs.push(ObjectiveVector::new(end_time, 0.0));

    let total = edge_costs.iter().copied().sum();
    Ok(ExecutionTrace {
        tokens,
        per_method_costs: per_method,
        edge_costs,
        total,
        degraded: false,
    })
}

/// A run is successful when offloading strictly beat local execution time.
pub fn success(local_trace: &ExecutionTrace, offload_trace: &ExecutionTrace) -> bool {
    offload_trace.total.time_ms < local_trace.total.time_ms
}

/// The path keeping every method at its Local copy.
pub fn all_local_plan(d: &DualPlacementGraph) -> Result<PathSolution> {
    let mut nodes = vec![d.start()];
    let mut current = d.start();
    while current != d.end() {
        let next = d
            .out_edges(current)
            .iter()
            .map(|&e| d.edge(e).to)
            .find(|&n| match d.node(n) {
                NodeKind::Method(dn) => dn.placement == Placement::Local,
                NodeKind::End => true,
                NodeKind::Start => false,
            })
            .ok_or_else(|| Error::Graph("no all-local path".into()))?;
        nodes.push(next);
        current = next;
    }
    let cost = d.path_cost(&nodes)?;
    Ok(PathSolution { nodes, cost })
}

/// The path offloading every offloadable method.
pub fn full_offload_plan(d: &DualPlacementGraph) -> Result<PathSolution> {
    let mut nodes = vec![d.start()];
    let mut current = d.start();
    while current != d.end() {
        let successors: Vec<_> = d.out_edges(current).iter().map(|&e| d.edge(e).to).collect();
        let next = successors
            .iter()
            .copied()
            .find(|&n| matches!(d.node(n), NodeKind::Method(dn) if dn.placement == Placement::Remote))
            .or_else(|| successors.first().copied())
            .ok_or_else(|| Error::Graph("dead end".into()))?;
        nodes.push(next);
        current = next;
    }
    let cost = d.path_cost(&nodes)?;
    Ok(PathSolution { nodes, cost })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn no_jitter(net: &NetworkProfile) -> NetworkProfile {
        NetworkProfile {
            jitter: 0.0,
            ..net.clone()
        }
    }

    fn single_method_workload(work: f64, bytes: u64) -> Workload {
        let graph = CallGraph {
            methods: vec![
                MethodNode {
                    id: 0,
                    name: "main".into(),
                    work_units: 0.0,
                    bytes_in: 0,
                    bytes_out: 0,
                    pinned_local: true,
                },
                MethodNode {
                    id: 1,
                    name: "heavy".into(),
                    work_units: work,
                    bytes_in: bytes,
                    bytes_out: 0,
                    pinned_local: false,
                },
            ],
            calls: vec![CallEdge { caller: 0, callee: 1 }],
            entry: 0,
            exit: 1,
        };
        let mut work_models = HashMap::new();
        work_models.insert(0, CostModel::Constant(0.0));
        work_models.insert(1, CostModel::Constant(work));
        let mut bi = HashMap::new();
        bi.insert(1, CostModel::Constant(bytes as f64));
        Workload {
            name: "single".into(),
            graph,
            series: vec![1.0],
            work_models,
            bytes_in_models: bi,
            bytes_out_models: HashMap::new(),
        }
    }

    #[test]
    fn local_formula() {
        let w = single_method_workload(100.0, 0);
        let d = w.dual_graph().unwrap();
        let plan = all_local_plan(&d).unwrap();
        let net = no_jitter(&NetworkProfile::good());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let trace = simulate(
            &d,
            &plan,
            &w,
            1.0,
            &DeviceProfile::device(),
            &DeviceProfile::server(),
            &net,
            &mut rng,
        )
        .unwrap();
        assert!((trace.total.time_ms - 100.0).abs() < 1e-9);
        assert!((trace.total.cpu_units - 100.0).abs() < 1e-9);
    }

    #[test]
    fn remote_formula_with_infinite_bandwidth_proxy() {
        let w = single_method_workload(100.0, 0);
        let d = w.dual_graph().unwrap();
        let plan = full_offload_plan(&d).unwrap();
        let net = NetworkProfile {
            bandwidth: 1e18,
            rtt_ms: 0.0,
            jitter: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let trace = simulate(
            &d,
            &plan,
            &w,
            1.0,
            &DeviceProfile::device(),
            &DeviceProfile::server(),
            &net,
            &mut rng,
        )
        .unwrap();
        assert!((trace.total.time_ms - 10.0).abs() < 1e-9);
    }

    #[test]
    fn all_local_plan_has_no_network_terms() {
        let w = single_method_workload(40.0, 100_000);
        let d = w.dual_graph().unwrap();
        let plan = all_local_plan(&d).unwrap();
        // Pathological network; must not matter for a local plan.
        let net = NetworkProfile {
            bandwidth: 1e-6,
            rtt_ms: 1e9,
            jitter: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let trace = simulate(
            &d,
            &plan,
            &w,
            1.0,
            &DeviceProfile::device(),
            &DeviceProfile::server(),
            &net,
            &mut rng,
        )
        .unwrap();
        assert!((trace.total.time_ms - 40.0).abs() < 1e-9);
    }

    #[test]
    fn zero_jitter_is_deterministic() {
        let w = gen_benchmark(Benchmark::Montecarlo, 20.0).unwrap();
        let d = w.dual_graph().unwrap();
        let plan = full_offload_plan(&d).unwrap();
        let net = no_jitter(&NetworkProfile::medium());
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            simulate(
                &d,
                &plan,
                &w,
                20.0,
                &DeviceProfile::device(),
                &DeviceProfile::server(),
                &net,
                &mut rng,
            )
            .unwrap()
        };
        assert_eq!(run(1), run(2));
    }

    #[test]
    fn offload_gain_grows_with_work() {
        // jitter = 0: local_time - offload_time non-decreasing in work.
        let net = no_jitter(&NetworkProfile::medium());
        let mut last_gain = f64::NEG_INFINITY;
        for i in 1..=20 {
            let work = 50.0 * i as f64;
            let w = single_method_workload(work, 1000);
            let d = w.dual_graph().unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let local = simulate(
                &d,
                &all_local_plan(&d).unwrap(),
                &w,
                1.0,
                &DeviceProfile::device(),
                &DeviceProfile::server(),
                &net,
                &mut rng,
            )
            .unwrap();
            let remote = simulate(
                &d,
                &full_offload_plan(&d).unwrap(),
                &w,
                1.0,
                &DeviceProfile::device(),
                &DeviceProfile::server(),
                &net,
                &mut rng,
            )
            .unwrap();
            let gain = local.total.time_ms - remote.total.time_ms;
            assert!(gain >= last_gain, "gain dropped at work={work}");
            last_gain = gain;
        }
    }

    #[test]
    fn success_is_strict() {
        let mut a = ExecutionTrace::empty();
        let mut b = ExecutionTrace::empty();
        a.total = ObjectiveVector::new(100.0, 0.0);
        b.total = ObjectiveVector::new(50.0, 0.0);
        assert!(success(&a, &b));
        b.total = ObjectiveVector::new(100.0, 0.0);
        assert!(!success(&a, &b));
    }

    #[test]
    fn generator_topologies() {
        let fib = gen_benchmark(Benchmark::Fib, 1000.0).unwrap();
        assert_eq!(fib.graph.methods.len(), 2);
        assert!(fib.graph.method(0).unwrap().pinned_local);

        assert_eq!(gen_benchmark(Benchmark::Matmul, 50.0).unwrap().graph.methods.len(), 3);
        let det = gen_benchmark(Benchmark::Det, 3.0).unwrap();
        assert_eq!(det.graph.methods.len(), 4, "recursion collapsed");
        assert!(det.graph.methods.iter().any(|m| m.name.contains('+')));
        assert_eq!(gen_benchmark(Benchmark::Integrate, 2.0).unwrap().graph.methods.len(), 4);
        assert_eq!(gen_benchmark(Benchmark::Montecarlo, 10.0).unwrap().graph.methods.len(), 8);
        assert_eq!(gen_benchmark(Benchmark::Facerec, 2.0).unwrap().graph.methods.len(), 12);
    }

    #[test]
    fn det_work_growth_is_superlinear() {
        let det = gen_benchmark(Benchmark::Det, 3.0).unwrap();
        let heavy = det
            .graph
            .methods
            .iter()
            .find(|m| m.name.contains('+'))
            .unwrap()
            .id;
        let at = |s: f64| det.cost(heavy, s).work;
        // Growth exponent 3.1: scaling the input by 5/3 should much more than
        // square the cost ((5/3)^3.1 ~ 4.9).
        assert!(at(5.0) > 4.0 * at(3.0), "det(5)={} det(3)={}", at(5.0), at(3.0));
    }

    #[test]
    fn heavier_workload_gains_more_from_offloading() {
        let net = no_jitter(&NetworkProfile::medium());
        let gain = |work: f64| {
            let w = single_method_workload(work, 1000);
            let d = w.dual_graph().unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let local = simulate(
                &d,
                &all_local_plan(&d).unwrap(),
                &w,
                1.0,
                &DeviceProfile::device(),
                &DeviceProfile::server(),
                &net,
                &mut rng,
            )
            .unwrap();
            let remote = simulate(
                &d,
                &full_offload_plan(&d).unwrap(),
                &w,
                1.0,
                &DeviceProfile::device(),
                &DeviceProfile::server(),
                &net,
                &mut rng,
            )
            .unwrap();
            local.total.time_ms - remote.total.time_ms
        };
        assert!(gain(5000.0) > gain(200.0));
    }

    #[test]
    fn unknown_benchmark_name() {
        assert!(matches!(
            "quicksort".parse::<Benchmark>(),
            Err(Error::UnknownBenchmark(_))
        ));
    }

    #[test]
    fn out_of_range_size_rejected() {
        assert!(gen_benchmark(Benchmark::Det, 50.0).is_err());
    }

    #[test]
    fn fib_under_poor_network_mostly_fails() {
        // Paper regime: simple arithmetic over a poor link rarely pays off.
        let w = gen_benchmark(Benchmark::Fib, 500.0).unwrap();
        let d = w.dual_graph().unwrap();
        let net = NetworkProfile::poor();
        let mut successes = 0;
        for run in 0..25u64 {
            let mut rng_l = ChaCha8Rng::seed_from_u64(1000 + run);
            let mut rng_r = ChaCha8Rng::seed_from_u64(2000 + run);
            let local = simulate(
                &d,
                &all_local_plan(&d).unwrap(),
                &w,
                500.0,
                &DeviceProfile::device(),
                &DeviceProfile::server(),
                &net,
                &mut rng_l,
            )
            .unwrap();
            let remote = simulate(
                &d,
                &full_offload_plan(&d).unwrap(),
                &w,
                500.0,
                &DeviceProfile::device(),
                &DeviceProfile::server(),
                &net,
                &mut rng_r,
            )
            .unwrap();
            if success(&local, &remote) {
                successes += 1;
            }
        }
        assert!(successes < 13, "{successes}/25 succeeded under a poor link");
    }
}
