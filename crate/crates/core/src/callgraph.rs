//! Method-level call graphs and their dual-placement decision graphs.
//!
//! `CallGraph` models an application as methods plus call edges. `transform`
//! turns it into a `DualPlacementGraph`: every offloadable method is split
//! into a Local and a Remote copy, so that a single start→end walk assigns a
//! placement to each executed method. Recursive method groups are collapsed
//! into one node first so the decision graph is always a DAG.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign};
use std::path::Path;

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use crate::pareto::PathSolution;
use crate::{Error, Result};

pub type MethodId = u32;
pub type NodeId = usize;
pub type EdgeId = usize;

/// Default cap on exhaustive path enumeration.
pub const DEFAULT_PATH_BOUND: usize = 1 << 20;

/// A (time, cpu) cost pair. Both components are minimized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveVector {
    pub time_ms: f64,
    pub cpu_units: f64,
}

impl ObjectiveVector {
    pub const ZERO: ObjectiveVector = ObjectiveVector {
        time_ms: 0.0,
        cpu_units: 0.0,
    };

    pub fn new(time_ms: f64, cpu_units: f64) -> Self {
        ObjectiveVector { time_ms, cpu_units }
    }
}

impl Add for ObjectiveVector {
    type Output = ObjectiveVector;
    fn add(self, rhs: ObjectiveVector) -> ObjectiveVector {
        ObjectiveVector::new(self.time_ms + rhs.time_ms, self.cpu_units + rhs.cpu_units)
    }
}

impl AddAssign for ObjectiveVector {
    fn add_assign(&mut self, rhs: ObjectiveVector) {
        self.time_ms += rhs.time_ms;
        self.cpu_units += rhs.cpu_units;
    }
}

impl Sum for ObjectiveVector {
    fn sum<I: Iterator<Item = ObjectiveVector>>(iter: I) -> Self {
        iter.fold(ObjectiveVector::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for ObjectiveVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.time_ms, self.cpu_units)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodNode {
    pub id: MethodId,
    pub name: String,
    /// Abstract compute cost, dimensionless work units.
    #[serde(rename = "work")]
    pub work_units: f64,
    pub bytes_in: u64,
    pub bytes_out: u64,
    /// Must run on the device (UI, sensors, entry point).
    #[serde(rename = "pinned")]
    pub pinned_local: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "(MethodId, MethodId)", into = "(MethodId, MethodId)")]
pub struct CallEdge {
    pub caller: MethodId,
    pub callee: MethodId,
}

impl From<(MethodId, MethodId)> for CallEdge {
    fn from((caller, callee): (MethodId, MethodId)) -> Self {
        CallEdge { caller, callee }
    }
}

impl From<CallEdge> for (MethodId, MethodId) {
    fn from(e: CallEdge) -> Self {
        (e.caller, e.callee)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CallGraph {
    pub methods: Vec<MethodNode>,
    pub calls: Vec<CallEdge>,
    pub entry: MethodId,
    pub exit: MethodId,
}

impl CallGraph {
    pub fn method(&self, id: MethodId) -> Option<&MethodNode> {
        self.methods.iter().find(|m| m.id == id)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for m in &self.methods {
            if !ids.insert(m.id) {
                return Err(Error::Parse(format!("duplicate method id {}", m.id)));
            }
            if !m.work_units.is_finite() || m.work_units < 0.0 {
                return Err(Error::Parse(format!(
                    "method {}: work must be a non-negative finite number",
                    m.id
                )));
            }
        }
        for e in &self.calls {
            if !ids.contains(&e.caller) {
                return Err(Error::Parse(format!("unknown caller {}", e.caller)));
            }
            if !ids.contains(&e.callee) {
                return Err(Error::Parse(format!("unknown callee {}", e.callee)));
            }
            if e.caller == e.callee {
                return Err(Error::Parse(format!(
                    "self-loop call edge on method {}",
                    e.caller
                )));
            }
        }
        if !ids.contains(&self.entry) {
            return Err(Error::Parse(format!("unknown entry {}", self.entry)));
        }
        if !ids.contains(&self.exit) {
            return Err(Error::Parse(format!("unknown exit {}", self.exit)));
        }
        let entry = self.method(self.entry).expect("entry checked above");
        if !entry.pinned_local {
            return Err(Error::Graph(format!(
                "entry method {} must be pinned local",
                self.entry
            )));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<CallGraph> {
        let path = path.as_ref();
        let data = std::fs::read_to_string(path)?;
        let g: CallGraph = serde_json::from_str(&data)
            .map_err(|e| Error::Parse(format!("{}: {}", path.display(), e)))?;
        g.validate()?;
        Ok(g)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let data = serde_json::to_string_pretty(self)?;
        std::fs::write(path, data + "\n")?;
        Ok(())
    }

    /// Merges every strongly-connected component (mutual recursion) into a
    /// single method whose work and transfer sizes aggregate the whole group.
    pub fn collapsed(&self) -> CallGraph {
        let mut pg: DiGraph<MethodId, ()> = DiGraph::new();
        let mut idx = HashMap::new();
        for m in &self.methods {
            idx.insert(m.id, pg.add_node(m.id));
        }
        for e in &self.calls {
            pg.add_edge(idx[&e.caller], idx[&e.callee], ());
        }

        // Representative of each SCC is its smallest member id.
        let mut rep: HashMap<MethodId, MethodId> = HashMap::new();
        let mut groups: HashMap<MethodId, Vec<MethodId>> = HashMap::new();
        for scc in tarjan_scc(&pg) {
            let members: Vec<MethodId> = scc.iter().map(|&n| pg[n]).collect();
            let r = *members.iter().min().expect("scc is non-empty");
            for &m in &members {
                rep.insert(m, r);
            }
            groups.insert(r, members);
        }

        let mut methods = Vec::new();
        let mut emitted = HashSet::new();
        for m in &self.methods {
            let r = rep[&m.id];
            if !emitted.insert(r) {
                continue;
            }
            let mut members: Vec<&MethodNode> = groups[&r]
                .iter()
                .map(|id| self.method(*id).expect("member exists"))
                .collect();
            members.sort_by_key(|m| m.id);
            methods.push(MethodNode {
                id: r,
                name: members
                    .iter()
                    .map(|m| m.name.as_str())
                    .collect::<Vec<_>>()
                    .join("+"),
                work_units: members.iter().map(|m| m.work_units).sum(),
                bytes_in: members.iter().map(|m| m.bytes_in).sum(),
                bytes_out: members.iter().map(|m| m.bytes_out).sum(),
                pinned_local: members.iter().any(|m| m.pinned_local),
            });
        }

        let mut calls = Vec::new();
        let mut seen = HashSet::new();
        for e in &self.calls {
            let (a, b) = (rep[&e.caller], rep[&e.callee]);
            if a != b && seen.insert((a, b)) {
                calls.push(CallEdge {
                    caller: a,
                    callee: b,
                });
            }
        }

        CallGraph {
            methods,
            calls,
            entry: rep[&self.entry],
            exit: rep[&self.exit],
        }
    }

    fn check_acyclic(&self) -> Result<()> {
        let mut pg: DiGraph<MethodId, ()> = DiGraph::new();
        let mut idx = HashMap::new();
        for m in &self.methods {
            idx.insert(m.id, pg.add_node(m.id));
        }
        for e in &self.calls {
            pg.add_edge(idx[&e.caller], idx[&e.callee], ());
        }
        for scc in tarjan_scc(&pg) {
            if scc.len() > 1 {
                let mut cycle: Vec<MethodId> = scc.iter().map(|&n| pg[n]).collect();
                cycle.sort_unstable();
                return Err(Error::Cyclic(cycle));
            }
        }
        Ok(())
    }

    /// Execution order: depth-first preorder from the entry, children in
    /// declared call order. A start→end walk of the dual graph visits every
    /// method of this chain exactly once.
    fn execution_chain(&self) -> Result<Vec<MethodId>> {
        let mut order = Vec::new();
        let mut seen = HashSet::new();
        let mut stack = vec![self.entry];
        while let Some(m) = stack.pop() {
            if !seen.insert(m) {
                continue;
            }
            order.push(m);
            // Push callees in reverse so they pop in declared order.
            for e in self.calls.iter().rev() {
                if e.caller == m && !seen.contains(&e.callee) {
                    stack.push(e.callee);
                }
            }
        }
        if !seen.contains(&self.exit) {
            return Err(Error::Graph(format!(
                "exit method {} is not reachable from entry {}",
                self.exit, self.entry
            )));
        }
        Ok(order)
    }

    /// Builds the dual-placement decision graph. All edge weights start at
    /// zero and unmeasured; pinned methods get only a Local copy.
    pub fn transform(&self) -> Result<DualPlacementGraph> {
        self.validate()?;
        let g = self.collapsed();
        g.check_acyclic()?;
        let chain = g.execution_chain()?;

        let mut d = DualPlacementGraph::new();
        let mut prev: Vec<NodeId> = vec![d.start()];
        for &mid in &chain {
            let m = g.method(mid).expect("chain member exists");
            let mut copies = vec![d.add_method_node(mid, Placement::Local, &m.name)];
            if !m.pinned_local {
                copies.push(d.add_method_node(mid, Placement::Remote, &m.name));
            }
            for &p in &prev {
                for &c in &copies {
                    d.add_edge(p, c);
                }
            }
            prev = copies;
        }
        let end = d.end();
        for &p in &prev {
            d.add_edge(p, end);
        }
        Ok(d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Placement {
    Local,
    Remote,
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Placement::Local => write!(f, "L"),
            Placement::Remote => write!(f, "R"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DualNode {
    pub method: MethodId,
    pub placement: Placement,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeKind {
    Start,
    End,
    Method(DualNode),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualEdge {
    pub from: NodeId,
    pub to: NodeId,
    pub weight: ObjectiveVector,
    pub measured: bool,
}

/// The decision graph: a weighted DAG between a virtual start and end where
/// each admissible (method, placement) pair is one node.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPlacementGraph {
    nodes: Vec<NodeKind>,
    labels: Vec<String>,
    edges: Vec<DualEdge>,
    out: Vec<Vec<EdgeId>>,
    start: NodeId,
    end: NodeId,
}

impl Default for DualPlacementGraph {
    fn default() -> Self {
        Self::new()
    }
}

impl DualPlacementGraph {
    pub fn new() -> Self {
        DualPlacementGraph {
            nodes: vec![NodeKind::Start, NodeKind::End],
            labels: vec!["start".to_string(), "end".to_string()],
            edges: Vec::new(),
            out: vec![Vec::new(), Vec::new()],
            start: 0,
            end: 1,
        }
    }

    pub fn start(&self) -> NodeId {
        self.start
    }

    pub fn end(&self) -> NodeId {
        self.end
    }

    pub fn add_method_node(
        &mut self,
        method: MethodId,
        placement: Placement,
        name: &str,
    ) -> NodeId {
        let id = self.nodes.len();
        self.nodes.push(NodeKind::Method(DualNode { method, placement }));
        self.labels.push(format!("{name}@{placement}"));
        self.out.push(Vec::new());
        id
    }

    pub fn add_edge(&mut self, from: NodeId, to: NodeId) -> EdgeId {
        let id = self.edges.len();
        self.edges.push(DualEdge {
            from,
            to,
            weight: ObjectiveVector::ZERO,
            measured: false,
        });
        self.out[from].push(id);
        id
    }

    pub fn add_weighted_edge(&mut self, from: NodeId, to: NodeId, w: ObjectiveVector) -> EdgeId {
        let id = self.add_edge(from, to);
        self.set_weight(id, w);
        id
    }

    pub fn set_weight(&mut self, edge: EdgeId, w: ObjectiveVector) {
        self.edges[edge].weight = w;
        self.edges[edge].measured = true;
    }

    pub fn node(&self, id: NodeId) -> NodeKind {
        self.nodes[id]
    }

    pub fn label(&self, id: NodeId) -> &str {
        &self.labels[id]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edge(&self, id: EdgeId) -> &DualEdge {
        &self.edges[id]
    }

    pub fn edges(&self) -> &[DualEdge] {
        &self.edges
    }

    pub fn out_edges(&self, node: NodeId) -> &[EdgeId] {
        &self.out[node]
    }

    pub fn all_measured(&self) -> bool {
        self.edges.iter().all(|e| e.measured)
    }

    pub fn unmeasured_count(&self) -> usize {
        self.edges.iter().filter(|e| !e.measured).count()
    }

    pub fn find_edge(&self, from: NodeId, to: NodeId) -> Option<EdgeId> {
        self.out[from].iter().copied().find(|&e| self.edges[e].to == to)
    }

    pub fn method_node(&self, method: MethodId, placement: Placement) -> Option<NodeId> {
        self.nodes.iter().position(|n| {
            matches!(n, NodeKind::Method(d) if d.method == method && d.placement == placement)
        })
    }

    /// Cache/trace token for a node: `"<methodId>@L"` / `"<methodId>@R"`.
    pub fn token(&self, id: NodeId) -> Option<String> {
        match self.nodes[id] {
            NodeKind::Method(d) => Some(format!("{}@{}", d.method, d.placement)),
            _ => None,
        }
    }

    pub fn parse_token(&self, token: &str) -> Option<NodeId> {
        let (id, placement) = token.split_once('@')?;
        let method: MethodId = id.parse().ok()?;
        let placement = match placement {
            "L" => Placement::Local,
            "R" => Placement::Remote,
            _ => return None,
        };
        self.method_node(method, placement)
    }

    /// Tokens for the method nodes of a path (start/end omitted).
    pub fn path_tokens(&self, path: &[NodeId]) -> Vec<String> {
        path.iter().filter_map(|&n| self.token(n)).collect()
    }

    pub fn token_string(&self, path: &[NodeId]) -> String {
        self.path_tokens(path).join("-")
    }

    /// Human-readable path using node labels, including start/end.
    pub fn display_path(&self, path: &[NodeId]) -> String {
        path.iter()
            .map(|&n| self.labels[n].as_str())
            .collect::<Vec<_>>()
            .join("-")
    }

    pub fn remote_count(&self, path: &[NodeId]) -> usize {
        path.iter()
            .filter(|&&n| {
                matches!(self.nodes[n], NodeKind::Method(d) if d.placement == Placement::Remote)
            })
            .count()
    }

    pub fn path_cost(&self, path: &[NodeId]) -> Result<ObjectiveVector> {
        let mut cost = ObjectiveVector::ZERO;
        for pair in path.windows(2) {
            let e = self
                .find_edge(pair[0], pair[1])
                .ok_or_else(|| Error::Graph(format!("no edge {} -> {}", pair[0], pair[1])))?;
            cost += self.edges[e].weight;
        }
        Ok(cost)
    }

    pub fn is_valid_path(&self, path: &[NodeId]) -> bool {
        path.first() == Some(&self.start)
            && path.last() == Some(&self.end)
            && path.windows(2).all(|p| self.find_edge(p[0], p[1]).is_some())
    }

    /// Number of start→end paths, by DAG dynamic programming.
    pub fn count_paths(&self) -> usize {
        let mut memo: HashMap<NodeId, usize> = HashMap::new();
        self.count_from(self.start, &mut memo)
    }

    fn count_from(&self, node: NodeId, memo: &mut HashMap<NodeId, usize>) -> usize {
        if node == self.end {
            return 1;
        }
        if let Some(&c) = memo.get(&node) {
            return c;
        }
        let c = self.out[node]
            .iter()
            .map(|&e| self.count_from(self.edges[e].to, memo))
            .sum();
        memo.insert(node, c);
        c
    }

    /// Every start→end path exactly once, with componentwise-summed cost.
    /// Refuses when the path count exceeds `bound`.
    pub fn enumerate_paths(&self, bound: usize) -> Result<Vec<PathSolution>> {
        if self.count_paths() > bound {
            return Err(Error::PathBound(bound));
        }
        let mut paths = Vec::new();
        let mut current = vec![self.start];
        let mut cost = vec![ObjectiveVector::ZERO];
        self.dfs_paths(&mut current, &mut cost, &mut paths);
        Ok(paths)
    }

    fn dfs_paths(
        &self,
        current: &mut Vec<NodeId>,
        cost: &mut Vec<ObjectiveVector>,
        paths: &mut Vec<PathSolution>,
    ) {
        let node = *current.last().expect("path is non-empty");
        if node == self.end {
            paths.push(PathSolution {
                nodes: current.clone(),
                cost: *cost.last().expect("cost stack is non-empty"),
            });
            return;
        }
        for &e in &self.out[node] {
            let edge = &self.edges[e];
            current.push(edge.to);
            cost.push(*cost.last().expect("cost stack is non-empty") + edge.weight);
            self.dfs_paths(current, cost, paths);
            current.pop();
            cost.pop();
        }
    }
}

// ---------------------------------------------------------------------------
// Weighted dual-graph file format, used by `offloader solve` and fixtures.

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DualFile {
    nodes: Vec<DualFileNode>,
    edges: Vec<DualFileEdge>,
    start: String,
    end: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DualFileNode {
    id: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DualFileEdge {
    from: String,
    to: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cpu: Option<f64>,
}

/// Loads a weighted decision graph from JSON. Edges without both `time` and
/// `cpu` are kept unmeasured. Node ids other than start/end become
/// single-placement method nodes.
pub fn load_dual(path: impl AsRef<Path>) -> Result<DualPlacementGraph> {
    let path = path.as_ref();
    let data = std::fs::read_to_string(path)?;
    let file: DualFile = serde_json::from_str(&data)
        .map_err(|e| Error::Parse(format!("{}: {}", path.display(), e)))?;

    let mut d = DualPlacementGraph::new();
    let mut ids: HashMap<String, NodeId> = HashMap::new();
    let mut next_method: MethodId = 0;
    for n in &file.nodes {
        let node = if n.id == file.start {
            d.start()
        } else if n.id == file.end {
            d.end()
        } else {
            let node = d.add_method_node(next_method, Placement::Local, &n.id);
            // Plain display label, the file's node name is the identity.
            d.labels[node] = n.id.clone();
            next_method += 1;
            node
        };
        if ids.insert(n.id.clone(), node).is_some() {
            return Err(Error::Parse(format!("duplicate node id {:?}", n.id)));
        }
    }
    if !ids.contains_key(&file.start) {
        return Err(Error::Parse(format!("start node {:?} not declared", file.start)));
    }
    if !ids.contains_key(&file.end) {
        return Err(Error::Parse(format!("end node {:?} not declared", file.end)));
    }
    for e in &file.edges {
        let from = *ids
            .get(&e.from)
            .ok_or_else(|| Error::Parse(format!("unknown edge endpoint {:?}", e.from)))?;
        let to = *ids
            .get(&e.to)
            .ok_or_else(|| Error::Parse(format!("unknown edge endpoint {:?}", e.to)))?;
        let edge = d.add_edge(from, to);
        if let (Some(t), Some(c)) = (e.time, e.cpu) {
            d.set_weight(edge, ObjectiveVector::new(t, c));
        }
    }
    Ok(d)
}

/// Serializes a decision graph in the weighted dual-graph JSON format.
pub fn dual_to_string(d: &DualPlacementGraph) -> Result<String> {
    let nodes = (0..d.node_count())
        .map(|n| DualFileNode {
            id: d.label(n).to_string(),
        })
        .collect();
    let edges = d
        .edges()
        .iter()
        .map(|e| DualFileEdge {
            from: d.label(e.from).to_string(),
            to: d.label(e.to).to_string(),
            time: e.measured.then_some(e.weight.time_ms),
            cpu: e.measured.then_some(e.weight.cpu_units),
        })
        .collect();
    let file = DualFile {
        nodes,
        edges,
        start: d.label(d.start()).to_string(),
        end: d.label(d.end()).to_string(),
    };
    Ok(serde_json::to_string_pretty(&file)? + "\n")
}

/// Writes a decision graph in the weighted dual-graph JSON format.
pub fn save_dual(d: &DualPlacementGraph, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, dual_to_string(d)?)?;
    Ok(())
}
