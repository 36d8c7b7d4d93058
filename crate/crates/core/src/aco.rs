//! Bi-objective ant colony optimization over the dual-placement graph.
//!
//! Two pheromone matrices, one per objective, are blended per ant by a
//! scalarization weight lambda. Transition is ACS-style pseudo-random
//! proportional: exploit the best-scoring edge with probability q0, otherwise
//! sample proportionally. Pheromones evaporate locally on every crossed edge
//! and globally at iteration end, with deposits from the iteration's
//! non-dominated solutions.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::callgraph::{DualPlacementGraph, EdgeId, NodeId, ObjectiveVector};
use crate::pareto::{self, ParetoArchive, PathSolution};
use crate::{Error, Result};

/// Guards divisions by cost components.
pub const COST_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaRule {
    /// Ant i of m uses lambda = i / (m - 1), sweeping the whole front.
    Spread,
    /// All ants use the given fixed preference weight.
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcoParams {
    pub n_ants: usize,
    pub n_iterations: usize,
    /// Pheromone exponent.
    pub alpha: f64,
    /// Heuristic exponent.
    pub beta: f64,
    pub rho_local: f64,
    pub rho_global: f64,
    /// Exploitation probability of the pseudo-random proportional rule.
    pub q0: f64,
    /// Initial pheromone, also the local-update reset target.
    pub tau0: f64,
    pub deposit_q: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    pub seed: u64,
    pub lambda_rule: LambdaRule,
}

impl Default for AcoParams {
    fn default() -> Self {
        AcoParams {
            n_ants: 10,
            n_iterations: 200,
            alpha: 1.0,
            beta: 2.0,
            rho_local: 0.1,
            rho_global: 0.1,
            q0: 0.9,
            tau0: 1.0,
            deposit_q: 1.0,
            tau_min: 0.01,
            tau_max: 10.0,
            seed: 0,
            lambda_rule: LambdaRule::Spread,
        }
    }
}

impl AcoParams {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Params(msg.to_string()))
            }
        };
        check(self.n_ants >= 1, "n_ants must be >= 1")?;
        check(self.n_iterations >= 1, "n_iterations must be >= 1")?;
        check(self.alpha >= 0.0, "alpha must be >= 0")?;
        check(self.beta >= 0.0, "beta must be >= 0")?;
        check(
            self.rho_local > 0.0 && self.rho_local < 1.0,
            "rho_local must be in (0,1)",
        )?;
        check(
            self.rho_global > 0.0 && self.rho_global < 1.0,
            "rho_global must be in (0,1)",
        )?;
        check(
            (0.0..=1.0).contains(&self.q0),
            "q0 must be in [0,1]",
        )?;
        check(self.tau_min > 0.0, "tau_min must be > 0")?;
        check(
            self.tau_min <= self.tau0 && self.tau0 <= self.tau_max,
            "tau_min <= tau0 <= tau_max required",
        )?;
        check(self.deposit_q > 0.0, "deposit_q must be > 0")?;
        if let LambdaRule::Fixed(l) = self.lambda_rule {
            check((0.0..=1.0).contains(&l), "fixed lambda must be in [0,1]")?;
        }
        Ok(())
    }
}

/// One pheromone value per edge and objective, clamped to [tau_min, tau_max].
#[derive(Debug, Clone)]
pub struct PheromonePair {
    pub tau_time: Vec<f64>,
    pub tau_cpu: Vec<f64>,
}

impl PheromonePair {
    pub fn new(n_edges: usize, tau0: f64) -> Self {
        PheromonePair {
            tau_time: vec![tau0; n_edges],
            tau_cpu: vec![tau0; n_edges],
        }
    }
}

#[derive(Debug, Clone)]
pub struct AntState {
    pub current: NodeId,
    pub visited: Vec<NodeId>,
    pub accrued: ObjectiveVector,
    pub lambda: f64,
}

impl AntState {
    pub fn at_start(d: &DualPlacementGraph, lambda: f64) -> Self {
        AntState {
            current: d.start(),
            visited: vec![d.start()],
            accrued: ObjectiveVector::ZERO,
            lambda,
        }
    }
}

fn edge_score(
    edge: EdgeId,
    lambda: f64,
    d: &DualPlacementGraph,
    ph: &PheromonePair,
    p: &AcoParams,
) -> f64 {
    let tau = lambda * ph.tau_time[edge] + (1.0 - lambda) * ph.tau_cpu[edge];
    let w = d.edge(edge).weight;
    let blended = lambda * w.time_ms + (1.0 - lambda) * w.cpu_units;
    let eta = 1.0 / (blended + COST_EPSILON);
    tau.powf(p.alpha) * eta.powf(p.beta)
}

/// Pseudo-random proportional transition rule. Returns the chosen outgoing
/// edge; ties in exploitation break toward the lowest edge id.
pub fn select_next(
    ant: &AntState,
    d: &DualPlacementGraph,
    ph: &PheromonePair,
    p: &AcoParams,
    rng: &mut impl Rng,
) -> Result<EdgeId> {
    let candidates = d.out_edges(ant.current);
    if candidates.is_empty() {
        return Err(Error::DeadEnd(ant.current));
    }
    if candidates.len() == 1 {
        return Ok(candidates[0]);
    }
    let scores: Vec<f64> = candidates
        .iter()
        .map(|&e| edge_score(e, ant.lambda, d, ph, p))
        .collect();

    if rng.random::<f64>() < p.q0 {
        let mut best = 0;
        for (i, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = i;
            }
        }
        return Ok(candidates[best]);
    }

    let total: f64 = scores.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Ok(candidates[rng.random_range(0..candidates.len())]);
    }
    let mut pick = rng.random::<f64>() * total;
    for (i, &s) in scores.iter().enumerate() {
        pick -= s;
        if pick <= 0.0 {
            return Ok(candidates[i]);
        }
    }
    Ok(*candidates.last().expect("candidates are non-empty"))
}

/// Per-step evaporation toward tau0 on a crossed edge, both matrices.
pub fn local_update(ph: &mut PheromonePair, edge: EdgeId, p: &AcoParams) {
    for tau in [&mut ph.tau_time, &mut ph.tau_cpu] {
        tau[edge] = ((1.0 - p.rho_local) * tau[edge] + p.rho_local * p.tau0)
            .clamp(p.tau_min, p.tau_max);
    }
}

/// End-of-iteration update: global evaporation everywhere, then deposits on
/// the edges of each archive solution, per objective.
pub fn global_update(
    ph: &mut PheromonePair,
    archive: &ParetoArchive,
    d: &DualPlacementGraph,
    p: &AcoParams,
) {
    for tau in [&mut ph.tau_time, &mut ph.tau_cpu] {
        for t in tau.iter_mut() {
            *t *= 1.0 - p.rho_global;
        }
    }
    for s in archive.solutions() {
        let dt = p.deposit_q / (s.cost.time_ms + COST_EPSILON);
        let dc = p.deposit_q / (s.cost.cpu_units + COST_EPSILON);
        for pair in s.nodes.windows(2) {
            if let Some(e) = d.find_edge(pair[0], pair[1]) {
                ph.tau_time[e] += dt;
                ph.tau_cpu[e] += dc;
            }
        }
    }
    for tau in [&mut ph.tau_time, &mut ph.tau_cpu] {
        for t in tau.iter_mut() {
            *t = t.clamp(p.tau_min, p.tau_max);
        }
    }
}

fn lambda_for(rule: LambdaRule, ant: usize, n_ants: usize) -> f64 {
    match rule {
        LambdaRule::Fixed(l) => l,
        LambdaRule::Spread => {
            if n_ants > 1 {
                ant as f64 / (n_ants - 1) as f64
            } else {
                0.5
            }
        }
    }
}

fn construct_path(
    d: &DualPlacementGraph,
    ph: &mut PheromonePair,
    p: &AcoParams,
    lambda: f64,
    scout: bool,
    rng: &mut impl Rng,
) -> Result<PathSolution> {
    let mut ant = AntState::at_start(d, lambda);
    while ant.current != d.end() {
        let e = if scout {
            // Scouts ignore pheromone and heuristic entirely; they exist to
            // keep challenging the archive with paths the colony has
            // converged away from.
            let candidates = d.out_edges(ant.current);
            if candidates.is_empty() {
                return Err(Error::DeadEnd(ant.current));
            }
            candidates[rng.random_range(0..candidates.len())]
        } else {
            select_next(&ant, d, ph, p, rng)?
        };
        local_update(ph, e, p);
        let edge = d.edge(e);
        ant.accrued += edge.weight;
        ant.current = edge.to;
        ant.visited.push(edge.to);
    }
    Ok(PathSolution {
        nodes: ant.visited,
        cost: ant.accrued,
    })
}

/// Runs the colony and returns the cross-iteration non-dominated archive.
/// Deterministic for a fixed seed; requires all edge weights measured.
pub fn solve(d: &DualPlacementGraph, p: &AcoParams) -> Result<ParetoArchive> {
    p.validate()?;
    if !d.all_measured() {
        return Err(Error::Unmeasured);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut ph = PheromonePair::new(d.edge_count(), p.tau0);
    let mut archive = ParetoArchive::new();

    for _iteration in 0..p.n_iterations {
        let mut solutions = Vec::with_capacity(p.n_ants);
        for ant in 0..p.n_ants {
            let lambda = lambda_for(p.lambda_rule, ant, p.n_ants);
            // One scout per iteration when the colony is large enough to
            // spare an ant; see construct_path.
            let scout = ant == 0 && p.n_ants > 1;
            solutions.push(construct_path(d, &mut ph, p, lambda, scout, &mut rng)?);
        }
        let iter_front = pareto::filter(solutions);
        global_update(&mut ph, &iter_front, d, p);
        for s in iter_front.solutions() {
            archive.insert(s.clone());
        }
    }
    log::debug!(
        "aco solve: {} iterations x {} ants, archive size {}",
        p.n_iterations,
        p.n_ants,
        archive.len()
    );
    Ok(archive)
}
