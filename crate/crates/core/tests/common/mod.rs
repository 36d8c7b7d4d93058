//! Shared helpers for the integration suites: seeded random call graphs and
//! randomly weighted decision graphs.

use offload_aco::{CallGraph, DualPlacementGraph, MethodNode, ObjectiveVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use offload_aco::callgraph::{CallEdge, MethodId};

/// A random call tree with 2..=10 methods. The entry is pinned; other
/// methods are pinned with probability 0.3. Call order is the declaration
/// order, so the execution chain is the preorder walk.
pub fn random_call_graph(seed: u64) -> CallGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=10usize);
    let mut methods = Vec::with_capacity(n);
    let mut calls = Vec::new();
    for i in 0..n {
        methods.push(MethodNode {
            id: i as MethodId,
            name: format!("m{i}"),
            work_units: rng.random_range(1.0..100.0),
            bytes_in: rng.random_range(0..10_000),
            bytes_out: rng.random_range(0..10_000),
            pinned_local: i == 0 || rng.random_bool(0.3),
        });
    }
    for i in 1..n {
        let parent = rng.random_range(0..i) as MethodId;
        calls.push(CallEdge {
            caller: parent,
            callee: i as MethodId,
        });
    }
    // Preorder of the call tree; the last visited method is the exit.
    let mut order = Vec::new();
    let mut stack = vec![0 as MethodId];
    while let Some(m) = stack.pop() {
        order.push(m);
        let children: Vec<MethodId> = calls
            .iter()
            .filter(|c| c.caller == m)
            .map(|c| c.callee)
            .collect();
        for &c in children.iter().rev() {
            stack.push(c);
        }
    }
    let exit = *order.last().expect("graph is non-empty");
    CallGraph {
        methods,
        calls,
        entry: 0,
        exit,
    }
}

/// A random dual-placement graph with every edge measured.
pub fn random_weighted_dual(seed: u64) -> DualPlacementGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x77ed_d0a1);
    let mut d = random_call_graph(seed)
        .transform()
        .expect("random call trees are acyclic");
    for e in 0..d.edge_count() {
        let w = ObjectiveVector::new(rng.random_range(0.1..10.0), rng.random_range(0.1..10.0));
        d.set_weight(e, w);
    }
    d
}
