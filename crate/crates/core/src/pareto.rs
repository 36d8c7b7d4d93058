//! Dominance relation and non-dominated solution sets.

use crate::callgraph::{DualPlacementGraph, NodeId, ObjectiveVector, DEFAULT_PATH_BOUND};
use crate::Result;

/// A start→end walk of a dual-placement graph with its summed cost.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSolution {
    pub nodes: Vec<NodeId>,
    pub cost: ObjectiveVector,
}

/// True iff `u` is no worse than `v` in both objectives and strictly better
/// in at least one (minimization). Strict comparison, no epsilon.
pub fn dominates(u: ObjectiveVector, v: ObjectiveVector) -> bool {
    u.time_ms <= v.time_ms
        && u.cpu_units <= v.cpu_units
        && (u.time_ms < v.time_ms || u.cpu_units < v.cpu_units)
}

/// A set of mutually non-dominated solutions. Equal-cost distinct paths are
/// both kept; duplicate node sequences are not.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParetoArchive {
    solutions: Vec<PathSolution>,
}

impl ParetoArchive {
    pub fn new() -> Self {
        ParetoArchive::default()
    }

    pub fn solutions(&self) -> &[PathSolution] {
        &self.solutions
    }

    pub fn costs(&self) -> Vec<ObjectiveVector> {
        self.solutions.iter().map(|s| s.cost).collect()
    }

    pub fn len(&self) -> usize {
        self.solutions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.solutions.is_empty()
    }

    /// Incremental insertion: rejects dominated candidates, evicts members the
    /// candidate dominates. Returns whether the candidate was kept.
    pub fn insert(&mut self, candidate: PathSolution) -> bool {
        if self
            .solutions
            .iter()
            .any(|s| dominates(s.cost, candidate.cost))
        {
            return false;
        }
        if self.solutions.iter().any(|s| s.nodes == candidate.nodes) {
            return false;
        }
        self.solutions.retain(|s| !dominates(candidate.cost, s.cost));
        self.solutions.push(candidate);
        true
    }
}

/// Batch non-dominated filtering: keeps exactly the candidates not dominated
/// by any candidate.
pub fn filter(candidates: Vec<PathSolution>) -> ParetoArchive {
    let costs: Vec<ObjectiveVector> = candidates.iter().map(|s| s.cost).collect();
    let solutions = candidates
        .into_iter()
        .enumerate()
        .filter(|(i, s)| !costs.iter().enumerate().any(|(j, &c)| j != *i && dominates(c, s.cost)))
        .map(|(_, s)| s)
        .collect();
    ParetoArchive { solutions }
}

/// Ground-truth front by exhaustive path enumeration. Used as the oracle for
/// the ACO solver on desk-scale graphs.
pub fn pareto_front(d: &DualPlacementGraph) -> Result<ParetoArchive> {
    pareto_front_bounded(d, DEFAULT_PATH_BOUND)
}

pub fn pareto_front_bounded(d: &DualPlacementGraph, bound: usize) -> Result<ParetoArchive> {
    Ok(filter(d.enumerate_paths(bound)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sol(time: f64, cpu: f64) -> PathSolution {
        PathSolution {
            nodes: vec![time as usize * 1000, cpu as usize],
            cost: ObjectiveVector::new(time, cpu),
        }
    }

    #[test]
    fn dominance_paper_examples() {
        assert!(dominates(
            ObjectiveVector::new(4.0, 5.0),
            ObjectiveVector::new(5.0, 5.0)
        ));
        assert!(!dominates(
            ObjectiveVector::new(4.0, 5.0),
            ObjectiveVector::new(4.0, 5.0)
        ));
        assert!(!dominates(
            ObjectiveVector::new(4.0, 5.0),
            ObjectiveVector::new(6.0, 4.0)
        ));
        assert!(!dominates(
            ObjectiveVector::new(6.0, 4.0),
            ObjectiveVector::new(4.0, 5.0)
        ));
    }

    #[test]
    fn filter_paper_example() {
        let archive = filter(vec![sol(5.0, 5.0), sol(4.0, 5.0), sol(6.0, 6.0), sol(6.0, 4.0)]);
        let mut costs = archive.costs();
        costs.sort_by(|a, b| a.time_ms.total_cmp(&b.time_ms));
        assert_eq!(
            costs,
            vec![ObjectiveVector::new(4.0, 5.0), ObjectiveVector::new(6.0, 4.0)]
        );
    }

    #[test]
    fn filter_empty() {
        assert!(filter(vec![]).is_empty());
    }

    #[test]
    fn equal_cost_distinct_paths_both_kept() {
        let mut a = sol(3.0, 3.0);
        let mut b = sol(3.0, 3.0);
        a.nodes = vec![0, 1, 2];
        b.nodes = vec![0, 3, 2];
        assert_eq!(filter(vec![a.clone(), b.clone()]).len(), 2);
        let mut archive = ParetoArchive::new();
        assert!(archive.insert(a.clone()));
        assert!(archive.insert(b));
        assert_eq!(archive.len(), 2);
        // Same node sequence again is a no-op.
        assert!(!archive.insert(a));
        assert_eq!(archive.len(), 2);
    }

    fn vectors() -> impl Strategy<Value = Vec<(f64, f64)>> {
        prop::collection::vec((0.0f64..10.0, 0.0f64..10.0), 0..100)
    }

    proptest! {
        #[test]
        fn dominance_is_antisymmetric(a in (0.0f64..10.0, 0.0f64..10.0), b in (0.0f64..10.0, 0.0f64..10.0)) {
            let u = ObjectiveVector::new(a.0, a.1);
            let v = ObjectiveVector::new(b.0, b.1);
            prop_assert!(!(dominates(u, v) && dominates(v, u)));
        }

        #[test]
        fn dominance_is_transitive(
            a in (0.0f64..10.0, 0.0f64..10.0),
            b in (0.0f64..10.0, 0.0f64..10.0),
            c in (0.0f64..10.0, 0.0f64..10.0),
        ) {
            let u = ObjectiveVector::new(a.0, a.1);
            let v = ObjectiveVector::new(b.0, b.1);
            let w = ObjectiveVector::new(c.0, c.1);
            if dominates(u, v) && dominates(v, w) {
                prop_assert!(dominates(u, w));
            }
        }

        #[test]
        fn filter_matches_pairwise_scan_oracle(vs in vectors()) {
            let candidates: Vec<PathSolution> =
                vs.iter().enumerate().map(|(i, &(t, c))| PathSolution {
                    nodes: vec![i],
                    cost: ObjectiveVector::new(t, c),
                }).collect();

            // Independent O(n^2) pairwise dominance scan.
            let mut expected: Vec<usize> = Vec::new();
            for (i, s) in candidates.iter().enumerate() {
                let mut dominated = false;
                for (j, o) in candidates.iter().enumerate() {
                    if i != j && dominates(o.cost, s.cost) {
                        dominated = true;
                        break;
                    }
                }
                if !dominated {
                    expected.push(i);
                }
            }

            let got: Vec<usize> =
                filter(candidates.clone()).solutions().iter().map(|s| s.nodes[0]).collect();
            prop_assert_eq!(got, expected);
        }

        #[test]
        fn filter_is_idempotent(vs in vectors()) {
            let candidates: Vec<PathSolution> =
                vs.iter().enumerate().map(|(i, &(t, c))| PathSolution {
                    nodes: vec![i],
                    cost: ObjectiveVector::new(t, c),
                }).collect();
            let once = filter(candidates);
            let twice = filter(once.solutions().to_vec());
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn excluded_candidates_have_a_dominating_witness(vs in vectors()) {
            let candidates: Vec<PathSolution> =
                vs.iter().enumerate().map(|(i, &(t, c))| PathSolution {
                    nodes: vec![i],
                    cost: ObjectiveVector::new(t, c),
                }).collect();
            let archive = filter(candidates.clone());
            for s in &candidates {
                let kept = archive.solutions().iter().any(|a| a.nodes == s.nodes);
                if !kept {
                    prop_assert!(archive.solutions().iter().any(|a| dominates(a.cost, s.cost)));
                }
            }
        }

        #[test]
        fn incremental_insert_matches_batch_filter(vs in vectors()) {
            let candidates: Vec<PathSolution> =
                vs.iter().enumerate().map(|(i, &(t, c))| PathSolution {
                    nodes: vec![i],
                    cost: ObjectiveVector::new(t, c),
                }).collect();
            let mut incremental = ParetoArchive::new();
            for s in candidates.clone() {
                incremental.insert(s);
            }
            let batch = filter(candidates);
            let mut a: Vec<usize> = incremental.solutions().iter().map(|s| s.nodes[0]).collect();
            let mut b: Vec<usize> = batch.solutions().iter().map(|s| s.nodes[0]).collect();
            a.sort_unstable();
            b.sort_unstable();
            prop_assert_eq!(a, b);
        }
    }
}
