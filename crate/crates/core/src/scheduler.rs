//! Placement policies over a single pooled task queue.
//!
//! The credit-aware pass runs in three phases against a node ordering that
//! is rebuilt only on the long timescale:
//!
//! 1. Visit nodes from most to fewest credits; give each node as many
//!    burst-annotated tasks as it has free slots before moving on.
//! 2. Starting from the node with the fewest credits, hand out
//!    network-annotated tasks one slot per node per round.
//! 3. Fill whatever slots remain with the remaining tasks in ascending node
//!    id order.
//!
//! A task flagged both burst (for the run's basis) and network is placed
//! in phase 1. A burst flag for the other basis is ignored.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ids::{NodeId, SimTime, TaskId};
use crate::telemetry::CreditSnapshot;
use crate::workload::{Annotation, BurstMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeOrdering {
    pub nodes: Vec<NodeId>,
    pub ordering_time: SimTime,
    pub basis: BurstMode,
}

/// Nodes by descending credit balance on `basis`; ties by ascending id.
pub fn sort_nodes(snapshot: &CreditSnapshot, basis: BurstMode) -> NodeOrdering {
    let mut keyed: Vec<(NodeId, f64)> = snapshot
        .entries
        .iter()
        .map(|(&id, e)| (id, e.credits(basis)))
        .collect();
    keyed.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    NodeOrdering {
        nodes: keyed.into_iter().map(|(id, _)| id).collect(),
        ordering_time: snapshot.time,
        basis,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingTask {
    pub id: TaskId,
    pub annotation: Annotation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PassPhase {
    BurstPhase,
    NetworkPhase,
    ResidualPhase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub task: TaskId,
    pub node: NodeId,
    pub phase: PassPhase,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ScheduleDecision {
    pub assignments: Vec<Assignment>,
}

impl ScheduleDecision {
    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn per_node(&self) -> BTreeMap<NodeId, usize> {
        let mut m = BTreeMap::new();
        for a in &self.assignments {
            *m.entry(a.node).or_default() += 1;
        }
        m
    }

    /// No node over its pass-start free slots and no task placed twice.
    pub fn respects(&self, free_slots: &BTreeMap<NodeId, usize>) -> bool {
        let mut tasks = BTreeSet::new();
        self.assignments.iter().all(|a| tasks.insert(a.task))
            && self
                .per_node()
                .iter()
                .all(|(n, &k)| k <= free_slots.get(n).copied().unwrap_or(0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Cash,
    RandomOrder,
    ArrivalOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselinePolicy {
    RandomOrder,
    ArrivalOrder,
}

/// One credit-aware scheduling pass. Tasks are taken in queue order within
/// each phase.
pub fn cash_schedule_pass(
    queue: &[PendingTask],
    ordering: &NodeOrdering,
    free_slots: &BTreeMap<NodeId, usize>,
) -> ScheduleDecision {
    let basis = ordering.basis;
    let mut free: BTreeMap<NodeId, usize> = free_slots.clone();
    let mut taken = vec![false; queue.len()];
    let mut out = Vec::new();

    let burst: Vec<usize> = (0..queue.len())
        .filter(|&i| queue[i].annotation.has_burst(basis))
        .collect();
    let mut next = burst.into_iter().peekable();
    for &node in &ordering.nodes {
        let slots = free.entry(node).or_default();
        while *slots > 0 {
            let Some(i) = next.next() else { break };
            *slots -= 1;
            taken[i] = true;
            out.push(Assignment {
                task: queue[i].id,
                node,
                phase: PassPhase::BurstPhase,
            });
        }
        if next.peek().is_none() {
            break;
        }
    }

    let network: Vec<usize> = (0..queue.len())
        .filter(|&i| !taken[i] && queue[i].annotation.network)
        .collect();
    let mut network = network.into_iter().peekable();
    'rounds: while network.peek().is_some() {
        let mut placed = false;
        for &node in ordering.nodes.iter().rev() {
            let slots = free.entry(node).or_default();
            if *slots == 0 {
                continue;
            }
            let Some(i) = network.next() else {
                break 'rounds;
            };
            *slots -= 1;
            taken[i] = true;
            placed = true;
            out.push(Assignment {
                task: queue[i].id,
                node,
                phase: PassPhase::NetworkPhase,
            });
        }
        if !placed {
            break;
        }
    }

    let mut rest = (0..queue.len()).filter(|&i| !taken[i]);
    'fill: for (&node, slots) in free.iter_mut() {
        while *slots > 0 {
            let Some(i) = rest.next() else { break 'fill };
            *slots -= 1;
            out.push(Assignment {
                task: queue[i].id,
                node,
                phase: PassPhase::ResidualPhase,
            });
        }
    }
    ScheduleDecision { assignments: out }
}

/// Credit-oblivious pass: tasks in queue order fill nodes in either a
/// freshly shuffled order (one shuffle per pass) or ascending id order.
///
/// The random policy draws from `rng` only when there is something to place.
pub fn baseline_schedule_pass<R: Rng + ?Sized>(
    queue: &[PendingTask],
    free_slots: &BTreeMap<NodeId, usize>,
    policy: BaselinePolicy,
    rng: &mut R,
) -> ScheduleDecision {
    let mut nodes: Vec<NodeId> = free_slots.keys().copied().collect();
    let capacity: usize = free_slots.values().sum();
    if queue.is_empty() || capacity == 0 {
        return ScheduleDecision::default();
    }
    if policy == BaselinePolicy::RandomOrder {
        nodes.shuffle(rng);
    }
    let mut tasks = queue.iter();
    let mut out = Vec::new();
    'fill: for node in nodes {
        for _ in 0..free_slots[&node] {
            let Some(t) = tasks.next() else { break 'fill };
            out.push(Assignment {
                task: t.id,
                node,
                phase: PassPhase::ResidualPhase,
            });
        }
    }
    ScheduleDecision { assignments: out }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::{CreditReading, CreditSnapshot};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn snap(disk: &[f64]) -> CreditSnapshot {
        let readings: Vec<CreditReading> = disk
            .iter()
            .enumerate()
            .map(|(i, &d)| CreditReading {
                node: NodeId(i as u32),
                cpu: Some(d),
                disk: d,
            })
            .collect();
        CreditSnapshot::from_actual(&readings, SimTime::ZERO)
    }

    fn tasks(anns: &[Annotation]) -> Vec<PendingTask> {
        anns.iter()
            .enumerate()
            .map(|(i, &a)| PendingTask {
                id: TaskId::new(0, 0, i as u32),
                annotation: a,
            })
            .collect()
    }

    fn slots(v: &[usize]) -> BTreeMap<NodeId, usize> {
        v.iter().enumerate().map(|(i, &s)| (NodeId(i as u32), s)).collect()
    }

    fn placed_on(d: &ScheduleDecision) -> Vec<u32> {
        d.assignments.iter().map(|a| a.node.0).collect()
    }

    #[test]
    fn sort_examples() {
        let o = sort_nodes(&snap(&[10.0, 0.0, 5.0]), BurstMode::Disk);
        assert_eq!(o.nodes, vec![NodeId(0), NodeId(2), NodeId(1)]);
        let o = sort_nodes(&snap(&[3.0, 3.0, 3.0]), BurstMode::Disk);
        assert_eq!(o.nodes, vec![NodeId(0), NodeId(1), NodeId(2)]);
        let o = sort_nodes(&snap(&[1.0]), BurstMode::Cpu);
        assert_eq!(o.nodes, vec![NodeId(0)]);
    }

    #[test]
    fn phase_one_fills_richest_first() {
        let o = sort_nodes(&snap(&[10.0, 0.0]), BurstMode::Cpu);
        let b = Annotation::burst(BurstMode::Cpu);
        let d = cash_schedule_pass(&tasks(&[b, b]), &o, &slots(&[2, 2]));
        assert_eq!(placed_on(&d), vec![0, 0]);
        let d = cash_schedule_pass(&tasks(&[b, b, b]), &o, &slots(&[2, 2]));
        assert_eq!(placed_on(&d), vec![0, 0, 1]);
        assert!(d.assignments.iter().all(|a| a.phase == PassPhase::BurstPhase));
    }

    #[test]
    fn phase_two_starts_from_poorest_one_per_round() {
        let o = sort_nodes(&snap(&[10.0, 0.0]), BurstMode::Cpu);
        let n = Annotation::network();
        let d = cash_schedule_pass(&tasks(&[n, n]), &o, &slots(&[2, 2]));
        assert_eq!(placed_on(&d), vec![1, 0]);
        let d = cash_schedule_pass(&tasks(&[n, n, n]), &o, &slots(&[2, 2]));
        assert_eq!(placed_on(&d), vec![1, 0, 1]);
    }

    #[test]
    fn residual_and_dual_flags() {
        let o = sort_nodes(&snap(&[0.0, 10.0]), BurstMode::Disk);
        let mut dual = Annotation::burst(BurstMode::Disk);
        dual.network = true;
        let other = Annotation::burst(BurstMode::Cpu);
        let q = tasks(&[Annotation::NONE, dual, other]);
        let d = cash_schedule_pass(&q, &o, &slots(&[1, 1]));
        assert_eq!(d.assignments[0].task, q[1].id);
        assert_eq!(d.assignments[0].node, NodeId(1));
        assert_eq!(d.assignments[0].phase, PassPhase::BurstPhase);
        assert_eq!(d.assignments[1].task, q[0].id);
        assert_eq!(d.assignments[1].phase, PassPhase::ResidualPhase);
        assert_eq!(d.assignments.len(), 2);
    }

    #[test]
    fn empty_queue_empty_decision() {
        let o = sort_nodes(&snap(&[1.0, 2.0]), BurstMode::Cpu);
        assert!(cash_schedule_pass(&[], &o, &slots(&[4, 4])).is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(baseline_schedule_pass(&[], &slots(&[4]), BaselinePolicy::RandomOrder, &mut rng).is_empty());
    }

    #[test]
    fn single_node_baseline_matches_cash() {
        let o = sort_nodes(&snap(&[3.0]), BurstMode::Cpu);
        let b = Annotation::burst(BurstMode::Cpu);
        let q = tasks(&[Annotation::NONE, b, Annotation::network(), b]);
        let cash = cash_schedule_pass(&q, &o, &slots(&[8]));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let base = baseline_schedule_pass(&q, &slots(&[8]), BaselinePolicy::RandomOrder, &mut rng);
        let set = |d: &ScheduleDecision| {
            d.assignments.iter().map(|a| (a.task, a.node)).collect::<BTreeSet<_>>()
        };
        assert_eq!(set(&cash), set(&base));
    }

    #[test]
    fn random_order_is_seeded() {
        let q = tasks(&[Annotation::NONE; 5]);
        let s = slots(&[2, 2, 2, 2]);
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..3)
                .map(|_| baseline_schedule_pass(&q, &s, BaselinePolicy::RandomOrder, &mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(11), run(11));
        let arrival = baseline_schedule_pass(&q, &s, BaselinePolicy::ArrivalOrder, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(placed_on(&arrival), vec![0, 0, 1, 1, 2]);
    }

    #[test]
    fn random_order_may_pick_throttled_node() {
        // node 0 is empty, node 1 full; the baseline ignores credits entirely
        let b = Annotation::burst(BurstMode::Disk);
        let q = tasks(&[b]);
        let s = slots(&[1, 1]);
        let mut hit_empty = false;
        for seed in 0..64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = baseline_schedule_pass(&q, &s, BaselinePolicy::RandomOrder, &mut rng);
            hit_empty |= d.assignments[0].node == NodeId(0);
        }
        assert!(hit_empty);
    }
}
