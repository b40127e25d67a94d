use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::ids::{JobId, NodeId, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    /// A node's granted rates change: a task finishes or a bucket empties.
    /// Stale wakes (old `version`) are dropped.
    RateChange { node: NodeId, version: u64 },
    JobSubmit { job: JobId },
    TasksReady { job: JobId },
    TelemetryActual,
    TelemetryPredict,
    NodeSort,
    MetricsSample,
    SchedulerPass,
    /// Null event; forces an integration boundary and nothing else.
    Probe,
    Horizon,
}

impl EventKind {
    /// Processing rank among events sharing a timestamp.
    fn rank(&self) -> u8 {
        match self {
            EventKind::RateChange { .. } => 0,
            EventKind::JobSubmit { .. } => 1,
            EventKind::TasksReady { .. } => 2,
            EventKind::TelemetryActual => 3,
            EventKind::TelemetryPredict => 4,
            EventKind::NodeSort => 5,
            EventKind::MetricsSample => 6,
            EventKind::SchedulerPass => 7,
            EventKind::Probe => 8,
            EventKind::Horizon => 9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimEvent {
    pub time: SimTime,
    pub seq: u64,
    pub kind: EventKind,
}

/// Min-queue ordered by (time, rank, seq). `seq` is unique, so the order
/// is total.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Reverse<(SimTime, u8, u64, EventKind)>>,
    next_seq: u64,
}

impl EventQueue {
    pub fn push(&mut self, time: SimTime, kind: EventKind) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse((time, kind.rank(), seq, kind)));
        seq
    }

    pub fn pop(&mut self) -> Option<SimEvent> {
        self.heap
            .pop()
            .map(|Reverse((time, _, seq, kind))| SimEvent { time, seq, kind })
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|Reverse((t, ..))| *t)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}
