use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cluster::{Demand, InstanceClass};
use crate::credits::ResourceKind;
use crate::ids::{JobId, NodeId, SimTime, TaskId, VertexId};
use crate::scheduler::{Assignment, PassPhase};
pub use crate::telemetry::RateSegment;
use crate::telemetry::{CreditReading, PredictionAudit, UsageIntegral};
use crate::workload::{Annotation, BurstMode, Stage};

/// One line of the JSON event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub time: SimTime,
    #[serde(flatten)]
    pub body: RecordBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum RecordBody {
    JobSubmitted { job: JobId, name: String },
    TasksReleased { job: JobId, vertex: VertexId, stage: Stage, count: u32 },
    SchedulerPass { max_snapshot_age: SimTime, assignments: Vec<Assignment> },
    NodesSorted { basis: BurstMode, order: Vec<NodeId> },
    TelemetryActual { readings: Vec<CreditReading> },
    TelemetryPredicted { readings: Vec<CreditReading> },
    TaskCompleted { task: TaskId, node: NodeId },
    BucketDepleted { node: NodeId, resource: ResourceKind },
    JobCompleted { job: JobId },
    HorizonReached { live_tasks: usize },
    RunFinished { complete: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeInfo {
    pub id: NodeId,
    pub class: InstanceClass,
    pub vcpus: u32,
    pub baseline_fraction: f64,
    pub cpu_capacity: Option<f64>,
    pub disk_capacity: f64,
    pub volume_gb: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub id: TaskId,
    pub stage: Stage,
    pub annotation: Annotation,
    pub demand: Demand,
    pub work: Demand,
    pub released: SimTime,
    pub started: Option<SimTime>,
    pub completed: Option<SimTime>,
    pub node: Option<NodeId>,
    pub phase: Option<PassPhase>,
}

impl TaskRecord {
    pub fn duration(&self) -> Option<SimTime> {
        Some(self.completed? - self.started?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: JobId,
    pub name: String,
    pub task_count: u64,
    pub submitted: Option<SimTime>,
    pub completed: Option<SimTime>,
}

/// Periodic per-node sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeSample {
    pub time: SimTime,
    pub node: NodeId,
    pub cpu_credits: Option<f64>,
    pub disk_credits: f64,
    /// Granted vCPUs over vCPU count.
    pub cpu_util: f64,
    pub granted_iops: f64,
    /// Cumulative CPU credits spent beyond an empty bucket.
    pub surplus_credits: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PassSummary {
    pub time: SimTime,
    pub max_snapshot_age: SimTime,
    pub assigned: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub nodes: Vec<NodeInfo>,
    pub events: Vec<EventRecord>,
    pub tasks: BTreeMap<TaskId, TaskRecord>,
    pub jobs: Vec<JobRecord>,
    pub samples: Vec<NodeSample>,
    /// Per node, piecewise-constant granted rates.
    pub segments: Vec<Vec<RateSegment>>,
    pub usage: Vec<UsageIntegral>,
    /// Per node, CPU credits spent beyond an empty bucket (unlimited mode).
    pub surplus_credits: Vec<f64>,
    pub predictions: Vec<PredictionAudit>,
    pub passes: Vec<PassSummary>,
    /// Number of queue events processed, including internal ones.
    pub events_processed: u64,
    pub end: SimTime,
    pub complete: bool,
}

impl SimTrace {
    pub fn event_log(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("records serialize"));
            out.push('\n');
        }
        out
    }

    /// Hex sha256 of the JSON-lines event log.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.event_log().as_bytes()))
    }

    /// Completion time of every task that finished.
    pub fn completion_times(&self) -> BTreeMap<TaskId, SimTime> {
        self.tasks
            .iter()
            .filter_map(|(id, t)| Some((*id, t.completed?)))
            .collect()
    }

    pub fn first_submission(&self) -> Option<SimTime> {
        self.jobs.iter().filter_map(|j| j.submitted).min()
    }

    /// Wall-clock span from first submission to last completion, or to the
    /// end of the run if any job is unfinished.
    pub fn makespan(&self) -> SimTime {
        let Some(start) = self.first_submission() else {
            return SimTime::ZERO;
        };
        let end = if self.jobs.iter().all(|j| j.completed.is_some()) {
            self.jobs.iter().filter_map(|j| j.completed).max().unwrap_or(start)
        } else {
            self.end
        };
        end - start
    }
}
