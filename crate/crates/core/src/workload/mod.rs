//! Jobs as DAGs of vertices, task annotation, dependency-driven release and
//! the task progress law.

mod presets;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{Demand, Resource};
use crate::ids::{JobId, SimTime, TaskId, VertexId};

pub use presets::{generate_workload, WorkloadPreset};

/// Default completed fraction of a map-like vertex at which a shuffle
/// vertex fed by it may start.
pub const DEFAULT_SLOWSTART: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorkloadError {
    #[error("job {job}: cycle through vertex {vertex}")]
    Cyclic { job: String, vertex: VertexId },
    #[error("job {job}: vertex {vertex} references unknown upstream {upstream}")]
    UnknownUpstream {
        job: String,
        vertex: VertexId,
        upstream: VertexId,
    },
    #[error("job {job}: duplicate vertex id {vertex}")]
    DuplicateVertex { job: String, vertex: VertexId },
    #[error("job {job}: root_input vertex {vertex} has upstream edges")]
    RootWithUpstream { job: String, vertex: VertexId },
    #[error("job {job}: vertex {vertex}: {reason}")]
    InvalidVertex {
        job: String,
        vertex: VertexId,
        reason: String,
    },
    #[error("unknown workload preset {0:?}")]
    UnknownPreset(String),
    #[error("scale must be > 0, got {0}")]
    InvalidScale(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VertexKind {
    /// Map-like source vertex reading job input.
    RootInput,
    /// Reduce-like vertex consuming shuffled output.
    Shuffle,
    Generic,
}

/// Phase a task's elapsed time is accounted to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Map,
    Shuffle,
    Reduce,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Map, Stage::Shuffle, Stage::Reduce];

    pub fn of(kind: VertexKind) -> Stage {
        match kind {
            VertexKind::RootInput => Stage::Map,
            VertexKind::Shuffle => Stage::Shuffle,
            VertexKind::Generic => Stage::Reduce,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Map => "map",
            Stage::Shuffle => "shuffle",
            Stage::Reduce => "reduce",
        })
    }
}

/// Which credit-governed resource a run bursts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BurstMode {
    Cpu,
    Disk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationFlag {
    BurstCpu,
    BurstDisk,
    Network,
}

/// Set of annotation flags; serialized as a list such as `["burst_cpu", "network"]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(from = "Vec<AnnotationFlag>", into = "Vec<AnnotationFlag>")]
pub struct Annotation {
    pub burst_cpu: bool,
    pub burst_disk: bool,
    pub network: bool,
}

impl Annotation {
    pub const NONE: Annotation = Annotation {
        burst_cpu: false,
        burst_disk: false,
        network: false,
    };

    pub fn burst(mode: BurstMode) -> Self {
        let mut a = Self::NONE;
        a.set_burst(mode);
        a
    }

    pub fn network() -> Self {
        Annotation {
            network: true,
            ..Self::NONE
        }
    }

    pub fn set_burst(&mut self, mode: BurstMode) {
        match mode {
            BurstMode::Cpu => self.burst_cpu = true,
            BurstMode::Disk => self.burst_disk = true,
        }
    }

    pub fn has_burst(&self, mode: BurstMode) -> bool {
        match mode {
            BurstMode::Cpu => self.burst_cpu,
            BurstMode::Disk => self.burst_disk,
        }
    }

    pub fn is_empty(&self) -> bool {
        !(self.burst_cpu || self.burst_disk || self.network)
    }
}

impl From<Vec<AnnotationFlag>> for Annotation {
    fn from(flags: Vec<AnnotationFlag>) -> Self {
        let mut a = Annotation::NONE;
        for f in flags {
            match f {
                AnnotationFlag::BurstCpu => a.burst_cpu = true,
                AnnotationFlag::BurstDisk => a.burst_disk = true,
                AnnotationFlag::Network => a.network = true,
            }
        }
        a
    }
}

impl From<Annotation> for Vec<AnnotationFlag> {
    fn from(a: Annotation) -> Self {
        let mut v = Vec::new();
        if a.burst_cpu {
            v.push(AnnotationFlag::BurstCpu);
        }
        if a.burst_disk {
            v.push(AnnotationFlag::BurstDisk);
        }
        if a.network {
            v.push(AnnotationFlag::Network);
        }
        v
    }
}

impl fmt::Display for Annotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let flags: Vec<AnnotationFlag> = (*self).into();
        if flags.is_empty() {
            return f.write_str("none");
        }
        let names: Vec<&str> = flags
            .iter()
            .map(|f| match f {
                AnnotationFlag::BurstCpu => "burst_cpu",
                AnnotationFlag::BurstDisk => "burst_disk",
                AnnotationFlag::Network => "network",
            })
            .collect();
        f.write_str(&names.join("+"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DagVertex {
    pub id: VertexId,
    #[serde(default)]
    pub name: String,
    pub kind: VertexKind,
    #[serde(default)]
    pub annotation: Annotation,
    pub task_count: u32,
    /// Per-task demand rates (vCPUs, IOPS, network units/s).
    pub per_task_demand: Demand,
    /// Per-task work volumes (vCPU-seconds, I/O operations, network units).
    pub per_task_work: Demand,
    /// Optional per-task multipliers on `per_task_work`, one per task.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub work_scale: Vec<f64>,
    #[serde(default)]
    pub upstream: Vec<VertexId>,
}

impl DagVertex {
    pub fn task_work(&self, index: u32) -> Demand {
        let k = self.work_scale.get(index as usize).copied().unwrap_or(1.0);
        self.per_task_work * k
    }

    pub fn stage(&self) -> Stage {
        Stage::of(self.kind)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dag {
    pub vertices: Vec<DagVertex>,
}

impl Dag {
    pub fn vertex(&self, id: VertexId) -> Option<&DagVertex> {
        self.vertices.iter().find(|v| v.id == id)
    }

    pub fn task_count(&self) -> u64 {
        self.vertices.iter().map(|v| u64::from(v.task_count)).sum()
    }

    /// Checks ids, edges, root-vertex and acyclicity invariants.
    pub fn validate(&self, job: &str) -> Result<(), WorkloadError> {
        let mut ids = BTreeSet::new();
        for v in &self.vertices {
            if !ids.insert(v.id) {
                return Err(WorkloadError::DuplicateVertex {
                    job: job.into(),
                    vertex: v.id,
                });
            }
        }
        for v in &self.vertices {
            let invalid = |reason: &str| WorkloadError::InvalidVertex {
                job: job.into(),
                vertex: v.id,
                reason: reason.into(),
            };
            if v.task_count == 0 {
                return Err(invalid("task_count must be >= 1"));
            }
            if !v.per_task_demand.is_non_negative() || !v.per_task_work.is_non_negative() {
                return Err(invalid("demand and work must be finite and >= 0"));
            }
            if !v.work_scale.is_empty() && v.work_scale.len() != v.task_count as usize {
                return Err(invalid("work_scale must have one entry per task"));
            }
            if v.work_scale.iter().any(|k| !(*k >= 0.0) || !k.is_finite()) {
                return Err(invalid("work_scale entries must be finite and >= 0"));
            }
            if v.kind == VertexKind::RootInput && !v.upstream.is_empty() {
                return Err(WorkloadError::RootWithUpstream {
                    job: job.into(),
                    vertex: v.id,
                });
            }
            for u in &v.upstream {
                if !ids.contains(u) {
                    return Err(WorkloadError::UnknownUpstream {
                        job: job.into(),
                        vertex: v.id,
                        upstream: *u,
                    });
                }
            }
        }
        self.topological_order(job).map(|_| ())
    }

    /// Kahn's algorithm; ties resolved by ascending vertex id.
    pub fn topological_order(&self, job: &str) -> Result<Vec<VertexId>, WorkloadError> {
        let mut indegree: BTreeMap<VertexId, usize> =
            self.vertices.iter().map(|v| (v.id, v.upstream.len())).collect();
        let mut ready: BTreeSet<VertexId> = indegree
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(&id, _)| id)
            .collect();
        let mut order = Vec::with_capacity(self.vertices.len());
        while let Some(id) = ready.pop_first() {
            order.push(id);
            for v in &self.vertices {
                let hits = v.upstream.iter().filter(|&&u| u == id).count();
                if hits > 0 {
                    let d = indegree.get_mut(&v.id).expect("known vertex");
                    *d -= hits;
                    if *d == 0 {
                        ready.insert(v.id);
                    }
                }
            }
        }
        if order.len() != self.vertices.len() {
            let stuck = indegree
                .iter()
                .find(|(_, &d)| d > 0)
                .map(|(&id, _)| id)
                .unwrap_or(VertexId(0));
            return Err(WorkloadError::Cyclic {
                job: job.into(),
                vertex: stuck,
            });
        }
        Ok(order)
    }
}

/// Attach burst annotations to map-like vertices and network annotations to
/// shuffle vertices. Generic vertices keep whatever the user put on them.
pub fn annotate_dag(dag: &Dag, mode: BurstMode) -> Result<Dag, WorkloadError> {
    dag.topological_order("annotate")?;
    let mut out = dag.clone();
    for v in &mut out.vertices {
        match v.kind {
            VertexKind::RootInput => v.annotation.set_burst(mode),
            VertexKind::Shuffle => v.annotation.network = true,
            VertexKind::Generic => {}
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: JobId,
    pub name: String,
    /// Earliest submission time in seconds.
    pub submit_time: f64,
    pub dag: Dag,
}

impl Job {
    /// Task-weighted mean CPU demand of the job (vCPUs per task).
    pub fn cpu_intensity(&self) -> f64 {
        let tasks = self.dag.task_count() as f64;
        if tasks == 0.0 {
            return 0.0;
        }
        self.dag
            .vertices
            .iter()
            .map(|v| f64::from(v.task_count) * v.per_task_demand.cpu)
            .sum::<f64>()
            / tasks
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderingPolicy {
    #[default]
    AsGiven,
    CpuIntensiveFirst,
    CpuIntensiveLast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobStream {
    pub jobs: Vec<Job>,
    /// When set, each job is submitted only after the previous one completes.
    pub sequential: bool,
    pub ordering: OrderingPolicy,
}

impl JobStream {
    pub fn new(jobs: Vec<Job>, sequential: bool) -> Self {
        Self {
            jobs,
            sequential,
            ordering: OrderingPolicy::AsGiven,
        }
    }

    /// Reorders jobs per `policy` (stable in CPU intensity), renumbers job ids
    /// in submission order and redistributes the original submit times so
    /// they remain non-decreasing.
    pub fn ordered(mut self, policy: OrderingPolicy) -> Self {
        let mut times: Vec<f64> = self.jobs.iter().map(|j| j.submit_time).collect();
        times.sort_by(f64::total_cmp);
        match policy {
            OrderingPolicy::AsGiven => {}
            OrderingPolicy::CpuIntensiveFirst => self
                .jobs
                .sort_by(|a, b| b.cpu_intensity().total_cmp(&a.cpu_intensity())),
            OrderingPolicy::CpuIntensiveLast => self
                .jobs
                .sort_by(|a, b| a.cpu_intensity().total_cmp(&b.cpu_intensity())),
        }
        for (i, (job, t)) in self.jobs.iter_mut().zip(times).enumerate() {
            job.id = JobId(i as u32);
            job.submit_time = t;
        }
        self.ordering = policy;
        self
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        for j in &self.jobs {
            j.dag.validate(&j.name)?;
        }
        Ok(())
    }

    pub fn task_count(&self) -> u64 {
        self.jobs.iter().map(|j| j.dag.task_count()).sum()
    }
}

/// A releasable unit of work.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: TaskId,
    pub stage: Stage,
    pub annotation: Annotation,
    pub demand: Demand,
    pub work: Demand,
    pub submit_time: SimTime,
}

impl TaskSpec {
    /// Resource whose work takes longest at full demand; it alone decides
    /// completion. Ties go to the first of cpu, disk, network.
    pub fn dominant(&self) -> Option<Resource> {
        dominant_resource(self.demand, self.work)
    }
}

pub fn dominant_resource(demand: Demand, work: Demand) -> Option<Resource> {
    let mut best: Option<(Resource, f64)> = None;
    for r in Resource::ALL {
        let (d, w) = (demand.get(r), work.get(r));
        if d > 0.0 && w > 0.0 {
            let dur = w / d;
            if best.is_none_or(|(_, b)| dur > b) {
                best = Some((r, dur));
            }
        }
    }
    best.map(|(r, _)| r)
}

/// Per-job release bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct DagProgress {
    job: JobId,
    completed: BTreeMap<VertexId, u32>,
    released: BTreeSet<VertexId>,
    slowstart: f64,
}

impl DagProgress {
    pub fn new(job: &Job, slowstart: f64) -> Self {
        Self {
            job: job.id,
            completed: job.dag.vertices.iter().map(|v| (v.id, 0)).collect(),
            released: BTreeSet::new(),
            slowstart,
        }
    }

    pub fn completed_fraction(&self, dag: &Dag, vertex: VertexId) -> f64 {
        let done = self.completed.get(&vertex).copied().unwrap_or(0);
        dag.vertex(vertex)
            .map(|v| f64::from(done) / f64::from(v.task_count))
            .unwrap_or(0.0)
    }

    pub fn record_completion(&mut self, vertex: VertexId) {
        *self.completed.entry(vertex).or_default() += 1;
    }

    pub fn is_released(&self, vertex: VertexId) -> bool {
        self.released.contains(&vertex)
    }

    pub fn is_complete(&self, dag: &Dag) -> bool {
        dag.vertices
            .iter()
            .all(|v| self.completed.get(&v.id).copied().unwrap_or(0) >= v.task_count)
    }

    /// Completed fraction an upstream vertex needs before `consumer` may start.
    fn threshold(&self, consumer: &DagVertex, upstream: &DagVertex) -> f64 {
        if consumer.kind == VertexKind::Shuffle && upstream.kind == VertexKind::RootInput {
            self.slowstart
        } else {
            1.0
        }
    }

    /// Tasks of every not-yet-released vertex whose upstreams have progressed
    /// far enough, in (vertex id, task index) order. Each vertex is released at
    /// most once.
    pub fn ready_tasks(&mut self, job: &Job, now: SimTime) -> Vec<TaskSpec> {
        let mut out = Vec::new();
        let mut vertices: Vec<&DagVertex> = job.dag.vertices.iter().collect();
        vertices.sort_by_key(|v| v.id);
        for v in vertices {
            if self.released.contains(&v.id) {
                continue;
            }
            let ready = v.upstream.iter().all(|&u| {
                let up = job.dag.vertex(u).expect("validated dag");
                let done = f64::from(self.completed.get(&u).copied().unwrap_or(0));
                done >= self.threshold(v, up) * f64::from(up.task_count) - 1e-9
            });
            if !ready {
                continue;
            }
            self.released.insert(v.id);
            for index in 0..v.task_count {
                out.push(TaskSpec {
                    id: TaskId {
                        job: self.job,
                        vertex: v.id,
                        index,
                    },
                    stage: v.stage(),
                    annotation: v.annotation,
                    demand: v.per_task_demand,
                    work: v.task_work(index),
                    submit_time: now,
                });
            }
        }
        out
    }
}

/// Remaining work of a running task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskProgress {
    pub remaining: Demand,
    pub dominant: Option<Resource>,
}

impl TaskProgress {
    pub fn new(task: &TaskSpec) -> Self {
        Self {
            remaining: task.work,
            dominant: task.dominant(),
        }
    }

    /// Deplete each resource's remaining work by `granted * dt`.
    pub fn advance(&mut self, granted: Demand, dt: f64) {
        for r in Resource::ALL {
            let rem = self.remaining.get_mut(r);
            *rem = (*rem - granted.get(r) * dt).max(0.0);
        }
    }

    pub fn dominant_remaining(&self) -> f64 {
        self.dominant.map(|r| self.remaining.get(r)).unwrap_or(0.0)
    }

    /// Seconds to finish at the given granted rates; infinite with no service.
    pub fn time_to_complete(&self, granted: Demand) -> f64 {
        match self.dominant {
            None => 0.0,
            Some(r) => {
                let rem = self.remaining.get(r);
                if rem <= 0.0 {
                    0.0
                } else if granted.get(r) > 0.0 {
                    rem / granted.get(r)
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    pub fn is_complete(&self) -> bool {
        self.dominant_remaining() <= 0.0
    }
}

/// Apply one step of the progress law to a task, returning the new state.
pub fn task_progress(progress: TaskProgress, granted: Demand, dt: f64) -> TaskProgress {
    let mut p = progress;
    p.advance(granted, dt);
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn vertex(id: u32, kind: VertexKind, tasks: u32, upstream: &[u32]) -> DagVertex {
        DagVertex {
            id: VertexId(id),
            name: format!("v{id}"),
            kind,
            annotation: Annotation::NONE,
            task_count: tasks,
            per_task_demand: Demand::new(1.0, 0.0, 0.0),
            per_task_work: Demand::new(10.0, 0.0, 0.0),
            work_scale: vec![],
            upstream: upstream.iter().map(|&u| VertexId(u)).collect(),
        }
    }

    fn job(vertices: Vec<DagVertex>) -> Job {
        Job {
            id: JobId(0),
            name: "j".into(),
            submit_time: 0.0,
            dag: Dag { vertices },
        }
    }

    #[test]
    fn annotate_map_reduce_disk() {
        let dag = Dag {
            vertices: vec![
                vertex(0, VertexKind::RootInput, 2, &[]),
                vertex(1, VertexKind::Shuffle, 1, &[0]),
            ],
        };
        let out = annotate_dag(&dag, BurstMode::Disk).unwrap();
        assert_eq!(out.vertices[0].annotation, Annotation::burst(BurstMode::Disk));
        assert_eq!(out.vertices[1].annotation, Annotation::network());
    }

    #[test]
    fn annotate_without_shuffle_adds_no_network() {
        let dag = Dag {
            vertices: vec![
                vertex(0, VertexKind::RootInput, 2, &[]),
                vertex(1, VertexKind::Generic, 1, &[0]),
            ],
        };
        let out = annotate_dag(&dag, BurstMode::Cpu).unwrap();
        assert!(out.vertices.iter().all(|v| !v.annotation.network));
    }

    #[test]
    fn annotate_preserves_user_flags_and_is_idempotent() {
        let mut g = vertex(1, VertexKind::Generic, 1, &[0]);
        g.annotation = Annotation::from(vec![AnnotationFlag::BurstDisk, AnnotationFlag::Network]);
        let dag = Dag {
            vertices: vec![vertex(0, VertexKind::RootInput, 1, &[]), g.clone()],
        };
        let once = annotate_dag(&dag, BurstMode::Cpu).unwrap();
        assert_eq!(once.vertices[1].annotation, g.annotation);
        assert_eq!(annotate_dag(&once, BurstMode::Cpu).unwrap(), once);
    }

    #[test]
    fn cyclic_dag_rejected() {
        let dag = Dag {
            vertices: vec![
                vertex(0, VertexKind::Generic, 1, &[1]),
                vertex(1, VertexKind::Generic, 1, &[0]),
            ],
        };
        assert!(matches!(
            annotate_dag(&dag, BurstMode::Cpu),
            Err(WorkloadError::Cyclic { .. })
        ));
        assert!(dag.validate("x").is_err());
    }

    #[test]
    fn validate_catches_bad_edges() {
        let dag = Dag {
            vertices: vec![vertex(0, VertexKind::RootInput, 1, &[7])],
        };
        assert!(matches!(dag.validate("x"), Err(WorkloadError::RootWithUpstream { .. })));
        let dag = Dag {
            vertices: vec![vertex(0, VertexKind::Generic, 1, &[7])],
        };
        assert!(matches!(dag.validate("x"), Err(WorkloadError::UnknownUpstream { .. })));
    }

    #[test]
    fn slowstart_releases_shuffle_at_five_percent() {
        let j = job(vec![
            vertex(0, VertexKind::RootInput, 100, &[]),
            vertex(1, VertexKind::Shuffle, 4, &[0]),
            vertex(2, VertexKind::Generic, 2, &[1]),
        ]);
        let mut p = DagProgress::new(&j, DEFAULT_SLOWSTART);
        let roots = p.ready_tasks(&j, SimTime::ZERO);
        assert_eq!(roots.len(), 100);
        assert!(roots.windows(2).all(|w| w[0].id < w[1].id));
        for _ in 0..4 {
            p.record_completion(VertexId(0));
        }
        assert!(p.ready_tasks(&j, SimTime(1)).is_empty(), "4% must not release");
        p.record_completion(VertexId(0));
        let shuffle = p.ready_tasks(&j, SimTime(2));
        assert_eq!(shuffle.len(), 4);
        assert!(shuffle.iter().all(|t| t.stage == Stage::Shuffle));
        // generic edges need full completion
        for _ in 0..3 {
            p.record_completion(VertexId(1));
        }
        assert!(p.ready_tasks(&j, SimTime(3)).is_empty());
        p.record_completion(VertexId(1));
        assert_eq!(p.ready_tasks(&j, SimTime(4)).len(), 2);
        // released vertices are never re-emitted
        assert!(p.ready_tasks(&j, SimTime(5)).is_empty());
    }

    #[test]
    fn progress_law() {
        let task = TaskSpec {
            id: TaskId::new(0, 0, 0),
            stage: Stage::Map,
            annotation: Annotation::NONE,
            demand: Demand::new(1.0, 100.0, 0.0),
            work: Demand::new(100.0, 1000.0, 0.0),
            submit_time: SimTime::ZERO,
        };
        assert_eq!(task.dominant(), Some(Resource::Cpu));
        let p = TaskProgress::new(&task);
        assert_eq!(p.time_to_complete(task.demand), 100.0);
        // throttled to 0.4 stretches 2.5x
        let slow = Demand::new(0.4, 100.0, 0.0);
        assert!((p.time_to_complete(slow) - 250.0).abs() < 1e-9);
        let mut stepped = p;
        let mut t = 0;
        while !stepped.is_complete() {
            stepped = task_progress(stepped, slow, 1.0);
            t += 1;
        }
        assert_eq!(t, 250);
        // no service, no progress
        assert_eq!(task_progress(p, Demand::ZERO, 50.0), p);
    }

    #[test]
    fn ordering_moves_cpu_heavy_job() {
        let mut heavy = job(vec![vertex(0, VertexKind::RootInput, 1, &[])]);
        heavy.name = "heavy".into();
        let mut light = heavy.clone();
        light.name = "light".into();
        light.dag.vertices[0].per_task_demand.cpu = 0.2;
        light.submit_time = 5.0;
        let s = JobStream::new(vec![heavy, light], true).ordered(OrderingPolicy::CpuIntensiveLast);
        assert_eq!(s.jobs[0].name, "light");
        assert_eq!(s.jobs[0].id, JobId(0));
        assert_eq!(s.jobs[0].submit_time, 0.0);
        assert_eq!(s.jobs[1].submit_time, 5.0);
    }

    #[test]
    fn annotation_serde_as_list() {
        let a = Annotation::from(vec![AnnotationFlag::Network, AnnotationFlag::BurstCpu]);
        let s = serde_json::to_string(&a).unwrap();
        assert_eq!(s, r#"["burst_cpu","network"]"#);
        assert_eq!(serde_json::from_str::<Annotation>(&s).unwrap(), a);
        assert_eq!(a.to_string(), "burst_cpu+network");
    }

    proptest! {
        #[test]
        fn work_conserved_under_any_rate_schedule(
            rates in proptest::collection::vec(0.05..2.0f64, 1..20),
            work in 1.0..500.0f64,
        ) {
            let task = TaskSpec {
                id: TaskId::new(0, 0, 0),
                stage: Stage::Map,
                annotation: Annotation::NONE,
                demand: Demand::new(2.0, 0.0, 0.0),
                work: Demand::new(work, 0.0, 0.0),
                submit_time: SimTime::ZERO,
            };
            let mut p = TaskProgress::new(&task);
            let mut delivered = 0.0;
            let mut i = 0;
            while !p.is_complete() {
                let g = Demand::new(rates[i % rates.len()], 0.0, 0.0);
                let dt = p.time_to_complete(g).min(3.0);
                p.advance(g, dt);
                delivered += g.cpu * dt;
                i += 1;
            }
            prop_assert!((delivered - work).abs() < 1e-6 * work);
        }

        #[test]
        fn release_is_monotone(completions in proptest::collection::vec(0u32..3, 0..60)) {
            let j = job(vec![
                vertex(0, VertexKind::RootInput, 20, &[]),
                vertex(1, VertexKind::Shuffle, 3, &[0]),
                vertex(2, VertexKind::Generic, 2, &[1]),
            ]);
            let mut p = DagProgress::new(&j, DEFAULT_SLOWSTART);
            let mut seen = BTreeSet::new();
            for (step, v) in completions.into_iter().enumerate() {
                for t in p.ready_tasks(&j, SimTime(step as u64)) {
                    prop_assert!(seen.insert(t.id), "task released twice");
                }
                let vid = VertexId(v);
                if p.is_released(vid) {
                    p.record_completion(vid);
                }
                for id in &seen {
                    prop_assert!(p.is_released(id.vertex));
                }
            }
        }
    }
}
