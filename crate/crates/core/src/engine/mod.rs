//! Event-driven simulation core.
//!
//! Between events every rate is constant, so buckets and task progress are
//! integrated in closed form. Each node keeps one pending wake-up at the
//! earliest instant its granted rates can change (a task finishing or a
//! bucket emptying); any change to the node's task set supersedes it.

mod event;
mod metrics;
mod trace;

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use event::{EventKind, EventQueue, SimEvent};
pub use metrics::{metrics, CreditDispersion, MetricsReport, PhaseElapsed};
pub use trace::{
    EventRecord, JobRecord, NodeInfo, NodeSample, PassSummary, RateSegment, RecordBody,
    SimTrace, TaskRecord,
};

use crate::cluster::{Cluster, ClusterError, InstanceClass, NodeRates};
use crate::credits::{ResourceKind, EBS_IOPS_PER_GB};
use crate::ids::{JobId, NodeId, SimTime, TaskId};
use crate::scheduler::{
    baseline_schedule_pass, cash_schedule_pass, sort_nodes, BaselinePolicy, NodeOrdering,
    PendingTask, Policy,
};
use crate::telemetry::{CreditReading, Monitor, TelemetryConfig, UsageIntegral};
use crate::workload::{
    BurstMode, DagProgress, Job, JobStream, TaskProgress, WorkloadError, DEFAULT_SLOWSTART,
};

/// Remaining times below this are treated as reached.
const SNAP_SECS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("invalid engine config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineConfig {
    pub policy: Policy,
    pub basis: BurstMode,
    pub pass_period_s: f64,
    pub sort_period_s: f64,
    pub metrics_period_s: f64,
    pub horizon_s: f64,
    pub slowstart: f64,
    pub telemetry: TelemetryConfig,
    pub seed: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            policy: Policy::Cash,
            basis: BurstMode::Cpu,
            pass_period_s: 1.0,
            sort_period_s: 60.0,
            metrics_period_s: 60.0,
            horizon_s: 7.0 * 86_400.0,
            slowstart: DEFAULT_SLOWSTART,
            telemetry: TelemetryConfig::default(),
            seed: 0,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let periods = [
            ("pass_period_s", self.pass_period_s),
            ("sort_period_s", self.sort_period_s),
            ("metrics_period_s", self.metrics_period_s),
            ("horizon_s", self.horizon_s),
            ("telemetry.actual_period_s", self.telemetry.actual_period_s),
            ("telemetry.predict_period_s", self.telemetry.predict_period_s),
        ];
        for (name, v) in periods {
            if !(v.is_finite() && v >= 1e-6) {
                return Err(EngineError::InvalidConfig(format!(
                    "{name} must be a finite period of at least 1 us, got {v}"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.slowstart) {
            return Err(EngineError::InvalidConfig(format!(
                "slowstart must be in [0, 1], got {}",
                self.slowstart
            )));
        }
        Ok(())
    }
}

/// Duration in whole microseconds, never landing before an analytic
/// crossing: values within 1e-3 us of an integer round, others round up.
fn wake_after(secs: f64) -> SimTime {
    let us = secs * 1e6;
    if !(us < u64::MAX as f64) {
        return SimTime::MAX;
    }
    let r = us.round();
    if (us - r).abs() < 1e-3 {
        SimTime(r.max(0.0) as u64)
    } else {
        SimTime(us.ceil().max(0.0) as u64)
    }
}

fn period(secs: f64) -> SimTime {
    SimTime::from_secs(secs).max(SimTime(1))
}

struct JobRuntime {
    job: Job,
    progress: DagProgress,
    remaining: u64,
    submitted: Option<SimTime>,
    completed: Option<SimTime>,
}

pub struct Simulation {
    config: EngineConfig,
    cluster: Cluster,
    jobs: Vec<JobRuntime>,
    sequential: bool,
    queue: EventQueue,
    now: SimTime,
    pending: Vec<PendingTask>,
    progress: BTreeMap<TaskId, TaskProgress>,
    rates: Vec<NodeRates>,
    versions: Vec<u64>,
    usage: Vec<UsageIntegral>,
    monitor: Monitor,
    ordering: NodeOrdering,
    rng: ChaCha8Rng,
    trace: SimTrace,
    stopped: bool,
}

impl Simulation {
    pub fn new(config: EngineConfig, cluster: Cluster, stream: JobStream) -> Result<Self, EngineError> {
        config.validate()?;
        stream.validate()?;
        let n = cluster.len();
        let usage = vec![UsageIntegral::default(); n];
        let monitor = Monitor::new(
            config.telemetry,
            &cluster,
            &usage,
            SimTime::ZERO,
            config.seed ^ 0x7e1e_3e74_0000_0001,
        );
        let ordering = sort_nodes(monitor.snapshot(), config.basis);
        let nodes = cluster
            .nodes()
            .iter()
            .map(|n| NodeInfo {
                id: n.id,
                class: n.instance_class,
                vcpus: n.vcpu_count,
                baseline_fraction: n.baseline_fraction,
                cpu_capacity: n.cpu_bucket.map(|b| b.capacity()),
                disk_capacity: n.disk_bucket.capacity(),
                volume_gb: n.disk_bucket.earn_rate() / EBS_IOPS_PER_GB,
            })
            .collect();
        let jobs: Vec<JobRuntime> = stream
            .jobs
            .into_iter()
            .map(|job| JobRuntime {
                progress: DagProgress::new(&job, config.slowstart),
                remaining: job.dag.task_count(),
                submitted: None,
                completed: None,
                job,
            })
            .collect();
        let trace = SimTrace {
            nodes,
            events: Vec::new(),
            tasks: BTreeMap::new(),
            jobs: jobs
                .iter()
                .map(|j| JobRecord {
                    id: j.job.id,
                    name: j.job.name.clone(),
                    task_count: j.remaining,
                    submitted: None,
                    completed: None,
                })
                .collect(),
            samples: Vec::new(),
            segments: vec![Vec::new(); n],
            usage: usage.clone(),
            surplus_credits: vec![0.0; n],
            predictions: Vec::new(),
            passes: Vec::new(),
            events_processed: 0,
            end: SimTime::ZERO,
            complete: false,
        };
        let mut sim = Self {
            config,
            cluster,
            jobs,
            sequential: stream.sequential,
            queue: EventQueue::default(),
            now: SimTime::ZERO,
            pending: Vec::new(),
            progress: BTreeMap::new(),
            rates: vec![NodeRates::default(); n],
            versions: vec![0; n],
            usage,
            monitor,
            ordering,
            rng: ChaCha8Rng::seed_from_u64(config.seed ^ 0x5c4e_d01e_0000_0002),
            trace,
            stopped: false,
        };
        for i in 0..n {
            sim.refresh_node(i);
        }
        sim.schedule_initial();
        Ok(sim)
    }

    fn schedule_initial(&mut self) {
        let c = self.config;
        let q = &mut self.queue;
        q.push(SimTime::ZERO, EventKind::NodeSort);
        q.push(SimTime::ZERO, EventKind::MetricsSample);
        q.push(SimTime::ZERO, EventKind::SchedulerPass);
        q.push(period(c.telemetry.actual_period_s), EventKind::TelemetryActual);
        q.push(period(c.telemetry.predict_period_s), EventKind::TelemetryPredict);
        q.push(SimTime::from_secs(c.horizon_s), EventKind::Horizon);
        let submits: Vec<(SimTime, JobId)> = if self.sequential {
            self.jobs
                .first()
                .map(|j| (SimTime::from_secs(j.job.submit_time), j.job.id))
                .into_iter()
                .collect()
        } else {
            self.jobs
                .iter()
                .map(|j| (SimTime::from_secs(j.job.submit_time), j.job.id))
                .collect()
        };
        for (t, job) in submits {
            self.queue.push(t, EventKind::JobSubmit { job });
        }
    }

    /// Insert a null event; it only splits the integration interval.
    pub fn add_probe(&mut self, at_secs: f64) {
        self.queue.push(SimTime::from_secs(at_secs), EventKind::Probe);
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn cluster(&self) -> &Cluster {
        &self.cluster
    }

    pub fn usage(&self) -> &[UsageIntegral] {
        &self.usage
    }

    pub fn is_stopped(&self) -> bool {
        self.stopped
    }

    fn all_jobs_done(&self) -> bool {
        self.jobs.iter().all(|j| j.completed.is_some())
    }

    fn record(&mut self, body: RecordBody) {
        let seq = self.trace.events.len() as u64;
        self.trace.events.push(EventRecord {
            seq,
            time: self.now,
            body,
        });
    }

    /// Process the next event. Returns it, or `None` once the run is over.
    pub fn step(&mut self) -> Option<SimEvent> {
        if self.stopped {
            return None;
        }
        let Some(ev) = self.queue.pop() else {
            self.stop();
            return None;
        };
        if self.all_jobs_done() && ev.time > self.now {
            self.stop();
            return None;
        }
        if let EventKind::RateChange { node, version } = ev.kind {
            if self.versions[node.0 as usize] != version {
                return Some(ev);
            }
        }
        self.trace.events_processed += 1;
        self.advance_to(ev.time);
        match ev.kind {
            EventKind::RateChange { node, .. } => self.on_wake(node.0 as usize),
            EventKind::JobSubmit { job } => self.on_submit(job),
            EventKind::TasksReady { job } => self.release_ready(job),
            EventKind::TelemetryActual => {
                self.monitor.observe_actual(&self.cluster, &self.usage, self.now);
                let readings = snapshot_readings(&self.monitor);
                self.record(RecordBody::TelemetryActual { readings });
                self.requeue(self.config.telemetry.actual_period_s, ev.kind);
            }
            EventKind::TelemetryPredict => {
                let audits = self.monitor.observe_predict(&self.cluster, &self.usage, self.now);
                if !audits.is_empty() {
                    let refreshed: BTreeSet<NodeId> = audits.iter().map(|a| a.node).collect();
                    let readings = snapshot_readings(&self.monitor)
                        .into_iter()
                        .filter(|r| refreshed.contains(&r.node))
                        .collect();
                    self.trace.predictions.extend(audits);
                    self.record(RecordBody::TelemetryPredicted { readings });
                }
                self.requeue(self.config.telemetry.predict_period_s, ev.kind);
            }
            EventKind::NodeSort => {
                self.ordering = sort_nodes(self.monitor.snapshot(), self.config.basis);
                if self.config.policy == Policy::Cash {
                    self.record(RecordBody::NodesSorted {
                        basis: self.ordering.basis,
                        order: self.ordering.nodes.clone(),
                    });
                }
                self.requeue(self.config.sort_period_s, ev.kind);
            }
            EventKind::MetricsSample => {
                self.sample();
                self.requeue(self.config.metrics_period_s, ev.kind);
            }
            EventKind::SchedulerPass => {
                self.pass();
                self.requeue(self.config.pass_period_s, ev.kind);
            }
            EventKind::Probe => {}
            EventKind::Horizon => {
                self.record(RecordBody::HorizonReached {
                    live_tasks: self.progress.len(),
                });
                self.stop();
            }
        }
        Some(ev)
    }

    pub fn run(mut self) -> SimTrace {
        while self.step().is_some() {}
        self.trace
    }

    fn requeue(&mut self, period_s: f64, kind: EventKind) {
        let t = self.now.saturating_add(period(period_s));
        self.queue.push(t, kind);
    }

    fn stop(&mut self) {
        if self.stopped {
            return;
        }
        self.stopped = true;
        let complete = self.all_jobs_done();
        self.record(RecordBody::RunFinished { complete });
        self.trace.complete = complete;
        self.trace.end = self.now;
        self.trace.usage = self.usage.clone();
    }

    /// Integrate every node from `now` to `t` at the current rates.
    fn advance_to(&mut self, t: SimTime) {
        if t <= self.now {
            return;
        }
        let dt = (t - self.now).as_secs();
        self.now = t;
        let mut depleted = Vec::new();
        for i in 0..self.cluster.len() {
            let rates = self.rates[i];
            let node = self
                .cluster
                .node_mut(NodeId(i as u32))
                .expect("dense node ids");
            for (task, demand) in node.running() {
                self.progress
                    .get_mut(task)
                    .expect("running task has progress")
                    .advance(rates.share_of(*demand), dt);
            }
            let usage = &mut self.usage[i];
            match (node.instance_class, node.cpu_bucket) {
                (InstanceClass::Burstable, Some(b)) => {
                    let c = b.consume(rates.demand.cpu, dt).expect("valid step");
                    node.cpu_bucket = Some(c.bucket);
                    usage.cpu += c.served.min(rates.granted.cpu * dt);
                    if c.depleted_after.is_some() {
                        depleted.push((node.id, ResourceKind::Cpu));
                    }
                }
                (InstanceClass::BurstableUnlimited, Some(b)) => {
                    let (nb, shortfall) = b.charge(rates.granted.cpu, dt).expect("valid step");
                    node.cpu_bucket = Some(nb);
                    self.trace.surplus_credits[i] += shortfall;
                    usage.cpu += rates.granted.cpu * dt;
                }
                _ => usage.cpu += rates.granted.cpu * dt,
            }
            let c = node
                .disk_bucket
                .consume(rates.demand.disk_iops, dt)
                .expect("valid step");
            node.disk_bucket = c.bucket;
            usage.io += c.served;
            if c.depleted_after.is_some() {
                depleted.push((node.id, ResourceKind::DiskIo));
            }
        }
        for (node, resource) in depleted {
            self.record(RecordBody::BucketDepleted { node, resource });
        }
    }

    /// Recompute a node's granted rates and its next wake-up.
    fn refresh_node(&mut self, i: usize) {
        let node = &self.cluster.nodes()[i];
        let rates = node.rates();
        self.rates[i] = rates;
        let seg = RateSegment {
            start: self.now,
            cpu: rates.granted.cpu,
            iops: rates.granted.disk_iops,
        };
        self.monitor.note_rates(node.id, seg);
        let segs = &mut self.trace.segments[i];
        match segs.last_mut() {
            Some(last) if last.cpu == seg.cpu && last.iops == seg.iops => {}
            Some(last) if last.start == seg.start => *last = seg,
            _ => segs.push(seg),
        }

        let mut wake = f64::INFINITY;
        for (task, demand) in node.running() {
            let p = &self.progress[task];
            wake = wake.min(p.time_to_complete(rates.share_of(*demand)));
        }
        if node.instance_class == InstanceClass::Burstable {
            if let Some(t) = node.cpu_bucket.and_then(|b| b.time_to_empty(rates.granted.cpu)) {
                wake = wake.min(t);
            }
        }
        if let Some(t) = node.disk_bucket.time_to_empty(rates.granted.disk_iops) {
            wake = wake.min(t);
        }
        self.versions[i] += 1;
        if wake.is_finite() {
            let at = self.now.saturating_add(wake_after(wake));
            self.queue.push(
                at,
                EventKind::RateChange {
                    node: NodeId(i as u32),
                    version: self.versions[i],
                },
            );
        }
    }

    fn on_wake(&mut self, i: usize) {
        let id = NodeId(i as u32);
        let rates = self.rates[i];
        let node = &self.cluster.nodes()[i];
        let finished: Vec<TaskId> = node
            .running()
            .iter()
            .filter(|(task, demand)| {
                self.progress[*task].time_to_complete(rates.share_of(**demand)) <= SNAP_SECS
            })
            .map(|(task, _)| *task)
            .collect();

        let mut snapped = Vec::new();
        let node = self.cluster.node_mut(id).expect("dense node ids");
        if node.instance_class == InstanceClass::Burstable {
            if let Some(b) = node.cpu_bucket {
                if b.time_to_empty(rates.granted.cpu).is_some_and(|t| t <= SNAP_SECS) {
                    node.cpu_bucket = Some(b.with_balance(0.0));
                    snapped.push(ResourceKind::Cpu);
                }
            }
        }
        let d = node.disk_bucket;
        if d.time_to_empty(rates.granted.disk_iops).is_some_and(|t| t <= SNAP_SECS) {
            node.disk_bucket = d.with_balance(0.0);
            snapped.push(ResourceKind::DiskIo);
        }
        for resource in snapped {
            self.record(RecordBody::BucketDepleted { node: id, resource });
        }
        for task in finished {
            self.complete_task(id, task);
        }
        self.refresh_node(i);
    }

    fn complete_task(&mut self, node: NodeId, task: TaskId) {
        self.cluster.release(task).expect("task is placed");
        self.progress.remove(&task);
        if let Some(rec) = self.trace.tasks.get_mut(&task) {
            rec.completed = Some(self.now);
        }
        self.record(RecordBody::TaskCompleted { task, node });

        let j = task.job.0 as usize;
        let rt = &mut self.jobs[j];
        rt.progress.record_completion(task.vertex);
        rt.remaining -= 1;
        if rt.remaining > 0 {
            self.queue.push(self.now, EventKind::TasksReady { job: task.job });
            return;
        }
        rt.completed = Some(self.now);
        self.trace.jobs[j].completed = Some(self.now);
        self.record(RecordBody::JobCompleted { job: task.job });
        if self.sequential {
            if let Some(next) = self.jobs.get(j + 1) {
                let at = SimTime::from_secs(next.job.submit_time).max(self.now);
                self.queue.push(at, EventKind::JobSubmit { job: next.job.id });
            }
        }
    }

    fn on_submit(&mut self, job: JobId) {
        let j = job.0 as usize;
        self.jobs[j].submitted = Some(self.now);
        self.trace.jobs[j].submitted = Some(self.now);
        let name = self.jobs[j].job.name.clone();
        self.record(RecordBody::JobSubmitted { job, name });
        self.release_ready(job);
    }

    fn release_ready(&mut self, job: JobId) {
        let rt = &mut self.jobs[job.0 as usize];
        if rt.submitted.is_none() {
            return;
        }
        let ready = rt.progress.ready_tasks(&rt.job, self.now);
        let mut by_vertex: BTreeMap<_, (crate::workload::Stage, u32)> = BTreeMap::new();
        for ready_task in ready {
            let e = by_vertex.entry(ready_task.id.vertex).or_insert((ready_task.stage, 0));
            e.1 += 1;
            self.pending.push(PendingTask {
                id: ready_task.id,
                annotation: ready_task.annotation,
            });
            self.trace.tasks.insert(
                ready_task.id,
                TaskRecord {
                    id: ready_task.id,
                    stage: ready_task.stage,
                    annotation: ready_task.annotation,
                    demand: ready_task.demand,
                    work: ready_task.work,
                    released: self.now,
                    started: None,
                    completed: None,
                    node: None,
                    phase: None,
                },
            );
        }
        for (vertex, (stage, count)) in by_vertex {
            self.record(RecordBody::TasksReleased {
                job,
                vertex,
                stage,
                count,
            });
        }
    }

    fn sample(&mut self) {
        for (i, node) in self.cluster.nodes().iter().enumerate() {
            let r = self.rates[i];
            self.trace.samples.push(NodeSample {
                time: self.now,
                node: node.id,
                cpu_credits: node.cpu_bucket.map(|b| b.balance()),
                disk_credits: node.disk_bucket.balance(),
                cpu_util: r.granted.cpu / f64::from(node.vcpu_count),
                granted_iops: r.granted.disk_iops,
                surplus_credits: self.trace.surplus_credits[i],
            });
        }
    }

    fn pass(&mut self) {
        if self.pending.is_empty() {
            return;
        }
        let free = self.cluster.free_slots();
        if free.values().all(|&k| k == 0) {
            return;
        }
        let decision = match self.config.policy {
            Policy::Cash => cash_schedule_pass(&self.pending, &self.ordering, &free),
            Policy::RandomOrder => {
                baseline_schedule_pass(&self.pending, &free, BaselinePolicy::RandomOrder, &mut self.rng)
            }
            Policy::ArrivalOrder => {
                baseline_schedule_pass(&self.pending, &free, BaselinePolicy::ArrivalOrder, &mut self.rng)
            }
        };
        if decision.is_empty() {
            return;
        }
        let assigned: BTreeSet<TaskId> = decision.assignments.iter().map(|a| a.task).collect();
        self.pending.retain(|p| !assigned.contains(&p.id));
        let mut touched = BTreeSet::new();
        for a in &decision.assignments {
            let rec = self.trace.tasks.get_mut(&a.task).expect("released task");
            rec.started = Some(self.now);
            rec.node = Some(a.node);
            rec.phase = Some(a.phase);
            let progress = TaskProgress {
                remaining: rec.work,
                dominant: crate::workload::dominant_resource(rec.demand, rec.work),
            };
            self.cluster
                .assign(a.node, a.task, rec.demand)
                .expect("decision respects free slots");
            self.progress.insert(a.task, progress);
            touched.insert(a.node.0 as usize);
        }
        for i in touched {
            self.refresh_node(i);
        }
        let max_snapshot_age = self.monitor.snapshot().max_age(self.now);
        self.trace.passes.push(PassSummary {
            time: self.now,
            max_snapshot_age,
            assigned: decision.assignments.len(),
        });
        self.record(RecordBody::SchedulerPass {
            max_snapshot_age,
            assignments: decision.assignments,
        });
    }
}

fn snapshot_readings(monitor: &Monitor) -> Vec<CreditReading> {
    monitor
        .snapshot()
        .entries
        .iter()
        .map(|(&node, e)| CreditReading {
            node,
            cpu: e.cpu,
            disk: e.disk,
        })
        .collect()
}

/// Run a simulation to completion or horizon.
pub fn run(config: EngineConfig, cluster: Cluster, stream: JobStream) -> Result<SimTrace, EngineError> {
    Ok(Simulation::new(config, cluster, stream)?.run())
}
