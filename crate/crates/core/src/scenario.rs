//! Scenario files: fleet, workload, scheduling, telemetry and pricing in
//! one TOML document, plus the built-in experiment presets.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::billing::PricingTable;
use crate::cluster::{Cluster, InstanceClass, NodeState};
use crate::credits::{EBS_BUCKET_CAPACITY, EBS_IOPS_PER_GB, EBS_PEAK_IOPS, SECONDS_PER_DAY};
use crate::engine::EngineConfig;
use crate::ids::{JobId, NodeId};
use crate::scheduler::Policy;
use crate::telemetry::TelemetryConfig;
use crate::workload::{
    annotate_dag, generate_workload, BurstMode, Dag, DagVertex, Job, JobStream, OrderingPolicy,
    WorkloadPreset, DEFAULT_SLOWSTART,
};
use crate::Bucket;

/// One problem found while validating, located by a dotted field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("scenario syntax error: {0}")]
    Syntax(String),
    #[error("invalid scenario:\n{}", .0.iter().map(|v| format!("  - {v}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Violation>),
    #[error("unknown preset '{0}'")]
    UnknownPreset(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Full,
    Empty,
}

/// Starting balance: a level, one value for the group, or one per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialCredits {
    Level(Level),
    Value(f64),
    PerNode(Vec<f64>),
}

impl InitialCredits {
    fn for_node(&self, index: usize, capacity: f64) -> Option<f64> {
        match self {
            InitialCredits::Level(Level::Full) => Some(capacity),
            InitialCredits::Level(Level::Empty) => Some(0.0),
            InitialCredits::Value(v) => Some(*v),
            InitialCredits::PerNode(v) => v.get(index).copied(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CpuSpec {
    pub baseline_fraction: f64,
    pub initial_credits: InitialCredits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiskSpec {
    pub volume_gb: f64,
    #[serde(default = "default_peak_iops")]
    pub peak_iops: f64,
    /// Baseline and earn rate; defaults to 3 IOPS per GB.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_iops: Option<f64>,
    #[serde(default = "default_disk_capacity")]
    pub capacity: f64,
    pub initial_credits: InitialCredits,
}

fn default_network_capacity() -> f64 {
    1000.0
}

fn default_peak_iops() -> f64 {
    EBS_PEAK_IOPS
}

fn default_disk_capacity() -> f64 {
    EBS_BUCKET_CAPACITY
}

/// A group of identical nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FleetGroup {
    pub count: u32,
    pub class: InstanceClass,
    pub vcpus: u32,
    pub slots: u32,
    /// Network units per second shared by the node's tasks.
    #[serde(default = "default_network_capacity")]
    pub network_capacity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cpu: Option<CpuSpec>,
    pub disk: DiskSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetRef {
    pub name: String,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomJob {
    pub name: String,
    #[serde(default)]
    pub submit_time: f64,
    pub vertices: Vec<DagVertex>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkloadSpec {
    pub presets: Vec<PresetRef>,
    pub jobs: Vec<CustomJob>,
    pub ordering: OrderingPolicy,
    /// Defaults to sequential unless a parallel preset is included.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sequential: Option<bool>,
    /// Derive annotations from vertex kinds for the scheduler's basis.
    pub annotate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchedulerSpec {
    pub policy: Policy,
    pub basis: BurstMode,
    pub pass_period_s: f64,
    pub sort_period_s: f64,
    pub slowstart: f64,
}

impl Default for SchedulerSpec {
    fn default() -> Self {
        Self {
            policy: Policy::Cash,
            basis: BurstMode::Cpu,
            pass_period_s: 1.0,
            sort_period_s: 60.0,
            slowstart: DEFAULT_SLOWSTART,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub metrics_period_s: f64,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            metrics_period_s: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    /// Mandatory; kept optional here so its absence is reported with the
    /// other violations.
    pub seed: Option<u64>,
    #[serde(default = "default_horizon")]
    pub horizon_s: f64,
    pub fleet: Vec<FleetGroup>,
    #[serde(default)]
    pub workload: WorkloadSpec,
    #[serde(default)]
    pub scheduler: SchedulerSpec,
    #[serde(default)]
    pub telemetry: TelemetryConfig,
    #[serde(default)]
    pub pricing: PricingTable,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_horizon() -> f64 {
    7.0 * SECONDS_PER_DAY
}

/// Everything the engine needs for one run.
#[derive(Debug, Clone)]
pub struct Instance {
    pub cluster: Cluster,
    pub stream: JobStream,
    pub engine: EngineConfig,
}

/// Parses and validates a scenario file.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let s = scenario_from_toml(text)?;
    s.validate()?;
    Ok(s)
}

/// Parses without validating, for callers that patch fields (e.g. the seed)
/// before calling [`Scenario::validate`].
pub fn scenario_from_toml(text: &str) -> Result<Scenario, ScenarioError> {
    toml::from_str(text).map_err(|e| ScenarioError::Syntax(e.to_string()))
}

struct Checker(Vec<Violation>);

impl Checker {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(Violation {
            path: path.into(),
            message: message.into(),
        });
    }

    fn positive(&mut self, path: impl Into<String>, v: f64) {
        if !(v.is_finite() && v > 0.0) {
            self.push(path, format!("must be finite and > 0, got {v}"));
        }
    }
}

impl Scenario {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Hex sha256 of the canonical serialization.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn node_count(&self) -> u32 {
        self.fleet.iter().map(|g| g.count).sum()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut c = Checker(Vec::new());
        if self.seed.is_none() {
            c.push("seed", "required: every run must be reproducible");
        }
        c.positive("horizon_s", self.horizon_s);
        if self.fleet.is_empty() || self.node_count() == 0 {
            c.push("fleet", "at least one node is required");
        }
        let mut first = 0u32;
        for (g, group) in self.fleet.iter().enumerate() {
            self.check_group(&mut c, g, group, first);
            first += group.count;
        }
        self.check_workload(&mut c);
        let s = &self.scheduler;
        c.positive("scheduler.pass_period_s", s.pass_period_s);
        c.positive("scheduler.sort_period_s", s.sort_period_s);
        if !(0.0..=1.0).contains(&s.slowstart) {
            c.push("scheduler.slowstart", format!("must be in [0, 1], got {}", s.slowstart));
        }
        c.positive("telemetry.actual_period_s", self.telemetry.actual_period_s);
        c.positive("telemetry.predict_period_s", self.telemetry.predict_period_s);
        if !(self.telemetry.noise_credits >= 0.0) {
            c.push("telemetry.noise_credits", "must be >= 0");
        }
        c.positive("output.metrics_period_s", self.output.metrics_period_s);
        if let Err(e) = self.pricing.validate() {
            c.push("pricing", e.to_string());
        }
        if c.0.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Invalid(c.0))
        }
    }

    fn check_group(&self, c: &mut Checker, g: usize, group: &FleetGroup, first: u32) {
        let path = format!("fleet[{g}]");
        let nodes = if group.count <= 1 {
            format!("node n{first}")
        } else {
            format!("nodes n{first}..n{}", first + group.count - 1)
        };
        if group.count == 0 {
            c.push(format!("{path}.count"), "must be >= 1");
        }
        if group.vcpus == 0 {
            c.push(format!("{path}.vcpus"), format!("{nodes}: must be >= 1"));
        }
        if group.slots == 0 {
            c.push(format!("{path}.slots"), format!("{nodes}: must be >= 1"));
        }
        if !(group.network_capacity.is_finite() && group.network_capacity > 0.0) {
            c.push(format!("{path}.network_capacity"), format!("{nodes}: must be > 0"));
        }
        match (&group.cpu, group.class.has_cpu_credits()) {
            (None, true) => c.push(format!("{path}.cpu"), format!("{nodes}: burstable classes need a cpu section")),
            (Some(_), false) => c.push(
                format!("{path}.cpu"),
                format!("{nodes}: general-purpose nodes have no cpu credits"),
            ),
            (Some(cpu), true) => {
                let bf = cpu.baseline_fraction;
                if !(bf > 0.0 && bf <= 1.0) {
                    c.push(
                        format!("{path}.cpu.baseline_fraction"),
                        format!("{nodes}: must be in (0, 1], got {bf}"),
                    );
                } else if group.vcpus > 0 {
                    for i in 0..group.count as usize {
                        let cap = bf * f64::from(group.vcpus) * SECONDS_PER_DAY / 60.0;
                        check_initial(c, &format!("{path}.cpu.initial_credits"), first, i, &cpu.initial_credits, cap, |init| {
                            Bucket::cpu(group.vcpus, bf, init).map(|_| ())
                        });
                    }
                }
                check_per_node_len(c, &format!("{path}.cpu.initial_credits"), &cpu.initial_credits, group.count);
            }
            (None, false) => {}
        }
        let d = &group.disk;
        let baseline = d.baseline_iops.unwrap_or(EBS_IOPS_PER_GB * d.volume_gb);
        if !(d.volume_gb.is_finite() && d.volume_gb > 0.0) {
            c.push(format!("{path}.disk.volume_gb"), format!("{nodes}: must be > 0, got {}", d.volume_gb));
        } else if !(d.peak_iops >= baseline) {
            c.push(
                format!("{path}.disk.peak_iops"),
                format!(
                    "{nodes}: peak rate {} is below the baseline rate {baseline}",
                    d.peak_iops
                ),
            );
        } else if !(d.capacity.is_finite() && d.capacity >= 0.0) {
            c.push(format!("{path}.disk.capacity"), format!("{nodes}: must be >= 0"));
        } else {
            for i in 0..group.count as usize {
                check_initial(c, &format!("{path}.disk.initial_credits"), first, i, &d.initial_credits, d.capacity, |init| {
                    disk_bucket(d, init).map(|_| ())
                });
            }
        }
        check_per_node_len(c, &format!("{path}.disk.initial_credits"), &d.initial_credits, group.count);
    }

    fn check_workload(&self, c: &mut Checker) {
        let w = &self.workload;
        for (i, p) in w.presets.iter().enumerate() {
            if p.name.parse::<WorkloadPreset>().is_err() {
                let known: Vec<_> = WorkloadPreset::ALL.iter().map(|p| p.name()).collect();
                c.push(
                    format!("workload.presets[{i}].name"),
                    format!("unknown preset '{}' (known: {})", p.name, known.join(", ")),
                );
            }
            c.positive(format!("workload.presets[{i}].scale"), p.scale);
        }
        for (i, job) in w.jobs.iter().enumerate() {
            if !(job.submit_time.is_finite() && job.submit_time >= 0.0) {
                c.push(format!("workload.jobs[{i}].submit_time"), "must be finite and >= 0");
            }
            let dag = Dag {
                vertices: job.vertices.clone(),
            };
            if let Err(e) = dag.validate(&job.name) {
                c.push(format!("workload.jobs[{i}]"), e.to_string());
            }
        }
    }

    /// Build the cluster, job stream and engine configuration.
    pub fn instantiate(&self) -> Result<Instance, ScenarioError> {
        self.validate()?;
        let seed = self.seed.expect("validated");
        let invalid = |path: &str, e: String| {
            ScenarioError::Invalid(vec![Violation {
                path: path.to_string(),
                message: e,
            }])
        };

        let mut nodes = Vec::new();
        for (g, group) in self.fleet.iter().enumerate() {
            for i in 0..group.count as usize {
                let id = NodeId(nodes.len() as u32);
                let cpu = match &group.cpu {
                    Some(cpu) => {
                        let cap = cpu.baseline_fraction * f64::from(group.vcpus) * SECONDS_PER_DAY / 60.0;
                        let init = cpu.initial_credits.for_node(i, cap).expect("validated");
                        Some(
                            Bucket::cpu(group.vcpus, cpu.baseline_fraction, init)
                                .map_err(|e| invalid(&format!("fleet[{g}].cpu"), e.to_string()))?,
                        )
                    }
                    None => None,
                };
                let init = group.disk.initial_credits.for_node(i, group.disk.capacity).expect("validated");
                let disk = disk_bucket(&group.disk, init)
                    .map_err(|e| invalid(&format!("fleet[{g}].disk"), e.to_string()))?;
                let node = NodeState::new(id, group.vcpus, group.slots, group.class, cpu, disk, group.network_capacity)
                    .map_err(|e| invalid(&format!("fleet[{g}]"), e.to_string()))?;
                nodes.push(node);
            }
        }
        let cluster = Cluster::new(nodes).map_err(|e| invalid("fleet", e.to_string()))?;

        let w = &self.workload;
        let mut jobs: Vec<Job> = Vec::new();
        let mut sequential = true;
        for (i, p) in w.presets.iter().enumerate() {
            let preset: WorkloadPreset = p.name.parse().expect("validated");
            sequential &= preset.is_sequential();
            let stream = generate_workload(preset, p.scale, seed)
                .map_err(|e| invalid(&format!("workload.presets[{i}]"), e.to_string()))?;
            jobs.extend(stream.jobs);
        }
        for job in &w.jobs {
            jobs.push(Job {
                id: JobId(0),
                name: job.name.clone(),
                submit_time: job.submit_time,
                dag: Dag {
                    vertices: job.vertices.clone(),
                },
            });
        }
        if w.annotate {
            for (i, job) in jobs.iter_mut().enumerate() {
                job.dag = annotate_dag(&job.dag, self.scheduler.basis)
                    .map_err(|e| invalid(&format!("workload.jobs[{i}]"), e.to_string()))?;
            }
        }
        for (i, job) in jobs.iter_mut().enumerate() {
            job.id = JobId(i as u32);
        }
        let stream = JobStream::new(jobs, w.sequential.unwrap_or(sequential)).ordered(w.ordering);

        let engine = EngineConfig {
            policy: self.scheduler.policy,
            basis: self.scheduler.basis,
            pass_period_s: self.scheduler.pass_period_s,
            sort_period_s: self.scheduler.sort_period_s,
            metrics_period_s: self.output.metrics_period_s,
            horizon_s: self.horizon_s,
            slowstart: self.scheduler.slowstart,
            telemetry: self.telemetry,
            seed,
        };
        Ok(Instance {
            cluster,
            stream,
            engine,
        })
    }
}

fn disk_bucket(d: &DiskSpec, init: f64) -> Result<Bucket, crate::credits::CreditError> {
    match d.baseline_iops {
        None => Bucket::ebs(d.volume_gb, d.peak_iops, d.capacity, init),
        Some(base) => Bucket::new(
            crate::credits::ResourceKind::DiskIo,
            d.capacity,
            base,
            base,
            d.peak_iops,
            init,
        ),
    }
}

fn check_initial(
    c: &mut Checker,
    path: &str,
    first: u32,
    index: usize,
    init: &InitialCredits,
    capacity: f64,
    build: impl Fn(f64) -> Result<(), crate::credits::CreditError>,
) {
    let Some(v) = init.for_node(index, capacity) else {
        return;
    };
    if let Err(e) = build(v) {
        c.push(path, format!("node n{}: {e}", first + index as u32));
    }
}

fn check_per_node_len(c: &mut Checker, path: &str, init: &InitialCredits, count: u32) {
    if let InitialCredits::PerNode(v) = init {
        if v.len() != count as usize {
            c.push(path, format!("expected {count} per-node values, got {}", v.len()));
        }
    }
}

// ---------------------------------------------------------------------------
// Built-in presets.

pub const PRESET_NAMES: [&str; 9] = [
    "cpu_exp1_naive",
    "cpu_exp2_reordered",
    "cpu_exp3_unlimited",
    "cpu_exp4_cash",
    "disk_2vm",
    "disk_10vm",
    "disk_20vm",
    "cpu_skew_unlimited",
    "cpu_skew_cash",
];

pub fn preset_description(name: &str) -> Option<&'static str> {
    Some(match name {
        "cpu_exp1_naive" => "CPU-heavy job first, empty CPU buckets, credit-oblivious placement",
        "cpu_exp2_reordered" => "CPU-heavy job last, empty CPU buckets, credit-oblivious placement",
        "cpu_exp3_unlimited" => "CPU-heavy job first on unlimited-mode nodes",
        "cpu_exp4_cash" => "CPU-heavy job last, credit-aware placement",
        "disk_2vm" => "TPC-DS-like queries on 2 general-purpose nodes, empty disk buckets, random vs credit-aware",
        "disk_10vm" => "as disk_2vm with 10 nodes",
        "disk_20vm" => "as disk_2vm with 20 nodes",
        "cpu_skew_unlimited" => "skewed starting CPU credits on unlimited-mode nodes",
        "cpu_skew_cash" => "skewed starting CPU credits, standard mode, credit-aware placement",
        _ => return None,
    })
}

const CPU_NODES: u32 = 10;
const CPU_VCPUS: u32 = 2;
const CPU_BASELINE: f64 = 0.4;

fn cpu_fleet(class: InstanceClass, initial: InitialCredits) -> Vec<FleetGroup> {
    vec![FleetGroup {
        count: CPU_NODES,
        class,
        vcpus: CPU_VCPUS,
        slots: CPU_VCPUS,
        network_capacity: 1000.0,
        cpu: Some(CpuSpec {
            baseline_fraction: CPU_BASELINE,
            initial_credits: initial,
        }),
        disk: DiskSpec {
            volume_gb: 100.0,
            peak_iops: EBS_PEAK_IOPS,
            baseline_iops: None,
            capacity: EBS_BUCKET_CAPACITY,
            initial_credits: InitialCredits::Level(Level::Full),
        },
    }]
}

fn hibench_mix() -> Vec<PresetRef> {
    ["sql_agg_like", "pagerank_like", "kmeans_like"]
        .iter()
        .map(|n| PresetRef {
            name: n.to_string(),
            scale: 1.0,
        })
        .collect()
}

fn disk_fleet(count: u32) -> Vec<FleetGroup> {
    vec![FleetGroup {
        count,
        class: InstanceClass::GeneralPurpose,
        vcpus: 8,
        slots: 4,
        network_capacity: 1000.0,
        cpu: None,
        disk: DiskSpec {
            volume_gb: 100.0,
            peak_iops: EBS_PEAK_IOPS,
            baseline_iops: None,
            capacity: EBS_BUCKET_CAPACITY,
            initial_credits: InitialCredits::Level(Level::Empty),
        },
    }]
}

fn base(name: &str, fleet: Vec<FleetGroup>, workload: WorkloadSpec, policy: Policy, basis: BurstMode) -> Scenario {
    Scenario {
        name: name.to_string(),
        seed: Some(1),
        horizon_s: 2.0 * SECONDS_PER_DAY,
        fleet,
        workload,
        scheduler: SchedulerSpec {
            policy,
            basis,
            ..SchedulerSpec::default()
        },
        telemetry: TelemetryConfig::default(),
        pricing: PricingTable::default(),
        output: OutputSpec::default(),
    }
}

fn skewed_credits() -> InitialCredits {
    let cap = CPU_BASELINE * f64::from(CPU_VCPUS) * SECONDS_PER_DAY / 60.0;
    InitialCredits::PerNode(
        (0..CPU_NODES)
            .map(|i| if i % 2 == 0 { cap } else { 0.0 })
            .collect(),
    )
}

/// A built-in experiment scenario by name.
pub fn preset_scenario(name: &str) -> Result<Scenario, ScenarioError> {
    let cpu_workload = |ordering| WorkloadSpec {
        presets: hibench_mix(),
        ordering,
        annotate: true,
        ..WorkloadSpec::default()
    };
    // Query volume grows with the fleet so per-node load stays moderate.
    let disk_workload = |nodes: u32| WorkloadSpec {
        presets: vec![PresetRef {
            name: "tpcds_like_q".into(),
            scale: 0.08 * f64::from(nodes),
        }],
        annotate: true,
        ..WorkloadSpec::default()
    };
    let empty = InitialCredits::Level(Level::Empty);
    let sc = match name {
        "cpu_exp1_naive" => base(
            name,
            cpu_fleet(InstanceClass::Burstable, empty),
            cpu_workload(OrderingPolicy::CpuIntensiveFirst),
            Policy::RandomOrder,
            BurstMode::Cpu,
        ),
        "cpu_exp2_reordered" => base(
            name,
            cpu_fleet(InstanceClass::Burstable, empty),
            cpu_workload(OrderingPolicy::CpuIntensiveLast),
            Policy::RandomOrder,
            BurstMode::Cpu,
        ),
        "cpu_exp3_unlimited" => base(
            name,
            cpu_fleet(InstanceClass::BurstableUnlimited, empty),
            cpu_workload(OrderingPolicy::CpuIntensiveFirst),
            Policy::RandomOrder,
            BurstMode::Cpu,
        ),
        "cpu_exp4_cash" => base(
            name,
            cpu_fleet(InstanceClass::Burstable, empty),
            cpu_workload(OrderingPolicy::CpuIntensiveLast),
            Policy::Cash,
            BurstMode::Cpu,
        ),
        "disk_2vm" | "disk_10vm" | "disk_20vm" => {
            let n = match name {
                "disk_2vm" => 2,
                "disk_10vm" => 10,
                _ => 20,
            };
            base(name, disk_fleet(n), disk_workload(n), Policy::Cash, BurstMode::Disk)
        }
        "cpu_skew_unlimited" => base(
            name,
            cpu_fleet(InstanceClass::BurstableUnlimited, skewed_credits()),
            WorkloadSpec {
                presets: vec![PresetRef {
                    name: "sql_agg_like".into(),
                    scale: 0.5,
                }],
                annotate: true,
                ..WorkloadSpec::default()
            },
            Policy::RandomOrder,
            BurstMode::Cpu,
        ),
        "cpu_skew_cash" => base(
            name,
            cpu_fleet(InstanceClass::Burstable, skewed_credits()),
            WorkloadSpec {
                presets: vec![PresetRef {
                    name: "sql_agg_like".into(),
                    scale: 0.5,
                }],
                annotate: true,
                ..WorkloadSpec::default()
            },
            Policy::Cash,
            BurstMode::Cpu,
        ),
        other => return Err(ScenarioError::UnknownPreset(other.to_string())),
    };
    Ok(sc)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 3

[[fleet]]
count = 1
class = "general_purpose"
vcpus = 2
slots = 2
network_capacity = 100.0

[fleet.disk]
volume_gb = 100.0
initial_credits = "full"
"#;

    #[test]
    fn minimal_scenario_parses() {
        let s = parse_scenario(MINIMAL).unwrap();
        assert_eq!(s.node_count(), 1);
        let inst = s.instantiate().unwrap();
        assert!(inst.stream.jobs.is_empty());
        assert_eq!(inst.cluster.nodes()[0].disk_bucket.balance(), EBS_BUCKET_CAPACITY);
    }

    #[test]
    fn missing_seed_is_rejected() {
        let text = MINIMAL.replace("seed = 3", "");
        match parse_scenario(&text) {
            Err(ScenarioError::Invalid(v)) => assert!(v.iter().any(|v| v.path == "seed")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn violations_are_reported_together() {
        let text = MINIMAL
            .replace("seed = 3", "")
            .replace("volume_gb = 100.0", "volume_gb = 2000.0")
            .replace("slots = 2", "slots = 0");
        let Err(ScenarioError::Invalid(v)) = parse_scenario(&text) else {
            panic!("expected violations");
        };
        let paths: Vec<_> = v.iter().map(|v| v.path.as_str()).collect();
        assert!(paths.contains(&"seed"));
        assert!(paths.contains(&"fleet[0].slots"));
        let peak = v.iter().find(|v| v.path == "fleet[0].disk.peak_iops").unwrap();
        assert!(peak.message.contains("n0"), "{}", peak.message);
    }

    #[test]
    fn syntax_errors_are_distinguished() {
        assert!(matches!(parse_scenario("seed = ["), Err(ScenarioError::Syntax(_))));
    }

    #[test]
    fn presets_round_trip() {
        for name in PRESET_NAMES {
            let s = preset_scenario(name).unwrap();
            s.validate().unwrap();
            let text = s.to_toml();
            let back = parse_scenario(&text).unwrap();
            assert_eq!(back, s, "{name}");
            assert_eq!(parse_scenario(&back.to_toml()).unwrap(), s);
            assert!(preset_description(name).is_some());
        }
        assert!(preset_scenario("nope").is_err());
    }

    #[test]
    fn per_node_credits_length_checked() {
        let mut s = preset_scenario("cpu_skew_cash").unwrap();
        if let Some(cpu) = s.fleet[0].cpu.as_mut() {
            cpu.initial_credits = InitialCredits::PerNode(vec![0.0; 3]);
        }
        let Err(ScenarioError::Invalid(v)) = s.validate() else {
            panic!()
        };
        assert!(v.iter().any(|v| v.path == "fleet[0].cpu.initial_credits"));
    }

    #[test]
    fn orderings_put_sql_first_or_last() {
        let first = preset_scenario("cpu_exp1_naive").unwrap().instantiate().unwrap();
        let last = preset_scenario("cpu_exp2_reordered").unwrap().instantiate().unwrap();
        assert!(first.stream.jobs[0].name.starts_with("sql"));
        assert!(last.stream.jobs.last().unwrap().name.starts_with("sql"));
        assert!(first.stream.sequential);
    }
}
