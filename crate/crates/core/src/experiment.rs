//! Running a scenario end to end, writing its artifact bundle, and comparing
//! two bundles.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::billing::{scenario_cost, BillingError, CostReport};
use crate::engine::{metrics, run, EngineError, MetricsReport, SimTrace};
use crate::scenario::{Scenario, ScenarioError};
use crate::workload::JobStream;

pub const EVENTS_FILE: &str = "events.jsonl";
pub const METRICS_FILE: &str = "metrics.csv";
pub const PHASES_FILE: &str = "phases.csv";
pub const JOBS_FILE: &str = "jobs.csv";
pub const COST_FILE: &str = "cost.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SCENARIO_FILE: &str = "scenario.toml";
pub const MANIFEST_FILE: &str = "manifest.json";

pub const METRICS_HEADER: &str = "time,node_id,cpu_credits,disk_credits,cpu_util,granted_iops";
pub const PHASES_HEADER: &str = "phase,cumulative_elapsed_s,task_count";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Billing(#[from] BillingError),
    #[error("cannot access {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON in {}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("bundles ran different workloads ({a} vs {b})")]
    IncompatibleWorkloads { a: String, b: String },
}

/// Everything a run produces, in memory.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub scenario: Scenario,
    pub workload_key: String,
    pub trace: SimTrace,
    pub metrics: MetricsReport,
    pub cost: CostReport,
}

/// Digest of the jobs independent of submission order and numbering.
pub fn workload_key(stream: &JobStream) -> String {
    let mut jobs: Vec<_> = stream
        .jobs
        .iter()
        .map(|j| serde_json::to_string(&(&j.name, &j.dag)).expect("jobs serialize"))
        .collect();
    jobs.sort();
    hex::encode(Sha256::digest(jobs.join("\n").as_bytes()))
}

pub fn simulate(scenario: &Scenario) -> Result<RunOutput, ExperimentError> {
    let inst = scenario.instantiate()?;
    let key = workload_key(&inst.stream);
    let trace = run(inst.engine, inst.cluster, inst.stream)?;
    let metrics = metrics(&trace);
    let cost = scenario_cost(&trace, &scenario.pricing)?;
    Ok(RunOutput {
        scenario: scenario.clone(),
        workload_key: key,
        trace,
        metrics,
        cost,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub scenario_name: String,
    pub seed: u64,
    pub scenario_digest: String,
    pub event_log_digest: String,
    pub workload_key: String,
    pub complete: bool,
    pub files: Vec<String>,
}

/// Flat, comparable headline numbers of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub metrics: BTreeMap<String, f64>,
}

impl Summary {
    pub fn of(out: &RunOutput) -> Self {
        let m = &out.metrics;
        let mut v = BTreeMap::new();
        v.insert("makespan_s".into(), m.makespan_s);
        v.insert("cumulative_elapsed_s".into(), m.cumulative_elapsed_s);
        for p in &m.phases {
            v.insert(format!("{}_elapsed_s", p.phase), p.cumulative_elapsed_s);
        }
        if let Some(c) = &m.cpu_credit_std {
            v.insert("cpu_credit_std_avg".into(), c.time_average);
        }
        v.insert("disk_credit_std_avg".into(), m.disk_credit_std.time_average);
        v.insert("avg_granted_iops".into(), m.avg_granted_iops);
        v.insert("avg_cpu_util".into(), m.avg_cpu_util);
        v.insert("total_cost".into(), out.cost.total);
        v.insert("surplus_cost".into(), out.cost.surplus_total);
        for (name, t) in &m.job_completion_s {
            if let Some(t) = t {
                v.insert(format!("job_{name}_s"), *t);
            }
        }
        Summary { metrics: v }
    }
}

fn higher_is_better(metric: &str) -> bool {
    matches!(metric, "avg_granted_iops" | "avg_cpu_util")
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), ExperimentError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| ExperimentError::Io { path, source })
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn metrics_csv(trace: &SimTrace) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in &trace.samples {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.time.as_secs(),
            r.node.0,
            fmt_opt(r.cpu_credits),
            r.disk_credits,
            r.cpu_util,
            r.granted_iops
        );
    }
    s
}

pub fn phases_csv(m: &MetricsReport) -> String {
    let mut s = String::from(PHASES_HEADER);
    s.push('\n');
    for p in &m.phases {
        let _ = writeln!(s, "{},{},{}", p.phase, p.cumulative_elapsed_s, p.task_count);
    }
    s
}

pub fn jobs_csv(trace: &SimTrace) -> String {
    let mut s = String::from("job_id,name,task_count,submitted_s,completed_s\n");
    for j in &trace.jobs {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            j.id.0,
            j.name,
            j.task_count,
            fmt_opt(j.submitted.map(|t| t.as_secs())),
            fmt_opt(j.completed.map(|t| t.as_secs()))
        );
    }
    s
}

/// Run `scenario` and write its bundle into `out_dir` (created if needed).
pub fn run_experiment(scenario: &Scenario, out_dir: &Path) -> Result<(RunOutput, Manifest), ExperimentError> {
    let out = simulate(scenario)?;
    fs::create_dir_all(out_dir).map_err(|source| ExperimentError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let log = out.trace.event_log();
    write(out_dir, EVENTS_FILE, &log)?;
    write(out_dir, METRICS_FILE, &metrics_csv(&out.trace))?;
    write(out_dir, PHASES_FILE, &phases_csv(&out.metrics))?;
    write(out_dir, JOBS_FILE, &jobs_csv(&out.trace))?;
    write(out_dir, COST_FILE, &pretty(&out.cost))?;
    write(out_dir, SUMMARY_FILE, &pretty(&Summary::of(&out)))?;
    write(out_dir, SCENARIO_FILE, &scenario.to_toml())?;
    let manifest = Manifest {
        scenario_name: scenario.name.clone(),
        seed: scenario.seed.unwrap_or_default(),
        scenario_digest: scenario.digest(),
        event_log_digest: hex::encode(Sha256::digest(log.as_bytes())),
        workload_key: out.workload_key.clone(),
        complete: out.trace.complete,
        files: [
            EVENTS_FILE,
            METRICS_FILE,
            PHASES_FILE,
            JOBS_FILE,
            COST_FILE,
            SUMMARY_FILE,
            SCENARIO_FILE,
        ]
        .iter()
        .map(|s| s.to_string())
        .collect(),
    };
    write(out_dir, MANIFEST_FILE, &pretty(&manifest))?;
    Ok((out, manifest))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bundle {
    pub manifest: Manifest,
    pub summary: Summary,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: PathBuf) -> Result<T, ExperimentError> {
    let text = fs::read_to_string(&path).map_err(|source| ExperimentError::Io {
        path: path.clone(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| ExperimentError::Json { path, source })
}

pub fn load_bundle(dir: &Path) -> Result<Bundle, ExperimentError> {
    Ok(Bundle {
        manifest: read_json(dir.join(MANIFEST_FILE))?,
        summary: read_json(dir.join(SUMMARY_FILE))?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Improvement,
    Regression,
    Unchanged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub metric: String,
    pub a: f64,
    pub b: f64,
    /// `b / a`; 1 when both are zero.
    pub ratio: f64,
    pub difference: f64,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub rows: Vec<MetricDelta>,
}

impl Comparison {
    pub fn row(&self, metric: &str) -> Option<&MetricDelta> {
        self.rows.iter().find(|r| r.metric == metric)
    }

    pub fn to_table(&self) -> String {
        let mut s = format!("{:<28} {:>14} {:>14} {:>9} {:>14}  direction\n", "metric", "a", "b", "ratio", "b - a");
        for r in &self.rows {
            let dir = match r.direction {
                Direction::Improvement => "improvement",
                Direction::Regression => "regression",
                Direction::Unchanged => "unchanged",
            };
            let _ = writeln!(
                s,
                "{:<28} {:>14.4} {:>14.4} {:>9.4} {:>14.4}  {dir}",
                r.metric, r.a, r.b, r.ratio, r.difference
            );
        }
        s
    }
}

/// Per-metric deltas of `b` relative to `a`, for metrics present in both.
pub fn compare(a: &Bundle, b: &Bundle) -> Result<Comparison, ExperimentError> {
    if a.manifest.workload_key != b.manifest.workload_key {
        return Err(ExperimentError::IncompatibleWorkloads {
            a: a.manifest.scenario_name.clone(),
            b: b.manifest.scenario_name.clone(),
        });
    }
    let mut rows = Vec::new();
    for (metric, &va) in &a.summary.metrics {
        let Some(&vb) = b.summary.metrics.get(metric) else {
            continue;
        };
        let ratio = if va == 0.0 && vb == 0.0 { 1.0 } else { vb / va };
        let difference = vb - va;
        // Differences at round-off level are not a change.
        let direction = if (vb - va).abs() <= 1e-9 * va.abs().max(vb.abs()) {
            Direction::Unchanged
        } else if (vb > va) == higher_is_better(metric) {
            Direction::Improvement
        } else {
            Direction::Regression
        };
        rows.push(MetricDelta {
            metric: metric.clone(),
            a: va,
            b: vb,
            ratio,
            difference,
            direction,
        });
    }
    Ok(Comparison {
        a: a.manifest.scenario_name.clone(),
        b: b.manifest.scenario_name.clone(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundle(key: &str, metrics: &[(&str, f64)]) -> Bundle {
        Bundle {
            manifest: Manifest {
                scenario_name: key.into(),
                seed: 0,
                scenario_digest: String::new(),
                event_log_digest: String::new(),
                workload_key: key.into(),
                complete: true,
                files: vec![],
            },
            summary: Summary {
                metrics: metrics.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            },
        }
    }

    #[test]
    fn self_comparison_is_all_ones() {
        let a = bundle("w", &[("makespan_s", 10.0), ("surplus_cost", 0.0)]);
        let c = compare(&a, &a).unwrap();
        assert!(c.rows.iter().all(|r| r.ratio == 1.0 && r.direction == Direction::Unchanged));
    }

    #[test]
    fn directions_follow_metric_sense() {
        let a = bundle("w", &[("disk_credit_std_avg", 10.0), ("avg_granted_iops", 300.0)]);
        let b = bundle("w", &[("disk_credit_std_avg", 5.0), ("avg_granted_iops", 200.0)]);
        let c = compare(&a, &b).unwrap();
        assert_eq!(c.row("disk_credit_std_avg").unwrap().direction, Direction::Improvement);
        assert_eq!(c.row("disk_credit_std_avg").unwrap().ratio, 0.5);
        assert_eq!(c.row("avg_granted_iops").unwrap().direction, Direction::Regression);
    }

    #[test]
    fn mismatched_workloads_are_rejected() {
        let a = bundle("w1", &[]);
        let b = bundle("w2", &[]);
        assert!(matches!(compare(&a, &b), Err(ExperimentError::IncompatibleWorkloads { .. })));
    }
}
