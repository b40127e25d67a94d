use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::trace::SimTrace;
use crate::ids::SimTime;
use crate::workload::Stage;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseElapsed {
    pub phase: Stage,
    /// Sum of durations of completed tasks in this phase.
    pub cumulative_elapsed_s: f64,
    pub task_count: usize,
}

/// Cross-node population standard deviation of a credit balance over time.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CreditDispersion {
    pub times_s: Vec<f64>,
    pub std_dev: Vec<f64>,
    /// Mean over the (uniformly spaced) samples.
    pub time_average: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub complete: bool,
    pub phases: Vec<PhaseElapsed>,
    pub cumulative_elapsed_s: f64,
    /// Per job, completion minus submission; `None` if unfinished.
    pub job_completion_s: Vec<(String, Option<f64>)>,
    pub makespan_s: f64,
    pub cpu_credit_std: Option<CreditDispersion>,
    pub disk_credit_std: CreditDispersion,
    /// Total I/O served over the makespan.
    pub avg_granted_iops: f64,
    /// (time, mean cpu utilization across nodes).
    pub cpu_util_timeline: Vec<(f64, f64)>,
    pub avg_cpu_util: f64,
}

fn population_std(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    var.sqrt()
}

fn dispersion(groups: &BTreeMap<SimTime, Vec<f64>>) -> CreditDispersion {
    let times_s: Vec<f64> = groups.keys().map(|t| t.as_secs()).collect();
    let std_dev: Vec<f64> = groups.values().map(|v| population_std(v)).collect();
    let time_average = if std_dev.is_empty() {
        0.0
    } else {
        std_dev.iter().sum::<f64>() / std_dev.len() as f64
    };
    CreditDispersion {
        times_s,
        std_dev,
        time_average,
    }
}

pub fn metrics(trace: &SimTrace) -> MetricsReport {
    let mut phases: Vec<PhaseElapsed> = Stage::ALL
        .iter()
        .map(|&phase| PhaseElapsed {
            phase,
            cumulative_elapsed_s: 0.0,
            task_count: 0,
        })
        .collect();
    for t in trace.tasks.values() {
        if let Some(d) = t.duration() {
            let p = phases.iter_mut().find(|p| p.phase == t.stage).expect("all stages");
            p.cumulative_elapsed_s += d.as_secs();
            p.task_count += 1;
        }
    }
    let cumulative_elapsed_s = phases.iter().map(|p| p.cumulative_elapsed_s).sum();

    let job_completion_s = trace
        .jobs
        .iter()
        .map(|j| {
            let d = match (j.submitted, j.completed) {
                (Some(s), Some(c)) => Some((c - s).as_secs()),
                _ => None,
            };
            (j.name.clone(), d)
        })
        .collect();

    let makespan_s = trace.makespan().as_secs();

    let mut cpu: BTreeMap<SimTime, Vec<f64>> = BTreeMap::new();
    let mut disk: BTreeMap<SimTime, Vec<f64>> = BTreeMap::new();
    let mut util: BTreeMap<SimTime, Vec<f64>> = BTreeMap::new();
    for s in &trace.samples {
        if let Some(c) = s.cpu_credits {
            cpu.entry(s.time).or_default().push(c);
        }
        disk.entry(s.time).or_default().push(s.disk_credits);
        util.entry(s.time).or_default().push(s.cpu_util);
    }
    let cpu_credit_std = (!cpu.is_empty()).then(|| dispersion(&cpu));
    let disk_credit_std = dispersion(&disk);

    let total_io: f64 = trace.usage.iter().map(|u| u.io).sum();
    let avg_granted_iops = if makespan_s > 0.0 { total_io / makespan_s } else { 0.0 };

    let cpu_util_timeline: Vec<(f64, f64)> = util
        .iter()
        .map(|(t, v)| (t.as_secs(), v.iter().sum::<f64>() / v.len() as f64))
        .collect();
    let avg_cpu_util = if cpu_util_timeline.is_empty() {
        0.0
    } else {
        cpu_util_timeline.iter().map(|(_, u)| u).sum::<f64>() / cpu_util_timeline.len() as f64
    };

    MetricsReport {
        complete: trace.complete,
        phases,
        cumulative_elapsed_s,
        job_completion_s,
        makespan_s,
        cpu_credit_std,
        disk_credit_std,
        avg_granted_iops,
        cpu_util_timeline,
        avg_cpu_util,
    }
}
