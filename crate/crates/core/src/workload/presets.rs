//! Synthetic workload presets.
//!
//! These stand in for HiBench batch jobs and TPC-DS style queries. Only the
//! qualitative profile matters: the SQL aggregation preset demands more CPU
//! per slot than a 40% baseline, PageRank and K-means demand less, and the
//! TPC-DS analog is a set of disk-heavy query DAGs arriving at fixed
//! intervals and running concurrently.
//!
//! Generation draws from a ChaCha8 stream seeded with `seed` mixed with a
//! per-preset salt. Draw order: jobs in order, vertices in id order, and for
//! each vertex first the cpu, disk and network demand (each a uniform draw
//! from its range, or no draw when the range is degenerate), then one work
//! multiplier per task in index order.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Annotation, Dag, DagVertex, Job, JobStream, VertexKind, WorkloadError};
use crate::cluster::Demand;
use crate::ids::{JobId, VertexId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkloadPreset {
    SqlAggLike,
    PagerankLike,
    KmeansLike,
    TpcdsLikeQ,
}

impl WorkloadPreset {
    pub const ALL: [WorkloadPreset; 4] = [
        WorkloadPreset::SqlAggLike,
        WorkloadPreset::PagerankLike,
        WorkloadPreset::KmeansLike,
        WorkloadPreset::TpcdsLikeQ,
    ];

    pub fn name(self) -> &'static str {
        match self {
            WorkloadPreset::SqlAggLike => "sql_agg_like",
            WorkloadPreset::PagerankLike => "pagerank_like",
            WorkloadPreset::KmeansLike => "kmeans_like",
            WorkloadPreset::TpcdsLikeQ => "tpcds_like_q",
        }
    }

    fn salt(self) -> u64 {
        match self {
            WorkloadPreset::SqlAggLike => 0x5a1_a66,
            WorkloadPreset::PagerankLike => 0x9a6e_4a4c,
            WorkloadPreset::KmeansLike => 0x0004_ea45,
            WorkloadPreset::TpcdsLikeQ => 0x0007_bcd5,
        }
    }

    /// True for the jobs chained one after another (HiBench style).
    pub fn is_sequential(self) -> bool {
        !matches!(self, WorkloadPreset::TpcdsLikeQ)
    }
}

impl fmt::Display for WorkloadPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WorkloadPreset {
    type Err = WorkloadError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| WorkloadError::UnknownPreset(s.to_string()))
    }
}

/// Uniform range; `lo == hi` means a constant.
#[derive(Debug, Clone, Copy)]
struct Range(f64, f64);

impl Range {
    const ZERO: Range = Range(0.0, 0.0);

    fn draw(self, rng: &mut ChaCha8Rng) -> f64 {
        if self.1 > self.0 {
            rng.random_range(self.0..self.1)
        } else {
            self.0
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct VertexParams {
    name: &'static str,
    kind: VertexKind,
    /// Task count at scale 1.
    tasks: f64,
    cpu: Range,
    disk: Range,
    network: Range,
    work: Demand,
    /// Per-task work multiplier drawn from `[1 - spread, 1 + spread]`.
    spread: f64,
}

struct JobParams {
    name: &'static str,
    submit_time: f64,
    vertices: Vec<(VertexParams, Vec<u32>)>,
}

fn map_reduce(
    name: &'static str,
    map: VertexParams,
    shuffle: VertexParams,
    reduce: VertexParams,
) -> JobParams {
    JobParams {
        name,
        submit_time: 0.0,
        vertices: vec![(map, vec![]), (shuffle, vec![0]), (reduce, vec![1])],
    }
}

fn cpu_map(tasks: f64, cpu: Range, work: f64) -> VertexParams {
    VertexParams {
        name: "map",
        kind: VertexKind::RootInput,
        tasks,
        cpu,
        disk: Range(20.0, 20.0),
        network: Range::ZERO,
        work: Demand::new(work, 0.0, 0.0),
        spread: 0.25,
    }
}

fn shuffle(tasks: f64, network: f64, work: f64) -> VertexParams {
    VertexParams {
        name: "shuffle",
        kind: VertexKind::Shuffle,
        tasks,
        cpu: Range(0.1, 0.1),
        disk: Range(10.0, 10.0),
        network: Range(network, network),
        work: Demand::new(0.0, 0.0, work),
        spread: 0.2,
    }
}

fn cpu_reduce(tasks: f64, cpu: Range, work: f64) -> VertexParams {
    VertexParams {
        name: "reduce",
        kind: VertexKind::Generic,
        tasks,
        cpu,
        disk: Range(10.0, 10.0),
        network: Range::ZERO,
        work: Demand::new(work, 0.0, 0.0),
        spread: 0.2,
    }
}

fn scan(name: &'static str, tasks: f64, iops: Range, work_ios: f64) -> VertexParams {
    VertexParams {
        name,
        kind: VertexKind::RootInput,
        tasks,
        cpu: Range(0.25, 0.35),
        disk: iops,
        network: Range::ZERO,
        work: Demand::new(0.0, work_ios, 0.0),
        spread: 0.3,
    }
}

fn params(preset: WorkloadPreset) -> Vec<JobParams> {
    match preset {
        WorkloadPreset::SqlAggLike => vec![
            map_reduce(
                "sql_agg.scan_aggregate",
                cpu_map(12.0, Range(0.85, 1.0), 900.0),
                shuffle(3.0, 200.0, 9_000.0),
                cpu_reduce(3.0, Range(0.6, 0.8), 300.0),
            ),
            map_reduce(
                "sql_agg.rollup",
                cpu_map(8.0, Range(0.85, 1.0), 720.0),
                shuffle(2.0, 200.0, 6_000.0),
                cpu_reduce(2.0, Range(0.6, 0.8), 240.0),
            ),
        ],
        WorkloadPreset::PagerankLike => (0..3)
            .map(|i| {
                map_reduce(
                    ["pagerank.iter0", "pagerank.iter1", "pagerank.iter2"][i],
                    cpu_map(10.0, Range(0.2, 0.3), 60.0),
                    shuffle(3.0, 150.0, 6_000.0),
                    cpu_reduce(3.0, Range(0.2, 0.3), 25.0),
                )
            })
            .collect(),
        WorkloadPreset::KmeansLike => (0..2)
            .map(|i| {
                map_reduce(
                    ["kmeans.iter0", "kmeans.iter1"][i],
                    cpu_map(10.0, Range(0.25, 0.35), 70.0),
                    shuffle(2.0, 100.0, 4_000.0),
                    cpu_reduce(2.0, Range(0.2, 0.3), 25.0),
                )
            })
            .collect(),
        WorkloadPreset::TpcdsLikeQ => {
            let query = |name, submit_time, scans: &[(&'static str, f64)]| {
                let mut vertices: Vec<(VertexParams, Vec<u32>)> = scans
                    .iter()
                    .map(|&(n, tasks)| (scan(n, tasks, Range(400.0, 700.0), 90_000.0), vec![]))
                    .collect();
                let ups: Vec<u32> = (0..scans.len() as u32).collect();
                vertices.push((shuffle(3.0, 200.0, 12_000.0), ups));
                vertices.push((
                    cpu_reduce(2.0, Range(0.4, 0.6), 20.0),
                    vec![scans.len() as u32],
                ));
                JobParams {
                    name,
                    submit_time,
                    vertices,
                }
            };
            vec![
                query("tpcds.q66", 0.0, &[("scan_web_sales", 6.0), ("scan_catalog_sales", 6.0)]),
                query("tpcds.q49", 300.0, &[("scan_web_returns", 5.0), ("scan_store_returns", 5.0)]),
                query("tpcds.q37", 600.0, &[("scan_inventory", 8.0)]),
                query("tpcds.q21", 900.0, &[("scan_warehouse_inventory", 6.0)]),
                query("tpcds.q40", 1200.0, &[("scan_catalog_sales", 4.0), ("scan_catalog_returns", 4.0)]),
                query("tpcds.q82", 1500.0, &[("scan_store_inventory", 8.0)]),
            ]
        }
    }
}

/// Deterministic synthetic job stream for `preset` at `scale`.
///
/// `scale` multiplies task counts (rounded, at least one task per vertex).
pub fn generate_workload(
    preset: WorkloadPreset,
    scale: f64,
    seed: u64,
) -> Result<JobStream, WorkloadError> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(WorkloadError::InvalidScale(scale));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ preset.salt());
    let mut jobs = Vec::new();
    for (j, jp) in params(preset).into_iter().enumerate() {
        let mut vertices = Vec::with_capacity(jp.vertices.len());
        for (v, (vp, ups)) in jp.vertices.into_iter().enumerate() {
            let demand = Demand::new(
                vp.cpu.draw(&mut rng),
                vp.disk.draw(&mut rng),
                vp.network.draw(&mut rng),
            );
            let task_count = ((vp.tasks * scale).round() as u32).max(1);
            let work_scale = (0..task_count)
                .map(|_| Range(1.0 - vp.spread, 1.0 + vp.spread).draw(&mut rng))
                .collect();
            vertices.push(DagVertex {
                id: VertexId(v as u32),
                name: vp.name.to_string(),
                kind: vp.kind,
                annotation: Annotation::NONE,
                task_count,
                per_task_demand: demand,
                per_task_work: vp.work,
                work_scale,
                upstream: ups.into_iter().map(VertexId).collect(),
            });
        }
        jobs.push(Job {
            id: JobId(j as u32),
            name: jp.name.to_string(),
            submit_time: jp.submit_time,
            dag: Dag { vertices },
        });
    }
    let stream = JobStream::new(jobs, preset.is_sequential());
    stream.validate()?;
    Ok(stream)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let a = generate_workload(WorkloadPreset::PagerankLike, 1.0, 7).unwrap();
        let b = generate_workload(WorkloadPreset::PagerankLike, 1.0, 7).unwrap();
        assert_eq!(a, b);
        let c = generate_workload(WorkloadPreset::PagerankLike, 1.0, 8).unwrap();
        assert_ne!(a, c);
    }

    /// Mean CPU demand per task over all tasks of the stream.
    fn mean_task_cpu(s: &JobStream) -> f64 {
        let total: f64 = s.jobs.iter().map(|j| j.cpu_intensity() * j.dag.task_count() as f64).sum();
        total / s.task_count() as f64
    }

    #[test]
    fn cpu_profiles_straddle_the_baseline() {
        for seed in 0..20 {
            let sql = generate_workload(WorkloadPreset::SqlAggLike, 1.0, seed).unwrap();
            assert!(mean_task_cpu(&sql) > 0.40);
            for p in [WorkloadPreset::PagerankLike, WorkloadPreset::KmeansLike] {
                let s = generate_workload(p, 1.0, seed).unwrap();
                // every task, not just the mean, stays under a 40% slot baseline
                for j in &s.jobs {
                    for v in &j.dag.vertices {
                        assert!(v.per_task_demand.cpu < 0.40, "{p} {}", v.name);
                    }
                }
            }
        }
    }

    #[test]
    fn tpcds_queries_arrive_staggered_in_parallel() {
        let s = generate_workload(WorkloadPreset::TpcdsLikeQ, 1.0, 1).unwrap();
        assert_eq!(s.jobs.len(), 6);
        assert!(!s.sequential);
        assert!(s.jobs.windows(2).all(|w| w[0].submit_time < w[1].submit_time));
    }

    #[test]
    fn bad_inputs() {
        assert!(matches!(
            "nope".parse::<WorkloadPreset>(),
            Err(WorkloadError::UnknownPreset(_))
        ));
        assert!(generate_workload(WorkloadPreset::KmeansLike, 0.0, 1).is_err());
        assert_eq!(
            "kmeans_like".parse::<WorkloadPreset>().unwrap(),
            WorkloadPreset::KmeansLike
        );
    }

    #[test]
    fn scale_multiplies_task_counts() {
        let one = generate_workload(WorkloadPreset::SqlAggLike, 1.0, 3).unwrap();
        let two = generate_workload(WorkloadPreset::SqlAggLike, 2.0, 3).unwrap();
        assert_eq!(two.task_count(), 2 * one.task_count());
    }
}
