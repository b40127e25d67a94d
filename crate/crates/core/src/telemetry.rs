//! Metrics-service emulation: coarse actual credit readings, utilization
//! windows, and a predictor that keeps the scheduler's credit view fresh
//! between actual readings.
//!
//! Actual balances arrive every `actual_period` (300 s by default).
//! Every `predict_period` (60 s) each entry older than that period is
//! replaced by a prediction chained from its previous value. The monitor
//! receives the node's granted service rates as they change and replays the
//! bucket recurrence over them, clamping at every piece, so predictions stay
//! exact through depletion and saturation inside a window. The window's mean
//! utilization is reported alongside each prediction.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::Cluster;
use crate::credits::TokenBucket;
use crate::ids::{NodeId, SimTime};
use crate::scalar::{clamp, Scalar};
use crate::workload::BurstMode;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TelemetryError {
    #[error("credit input is missing node {0}")]
    MissingNode(NodeId),
    #[error("credit input names unknown node {0}")]
    UnknownNode(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Provenance {
    Actual,
    Predicted { from_actual_at: SimTime },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CreditEntry {
    /// `None` for instances without a CPU bucket.
    pub cpu: Option<f64>,
    pub disk: f64,
    pub updated_at: SimTime,
    pub provenance: Provenance,
}

impl CreditEntry {
    /// Balance used for ordering. Nodes without CPU credits never throttle, so
    /// they rank as if holding unlimited credits.
    pub fn credits(&self, basis: BurstMode) -> f64 {
        match basis {
            BurstMode::Cpu => self.cpu.unwrap_or(f64::INFINITY),
            BurstMode::Disk => self.disk,
        }
    }

    fn last_actual(&self) -> SimTime {
        match self.provenance {
            Provenance::Actual => self.updated_at,
            Provenance::Predicted { from_actual_at } => from_actual_at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CreditSnapshot {
    pub time: SimTime,
    pub entries: BTreeMap<NodeId, CreditEntry>,
}

impl CreditSnapshot {
    pub fn from_actual(readings: &[CreditReading], now: SimTime) -> Self {
        let entries = readings
            .iter()
            .map(|r| {
                (
                    r.node,
                    CreditEntry {
                        cpu: r.cpu,
                        disk: r.disk,
                        updated_at: now,
                        provenance: Provenance::Actual,
                    },
                )
            })
            .collect();
        Self { time: now, entries }
    }

    /// Age of the stalest entry at `now`.
    pub fn max_age(&self, now: SimTime) -> SimTime {
        self.entries
            .values()
            .map(|e| now - e.updated_at)
            .max()
            .unwrap_or(SimTime::ZERO)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CreditReading {
    pub node: NodeId,
    pub cpu: Option<f64>,
    pub disk: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilizationSample {
    pub node: NodeId,
    pub window_start: SimTime,
    pub window_end: SimTime,
    /// Mean granted CPU over the window, in vCPUs.
    pub mean_cpu: f64,
    pub mean_iops: f64,
}

/// Exact bucket balances of every node.
pub fn sample_actual(cluster: &Cluster) -> Vec<CreditReading> {
    cluster
        .nodes()
        .iter()
        .map(|n| CreditReading {
            node: n.id,
            cpu: n.cpu_bucket.map(|b| b.balance()),
            disk: n.disk_bucket.balance(),
        })
        .collect()
}

/// Linear extrapolation of a bucket balance from `last` over `elapsed`
/// seconds of mean service `mean_rate`, clamped to `[0, capacity]`.
pub fn predict_balance<S: Scalar>(last: S, bucket: &TokenBucket<S>, mean_rate: S, elapsed: S) -> S {
    let net = bucket.earn_rate() - bucket.credit_cost(mean_rate);
    clamp(last + net * elapsed, S::zero(), bucket.capacity())
}

/// Granted rates (vCPUs, IOPS) on one node from `start` until the next segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSegment {
    pub start: SimTime,
    pub cpu: f64,
    pub iops: f64,
}

/// Balance after serving each `(rate, seconds)` piece in turn, starting from
/// `last` and clamping to `[0, capacity]` after every piece.
pub fn replay_balance<S: Scalar>(last: S, bucket: &TokenBucket<S>, pieces: &[(S, S)]) -> S {
    pieces.iter().fold(last, |bal, &(rate, dt)| {
        predict_balance(bal, bucket, rate, dt)
    })
}

/// Splits `log` into `(cpu, iops, seconds)` pieces covering `[from, to)`.
/// Time before the first segment counts as idle.
fn pieces(log: &[RateSegment], from: SimTime, to: SimTime) -> Vec<(f64, f64, f64)> {
    let mut out = Vec::with_capacity(log.len() + 1);
    let mut t = from;
    let mut rate = (0.0, 0.0);
    for seg in log {
        if seg.start > t {
            let end = seg.start.min(to);
            out.push((rate.0, rate.1, (end - t).as_secs()));
            t = end;
        }
        rate = (seg.cpu, seg.iops);
    }
    if to > t {
        out.push((rate.0, rate.1, (to - t).as_secs()));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub enum SnapshotInput {
    Actual(Vec<CreditReading>),
    Predicted(Vec<CreditReading>),
}

/// Merge an actual or predicted reading set into `previous`.
///
/// Actual readings always overwrite. Predicted readings overwrite only entries
/// at least `predict_period` old. Inputs must cover exactly the snapshot's
/// nodes (an empty previous snapshot accepts any actual set).
pub fn refresh_snapshot(
    previous: &CreditSnapshot,
    input: &SnapshotInput,
    now: SimTime,
    predict_period: SimTime,
) -> Result<CreditSnapshot, TelemetryError> {
    let readings = match input {
        SnapshotInput::Actual(r) | SnapshotInput::Predicted(r) => r,
    };
    if !(previous.entries.is_empty() && matches!(input, SnapshotInput::Actual(_))) {
        for r in readings {
            if !previous.entries.contains_key(&r.node) {
                return Err(TelemetryError::UnknownNode(r.node));
            }
        }
        for id in previous.entries.keys() {
            if !readings.iter().any(|r| r.node == *id) {
                return Err(TelemetryError::MissingNode(*id));
            }
        }
    }
    let mut next = previous.clone();
    next.time = now;
    for r in readings {
        match input {
            SnapshotInput::Actual(_) => {
                next.entries.insert(
                    r.node,
                    CreditEntry {
                        cpu: r.cpu,
                        disk: r.disk,
                        updated_at: now,
                        provenance: Provenance::Actual,
                    },
                );
            }
            SnapshotInput::Predicted(_) => {
                let entry = next.entries.get_mut(&r.node).expect("checked above");
                if now - entry.updated_at >= predict_period {
                    *entry = CreditEntry {
                        cpu: r.cpu,
                        disk: r.disk,
                        updated_at: now,
                        provenance: Provenance::Predicted {
                            from_actual_at: entry.last_actual(),
                        },
                    };
                }
            }
        }
    }
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TelemetryConfig {
    #[serde(default = "default_actual_period")]
    pub actual_period_s: f64,
    #[serde(default = "default_predict_period")]
    pub predict_period_s: f64,
    /// Amplitude of uniform additive noise on actual readings, in credits.
    #[serde(default)]
    pub noise_credits: f64,
}

fn default_actual_period() -> f64 {
    300.0
}
fn default_predict_period() -> f64 {
    60.0
}

impl Default for TelemetryConfig {
    fn default() -> Self {
        Self {
            actual_period_s: default_actual_period(),
            predict_period_s: default_predict_period(),
            noise_credits: 0.0,
        }
    }
}

/// Cumulative service delivered by a node since the start of the run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UsageIntegral {
    /// vCPU-seconds granted.
    pub cpu: f64,
    /// I/O operations served.
    pub io: f64,
}

/// One predicted entry next to the ground truth at the same instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionAudit {
    pub time: SimTime,
    pub node: NodeId,
    pub from_actual_at: SimTime,
    pub utilization: UtilizationSample,
    pub cpu_predicted: Option<f64>,
    pub cpu_true: Option<f64>,
    pub disk_predicted: f64,
    pub disk_true: f64,
}

/// Stateful monitor driven by the engine's timer events.
#[derive(Debug, Clone)]
pub struct Monitor {
    config: TelemetryConfig,
    snapshot: CreditSnapshot,
    marks: BTreeMap<NodeId, UsageIntegral>,
    /// Per node, rate segments since its entry was last written.
    rates: BTreeMap<NodeId, Vec<RateSegment>>,
    rng: ChaCha8Rng,
}

impl Monitor {
    pub fn new(config: TelemetryConfig, cluster: &Cluster, usage: &[UsageIntegral], now: SimTime, seed: u64) -> Self {
        let mut m = Self {
            config,
            snapshot: CreditSnapshot::default(),
            marks: BTreeMap::new(),
            rates: BTreeMap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        m.observe_actual(cluster, usage, now);
        m
    }

    pub fn config(&self) -> &TelemetryConfig {
        &self.config
    }

    pub fn snapshot(&self) -> &CreditSnapshot {
        &self.snapshot
    }

    /// Records the node's granted rates from `seg.start` onward.
    pub fn note_rates(&mut self, node: NodeId, seg: RateSegment) {
        let log = self.rates.entry(node).or_default();
        match log.last_mut() {
            Some(last) if last.start == seg.start => *last = seg,
            _ => log.push(seg),
        }
    }

    /// Drops segments before `now`, keeping the one in force at `now`.
    fn trim_rates(&mut self, node: NodeId, now: SimTime) {
        if let Some(log) = self.rates.get_mut(&node) {
            let keep = log.iter().rposition(|s| s.start <= now).unwrap_or(0);
            log.drain(..keep);
            if let Some(first) = log.first_mut() {
                first.start = first.start.max(now);
            }
        }
    }

    fn predict_period(&self) -> SimTime {
        SimTime::from_secs(self.config.predict_period_s)
    }

    pub fn observe_actual(&mut self, cluster: &Cluster, usage: &[UsageIntegral], now: SimTime) -> &CreditSnapshot {
        let mut readings = sample_actual(cluster);
        if self.config.noise_credits > 0.0 {
            let a = self.config.noise_credits;
            for (r, n) in readings.iter_mut().zip(cluster.nodes()) {
                if let (Some(v), Some(b)) = (r.cpu.as_mut(), n.cpu_bucket) {
                    *v = (*v + self.rng.random_range(-a..a)).clamp(0.0, b.capacity());
                }
                r.disk = (r.disk + self.rng.random_range(-a..a)).clamp(0.0, n.disk_bucket.capacity());
            }
        }
        self.snapshot = refresh_snapshot(
            &self.snapshot,
            &SnapshotInput::Actual(readings),
            now,
            self.predict_period(),
        )
        .expect("readings cover every node");
        for (n, u) in cluster.nodes().iter().zip(usage) {
            self.marks.insert(n.id, *u);
            self.trim_rates(n.id, now);
        }
        &self.snapshot
    }

    /// Refresh stale entries with predictions; returns one audit row per
    /// entry that was replaced.
    pub fn observe_predict(&mut self, cluster: &Cluster, usage: &[UsageIntegral], now: SimTime) -> Vec<PredictionAudit> {
        let period = self.predict_period();
        let mut readings = Vec::with_capacity(cluster.len());
        let mut audits = Vec::new();
        let mut refreshed = Vec::new();
        for (node, u) in cluster.nodes().iter().zip(usage) {
            let entry = self.snapshot.entries[&node.id];
            let age = now - entry.updated_at;
            if age < period {
                readings.push(CreditReading {
                    node: node.id,
                    cpu: entry.cpu,
                    disk: entry.disk,
                });
                continue;
            }
            let mark = self.marks.get(&node.id).copied().unwrap_or_default();
            let elapsed = age.as_secs();
            let util = UtilizationSample {
                node: node.id,
                window_start: entry.updated_at,
                window_end: now,
                mean_cpu: if elapsed > 0.0 { (u.cpu - mark.cpu) / elapsed } else { 0.0 },
                mean_iops: if elapsed > 0.0 { (u.io - mark.io) / elapsed } else { 0.0 },
            };
            let log = self.rates.get(&node.id).map(Vec::as_slice).unwrap_or(&[]);
            let window = pieces(log, entry.updated_at, now);
            let cpu_pieces: Vec<(f64, f64)> = window.iter().map(|&(c, _, dt)| (c, dt)).collect();
            let io_pieces: Vec<(f64, f64)> = window.iter().map(|&(_, io, dt)| (io, dt)).collect();
            let cpu = match (entry.cpu, node.cpu_bucket) {
                (Some(last), Some(b)) => Some(replay_balance(last, &b, &cpu_pieces)),
                _ => None,
            };
            let disk = replay_balance(entry.disk, &node.disk_bucket, &io_pieces);
            readings.push(CreditReading { node: node.id, cpu, disk });
            audits.push(PredictionAudit {
                time: now,
                node: node.id,
                from_actual_at: entry.last_actual(),
                utilization: util,
                cpu_predicted: cpu,
                cpu_true: node.cpu_bucket.map(|b| b.balance()),
                disk_predicted: disk,
                disk_true: node.disk_bucket.balance(),
            });
            self.marks.insert(node.id, *u);
            refreshed.push(node.id);
        }
        for id in refreshed {
            self.trim_rates(id, now);
        }
        self.snapshot = refresh_snapshot(
            &self.snapshot,
            &SnapshotInput::Predicted(readings),
            now,
            period,
        )
        .expect("readings cover every node");
        audits
    }
}
