//! Simulated VMs: slots, attached buckets, running-task bookkeeping and
//! intra-node contention.

use std::collections::BTreeMap;
use std::ops::{Add, AddAssign, Mul};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{NodeId, TaskId};
use crate::Bucket;

/// A per-resource quantity: vCPUs, IOPS and network units (rates or volumes).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Demand {
    #[serde(default)]
    pub cpu: f64,
    #[serde(default)]
    pub disk_iops: f64,
    #[serde(default)]
    pub network: f64,
}

impl Demand {
    pub const ZERO: Demand = Demand {
        cpu: 0.0,
        disk_iops: 0.0,
        network: 0.0,
    };

    pub fn new(cpu: f64, disk_iops: f64, network: f64) -> Self {
        Self {
            cpu,
            disk_iops,
            network,
        }
    }

    pub fn get(&self, r: Resource) -> f64 {
        match r {
            Resource::Cpu => self.cpu,
            Resource::Disk => self.disk_iops,
            Resource::Network => self.network,
        }
    }

    pub fn get_mut(&mut self, r: Resource) -> &mut f64 {
        match r {
            Resource::Cpu => &mut self.cpu,
            Resource::Disk => &mut self.disk_iops,
            Resource::Network => &mut self.network,
        }
    }

    pub fn is_non_negative(&self) -> bool {
        Resource::ALL.iter().all(|&r| self.get(r) >= 0.0 && self.get(r).is_finite())
    }
}

impl Add for Demand {
    type Output = Demand;
    fn add(self, o: Demand) -> Demand {
        Demand::new(self.cpu + o.cpu, self.disk_iops + o.disk_iops, self.network + o.network)
    }
}

impl AddAssign for Demand {
    fn add_assign(&mut self, o: Demand) {
        *self = *self + o;
    }
}

impl Mul<f64> for Demand {
    type Output = Demand;
    fn mul(self, k: f64) -> Demand {
        Demand::new(self.cpu * k, self.disk_iops * k, self.network * k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resource {
    Cpu,
    Disk,
    Network,
}

impl Resource {
    pub const ALL: [Resource; 3] = [Resource::Cpu, Resource::Disk, Resource::Network];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceClass {
    /// T3-like: CPU governed by a credit bucket, throttled when empty.
    Burstable,
    /// M5-like: fixed CPU rate, no CPU bucket.
    GeneralPurpose,
    /// T3 with unlimited mode: never throttled, surplus usage is billed.
    BurstableUnlimited,
}

impl InstanceClass {
    pub fn has_cpu_credits(self) -> bool {
        !matches!(self, InstanceClass::GeneralPurpose)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClusterError {
    #[error("node {0} has no free slot")]
    NoFreeSlot(NodeId),
    #[error("task {0} is already running")]
    DuplicateTask(TaskId),
    #[error("task {task} is not running on node {node}")]
    UnknownTask { node: NodeId, task: TaskId },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("invalid node {node}: {reason}")]
    InvalidNode { node: NodeId, reason: String },
}

/// Granted service on a node for the current demand mix.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NodeRates {
    pub demand: Demand,
    pub granted: Demand,
}

impl NodeRates {
    /// Processor-sharing split: each task gets the node's granted rate in
    /// proportion to its share of aggregate demand.
    pub fn share_of(&self, task_demand: Demand) -> Demand {
        let mut out = Demand::ZERO;
        for r in Resource::ALL {
            let total = self.demand.get(r);
            if total > 0.0 {
                *out.get_mut(r) = task_demand.get(r) * (self.granted.get(r) / total);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub id: NodeId,
    pub vcpu_count: u32,
    pub slot_count: u32,
    pub instance_class: InstanceClass,
    pub cpu_bucket: Option<Bucket>,
    pub disk_bucket: Bucket,
    /// Fixed network service rate in network units per second.
    pub network_capacity: f64,
    /// Baseline CPU fraction of the instance, used by billing.
    pub baseline_fraction: f64,
    running: BTreeMap<TaskId, Demand>,
}

impl NodeState {
    pub fn new(
        id: NodeId,
        vcpu_count: u32,
        slot_count: u32,
        instance_class: InstanceClass,
        cpu_bucket: Option<Bucket>,
        disk_bucket: Bucket,
        network_capacity: f64,
    ) -> Result<Self, ClusterError> {
        let invalid = |reason: &str| ClusterError::InvalidNode {
            node: id,
            reason: reason.to_string(),
        };
        if vcpu_count == 0 || slot_count == 0 {
            return Err(invalid("vcpu_count and slot_count must be >= 1"));
        }
        if instance_class.has_cpu_credits() != cpu_bucket.is_some() {
            return Err(invalid("cpu bucket present iff the class is burstable"));
        }
        if !(network_capacity > 0.0) {
            return Err(invalid("network_capacity must be > 0"));
        }
        let baseline_fraction = cpu_bucket
            .map(|b| b.baseline_rate() / f64::from(vcpu_count))
            .unwrap_or(1.0);
        Ok(Self {
            id,
            vcpu_count,
            slot_count,
            instance_class,
            cpu_bucket,
            disk_bucket,
            network_capacity,
            baseline_fraction,
            running: BTreeMap::new(),
        })
    }

    pub fn free_slots(&self) -> usize {
        self.slot_count as usize - self.running.len()
    }

    pub fn running(&self) -> &BTreeMap<TaskId, Demand> {
        &self.running
    }

    pub fn is_running(&self, task: TaskId) -> bool {
        self.running.contains_key(&task)
    }

    pub fn assign_task(&mut self, task: TaskId, demand: Demand) -> Result<(), ClusterError> {
        if self.running.contains_key(&task) {
            return Err(ClusterError::DuplicateTask(task));
        }
        if self.free_slots() == 0 {
            return Err(ClusterError::NoFreeSlot(self.id));
        }
        self.running.insert(task, demand);
        Ok(())
    }

    pub fn release_task(&mut self, task: TaskId) -> Result<Demand, ClusterError> {
        self.running.remove(&task).ok_or(ClusterError::UnknownTask {
            node: self.id,
            task,
        })
    }

    pub fn aggregate_demand(&self) -> Demand {
        self.running
            .values()
            .fold(Demand::ZERO, |acc, &d| acc + d)
    }

    /// Granted node-level rates under the current bucket state.
    pub fn rates(&self) -> NodeRates {
        let demand = self.aggregate_demand();
        let cores = f64::from(self.vcpu_count);
        let cpu = match (self.instance_class, &self.cpu_bucket) {
            (InstanceClass::Burstable, Some(b)) => b
                .effective_rate(demand.cpu)
                .expect("demands are non-negative"),
            (InstanceClass::BurstableUnlimited, Some(b)) => demand.cpu.min(b.peak_rate()),
            _ => demand.cpu,
        }
        .min(cores);
        let disk = self
            .disk_bucket
            .effective_rate(demand.disk_iops)
            .expect("demands are non-negative");
        let network = demand.network.min(self.network_capacity);
        NodeRates {
            demand,
            granted: Demand::new(cpu, disk, network),
        }
    }
}

/// The node fleet plus a task-to-node index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Cluster {
    nodes: Vec<NodeState>,
    placement: BTreeMap<TaskId, NodeId>,
}

impl Cluster {
    /// Nodes must carry ids `0..n` in order.
    pub fn new(nodes: Vec<NodeState>) -> Result<Self, ClusterError> {
        for (i, n) in nodes.iter().enumerate() {
            if n.id != NodeId(i as u32) {
                return Err(ClusterError::InvalidNode {
                    node: n.id,
                    reason: format!("expected id {}", NodeId(i as u32)),
                });
            }
        }
        let placement = nodes
            .iter()
            .flat_map(|n| n.running.keys().map(move |&t| (t, n.id)))
            .collect();
        Ok(Self { nodes, placement })
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> Result<&NodeState, ClusterError> {
        self.nodes.get(id.0 as usize).ok_or(ClusterError::UnknownNode(id))
    }

    pub fn node_mut(&mut self, id: NodeId) -> Result<&mut NodeState, ClusterError> {
        self.nodes
            .get_mut(id.0 as usize)
            .ok_or(ClusterError::UnknownNode(id))
    }

    pub fn location(&self, task: TaskId) -> Option<NodeId> {
        self.placement.get(&task).copied()
    }

    pub fn free_slots(&self) -> BTreeMap<NodeId, usize> {
        self.nodes.iter().map(|n| (n.id, n.free_slots())).collect()
    }

    pub fn assign(&mut self, node: NodeId, task: TaskId, demand: Demand) -> Result<(), ClusterError> {
        if self.placement.contains_key(&task) {
            return Err(ClusterError::DuplicateTask(task));
        }
        self.node_mut(node)?.assign_task(task, demand)?;
        self.placement.insert(task, node);
        Ok(())
    }

    pub fn release(&mut self, task: TaskId) -> Result<NodeId, ClusterError> {
        let node = self
            .placement
            .get(&task)
            .copied()
            .ok_or(ClusterError::UnknownTask {
                node: NodeId(u32::MAX),
                task,
            })?;
        self.node_mut(node)?.release_task(task)?;
        self.placement.remove(&task);
        Ok(node)
    }
}
