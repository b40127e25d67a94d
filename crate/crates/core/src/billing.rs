//! Instance pricing, unlimited-mode surplus charges and run cost reports.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::InstanceClass;
use crate::engine::{RateSegment, SimTrace};
use crate::ids::{NodeId, SimTime};
use crate::scalar::Scalar;

pub const SECONDS_PER_HOUR: f64 = 3600.0;
/// Averaging window for unlimited-mode surplus.
pub const SURPLUS_WINDOW_S: f64 = 86_400.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BillingError {
    #[error("{field} must be finite and >= 0, got {value}")]
    InvalidPrice { field: &'static str, value: f64 },
    #[error("parity usage {parity} must exceed the baseline fraction {baseline}")]
    ParityBelowBaseline { parity: f64, baseline: f64 },
    #[error("negative duration {0}")]
    NegativeDuration(f64),
    #[error("usage history is empty")]
    EmptyHistory,
}

/// Hourly prices per instance class plus the surplus-credit price.
///
/// When `surplus_per_vcpu_hour` is unset, it is derived so that a burstable
/// instance with `parity_vcpus` vCPUs and `parity_baseline` baseline running
/// at `parity_usage` mean utilization costs exactly the general-purpose price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PricingTable {
    pub burstable_hourly: f64,
    pub general_purpose_hourly: f64,
    /// Defaults to the burstable price, as unlimited mode is a billing option.
    pub unlimited_hourly: Option<f64>,
    pub surplus_per_vcpu_hour: Option<f64>,
    pub parity_usage: f64,
    pub parity_baseline: f64,
    pub parity_vcpus: u32,
    /// Informational only; never enters totals.
    pub storage_per_gb_month: f64,
    /// Billed seconds per simulated second.
    pub time_scale: f64,
}

impl Default for PricingTable {
    fn default() -> Self {
        Self {
            burstable_hourly: 0.3328,
            general_purpose_hourly: 0.384,
            unlimited_hourly: None,
            surplus_per_vcpu_hour: None,
            parity_usage: 0.525,
            parity_baseline: 0.4,
            parity_vcpus: 8,
            storage_per_gb_month: 0.10,
            time_scale: 1.0,
        }
    }
}

/// Surplus price at which `burstable + s * (parity - baseline) * vcpus`
/// equals `general_purpose`.
pub fn parity_surplus_price<S: Scalar>(
    burstable_hourly: S,
    general_purpose_hourly: S,
    parity_usage: S,
    baseline_fraction: S,
    vcpus: S,
) -> Result<S, BillingError> {
    if parity_usage <= baseline_fraction {
        return Err(BillingError::ParityBelowBaseline {
            parity: parity_usage.to_f64_lossy(),
            baseline: baseline_fraction.to_f64_lossy(),
        });
    }
    Ok((general_purpose_hourly - burstable_hourly) / ((parity_usage - baseline_fraction) * vcpus))
}

/// Above-baseline vCPU-hours for one averaging window.
pub fn window_surplus<S: Scalar>(mean_usage: S, baseline_fraction: S, vcpus: S, window_hours: S) -> S {
    (mean_usage - baseline_fraction).max(S::zero()) * vcpus * window_hours
}

impl PricingTable {
    pub fn validate(&self) -> Result<(), BillingError> {
        let fields = [
            ("burstable_hourly", Some(self.burstable_hourly)),
            ("general_purpose_hourly", Some(self.general_purpose_hourly)),
            ("unlimited_hourly", self.unlimited_hourly),
            ("surplus_per_vcpu_hour", self.surplus_per_vcpu_hour),
            ("storage_per_gb_month", Some(self.storage_per_gb_month)),
            ("time_scale", Some(self.time_scale)),
        ];
        for (field, v) in fields {
            if let Some(value) = v {
                if !(value.is_finite() && value >= 0.0) {
                    return Err(BillingError::InvalidPrice { field, value });
                }
            }
        }
        self.surplus_price().map(|_| ())
    }

    pub fn hourly_price(&self, class: InstanceClass) -> f64 {
        match class {
            InstanceClass::Burstable => self.burstable_hourly,
            InstanceClass::GeneralPurpose => self.general_purpose_hourly,
            InstanceClass::BurstableUnlimited => self.unlimited_hourly.unwrap_or(self.burstable_hourly),
        }
    }

    pub fn surplus_price(&self) -> Result<f64, BillingError> {
        match self.surplus_per_vcpu_hour {
            Some(p) => Ok(p),
            None => parity_surplus_price(
                self.burstable_hourly,
                self.general_purpose_hourly,
                self.parity_usage,
                self.parity_baseline,
                f64::from(self.parity_vcpus),
            ),
        }
    }

    /// Hourly price times `duration_s` (billed seconds).
    pub fn instance_cost(&self, class: InstanceClass, duration_s: f64) -> Result<f64, BillingError> {
        if duration_s < 0.0 || duration_s.is_nan() {
            return Err(BillingError::NegativeDuration(duration_s));
        }
        Ok(self.hourly_price(class) * duration_s / SECONDS_PER_HOUR)
    }
}

/// Integral of granted vCPUs over `[from, to)` for a piecewise-constant
/// history whose last segment extends indefinitely.
pub fn integrate_cpu(history: &[RateSegment], from: SimTime, to: SimTime) -> f64 {
    let mut total = 0.0;
    for (i, seg) in history.iter().enumerate() {
        let end = history.get(i + 1).map(|s| s.start).unwrap_or(SimTime::MAX);
        let lo = seg.start.max(from);
        let hi = end.min(to);
        if hi > lo {
            total += seg.cpu * (hi - lo).as_secs();
        }
    }
    total
}

/// Surplus vCPU-hours billed to one unlimited node over `[from, to)`.
///
/// The interval is cut into consecutive windows of 24 billed hours; a final
/// shorter window is averaged over its own length. Usage on other nodes
/// never offsets it.
pub fn unlimited_surplus(
    history: &[RateSegment],
    from: SimTime,
    to: SimTime,
    vcpus: u32,
    baseline_fraction: f64,
    time_scale: f64,
) -> Result<f64, BillingError> {
    if history.is_empty() {
        return Err(BillingError::EmptyHistory);
    }
    let window = SimTime::from_secs(SURPLUS_WINDOW_S / time_scale).max(SimTime(1));
    let cores = f64::from(vcpus);
    let mut total = 0.0;
    let mut start = from;
    while start < to {
        let end = start.saturating_add(window).min(to);
        let secs = (end - start).as_secs();
        let mean = integrate_cpu(history, start, end) / (cores * secs);
        total += window_surplus(mean, baseline_fraction, cores, secs * time_scale / SECONDS_PER_HOUR);
        start = end;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeCost {
    pub node: NodeId,
    pub class: InstanceClass,
    pub instance_cost: f64,
    pub surplus_vcpu_hours: f64,
    pub surplus_cost: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub billed_hours: f64,
    pub surplus_price: f64,
    pub nodes: Vec<NodeCost>,
    pub instance_total: f64,
    pub surplus_total: f64,
    pub total: f64,
    /// Informational; not part of `total`.
    pub storage_cost: f64,
}

/// Cost of a run: each node's hourly price over the makespan, plus surplus
/// charges on unlimited nodes.
pub fn scenario_cost(trace: &SimTrace, pricing: &PricingTable) -> Result<CostReport, BillingError> {
    pricing.validate()?;
    let price = pricing.surplus_price()?;
    let from = trace.first_submission().unwrap_or(SimTime::ZERO);
    let span = trace.makespan();
    let to = from.saturating_add(span);
    let billed_s = span.as_secs() * pricing.time_scale;
    let mut nodes = Vec::with_capacity(trace.nodes.len());
    for (i, n) in trace.nodes.iter().enumerate() {
        let instance_cost = pricing.instance_cost(n.class, billed_s)?;
        let surplus_vcpu_hours = if n.class == InstanceClass::BurstableUnlimited && span > SimTime::ZERO {
            unlimited_surplus(
                &trace.segments[i],
                from,
                to,
                n.vcpus,
                n.baseline_fraction,
                pricing.time_scale,
            )?
        } else {
            0.0
        };
        let surplus_cost = surplus_vcpu_hours * price;
        nodes.push(NodeCost {
            node: n.id,
            class: n.class,
            instance_cost,
            surplus_vcpu_hours,
            surplus_cost,
            total: instance_cost + surplus_cost,
        });
    }
    let instance_total = nodes.iter().map(|c| c.instance_cost).sum::<f64>();
    let surplus_total = nodes.iter().map(|c| c.surplus_cost).sum::<f64>();
    let gb: f64 = trace.nodes.iter().map(|n| n.volume_gb).sum();
    let storage_cost = gb * pricing.storage_per_gb_month * billed_s / (30.0 * 86_400.0);
    Ok(CostReport {
        billed_hours: billed_s / SECONDS_PER_HOUR,
        surplus_price: price,
        nodes,
        instance_total,
        surplus_total,
        total: instance_total + surplus_total,
        storage_cost,
    })
}

/// `b.total / a.total`; two zero-cost runs compare as 1.
pub fn cost_ratio(a: &CostReport, b: &CostReport) -> f64 {
    if a.total == 0.0 && b.total == 0.0 {
        1.0
    } else {
        b.total / a.total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(start_s: f64, cpu: f64) -> RateSegment {
        RateSegment {
            start: SimTime::from_secs(start_s),
            cpu,
            iops: 0.0,
        }
    }

    #[test]
    fn instance_cost_is_linear() {
        let p = PricingTable::default();
        assert_eq!(p.instance_cost(InstanceClass::Burstable, 0.0).unwrap(), 0.0);
        let two = p.instance_cost(InstanceClass::Burstable, 7200.0).unwrap();
        assert!((two - 2.0 * p.burstable_hourly).abs() < 1e-12);
        assert!(p.instance_cost(InstanceClass::Burstable, -1.0).is_err());
    }

    #[test]
    fn general_purpose_premium_carries_through() {
        let p = PricingTable {
            general_purpose_hourly: 1.15 * 0.3328,
            ..PricingTable::default()
        };
        let t3 = p.instance_cost(InstanceClass::Burstable, 3600.0).unwrap();
        let m5 = p.instance_cost(InstanceClass::GeneralPurpose, 3600.0).unwrap();
        assert!(m5 >= 1.15 * t3 - 1e-12);
    }

    #[test]
    fn default_parity_price_and_full_usage_premium() {
        let p = PricingTable::default();
        let s = p.surplus_price().unwrap();
        assert!((s - 0.0512).abs() < 1e-12);
        let full = p.burstable_hourly + window_surplus(1.0, 0.4, 8.0, 1.0) * s;
        let premium = full / p.general_purpose_hourly;
        assert!((1.45..1.55).contains(&premium), "{premium}");
    }

    #[test]
    fn parity_formula_is_generic() {
        let s = parity_surplus_price(0.3328f32, 0.384, 0.525, 0.4, 8.0).unwrap();
        assert!((s - 0.0512).abs() < 1e-6);
        assert!(parity_surplus_price(1.0, 2.0, 0.3, 0.4, 8.0).is_err());
    }

    #[test]
    fn surplus_zero_at_baseline_and_monotone() {
        let at_base = [seg(0.0, 0.4 * 8.0)];
        let t = SimTime::from_secs(3600.0);
        assert_eq!(unlimited_surplus(&at_base, SimTime::ZERO, t, 8, 0.4, 1.0).unwrap(), 0.0);
        let mut last = 0.0;
        for k in 4..=8 {
            let h = [seg(0.0, f64::from(k))];
            let s = unlimited_surplus(&h, SimTime::ZERO, t, 8, 0.4, 1.0).unwrap();
            assert!(s >= last);
            last = s;
        }
        assert!((last - 0.6 * 8.0).abs() < 1e-12);
        assert_eq!(
            unlimited_surplus(&[], SimTime::ZERO, t, 8, 0.4, 1.0),
            Err(BillingError::EmptyHistory)
        );
    }

    #[test]
    fn surplus_windows_average_separately() {
        // Day one idle, day two flat out: averaging per window bills day two
        // fully instead of netting it against day one.
        let h = [seg(0.0, 0.0), seg(86_400.0, 8.0)];
        let end = SimTime::from_secs(2.0 * 86_400.0);
        let s = unlimited_surplus(&h, SimTime::ZERO, end, 8, 0.4, 1.0).unwrap();
        assert!((s - 0.6 * 8.0 * 24.0).abs() < 1e-9);
    }

    #[test]
    fn integrate_clips_to_interval() {
        let h = [seg(0.0, 1.0), seg(10.0, 3.0)];
        let v = integrate_cpu(&h, SimTime::from_secs(5.0), SimTime::from_secs(20.0));
        assert!((v - (5.0 + 30.0)).abs() < 1e-12);
    }
}
