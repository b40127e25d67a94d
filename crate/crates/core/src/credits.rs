//! Token-bucket dynamics for credit-governed resources.
//!
//! A bucket earns credits at a constant rate up to its capacity and spends
//! them whenever the resource is served above its baseline. With a positive
//! balance the resource runs at up to `peak_rate`; an empty bucket clamps
//! service to `baseline_rate`.
//!
//! Credit units:
//! - CPU: one credit buys one vCPU at 100% for one minute, so serving `g`
//!   vCPUs costs `g / 60` credits per second.
//! - Disk I/O: one credit buys one I/O operation, so serving `g` IOPS costs
//!   `g` credits per second. Volumes earn 3 credits/s per provisioned GB.
//!
//! All operations are value-semantic: they take `&self` and return a new
//! bucket. Balances hitting zero inside a step are handled by splitting the
//! step analytically at the crossing instant, so a single long step gives the
//! same result as many short ones.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{clamp, Scalar};

/// Seconds in one day; CPU bucket capacity defaults to one day of earnings.
pub const SECONDS_PER_DAY: f64 = 86_400.0;
/// Default EBS burst ceiling.
pub const EBS_PEAK_IOPS: f64 = 3_000.0;
/// Default EBS bucket size (the startup credit allotment of an SSD volume).
pub const EBS_BUCKET_CAPACITY: f64 = 5.4e6;
/// Baseline IOPS earned per provisioned GB.
pub const EBS_IOPS_PER_GB: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResourceKind {
    Cpu,
    DiskIo,
}

impl ResourceKind {
    /// Credits spent per unit of service per second.
    #[inline]
    pub fn credits_per_unit_second<S: Scalar>(self) -> S {
        match self {
            ResourceKind::Cpu => S::one() / S::lit(60.0),
            ResourceKind::DiskIo => S::one(),
        }
    }

    /// Credit burn rate (credits/s) when serving `rate` units per second.
    #[inline]
    pub fn credit_cost<S: Scalar>(self, rate: S) -> S {
        rate * self.credits_per_unit_second()
    }

    /// Service rate whose credit burn equals `credits_per_second`.
    #[inline]
    pub fn rate_for_cost<S: Scalar>(self, credits_per_second: S) -> S {
        credits_per_second / self.credits_per_unit_second()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CreditError {
    #[error("negative duration {0}")]
    NegativeDuration(f64),
    #[error("negative demand {0}")]
    NegativeDemand(f64),
    #[error("invalid bucket: {0}")]
    InvalidBucket(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenBucket<S> {
    balance: S,
    capacity: S,
    earn_rate: S,
    baseline_rate: S,
    peak_rate: S,
    kind: ResourceKind,
}

/// Result of [`TokenBucket::consume`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Consumption<S> {
    pub bucket: TokenBucket<S>,
    /// Service rate granted at the start of the step.
    pub granted: S,
    /// Total units served over the step (integral of the granted rate).
    pub served: S,
    /// Offset into the step at which the balance reached zero, if it did.
    pub depleted_after: Option<S>,
}

impl<S: Scalar> TokenBucket<S> {
    /// Builds a bucket after checking its invariants.
    ///
    /// Besides `0 <= balance <= capacity` and `peak >= baseline`, the earn rate
    /// must not exceed the credit cost of baseline service: an empty bucket
    /// serving at baseline then never gains or goes negative.
    pub fn new(
        kind: ResourceKind,
        capacity: S,
        earn_rate: S,
        baseline_rate: S,
        peak_rate: S,
        balance: S,
    ) -> Result<Self, CreditError> {
        let bad = |what: String| Err(CreditError::InvalidBucket(what));
        let all = [capacity, earn_rate, baseline_rate, peak_rate, balance];
        if all.iter().any(|v| !v.is_finite()) {
            return bad("all bucket parameters must be finite".into());
        }
        if capacity <= S::zero() {
            return bad(format!("capacity {capacity} must be > 0"));
        }
        if earn_rate < S::zero() || baseline_rate < S::zero() {
            return bad("earn_rate and baseline_rate must be >= 0".into());
        }
        if peak_rate < baseline_rate {
            return bad(format!(
                "peak_rate {peak_rate} below baseline_rate {baseline_rate}"
            ));
        }
        if balance < S::zero() || balance > capacity {
            return bad(format!("balance {balance} outside [0, {capacity}]"));
        }
        let baseline_cost = kind.credit_cost(baseline_rate);
        if earn_rate > baseline_cost * (S::one() + S::lit(1e-9)) {
            return bad(format!(
                "earn_rate {earn_rate} exceeds the credit cost of baseline service {baseline_cost}"
            ));
        }
        Ok(Self {
            balance,
            capacity,
            earn_rate,
            baseline_rate,
            peak_rate,
            kind,
        })
    }

    /// T3-style CPU bucket for `vcpus` cores with the given baseline fraction.
    ///
    /// Earns `baseline_fraction * vcpus` credits per minute and holds one day of
    /// earnings. Peak service is every core at 100%.
    pub fn cpu(vcpus: u32, baseline_fraction: S, initial_balance: S) -> Result<Self, CreditError> {
        let cores = S::lit(f64::from(vcpus));
        let baseline = baseline_fraction * cores;
        let earn = ResourceKind::Cpu.credit_cost(baseline);
        let capacity = earn * S::lit(SECONDS_PER_DAY);
        Self::new(
            ResourceKind::Cpu,
            capacity,
            earn,
            baseline,
            cores,
            initial_balance,
        )
    }

    /// EBS-style volume bucket: 3 IOPS (and credits/s) per GB of baseline.
    pub fn ebs(volume_gb: S, peak_iops: S, capacity: S, initial_balance: S) -> Result<Self, CreditError> {
        let baseline = S::lit(EBS_IOPS_PER_GB) * volume_gb;
        Self::new(
            ResourceKind::DiskIo,
            capacity,
            baseline,
            baseline,
            peak_iops.max(baseline),
            initial_balance,
        )
    }

    pub fn balance(&self) -> S {
        self.balance
    }
    pub fn capacity(&self) -> S {
        self.capacity
    }
    pub fn earn_rate(&self) -> S {
        self.earn_rate
    }
    pub fn baseline_rate(&self) -> S {
        self.baseline_rate
    }
    pub fn peak_rate(&self) -> S {
        self.peak_rate
    }
    pub fn kind(&self) -> ResourceKind {
        self.kind
    }

    /// Same bucket with a different balance, clamped into `[0, capacity]`.
    pub fn with_balance(&self, balance: S) -> Self {
        Self {
            balance: clamp(balance, S::zero(), self.capacity),
            ..*self
        }
    }

    pub fn is_empty(&self) -> bool {
        self.balance <= S::zero()
    }

    #[inline]
    pub fn credit_cost(&self, rate: S) -> S {
        self.kind.credit_cost(rate)
    }

    /// Earn credits for `dt` seconds of idleness.
    pub fn accrue(&self, dt: S) -> Result<Self, CreditError> {
        check_duration(dt)?;
        Ok(self.with_balance((self.balance + self.earn_rate * dt).min(self.capacity)))
    }

    /// Service rate granted for `demand` under the current balance.
    pub fn effective_rate(&self, demand: S) -> Result<S, CreditError> {
        check_demand(demand)?;
        Ok(self.rate_unchecked(demand))
    }

    fn rate_unchecked(&self, demand: S) -> S {
        if self.balance > S::zero() {
            demand.min(self.peak_rate)
        } else {
            demand.min(self.baseline_rate)
        }
    }

    /// Serve `demand` for `dt` seconds under the throttle law.
    ///
    /// If the balance reaches zero inside the step, the step is split at the
    /// crossing and the remainder is served at the throttled rate.
    pub fn consume(&self, demand: S, dt: S) -> Result<Consumption<S>, CreditError> {
        check_demand(demand)?;
        check_duration(dt)?;
        let granted = self.rate_unchecked(demand);
        let net = self.earn_rate - self.credit_cost(granted);
        if self.balance > S::zero() && net < S::zero() {
            let t_zero = self.balance / -net;
            if t_zero < dt {
                let empty = self.with_balance(S::zero());
                let throttled = empty.rate_unchecked(demand);
                let rest = dt - t_zero;
                let net_after = empty.earn_rate - empty.credit_cost(throttled);
                let bucket = empty.with_balance(net_after * rest);
                return Ok(Consumption {
                    bucket,
                    granted,
                    served: granted * t_zero + throttled * rest,
                    depleted_after: Some(t_zero),
                });
            }
        }
        let bucket = self.with_balance(self.balance + net * dt);
        let depleted_after =
            (self.balance > S::zero() && bucket.balance <= S::zero()).then_some(dt);
        Ok(Consumption {
            bucket,
            granted,
            served: granted * dt,
            depleted_after,
        })
    }

    /// Serve a fixed `rate` for `dt` seconds regardless of balance.
    ///
    /// Used for unlimited-mode instances, which never throttle. Returns the
    /// new bucket and the credits that were spent beyond an empty bucket.
    pub fn charge(&self, rate: S, dt: S) -> Result<(Self, S), CreditError> {
        check_demand(rate)?;
        check_duration(dt)?;
        let raw = self.balance + (self.earn_rate - self.credit_cost(rate)) * dt;
        let shortfall = (-raw).max(S::zero());
        Ok((self.with_balance(raw), shortfall))
    }

    /// Seconds until the bucket throttles at constant `demand`.
    ///
    /// Infinite when the credit burn at the granted rate does not exceed the
    /// earn rate; zero if the bucket is already empty and demand exceeds
    /// what it earns.
    pub fn burst_duration(&self, demand: S) -> Result<S, CreditError> {
        check_demand(demand)?;
        let burn = self.credit_cost(demand.min(self.peak_rate));
        if burn <= self.earn_rate {
            return Ok(S::infinity());
        }
        Ok(self.balance / (burn - self.earn_rate))
    }

    /// Time until the balance reaches zero while serving exactly `rate`.
    pub fn time_to_empty(&self, rate: S) -> Option<S> {
        let net = self.earn_rate - self.credit_cost(rate);
        (self.balance > S::zero() && net < S::zero()).then(|| self.balance / -net)
    }
}

fn check_duration<S: Scalar>(dt: S) -> Result<(), CreditError> {
    if dt < S::zero() || dt.is_nan() {
        return Err(CreditError::NegativeDuration(dt.to_f64_lossy()));
    }
    Ok(())
}

fn check_demand<S: Scalar>(demand: S) -> Result<(), CreditError> {
    if demand < S::zero() || demand.is_nan() {
        return Err(CreditError::NegativeDemand(demand.to_f64_lossy()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn disk(balance: f64, earn: f64) -> TokenBucket<f64> {
        TokenBucket::new(ResourceKind::DiskIo, 5.4e6, earn, earn, 3000.0, balance).unwrap()
    }

    /// Fixed-step reference: serve at the effective rate for `step` seconds,
    /// clamping the balance. Returns the first step boundary at which the
    /// bucket was observed empty.
    fn step_time_to_throttle(bucket: TokenBucket<f64>, demand: f64, step: f64, limit: f64) -> f64 {
        let mut balance = bucket.balance();
        let mut t = 0.0;
        while t < limit {
            if balance <= 0.0 {
                return t;
            }
            let granted = demand.min(bucket.peak_rate());
            balance = (balance + (bucket.earn_rate() - bucket.credit_cost(granted)) * step)
                .clamp(0.0, bucket.capacity());
            t += step;
        }
        f64::INFINITY
    }

    #[test]
    fn accrue_examples() {
        let full = disk(5.4e6, 300.0);
        assert_eq!(full.accrue(1234.0).unwrap().balance(), 5.4e6);

        let b = TokenBucket::new(ResourceKind::DiskIo, 5.4e6, 50.0, 50.0, 3000.0, 0.0).unwrap();
        let after = b.accrue(10.0).unwrap();
        assert_eq!(after.balance(), 500.0);
        // one-second steps agree with the closed form
        let mut stepped = b;
        for _ in 0..10 {
            stepped = stepped.accrue(1.0).unwrap();
        }
        assert_eq!(stepped.balance(), 500.0);

        let near = TokenBucket::new(ResourceKind::DiskIo, 5.4e6, 50.0, 50.0, 3000.0, 5.4e6 - 25.0)
            .unwrap();
        assert_eq!(near.accrue(1.0).unwrap().balance(), 5.4e6);
    }

    #[test]
    fn accrue_rejects_negative_dt() {
        assert_eq!(
            disk(0.0, 300.0).accrue(-1.0),
            Err(CreditError::NegativeDuration(-1.0))
        );
    }

    #[test]
    fn effective_rate_examples() {
        let cpu = TokenBucket::<f64>::new(ResourceKind::Cpu, 576.0, 0.4 / 60.0, 0.4, 1.0, 0.0).unwrap();
        assert!((cpu.effective_rate(1.0).unwrap() - 0.40).abs() < 1e-15);
        assert_eq!(disk(10.0, 300.0).effective_rate(5000.0).unwrap(), 3000.0);
        assert_eq!(disk(10.0, 300.0).effective_rate(0.0).unwrap(), 0.0);
        assert_eq!(disk(0.0, 300.0).effective_rate(0.0).unwrap(), 0.0);
        assert!(disk(0.0, 300.0).effective_rate(-1.0).is_err());
    }

    #[test]
    fn consume_at_baseline_is_equilibrium() {
        let cpu = TokenBucket::<f64>::cpu(8, 0.4, 100.0).unwrap();
        let out = cpu.consume(cpu.baseline_rate(), 3600.0).unwrap();
        assert!((out.bucket.balance() - 100.0).abs() < 1e-9);
        assert!(out.depleted_after.is_none());
    }

    #[test]
    fn consume_disk_burst_2000s() {
        let b = disk(5.4e6, 300.0);
        let out = b.consume(3000.0, 2500.0).unwrap();
        let t = out.depleted_after.unwrap();
        assert!((t - 2000.0).abs() < 1e-9);
        assert_eq!(out.bucket.balance(), 0.0);
        assert!((out.served - (3000.0 * 2000.0 + 300.0 * 500.0)).abs() < 1e-6);
        assert_eq!(out.bucket.effective_rate(3000.0).unwrap(), 300.0);
        // 1 s step oracle
        let oracle = step_time_to_throttle(b, 3000.0, 1.0, 1e6);
        assert!((oracle - t).abs() <= 1.0);
    }

    #[test]
    fn consume_zero_demand_is_accrue() {
        let b = disk(1000.0, 300.0);
        assert_eq!(
            b.consume(0.0, 1.0).unwrap().bucket,
            b.accrue(1.0).unwrap()
        );
    }

    #[test]
    fn burst_duration_examples() {
        assert_eq!(disk(5.4e6, 300.0).burst_duration(200.0).unwrap(), f64::INFINITY);
        assert_eq!(disk(5.4e6, 300.0).burst_duration(300.0).unwrap(), f64::INFINITY);
        assert!((disk(5.4e6, 300.0).burst_duration(3000.0).unwrap() - 2000.0).abs() < 1e-9);
        // demand above peak burns at the peak rate
        assert!((disk(5.4e6, 300.0).burst_duration(9000.0).unwrap() - 2000.0).abs() < 1e-9);
        assert_eq!(disk(0.0, 300.0).burst_duration(1000.0).unwrap(), 0.0);
    }

    #[test]
    fn cpu_constructor_matches_credit_convention() {
        let b = TokenBucket::<f64>::cpu(8, 0.4, 0.0).unwrap();
        // 0.4 * 8 credits per minute, one day of earnings
        assert!((b.earn_rate() * 60.0 - 3.2).abs() < 1e-12);
        assert!((b.capacity() - 3.2 * 24.0 * 60.0).abs() < 1e-9);
        assert_eq!(b.peak_rate(), 8.0);
        assert!((b.baseline_rate() - 3.2).abs() < 1e-12);
        // a full credit spent over a minute at one extra vCPU
        let b = TokenBucket::<f64>::cpu(1, 0.4, 0.6).unwrap();
        let out = b.consume(1.0, 60.0).unwrap();
        assert!(out.bucket.balance().abs() < 1e-12);
    }

    #[test]
    fn invalid_buckets_rejected() {
        assert!(TokenBucket::new(ResourceKind::DiskIo, 10.0, 1.0, 1.0, 0.5, 0.0).is_err());
        assert!(TokenBucket::new(ResourceKind::DiskIo, 0.0, 1.0, 1.0, 2.0, 0.0).is_err());
        assert!(TokenBucket::new(ResourceKind::DiskIo, 10.0, 1.0, 1.0, 2.0, 11.0).is_err());
        assert!(TokenBucket::new(ResourceKind::DiskIo, 10.0, 5.0, 1.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn charge_reports_shortfall() {
        let b = TokenBucket::<f64>::cpu(1, 0.4, 0.0).unwrap();
        let (after, short) = b.charge(1.0, 60.0).unwrap();
        assert_eq!(after.balance(), 0.0);
        assert!((short - 0.6).abs() < 1e-12);
    }

    #[test]
    fn f32_buckets_work() {
        let b = TokenBucket::<f32>::ebs(100.0, 3000.0, 5.4e6, 5.4e6).unwrap();
        let d = b.burst_duration(3000.0).unwrap();
        assert!((d - 2000.0).abs() < 0.1);
    }

    fn any_bucket() -> impl Strategy<Value = TokenBucket<f64>> {
        (
            prop_oneof![Just(ResourceKind::Cpu), Just(ResourceKind::DiskIo)],
            1.0..1e5f64,
            0.0..1.0f64,
            0.1..500.0f64,
            1.0..10.0f64,
            0.0..1.0f64,
            0.2..1.0f64,
        )
            .prop_map(|(kind, cap, fill, baseline, peak_mult, earn_frac, _)| {
                let earn = kind.credit_cost(baseline);
                let earn = earn * (0.5 + 0.5 * earn_frac);
                TokenBucket::new(kind, cap, earn, baseline, baseline * peak_mult, cap * fill)
                    .unwrap()
            })
    }

    proptest! {
        #[test]
        fn balance_stays_in_bounds(
            b in any_bucket(),
            steps in proptest::collection::vec((0.0..2000.0f64, 0.0..100.0f64), 1..30),
        ) {
            let mut cur = b;
            for (demand, dt) in steps {
                cur = cur.consume(demand, dt).unwrap().bucket;
                prop_assert!(cur.balance() >= 0.0 && cur.balance() <= cur.capacity());
            }
        }

        #[test]
        fn coarse_step_equals_fine_steps(b in any_bucket(), demand in 0.0..5000.0f64, total in 0.0..5000.0f64, n in 1usize..50) {
            let coarse = b.consume(demand, total).unwrap();
            let mut fine = b;
            let mut served = 0.0;
            for _ in 0..n {
                let out = fine.consume(demand, total / n as f64).unwrap();
                served += out.served;
                fine = out.bucket;
            }
            let tol = 1e-6 * coarse.bucket.capacity().max(1.0);
            prop_assert!((coarse.bucket.balance() - fine.balance()).abs() <= tol,
                "coarse {} fine {}", coarse.bucket.balance(), fine.balance());
            prop_assert!((coarse.served - served).abs() <= 1e-6 * coarse.served.max(1.0));
        }

        #[test]
        fn conservation_inside_bounds(b in any_bucket(), demand in 0.0..5000.0f64, dt in 0.0..100.0f64) {
            let out = b.consume(demand, dt).unwrap();
            let new = out.bucket.balance();
            if new > 0.0 && new < b.capacity() && out.depleted_after.is_none() {
                let spent = b.credit_cost(out.served);
                let expect = b.balance() + b.earn_rate() * dt - spent;
                prop_assert!((new - expect).abs() <= 1e-9 * b.capacity().max(1.0));
            }
        }

        #[test]
        fn more_credits_never_throttle_earlier(b in any_bucket(), extra in 0.0..1.0f64, demand in 0.0..5000.0f64) {
            let richer = b.with_balance(b.balance() + extra * (b.capacity() - b.balance()));
            prop_assert!(richer.burst_duration(demand).unwrap() >= b.burst_duration(demand).unwrap());
        }
    }
}
