use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cashsim_core::ids::{NodeId, SimTime, TaskId};
use cashsim_core::scheduler::{
    baseline_schedule_pass, cash_schedule_pass, BaselinePolicy, NodeOrdering, PendingTask,
};
use cashsim_core::telemetry::replay_balance;
use cashsim_core::workload::{Annotation, BurstMode};
use cashsim_core::Bucket;

fn annotation() -> impl Strategy<Value = Annotation> {
    (any::<bool>(), any::<bool>(), any::<bool>()).prop_map(|(c, d, n)| Annotation {
        burst_cpu: c,
        burst_disk: d,
        network: n,
    })
}

fn instance() -> impl Strategy<Value = (Vec<PendingTask>, BTreeMap<NodeId, usize>, Vec<NodeId>)> {
    (
        prop::collection::vec(annotation(), 0..24),
        prop::collection::vec(0usize..5, 1..8),
    )
        .prop_flat_map(|(anns, slots)| {
            let n = slots.len();
            let order = Just((0..n as u32).map(NodeId).collect::<Vec<_>>()).prop_shuffle();
            (Just(anns), Just(slots), order)
        })
        .prop_map(|(anns, slots, order)| {
            let queue = anns
                .into_iter()
                .enumerate()
                .map(|(i, annotation)| PendingTask {
                    id: TaskId::new(0, 0, i as u32),
                    annotation,
                })
                .collect();
            let free = slots
                .into_iter()
                .enumerate()
                .map(|(i, k)| (NodeId(i as u32), k))
                .collect();
            (queue, free, order)
        })
}

proptest! {
    #[test]
    fn cash_pass_is_work_conserving((queue, free, order) in instance()) {
        let ordering = NodeOrdering { nodes: order, ordering_time: SimTime::ZERO, basis: BurstMode::Cpu };
        let d = cash_schedule_pass(&queue, &ordering, &free);
        prop_assert!(d.respects(&free));
        let capacity: usize = free.values().sum();
        prop_assert_eq!(d.assignments.len(), capacity.min(queue.len()));
    }

    #[test]
    fn baseline_pass_is_work_conserving((queue, free, _order) in instance(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for policy in [BaselinePolicy::RandomOrder, BaselinePolicy::ArrivalOrder] {
            let d = baseline_schedule_pass(&queue, &free, policy, &mut rng);
            prop_assert!(d.respects(&free));
            let capacity: usize = free.values().sum();
            prop_assert_eq!(d.assignments.len(), capacity.min(queue.len()));
            // Queue order is preserved in the placed prefix.
            let placed: Vec<u32> = d.assignments.iter().map(|a| a.task.index).collect();
            let mut sorted = placed.clone();
            sorted.sort();
            prop_assert_eq!(sorted, (0..placed.len() as u32).collect::<Vec<_>>());
        }
    }

    #[test]
    fn consume_keeps_balance_bounded(
        gb in 1.0f64..2000.0,
        start in 0.0f64..1.0,
        steps in prop::collection::vec((0.0f64..5000.0, 0.0f64..600.0), 1..40),
    ) {
        let mut b = Bucket::ebs(gb, 3000.0, 5.4e6, 0.0).unwrap();
        b = b.with_balance(start * b.capacity());
        for (demand, dt) in steps {
            let c = b.consume(demand, dt).unwrap();
            prop_assert!(c.bucket.balance() >= 0.0 && c.bucket.balance() <= c.bucket.capacity());
            prop_assert!(c.granted <= demand.min(b.peak_rate()) + 1e-9);
            prop_assert!(c.served <= demand.min(b.peak_rate()) * dt * (1.0 + 1e-12) + 1e-9);
            prop_assert!(c.served >= demand.min(b.baseline_rate()) * dt * (1.0 - 1e-12) - 1e-9);
            b = c.bucket;
        }
    }

    #[test]
    fn replay_matches_stepping_the_bucket(
        start in 0.0f64..1.0,
        pieces in prop::collection::vec((0.0f64..8.0, 0.0f64..900.0), 1..20),
    ) {
        // At granted (not demanded) rates the replay equals `charge`, which is
        // how unlimited nodes move their buckets.
        let b0 = Bucket::cpu(8, 0.4, 0.0).unwrap();
        let b0 = b0.with_balance(start * b0.capacity());
        let mut b = b0;
        for &(rate, dt) in &pieces {
            b = b.charge(rate, dt).unwrap().0;
        }
        let r = replay_balance(b0.balance(), &b0, &pieces);
        prop_assert!((r - b.balance()).abs() <= 1e-9 * b.capacity());
    }
}
