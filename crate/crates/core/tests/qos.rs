use multisim_core::config::ScenarioConfig;
use multisim_core::message::MessageClass;
use multisim_core::net::queue::{ClassQueues, QueueDiscipline};
use multisim_core::net::rate::RateBudget;
use multisim_core::net::transport::{FrameDirection, TransportFrame};
use multisim_core::topology::Topology;
use proptest::prelude::*;

fn frame(id: u64, class: MessageClass, bytes: u32) -> TransportFrame {
    TransportFrame {
        id,
        parent_msg_id: id,
        class,
        seg_index: 0,
        seg_count: 1,
        bytes_on_wire: bytes,
        direction: FrameDirection::Data,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// With both classes backlogged and equal frames, each class's share of
    /// service tracks its weight to within one frame.
    #[test]
    fn wfq_share_tracks_weight(w_mon in 0.05f64..0.95, n in 100usize..3000, bytes in 40u32..1500) {
        let w_ctl = 1.0 - w_mon;
        let mut q = ClassQueues::new(QueueDiscipline::Wfq { w_monitoring: w_mon, w_control: w_ctl }, None);
        for i in 0..n as u64 {
            q.enqueue(frame(2 * i, MessageClass::Monitoring, bytes)).unwrap();
            q.enqueue(frame(2 * i + 1, MessageClass::Control, bytes)).unwrap();
        }
        let served = n / 2;
        let mut mon = 0usize;
        for _ in 0..served {
            if q.dequeue().unwrap().class == MessageClass::Monitoring {
                mon += 1;
            }
        }
        let expected = served as f64 * w_mon;
        prop_assert!((mon as f64 - expected).abs() <= 1.0 + 1e-9, "{} vs {}", mon, expected);
    }

    /// Frames of one class leave in arrival order under either discipline.
    #[test]
    fn per_class_order_is_kept(classes in proptest::collection::vec(any::<bool>(), 1..400), wfq in any::<bool>()) {
        let disc = if wfq { QueueDiscipline::Wfq { w_monitoring: 0.1, w_control: 0.9 } } else { QueueDiscipline::Fifo };
        let mut q = ClassQueues::new(disc, None);
        for (i, &ctl) in classes.iter().enumerate() {
            let class = if ctl { MessageClass::Control } else { MessageClass::Monitoring };
            q.enqueue(frame(i as u64, class, 100 + (i as u32 % 7) * 50)).unwrap();
        }
        let mut last = [None::<u64>; 2];
        let mut count = 0;
        while let Some(f) = q.dequeue() {
            let c = f.class.index();
            prop_assert!(last[c].is_none_or(|l| l < f.id));
            last[c] = Some(f.id);
            count += 1;
        }
        prop_assert_eq!(count, classes.len());
        prop_assert_eq!(q.total_bytes(), 0);
    }

    /// The adapted polling period never lets monitoring plus the control
    /// reserve exceed the usable share of the fallback link.
    #[test]
    fn adapted_period_respects_budget(alpha in 0.05f64..0.6, capacity in 1200u64..20_000, seed in any::<u64>()) {
        let cfg = ScenarioConfig { alpha_e: alpha, dmr_capacity_bps: capacity, seed, ..ScenarioConfig::default() };
        let topo = Topology::generate(&cfg);
        let budget = RateBudget::for_topology(&cfg, &topo);
        let usable = (1.0 - alpha) * capacity as f64;
        match budget.adapted_period(&cfg) {
            Ok(period) => {
                let load = budget.round_bits as f64 / period.as_secs_f64() + budget.control_reserve_bps;
                prop_assert!(load <= usable * (1.0 + 1e-12), "{} > {}", load, usable);
                // and the period is not longer than one tick beyond tight
                let tighter = budget.round_bits as f64 / (period.as_secs_f64() - 1e-5) + budget.control_reserve_bps;
                prop_assert!(tighter > usable * (1.0 - 1e-12));
            }
            Err(_) => prop_assert!(budget.control_reserve_bps >= usable),
        }
    }
}
