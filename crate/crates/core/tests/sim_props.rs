//! Simulator properties: agreement with the fixed-step oracle, policy
//! contracts over whole traces, and determinism.

use echo_sched::model::{CostProfile, Deadline, Duration, Platform, Task, TimePoint};
use echo_sched::policies::PolicyKind;
use echo_sched::sim::{self, oracle_step_sim, SimConfig};
use echo_sched::traceio::{generate, AppCatalog, MixSpec};
use proptest::prelude::*;

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

/// Small integer-second instances.
fn arb_instance() -> impl Strategy<Value = (Vec<Task>, usize)> {
    let task = (0u64..6, 1u64..9, 0u64..3, 0u64..3, 2u64..40, 0u64..8, 1u64..8, 0u64..4);
    (prop::collection::vec(task, 1..=10), 1usize..=3).prop_map(|(rows, vms)| {
        let mut clock = 0;
        let tasks = rows
            .into_iter()
            .enumerate()
            .map(|(i, (gap, r_e, up_e, down_e, r_m, up_c, r_c, down_c))| {
                clock += gap;
                let profile = CostProfile {
                    r_mobile: secs(r_m),
                    r_edge: secs(r_e),
                    r_cloud: secs(r_c),
                    up_edge: secs(up_e),
                    down_edge: secs(down_e),
                    up_cloud: secs(up_c),
                    down_cloud: secs(down_c),
                    upload_bytes: 0,
                    download_bytes: 0,
                };
                Task::new(format!("t{i}"), TimePoint::from_secs(clock), profile)
            })
            .collect();
        (tasks, vms)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn schedules_match_the_step_oracle((trace, vms) in arb_instance(), delay in 0u64..2) {
        let cfg = SimConfig { provision_delay: secs(delay), ..SimConfig::with_vms(vms) };
        for policy in [PolicyKind::EchoPcSrtf, PolicyKind::MCloudBestEffort] {
            let fast = sim::run(&trace, policy, &cfg).unwrap();
            let slow = oracle_step_sim(&trace, policy, &cfg, Duration::from_millis(1)).unwrap();
            prop_assert_eq!(&fast, &slow);
        }
    }

    #[test]
    fn lone_task_gets_the_same_platform_from_echo_and_mcloud((trace, vms) in arb_instance()) {
        let task = &trace[..1];
        let cfg = SimConfig::with_vms(vms);
        let echo = sim::run(task, PolicyKind::EchoPcSrtf, &cfg).unwrap();
        let mcloud = sim::run(task, PolicyKind::MCloudBestEffort, &cfg).unwrap();
        prop_assert_eq!(echo.records[0].platform, mcloud.records[0].platform);
        prop_assert_eq!(echo.records[0].completion, mcloud.records[0].completion);
    }

    #[test]
    fn energy_is_linear_in_the_powers((trace, vms) in arb_instance(), c in 0.5f64..4.0) {
        let base = SimConfig::with_vms(vms);
        let scaled = SimConfig { energy: base.energy.scaled(c), ..base.clone() };
        let a = sim::run(&trace, PolicyKind::EchoPcSrtf, &base).unwrap();
        let b = sim::run(&trace, PolicyKind::EchoPcSrtf, &scaled).unwrap();
        for (x, y) in a.records.iter().zip(&b.records) {
            prop_assert!((y.energy_joules - c * x.energy_joules).abs() <= 1e-9 * y.energy_joules.abs().max(1.0));
        }
    }
}

fn generated(n: usize, lambda: f64, seed: u64) -> Vec<Task> {
    let catalog = AppCatalog::builtin();
    generate(n, lambda, &MixSpec::preset(1, &catalog).unwrap(), seed, &catalog).unwrap().tasks
}

#[test]
fn echo_edge_tasks_finish_by_their_deadlines() {
    for (seed, vms) in [(1, 1), (2, 4), (3, 8)] {
        let trace = generated(1_000, 2.0, seed);
        let report = sim::run(&trace, PolicyKind::EchoPcSrtf, &SimConfig::with_vms(vms)).unwrap();
        assert_eq!(report.summary.deadline_compliance, 1.0);
        for r in report.records.iter().filter(|r| r.platform.is_edge()) {
            let task = trace.iter().find(|t| t.id == r.task_id).unwrap();
            let h = r.deadline.unwrap().h;
            assert!(r.completion <= h);
            assert!(h - task.arrival <= task.profile.r_mobile);
            assert_eq!(r.deadline_met, Some(true));
        }
    }
}

#[test]
fn mcloud_can_miss_the_bound_echo_keeps() {
    let heavy = CostProfile { r_mobile: secs(1000), r_edge: secs(100), r_cloud: secs(100), up_cloud: secs(50), ..Default::default() };
    let light = CostProfile {
        r_mobile: secs(10),
        r_edge: secs(3),
        r_cloud: secs(3),
        up_edge: secs(1),
        down_edge: secs(1),
        up_cloud: secs(2),
        down_cloud: secs(1),
        ..Default::default()
    };
    let trace = vec![Task::new("bg", TimePoint::ZERO, heavy), Task::new("a", TimePoint::from_secs(1), light.clone())];
    let bound = Deadline::for_task(TimePoint::from_secs(1), &light).h;
    let cfg = SimConfig::with_vms(1);

    let m = sim::run(&trace, PolicyKind::MCloudBestEffort, &cfg).unwrap();
    let a = m.records.iter().find(|r| r.task_id.as_str() == "a").unwrap();
    assert_eq!(a.platform, Platform::Edge(0));
    assert!(a.completion > bound);
    assert_eq!(a.deadline_met, None);

    let e = sim::run(&trace, PolicyKind::EchoPcSrtf, &cfg).unwrap();
    let a = e.records.iter().find(|r| r.task_id.as_str() == "a").unwrap();
    assert!(a.completion <= bound);
}

#[test]
fn runs_are_reproducible() {
    let trace = generated(500, 1.0, 42);
    for policy in PolicyKind::ALL {
        let cfg = SimConfig { seed: 9, ..SimConfig::with_vms(4) };
        let (mut a, mut b) = (Vec::new(), Vec::new());
        sim::run(&trace, policy, &cfg).unwrap().write_json(&mut a).unwrap();
        sim::run(&trace, policy, &cfg).unwrap().write_json(&mut b).unwrap();
        assert_eq!(a, b, "{policy}");
    }
}

#[test]
fn trace_order_does_not_matter() {
    let trace = generated(300, 2.0, 5);
    let mut shuffled = trace.clone();
    shuffled.reverse();
    let cfg = SimConfig::with_vms(3);
    assert_eq!(sim::run(&trace, PolicyKind::EchoPcSrtf, &cfg).unwrap(), sim::run(&shuffled, PolicyKind::EchoPcSrtf, &cfg).unwrap());
}

#[test]
fn no_vms_means_no_edge() {
    let trace = generated(200, 1.0, 8);
    let report = sim::run(&trace, PolicyKind::EchoPcSrtf, &SimConfig::with_vms(0)).unwrap();
    assert_eq!(report.summary.platforms.edge, 0);
    assert_eq!(report.summary.platforms.mobile + report.summary.platforms.cloud, 200);
}

#[test]
fn report_json_round_trips() {
    let trace = generated(50, 1.0, 3);
    let report = sim::run(&trace, PolicyKind::EchoPcSrtf, &SimConfig::with_vms(2)).unwrap();
    let mut buf = Vec::new();
    report.write_json(&mut buf).unwrap();
    assert_eq!(sim::SimReport::read_json(&buf[..]).unwrap(), report);
}
