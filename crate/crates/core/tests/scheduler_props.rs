//! Randomized properties of trial insertion, repair and the decision engine.

use std::collections::HashMap;

use echo_sched::engine::{self, DecisionEngine};
use echo_sched::model::{CostProfile, Deadline, Duration, Platform, Task, TaskId, TimePoint};
use echo_sched::scheduler::{self, VmQueue};
use proptest::prelude::*;

fn ms(v: u64) -> Duration {
    Duration::from_millis(v)
}

/// Durations are multiples of 100 ms so ties and exact fits are common.
fn arb_task(i: usize) -> impl Strategy<Value = (u64, Task)> {
    (0u64..40, 1u64..80, 0u64..20, 0u64..10, 5u64..300, 0u64..60, 1u64..60, 0u64..30).prop_map(
        move |(gap, r_e, up_e, down_e, r_m, up_c, r_c, down_c)| {
            let profile = CostProfile {
                r_mobile: ms(r_m * 100),
                r_edge: ms(r_e * 100),
                r_cloud: ms(r_c * 100),
                up_edge: ms(up_e * 100),
                down_edge: ms(down_e * 100),
                up_cloud: ms(up_c * 100),
                down_cloud: ms(down_c * 100),
                upload_bytes: 0,
                download_bytes: 0,
            };
            (gap * 100, Task::new(format!("t{i}"), TimePoint::ZERO, profile))
        },
    )
}

fn arb_trace(max: usize) -> impl Strategy<Value = Vec<Task>> {
    (1..=max).prop_flat_map(|n| (0..n).map(arb_task).collect::<Vec<_>>()).prop_map(|items| {
        let mut clock = 0;
        items
            .into_iter()
            .map(|(gap, mut task)| {
                clock += gap;
                task.arrival = TimePoint::from_micros(clock * 1_000);
                task
            })
            .collect()
    })
}

fn completions(q: &VmQueue) -> HashMap<TaskId, TimePoint> {
    q.completions()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    /// Every edge-admitted task finishes, download included, by its deadline.
    #[test]
    fn admitted_tasks_meet_their_deadlines(trace in arb_trace(14), vms in 1usize..4) {
        let mut engine = DecisionEngine::new(vms, Duration::ZERO);
        let mut admitted = HashMap::new();
        for task in &trace {
            let est = engine.decide(task, task.arrival).unwrap();
            if let Platform::Edge(_) = est.chosen.platform {
                let h = est.chosen.deadline.unwrap().h;
                prop_assert!(est.chosen.predicted_completion <= h);
                prop_assert_eq!(h, task.arrival + task.profile.t_mobile().min(task.profile.t_cloud()));
                admitted.insert(task.id.clone(), (h, task.profile.down_edge));
            }
        }
        engine.drain().unwrap();
        let done = engine.take_finished();
        prop_assert_eq!(done.len(), admitted.len());
        for c in done {
            let (h, down) = admitted[&c.task_id];
            prop_assert!(c.finished + down <= h, "{} finished at {} with deadline {}", c.task_id, c.finished + down, h);
        }
    }

    /// Trials obey the repair bound, the preemption precondition, the
    /// growth definition and never harm already-admitted tasks.
    #[test]
    fn trial_contract(trace in arb_trace(12), vms in 1usize..4) {
        let mut engine = DecisionEngine::new(vms, Duration::ZERO);
        for task in &trace {
            engine.advance_to(task.arrival).unwrap();
            let h = Deadline::for_task(task.arrival, &task.profile);
            let ready = task.arrival + task.profile.up_edge;
            for q in engine.queues() {
                let trial = q.trial_insert(task, ready, h).unwrap();
                prop_assert!(trial.repair_iterations <= q.len() + 1);

                let before = completions(q);
                let after = completions(&trial.candidate_queue);
                let mut growth = trial.candidate_completion.saturating_since(task.arrival);
                for (id, old) in &before {
                    let new = after[id];
                    prop_assert!(new >= *old, "{} moved earlier", id);
                    let limit = q.queued_task(id).unwrap().exec_deadline;
                    prop_assert!(new <= limit.max(*old), "{} pushed past its deadline", id);
                    growth += new - *old;
                }
                prop_assert_eq!(trial.delta_t, growth);

                let plan = trial.candidate_queue.plan();
                let first_new = plan.iter().position(|e| e.task_id == task.id);
                if let Some(victim) = &trial.preempted {
                    prop_assert!(q.remaining_work(victim).unwrap() > task.profile.r_edge);
                } else {
                    // Appended: nothing already queued runs behind the newcomer.
                    let longer = q.plan().iter().any(|e| q.remaining_work(&e.task_id).unwrap() > task.profile.r_edge);
                    prop_assert!(!longer);
                    prop_assert!(plan[first_new.unwrap()..].iter().all(|e| e.task_id == task.id));
                }
            }
            engine.decide(task, task.arrival).unwrap();
        }
    }

    /// Mobile and cloud decisions leave every queue untouched.
    #[test]
    fn commit_iff_edge(trace in arb_trace(12), vms in 0usize..3) {
        let mut engine = DecisionEngine::new(vms, ms(200));
        for task in &trace {
            engine.advance_to(task.arrival).unwrap();
            let before = engine.queues().to_vec();
            let est = engine.decide(task, task.arrival).unwrap();
            let changed = engine.queues() != before.as_slice();
            prop_assert_eq!(changed, est.chosen.platform.is_edge());
            prop_assert_eq!(est.t_mobile, task.profile.r_mobile);
            prop_assert_eq!(est.t_cloud, task.profile.up_cloud + task.profile.r_cloud + task.profile.down_cloud);
        }
    }

    /// Scaling every duration and arrival by the same factor scales the
    /// schedule and leaves every choice unchanged.
    #[test]
    fn choices_are_scale_invariant(trace in arb_trace(10), vms in 1usize..4, factor in 2u64..7) {
        let scaled: Vec<Task> = trace
            .iter()
            .map(|t| Task {
                arrival: TimePoint::from_micros(t.arrival.as_micros() * factor),
                profile: t.profile.scaled(factor),
                ..t.clone()
            })
            .collect();
        let mut a = DecisionEngine::new(vms, Duration::ZERO);
        let mut b = DecisionEngine::new(vms, Duration::ZERO);
        for (x, y) in trace.iter().zip(&scaled) {
            let ex = a.decide(x, x.arrival).unwrap();
            let ey = b.decide(y, y.arrival).unwrap();
            prop_assert_eq!(ex.chosen.platform, ey.chosen.platform);
            prop_assert_eq!(ex.chosen.predicted_completion.as_micros() * factor, ey.chosen.predicted_completion.as_micros());
        }
    }

    /// Evaluation is a pure function of state and task.
    #[test]
    fn evaluation_is_deterministic(trace in arb_trace(10), vms in 1usize..4) {
        let mut e = DecisionEngine::new(vms, Duration::ZERO);
        for task in &trace {
            e.advance_to(task.arrival).unwrap();
            let first = engine::evaluate(task, e.queues(), task.arrival, Duration::ZERO).unwrap().0;
            let second = e.evaluate(task, task.arrival).unwrap().0;
            prop_assert_eq!(&first, &second);
            prop_assert_eq!(e.decide(task, task.arrival).unwrap(), first);
        }
    }
}

#[test]
fn two_sequential_commits_match_a_replay() {
    let mk = |id: &str, w: u64| {
        Task::new(id, TimePoint::ZERO, CostProfile { r_mobile: ms(50_000), r_edge: ms(w), ..Default::default() })
    };
    let deadline = Deadline { h: TimePoint::from_secs(60) };
    let mut queues = vec![VmQueue::new(0)];
    for task in [mk("a", 7_000), mk("b", 3_000)] {
        let trial = queues[0].trial_insert(&task, TimePoint::ZERO, deadline).unwrap();
        scheduler::commit(&mut queues, 0, trial).unwrap();
    }
    let mut replay = VmQueue::new(0);
    replay = replay.trial_insert(&mk("a", 7_000), TimePoint::ZERO, deadline).unwrap().candidate_queue;
    replay = replay.trial_insert(&mk("b", 3_000), TimePoint::ZERO, deadline).unwrap().candidate_queue;
    assert_eq!(queues[0].segments(), replay.segments());
}
