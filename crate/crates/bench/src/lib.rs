//! Shared inputs for the benchmarks.

use echo_sched::model::{CostProfile, Deadline, Duration, Task, TimePoint};
use echo_sched::scheduler::{commit, VmQueue};
use echo_sched::traceio::{generate, AppCatalog, MixSpec};

/// A mix-1 trace from the built-in catalog.
pub fn trace(n: usize, lambda: f64, seed: u64) -> Vec<Task> {
    let catalog = AppCatalog::builtin();
    let mix = MixSpec::preset(1, &catalog).expect("preset 1 exists");
    generate(n, lambda, &mix, seed, &catalog).expect("valid settings").tasks
}

/// A VM already holding `depth` queued tasks of mixed sizes with slack.
pub fn loaded_queue(depth: usize) -> VmQueue {
    let mut queues = vec![VmQueue::new(0)];
    for i in 0..depth {
        let work = Duration::from_millis(500 + (i as u64 * 7919) % 4_000);
        let task = edge_task(&format!("q{i}"), work);
        let h = Deadline { h: TimePoint::from_secs(10_000) };
        let trial = queues[0].trial_insert(&task, TimePoint::ZERO, h).expect("valid trial");
        commit(&mut queues, 0, trial).expect("fresh trial");
    }
    queues.pop().expect("one queue")
}

pub fn edge_task(id: &str, work: Duration) -> Task {
    let profile = CostProfile { r_mobile: Duration::from_secs(5_000), r_edge: work, r_cloud: work, ..Default::default() };
    Task::new(id, TimePoint::ZERO, profile)
}

/// Deterministic pseudo-random bytes.
pub fn noise_bytes(len: usize, mut state: u64) -> Vec<u8> {
    (0..len)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state as u8
        })
        .collect()
}
