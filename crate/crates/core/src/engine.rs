//! Centralized decision engine: estimates completion time on the device,
//! the cloud and the best edge VM, picks the fastest, and admits edge tasks
//! under a deadline of `now + min(T_mobile, T_cloud)`.

use crate::model::{Deadline, Decision, Duration, Platform, Task, TimePoint};
use crate::scheduler::{self, Completed, SchedError, TrialInsertion, VmQueue};

/// Completion-time estimates for one task, relative to the decision instant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlatformEstimate {
    pub t_mobile: Duration,
    pub t_cloud: Duration,
    /// `None` when no VM is configured or the task is not offloadable.
    pub t_edge: Option<Duration>,
    pub chosen: Decision,
}

/// `(T_mobile, T_cloud)` for a task; a pure function of its profile.
pub fn estimate(task: &Task) -> (Duration, Duration) {
    (task.profile.t_mobile(), task.profile.t_cloud())
}

/// Evaluates all three platforms without mutating anything. Returns the
/// winning edge trial alongside the estimate so the caller can commit it.
pub fn evaluate(
    task: &Task,
    queues: &[VmQueue],
    now: TimePoint,
    provision_delay: Duration,
) -> Result<(PlatformEstimate, Option<TrialInsertion>), SchedError> {
    let (t_mobile, t_cloud) = estimate(task);
    if !task.offloadable {
        let chosen = Decision::mobile(now, &task.profile);
        return Ok((PlatformEstimate { t_mobile, t_cloud, t_edge: None, chosen }, None));
    }
    let deadline = Deadline { h: now + t_mobile.min(t_cloud) };
    let edge = if queues.is_empty() {
        None
    } else {
        let ready = now + provision_delay + task.profile.up_edge;
        let (vm, trial) = scheduler::best_vm(queues, task, ready, deadline)?;
        let t_edge = trial.candidate_completion.saturating_since(now) + task.profile.down_edge;
        Some((vm, t_edge, trial))
    };

    // Ties resolve Edge, then Cloud, then Mobile.
    let mut chosen = Decision::cloud(now, &task.profile);
    let mut best = t_cloud;
    if t_mobile < best {
        best = t_mobile;
        chosen = Decision::mobile(now, &task.profile);
    }
    let t_edge = edge.as_ref().map(|(_, t, _)| *t);
    let mut winning_trial = None;
    if let Some((vm, t, trial)) = edge {
        if t <= best {
            chosen = Decision { platform: Platform::Edge(vm), predicted_completion: now + t, deadline: Some(deadline) };
            winning_trial = Some(trial);
        }
    }
    Ok((PlatformEstimate { t_mobile, t_cloud, t_edge, chosen }, winning_trial))
}

/// Decides where `task` runs and, iff the edge wins, commits its schedule.
pub fn decide(
    task: &Task,
    queues: &mut [VmQueue],
    now: TimePoint,
    provision_delay: Duration,
) -> Result<PlatformEstimate, SchedError> {
    let (estimate, trial) = evaluate(task, queues, now, provision_delay)?;
    if let (Platform::Edge(vm), Some(trial)) = (estimate.chosen.platform, trial) {
        scheduler::commit(queues, vm, trial)?;
    }
    Ok(estimate)
}

/// Owns the VM queues of one edge node and serializes decisions on them.
#[derive(Clone, Debug)]
pub struct DecisionEngine {
    queues: Vec<VmQueue>,
    provision_delay: Duration,
    finished: Vec<Completed>,
}

impl DecisionEngine {
    pub fn new(num_vms: usize, provision_delay: Duration) -> Self {
        DecisionEngine { queues: (0..num_vms).map(VmQueue::new).collect(), provision_delay, finished: Vec::new() }
    }

    pub fn queues(&self) -> &[VmQueue] {
        &self.queues
    }

    pub fn queues_mut(&mut self) -> &mut [VmQueue] {
        &mut self.queues
    }

    pub fn provision_delay(&self) -> Duration {
        self.provision_delay
    }

    /// Runs every VM up to `t`, remembering which tasks finished.
    pub fn advance_to(&mut self, t: TimePoint) -> Result<(), SchedError> {
        for q in &mut self.queues {
            if t > q.now() {
                let done = q.advance(t)?;
                self.finished.extend(done);
            }
        }
        Ok(())
    }

    /// Runs every VM until its queue drains.
    pub fn drain(&mut self) -> Result<(), SchedError> {
        let horizon = self
            .queues
            .iter()
            .flat_map(|q| q.completions().into_values())
            .max()
            .unwrap_or(TimePoint::ZERO);
        self.advance_to(horizon)
    }

    pub fn take_finished(&mut self) -> Vec<Completed> {
        std::mem::take(&mut self.finished)
    }

    pub fn evaluate(&self, task: &Task, now: TimePoint) -> Result<(PlatformEstimate, Option<TrialInsertion>), SchedError> {
        evaluate(task, &self.queues, now, self.provision_delay)
    }

    /// Advances to `now` and decides; see [`decide`].
    pub fn decide(&mut self, task: &Task, now: TimePoint) -> Result<PlatformEstimate, SchedError> {
        self.advance_to(now)?;
        decide(task, &mut self.queues, now, self.provision_delay)
    }

    /// Inserts `task` on a specific VM under an already-assigned deadline and
    /// returns its planned end of execution.
    pub fn admit_on(&mut self, vm: usize, task: &Task, now: TimePoint, deadline: Deadline) -> Result<TimePoint, SchedError> {
        self.advance_to(now)?;
        let ready = now + self.provision_delay + task.profile.up_edge;
        let queue = self.queues.get(vm).ok_or(SchedError::NoVms)?;
        let trial = queue.trial_insert(task, ready, deadline)?;
        let end = trial.candidate_completion;
        scheduler::commit(&mut self.queues, vm, trial)?;
        Ok(end)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CostProfile;

    fn secs(s: u64) -> Duration {
        Duration::from_secs(s)
    }

    fn task(id: &str, r_m: u64, r_e: u64, up_e: u64, (up_c, r_c, down_c): (u64, u64, u64)) -> Task {
        Task::new(
            id,
            TimePoint::ZERO,
            CostProfile {
                r_mobile: secs(r_m),
                r_edge: secs(r_e),
                r_cloud: secs(r_c),
                up_edge: secs(up_e),
                down_edge: Duration::ZERO,
                up_cloud: secs(up_c),
                down_cloud: secs(down_c),
                upload_bytes: 0,
                download_bytes: 0,
            },
        )
    }

    #[test]
    fn estimate_follows_the_closed_forms() {
        let t = task("a", 10, 4, 1, (2, 3, 1));
        assert_eq!(estimate(&t), (secs(10), secs(6)));
        let z = task("z", 10, 4, 1, (0, 0, 0));
        assert_eq!(estimate(&z).1, Duration::ZERO);
    }

    #[test]
    fn fast_edge_wins_with_min_deadline() {
        // t_edge = 0.5 + 5 = 5.5 < t_cloud = 6 < t_mobile = 10
        let mut t = task("a", 10, 5, 0, (2, 3, 1));
        t.profile.up_edge = Duration::from_millis(500);
        let mut queues = vec![VmQueue::new(0)];
        let est = decide(&t, &mut queues, TimePoint::ZERO, Duration::ZERO).unwrap();
        assert_eq!(est.t_edge, Some(Duration::from_millis(5500)));
        assert_eq!(est.chosen.platform, Platform::Edge(0));
        assert_eq!(est.chosen.deadline, Some(Deadline { h: TimePoint::from_secs(6) }));
        assert!(queues[0].contains(&t.id));
    }

    #[test]
    fn non_offloadable_stays_on_device() {
        let mut t = task("a", 10, 1, 0, (0, 1, 0));
        t.offloadable = false;
        let mut queues = vec![VmQueue::new(0)];
        let est = decide(&t, &mut queues, TimePoint::ZERO, Duration::ZERO).unwrap();
        assert_eq!(est.chosen, Decision::mobile(TimePoint::ZERO, &t.profile));
        assert!(queues[0].is_empty());
    }

    #[test]
    fn saturated_vm_sends_to_cloud_without_committing() {
        let mut queues = vec![VmQueue::new(0)];
        // Background work pinned to the first 8 s by a tight deadline.
        let bg = task("bg", 100, 8, 0, (50, 8, 50));
        queues[0].append(&bg, TimePoint::ZERO, Some(Deadline { h: TimePoint::from_secs(8) })).unwrap();
        let before = queues.clone();

        // Edge would finish at 8 + 1 = 9 s; cloud 6 s; mobile 10 s.
        let t = task("a", 10, 1, 0, (2, 3, 1));
        let est = decide(&t, &mut queues, TimePoint::ZERO, Duration::ZERO).unwrap();
        let oracle_edge = secs(8) + t.profile.r_edge;
        assert_eq!(est.t_edge, Some(oracle_edge));
        assert_eq!(est.t_cloud, secs(2 + 3 + 1));
        assert_eq!(est.t_mobile, secs(10));
        assert_eq!(est.chosen.platform, Platform::Cloud);
        assert_eq!(queues, before);
    }

    #[test]
    fn no_vms_is_a_two_way_choice() {
        let t = task("a", 10, 1, 0, (2, 3, 1));
        let mut queues: Vec<VmQueue> = Vec::new();
        let est = decide(&t, &mut queues, TimePoint::ZERO, Duration::ZERO).unwrap();
        assert_eq!(est.t_edge, None);
        assert_eq!(est.chosen.platform, Platform::Cloud);
    }

    #[test]
    fn ties_prefer_edge_then_cloud() {
        let t = task("a", 6, 6, 0, (2, 3, 1));
        let mut queues = vec![VmQueue::new(0)];
        let est = decide(&t, &mut queues, TimePoint::ZERO, Duration::ZERO).unwrap();
        assert_eq!(est.chosen.platform, Platform::Edge(0));

        let t = task("b", 6, 7, 0, (2, 3, 1));
        let est = decide(&t, &mut [], TimePoint::ZERO, Duration::ZERO).unwrap();
        assert_eq!(est.chosen.platform, Platform::Cloud);
    }

    #[test]
    fn provision_delay_pushes_the_edge_estimate() {
        let t = task("a", 10, 4, 1, (2, 3, 1));
        let mut engine = DecisionEngine::new(1, secs(2));
        let est = engine.decide(&t, TimePoint::ZERO).unwrap();
        assert_eq!(est.t_edge, Some(secs(2 + 1 + 4)));
        assert_eq!(est.chosen.platform, Platform::Cloud);
    }
}
