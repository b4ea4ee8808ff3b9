//! Per-VM preemption-constrained shortest-remaining-time-first (PC-SRTF)
//! schedules.
//!
//! A [`VmQueue`] keeps the unexecuted work of one VM as an ordered list of
//! pieces. List position is priority: at every instant the VM runs the
//! earliest-listed piece whose task has finished uploading. A task normally
//! owns one piece; preemption repair can split it into several.
//!
//! [`VmQueue::trial_insert`] builds a candidate schedule for a new task on a
//! copy of the queue:
//!
//! 1. Find the first queued task whose remaining work exceeds the newcomer's
//!    running time. If there is none, the newcomer is appended.
//! 2. Otherwise insert the newcomer just before that task and look, from the
//!    insertion point forward, for the first task that now misses its
//!    deadline. That task is pinned to its deadline by evicting as much work
//!    as it has placed past the deadline, taken from the runs immediately
//!    before it (latest-running first; with upload delays this can differ
//!    from list order). The evicted work is re-inserted right after the
//!    pinned task and the check repeats from there.
//!
//! Each round moves the insertion point past one task whose pieces are then
//! never touched again, so the loop runs at most once per queued task. If the
//! result would leave an admitted task past its deadline or move one earlier,
//! the newcomer is appended at the tail instead, which never delays anyone.

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use crate::model::{Deadline, Duration, Segment, Task, TaskId, TimePoint};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SchedError {
    #[error("task `{0}` is not queued on this VM")]
    UnknownTask(TaskId),
    #[error("task `{0}` is already queued on this VM")]
    AlreadyQueued(TaskId),
    #[error("ready time {ready} precedes the queue clock {now}")]
    ReadyInPast { ready: TimePoint, now: TimePoint },
    #[error("cannot move the clock of VM {vm} back from {now} to {to}")]
    ClockRewind { vm: usize, now: TimePoint, to: TimePoint },
    #[error("trial for VM {trial_vm} committed to VM {vm}")]
    WrongVm { vm: usize, trial_vm: usize },
    #[error("stale trial: VM {vm} changed since the trial was computed")]
    StaleTrial { vm: usize },
    #[error("no edge VMs configured")]
    NoVms,
}

/// Book-keeping for one task admitted to a VM.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueuedTask {
    pub task_id: TaskId,
    pub arrival: TimePoint,
    /// Earliest instant execution may start (upload finished).
    pub ready: TimePoint,
    /// Total edge running time.
    pub work: Duration,
    pub deadline: Option<Deadline>,
    /// Latest admissible end of execution: the deadline minus the result
    /// download time, or `TimePoint::MAX` when unconstrained.
    pub exec_deadline: TimePoint,
    /// First instant the task actually executed, once it has.
    pub started: Option<TimePoint>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Piece {
    task: TaskId,
    work: Duration,
}

/// One executed-or-planned interval of a piece.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Slot {
    piece: usize,
    start: TimePoint,
    end: TimePoint,
}

/// A task that finished executing on a VM.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Completed {
    pub task_id: TaskId,
    pub started: TimePoint,
    pub finished: TimePoint,
}

/// One entry of a VM's priority-ordered plan.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlanEntry {
    pub task_id: TaskId,
    pub work: Duration,
    pub ready: TimePoint,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VmQueue {
    vm_index: usize,
    now: TimePoint,
    pieces: Vec<Piece>,
    tasks: HashMap<TaskId, QueuedTask>,
    slots: Vec<Slot>,
    revision: u64,
}

/// Result of tentatively placing a task on one VM.
#[derive(Clone, Debug)]
pub struct TrialInsertion {
    pub vm_index: usize,
    /// The would-be queue; committing replaces the VM's queue with it.
    pub candidate_queue: VmQueue,
    /// Completion-time growth: the newcomer's response time plus the delay
    /// inflicted on every task already queued.
    pub delta_t: Duration,
    /// When the newcomer would finish executing.
    pub candidate_completion: TimePoint,
    /// The task the newcomer was inserted in front of, if any.
    pub preempted: Option<TaskId>,
    pub repair_iterations: usize,
    /// Set when deadline repair failed and the newcomer went to the tail.
    pub appended_after_failed_repair: bool,
    base_revision: u64,
}

impl VmQueue {
    pub fn new(vm_index: usize) -> Self {
        Self::starting_at(vm_index, TimePoint::ZERO)
    }

    pub fn starting_at(vm_index: usize, now: TimePoint) -> Self {
        VmQueue { vm_index, now, pieces: Vec::new(), tasks: HashMap::new(), slots: Vec::new(), revision: 0 }
    }

    pub fn vm_index(&self) -> usize {
        self.vm_index
    }

    pub fn now(&self) -> TimePoint {
        self.now
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn queued_task(&self, id: &TaskId) -> Option<&QueuedTask> {
        self.tasks.get(id)
    }

    pub fn contains(&self, id: &TaskId) -> bool {
        self.tasks.contains_key(id)
    }

    /// Unexecuted work of `id` as of [`VmQueue::now`].
    pub fn remaining_work(&self, id: &TaskId) -> Result<Duration, SchedError> {
        if !self.tasks.contains_key(id) {
            return Err(SchedError::UnknownTask(id.clone()));
        }
        Ok(self.pieces.iter().filter(|p| &p.task == id).map(|p| p.work).sum())
    }

    /// Unexecuted work of every queued task.
    pub fn total_remaining(&self) -> Duration {
        self.pieces.iter().map(|p| p.work).sum()
    }

    /// Planned end of execution for a queued task.
    pub fn completion_of(&self, id: &TaskId) -> Option<TimePoint> {
        self.tasks.get(id)?;
        Some(self.completions().get(id).copied().unwrap_or(self.now))
    }

    /// Planned end of execution of every queued task.
    pub fn completions(&self) -> HashMap<TaskId, TimePoint> {
        completions_of(&self.pieces, &self.slots)
    }

    /// Time-ordered planned execution, adjacent stretches of the same task merged.
    pub fn segments(&self) -> Vec<Segment> {
        let mut out: Vec<Segment> = Vec::with_capacity(self.slots.len());
        for slot in &self.slots {
            let task = &self.pieces[slot.piece].task;
            match out.last_mut() {
                Some(last) if &last.task_id == task && last.scheduled_end == slot.start => {
                    last.scheduled_end = slot.end;
                    last.work += slot.end - slot.start;
                }
                _ => out.push(Segment {
                    task_id: task.clone(),
                    work: slot.end - slot.start,
                    scheduled_start: slot.start,
                    scheduled_end: slot.end,
                }),
            }
        }
        out
    }

    /// Priority-ordered unexecuted work.
    pub fn plan(&self) -> Vec<PlanEntry> {
        self.pieces
            .iter()
            .map(|p| PlanEntry { task_id: p.task.clone(), work: p.work, ready: self.tasks[&p.task].ready })
            .collect()
    }

    /// Adds a task at the lowest priority, without any preemption or
    /// deadline repair.
    pub fn append(&mut self, task: &Task, ready: TimePoint, deadline: Option<Deadline>) -> Result<(), SchedError> {
        self.check_new(task, ready)?;
        self.admit(task, ready, deadline);
        self.pieces.push(Piece { task: task.id.clone(), work: task.profile.r_edge });
        self.replan();
        self.revision += 1;
        Ok(())
    }

    /// Executes the plan up to `to` and returns the tasks that finished by
    /// then, in order of completion.
    pub fn advance(&mut self, to: TimePoint) -> Result<Vec<Completed>, SchedError> {
        if to < self.now {
            return Err(SchedError::ClockRewind { vm: self.vm_index, now: self.now, to });
        }
        if to == self.now {
            return Ok(Vec::new());
        }
        let completions = self.completions();
        for slot in &self.slots {
            if slot.start >= to && !(slot.start == slot.end && slot.start <= to) {
                break;
            }
            let ran = slot.end.min(to) - slot.start;
            let piece = &mut self.pieces[slot.piece];
            piece.work = piece.work - ran;
            self.tasks.get_mut(&piece.task).expect("piece without task").started.get_or_insert(slot.start);
        }
        let mut done: Vec<Completed> = completions
            .into_iter()
            .filter(|(_, end)| *end <= to)
            .map(|(id, end)| {
                let t = self.tasks.remove(&id).expect("completed task is queued");
                Completed { task_id: id, started: t.started.unwrap_or(end), finished: end }
            })
            .collect();
        done.sort_by(|a, b| a.finished.cmp(&b.finished).then_with(|| a.task_id.cmp(&b.task_id)));
        let tasks = &self.tasks;
        self.pieces.retain(|p| tasks.contains_key(&p.task) && !p.work.is_zero());
        self.now = to;
        self.replan();
        self.revision += 1;
        Ok(done)
    }

    /// Builds the candidate schedule for `task` without touching `self`.
    pub fn trial_insert(&self, task: &Task, ready: TimePoint, deadline: Deadline) -> Result<TrialInsertion, SchedError> {
        self.check_new(task, ready)?;
        let work = task.profile.r_edge;
        let before = self.completions();

        let mut cand = self.clone();
        cand.revision = self.revision + 1;
        cand.admit(task, ready, Some(deadline));

        let mut totals: HashMap<&TaskId, Duration> = HashMap::new();
        for p in &self.pieces {
            *totals.entry(&p.task).or_default() += p.work;
        }
        let head = self.pieces.iter().position(|p| totals[&p.task] > work);

        let mut preempted = None;
        let mut repair_iterations = 0;
        let mut appended_after_failed_repair = false;
        match head {
            None => {
                cand.pieces.push(Piece { task: task.id.clone(), work });
                cand.replan();
            }
            Some(at) => {
                preempted = Some(self.pieces[at].task.clone());
                let mut repaired = cand.clone();
                let ok = repaired.insert_with_repair(&task.id, work, at, &mut repair_iterations)
                    && repaired.harms_nobody(&task.id, &before);
                if ok {
                    cand = repaired;
                } else {
                    appended_after_failed_repair = true;
                    cand.pieces.push(Piece { task: task.id.clone(), work });
                    cand.replan();
                }
            }
        }

        let after = cand.completions();
        let candidate_completion = after.get(&task.id).copied().unwrap_or(ready.max(self.now));
        let mut growth = candidate_completion.saturating_since(task.arrival);
        for (id, old) in &before {
            growth += after.get(id).copied().unwrap_or(*old).saturating_since(*old);
        }
        Ok(TrialInsertion {
            vm_index: self.vm_index,
            candidate_queue: cand,
            delta_t: growth,
            candidate_completion,
            preempted,
            repair_iterations,
            appended_after_failed_repair,
            base_revision: self.revision,
        })
    }

    fn check_new(&self, task: &Task, ready: TimePoint) -> Result<(), SchedError> {
        if self.tasks.contains_key(&task.id) {
            return Err(SchedError::AlreadyQueued(task.id.clone()));
        }
        if ready < self.now {
            return Err(SchedError::ReadyInPast { ready, now: self.now });
        }
        Ok(())
    }

    fn admit(&mut self, task: &Task, ready: TimePoint, deadline: Option<Deadline>) {
        let exec_deadline = deadline.map_or(TimePoint::MAX, |d| d.h.saturating_sub(task.profile.down_edge));
        self.tasks.insert(
            task.id.clone(),
            QueuedTask {
                task_id: task.id.clone(),
                arrival: task.arrival,
                ready,
                work: task.profile.r_edge,
                deadline,
                exec_deadline,
                started: None,
            },
        );
    }

    /// The insertion/eviction loop. Returns `false` when a deadline could
    /// not be restored.
    fn insert_with_repair(&mut self, newcomer: &TaskId, work: Duration, at: usize, iterations: &mut usize) -> bool {
        let mut insert = vec![Piece { task: newcomer.clone(), work }];
        let mut p = at;
        let bound = self.tasks.len() + 1;
        loop {
            *iterations += 1;
            if *iterations > bound {
                return false;
            }
            self.pieces.splice(p..p, insert.drain(..));
            self.replan();

            let Some((k, mut k_last)) = self.first_violation(p, newcomer) else {
                self.drop_empty_pieces();
                return true;
            };
            let limit = self.tasks[&k].exec_deadline;
            let mut evicted: Vec<Piece> = Vec::new();
            loop {
                let end = self.completions()[&k];
                let overshoot = self.work_after(&k, limit);
                if overshoot.is_zero() {
                    break;
                }
                let Some((idx, run)) = self.latest_before(p..k_last, &k, end) else {
                    return false;
                };
                let piece = &mut self.pieces[idx];
                let take = overshoot.min(run);
                piece.work = piece.work - take;
                evicted.push(Piece { task: piece.task.clone(), work: take });
                if piece.work.is_zero() {
                    self.pieces.remove(idx);
                    k_last -= 1;
                }
                self.replan();
            }
            // Evicted chunks were collected back to front.
            evicted.reverse();
            for piece in evicted {
                match insert.last_mut() {
                    Some(last) if last.task == piece.task => last.work += piece.work,
                    _ => insert.push(piece),
                }
            }
            p = k_last + 1;
            debug_assert!(p <= self.pieces.len());
            if insert.is_empty() {
                self.drop_empty_pieces();
                return true;
            }
        }
    }

    /// The latest run, among pieces listed in `range` other than `k`'s,
    /// that ends by `until` and after `k` could start. Returns the piece
    /// index and how much of that run lies after `k`'s release.
    fn latest_before(&self, range: std::ops::Range<usize>, k: &TaskId, until: TimePoint) -> Option<(usize, Duration)> {
        let release = self.tasks[k].ready.max(self.now);
        self.slots
            .iter()
            .filter(|s| range.contains(&s.piece) && &self.pieces[s.piece].task != k)
            .filter(|s| s.end <= until && s.end > release)
            .max_by_key(|s| (s.end, s.piece))
            .map(|s| (s.piece, s.end - s.start.max(release)))
    }

    /// First task, excluding `newcomer`, whose last piece sits at or after
    /// index `from` and that finishes past its execution deadline.
    fn first_violation(&self, from: usize, newcomer: &TaskId) -> Option<(TaskId, usize)> {
        let mut last_index: HashMap<&TaskId, usize> = HashMap::new();
        for (i, p) in self.pieces.iter().enumerate() {
            last_index.insert(&p.task, i);
        }
        let completions = self.completions();
        let mut candidates: Vec<(usize, &TaskId)> =
            last_index.into_iter().filter(|(id, i)| *i >= from && *id != newcomer).map(|(id, i)| (i, id)).collect();
        candidates.sort();
        candidates
            .into_iter()
            .find(|(_, id)| completions[*id] > self.tasks[*id].exec_deadline)
            .map(|(i, id)| (id.clone(), i))
    }

    /// Work of `task` placed after `t`.
    fn work_after(&self, task: &TaskId, t: TimePoint) -> Duration {
        self.slots
            .iter()
            .filter(|s| &self.pieces[s.piece].task == task && s.end > t)
            .map(|s| s.end - s.start.max(t))
            .sum()
    }

    /// No task other than the newcomer finishes earlier than before the
    /// insertion, and each one either meets its execution deadline or is no
    /// later than it was.
    fn harms_nobody(&self, newcomer: &TaskId, before: &HashMap<TaskId, TimePoint>) -> bool {
        let after = self.completions();
        self.tasks.values().filter(|t| &t.task_id != newcomer).all(|t| {
            let end = after.get(&t.task_id).copied().unwrap_or(self.now);
            let old = before.get(&t.task_id).copied().unwrap_or(end);
            end >= old && (end <= t.exec_deadline || end == old)
        })
    }

    /// Drops exhausted pieces, keeping one per task so zero-work tasks stay
    /// schedulable.
    fn drop_empty_pieces(&mut self) {
        let before = self.pieces.len();
        let mut with_work: HashMap<TaskId, bool> = HashMap::new();
        for p in &self.pieces {
            *with_work.entry(p.task.clone()).or_default() |= !p.work.is_zero();
        }
        let mut kept_husk: HashSet<TaskId> = HashSet::new();
        self.pieces.retain(|p| !p.work.is_zero() || (!with_work[&p.task] && kept_husk.insert(p.task.clone())));
        if self.pieces.len() != before {
            self.replan();
        }
    }

    fn replan(&mut self) {
        let ready: Vec<TimePoint> = self.pieces.iter().map(|p| self.tasks[&p.task].ready).collect();
        self.slots = place(self.now, &self.pieces, &ready);
    }
}

fn completions_of(pieces: &[Piece], slots: &[Slot]) -> HashMap<TaskId, TimePoint> {
    let mut out: HashMap<TaskId, TimePoint> = HashMap::with_capacity(pieces.len());
    for slot in slots {
        let id = &pieces[slot.piece].task;
        match out.get_mut(id) {
            Some(end) => *end = (*end).max(slot.end),
            None => {
                out.insert(id.clone(), slot.end);
            }
        }
    }
    out
}

/// Preemptive fixed-priority placement with release times.
///
/// Pieces are placed in list order; each takes the earliest free time at or
/// after its release. Placing a lower-priority piece never disturbs a higher
/// one, so the result equals running, at every instant, the first released
/// piece with work left. Zero-work pieces get an empty slot at their release.
fn place(now: TimePoint, pieces: &[Piece], ready: &[TimePoint]) -> Vec<Slot> {
    // Sorted, disjoint free intervals; the last one is unbounded.
    let mut free: Vec<(TimePoint, TimePoint)> = vec![(now, TimePoint::MAX)];
    let mut slots = Vec::with_capacity(pieces.len() + 4);
    for (idx, piece) in pieces.iter().enumerate() {
        let release = ready[idx].max(now);
        if piece.work.is_zero() {
            slots.push(Slot { piece: idx, start: release, end: release });
            continue;
        }
        let mut left = piece.work;
        let mut g = free.partition_point(|&(_, end)| end <= release);
        while !left.is_zero() {
            let (gs, ge) = free[g];
            let start = gs.max(release);
            let take = left.min(ge - start);
            let end = start + take;
            slots.push(Slot { piece: idx, start, end });
            left = left - take;
            let mut replacement = Vec::with_capacity(2);
            if gs < start {
                replacement.push((gs, start));
            }
            if end < ge {
                replacement.push((end, ge));
            }
            let kept = replacement.len();
            free.splice(g..g + 1, replacement);
            // Continue in the gap after the one just consumed.
            g += kept.saturating_sub(if end < ge { 1 } else { 0 });
        }
    }
    slots.sort_by_key(|s| (s.start, s.end, s.piece));
    slots
}

/// Unexecuted work of `task_id` on `queue`.
pub fn remaining_work(queue: &VmQueue, task_id: &TaskId) -> Result<Duration, SchedError> {
    queue.remaining_work(task_id)
}

/// Runs a trial on every VM and keeps the one with the smallest growth;
/// ties go to the lowest VM index.
pub fn best_vm(
    queues: &[VmQueue],
    task: &Task,
    ready: TimePoint,
    deadline: Deadline,
) -> Result<(usize, TrialInsertion), SchedError> {
    let mut best: Option<TrialInsertion> = None;
    for queue in queues {
        let trial = queue.trial_insert(task, ready, deadline)?;
        if best.as_ref().is_none_or(|b| trial.delta_t < b.delta_t) {
            best = Some(trial);
        }
    }
    let best = best.ok_or(SchedError::NoVms)?;
    Ok((best.vm_index, best))
}

/// Replaces `queues[vm_index]` with the trial's candidate queue.
pub fn commit(queues: &mut [VmQueue], vm_index: usize, trial: TrialInsertion) -> Result<(), SchedError> {
    if trial.vm_index != vm_index {
        return Err(SchedError::WrongVm { vm: vm_index, trial_vm: trial.vm_index });
    }
    let queue = queues.get_mut(vm_index).ok_or(SchedError::NoVms)?;
    if queue.revision != trial.base_revision || queue.now != trial.candidate_queue.now {
        return Err(SchedError::StaleTrial { vm: vm_index });
    }
    *queue = trial.candidate_queue;
    Ok(())
}

/// Advances `queue` to `to`; see [`VmQueue::advance`].
pub fn advance(queue: &mut VmQueue, to: TimePoint) -> Result<Vec<Completed>, SchedError> {
    queue.advance(to)
}
