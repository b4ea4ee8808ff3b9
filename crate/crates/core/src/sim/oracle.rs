//! Fixed-step re-execution of the VM plans, used to cross-check the
//! schedule arithmetic.
//!
//! After every decision the simulator hands over each VM's priority list.
//! The stepper keeps its own remaining-work counters, advances time in
//! increments of `dt` running the first listed piece whose upload has
//! finished, and derives completion times on its own. Whenever a new plan
//! arrives its per-task remaining work must agree with the stepper's.

use std::collections::HashMap;

use super::{energy_of, run_observed, Observer, SimConfig, SimError, SimReport, Summary};
use crate::model::{Duration, Platform, Task, TaskId, TimePoint};
use crate::policies::PolicyKind;
use crate::scheduler::{PlanEntry, VmQueue};

#[derive(Default)]
struct Recorder {
    snapshots: Vec<(TimePoint, Vec<Vec<PlanEntry>>)>,
}

impl Observer for Recorder {
    fn after_decision(&mut self, now: TimePoint, queues: &[VmQueue]) {
        self.snapshots.push((now, queues.iter().map(VmQueue::plan).collect()));
    }
}

struct StepPiece {
    task: TaskId,
    work: u64,
    ready: u64,
}

#[derive(Default)]
struct StepVm {
    t: u64,
    pieces: Vec<StepPiece>,
    left: HashMap<TaskId, u64>,
}

/// `(first execution instant, end of execution)` per task.
type Runs = HashMap<TaskId, (TimePoint, TimePoint)>;

impl StepVm {
    fn finish(&mut self, task: &TaskId, started: &mut HashMap<TaskId, u64>, runs: &mut Runs) {
        let start = started.remove(task).unwrap_or(self.t);
        runs.insert(task.clone(), (TimePoint::from_micros(start), TimePoint::from_micros(self.t)));
        self.left.remove(task);
        self.pieces.retain(|p| &p.task != task);
    }

    /// Steps to `until`, or until idle when `until` is `None`.
    fn step(&mut self, until: Option<u64>, dt: u64, started: &mut HashMap<TaskId, u64>, runs: &mut Runs) {
        loop {
            if until.is_some_and(|u| self.t >= u) {
                return;
            }
            let Some(i) = self.pieces.iter().position(|p| p.ready <= self.t) else {
                match (self.pieces.iter().map(|p| p.ready).min(), until) {
                    (None, None) => return,
                    (None, Some(u)) => self.t = u,
                    (Some(next), u) => self.t = u.map_or(next, |u| next.min(u)),
                }
                continue;
            };
            let task = self.pieces[i].task.clone();
            if self.left[&task] == 0 {
                started.entry(task.clone()).or_insert(self.t);
                self.finish(&task, started, runs);
                continue;
            }
            if self.pieces[i].work == 0 {
                self.pieces.remove(i);
                continue;
            }
            started.entry(task.clone()).or_insert(self.t);
            self.pieces[i].work -= dt;
            *self.left.get_mut(&task).expect("tracked task") -= dt;
            self.t += dt;
            if self.left[&task] == 0 {
                self.finish(&task, started, runs);
            }
        }
    }

    fn adopt(&mut self, vm: usize, plan: &[PlanEntry], finished: &Runs) -> Result<(), SimError> {
        let mut planned: HashMap<&TaskId, u64> = HashMap::new();
        for e in plan {
            *planned.entry(&e.task_id).or_default() += e.work.as_micros();
        }
        for (task, left) in &self.left {
            match planned.get(task) {
                Some(p) if p == left => {}
                other => {
                    return Err(SimError::OracleMismatch(format!(
                        "VM {vm} at {}: `{task}` has {left} us left by stepping, {other:?} by the plan",
                        TimePoint::from_micros(self.t)
                    )))
                }
            }
        }
        for task in planned.keys() {
            if finished.contains_key(*task) {
                return Err(SimError::OracleMismatch(format!("VM {vm}: finished task `{task}` is planned again")));
            }
        }
        self.left = planned.into_iter().map(|(k, v)| (k.clone(), v)).collect();
        self.pieces = plan
            .iter()
            .map(|e| StepPiece { task: e.task_id.clone(), work: e.work.as_micros(), ready: e.ready.as_micros() })
            .collect();
        Ok(())
    }
}

fn check_divides(dt: u64, value: u64, what: impl FnOnce() -> String) -> Result<(), SimError> {
    if !value.is_multiple_of(dt) {
        return Err(SimError::StepNotDivisor { dt: Duration::from_micros(dt), what: what() });
    }
    Ok(())
}

/// Re-runs `trace` under `policy` and recomputes every edge completion by
/// stepping the VMs in increments of `dt`. Arrivals, ready times and work
/// amounts must all be multiples of `dt`.
pub fn oracle_step_sim(trace: &[Task], policy: PolicyKind, config: &SimConfig, dt: Duration) -> Result<SimReport, SimError> {
    let dt = dt.as_micros();
    if dt == 0 {
        return Err(SimError::Config("step must be positive".into()));
    }
    let mut rec = Recorder::default();
    let raw = run_observed(trace, policy, config, &mut rec)?;

    for (at, plans) in &rec.snapshots {
        check_divides(dt, at.as_micros(), || format!("arrival {at}"))?;
        for e in plans.iter().flatten() {
            check_divides(dt, e.work.as_micros(), || format!("work {} of `{}`", e.work, e.task_id))?;
            check_divides(dt, e.ready.as_micros(), || format!("ready time {} of `{}`", e.ready, e.task_id))?;
        }
    }

    let mut vms: Vec<StepVm> = (0..config.num_vms).map(|_| StepVm::default()).collect();
    let mut started = HashMap::new();
    let mut runs = Runs::new();
    for (at, plans) in &rec.snapshots {
        for (vm, (state, plan)) in vms.iter_mut().zip(plans).enumerate() {
            state.step(Some(at.as_micros()), dt, &mut started, &mut runs);
            state.adopt(vm, plan, &runs)?;
        }
    }
    for vm in &mut vms {
        vm.step(None, dt, &mut started, &mut runs);
    }

    let mut report = raw.report;
    for (r, prof) in report.records.iter_mut().zip(&raw.profiles) {
        if let Platform::Edge(_) = r.platform {
            let (start, end) = *runs
                .get(&r.task_id)
                .ok_or_else(|| SimError::OracleMismatch(format!("stepping never finished `{}`", r.task_id)))?;
            r.start = start;
            r.completion = end + prof.down_edge;
            r.waiting = end.saturating_since(r.ready).saturating_sub(prof.r_edge);
            r.deadline_met = r.deadline.map(|d| r.completion <= d.h);
            r.energy_joules = energy_of(prof, r.platform, r.response(), &config.energy);
        }
    }
    report.summary = Summary::from_records(&report.records, report.summary.backhaul_bytes);
    Ok(report)
}
