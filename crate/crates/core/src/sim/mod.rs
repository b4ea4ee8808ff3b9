//! Trace-driven simulation of one edge node, a cloud and many devices.
//!
//! Decisions happen only at arrivals. Device and cloud tasks finish at their
//! closed-form times; edge tasks finish when their VM schedule says so.

mod energy;
mod oracle;
mod report;

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{validate_trace, CostProfile, Deadline, Decision, Duration, ModelError, Platform, Task, TimePoint};
use crate::objectsync::{Endpoint, SyncError, SyncLedger, UploadPlan, DEFAULT_PROXY_HEADER};
use crate::policies::{Dispatcher, PolicyKind};
use crate::scheduler::{Completed, SchedError, VmQueue};

pub use energy::{energy_of, transfer_time, EnergyParams};
pub use oracle::oracle_step_sim;
pub use report::{PlatformCounts, RunInfo, SimReport, Summary, TaskRecord, CSV_HEADER};

pub const MAX_VMS: usize = 1024;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Sched(#[from] SchedError),
    #[error(transparent)]
    Sync(#[from] SyncError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid simulation setting: {0}")]
    Config(String),
    #[error("step {dt} does not divide {what}")]
    StepNotDivisor { dt: Duration, what: String },
    #[error("step simulation disagrees with the schedule: {0}")]
    OracleMismatch(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub num_vms: usize,
    /// Arrival rate the trace was generated with; only echoed in reports.
    pub lambda: Option<f64>,
    pub energy: EnergyParams,
    /// Seeds the estimation noise.
    pub seed: u64,
    /// Extra delay before an edge VM can start a task.
    pub provision_delay: Duration,
    /// Relative error of the estimates the scheduler decides on: each
    /// duration is scaled by a factor drawn from `[1 - noise, 1 + noise]`.
    /// Zero means exact profiles.
    pub noise: f64,
    pub proxy_header: u64,
    /// Round trip paid for each object fetched on demand.
    pub fetch_rtt_edge: Duration,
    pub fetch_rtt_cloud: Duration,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            num_vms: 1,
            lambda: None,
            energy: EnergyParams::default(),
            seed: 0,
            provision_delay: Duration::ZERO,
            noise: 0.0,
            proxy_header: DEFAULT_PROXY_HEADER,
            fetch_rtt_edge: Duration::from_millis(10),
            fetch_rtt_cloud: Duration::from_millis(60),
        }
    }
}

impl SimConfig {
    pub fn with_vms(num_vms: usize) -> Self {
        SimConfig { num_vms, ..Default::default() }
    }

    fn check(&self) -> Result<(), SimError> {
        if self.num_vms > MAX_VMS {
            return Err(SimError::Config(format!("num_vms {} exceeds {MAX_VMS}", self.num_vms)));
        }
        if !(self.noise.is_finite() && (0.0..1.0).contains(&self.noise)) {
            return Err(SimError::Config(format!("noise must lie in [0, 1), got {}", self.noise)));
        }
        if !self.energy.is_valid() {
            return Err(SimError::Config("energy parameters must be finite and non-negative".into()));
        }
        if self.lambda.is_some_and(|l| !(l.is_finite() && l > 0.0)) {
            return Err(SimError::Config("lambda must be positive".into()));
        }
        Ok(())
    }
}

/// `up` scaled to the bytes actually sent, plus one round trip per fetch.
fn effective_upload(up: Duration, upload_bytes: u64, plan: &UploadPlan, rtt: Duration) -> (Duration, u64) {
    let other = upload_bytes.saturating_sub(plan.eager_bytes);
    let eager = other + plan.eager_bytes;
    let sent = other + plan.effective_bytes;
    if eager == 0 {
        return (up, upload_bytes);
    }
    let scaled = (up.as_micros() as u128 * sent as u128).div_ceil(eager as u128);
    (Duration::from_micros(scaled as u64) + rtt * plan.fetches as u64, sent)
}

fn noisy(p: &CostProfile, rng: &mut ChaCha8Rng, noise: f64) -> CostProfile {
    let mut f = |d: Duration| d.mul_f64(1.0 + rng.random_range(-noise..=noise));
    CostProfile {
        r_mobile: f(p.r_mobile),
        r_edge: f(p.r_edge),
        r_cloud: f(p.r_cloud),
        up_edge: f(p.up_edge),
        down_edge: f(p.down_edge),
        up_cloud: f(p.up_cloud),
        down_cloud: f(p.down_cloud),
        ..p.clone()
    }
}

/// Notified after every decision with the decision instant and the VM
/// queues as they stand.
pub(crate) trait Observer {
    fn after_decision(&mut self, now: TimePoint, queues: &[VmQueue]);
}

impl Observer for () {
    fn after_decision(&mut self, _: TimePoint, _: &[VmQueue]) {}
}

/// Per-task data kept between the decision and the final record.
struct Pending {
    task_idx: usize,
    profile: CostProfile,
    decision: Decision,
    bytes_up: u64,
}

pub(crate) struct RawRun {
    pub report: SimReport,
    /// Effective profiles, indexed like `report.records`.
    pub profiles: Vec<CostProfile>,
}

fn sorted_trace(trace: &[Task]) -> Vec<&Task> {
    let mut sorted: Vec<&Task> = trace.iter().collect();
    sorted.sort_by(|a, b| a.arrival.cmp(&b.arrival).then_with(|| a.id.cmp(&b.id)));
    sorted
}

pub(crate) fn run_observed(
    trace: &[Task],
    policy: PolicyKind,
    config: &SimConfig,
    observer: &mut dyn Observer,
) -> Result<RawRun, SimError> {
    config.check()?;
    validate_trace(trace)?;
    let tasks = sorted_trace(trace);
    let mut dispatcher = Dispatcher::new(policy, config.num_vms, config.provision_delay);
    let mut ledger = SyncLedger::new();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut pending: Vec<Pending> = Vec::with_capacity(tasks.len());
    let mut finished: HashMap<_, Completed> = HashMap::new();
    let mut backhaul = 0u64;

    for (task_idx, &task) in tasks.iter().enumerate() {
        let now = task.arrival;
        let mut profile = task.profile.clone();
        let mut plans = None;
        if policy.optimizes_transfers() && !task.objects.is_empty() {
            let to_edge = ledger.plan_upload(Endpoint::Edge, &task.objects, config.proxy_header);
            let to_cloud = ledger.plan_upload(Endpoint::Cloud, &task.objects, config.proxy_header);
            profile.up_edge = effective_upload(profile.up_edge, profile.upload_bytes, &to_edge, config.fetch_rtt_edge).0;
            profile.up_cloud = effective_upload(profile.up_cloud, profile.upload_bytes, &to_cloud, config.fetch_rtt_cloud).0;
            plans = Some((to_edge, to_cloud));
        }
        let actual = Task { profile: profile.clone(), ..task.clone() };

        let decision = if config.noise > 0.0 && policy == PolicyKind::EchoPcSrtf {
            dispatcher.advance_to(now)?;
            let guess = Task { profile: noisy(&profile, &mut rng, config.noise), ..task.clone() };
            let engine = dispatcher.engine_mut();
            let chosen = engine.evaluate(&guess, now)?.0.chosen;
            match (chosen.platform, chosen.deadline) {
                (Platform::Edge(vm), Some(deadline)) => {
                    let end = engine.admit_on(vm, &actual, now, deadline)?;
                    Decision { predicted_completion: end + profile.down_edge, ..chosen }
                }
                _ => chosen,
            }
        } else {
            dispatcher.decide(&actual, now)?
        };
        for done in dispatcher.engine_mut().take_finished() {
            finished.insert(done.task_id.clone(), done);
        }
        observer.after_decision(now, dispatcher.engine().queues());

        let bytes_up = match (decision.platform, plans) {
            (Platform::Mobile, _) => 0,
            (platform, Some((to_edge, to_cloud))) => {
                let (endpoint, plan) = match platform {
                    Platform::Cloud => (Endpoint::Cloud, to_cloud),
                    _ => (Endpoint::Edge, to_edge),
                };
                let sent = ledger.commit_upload(endpoint, &task.objects, config.proxy_header);
                debug_assert_eq!(sent.total(), plan.effective_bytes);
                for obj in task.objects.iter().filter(|o| o.referred) {
                    backhaul += ledger.propagate(endpoint, &obj.id)?;
                }
                profile.upload_bytes.saturating_sub(plan.eager_bytes) + plan.effective_bytes
            }
            _ => profile.upload_bytes,
        };
        pending.push(Pending { task_idx, profile, decision, bytes_up });
    }
    for done in dispatcher.drain()? {
        finished.insert(done.task_id.clone(), done);
    }

    let mut records = Vec::with_capacity(pending.len());
    let mut profiles = Vec::with_capacity(pending.len());
    for p in pending {
        let task = tasks[p.task_idx];
        let arrival = task.arrival;
        let prof = &p.profile;
        let (ready, start, completion, waiting) = match p.decision.platform {
            Platform::Mobile => (arrival, arrival, arrival + prof.r_mobile, Duration::ZERO),
            Platform::Cloud => {
                let ready = arrival + prof.up_cloud;
                (ready, ready, ready + prof.r_cloud + prof.down_cloud, Duration::ZERO)
            }
            Platform::Edge(_) => {
                let done = finished
                    .get(&task.id)
                    .ok_or_else(|| SimError::OracleMismatch(format!("edge task `{}` never finished", task.id)))?;
                let ready = arrival + config.provision_delay + prof.up_edge;
                let waiting = done.finished.saturating_since(ready).saturating_sub(prof.r_edge);
                (ready, done.started, done.finished + prof.down_edge, waiting)
            }
        };
        let deadline = p.decision.deadline;
        let response = completion - arrival;
        records.push(TaskRecord {
            task_id: task.id.clone(),
            user_id: task.user_id.clone(),
            app: task.app.clone(),
            platform: p.decision.platform,
            arrival,
            ready,
            start,
            completion,
            waiting,
            deadline,
            deadline_met: deadline.map(|d: Deadline| completion <= d.h),
            bytes_up: p.bytes_up,
            bytes_down: if p.decision.platform == Platform::Mobile { 0 } else { prof.download_bytes },
            energy_joules: energy_of(prof, p.decision.platform, response, &config.energy),
        });
        profiles.push(p.profile);
    }
    let summary = Summary::from_records(&records, backhaul);
    let run = RunInfo {
        policy: policy.name().to_string(),
        num_vms: config.num_vms,
        lambda: config.lambda,
        seed: config.seed,
        provision_delay: config.provision_delay,
        noise: config.noise,
    };
    Ok(RawRun { report: SimReport { run, summary, records }, profiles })
}

/// Replays `trace` through `policy`. Tasks are processed in order of
/// arrival (ties by id); the output depends only on the arguments.
pub fn run(trace: &[Task], policy: PolicyKind, config: &SimConfig) -> Result<SimReport, SimError> {
    Ok(run_observed(trace, policy, config, &mut ())?.report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ObjectRef;

    fn secs(s: u64) -> Duration {
        Duration::from_secs(s)
    }

    fn profile(r_m: u64, r_e: u64, (up_c, r_c, down_c): (u64, u64, u64)) -> CostProfile {
        CostProfile {
            r_mobile: secs(r_m),
            r_edge: secs(r_e),
            r_cloud: secs(r_c),
            up_cloud: secs(up_c),
            down_cloud: secs(down_c),
            ..Default::default()
        }
    }

    #[test]
    fn lone_task_runs_on_an_idle_edge() {
        let t = Task::new("a", TimePoint::from_secs(1), profile(10, 4, (2, 3, 1)));
        let r = run(&[t], PolicyKind::EchoPcSrtf, &SimConfig::with_vms(2)).unwrap();
        let rec = &r.records[0];
        assert_eq!(rec.platform, Platform::Edge(0));
        assert_eq!(rec.waiting, Duration::ZERO);
        assert_eq!(rec.completion, TimePoint::from_secs(5));
        assert_eq!(rec.deadline_met, Some(true));
        assert_eq!(r.summary.platforms, PlatformCounts { mobile: 0, edge: 1, cloud: 0 });
    }

    #[test]
    fn deadline_repair_scenario_end_to_end() {
        // J1 arrives at 0 with 10 s of edge work and a 12 s deadline; at 2 s
        // a 3 s task arrives whose own deadline (15 s) admits the repair.
        let j1 = Task::new("j1", TimePoint::ZERO, profile(100, 10, (0, 10, 2)));
        let new = Task::new("new", TimePoint::from_secs(2), profile(20, 3, (0, 12, 1)));
        let r = run(&[new, j1], PolicyKind::EchoPcSrtf, &SimConfig::with_vms(1)).unwrap();
        let by_id = |id: &str| r.records.iter().find(|x| x.task_id.as_str() == id).unwrap().clone();
        let (j1, new) = (by_id("j1"), by_id("new"));
        assert_eq!(j1.deadline, Some(Deadline { h: TimePoint::from_secs(12) }));
        assert_eq!(j1.completion, TimePoint::from_secs(12));
        assert_eq!(new.platform, Platform::Edge(0));
        assert_eq!(new.completion, TimePoint::from_secs(13));
        assert_eq!((j1.deadline_met, new.deadline_met), (Some(true), Some(true)));
        assert_eq!(new.waiting, secs(8));
    }

    #[test]
    fn end_only_mean_is_the_mean_local_time() {
        let trace: Vec<Task> = (0..100u64)
            .map(|i| Task::new(format!("t{i}"), TimePoint::from_millis(i * 250), profile(1 + i % 17, 1, (1, 1, 1))))
            .collect();
        let r = run(&trace, PolicyKind::EndOnly, &SimConfig::with_vms(4)).unwrap();
        let oracle = trace.iter().map(|t| t.profile.r_mobile.as_secs_f64()).sum::<f64>() / 100.0;
        assert!((r.summary.mean_completion - oracle).abs() < 1e-9);
        assert_eq!(r.summary.platforms.mobile, 100);
    }

    #[test]
    fn empty_trace_gives_an_empty_report() {
        let r = run(&[], PolicyKind::EchoPcSrtf, &SimConfig::default()).unwrap();
        assert!(r.records.is_empty());
        assert_eq!(r.summary.deadline_compliance, 1.0);
    }

    #[test]
    fn lazy_upload_shrinks_bytes_and_time() {
        let mut t = Task::new("a", TimePoint::ZERO, profile(100, 4, (40, 3, 1)));
        t.profile.up_edge = secs(10);
        t.objects = (0..4)
            .map(|k| ObjectRef { id: format!("o{k}"), bytes: 25_000, referred: k == 0, version: 1, changed_bytes: 0 })
            .collect();
        t.profile.upload_bytes = 100_000;
        let cfg = SimConfig { fetch_rtt_edge: Duration::ZERO, ..SimConfig::with_vms(1) };
        let echo = run(std::slice::from_ref(&t), PolicyKind::EchoPcSrtf, &cfg).unwrap();
        let eager = run(std::slice::from_ref(&t), PolicyKind::MCloudBestEffort, &cfg).unwrap();
        assert_eq!(eager.records[0].bytes_up, 100_000);
        assert_eq!(echo.records[0].bytes_up, 4 * 64 + 25_000);
        // 10 s of upload shrinks in proportion to the bytes sent.
        let up = Duration::from_micros((10_000_000u128 * 25_256).div_ceil(100_000) as u64);
        assert_eq!(echo.records[0].ready, TimePoint::ZERO + up);
        assert_eq!(echo.summary.backhaul_bytes, 25_000);
    }

    #[test]
    fn noise_is_seeded() {
        let trace: Vec<Task> = (0..50u64)
            .map(|i| Task::new(format!("t{i}"), TimePoint::from_millis(i * 300), profile(12, 2 + i % 5, (3, 1, 1))))
            .collect();
        let cfg = SimConfig { noise: 0.2, seed: 4, ..SimConfig::with_vms(2) };
        assert_eq!(run(&trace, PolicyKind::EchoPcSrtf, &cfg).unwrap(), run(&trace, PolicyKind::EchoPcSrtf, &cfg).unwrap());
    }

    #[test]
    fn bad_configs_are_rejected() {
        let too_many = SimConfig::with_vms(MAX_VMS + 1);
        assert!(matches!(run(&[], PolicyKind::EchoPcSrtf, &too_many), Err(SimError::Config(_))));
        let noisy = SimConfig { noise: 1.5, ..Default::default() };
        assert!(run(&[], PolicyKind::EchoPcSrtf, &noisy).is_err());
    }

    #[test]
    fn csv_header_is_the_documented_one() {
        let t = Task::new("a", TimePoint::ZERO, profile(10, 4, (2, 3, 1)));
        for trace in [vec![], vec![t]] {
            let r = run(&trace, PolicyKind::ThinkAir, &SimConfig::default()).unwrap();
            let mut buf = Vec::new();
            r.write_csv(&mut buf).unwrap();
            let text = String::from_utf8(buf).unwrap();
            assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
        }
    }
}
