//! Offloading strategies compared by the simulator.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::{self, DecisionEngine};
use crate::model::{Decision, Duration, Platform, Task, TimePoint};
use crate::scheduler::{Completed, SchedError, VmQueue};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolicyKind {
    /// Everything runs on the device.
    EndOnly,
    /// Every offloadable method goes to the cloud.
    CloudAlways,
    /// Cloud only when it beats local execution.
    ThinkAir,
    /// Device-side greedy choice among device, cloud and a best-effort edge.
    MCloudBestEffort,
    /// Centralized PC-SRTF decisions with deadline admission.
    EchoPcSrtf,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::EndOnly,
        PolicyKind::CloudAlways,
        PolicyKind::ThinkAir,
        PolicyKind::MCloudBestEffort,
        PolicyKind::EchoPcSrtf,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::EndOnly => "end-only",
            PolicyKind::CloudAlways => "cloud-always",
            PolicyKind::ThinkAir => "thinkair",
            PolicyKind::MCloudBestEffort => "mcloud",
            PolicyKind::EchoPcSrtf => "echo",
        }
    }

    /// Whether transfers use lazy proxies and differential updates.
    pub fn optimizes_transfers(&self) -> bool {
        matches!(self, PolicyKind::EchoPcSrtf)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("unknown policy `{0}` (expected one of end-only, cloud-always, thinkair, mcloud, echo)")]
pub struct UnknownPolicy(pub String);

impl FromStr for PolicyKind {
    type Err = UnknownPolicy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "end-only" | "endonly" => Ok(PolicyKind::EndOnly),
            "cloud-always" | "cloudalways" => Ok(PolicyKind::CloudAlways),
            "thinkair" => Ok(PolicyKind::ThinkAir),
            "mcloud" => Ok(PolicyKind::MCloudBestEffort),
            "echo" | "pc-srtf" => Ok(PolicyKind::EchoPcSrtf),
            _ => Err(UnknownPolicy(s.to_string())),
        }
    }
}

pub fn decide_end_only(task: &Task, now: TimePoint) -> Decision {
    Decision::mobile(now, &task.profile)
}

pub fn decide_cloud_always(task: &Task, now: TimePoint) -> Decision {
    if task.offloadable {
        Decision::cloud(now, &task.profile)
    } else {
        Decision::mobile(now, &task.profile)
    }
}

pub fn decide_thinkair(task: &Task, now: TimePoint) -> Decision {
    if task.offloadable && task.profile.t_cloud() < task.profile.t_mobile() {
        Decision::cloud(now, &task.profile)
    } else {
        Decision::mobile(now, &task.profile)
    }
}

/// Contention-blind greedy choice. The edge is assumed idle when estimating;
/// an edge task joins the FIFO tail of the least-loaded VM.
pub fn decide_mcloud(
    task: &Task,
    queues: &mut [VmQueue],
    now: TimePoint,
    provision_delay: Duration,
) -> Result<Decision, SchedError> {
    if !task.offloadable {
        return Ok(Decision::mobile(now, &task.profile));
    }
    let p = &task.profile;
    let mut chosen = Decision::cloud(now, p);
    let mut best = p.t_cloud();
    if p.t_mobile() < best {
        best = p.t_mobile();
        chosen = Decision::mobile(now, p);
    }
    let vm = queues
        .iter()
        .enumerate()
        .min_by_key(|(i, q)| (q.total_remaining(), *i))
        .map(|(i, _)| i);
    if let Some(vm) = vm {
        let naive = provision_delay + p.t_edge_uncontended();
        if naive <= best {
            let ready = now + provision_delay + p.up_edge;
            queues[vm].append(task, ready, None)?;
            chosen = Decision { platform: Platform::Edge(vm), predicted_completion: now + naive, deadline: None };
        }
    }
    Ok(chosen)
}

/// A policy bound to the edge state it needs.
#[derive(Clone, Debug)]
pub struct Dispatcher {
    kind: PolicyKind,
    engine: DecisionEngine,
}

impl Dispatcher {
    pub fn new(kind: PolicyKind, num_vms: usize, provision_delay: Duration) -> Self {
        let vms = match kind {
            PolicyKind::EchoPcSrtf | PolicyKind::MCloudBestEffort => num_vms,
            _ => 0,
        };
        Dispatcher { kind, engine: DecisionEngine::new(vms, provision_delay) }
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn engine(&self) -> &DecisionEngine {
        &self.engine
    }

    pub fn engine_mut(&mut self) -> &mut DecisionEngine {
        &mut self.engine
    }

    pub fn advance_to(&mut self, t: TimePoint) -> Result<(), SchedError> {
        self.engine.advance_to(t)
    }

    pub fn drain(&mut self) -> Result<Vec<Completed>, SchedError> {
        self.engine.drain()?;
        Ok(self.engine.take_finished())
    }

    pub fn decide(&mut self, task: &Task, now: TimePoint) -> Result<Decision, SchedError> {
        self.engine.advance_to(now)?;
        match self.kind {
            PolicyKind::EndOnly => Ok(decide_end_only(task, now)),
            PolicyKind::CloudAlways => Ok(decide_cloud_always(task, now)),
            PolicyKind::ThinkAir => Ok(decide_thinkair(task, now)),
            PolicyKind::MCloudBestEffort => {
                let delay = self.engine.provision_delay();
                decide_mcloud(task, self.engine.queues_mut(), now, delay)
            }
            PolicyKind::EchoPcSrtf => self.engine.decide(task, now).map(|e| e.chosen),
        }
    }

    /// Full estimate for the PC-SRTF policy; other policies have none.
    pub fn evaluate_echo(&self, task: &Task, now: TimePoint) -> Option<Result<engine::PlatformEstimate, SchedError>> {
        (self.kind == PolicyKind::EchoPcSrtf).then(|| self.engine.evaluate(task, now).map(|(e, _)| e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CostProfile;

    fn ms(v: u64) -> Duration {
        Duration::from_millis(v)
    }

    fn profile(r_m: u64, (up_e, r_e, down_e): (u64, u64, u64), (up_c, r_c, down_c): (u64, u64, u64)) -> CostProfile {
        CostProfile {
            r_mobile: ms(r_m),
            r_edge: ms(r_e),
            r_cloud: ms(r_c),
            up_edge: ms(up_e),
            down_edge: ms(down_e),
            up_cloud: ms(up_c),
            down_cloud: ms(down_c),
            upload_bytes: 0,
            download_bytes: 0,
        }
    }

    #[test]
    fn end_only_ignores_offloadability() {
        let t = Task::new("s", TimePoint::ZERO, profile(280_380, (1, 1, 1), (1, 1, 1)));
        let d = decide_end_only(&t, TimePoint::ZERO);
        assert_eq!(d.platform, Platform::Mobile);
        assert_eq!(d.predicted_completion, TimePoint::from_micros(280_380_000));

        let zero = Task::new("z", TimePoint::ZERO, profile(0, (1, 1, 1), (1, 1, 1)));
        assert_eq!(decide_end_only(&zero, TimePoint::ZERO).predicted_completion, TimePoint::ZERO);
    }

    #[test]
    fn cloud_always_does_not_compare() {
        let t = Task::new("c", TimePoint::ZERO, profile(10_000, (0, 0, 0), (2_000, 3_000, 1_000)));
        let d = decide_cloud_always(&t, TimePoint::ZERO);
        assert_eq!((d.platform, d.predicted_completion), (Platform::Cloud, TimePoint::from_secs(6)));

        // Local 15.14 s beats the cloud's 18.77 s, yet the policy offloads.
        let ocr = Task::new("ocr", TimePoint::ZERO, profile(15_140, (0, 0, 0), (15_600, 2_500, 670)));
        assert_eq!(ocr.profile.t_cloud(), ms(18_770));
        assert_eq!(decide_cloud_always(&ocr, TimePoint::ZERO).platform, Platform::Cloud);
        assert_eq!(decide_thinkair(&ocr, TimePoint::ZERO).platform, Platform::Mobile);

        let mut pinned = t.clone();
        pinned.offloadable = false;
        assert_eq!(decide_cloud_always(&pinned, TimePoint::ZERO).platform, Platform::Mobile);
    }

    #[test]
    fn thinkair_needs_a_strict_win() {
        let faster = Task::new("a", TimePoint::ZERO, profile(10_000, (0, 0, 0), (2_000, 3_000, 1_000)));
        assert_eq!(decide_thinkair(&faster, TimePoint::ZERO).platform, Platform::Cloud);
        let equal = Task::new("b", TimePoint::ZERO, profile(6_000, (0, 0, 0), (2_000, 3_000, 1_000)));
        assert_eq!(decide_thinkair(&equal, TimePoint::ZERO).platform, Platform::Mobile);
    }

    #[test]
    fn mcloud_matches_echo_on_an_idle_edge() {
        let t = Task::new("a", TimePoint::ZERO, profile(10_000, (500, 4_000, 500), (2_000, 3_000, 1_000)));
        let mut m = Dispatcher::new(PolicyKind::MCloudBestEffort, 2, Duration::ZERO);
        let mut e = Dispatcher::new(PolicyKind::EchoPcSrtf, 2, Duration::ZERO);
        assert_eq!(m.decide(&t, TimePoint::ZERO).unwrap().platform, e.decide(&t, TimePoint::ZERO).unwrap().platform);
    }

    #[test]
    fn mcloud_ignores_a_saturated_edge() {
        let mut queues = vec![VmQueue::new(0)];
        let bg = Task::new("bg", TimePoint::ZERO, profile(1_000_000, (0, 100_000, 0), (0, 100_000, 0)));
        queues[0].append(&bg, TimePoint::ZERO, None).unwrap();

        // edge-naive 5 s < cloud 6 s: goes to the edge, behind 100 s of work.
        let t = Task::new("a", TimePoint::ZERO, profile(10_000, (1_000, 3_000, 1_000), (2_000, 3_000, 1_000)));
        let d = decide_mcloud(&t, &mut queues, TimePoint::ZERO, Duration::ZERO).unwrap();
        assert_eq!(d.platform, Platform::Edge(0));
        assert_eq!(d.predicted_completion, TimePoint::from_secs(5));
        // FIFO oracle: the VM frees up at 100 s, then 3 s of work and 1 s of download.
        let fifo_end = TimePoint::from_secs(100) + ms(3_000) + ms(1_000);
        let actual = queues[0].completion_of(&t.id).unwrap() + t.profile.down_edge;
        assert_eq!(actual, fifo_end);
    }

    #[test]
    fn mcloud_keeps_unoffloadable_local() {
        let mut t = Task::new("a", TimePoint::ZERO, profile(10_000, (0, 1, 0), (0, 1, 0)));
        t.offloadable = false;
        let d = decide_mcloud(&t, &mut [VmQueue::new(0)], TimePoint::ZERO, Duration::ZERO).unwrap();
        assert_eq!(d.platform, Platform::Mobile);
    }

    #[test]
    fn policy_names_parse() {
        for kind in PolicyKind::ALL {
            assert_eq!(kind.name().parse::<PolicyKind>().unwrap(), kind);
        }
        assert!("fastest".parse::<PolicyKind>().is_err());
    }
}
