//! Domain types shared by the scheduler, engine, policies and simulator.
//!
//! Time is kept as an integer count of microseconds so that schedules built
//! from sums and differences of durations never drift. On the wire (traces,
//! reports) durations and instants are written as floating-point seconds.

use std::collections::HashSet;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Sub};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

const MICROS_PER_SEC: u64 = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("duplicate task id `{0}`")]
    DuplicateId(TaskId),
    #[error("{field}: negative duration {value}")]
    NegativeDuration { field: String, value: f64 },
    #[error("{field}: not a finite number of seconds ({value})")]
    NonFinite { field: String, value: f64 },
}

fn micros_from_secs(field: &str, secs: f64) -> Result<u64, ModelError> {
    if !secs.is_finite() {
        return Err(ModelError::NonFinite { field: field.to_string(), value: secs });
    }
    if secs < 0.0 {
        return Err(ModelError::NegativeDuration { field: field.to_string(), value: secs });
    }
    Ok((secs * MICROS_PER_SEC as f64).round() as u64)
}

/// A non-negative span of time with microsecond resolution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Duration(u64);

impl Duration {
    pub const ZERO: Duration = Duration(0);
    pub const MAX: Duration = Duration(u64::MAX);

    pub const fn from_micros(us: u64) -> Self {
        Duration(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        Duration(ms * 1_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        Duration(s * MICROS_PER_SEC)
    }

    /// Rounds to the nearest microsecond. Negative or non-finite input is rejected.
    pub fn from_secs_f64(secs: f64) -> Result<Self, ModelError> {
        micros_from_secs("duration", secs).map(Duration)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / MICROS_PER_SEC as f64
    }

    pub const fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn saturating_sub(self, rhs: Duration) -> Duration {
        Duration(self.0.saturating_sub(rhs.0))
    }

    pub fn checked_sub(self, rhs: Duration) -> Option<Duration> {
        self.0.checked_sub(rhs.0).map(Duration)
    }

    /// Scales by a non-negative factor, rounding to the nearest microsecond.
    pub fn mul_f64(self, factor: f64) -> Duration {
        debug_assert!(factor >= 0.0 && factor.is_finite());
        Duration((self.0 as f64 * factor).round() as u64)
    }
}

impl Add for Duration {
    type Output = Duration;
    fn add(self, rhs: Duration) -> Duration {
        Duration(self.0.saturating_add(rhs.0))
    }
}

impl AddAssign for Duration {
    fn add_assign(&mut self, rhs: Duration) {
        *self = *self + rhs;
    }
}

impl Sub for Duration {
    type Output = Duration;
    fn sub(self, rhs: Duration) -> Duration {
        self.checked_sub(rhs).expect("duration subtraction underflow")
    }
}

impl Mul<u64> for Duration {
    type Output = Duration;
    fn mul(self, rhs: u64) -> Duration {
        Duration(self.0.saturating_mul(rhs))
    }
}

impl std::iter::Sum for Duration {
    fn sum<I: Iterator<Item = Duration>>(iter: I) -> Duration {
        iter.fold(Duration::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for Duration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}s", self.as_secs_f64())
    }
}

/// An absolute instant on the simulation clock, measured from time zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimePoint(u64);

impl TimePoint {
    pub const ZERO: TimePoint = TimePoint(0);
    /// Used as "no deadline".
    pub const MAX: TimePoint = TimePoint(u64::MAX);

    pub const fn from_micros(us: u64) -> Self {
        TimePoint(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        TimePoint(ms * 1_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        TimePoint(s * MICROS_PER_SEC)
    }

    pub fn from_secs_f64(secs: f64) -> Result<Self, ModelError> {
        micros_from_secs("time", secs).map(TimePoint)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / MICROS_PER_SEC as f64
    }

    /// Elapsed time since `earlier`, clamped at zero.
    pub fn saturating_since(self, earlier: TimePoint) -> Duration {
        Duration(self.0.saturating_sub(earlier.0))
    }

    pub fn checked_since(self, earlier: TimePoint) -> Option<Duration> {
        self.0.checked_sub(earlier.0).map(Duration)
    }

    pub fn saturating_sub(self, d: Duration) -> TimePoint {
        TimePoint(self.0.saturating_sub(d.0))
    }
}

impl Add<Duration> for TimePoint {
    type Output = TimePoint;
    fn add(self, rhs: Duration) -> TimePoint {
        TimePoint(self.0.saturating_add(rhs.0))
    }
}

impl AddAssign<Duration> for TimePoint {
    fn add_assign(&mut self, rhs: Duration) {
        *self = *self + rhs;
    }
}

impl Sub for TimePoint {
    type Output = Duration;
    fn sub(self, rhs: TimePoint) -> Duration {
        self.checked_since(rhs).expect("time point subtraction underflow")
    }
}

impl fmt::Display for TimePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t={}s", self.as_secs_f64())
    }
}

macro_rules! seconds_serde {
    ($ty:ident) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_f64(self.as_secs_f64())
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let secs = f64::deserialize(d)?;
                $ty::from_secs_f64(secs).map_err(serde::de::Error::custom)
            }
        }
    };
}

seconds_serde!(Duration);
seconds_serde!(TimePoint);

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskId(pub String);

impl TaskId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for TaskId {
    fn from(s: &str) -> Self {
        TaskId(s.to_string())
    }
}

impl From<String> for TaskId {
    fn from(s: String) -> Self {
        TaskId(s)
    }
}

/// Profiled costs of one method invocation on each platform.
///
/// `r_*` are running times, `up_*`/`down_*` are transfer times to and from
/// the edge or the cloud. Byte counts describe the eager (unoptimized)
/// upload and the result download.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostProfile {
    pub r_mobile: Duration,
    pub r_edge: Duration,
    pub r_cloud: Duration,
    pub up_edge: Duration,
    pub down_edge: Duration,
    pub up_cloud: Duration,
    pub down_cloud: Duration,
    pub upload_bytes: u64,
    pub download_bytes: u64,
}

impl CostProfile {
    /// Local completion time.
    pub fn t_mobile(&self) -> Duration {
        self.r_mobile
    }

    /// Cloud completion time; the cloud never queues.
    pub fn t_cloud(&self) -> Duration {
        self.up_cloud + self.r_cloud + self.down_cloud
    }

    /// Edge completion time with no waiting.
    pub fn t_edge_uncontended(&self) -> Duration {
        self.up_edge + self.r_edge + self.down_edge
    }

    /// Multiplies every duration by `factor`; byte counts are untouched.
    pub fn scaled(&self, factor: u64) -> CostProfile {
        CostProfile {
            r_mobile: self.r_mobile * factor,
            r_edge: self.r_edge * factor,
            r_cloud: self.r_cloud * factor,
            up_edge: self.up_edge * factor,
            down_edge: self.down_edge * factor,
            up_cloud: self.up_cloud * factor,
            down_cloud: self.down_cloud * factor,
            ..self.clone()
        }
    }
}

/// One object shipped with an offloaded invocation, described by size only.
///
/// `changed_bytes` is how much of the object differs from its previous
/// version; it is ignored the first time an endpoint sees the object.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectRef {
    pub id: String,
    pub bytes: u64,
    pub referred: bool,
    #[serde(default = "default_version")]
    pub version: u64,
    #[serde(default)]
    pub changed_bytes: u64,
}

fn default_version() -> u64 {
    1
}

/// One offloadable method invocation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TaskRecord", into = "TaskRecord")]
pub struct Task {
    pub id: TaskId,
    pub user_id: String,
    pub app: String,
    pub arrival: TimePoint,
    pub profile: CostProfile,
    /// `false` pins the invocation to the device whatever its costs.
    pub offloadable: bool,
    pub objects: Vec<ObjectRef>,
}

impl Task {
    pub fn new(id: impl Into<TaskId>, arrival: TimePoint, profile: CostProfile) -> Self {
        Task {
            id: id.into(),
            user_id: String::new(),
            app: String::new(),
            arrival,
            profile,
            offloadable: true,
            objects: Vec::new(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ProfileRecord {
    r_mobile: f64,
    r_edge: f64,
    r_cloud: f64,
    up_edge: f64,
    down_edge: f64,
    up_cloud: f64,
    down_cloud: f64,
    #[serde(default)]
    upload_bytes: u64,
    #[serde(default)]
    download_bytes: u64,
}

/// Wire shape of a task; durations as seconds.
#[derive(Serialize, Deserialize)]
struct TaskRecord {
    id: TaskId,
    #[serde(default)]
    user_id: String,
    #[serde(default)]
    app: String,
    arrival: f64,
    profile: ProfileRecord,
    #[serde(default = "default_offloadable")]
    offloadable: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    objects: Vec<ObjectRef>,
}

fn default_offloadable() -> bool {
    true
}

impl TryFrom<TaskRecord> for Task {
    type Error = ModelError;

    fn try_from(r: TaskRecord) -> Result<Self, ModelError> {
        let d = |name: &str, v: f64| micros_from_secs(&format!("profile.{name}"), v).map(Duration);
        let p = &r.profile;
        Ok(Task {
            arrival: TimePoint(micros_from_secs("arrival", r.arrival)?),
            profile: CostProfile {
                r_mobile: d("r_mobile", p.r_mobile)?,
                r_edge: d("r_edge", p.r_edge)?,
                r_cloud: d("r_cloud", p.r_cloud)?,
                up_edge: d("up_edge", p.up_edge)?,
                down_edge: d("down_edge", p.down_edge)?,
                up_cloud: d("up_cloud", p.up_cloud)?,
                down_cloud: d("down_cloud", p.down_cloud)?,
                upload_bytes: p.upload_bytes,
                download_bytes: p.download_bytes,
            },
            id: r.id,
            user_id: r.user_id,
            app: r.app,
            offloadable: r.offloadable,
            objects: r.objects,
        })
    }
}

impl From<Task> for TaskRecord {
    fn from(t: Task) -> Self {
        let p = &t.profile;
        TaskRecord {
            arrival: t.arrival.as_secs_f64(),
            profile: ProfileRecord {
                r_mobile: p.r_mobile.as_secs_f64(),
                r_edge: p.r_edge.as_secs_f64(),
                r_cloud: p.r_cloud.as_secs_f64(),
                up_edge: p.up_edge.as_secs_f64(),
                down_edge: p.down_edge.as_secs_f64(),
                up_cloud: p.up_cloud.as_secs_f64(),
                down_cloud: p.down_cloud.as_secs_f64(),
                upload_bytes: p.upload_bytes,
                download_bytes: p.download_bytes,
            },
            id: t.id,
            user_id: t.user_id,
            app: t.app,
            offloadable: t.offloadable,
            objects: t.objects,
        }
    }
}

/// Absolute QoS bound for an edge-admitted task.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Deadline {
    pub h: TimePoint,
}

impl Deadline {
    /// `arrival + min(T_mobile, T_cloud)`.
    pub fn for_task(arrival: TimePoint, profile: &CostProfile) -> Deadline {
        Deadline { h: arrival + profile.t_mobile().min(profile.t_cloud()) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Platform {
    Mobile,
    Edge(usize),
    Cloud,
}

impl Platform {
    pub fn is_edge(&self) -> bool {
        matches!(self, Platform::Edge(_))
    }

    pub fn label(&self) -> &'static str {
        match self {
            Platform::Mobile => "mobile",
            Platform::Edge(_) => "edge",
            Platform::Cloud => "cloud",
        }
    }
}

impl fmt::Display for Platform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Platform::Edge(vm) => write!(f, "edge:{vm}"),
            other => f.write_str(other.label()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub platform: Platform,
    pub predicted_completion: TimePoint,
    /// Present iff the platform is an edge VM admitted under QoS.
    pub deadline: Option<Deadline>,
}

impl Decision {
    pub fn mobile(now: TimePoint, profile: &CostProfile) -> Decision {
        Decision { platform: Platform::Mobile, predicted_completion: now + profile.t_mobile(), deadline: None }
    }

    pub fn cloud(now: TimePoint, profile: &CostProfile) -> Decision {
        Decision { platform: Platform::Cloud, predicted_completion: now + profile.t_cloud(), deadline: None }
    }
}

/// A contiguous stretch of one task's edge execution on a VM.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub task_id: TaskId,
    pub work: Duration,
    pub scheduled_start: TimePoint,
    pub scheduled_end: TimePoint,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Warning {
    pub task_id: TaskId,
    pub message: String,
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.task_id, self.message)
    }
}

/// Checks id uniqueness (hard error) and the usual cost orderings (warnings).
pub fn validate_trace(tasks: &[Task]) -> Result<Vec<Warning>, ModelError> {
    let mut seen = HashSet::with_capacity(tasks.len());
    let mut warnings = Vec::new();
    for task in tasks {
        if !seen.insert(&task.id) {
            return Err(ModelError::DuplicateId(task.id.clone()));
        }
        let p = &task.profile;
        let mut warn = |m: &str| warnings.push(Warning { task_id: task.id.clone(), message: m.to_string() });
        if p.r_mobile.is_zero() {
            warn("local running time is zero");
        }
        if p.up_edge >= p.up_cloud && !(p.up_edge.is_zero() && p.up_cloud.is_zero()) {
            warn("edge upload slower than cloud");
        }
        if p.down_edge > p.down_cloud {
            warn("edge download slower than cloud");
        }
        if p.r_cloud > p.r_edge {
            warn("cloud runs slower than edge");
        }
        if p.r_edge > p.r_mobile {
            warn("edge runs slower than the device");
        }
        if !task.objects.is_empty() && !task.objects.iter().any(|o| o.referred) {
            warn("object set has no referred object");
        }
    }
    Ok(warnings)
}
