//! Edge-centric code offloading: completion-time estimation, PC-SRTF
//! scheduling on edge VMs, baseline offloading policies, object
//! synchronization accounting, and a trace-driven simulator.

pub mod engine;
pub mod model;
pub mod objectsync;
pub mod policies;
pub mod scheduler;
pub mod sim;
pub mod traceio;

pub use engine::{DecisionEngine, PlatformEstimate};
pub use model::{CostProfile, Deadline, Decision, Duration, ObjectRef, Platform, Segment, Task, TaskId, TimePoint};
pub use policies::PolicyKind;
pub use scheduler::{TrialInsertion, VmQueue};
pub use sim::{EnergyParams, SimConfig, SimReport};
