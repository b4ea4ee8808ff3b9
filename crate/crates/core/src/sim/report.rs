use std::io::Write;

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::model::{Deadline, Duration, Platform, TaskId, TimePoint};

/// What happened to one request.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task_id: TaskId,
    pub user_id: String,
    pub app: String,
    pub platform: Platform,
    pub arrival: TimePoint,
    /// Upload finished (edge and cloud) or `arrival` (device).
    pub ready: TimePoint,
    /// First instant of execution.
    pub start: TimePoint,
    /// Result available on the device.
    pub completion: TimePoint,
    /// Queueing delay on the edge, zero elsewhere.
    pub waiting: Duration,
    pub deadline: Option<Deadline>,
    /// Only set for tasks admitted under a deadline.
    pub deadline_met: Option<bool>,
    pub bytes_up: u64,
    pub bytes_down: u64,
    pub energy_joules: f64,
}

impl TaskRecord {
    pub fn response(&self) -> Duration {
        self.completion - self.arrival
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlatformCounts {
    pub mobile: usize,
    pub edge: usize,
    pub cloud: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub tasks: usize,
    /// Mean of `completion - arrival`, seconds.
    pub mean_completion: f64,
    pub median_completion: f64,
    pub p95_completion: f64,
    /// Share of deadline-admitted tasks that met their deadline; 1 when
    /// there are none.
    pub deadline_compliance: f64,
    pub deadline_tasks: usize,
    pub bytes_up: u64,
    pub bytes_down: u64,
    /// Edge-cloud synchronization traffic, never on the device's link.
    pub backhaul_bytes: u64,
    pub energy_joules: f64,
    pub platforms: PlatformCounts,
}

/// Nearest-rank percentile of sorted values.
fn percentile(sorted: &[u64], q: f64) -> u64 {
    if sorted.is_empty() {
        return 0;
    }
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

impl Summary {
    pub fn from_records(records: &[TaskRecord], backhaul_bytes: u64) -> Summary {
        let mut responses: Vec<u64> = records.iter().map(|r| r.response().as_micros()).collect();
        responses.sort_unstable();
        let total: u128 = responses.iter().map(|&v| v as u128).sum();
        let secs = |us: u64| Duration::from_micros(us).as_secs_f64();
        let mean = if records.is_empty() { 0.0 } else { total as f64 / records.len() as f64 / 1e6 };
        let judged: Vec<bool> = records.iter().filter_map(|r| r.deadline_met).collect();
        let met = judged.iter().filter(|m| **m).count();
        let mut platforms = PlatformCounts::default();
        for r in records {
            match r.platform {
                Platform::Mobile => platforms.mobile += 1,
                Platform::Edge(_) => platforms.edge += 1,
                Platform::Cloud => platforms.cloud += 1,
            }
        }
        Summary {
            tasks: records.len(),
            mean_completion: mean,
            median_completion: secs(percentile(&responses, 0.5)),
            p95_completion: secs(percentile(&responses, 0.95)),
            deadline_compliance: if judged.is_empty() { 1.0 } else { met as f64 / judged.len() as f64 },
            deadline_tasks: judged.len(),
            bytes_up: records.iter().map(|r| r.bytes_up).sum(),
            bytes_down: records.iter().map(|r| r.bytes_down).sum(),
            backhaul_bytes,
            energy_joules: records.iter().map(|r| r.energy_joules).sum(),
            platforms,
        }
    }
}

/// Settings a report was produced with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub policy: String,
    pub num_vms: usize,
    pub lambda: Option<f64>,
    pub seed: u64,
    pub provision_delay: Duration,
    pub noise: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub run: RunInfo,
    pub summary: Summary,
    pub records: Vec<TaskRecord>,
}

/// One CSV row; the column order is the documented header.
#[derive(Serialize)]
struct CsvRow<'a> {
    task_id: &'a str,
    user_id: &'a str,
    app: &'a str,
    platform: &'static str,
    vm: Option<usize>,
    arrival: f64,
    ready: f64,
    start: f64,
    completion: f64,
    response: f64,
    waiting: f64,
    deadline: Option<f64>,
    deadline_met: Option<bool>,
    bytes_up: u64,
    bytes_down: u64,
    energy_joules: f64,
}

pub const CSV_HEADER: &str = "task_id,user_id,app,platform,vm,arrival,ready,start,completion,response,waiting,deadline,deadline_met,bytes_up,bytes_down,energy_joules";

impl SimReport {
    pub fn write_json(&self, mut w: impl Write) -> Result<(), SimError> {
        serde_json::to_writer_pretty(&mut w, self).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn read_json(r: impl std::io::Read) -> Result<SimReport, SimError> {
        Ok(serde_json::from_reader(r).map_err(std::io::Error::from)?)
    }

    /// One row per task, in trace order.
    pub fn write_csv(&self, w: impl Write) -> Result<(), SimError> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.records {
            out.serialize(CsvRow {
                task_id: r.task_id.as_str(),
                user_id: &r.user_id,
                app: &r.app,
                platform: r.platform.label(),
                vm: match r.platform {
                    Platform::Edge(vm) => Some(vm),
                    _ => None,
                },
                arrival: r.arrival.as_secs_f64(),
                ready: r.ready.as_secs_f64(),
                start: r.start.as_secs_f64(),
                completion: r.completion.as_secs_f64(),
                response: r.response().as_secs_f64(),
                waiting: r.waiting.as_secs_f64(),
                deadline: r.deadline.map(|d| d.h.as_secs_f64()),
                deadline_met: r.deadline_met,
                bytes_up: r.bytes_up,
                bytes_down: r.bytes_down,
                energy_joules: r.energy_joules,
            })
            .map_err(|e| std::io::Error::other(e.to_string()))?;
        }
        if self.records.is_empty() {
            out.write_record(CSV_HEADER.split(',')).map_err(|e| std::io::Error::other(e.to_string()))?;
        }
        out.flush()?;
        Ok(())
    }
}
