use serde::{Deserialize, Serialize};

use crate::model::{CostProfile, Duration, Platform};

/// Device power draw in watts, used by a linear energy model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    /// CPU busy running a method locally.
    pub p_cpu_mobile: f64,
    /// Radio sending or receiving.
    pub p_net_mobile: f64,
    /// Waiting for a remote result.
    pub p_idle: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        EnergyParams { p_cpu_mobile: 0.8, p_net_mobile: 0.7, p_idle: 0.02 }
    }
}

impl EnergyParams {
    pub fn is_valid(&self) -> bool {
        [self.p_cpu_mobile, self.p_net_mobile, self.p_idle].iter().all(|p| p.is_finite() && *p >= 0.0)
    }

    pub fn scaled(&self, c: f64) -> EnergyParams {
        EnergyParams { p_cpu_mobile: self.p_cpu_mobile * c, p_net_mobile: self.p_net_mobile * c, p_idle: self.p_idle * c }
    }
}

/// Time the radio is busy for a task placed on `platform`.
pub fn transfer_time(profile: &CostProfile, platform: Platform) -> Duration {
    match platform {
        Platform::Mobile => Duration::ZERO,
        Platform::Edge(_) => profile.up_edge + profile.down_edge,
        Platform::Cloud => profile.up_cloud + profile.down_cloud,
    }
}

/// Device energy in joules. Local runs burn CPU power for `r_mobile`;
/// offloaded runs pay radio power while transferring and idle power for
/// the rest of the response time.
pub fn energy_of(profile: &CostProfile, platform: Platform, response: Duration, params: &EnergyParams) -> f64 {
    match platform {
        Platform::Mobile => params.p_cpu_mobile * profile.r_mobile.as_secs_f64(),
        _ => {
            let transfer = transfer_time(profile, platform);
            params.p_net_mobile * transfer.as_secs_f64() + params.p_idle * response.saturating_sub(transfer).as_secs_f64()
        }
    }
}
