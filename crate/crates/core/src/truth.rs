//! Ground-truth clocks of simulated devices and the `ground_truth.json`
//! file that accompanies every synthetic session.

use std::f64::consts::TAU;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ClockModel;

pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

/// Periodic temperature swing that modulates a crystal's skew by
/// `coefficient_ppm_per_c * amplitude_c * sin(2 pi w / period_s + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureDrift {
    pub amplitude_c: f64,
    pub period_s: f64,
    pub phase: f64,
    pub coefficient_ppm_per_c: f64,
}

/// Maps world time `w` to the time a device stamps:
/// `t = offset_s + (1 + skew) w` plus the integrated temperature term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceClock {
    pub offset_s: f64,
    pub skew: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<TemperatureDrift>,
}

impl DeviceClock {
    pub fn ideal() -> Self {
        DeviceClock { offset_s: 0.0, skew: 0.0, temperature: None }
    }

    pub fn linear(offset_s: f64, skew: f64) -> Self {
        DeviceClock { offset_s, skew, temperature: None }
    }

    fn temperature_term(&self, w: f64) -> (f64, f64) {
        match self.temperature {
            None => (0.0, 0.0),
            Some(d) => {
                let c = d.coefficient_ppm_per_c * 1e-6 * d.amplitude_c;
                let k = TAU / d.period_s;
                let value = c / k * (d.phase.cos() - (k * w + d.phase).cos());
                let rate = c * (k * w + d.phase).sin();
                (value, rate)
            }
        }
    }

    pub fn device_time(&self, w: f64) -> f64 {
        self.offset_s + (1.0 + self.skew) * w + self.temperature_term(w).0
    }

    pub fn world_time(&self, t: f64) -> f64 {
        let mut w = (t - self.offset_s) / (1.0 + self.skew);
        if self.temperature.is_some() {
            for _ in 0..4 {
                let (value, rate) = self.temperature_term(w);
                let residual = self.offset_s + (1.0 + self.skew) * w + value - t;
                w -= residual / (1.0 + self.skew + rate);
            }
        }
        w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceTruth {
    pub device_id: String,
    pub clock: DeviceClock,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AltitudeEvent {
    pub start_s: f64,
    pub duration_s: f64,
    pub delta_pa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub scenario: String,
    /// False when the devices recorded at different times.
    pub simultaneous: bool,
    pub seed: u64,
    pub duration_s: f64,
    pub devices: Vec<DeviceTruth>,
    #[serde(default)]
    pub altitude_events: Vec<AltitudeEvent>,
}

impl GroundTruth {
    pub fn clock(&self, device_id: &str) -> Result<&DeviceClock> {
        self.devices
            .iter()
            .find(|d| d.device_id == device_id)
            .map(|d| &d.clock)
            .ok_or_else(|| Error::invalid(format!("no ground truth for device {device_id}")))
    }

    /// True lag `t_b - t_a` at the instant device `a` stamps `t_a`.
    pub fn lag_at(&self, a: &str, b: &str, t_a: f64) -> Result<f64> {
        if !self.simultaneous {
            return Err(Error::invalid("devices did not record simultaneously"));
        }
        let w = self.clock(a)?.world_time(t_a);
        Ok(self.clock(b)?.device_time(w) - t_a)
    }

    /// Linear clock model of `b` relative to `a`, exact for clocks without a
    /// temperature term and a tangent approximation otherwise.
    pub fn pair_model(&self, a: &str, b: &str, reference_time_s: f64) -> Result<ClockModel> {
        let h = 1.0;
        let lag = self.lag_at(a, b, reference_time_s)?;
        let slope = (self.lag_at(a, b, reference_time_s + h)? - self.lag_at(a, b, reference_time_s - h)?) / (2.0 * h);
        Ok(ClockModel::new(lag, slope, reference_time_s))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(GROUND_TRUTH_FILE);
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::invalid(e.to_string()))?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn read(dir: &Path) -> Result<GroundTruth> {
        let path = dir.join(GROUND_TRUTH_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(&path, "ground truth", e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn world_time_inverts_device_time() {
        let clocks = [
            DeviceClock::linear(12.5, 17e-6),
            DeviceClock {
                offset_s: -40.0,
                skew: -8e-6,
                temperature: Some(TemperatureDrift {
                    amplitude_c: 10.0,
                    period_s: 1800.0,
                    phase: 0.3,
                    coefficient_ppm_per_c: 0.036,
                }),
            },
        ];
        for c in clocks {
            for w in [0.0, 10.0, 1234.5, 7200.0] {
                assert!((c.world_time(c.device_time(w)) - w).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn pair_model_of_linear_clocks() {
        let gt = GroundTruth {
            scenario: "active".into(),
            simultaneous: true,
            seed: 0,
            duration_s: 100.0,
            devices: vec![
                DeviceTruth { device_id: "a".into(), clock: DeviceClock::linear(1.0, 0.0) },
                DeviceTruth { device_id: "b".into(), clock: DeviceClock::linear(3.0, 20e-6) },
            ],
            altitude_events: vec![],
        };
        let m = gt.pair_model("a", "b", 101.0).unwrap();
        assert!((m.offset_s - (2.0 + 20e-6 * 100.0)).abs() < 1e-12);
        assert!((m.skew - 20e-6).abs() < 1e-12);
    }
}
