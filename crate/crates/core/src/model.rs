//! Domain types shared by every stage: uniformly sampled traces, per-device
//! recordings and the linear clock model relating two device clocks.
//!
//! # Lag convention
//!
//! A lag is always `t_dev2 - t_dev1`, the difference between the clock
//! readings of the second and the first device for the same physical
//! instant. An event seen at device-1 time `t` is therefore stamped
//! `t + lag(t)` by device 2, and re-stamping device-2 data onto the device-1
//! axis subtracts the lag.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest clock skew accepted for a fitted model. Crystal tolerances are in
/// the tens of ppm; anything near 1e-3 means the fit failed.
pub const MAX_ABS_SKEW: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    /// Absolute air pressure in Pa.
    Pressure,
    /// Three-axis acceleration.
    Accel3,
    /// Derived scalar signal, e.g. an acceleration magnitude.
    Scalar,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Samples {
    Scalar(Vec<f64>),
    Vec3(Vec<[f64; 3]>),
}

impl Samples {
    pub fn len(&self) -> usize {
        match self {
            Samples::Scalar(v) => v.len(),
            Samples::Vec3(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A uniformly sampled series. Sample `n` sits at device time
/// `start_time_s + n / sample_rate_hz`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorTrace {
    pub kind: TraceKind,
    pub sample_rate_hz: f64,
    pub start_time_s: f64,
    pub samples: Samples,
}

impl SensorTrace {
    pub fn pressure(sample_rate_hz: f64, start_time_s: f64, samples: Vec<f64>) -> Result<Self> {
        let trace =
            SensorTrace { kind: TraceKind::Pressure, sample_rate_hz, start_time_s, samples: Samples::Scalar(samples) };
        trace.validate()?;
        Ok(trace)
    }

    pub fn accel3(sample_rate_hz: f64, start_time_s: f64, samples: Vec<[f64; 3]>) -> Result<Self> {
        let trace =
            SensorTrace { kind: TraceKind::Accel3, sample_rate_hz, start_time_s, samples: Samples::Vec3(samples) };
        trace.validate()?;
        Ok(trace)
    }

    pub fn scalar(sample_rate_hz: f64, start_time_s: f64, samples: Vec<f64>) -> Result<Self> {
        let trace =
            SensorTrace { kind: TraceKind::Scalar, sample_rate_hz, start_time_s, samples: Samples::Scalar(samples) };
        trace.validate()?;
        Ok(trace)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::invalid(format!("sample rate must be positive, got {}", self.sample_rate_hz)));
        }
        if !self.start_time_s.is_finite() {
            return Err(Error::invalid("start time must be finite"));
        }
        match (&self.kind, &self.samples) {
            (TraceKind::Pressure, Samples::Scalar(v)) => {
                if let Some((i, p)) = v.iter().enumerate().find(|(_, p)| !(p.is_finite() && **p > 0.0)) {
                    return Err(Error::invalid(format!("pressure sample {i} is not finite and positive: {p}")));
                }
            }
            (TraceKind::Scalar, Samples::Scalar(v)) => {
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::invalid("scalar trace contains non-finite samples"));
                }
            }
            (TraceKind::Accel3, Samples::Vec3(v)) => {
                if v.iter().flatten().any(|x| !x.is_finite()) {
                    return Err(Error::invalid("acceleration trace contains non-finite samples"));
                }
            }
            (kind, _) => {
                return Err(Error::invalid(format!("sample layout does not match trace kind {kind:?}")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Device time of sample `n`.
    pub fn time_of(&self, n: usize) -> f64 {
        self.start_time_s + n as f64 / self.sample_rate_hz
    }

    /// Device time one sample period past the last sample.
    pub fn end_time_s(&self) -> f64 {
        self.time_of(self.len())
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate_hz
    }

    pub fn midpoint_s(&self) -> f64 {
        self.start_time_s + 0.5 * self.len().saturating_sub(1) as f64 / self.sample_rate_hz
    }

    pub fn scalars(&self) -> Option<&[f64]> {
        match &self.samples {
            Samples::Scalar(v) => Some(v),
            Samples::Vec3(_) => None,
        }
    }

    pub fn vectors(&self) -> Option<&[[f64; 3]]> {
        match &self.samples {
            Samples::Vec3(v) => Some(v),
            Samples::Scalar(_) => None,
        }
    }

    /// Keeps the samples whose device time lies in `[t0, t1)`.
    pub fn crop(&self, t0: f64, t1: f64) -> Result<SensorTrace> {
        let rate = self.sample_rate_hz;
        let first = ((t0 - self.start_time_s) * rate).ceil().max(0.0) as usize;
        let last = (((t1 - self.start_time_s) * rate).ceil().max(0.0) as usize).min(self.len());
        if first >= last {
            return Err(Error::invalid(format!("crop window [{t0}, {t1}) does not intersect trace")));
        }
        let samples = match &self.samples {
            Samples::Scalar(v) => Samples::Scalar(v[first..last].to_vec()),
            Samples::Vec3(v) => Samples::Vec3(v[first..last].to_vec()),
        };
        Ok(SensorTrace { kind: self.kind, sample_rate_hz: rate, start_time_s: self.time_of(first), samples })
    }
}

/// Alignment kernel that produced a lag estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanMethod {
    Xcorr,
    Xcov,
    DeltaError,
    DeltaStd,
    MeanAbsDiff,
}

impl ScanMethod {
    pub fn polarity(self) -> Polarity {
        match self {
            ScanMethod::Xcorr | ScanMethod::Xcov => Polarity::Maximize,
            ScanMethod::DeltaError | ScanMethod::DeltaStd | ScanMethod::MeanAbsDiff => Polarity::Minimize,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Maximize,
    Minimize,
}

/// A candidate lag (seconds, `t_g - t_f`) together with the score that
/// selected it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagEstimate {
    pub lag_s: f64,
    pub score: f64,
    pub method: ScanMethod,
    pub search_range_s: (f64, f64),
    /// Every scanned lag scored the same; the lag carries no information.
    pub flat: bool,
}

impl LagEstimate {
    pub fn polarity(&self) -> Polarity {
        self.method.polarity()
    }

    /// Moves the lag and its search range by `dt` seconds.
    pub fn shifted(mut self, dt: f64) -> Self {
        self.lag_s += dt;
        self.search_range_s = (self.search_range_s.0 + dt, self.search_range_s.1 + dt);
        self
    }
}

/// One FIFO readout of a free-running sensor: the RTC time of the readout and
/// the number of samples retrieved since activation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FifoReadout {
    pub t_s: f64,
    pub total_samples: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccelSensor {
    pub name: String,
    /// Unit of the samples, `"g"` or `"m/s2"`.
    pub unit: String,
    pub externally_triggered: bool,
    pub trace: SensorTrace,
    /// Present exactly when the sensor is not triggered by the RTC.
    pub fifo_log: Option<Vec<FifoReadout>>,
}

/// One device's session.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub device_id: String,
    pub pressure: SensorTrace,
    pub accel: Vec<AccelSensor>,
    /// Clock model applied when the recording was re-stamped onto another
    /// device's axis.
    pub applied_model: Option<ClockModel>,
}

impl Recording {
    pub fn validate(&self) -> Result<()> {
        if self.pressure.kind != TraceKind::Pressure {
            return Err(Error::invalid("recording lacks pressure trace"));
        }
        self.pressure.validate()?;
        if self.pressure.is_empty() {
            return Err(Error::invalid("recording lacks pressure trace"));
        }
        for sensor in &self.accel {
            sensor.trace.validate()?;
            if sensor.trace.kind != TraceKind::Accel3 {
                return Err(Error::invalid(format!("sensor {} is not a 3-axis trace", sensor.name)));
            }
            match (&sensor.fifo_log, sensor.externally_triggered) {
                (Some(_), true) => {
                    return Err(Error::invalid(format!(
                        "sensor {} is externally triggered but carries a FIFO log",
                        sensor.name
                    )))
                }
                (None, false) => {
                    return Err(Error::invalid(format!("sensor {} is free-running but has no FIFO log", sensor.name)))
                }
                (Some(log), false) => crate::ingest::validate_fifo_log(log)
                    .map_err(|e| Error::invalid(format!("sensor {}: {e}", sensor.name)))?,
                (None, true) => {}
            }
        }
        Ok(())
    }

    /// Crops every trace to the device-time window `[t0, t1)`. Accelerometer
    /// traces that fall outside the window are dropped. Free-running sensors
    /// have to be FIFO-compensated first; their sample times are not known
    /// before that.
    pub fn crop(&self, t0: f64, t1: f64) -> Result<Recording> {
        let uncompensated = |s: &&AccelSensor| {
            s.fifo_log
                .as_ref()
                .is_some_and(|log| crate::ingest::fifo_deviation(log, s.trace.sample_rate_hz) > 1.0 + 1e-9)
        };
        if let Some(s) = self.accel.iter().find(uncompensated) {
            return Err(Error::invalid(format!(
                "sensor {} is free-running; compensate its FIFO log before cropping",
                s.name
            )));
        }
        let pressure = self.pressure.crop(t0, t1)?;
        let accel = self
            .accel
            .iter()
            .filter_map(|s| {
                s.trace.crop(t0, t1).ok().map(|trace| AccelSensor {
                    name: s.name.clone(),
                    unit: s.unit.clone(),
                    externally_triggered: true,
                    trace,
                    fifo_log: None,
                })
            })
            .collect();
        Ok(Recording { device_id: self.device_id.clone(), pressure, accel, applied_model: self.applied_model })
    }

    pub fn accel_by_name(&self, name: &str) -> Option<&AccelSensor> {
        self.accel.iter().find(|s| s.name == name)
    }
}

/// Linear lag between two device clocks:
/// `lag(t) = offset_s + skew * (t - reference_time_s)` with `t` on the
/// device-1 axis. Drift (a quadratic term) is not modelled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockModel {
    pub offset_s: f64,
    pub skew: f64,
    pub reference_time_s: f64,
}

impl ClockModel {
    pub fn new(offset_s: f64, skew: f64, reference_time_s: f64) -> Self {
        ClockModel { offset_s, skew, reference_time_s }
    }

    pub fn identity() -> Self {
        ClockModel::new(0.0, 0.0, 0.0)
    }

    pub fn constant(offset_s: f64, reference_time_s: f64) -> Self {
        ClockModel::new(offset_s, 0.0, reference_time_s)
    }

    pub fn lag_at(&self, t: f64) -> f64 {
        self.offset_s + self.skew * (t - self.reference_time_s)
    }

    pub fn skew_ppm(&self) -> f64 {
        self.skew * 1e6
    }

    pub fn check(&self) -> Result<()> {
        if !(self.offset_s.is_finite() && self.skew.is_finite() && self.reference_time_s.is_finite()) {
            return Err(Error::invalid("clock model has non-finite parameters"));
        }
        if self.skew.abs() >= MAX_ABS_SKEW {
            return Err(Error::invalid(format!(
                "clock skew {:.1} ppm exceeds the {:.0} ppm bound",
                self.skew_ppm(),
                MAX_ABS_SKEW * 1e6
            )));
        }
        Ok(())
    }

    /// Device-1 time of an instant stamped `t2` by device 2.
    pub fn to_reference_axis(&self, t2: f64) -> f64 {
        // t2 = t1 + offset + skew (t1 - ref), solved for t1.
        (t2 - self.offset_s + self.skew * self.reference_time_s) / (1.0 + self.skew)
    }

    /// Model mapping device-1 times back onto the device-2 axis.
    pub fn inverse(&self) -> ClockModel {
        ClockModel {
            offset_s: -self.offset_s,
            skew: -self.skew / (1.0 + self.skew),
            reference_time_s: self.reference_time_s + self.offset_s,
        }
    }
}

fn restamp(trace: &SensorTrace, model: &ClockModel) -> SensorTrace {
    SensorTrace {
        kind: trace.kind,
        sample_rate_hz: trace.sample_rate_hz * (1.0 + model.skew),
        start_time_s: model.to_reference_axis(trace.start_time_s),
        samples: trace.samples.clone(),
    }
}

/// Re-stamps `rec_b` onto the time axis of `rec_a` using the fitted model of
/// `rec_b`'s lag relative to `rec_a`. Start times move by the lag and rates
/// are scaled by `1 + skew` because one device-2 second spans `1 / (1 + skew)`
/// device-1 seconds.
pub fn compose_time_axes(rec_a: &Recording, rec_b: &Recording, model: &ClockModel) -> Result<Recording> {
    model.check()?;
    if rec_a.pressure.is_empty() || rec_b.pressure.is_empty() {
        return Err(Error::invalid("cannot re-stamp an empty recording"));
    }
    let accel = rec_b
        .accel
        .iter()
        .map(|s| AccelSensor {
            name: s.name.clone(),
            unit: s.unit.clone(),
            externally_triggered: s.externally_triggered,
            trace: restamp(&s.trace, model),
            fifo_log: s.fifo_log.as_ref().map(|log| {
                log.iter()
                    .map(|r| FifoReadout { t_s: model.to_reference_axis(r.t_s), total_samples: r.total_samples })
                    .collect()
            }),
        })
        .collect();
    Ok(Recording {
        device_id: rec_b.device_id.clone(),
        pressure: restamp(&rec_b.pressure, model),
        accel,
        applied_model: Some(*model),
    })
}
