//! Loading recordings from disk, FIFO length compensation for free-running
//! sensors, and linear resampling.

mod format;

pub use format::{read_recording, write_recording, META_FILE};

use crate::error::{Error, Result};
use crate::model::{FifoReadout, Recording, Samples, SensorTrace};

/// Expected cumulative sample count at readout time `t_n`, counted from the
/// first readout at `t_0` after which `l_t0` samples had been retrieved.
pub fn expected_length(t_n: f64, t_0: f64, f_sensor: f64, l_t0: u64) -> f64 {
    (t_n - t_0) * f_sensor + l_t0 as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FifoConfig {
    /// Hardware FIFO capacity. A segment off by more than this many samples
    /// cannot be explained by readout timing and marks a corrupted log.
    pub fifo_depth: u64,
    /// A missing and a surplus sample at most this many readouts apart
    /// cancel instead of both being corrected.
    pub proximity_readouts: usize,
}

impl Default for FifoConfig {
    fn default() -> Self {
        FifoConfig { fifo_depth: 32, proximity_readouts: 2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Compensated {
    pub trace: SensorTrace,
    /// Readout log rewritten with the compensated cumulative counts.
    pub readouts: Vec<FifoReadout>,
    pub inserted: usize,
    pub removed: usize,
}

/// Largest distance, in samples, between a readout's cumulative count and
/// the RTC expectation. At most one for a compensated log.
pub fn fifo_deviation(readouts: &[FifoReadout], f_sensor: f64) -> f64 {
    let Some(first) = readouts.first() else { return 0.0 };
    readouts
        .iter()
        .map(|r| (r.total_samples as f64 - expected_length(r.t_s, first.t_s, f_sensor, first.total_samples)).abs())
        .fold(0.0, f64::max)
}

pub fn validate_fifo_log(readouts: &[FifoReadout]) -> Result<()> {
    if readouts.is_empty() {
        return Err(Error::Fifo("empty readout log".into()));
    }
    for (i, w) in readouts.windows(2).enumerate() {
        if !(w[1].t_s > w[0].t_s) {
            return Err(Error::Fifo(format!("row {}: timestamps not strictly increasing", i + 1)));
        }
        if w[1].total_samples < w[0].total_samples {
            return Err(Error::Fifo(format!("row {}: sample count decreases", i + 1)));
        }
    }
    Ok(())
}

/// Reconciles a free-running sensor's sample stream with the RTC.
///
/// The stream is split into readout segments. Each segment whose sample
/// count disagrees with the RTC-derived expectation gets duplicated samples
/// (copies of the left neighbour) inserted at its midpoint, or loses samples
/// around its midpoint. A shortfall and a surplus within
/// `proximity_readouts` of each other cancel when doing so keeps the
/// cumulative count within one sample of the expectation: that pattern is a
/// sample that slipped across a readout boundary.
pub fn compensate_fifo(trace: &SensorTrace, readouts: &[FifoReadout], cfg: &FifoConfig) -> Result<Compensated> {
    validate_fifo_log(readouts)?;
    let last = readouts[readouts.len() - 1].total_samples;
    if last as usize != trace.len() {
        return Err(Error::Fifo(format!("last readout reports {last} samples but the trace holds {}", trace.len())));
    }
    let f = trace.sample_rate_hz;
    let t0 = readouts[0].t_s;
    let l0 = readouts[0].total_samples;
    let exact: Vec<f64> = readouts.iter().map(|r| expected_length(r.t_s, t0, f, l0)).collect();
    let expected: Vec<i64> = exact.iter().map(|e| e.round_ties_even() as i64).collect();

    let n_seg = readouts.len();
    // Per-segment discrepancy, positive when samples are missing.
    let mut diff = vec![0i64; n_seg];
    for k in 1..n_seg {
        let actual = (readouts[k].total_samples - readouts[k - 1].total_samples) as i64;
        let wanted = expected[k] - expected[k - 1];
        diff[k] = wanted - actual;
        if diff[k].unsigned_abs() > cfg.fifo_depth {
            return Err(Error::Fifo(format!(
                "readout {k}: {} samples off, beyond the FIFO depth of {}",
                diff[k], cfg.fifo_depth
            )));
        }
    }

    // Cumulative deviation from the expectation left by cancelled pairs.
    let mut deviation = vec![0i64; n_seg];
    for k in 1..n_seg {
        while diff[k] != 0 {
            let sign = diff[k].signum();
            let partner = (k + 1..n_seg.min(k + 1 + cfg.proximity_readouts)).find(|&j| {
                diff[j].signum() == -sign
                    && (k..j).all(|i| ((expected[i] - deviation[i] - sign) as f64 - exact[i]).abs() <= 1.0)
            });
            let Some(j) = partner else { break };
            diff[k] -= sign;
            diff[j] += sign;
            deviation[k..j].iter_mut().for_each(|d| *d += sign);
        }
    }

    let (mut inserted, mut removed) = (0usize, 0usize);
    let mut new_totals = Vec::with_capacity(n_seg);
    new_totals.push(l0);
    let out = match &trace.samples {
        Samples::Scalar(v) => {
            Samples::Scalar(apply_segments(v, readouts, &diff, &mut new_totals, &mut inserted, &mut removed)?)
        }
        Samples::Vec3(v) => {
            Samples::Vec3(apply_segments(v, readouts, &diff, &mut new_totals, &mut inserted, &mut removed)?)
        }
    };
    let trace = SensorTrace { samples: out, ..trace.clone() };
    let readouts =
        readouts.iter().zip(new_totals).map(|(r, total)| FifoReadout { t_s: r.t_s, total_samples: total }).collect();
    Ok(Compensated { trace, readouts, inserted, removed })
}

fn apply_segments<T: Copy>(
    samples: &[T],
    readouts: &[FifoReadout],
    diff: &[i64],
    new_totals: &mut Vec<u64>,
    inserted: &mut usize,
    removed: &mut usize,
) -> Result<Vec<T>> {
    let mut out: Vec<T> = Vec::with_capacity(samples.len());
    out.extend_from_slice(&samples[..readouts[0].total_samples as usize]);
    for k in 1..readouts.len() {
        let seg = &samples[readouts[k - 1].total_samples as usize..readouts[k].total_samples as usize];
        let mid = seg.len() / 2;
        let d = diff[k];
        if d > 0 {
            out.extend_from_slice(&seg[..mid]);
            let fill = match out.last().or(seg.first()) {
                Some(&s) => s,
                None => return Err(Error::Fifo(format!("readout {k}: no sample to duplicate"))),
            };
            out.extend(std::iter::repeat_n(fill, d as usize));
            out.extend_from_slice(&seg[mid..]);
            *inserted += d as usize;
        } else if d < 0 {
            let drop = (-d) as usize;
            if drop > seg.len() {
                return Err(Error::Fifo(format!(
                    "readout {k}: {drop} surplus samples but the segment holds {}",
                    seg.len()
                )));
            }
            let start = mid.saturating_sub(drop / 2).min(seg.len() - drop);
            out.extend_from_slice(&seg[..start]);
            out.extend_from_slice(&seg[start + drop..]);
            *removed += drop;
        } else {
            out.extend_from_slice(seg);
        }
        new_totals.push(out.len() as u64);
    }
    Ok(out)
}

/// Applies FIFO compensation to every free-running accelerometer.
pub fn compensate_recording(rec: &Recording, cfg: &FifoConfig) -> Result<Recording> {
    let mut out = rec.clone();
    for sensor in out.accel.iter_mut() {
        if let Some(log) = &sensor.fifo_log {
            let c = compensate_fifo(&sensor.trace, log, cfg)
                .map_err(|e| Error::Fifo(format!("sensor {}: {e}", sensor.name)))?;
            if c.inserted + c.removed > 0 {
                log::debug!(
                    "{}/{}: inserted {} and removed {} samples",
                    rec.device_id,
                    sensor.name,
                    c.inserted,
                    c.removed
                );
            }
            sensor.trace = c.trace;
            sensor.fifo_log = Some(c.readouts);
        }
    }
    Ok(out)
}

/// Linear interpolation onto a grid of `target_rate_hz` starting at the
/// first sample and not extending past the last one.
pub fn resample_linear(trace: &SensorTrace, target_rate_hz: f64) -> Result<SensorTrace> {
    if !(target_rate_hz.is_finite() && target_rate_hz > 0.0) {
        return Err(Error::invalid(format!("target rate must be positive, got {target_rate_hz}")));
    }
    let n = trace.len();
    if n < 2 {
        return Err(Error::invalid("resampling needs at least two samples"));
    }
    let ratio = trace.sample_rate_hz / target_rate_hz;
    let span = (n - 1) as f64;
    let m = ((span / ratio) * (1.0 + 1e-12)).floor() as usize + 1;
    let position = |k: usize| {
        let p = (k as f64 * ratio).min(span);
        let i = (p.floor() as usize).min(n - 2);
        (i, p - i as f64)
    };
    let samples = match &trace.samples {
        Samples::Scalar(v) => Samples::Scalar(
            (0..m)
                .map(|k| {
                    let (i, w) = position(k);
                    v[i] + (v[i + 1] - v[i]) * w
                })
                .collect(),
        ),
        Samples::Vec3(v) => Samples::Vec3(
            (0..m)
                .map(|k| {
                    let (i, w) = position(k);
                    std::array::from_fn(|c| v[i][c] + (v[i + 1][c] - v[i][c]) * w)
                })
                .collect(),
        ),
    };
    Ok(SensorTrace { kind: trace.kind, sample_rate_hz: target_rate_hz, start_time_s: trace.start_time_s, samples })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_trace(n: usize, rate: f64) -> SensorTrace {
        SensorTrace::scalar(rate, 0.0, (0..n).map(|i| i as f64).collect()).unwrap()
    }

    /// Readouts every second for a sensor at `rate` whose per-segment counts
    /// are `counts` (first entry = samples present at the first readout).
    fn log(counts: &[u64]) -> Vec<FifoReadout> {
        let mut total = 0;
        counts
            .iter()
            .enumerate()
            .map(|(i, c)| {
                total += c;
                FifoReadout { t_s: 1.0 + i as f64, total_samples: total }
            })
            .collect()
    }

    #[test]
    fn expected_length_examples() {
        assert_eq!(expected_length(0.0, 0.0, 200.0, 50), 50.0);
        assert_eq!(expected_length(1.0, 0.0, 200.0, 50), 250.0);
        assert_eq!(expected_length(3600.0, 0.0, 200.0, 0), 720000.0);
    }

    #[test]
    fn consistent_log_is_untouched() {
        let readouts = log(&[7, 10, 10, 10]);
        let trace = ramp_trace(37, 10.0);
        let c = compensate_fifo(&trace, &readouts, &FifoConfig::default()).unwrap();
        assert_eq!(c.trace, trace);
        assert_eq!(c.readouts, readouts);
    }

    #[test]
    fn single_short_segment_gains_a_duplicate() {
        let readouts = log(&[7, 10, 9, 10, 10, 10]);
        let trace = ramp_trace(56, 10.0);
        let c = compensate_fifo(&trace, &readouts, &FifoConfig::default()).unwrap();
        assert_eq!((c.inserted, c.removed), (1, 0));
        let v = c.trace.scalars().unwrap();
        // Segment 2 covers original samples 17..26; its midpoint is index 4.
        assert_eq!(&v[17..28], &[17.0, 18.0, 19.0, 20.0, 20.0, 21.0, 22.0, 23.0, 24.0, 25.0, 26.0]);
        assert_eq!(c.readouts[2].total_samples, 27);
    }

    #[test]
    fn straddling_sample_cancels() {
        let readouts = log(&[7, 10, 9, 11, 10]);
        let trace = ramp_trace(47, 10.0);
        let c = compensate_fifo(&trace, &readouts, &FifoConfig::default()).unwrap();
        assert_eq!(c.trace, trace);
    }

    #[test]
    fn distant_pair_is_corrected_twice() {
        let readouts = log(&[7, 10, 9, 10, 10, 11, 10]);
        let trace = ramp_trace(67, 10.0);
        let c = compensate_fifo(&trace, &readouts, &FifoConfig::default()).unwrap();
        assert_eq!((c.inserted, c.removed), (1, 1));
    }

    #[test]
    fn discrepancy_beyond_fifo_depth_is_rejected() {
        let readouts = log(&[7, 10, 50, 10]);
        let trace = ramp_trace(77, 10.0);
        assert!(matches!(compensate_fifo(&trace, &readouts, &FifoConfig::default()), Err(Error::Fifo(_))));
    }

    #[test]
    fn fifo_log_must_cover_trace() {
        let readouts = log(&[7, 10]);
        assert!(compensate_fifo(&ramp_trace(20, 10.0), &readouts, &FifoConfig::default()).is_err());
    }

    #[test]
    fn resample_same_rate_is_identity() {
        let t = SensorTrace::scalar(128.0, 3.0, (0..500).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        assert_eq!(resample_linear(&t, 128.0).unwrap(), t);
    }

    #[test]
    fn resample_ramp_is_exact() {
        let t = ramp_trace(1000, 128.0);
        let r = resample_linear(&t, 200.0).unwrap();
        for (k, v) in r.scalars().unwrap().iter().enumerate() {
            assert!((v - k as f64 * 128.0 / 200.0).abs() < 1e-9);
        }
        let r = resample_linear(&t, 10.0).unwrap();
        assert_eq!(r.len(), (999.0 * 10.0 / 128.0) as usize + 1);
    }

    #[test]
    fn resample_sine_128_to_200() {
        let w = 2.0 * std::f64::consts::PI;
        let t = SensorTrace::scalar(128.0, 0.0, (0..1280).map(|i| (w * i as f64 / 128.0).sin()).collect()).unwrap();
        let r = resample_linear(&t, 200.0).unwrap();
        let err = r
            .scalars()
            .unwrap()
            .iter()
            .enumerate()
            .map(|(k, v)| (v - (w * k as f64 / 200.0).sin()).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn resample_needs_two_samples() {
        assert!(resample_linear(&ramp_trace(1, 10.0), 20.0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_counts() -> impl Strategy<Value = Vec<i64>> {
            proptest::collection::vec(-3i64..=3, 3..40)
        }

        proptest! {
            #[test]
            fn compensation_tracks_expectation_and_is_idempotent(jitter in arb_counts(), l0 in 0u64..20) {
                let mut counts = vec![l0];
                counts.extend(jitter.iter().map(|d| (20 + d) as u64));
                let readouts = log(&counts);
                let total = counts.iter().sum::<u64>().max(1);
                let trace = ramp_trace(total as usize, 20.0);
                let cfg = FifoConfig::default();
                let c = compensate_fifo(&trace, &readouts, &cfg).unwrap();
                for r in &c.readouts {
                    let e = expected_length(r.t_s, readouts[0].t_s, 20.0, l0).round_ties_even();
                    prop_assert!((r.total_samples as f64 - e).abs() <= 1.0);
                }
                let again = compensate_fifo(&c.trace, &c.readouts, &cfg).unwrap();
                prop_assert_eq!(&again.trace, &c.trace);
                prop_assert_eq!(&again.readouts, &c.readouts);
            }
        }
    }
}
