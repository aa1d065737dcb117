//! Pressure stage: rejection of recordings that were not made at the same
//! time, and a constant-lag pre-alignment.
//!
//! Rejection compares absolute pressure, so it relies on the barometers'
//! absolute accuracy. Pre-alignment only uses relative changes and is
//! insensitive to per-sensor offsets.

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::kernels::{self, containment_overlap};
use crate::model::{LagEstimate, SensorTrace, TraceKind};

/// Pressure alignment loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PrealignMethod {
    /// Standard deviation of the pointwise difference on raw traces.
    #[default]
    DeltaStd,
    /// Mean Huber loss on low-pass filtered, z-normalized traces.
    DeltaError,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage1Config {
    /// Largest mean absolute pressure difference still accepted as
    /// simultaneous. Defaults to the barometer's absolute tolerance.
    pub rejection_threshold_pa: f64,
    pub method: PrealignMethod,
    pub huber_delta_pa: f64,
    pub lowpass_window_s: f64,
    /// Lag window in seconds (`t_dev2 - t_dev1`). `None` scans every lag
    /// that keeps the required overlap.
    pub search_range_s: Option<(f64, f64)>,
    /// Fraction of the shorter trace that must overlap at every scanned lag.
    pub min_overlap_fraction: f64,
    /// Below this much overlapping pressure data no verdict is given.
    pub min_verdict_overlap_s: f64,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Stage1Config {
            rejection_threshold_pa: 100.0,
            method: PrealignMethod::DeltaStd,
            huber_delta_pa: 100.0,
            lowpass_window_s: 2.0,
            search_range_s: None,
            min_overlap_fraction: 1.0,
            min_verdict_overlap_s: 60.0,
        }
    }
}

impl Stage1Config {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive, got {v}")))
            }
        };
        positive("rejection threshold", self.rejection_threshold_pa)?;
        positive("huber delta", self.huber_delta_pa)?;
        positive("low-pass window", self.lowpass_window_s)?;
        if !(0.5..=1.0).contains(&self.min_overlap_fraction) {
            return Err(Error::invalid(format!(
                "overlap fraction must lie in [0.5, 1], got {}",
                self.min_overlap_fraction
            )));
        }
        if let Some((lo, hi)) = self.search_range_s {
            if !(lo <= hi) {
                return Err(Error::invalid(format!("empty search range [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

/// Probability that two independent single pressure samples from one
/// location, whose difference is `N(0, 2 sigma^2)`, differ by more than the
/// combined tolerance band `2A`. This is the complement of the Gaussian
/// integral over `[-2A, 2A]` and equals `erfc(A / sigma)`.
pub fn rejection_probability(sigma_pa: f64, a_pa: f64) -> f64 {
    if a_pa <= 0.0 {
        return 1.0;
    }
    if sigma_pa <= 0.0 {
        return 0.0;
    }
    erfc(a_pa / sigma_pa)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Simultaneous,
    NonSimultaneous,
    InsufficientData,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimultaneityCheck {
    pub verdict: Verdict,
    /// Smallest mean absolute difference over the scanned lags, in Pa.
    /// `None` when the overlap is too short for a verdict.
    pub statistic_pa: Option<f64>,
    pub best_lag: Option<LagEstimate>,
}

impl SimultaneityCheck {
    pub fn simultaneous(&self) -> bool {
        self.verdict == Verdict::Simultaneous
    }
}

fn pressure_samples(trace: &SensorTrace) -> Result<&[f64]> {
    if trace.kind != TraceKind::Pressure {
        return Err(Error::invalid("expected a pressure trace"));
    }
    match trace.scalars() {
        Some(v) if !v.is_empty() => Ok(v),
        _ => Err(Error::invalid("empty pressure trace")),
    }
}

/// Integer lag range (in samples of `g` relative to `f`) and the minimum
/// overlap for two equal-rate traces.
struct LagGrid {
    lags: RangeInclusive<i64>,
    min_overlap: usize,
    rate: f64,
    /// `start(g) - start(f)`; a sample lag `m` is the clock lag `base + m / rate`.
    base_s: f64,
}

fn lag_grid(p1: &SensorTrace, p2: &SensorTrace, cfg: &Stage1Config) -> Result<LagGrid> {
    let rate = p1.sample_rate_hz;
    if (p2.sample_rate_hz - rate).abs() > 1e-9 * rate {
        return Err(Error::invalid(format!(
            "pressure traces must share a sample rate ({} vs {} Hz); resample first",
            rate, p2.sample_rate_hz
        )));
    }
    let (n1, n2) = (p1.len(), p2.len());
    let min_overlap = containment_overlap(n1, n2, cfg.min_overlap_fraction);
    let base_s = p2.start_time_s - p1.start_time_s;
    let full = kernels::admissible_lags(n1, n2, min_overlap)
        .ok_or_else(|| Error::EmptyLagRange("pressure traces too short".into()))?;
    let lags = match cfg.search_range_s {
        None => full,
        Some((lo, hi)) => {
            let m_lo = ((lo - base_s) * rate).ceil() as i64;
            let m_hi = ((hi - base_s) * rate).floor() as i64;
            m_lo.max(*full.start())..=m_hi.min(*full.end())
        }
    };
    if lags.is_empty() {
        return Err(Error::EmptyLagRange("search range excludes every admissible lag".into()));
    }
    Ok(LagGrid { lags, min_overlap, rate, base_s })
}

/// Classifies two absolute pressure traces as simultaneous when their mean
/// absolute difference at the best-matching lag stays within the threshold.
pub fn check_simultaneous(p1: &SensorTrace, p2: &SensorTrace, cfg: &Stage1Config) -> Result<SimultaneityCheck> {
    cfg.validate()?;
    let (f, g) = (pressure_samples(p1)?, pressure_samples(p2)?);
    let grid = lag_grid(p1, p2, cfg)?;
    if (grid.min_overlap as f64) < cfg.min_verdict_overlap_s * grid.rate {
        return Ok(SimultaneityCheck { verdict: Verdict::InsufficientData, statistic_pa: None, best_lag: None });
    }
    let scan = kernels::mean_abs_diff_scan(f, g, grid.lags, grid.min_overlap)?;
    let best = kernels::best_lag(&scan, grid.rate)?.shifted(grid.base_s);
    let verdict =
        if best.score <= cfg.rejection_threshold_pa { Verdict::Simultaneous } else { Verdict::NonSimultaneous };
    Ok(SimultaneityCheck { verdict, statistic_pa: Some(best.score), best_lag: Some(best) })
}

/// Lag-1 autocorrelation of a series. Close to zero for white noise and
/// close to one for smooth signals.
fn lag1_autocorrelation(x: &[f64]) -> f64 {
    if x.len() < 3 {
        return 0.0;
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let var: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    if var == 0.0 {
        return 0.0;
    }
    let cov: f64 = x.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    cov / var
}

/// Below this lag-1 autocorrelation a trace is treated as noise around a
/// constant.
const MIN_STRUCTURE: f64 = 0.25;

fn ensure_variation(x: &[f64]) -> Result<()> {
    if lag1_autocorrelation(x) <= MIN_STRUCTURE {
        return Err(Error::Degenerate("no pressure variation; pre-alignment impossible".into()));
    }
    Ok(())
}

/// Centered moving average over `width` samples; shrinks at the edges so
/// the filter never shifts the signal in time.
pub fn moving_average(x: &[f64], width: usize) -> Vec<f64> {
    let half = width / 2;
    let mut prefix = Vec::with_capacity(x.len() + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for v in x {
        acc += v;
        prefix.push(acc);
    }
    (0..x.len())
        .map(|i| {
            let a = i.saturating_sub(half);
            let b = (i + half + 1).min(x.len());
            (prefix[b] - prefix[a]) / (b - a) as f64
        })
        .collect()
}

fn zscore(x: &[f64]) -> (Vec<f64>, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    (x.iter().map(|v| (v - mean) / sd).collect(), sd)
}

/// Constant-lag estimate `t_dev2 - t_dev1` from two pressure traces.
pub fn prealign(p1: &SensorTrace, p2: &SensorTrace, cfg: &Stage1Config) -> Result<LagEstimate> {
    cfg.validate()?;
    let (f, g) = (pressure_samples(p1)?, pressure_samples(p2)?);
    ensure_variation(f)?;
    ensure_variation(g)?;
    let grid = lag_grid(p1, p2, cfg)?;
    let scan = match cfg.method {
        PrealignMethod::DeltaStd => kernels::delta_std_scan(f, g, grid.lags, grid.min_overlap)?,
        PrealignMethod::DeltaError => {
            let width = ((cfg.lowpass_window_s * grid.rate).round() as usize).max(1) | 1;
            let (fz, sd_f) = zscore(&moving_average(f, width));
            let (gz, sd_g) = zscore(&moving_average(g, width));
            // The loss threshold is given in Pa; express it in normalized units.
            let pooled = (0.5 * (sd_f * sd_f + sd_g * sd_g)).sqrt();
            let delta = cfg.huber_delta_pa / pooled;
            kernels::delta_error_scan(&fz, &gz, grid.lags, grid.min_overlap, delta)?
        }
    };
    let est = kernels::best_lag(&scan, grid.rate)?.shifted(grid.base_s);
    if est.flat {
        return Err(Error::Degenerate("no pressure variation; pre-alignment impossible".into()));
    }
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn world(n: usize, seed: u64) -> Vec<f64> {
        // Random-walk altitude profile with a few ramps, 10 Hz.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let step = Normal::new(0.0, 0.8).unwrap();
        let mut p = 100_000.0;
        (0..n)
            .map(|_| {
                p += step.sample(&mut rng);
                p
            })
            .collect()
    }

    fn noisy(x: &[f64], sd: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, sd).unwrap();
        x.iter().map(|v| v + n.sample(&mut rng)).collect()
    }

    #[test]
    fn rejection_probability_limits() {
        assert_eq!(rejection_probability(928.0, 0.0), 1.0);
        assert_eq!(rejection_probability(0.0, 100.0), 0.0);
        assert!(rejection_probability(1e-6, 100.0) < 1e-12);
        let p = rejection_probability(928.0, 100.0);
        assert!((p - 0.8788).abs() < 1e-3, "{p}");
    }

    #[test]
    fn identical_traces_are_simultaneous() {
        let p = SensorTrace::pressure(10.0, 0.0, world(6000, 1)).unwrap();
        let c = check_simultaneous(&p, &p, &Stage1Config::default()).unwrap();
        assert_eq!(c.verdict, Verdict::Simultaneous);
        assert_eq!(c.statistic_pa, Some(0.0));
    }

    #[test]
    fn constant_offset_beyond_tolerance_is_rejected() {
        let w = world(6000, 2);
        let p1 = SensorTrace::pressure(10.0, 0.0, w.clone()).unwrap();
        let p2 = SensorTrace::pressure(10.0, 0.0, w.iter().map(|v| v + 300.0).collect()).unwrap();
        let c = check_simultaneous(&p1, &p2, &Stage1Config::default()).unwrap();
        assert_eq!(c.verdict, Verdict::NonSimultaneous);
        assert!((c.statistic_pa.unwrap() - 300.0).abs() < 1e-6);
    }

    #[test]
    fn short_overlap_gives_no_verdict() {
        let w = world(500, 3);
        let p = SensorTrace::pressure(10.0, 0.0, w).unwrap();
        let c = check_simultaneous(&p, &p, &Stage1Config::default()).unwrap();
        assert_eq!(c.verdict, Verdict::InsufficientData);
    }

    #[test]
    fn statistic_is_symmetric_and_threshold_monotone() {
        let w = world(9000, 4);
        let p1 = SensorTrace::pressure(10.0, 0.0, noisy(&w[..7000], 4.0, 5)).unwrap();
        let p2 =
            SensorTrace::pressure(10.0, 3.0, noisy(&w[1200..8200], 4.0, 6).iter().map(|v| v + 60.0).collect()).unwrap();
        let cfg = Stage1Config::default();
        let a = check_simultaneous(&p1, &p2, &cfg).unwrap().statistic_pa.unwrap();
        let b = check_simultaneous(&p2, &p1, &cfg).unwrap().statistic_pa.unwrap();
        assert!((a - b).abs() < 1e-12);
        let mut last_accepted = true;
        for t in [200.0, 120.0, 80.0, 61.0, 40.0, 10.0] {
            let ok = check_simultaneous(&p1, &p2, &Stage1Config { rejection_threshold_pa: t, ..cfg })
                .unwrap()
                .simultaneous();
            assert!(last_accepted || !ok);
            last_accepted = ok;
        }
        assert!(!last_accepted);
    }

    #[test]
    fn delayed_copy_recovered_by_both_methods() {
        // p2 is p1 delayed by 12.3 s: device 2 stamps every event 12.3 s earlier.
        let w = world(9000, 7);
        let shift = 123;
        let p1 = SensorTrace::pressure(10.0, 0.0, noisy(&w[shift..shift + 6000], 12.0, 8)).unwrap();
        let p2 = SensorTrace::pressure(10.0, 0.0, noisy(&w[..8000], 12.0, 9)).unwrap();
        for method in [PrealignMethod::DeltaStd, PrealignMethod::DeltaError] {
            let cfg = Stage1Config { method, ..Default::default() };
            let est = prealign(&p1, &p2, &cfg).unwrap();
            assert!((est.lag_s - 12.3).abs() <= 0.3, "{method:?}: {}", est.lag_s);
        }
    }

    #[test]
    fn start_times_enter_the_lag() {
        let w = world(8000, 10);
        let p1 = SensorTrace::pressure(10.0, 100.0, w[500..6500].to_vec()).unwrap();
        let p2 = SensorTrace::pressure(10.0, 40.0, w.clone()).unwrap();
        let est = prealign(&p1, &p2, &Stage1Config::default()).unwrap();
        // p1 sample 0 is world sample 500, stamped 100 s by device 1 and 90 s by device 2.
        assert!((est.lag_s - -10.0).abs() < 1e-9, "{}", est.lag_s);
    }

    #[test]
    fn flat_pressure_cannot_be_aligned() {
        let p1 = SensorTrace::pressure(10.0, 0.0, noisy(&vec![100_000.0; 4000], 4.0, 11)).unwrap();
        let p2 = SensorTrace::pressure(10.0, 0.0, noisy(&vec![100_020.0; 5000], 4.0, 12)).unwrap();
        let err = prealign(&p1, &p2, &Stage1Config::default()).unwrap_err();
        assert!(err.to_string().contains("no pressure variation"));
    }

    #[test]
    fn delta_std_ignores_sensor_offsets() {
        let w = world(7000, 13);
        let p1 = SensorTrace::pressure(10.0, 0.0, noisy(&w[300..5300], 4.0, 14)).unwrap();
        let g = noisy(&w, 4.0, 15);
        let p2 = SensorTrace::pressure(10.0, 0.0, g.clone()).unwrap();
        let p2_shifted = SensorTrace::pressure(10.0, 0.0, g.iter().map(|v| v - 87.5).collect()).unwrap();
        let cfg = Stage1Config::default();
        assert_eq!(prealign(&p1, &p2, &cfg).unwrap().lag_s, prealign(&p1, &p2_shifted, &cfg).unwrap().lag_s);
    }

    #[test]
    fn moving_average_is_centered() {
        let x: Vec<f64> = (0..50).map(f64::from).collect();
        let y = moving_average(&x, 5);
        assert_eq!(&y[2..48], &x[2..48]);
        assert_eq!(y[0], 1.0);
    }

    #[test]
    fn rejection_probability_is_monotone() {
        let mut prev = 0.0;
        for s in [1.0, 10.0, 100.0, 928.0, 5000.0] {
            let p = rejection_probability(s, 100.0);
            assert!(p >= prev);
            prev = p;
        }
        let mut prev = 1.0;
        for a in [0.0, 1.0, 50.0, 100.0, 1000.0] {
            let p = rejection_probability(928.0, a);
            assert!(p <= prev);
            prev = p;
        }
    }
}
