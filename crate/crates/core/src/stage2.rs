//! Accelerometer stage: windowed cross-correlation around the pressure
//! estimate, a linear clock model fitted to the per-window lags, and the
//! choice of window count by adjusted r².

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{self, overlap_length};
use crate::model::{ClockModel, ScanMethod, SensorTrace, TraceKind, MAX_ABS_SKEW};
use crate::par;
use crate::regression::{bonferroni_outliers, ols_fit};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage2Config {
    /// Half-width of the lag search around the pressure estimate, in seconds.
    pub refinement_range_s: f64,
    pub n_win_start: usize,
    pub n_win_max: usize,
    pub min_window_s: f64,
    pub outlier_alpha: f64,
    pub min_windows_for_fit: usize,
    /// A window's peak must reach `z / sqrt(overlap)` in Pearson correlation
    /// to count; below that the peak is indistinguishable from noise.
    pub window_significance_z: f64,
    /// Refine each window's peak to a fraction of a sample by parabolic
    /// interpolation.
    pub interpolate_peak: bool,
    /// Fits whose inliers scatter more than this around the line are treated
    /// as degenerate.
    pub max_residual_sd_s: f64,
}

impl Default for Stage2Config {
    fn default() -> Self {
        Stage2Config {
            refinement_range_s: 5.0,
            n_win_start: 4,
            n_win_max: 512,
            min_window_s: 1.0,
            outlier_alpha: 0.05,
            min_windows_for_fit: 3,
            window_significance_z: 5.0,
            interpolate_peak: true,
            max_residual_sd_s: 0.25,
        }
    }
}

impl Stage2Config {
    pub fn validate(&self) -> Result<()> {
        if !(self.refinement_range_s.is_finite() && self.refinement_range_s > 0.0) {
            return Err(Error::invalid("refinement range must be positive"));
        }
        if self.n_win_start == 0 || self.n_win_start > self.n_win_max {
            return Err(Error::invalid(format!(
                "window counts must satisfy 1 <= start ({}) <= max ({})",
                self.n_win_start, self.n_win_max
            )));
        }
        if !(self.min_window_s > 0.0) {
            return Err(Error::invalid("minimum window length must be positive"));
        }
        if !(self.outlier_alpha > 0.0 && self.outlier_alpha < 1.0) {
            return Err(Error::invalid("outlier alpha must lie in (0, 1)"));
        }
        if self.min_windows_for_fit < 3 {
            return Err(Error::invalid("a fit needs at least three windows"));
        }
        Ok(())
    }

    /// Window counts tried for an overlap of `overlap_s` seconds.
    pub fn schedule(&self, overlap_s: f64) -> Vec<usize> {
        let mut out = Vec::new();
        let mut n = self.n_win_start;
        while n <= self.n_win_max && overlap_s / n as f64 >= self.min_window_s {
            out.push(n);
            n *= 2;
        }
        out
    }
}

/// Per-sample Euclidean norm of a 3-axis trace. Scalar traces pass through.
pub fn accel_magnitude(trace: &SensorTrace) -> Result<SensorTrace> {
    match trace.kind {
        TraceKind::Accel3 => {
            let v = trace.vectors().ok_or_else(|| Error::invalid("3-axis trace without vectors"))?;
            let mag = v.iter().map(|a| (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()).collect();
            SensorTrace::scalar(trace.sample_rate_hz, trace.start_time_s, mag)
        }
        TraceKind::Scalar => Ok(trace.clone()),
        TraceKind::Pressure => Err(Error::invalid("expected an acceleration trace")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowLag {
    /// Window center on the device-1 axis.
    pub t_s: f64,
    pub lag_s: f64,
    pub peak_correlation: f64,
}

/// Index range `[start, end)` of `a1` that, shifted by `prior_lag_s`, falls
/// inside `a2`.
fn aligned_overlap(a1: &SensorTrace, a2: &SensorTrace, prior_lag_s: f64) -> Option<(usize, usize)> {
    let rate = a1.sample_rate_hz;
    let lo = a1.start_time_s.max(a2.start_time_s - prior_lag_s);
    let hi = a1.end_time_s().min(a2.end_time_s() - prior_lag_s);
    if hi <= lo {
        return None;
    }
    let start = ((lo - a1.start_time_s) * rate - 1e-9).ceil().max(0.0) as usize;
    let end = (((hi - a1.start_time_s) * rate + 1e-9).floor() as usize + 1).min(a1.len());
    (end > start + 1).then_some((start, end))
}

fn scalar_samples(t: &SensorTrace) -> Result<&[f64]> {
    t.scalars().ok_or_else(|| Error::invalid("expected a magnitude trace; take the norm first"))
}

fn check_pair(a1: &SensorTrace, a2: &SensorTrace) -> Result<f64> {
    let rate = a1.sample_rate_hz;
    if (a2.sample_rate_hz - rate).abs() > 1e-9 * rate {
        return Err(Error::invalid(format!(
            "acceleration traces must share a sample rate ({} vs {} Hz)",
            rate, a2.sample_rate_hz
        )));
    }
    Ok(rate)
}

/// Lags of `n_win` equal windows over the pre-aligned overlap, each searched
/// within `prior_lag_s ± refinement_range_s`. Windows without a significant
/// correlation peak are left out.
pub fn window_lags(
    a1: &SensorTrace,
    a2: &SensorTrace,
    prior_lag_s: f64,
    n_win: usize,
    cfg: &Stage2Config,
) -> Result<Vec<WindowLag>> {
    let rate = check_pair(a1, a2)?;
    let (f_all, g) = (scalar_samples(a1)?, scalar_samples(a2)?);
    let (start, end) = aligned_overlap(a1, a2, prior_lag_s)
        .ok_or_else(|| Error::InsufficientData("acceleration traces do not overlap at the prior lag".into()))?;
    let width = (end - start) / n_win.max(1);
    if width < 2 || (width as f64) < cfg.min_window_s * rate {
        return Err(Error::invalid(format!("{n_win} windows are shorter than the minimum window length")));
    }
    // g index = f index + m, and lag(m) = start2 - start1 + m / rate.
    let base = a2.start_time_s - a1.start_time_s;
    let m_lo = ((prior_lag_s - cfg.refinement_range_s - base) * rate).ceil() as i64;
    let m_hi = ((prior_lag_s + cfg.refinement_range_s - base) * rate).floor() as i64;
    let windows: Vec<usize> = (0..n_win).collect();
    let found = par::map_slice(&windows, |&w| {
        let n0 = start + w * width;
        let f = &f_all[n0..n0 + width];
        let mean = f.iter().sum::<f64>() / width as f64;
        let fc: Vec<f64> = f.iter().map(|x| x - mean).collect();
        let f_norm = fc.iter().map(|x| x * x).sum::<f64>().sqrt();
        if f_norm == 0.0 {
            return None;
        }
        // Lags relative to the window: g[n0 + j + m] pairs with fc[j].
        let lo = m_lo + n0 as i64;
        let hi = m_hi + n0 as i64;
        let min_overlap = width.div_ceil(2);
        let lags = kernels::clip_lags(width, g.len(), lo..=hi, min_overlap).ok()?;
        let sums = kernels::product_sums(&fc, g, lags.clone());
        let scores: Vec<f64> =
            lags.clone().zip(&sums).map(|(m, s)| s / overlap_length(width, g.len(), m) as f64).collect();
        let scan = kernels::LagScan {
            lag_min: *lags.start(),
            overlap_lengths: lags.clone().map(|m| overlap_length(width, g.len(), m) as usize).collect(),
            scores,
            method: ScanMethod::Xcorr,
        };
        let best = kernels::best_lag(&scan, rate).ok()?;
        let m = (best.lag_s * rate).round() as i64;
        let a = 0i64.max(-m) as usize;
        let b = (width as i64).min(g.len() as i64 - m) as usize;
        let gs = &g[(a as i64 + m) as usize..(b as i64 + m) as usize];
        let g_mean = gs.iter().sum::<f64>() / gs.len() as f64;
        let g_norm = gs.iter().map(|x| (x - g_mean).powi(2)).sum::<f64>().sqrt();
        if g_norm == 0.0 {
            return None;
        }
        let fs = &fc[a..b];
        let f_mean = fs.iter().sum::<f64>() / fs.len() as f64;
        let fs_norm = fs.iter().map(|x| (x - f_mean).powi(2)).sum::<f64>().sqrt();
        let num: f64 = fs.iter().zip(gs).map(|(x, y)| (x - f_mean) * (y - g_mean)).sum();
        let rho = num / (fs_norm * g_norm);
        if !(rho * ((b - a) as f64).sqrt() >= cfg.window_significance_z) {
            return None;
        }
        Some(WindowLag {
            t_s: a1.time_of(n0) + (width - 1) as f64 / (2.0 * rate),
            lag_s: base
                + ((m - n0 as i64) as f64 + if cfg.interpolate_peak { subsample_peak(&scan, m) } else { 0.0 }) / rate,
            peak_correlation: rho,
        })
    });
    Ok(found.into_iter().flatten().collect())
}

/// Offset in `[-0.5, 0.5]` samples of the parabola through the peak score
/// and its two neighbours. Zero at the edge of the scan.
fn subsample_peak(scan: &kernels::LagScan, m: i64) -> f64 {
    let (Some(y0), Some(ym), Some(yp)) = (scan.score_at(m), scan.score_at(m - 1), scan.score_at(m + 1)) else {
        return 0.0;
    };
    let curvature = ym - 2.0 * y0 + yp;
    if !(curvature < 0.0) {
        return 0.0;
    }
    (0.5 * (ym - yp) / curvature).clamp(-0.5, 0.5)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowFit {
    pub n_win: usize,
    pub lags: Vec<WindowLag>,
    pub inliers: Vec<bool>,
    pub model: ClockModel,
    pub r2: f64,
    pub adjusted_r2: f64,
}

impl WindowFit {
    pub fn n_inliers(&self) -> usize {
        self.inliers.iter().filter(|&&b| b).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub model: ClockModel,
    /// Index into `fits` of the selected fit; `None` when the prior was kept.
    pub selected: Option<usize>,
    /// Every fit that passed the validity checks, by increasing window count.
    pub fits: Vec<WindowFit>,
    pub warnings: Vec<String>,
}

impl Refinement {
    pub fn selected_fit(&self) -> Option<&WindowFit> {
        self.selected.map(|i| &self.fits[i])
    }
}

pub const INCONCLUSIVE: &str = "refinement inconclusive";

/// Fits a clock model for one window count, or explains why none is valid.
pub fn fit_windows(
    lags: Vec<WindowLag>,
    n_win: usize,
    reference_time_s: f64,
    cfg: &Stage2Config,
) -> std::result::Result<WindowFit, String> {
    if lags.len() < cfg.min_windows_for_fit {
        return Err(format!("{n_win} windows: only {} significant", lags.len()));
    }
    let points: Vec<(f64, f64)> = lags.iter().map(|w| (w.t_s, w.lag_s)).collect();
    let inliers = bonferroni_outliers(&points, cfg.outlier_alpha, cfg.min_windows_for_fit);
    let kept: Vec<(f64, f64)> = points.iter().zip(&inliers).filter(|(_, &k)| k).map(|(p, _)| *p).collect();
    if kept.len() < cfg.min_windows_for_fit {
        return Err(format!("{n_win} windows: too few inliers"));
    }
    let fit = ols_fit(&kept, reference_time_s).map_err(|e| format!("{n_win} windows: {e}"))?;
    if !(fit.slope.abs() < MAX_ABS_SKEW) {
        return Err(format!("{n_win} windows: implausible skew {:.1} ppm", fit.slope * 1e6));
    }
    let dof = (kept.len() - 2).max(1) as f64;
    let residual_sd = (fit.residuals.iter().map(|e| e * e).sum::<f64>() / dof).sqrt();
    if residual_sd > cfg.max_residual_sd_s {
        return Err(format!("{n_win} windows: residual spread {residual_sd:.3} s"));
    }
    if !fit.adjusted_r2.is_finite() {
        return Err(format!("{n_win} windows: undefined adjusted r2"));
    }
    Ok(WindowFit {
        n_win,
        lags,
        inliers,
        model: ClockModel::new(fit.intercept, fit.slope, reference_time_s),
        r2: fit.r2,
        adjusted_r2: fit.adjusted_r2,
    })
}

/// Refines a pressure-derived lag into a linear clock model from two
/// acceleration magnitude traces of equal rate.
///
/// The model's reference time is the midpoint of the pre-aligned overlap on
/// the device-1 axis. When no window count yields a valid fit the prior is
/// returned as a zero-skew model with a warning.
pub fn refine(a1: &SensorTrace, a2: &SensorTrace, prior_lag_s: f64, cfg: &Stage2Config) -> Result<Refinement> {
    cfg.validate()?;
    let rate = check_pair(a1, a2)?;
    scalar_samples(a1)?;
    scalar_samples(a2)?;
    let (start, end) = aligned_overlap(a1, a2, prior_lag_s)
        .ok_or_else(|| Error::InsufficientData("acceleration traces do not overlap at the prior lag".into()))?;
    let reference = a1.time_of(start) + (end - start - 1) as f64 / (2.0 * rate);
    let overlap_s = (end - start) as f64 / rate;
    let mut warnings = Vec::new();
    let mut fits = Vec::new();
    for n_win in cfg.schedule(overlap_s) {
        let lags = window_lags(a1, a2, prior_lag_s, n_win, cfg)?;
        match fit_windows(lags, n_win, reference, cfg) {
            Ok(fit) => fits.push(fit),
            Err(why) => log::debug!("{why}"),
        }
    }
    // Highest adjusted r2 wins; ties keep the smaller window count.
    let mut selected: Option<usize> = None;
    for (i, fit) in fits.iter().enumerate() {
        if selected.is_none_or(|s| fit.adjusted_r2 > fits[s].adjusted_r2) {
            selected = Some(i);
        }
    }
    let model = match selected {
        None => {
            warnings.push(INCONCLUSIVE.to_string());
            ClockModel::constant(prior_lag_s, reference)
        }
        Some(i) => {
            let mut model = fits[i].model;
            let range = cfg.refinement_range_s;
            let shift = model.offset_s - prior_lag_s;
            if shift.abs() > range {
                model.offset_s = prior_lag_s + shift.clamp(-range, range);
                warnings
                    .push(format!("refined lag moved {shift:.3} s from the pressure estimate; clamped to ±{range} s"));
            }
            model
        }
    };
    Ok(Refinement { model, selected, fits, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Bursty magnitude signal sampled at device times `t` given a world
    /// clock `w = (t - offset) / (1 + skew)`.
    fn bursts(seed: u64, n_events: usize, len_s: f64) -> Vec<(f64, f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n_events).map(|_| (rng.gen_range(0.0..len_s), rng.gen_range(3.0..15.0), rng.gen_range(0.1..0.5))).collect()
    }

    fn render(events: &[(f64, f64, f64)], rate: f64, n: usize, offset: f64, skew: f64, noise_seed: u64) -> SensorTrace {
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        let v = (0..n)
            .map(|i| {
                let t = i as f64 / rate;
                let w = (t - offset) / (1.0 + skew);
                let mut s = 1.0 + rng.gen_range(-0.002..0.002);
                for &(c, f, a) in events {
                    let d = w - c;
                    if d.abs() < 0.5 {
                        let env = 0.5 * (1.0 + (std::f64::consts::PI * d / 0.5).cos());
                        s += a * env * (2.0 * std::f64::consts::PI * f * d).sin();
                    }
                }
                s
            })
            .collect();
        SensorTrace::scalar(rate, 0.0, v).unwrap()
    }

    #[test]
    fn schedule_doubles_until_windows_get_short() {
        let cfg = Stage2Config::default();
        assert_eq!(cfg.schedule(20.0), vec![4, 8, 16]);
        assert_eq!(cfg.schedule(3600.0).last(), Some(&512));
        assert!(cfg.schedule(3.0).is_empty());
    }

    #[test]
    fn magnitude_of_gravity() {
        let t = SensorTrace::accel3(100.0, 0.0, vec![[0.0, 0.6, 0.8]; 10]).unwrap();
        let m = accel_magnitude(&t).unwrap();
        assert!(m.scalars().unwrap().iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn recovers_offset_and_skew() {
        let rate = 100.0;
        let len = 600.0;
        let events = bursts(1, 200, len + 20.0);
        let a1 = render(&events, rate, (len * rate) as usize, 0.0, 0.0, 2);
        // Device 2 runs 0.73 s ahead and 40 ppm fast.
        let a2 = render(&events, rate, ((len + 10.0) * rate) as usize, 0.73, 40e-6, 3);
        let r = refine(&a1, &a2, 0.2, &Stage2Config::default()).unwrap();
        assert!(r.selected.is_some(), "{:?}", r.warnings);
        let lag_mid = r.model.lag_at(r.model.reference_time_s);
        let truth = 0.73 + 40e-6 * r.model.reference_time_s;
        assert!((lag_mid - truth).abs() < 0.011, "{lag_mid} vs {truth}");
        assert!((r.model.skew_ppm() - 40.0).abs() < 20.0, "{}", r.model.skew_ppm());
    }

    #[test]
    fn gravity_constant_does_not_change_fit() {
        let rate = 100.0;
        let events = bursts(4, 100, 320.0);
        let a1 = render(&events, rate, 30_000, 0.0, 0.0, 5);
        let a2 = render(&events, rate, 30_000, -0.4, 0.0, 6);
        let lifted = SensorTrace::scalar(rate, 0.0, a2.scalars().unwrap().iter().map(|v| v + 0.7).collect()).unwrap();
        let cfg = Stage2Config::default();
        let r1 = refine(&a1, &a2, 0.0, &cfg).unwrap();
        let r2 = refine(&a1, &lifted, 0.0, &cfg).unwrap();
        assert!((r1.model.offset_s - r2.model.offset_s).abs() < 1e-6);
        assert!((r1.model.skew - r2.model.skew).abs() < 1e-9);
    }

    #[test]
    fn noise_only_keeps_the_prior() {
        let rate = 100.0;
        let a1 = render(&[], rate, 30_000, 0.0, 0.0, 7);
        let a2 = render(&[], rate, 30_000, 0.0, 0.0, 8);
        let r = refine(&a1, &a2, 1.5, &Stage2Config::default()).unwrap();
        assert_eq!(r.selected, None);
        assert_eq!(r.model.offset_s, 1.5);
        assert_eq!(r.model.skew, 0.0);
        assert!(r.warnings.iter().any(|w| w == INCONCLUSIVE));
    }

    #[test]
    fn constant_magnitudes_keep_the_prior() {
        let a = SensorTrace::scalar(50.0, 0.0, vec![1.0; 10_000]).unwrap();
        let r = refine(&a, &a, 0.0, &Stage2Config::default()).unwrap();
        assert_eq!(r.selected, None);
    }
}
