//! WebAssembly bindings for the demo page in `www/`. Results cross the
//! boundary as JSON strings.

use barosync::kernels::{self, LagScan};
use barosync::model::Recording;
use barosync::pipeline::{synchronize_pair, PipelineConfig};
use barosync::synth::{generate_nonsimultaneous_pair, generate_session, AccelSpec, Scenario, SessionConfig};
use barosync::truth::GroundTruth;
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn js(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// Probability that two unrelated recordings differ by more than the
/// threshold `a_pa`, given the spread `sigma_pa` of absolute pressure.
#[wasm_bindgen]
pub fn rejection_probability(sigma_pa: f64, a_pa: f64) -> f64 {
    barosync::stage1::rejection_probability(sigma_pa, a_pa)
}

#[derive(Serialize)]
struct ScanJson {
    method: String,
    lag_s: Vec<f64>,
    scores: Vec<f64>,
    best_lag_s: f64,
    true_lag_s: Option<f64>,
}

#[derive(Serialize)]
struct AlignJson {
    simultaneous: bool,
    rejection_statistic_pa: f64,
    stage1_lag_s: Option<f64>,
    offset_s: Option<f64>,
    skew_ppm: Option<f64>,
    reference_time_s: Option<f64>,
    /// `(t, lag, used)` per window of the selected fit.
    windows: Vec<(f64, f64, bool)>,
    /// True lag at the window centers.
    truth: Vec<(f64, f64)>,
    error_ms: Option<f64>,
    warnings: Vec<String>,
}

/// A synthetic pair: device b is cropped so that it lies inside device a.
#[wasm_bindgen]
pub struct Pair {
    a: Recording,
    b: Recording,
    truth: Option<GroundTruth>,
}

#[wasm_bindgen]
impl Pair {
    /// `foreign` draws b from an unrelated session. `skew_ppm` sets the
    /// rate difference of b's clock.
    #[wasm_bindgen(constructor)]
    pub fn new(duration_s: f64, seed: u32, foreign: bool, skew_ppm: f64) -> Result<Pair, JsError> {
        let mut cfg = SessionConfig::new(Scenario::Active, duration_s, 2, seed as u64);
        cfg.accel = vec![AccelSpec::high_resolution()];
        cfg.clock.explicit =
            vec![barosync::truth::DeviceClock::ideal(), barosync::truth::DeviceClock::linear(7.3, skew_ppm * 1e-6)];
        let s = if foreign { generate_nonsimultaneous_pair(&cfg) } else { generate_session(&cfg) }.map_err(js)?;
        let mut it = s.recordings.into_iter();
        let (a, b) = (it.next().unwrap(), it.next().unwrap());
        let trim = (0.1 * duration_s).max(30.0);
        let b = b.crop(b.pressure.start_time_s + trim, b.pressure.end_time_s() - trim).map_err(js)?;
        Ok(Pair { a, b, truth: (!foreign).then_some(s.truth) })
    }

    /// Scores every contained lag of the raw pressure traces with one of
    /// `mad`, `delta-std`, `delta-error` or `xcov`.
    pub fn scan(&self, method: &str, huber_delta_pa: f64) -> Result<String, JsError> {
        let (p1, p2) = (&self.a.pressure, &self.b.pressure);
        let f = p1.scalars().ok_or_else(|| js("pressure is not scalar"))?;
        let g = p2.scalars().ok_or_else(|| js("pressure is not scalar"))?;
        let min = kernels::containment_overlap(f.len(), g.len(), 1.0);
        let lags = kernels::admissible_lags(f.len(), g.len(), min).ok_or_else(|| js("b is longer than a"))?;
        let scan: LagScan = match method {
            "mad" => kernels::mean_abs_diff_scan(f, g, lags, min),
            "delta-std" => kernels::delta_std_scan(f, g, lags, min),
            "delta-error" => kernels::delta_error_scan(f, g, lags, min, huber_delta_pa),
            "xcov" => kernels::cross_covariance_scan(f, g, lags, min),
            _ => return Err(js(format!("unknown method {method:?}"))),
        }
        .map_err(js)?;
        let rate = p1.sample_rate_hz;
        let base = p2.start_time_s - p1.start_time_s;
        let best = kernels::best_lag(&scan, rate).map_err(js)?;
        let mid = p1.midpoint_s();
        let out = ScanJson {
            method: method.to_string(),
            lag_s: scan.lags().map(|m| base + m as f64 / rate).collect(),
            scores: scan.scores.clone(),
            best_lag_s: base + best.lag_s,
            true_lag_s: self.true_lag(mid),
        };
        serde_json::to_string(&out).map_err(js)
    }

    /// Runs the full two-stage pipeline.
    pub fn align(&self, threshold_pa: f64) -> Result<String, JsError> {
        let mut cfg = PipelineConfig::default();
        cfg.stage1.rejection_threshold_pa = threshold_pa;
        let r = synchronize_pair(&self.a, &self.b, &cfg).map_err(js)?;
        let windows: Vec<(f64, f64, bool)> = r.window_lags.iter().map(|w| (w.t_s, w.lag_s, w.used_in_fit)).collect();
        let truth = windows.iter().filter_map(|w| Some((w.0, self.true_lag(w.0)?))).collect();
        let m = r.clock_model;
        let error_ms =
            m.and_then(|m| Some((m.lag_at(m.reference_time_s) - self.true_lag(m.reference_time_s)?).abs() * 1e3));
        let out = AlignJson {
            simultaneous: r.simultaneous,
            rejection_statistic_pa: r.rejection_statistic_pa,
            stage1_lag_s: r.stage1.map(|s| s.lag_s),
            offset_s: m.map(|m| m.offset_s),
            skew_ppm: m.map(|m| m.skew_ppm()),
            reference_time_s: m.map(|m| m.reference_time_s),
            windows,
            truth,
            error_ms,
            warnings: r.warnings,
        };
        serde_json::to_string(&out).map_err(js)
    }

    fn true_lag(&self, t: f64) -> Option<f64> {
        self.truth.as_ref()?.lag_at(&self.a.device_id, &self.b.device_id, t).ok()
    }
}
