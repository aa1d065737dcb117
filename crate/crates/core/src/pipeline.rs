//! End-to-end synchronization of recording pairs and groups, the JSON
//! alignment report, and evaluation against simulated ground truth.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{compensate_recording, resample_linear, FifoConfig};
use crate::model::{compose_time_axes, AccelSensor, ClockModel, LagEstimate, Recording, ScanMethod, SensorTrace};
use crate::par;
use crate::stage1::{self, Stage1Config, Verdict};
use crate::stage2::{self, Stage2Config};
use crate::truth::{GroundTruth, GROUND_TRUTH_FILE};

pub const NO_ACCEL: &str = "no accelerometer; refinement skipped";

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub stage1: Stage1Config,
    pub stage2: Stage2Config,
    #[serde(skip)]
    pub fifo: FifoConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportWindow {
    pub t_s: f64,
    pub lag_s: f64,
    pub used_in_fit: bool,
}

/// Outcome of synchronizing device `b` against device `a`. All times are on
/// device `a`'s axis and lags are `t_b - t_a`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentReport {
    pub device_a: String,
    pub device_b: String,
    pub simultaneous: bool,
    pub rejection_statistic_pa: f64,
    pub stage1: Option<LagEstimate>,
    pub clock_model: Option<ClockModel>,
    pub accel_pair: Option<(String, String)>,
    pub selected_n_win: Option<usize>,
    pub adjusted_r2: Option<f64>,
    pub window_lags: Vec<ReportWindow>,
    pub warnings: Vec<String>,
}

/// Flat JSON layout of [`AlignmentReport`].
#[derive(Debug, Serialize, Deserialize)]
struct ReportJson {
    device_a: String,
    device_b: String,
    simultaneous: bool,
    rejection_statistic_pa: f64,
    stage1_lag_s: Option<f64>,
    stage1_method: Option<ScanMethod>,
    stage1_score: Option<f64>,
    stage1_search_range_s: Option<(f64, f64)>,
    stage1_flat: Option<bool>,
    offset_s: Option<f64>,
    skew: Option<f64>,
    skew_ppm: Option<f64>,
    reference_time_s: Option<f64>,
    accel_pair: Option<(String, String)>,
    selected_n_win: Option<usize>,
    adjusted_r2: Option<f64>,
    window_lags: Vec<ReportWindow>,
    warnings: Vec<String>,
}

impl AlignmentReport {
    /// Estimated lag `t_b - t_a` at device-`a` time `t`.
    pub fn lag_at(&self, t: f64) -> Option<f64> {
        self.clock_model.map(|m| m.lag_at(t))
    }

    pub fn to_json(&self) -> String {
        let s1 = self.stage1.as_ref();
        let m = self.clock_model.as_ref();
        let j = ReportJson {
            device_a: self.device_a.clone(),
            device_b: self.device_b.clone(),
            simultaneous: self.simultaneous,
            rejection_statistic_pa: self.rejection_statistic_pa,
            stage1_lag_s: s1.map(|e| e.lag_s),
            stage1_method: s1.map(|e| e.method),
            stage1_score: s1.map(|e| e.score),
            stage1_search_range_s: s1.map(|e| e.search_range_s),
            stage1_flat: s1.map(|e| e.flat),
            offset_s: m.map(|m| m.offset_s),
            skew: m.map(|m| m.skew),
            skew_ppm: m.map(|m| m.skew_ppm()),
            reference_time_s: m.map(|m| m.reference_time_s),
            accel_pair: self.accel_pair.clone(),
            selected_n_win: self.selected_n_win,
            adjusted_r2: self.adjusted_r2,
            window_lags: self.window_lags.clone(),
            warnings: self.warnings.clone(),
        };
        serde_json::to_string_pretty(&j).expect("report fields serialize")
    }

    pub fn from_json(text: &str) -> Result<AlignmentReport> {
        let j: ReportJson = serde_json::from_str(text).map_err(|e| Error::invalid(format!("alignment report: {e}")))?;
        let stage1 = match (j.stage1_lag_s, j.stage1_method) {
            (Some(lag_s), Some(method)) => Some(LagEstimate {
                lag_s,
                score: j.stage1_score.unwrap_or(f64::NAN),
                method,
                search_range_s: j.stage1_search_range_s.unwrap_or((lag_s, lag_s)),
                flat: j.stage1_flat.unwrap_or(false),
            }),
            _ => None,
        };
        let clock_model = match (j.offset_s, j.reference_time_s) {
            (Some(offset_s), Some(reference_time_s)) => {
                let skew = j.skew.or(j.skew_ppm.map(|p| p / 1e6)).unwrap_or(0.0);
                Some(ClockModel::new(offset_s, skew, reference_time_s))
            }
            _ => None,
        };
        Ok(AlignmentReport {
            device_a: j.device_a,
            device_b: j.device_b,
            simultaneous: j.simultaneous,
            rejection_statistic_pa: j.rejection_statistic_pa,
            stage1,
            clock_model,
            accel_pair: j.accel_pair,
            selected_n_win: j.selected_n_win,
            adjusted_r2: j.adjusted_r2,
            window_lags: j.window_lags,
            warnings: j.warnings,
        })
    }
}

fn same_rate(a: &SensorTrace, b: &SensorTrace) -> Result<(SensorTrace, SensorTrace)> {
    let (ra, rb) = (a.sample_rate_hz, b.sample_rate_hz);
    if (ra - rb).abs() <= 1e-9 * ra.max(rb) {
        return Ok((a.clone(), SensorTrace { sample_rate_hz: ra, ..b.clone() }));
    }
    if ra < rb {
        Ok((a.clone(), resample_linear(b, ra)?))
    } else {
        Ok((resample_linear(a, rb)?, b.clone()))
    }
}

/// Smallest non-zero difference between sample values, in g.
fn quantization_step(sensor: &AccelSensor) -> f64 {
    let scale = unit_scale(&sensor.unit);
    let mut values: Vec<f64> =
        sensor.trace.vectors().unwrap_or(&[]).iter().take(20_000).flat_map(|v| v.iter().copied()).collect();
    values.sort_by(f64::total_cmp);
    values.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 0.0).fold(f64::INFINITY, f64::min) * scale
}

fn unit_scale(unit: &str) -> f64 {
    match unit {
        "m/s2" | "m/s^2" => 1.0 / 9.80665,
        _ => 1.0,
    }
}

/// Picks the accelerometers to compare: the first sensor name both devices
/// share, otherwise each device's finest-resolution sensor.
fn pair_accelerometers<'a>(a: &'a Recording, b: &'a Recording) -> Option<(&'a AccelSensor, &'a AccelSensor, bool)> {
    if let Some(s) = a.accel.iter().find(|s| b.accel_by_name(&s.name).is_some()) {
        return Some((s, b.accel_by_name(&s.name)?, false));
    }
    let finest = |r: &'a Recording| r.accel.iter().min_by(|x, y| quantization_step(x).total_cmp(&quantization_step(y)));
    Some((finest(a)?, finest(b)?, true))
}

fn magnitude_in_g(sensor: &AccelSensor) -> Result<SensorTrace> {
    let mut m = stage2::accel_magnitude(&sensor.trace)?;
    let scale = unit_scale(&sensor.unit);
    if scale != 1.0 {
        if let crate::model::Samples::Scalar(v) = &mut m.samples {
            v.iter_mut().for_each(|x| *x *= scale);
        }
    }
    Ok(m)
}

/// Synchronizes recording `b` against recording `a`.
///
/// Returns a report with `simultaneous == false` and no clock model when the
/// pressure levels rule out a common recording period, and
/// [`Error::InsufficientData`] when the overlap is too short to decide.
pub fn synchronize_pair(a: &Recording, b: &Recording, cfg: &PipelineConfig) -> Result<AlignmentReport> {
    a.validate()?;
    b.validate()?;
    let a = compensate_recording(a, &cfg.fifo)?;
    let b = compensate_recording(b, &cfg.fifo)?;
    let (p1, p2) = same_rate(&a.pressure, &b.pressure)?;
    let check = stage1::check_simultaneous(&p1, &p2, &cfg.stage1).map_err(|e| e.in_stage("simultaneity check"))?;
    let mut report = AlignmentReport {
        device_a: a.device_id.clone(),
        device_b: b.device_id.clone(),
        simultaneous: false,
        rejection_statistic_pa: check.statistic_pa.unwrap_or(f64::NAN),
        stage1: None,
        clock_model: None,
        accel_pair: None,
        selected_n_win: None,
        adjusted_r2: None,
        window_lags: Vec::new(),
        warnings: Vec::new(),
    };
    match check.verdict {
        Verdict::InsufficientData => {
            return Err(Error::InsufficientData(format!(
                "pressure overlap of {} and {} is shorter than {} s",
                a.device_id, b.device_id, cfg.stage1.min_verdict_overlap_s
            )))
        }
        Verdict::NonSimultaneous => return Ok(report),
        Verdict::Simultaneous => report.simultaneous = true,
    }

    let prior = stage1::prealign(&p1, &p2, &cfg.stage1).map_err(|e| e.in_stage("pressure pre-alignment"))?;
    report.stage1 = Some(prior);
    attach_refinement(&a, &b, prior.lag_s, cfg, &mut report)?;
    Ok(report)
}

/// Runs only the acceleration refinement of `b` against `a`, starting from
/// the given lag instead of a pressure pre-alignment.
pub fn refine_pair(a: &Recording, b: &Recording, prior_lag_s: f64, cfg: &PipelineConfig) -> Result<AlignmentReport> {
    a.validate()?;
    b.validate()?;
    let a = compensate_recording(a, &cfg.fifo)?;
    let b = compensate_recording(b, &cfg.fifo)?;
    let mut report = AlignmentReport {
        device_a: a.device_id.clone(),
        device_b: b.device_id.clone(),
        simultaneous: true,
        rejection_statistic_pa: f64::NAN,
        stage1: None,
        clock_model: None,
        accel_pair: None,
        selected_n_win: None,
        adjusted_r2: None,
        window_lags: Vec::new(),
        warnings: Vec::new(),
    };
    attach_refinement(&a, &b, prior_lag_s, cfg, &mut report)?;
    Ok(report)
}

fn attach_refinement(
    a: &Recording,
    b: &Recording,
    prior_lag_s: f64,
    cfg: &PipelineConfig,
    report: &mut AlignmentReport,
) -> Result<()> {
    let pressure_mid = {
        let lo = a.pressure.start_time_s.max(b.pressure.start_time_s - prior_lag_s);
        let hi = a.pressure.end_time_s().min(b.pressure.end_time_s() - prior_lag_s);
        0.5 * (lo + hi)
    };
    let Some((s1, s2, cross)) = pair_accelerometers(a, b) else {
        report.warnings.push(NO_ACCEL.to_string());
        report.clock_model = Some(ClockModel::constant(prior_lag_s, pressure_mid));
        return Ok(());
    };
    if cross {
        report.warnings.push(format!("no common accelerometer; comparing {} with {}", s1.name, s2.name));
    }
    report.accel_pair = Some((s1.name.clone(), s2.name.clone()));
    let (m1, m2) = same_rate(&magnitude_in_g(s1)?, &magnitude_in_g(s2)?)?;
    let refined = match stage2::refine(&m1, &m2, prior_lag_s, &cfg.stage2) {
        Ok(r) => r,
        Err(e @ Error::InsufficientData(_)) => {
            report.warnings.push(format!("{e}; refinement skipped"));
            report.clock_model = Some(ClockModel::constant(prior_lag_s, pressure_mid));
            return Ok(());
        }
        Err(e) => return Err(e.in_stage("acceleration refinement")),
    };
    if let Some(fit) = refined.selected_fit() {
        report.selected_n_win = Some(fit.n_win);
        report.adjusted_r2 = Some(fit.adjusted_r2);
        report.window_lags = fit
            .lags
            .iter()
            .zip(&fit.inliers)
            .map(|(w, &used)| ReportWindow { t_s: w.t_s, lag_s: w.lag_s, used_in_fit: used })
            .collect();
    }
    report.clock_model = Some(refined.model);
    report.warnings.extend(refined.warnings);
    Ok(())
}

pub struct GroupMember {
    pub device_id: String,
    pub outcome: Result<AlignmentReport>,
}

pub struct GroupAlignment {
    /// Index of the reference recording in the input.
    pub reference: usize,
    /// One entry per non-reference recording, in input order.
    pub members: Vec<GroupMember>,
    /// The reference followed by every accepted recording re-stamped onto
    /// its axis.
    pub aligned: Vec<Recording>,
}

impl GroupAlignment {
    pub fn accepted(&self) -> impl Iterator<Item = &AlignmentReport> {
        self.members.iter().filter_map(|m| m.outcome.as_ref().ok()).filter(|r| r.simultaneous)
    }
}

/// Synchronizes every recording against the longest one.
pub fn synchronize_group(recordings: &[Recording], cfg: &PipelineConfig) -> Result<GroupAlignment> {
    if recordings.len() < 2 {
        return Err(Error::invalid("a group needs at least two recordings"));
    }
    let reference = recordings.iter().enumerate().fold(0, |best, (i, r)| {
        if r.pressure.duration_s() > recordings[best].pressure.duration_s() {
            i
        } else {
            best
        }
    });
    let others: Vec<usize> = (0..recordings.len()).filter(|&i| i != reference).collect();
    let outcomes = par::map_slice(&others, |&i| synchronize_pair(&recordings[reference], &recordings[i], cfg));
    let mut aligned = vec![recordings[reference].clone()];
    let mut members = Vec::with_capacity(others.len());
    for (&i, outcome) in others.iter().zip(outcomes) {
        if let Ok(report) = &outcome {
            if let (true, Some(model)) = (report.simultaneous, report.clock_model) {
                aligned.push(compose_time_axes(&recordings[reference], &recordings[i], &model)?);
            }
        }
        members.push(GroupMember { device_id: recordings[i].device_id.clone(), outcome });
    }
    if aligned.len() == 1 {
        return Err(Error::InsufficientData("no recording could be aligned with the reference".into()));
    }
    Ok(GroupAlignment { reference, members, aligned })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalProtocol {
    pub durations_s: Vec<f64>,
    pub max_splits: usize,
    /// The first device is cropped to each split's time window widened by
    /// this margin on its own clock. Must exceed the largest clock offset
    /// between devices. `None` keeps the whole recording.
    pub reference_margin_s: Option<f64>,
    pub config: PipelineConfig,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        EvalProtocol {
            durations_s: vec![300.0, 600.0, 900.0, 1800.0, 3600.0],
            max_splits: 5,
            reference_margin_s: Some(180.0),
            config: PipelineConfig::default(),
        }
    }
}

/// One cropped pair evaluated at the split's midpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct PairOutcome {
    pub scenario: String,
    pub session: PathBuf,
    pub device_a: String,
    pub device_b: String,
    pub duration_s: f64,
    pub split: usize,
    /// Absolute lag error of the final model; infinite when the pair was not
    /// aligned.
    pub error_s: f64,
    /// Absolute error of the pressure-only estimate, infinite when missing.
    pub stage1_error_s: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub scenario: String,
    pub duration_s: f64,
    pub n_pairs: usize,
    pub median_err_s: Option<f64>,
    pub p10_err_s: Option<f64>,
    pub p90_err_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub rows: Vec<EvalRow>,
    pub pairs: Vec<PairOutcome>,
}

/// Linear-interpolation percentile of sorted data, `q` in `[0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 >= sorted.len() || frac == 0.0 {
        return Some(sorted[i]);
    }
    if sorted[i + 1].is_infinite() {
        // Failed pairs count as infinite error; do not interpolate into them.
        return Some(sorted[i + 1]);
    }
    Some(sorted[i] + (sorted[i + 1] - sorted[i]) * frac)
}

fn session_dirs(dataset: &Path) -> Result<Vec<PathBuf>> {
    if dataset.join(GROUND_TRUTH_FILE).is_file() {
        return Ok(vec![dataset.to_path_buf()]);
    }
    let entries = std::fs::read_dir(dataset).map_err(|e| Error::io(dataset, e))?;
    let mut dirs: Vec<PathBuf> =
        entries.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.join(GROUND_TRUTH_FILE).is_file()).collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::invalid(format!("{} contains no session with {GROUND_TRUTH_FILE}", dataset.display())));
    }
    Ok(dirs)
}

fn load_session(dir: &Path, truth: &GroundTruth) -> Result<Vec<Recording>> {
    truth.devices.iter().map(|d| crate::ingest::read_recording(&dir.join(&d.device_id))).collect()
}

struct Job {
    session: usize,
    a: usize,
    b: usize,
    duration_s: f64,
    split: usize,
    t0: f64,
}

/// A simulated session ready for evaluation.
pub struct EvalSession {
    pub label: PathBuf,
    pub truth: GroundTruth,
    pub recordings: Vec<Recording>,
}

/// Loads every simultaneous session below `dataset` (or `dataset` itself).
pub fn load_sessions(dataset: &Path) -> Result<Vec<EvalSession>> {
    let mut sessions = Vec::new();
    for dir in session_dirs(dataset)? {
        let truth = GroundTruth::read(&dir)?;
        if !truth.simultaneous {
            continue;
        }
        let recordings = load_session(&dir, &truth)?;
        sessions.push(EvalSession { label: dir, truth, recordings });
    }
    Ok(sessions)
}

/// Runs the pipeline on every device pair of every simulated session in
/// `dataset`. See [`evaluate_sessions`].
pub fn evaluate(dataset: &Path, protocol: &EvalProtocol) -> Result<Evaluation> {
    evaluate_sessions(&load_sessions(dataset)?, protocol)
}

/// Runs the pipeline on every device pair, cropping the second device into
/// up to `max_splits` non-overlapping pieces per duration, and summarizes the
/// absolute lag errors at each piece's midpoint.
pub fn evaluate_sessions(sessions: &[EvalSession], protocol: &EvalProtocol) -> Result<Evaluation> {
    let sessions: Vec<(PathBuf, GroundTruth, Vec<Recording>)> = sessions
        .iter()
        .map(|s| {
            let recs = s
                .recordings
                .iter()
                .map(|r| compensate_recording(r, &protocol.config.fifo))
                .collect::<Result<Vec<_>>>()?;
            Ok((s.label.clone(), s.truth.clone(), recs))
        })
        .collect::<Result<_>>()?;
    let mut jobs = Vec::new();
    for (si, (_, truth, recs)) in sessions.iter().enumerate() {
        for a in 0..recs.len() {
            for b in a + 1..recs.len() {
                let (ra, rb) = (&recs[a], &recs[b]);
                let ca = truth.clock(&ra.device_id)?;
                let cb = truth.clock(&rb.device_id)?;
                // Part of b's axis that a's pressure trace covers.
                let lo = rb.pressure.start_time_s.max(cb.device_time(ca.world_time(ra.pressure.start_time_s)));
                let hi = rb.pressure.end_time_s().min(cb.device_time(ca.world_time(ra.pressure.end_time_s())));
                for &d in &protocol.durations_s {
                    let n = (((hi - lo) / d).floor().max(0.0) as usize).min(protocol.max_splits);
                    for split in 0..n {
                        jobs.push(Job { session: si, a, b, duration_s: d, split, t0: lo + split as f64 * d });
                    }
                }
            }
        }
    }
    let pairs = par::map_slice(&jobs, |job| {
        let (dir, truth, recs) = &sessions[job.session];
        let (ra, rb) = (&recs[job.a], &recs[job.b]);
        let mut outcome = PairOutcome {
            scenario: truth.scenario.clone(),
            session: dir.clone(),
            device_a: ra.device_id.clone(),
            device_b: rb.device_id.clone(),
            duration_s: job.duration_s,
            split: job.split,
            error_s: f64::INFINITY,
            stage1_error_s: f64::INFINITY,
            warnings: Vec::new(),
        };
        let crop = match rb.crop(job.t0, job.t0 + job.duration_s) {
            Ok(c) => c,
            Err(e) => {
                outcome.warnings.push(e.to_string());
                return outcome;
            }
        };
        let mid_b = job.t0 + 0.5 * job.duration_s;
        let (Ok(ca), Ok(cb)) = (truth.clock(&ra.device_id), truth.clock(&rb.device_id)) else {
            return outcome;
        };
        let mid_a = ca.device_time(cb.world_time(mid_b));
        let true_lag = mid_b - mid_a;
        let reference = match protocol.reference_margin_s {
            None => ra.clone(),
            Some(m) => match ra.crop(job.t0 - m, job.t0 + job.duration_s + m) {
                Ok(r) => r,
                Err(e) => {
                    outcome.warnings.push(e.to_string());
                    return outcome;
                }
            },
        };
        match synchronize_pair(&reference, &crop, &protocol.config) {
            Ok(report) => {
                if let Some(lag) = report.lag_at(mid_a) {
                    outcome.error_s = (lag - true_lag).abs();
                }
                if let Some(s1) = report.stage1 {
                    outcome.stage1_error_s = (s1.lag_s - true_lag).abs();
                }
                outcome.warnings = report.warnings;
            }
            Err(e) => outcome.warnings.push(e.to_string()),
        }
        outcome
    });
    let mut rows = Vec::new();
    let mut scenarios: Vec<String> = sessions.iter().map(|s| s.1.scenario.clone()).collect();
    scenarios.sort();
    scenarios.dedup();
    for scenario in scenarios {
        for &d in &protocol.durations_s {
            let mut errs: Vec<f64> =
                pairs.iter().filter(|p| p.scenario == scenario && p.duration_s == d).map(|p| p.error_s).collect();
            errs.sort_by(f64::total_cmp);
            rows.push(EvalRow {
                scenario: scenario.clone(),
                duration_s: d,
                n_pairs: errs.len(),
                median_err_s: percentile(&errs, 0.5),
                p10_err_s: percentile(&errs, 0.1),
                p90_err_s: percentile(&errs, 0.9),
            });
        }
    }
    Ok(Evaluation { rows, pairs })
}

/// Evaluation summary as CSV. Cells without pairs are left empty.
pub fn write_eval_csv<W: std::io::Write>(rows: &[EvalRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let cell = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    let io = |e: csv::Error| Error::invalid(format!("writing evaluation table: {e}"));
    w.write_record(["scenario", "duration_s", "n_pairs", "median_err_s", "p10_err_s", "p90_err_s"]).map_err(io)?;
    for r in rows {
        w.write_record([
            r.scenario.clone(),
            format!("{}", r.duration_s),
            r.n_pairs.to_string(),
            cell(r.median_err_s),
            cell(r.p10_err_s),
            cell(r.p90_err_s),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io("evaluation table", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(percentile(&v, 0.5), Some(3.0));
        assert_eq!(percentile(&v, 0.1), Some(1.4));
        assert_eq!(percentile(&[], 0.5), None);
        assert_eq!(percentile(&[2.0], 0.9), Some(2.0));
        let inf = f64::INFINITY;
        assert_eq!(percentile(&[1.0, inf, inf], 0.5), Some(inf));
        assert_eq!(percentile(&[1.0, inf], 0.25), Some(inf));
    }

    #[test]
    fn report_json_round_trip() {
        let r = AlignmentReport {
            device_a: "a".into(),
            device_b: "b".into(),
            simultaneous: true,
            rejection_statistic_pa: 41.25,
            stage1: Some(LagEstimate {
                lag_s: 12.3,
                score: 4.5,
                method: ScanMethod::DeltaStd,
                search_range_s: (-60.0, 60.0),
                flat: false,
            }),
            clock_model: Some(ClockModel::new(12.31, 1.7e-5, 900.0)),
            accel_pair: Some(("imu".into(), "imu".into())),
            selected_n_win: Some(64),
            adjusted_r2: Some(0.93),
            window_lags: vec![ReportWindow { t_s: 10.0, lag_s: 12.3, used_in_fit: true }],
            warnings: vec!["w".into()],
        };
        let text = r.to_json();
        let back = AlignmentReport::from_json(&text).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn csv_leaves_missing_cells_empty() {
        let rows = [EvalRow {
            scenario: "active".into(),
            duration_s: 3600.0,
            n_pairs: 0,
            median_err_s: None,
            p10_err_s: None,
            p90_err_s: None,
        }];
        let mut out = Vec::new();
        write_eval_csv(&rows, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.ends_with("active,3600,0,,,\n"), "{text}");
    }
}
