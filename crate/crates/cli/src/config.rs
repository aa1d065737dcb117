//! `key = value` experiment files. Values given here replace the defaults
//! and are in turn replaced by command-line flags.

use std::path::Path;

use barosync::pipeline::PipelineConfig;
use barosync::stage1::PrealignMethod;

pub const KEYS: &[&str] = &[
    "threshold_pa",
    "method",
    "huber_delta_pa",
    "lowpass_window_s",
    "search_range_s",
    "min_overlap_fraction",
    "min_verdict_overlap_s",
    "range_s",
    "n_win_start",
    "n_win_max",
    "min_window_s",
    "outlier_alpha",
    "min_windows_for_fit",
    "window_significance_z",
    "interpolate_peak",
    "max_residual_sd_s",
    "fifo_depth",
    "fifo_proximity_readouts",
];

pub fn parse_method(v: &str) -> Result<PrealignMethod, String> {
    match v {
        "delta-std" | "delta_std" => Ok(PrealignMethod::DeltaStd),
        "delta-error" | "delta_error" => Ok(PrealignMethod::DeltaError),
        _ => Err(format!("unknown method {v:?} (expected delta-std or delta-error)")),
    }
}

/// Parses `lo,hi` in seconds.
pub fn parse_range(v: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = v.split_once(',').ok_or_else(|| format!("expected LO,HI, got {v:?}"))?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad number {lo:?}"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad number {hi:?}"))?;
    if !(lo <= hi) {
        return Err(format!("empty range {v:?}"));
    }
    Ok((lo, hi))
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("{key}: cannot parse {v:?}"))
}

pub fn apply(cfg: &mut PipelineConfig, key: &str, v: &str) -> Result<(), String> {
    let (s1, s2) = (&mut cfg.stage1, &mut cfg.stage2);
    match key {
        "threshold_pa" => s1.rejection_threshold_pa = num(key, v)?,
        "method" => s1.method = parse_method(v)?,
        "huber_delta_pa" => s1.huber_delta_pa = num(key, v)?,
        "lowpass_window_s" => s1.lowpass_window_s = num(key, v)?,
        "search_range_s" => s1.search_range_s = Some(parse_range(v)?),
        "min_overlap_fraction" => s1.min_overlap_fraction = num(key, v)?,
        "min_verdict_overlap_s" => s1.min_verdict_overlap_s = num(key, v)?,
        "range_s" => s2.refinement_range_s = num(key, v)?,
        "n_win_start" => s2.n_win_start = num(key, v)?,
        "n_win_max" => s2.n_win_max = num(key, v)?,
        "min_window_s" => s2.min_window_s = num(key, v)?,
        "outlier_alpha" => s2.outlier_alpha = num(key, v)?,
        "min_windows_for_fit" => s2.min_windows_for_fit = num(key, v)?,
        "window_significance_z" => s2.window_significance_z = num(key, v)?,
        "interpolate_peak" => s2.interpolate_peak = num(key, v)?,
        "max_residual_sd_s" => s2.max_residual_sd_s = num(key, v)?,
        "fifo_depth" => cfg.fifo.fifo_depth = num(key, v)?,
        "fifo_proximity_readouts" => cfg.fifo.proximity_readouts = num(key, v)?,
        _ => return Err(format!("unknown key {key:?}; known keys: {}", KEYS.join(", "))),
    }
    Ok(())
}

pub fn parse(text: &str, cfg: &mut PipelineConfig) -> Result<(), String> {
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| format!("line {}: expected key = value", i + 1))?;
        apply(cfg, k.trim(), v.trim()).map_err(|e| format!("line {}: {e}", i + 1))?;
    }
    Ok(())
}

pub fn load(path: &Path, cfg: &mut PipelineConfig) -> Result<(), String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse(&text, cfg).map_err(|e| format!("{}: {e}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_values_override_defaults() {
        let mut cfg = PipelineConfig::default();
        parse("# comment\nthreshold_pa = 80\nmethod=delta-error\nsearch_range_s = -30, 30\n", &mut cfg).unwrap();
        assert_eq!(cfg.stage1.rejection_threshold_pa, 80.0);
        assert_eq!(cfg.stage1.method, PrealignMethod::DeltaError);
        assert_eq!(cfg.stage1.search_range_s, Some((-30.0, 30.0)));
    }

    #[test]
    fn unknown_key_is_rejected() {
        let mut cfg = PipelineConfig::default();
        assert!(parse("nonsense = 1", &mut cfg).unwrap_err().contains("line 1"));
        assert!(parse("threshold_pa", &mut cfg).is_err());
    }
}
