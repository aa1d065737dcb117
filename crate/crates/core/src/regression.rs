//! Ordinary least squares on `(t, lag)` points and iterative outlier removal
//! with a Bonferroni-corrected studentized-residual test.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    /// Fitted value at `reference`.
    pub intercept: f64,
    pub slope: f64,
    pub reference: f64,
    pub r2: f64,
    /// `1 - (1 - r2)(n - 1)/(n - 2)`; NaN for fewer than three points.
    pub adjusted_r2: f64,
    pub residuals: Vec<f64>,
}

impl OlsFit {
    pub fn n(&self) -> usize {
        self.residuals.len()
    }

    pub fn predict(&self, t: f64) -> f64 {
        self.intercept + self.slope * (t - self.reference)
    }
}

struct Moments {
    t_mean: f64,
    y_mean: f64,
    sxx: f64,
    sxy: f64,
}

fn moments(points: &[(f64, f64)]) -> Moments {
    let n = points.len() as f64;
    let t_mean = points.iter().map(|p| p.0).sum::<f64>() / n;
    let y_mean = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(t, y) in points {
        sxx += (t - t_mean) * (t - t_mean);
        sxy += (t - t_mean) * (y - y_mean);
    }
    Moments { t_mean, y_mean, sxx, sxy }
}

/// Least-squares line through `points`, parameterized around `reference`.
pub fn ols_fit(points: &[(f64, f64)], reference: f64) -> Result<OlsFit> {
    if points.len() < 2 {
        return Err(Error::Degenerate(format!("a line needs two points, got {}", points.len())));
    }
    if points.iter().any(|p| !(p.0.is_finite() && p.1.is_finite())) {
        return Err(Error::invalid("non-finite regression input"));
    }
    let m = moments(points);
    if m.sxx == 0.0 {
        return Err(Error::Degenerate("all points share one time".into()));
    }
    let slope = m.sxy / m.sxx;
    let residuals: Vec<f64> = points.iter().map(|&(t, y)| y - (m.y_mean + slope * (t - m.t_mean))).collect();
    let ss_res: f64 = residuals.iter().map(|e| e * e).sum();
    let ss_tot: f64 = points.iter().map(|p| (p.1 - m.y_mean).powi(2)).sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { (1.0 - ss_res / ss_tot).max(0.0) };
    let n = points.len() as f64;
    let adjusted_r2 = if points.len() > 2 { 1.0 - (1.0 - r2) * (n - 1.0) / (n - 2.0) } else { f64::NAN };
    Ok(OlsFit { intercept: m.y_mean + slope * (reference - m.t_mean), slope, reference, r2, adjusted_r2, residuals })
}

/// Externally studentized residuals of a line fit. Needs at least four points.
pub fn studentized_residuals(points: &[(f64, f64)]) -> Result<Vec<f64>> {
    let n = points.len();
    if n < 4 {
        return Err(Error::Degenerate(format!("studentized residuals need four points, got {n}")));
    }
    let fit = ols_fit(points, 0.0)?;
    let m = moments(points);
    let rss: f64 = fit.residuals.iter().map(|e| e * e).sum();
    let dof = (n - 3) as f64;
    Ok(points
        .iter()
        .zip(&fit.residuals)
        .map(|(&(t, _), &e)| {
            let h = 1.0 / n as f64 + (t - m.t_mean).powi(2) / m.sxx;
            let one_minus_h = (1.0 - h).max(0.0);
            if one_minus_h == 0.0 {
                return 0.0;
            }
            let rss_i = (rss - e * e / one_minus_h).max(0.0);
            let s = (rss_i / dof).sqrt();
            if s == 0.0 {
                if e == 0.0 {
                    0.0
                } else {
                    e.signum() * f64::INFINITY
                }
            } else {
                e / (s * one_minus_h.sqrt())
            }
        })
        .collect())
}

/// Iteratively removes the single most extreme point while its
/// Bonferroni-corrected two-sided p-value stays below `alpha`, never going
/// below `min_keep` points. Returns the inlier mask.
pub fn bonferroni_outliers(points: &[(f64, f64)], alpha: f64, min_keep: usize) -> Vec<bool> {
    let mut inlier = vec![true; points.len()];
    loop {
        let idx: Vec<usize> = (0..points.len()).filter(|&i| inlier[i]).collect();
        let n = idx.len();
        if n <= min_keep.max(3) {
            break;
        }
        let active: Vec<(f64, f64)> = idx.iter().map(|&i| points[i]).collect();
        let Ok(fit) = ols_fit(&active, 0.0) else { break };
        // Residuals at rounding level carry no outlier information.
        let scale = active.iter().map(|p| p.1.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let rms = (fit.residuals.iter().map(|e| e * e).sum::<f64>() / n as f64).sqrt();
        if rms <= 1e-12 * scale {
            break;
        }
        let Ok(t) = studentized_residuals(&active) else { break };
        let (worst, t_max) =
            t.iter().enumerate().map(|(i, v)| (i, v.abs())).fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        let p = if t_max.is_infinite() {
            0.0
        } else {
            let dist = StudentsT::new(0.0, 1.0, (n - 3) as f64).expect("positive degrees of freedom");
            2.0 * dist.sf(t_max)
        };
        if p * n as f64 >= alpha {
            break;
        }
        inlier[idx[worst]] = false;
    }
    inlier
}
