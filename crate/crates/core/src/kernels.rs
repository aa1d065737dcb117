//! Lag scans over two equal-rate sequences `f` and `g`.
//!
//! Every scan compares `f[n]` with `g[n + m]` for each integer lag `m` and
//! normalizes by the number of sample pairs the two sequences share at that
//! lag, `l[m] = min(N_f, N_g - m) - max(0, -m)`. A lag is only scored when
//! `l[m]` reaches the caller's minimum overlap.
//!
//! Product sums go through an FFT once the lag range is large enough to make
//! the direct double loop the bottleneck; the delta-std scan then needs only
//! prefix sums on top. The Huber and mean-absolute-difference scans have no
//! transform shortcut and run as a parallel direct loop with a fixed
//! per-lag summation order.

use std::cell::RefCell;
use std::ops::RangeInclusive;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::model::{LagEstimate, Polarity, ScanMethod};
use crate::par;

/// Scores for a contiguous range of lags.
#[derive(Debug, Clone, PartialEq)]
pub struct LagScan {
    pub lag_min: i64,
    pub scores: Vec<f64>,
    pub overlap_lengths: Vec<usize>,
    pub method: ScanMethod,
}

impl LagScan {
    pub fn lag_max(&self) -> i64 {
        self.lag_min + self.scores.len() as i64 - 1
    }

    pub fn lags(&self) -> RangeInclusive<i64> {
        self.lag_min..=self.lag_max()
    }

    pub fn polarity(&self) -> Polarity {
        self.method.polarity()
    }

    pub fn score_at(&self, m: i64) -> Option<f64> {
        if m < self.lag_min {
            return None;
        }
        self.scores.get((m - self.lag_min) as usize).copied()
    }
}

/// Number of sample pairs shared by sequences of lengths `n_f` and `n_g` at
/// lag `m`. Zero or negative when they do not overlap.
pub fn overlap_length(n_f: usize, n_g: usize, m: i64) -> i64 {
    (n_f as i64).min(n_g as i64 - m) - 0i64.max(-m)
}

/// Lags whose overlap is at least `min_overlap` samples. This set is always
/// the contiguous interval `[min_overlap - n_f, n_g - min_overlap]`.
pub fn admissible_lags(n_f: usize, n_g: usize, min_overlap: usize) -> Option<RangeInclusive<i64>> {
    let min_overlap = min_overlap.max(1);
    if min_overlap > n_f.min(n_g) {
        return None;
    }
    Some(min_overlap as i64 - n_f as i64..=n_g as i64 - min_overlap as i64)
}

/// Minimum overlap required when at least `fraction` of the shorter sequence
/// has to be covered. `fraction = 1.0` demands full containment.
pub fn containment_overlap(n_f: usize, n_g: usize, fraction: f64) -> usize {
    let shorter = n_f.min(n_g) as f64;
    ((fraction * shorter).ceil() as usize).clamp(1, n_f.min(n_g).max(1))
}

/// Clips a requested lag range to the admissible set.
pub fn clip_lags(n_f: usize, n_g: usize, lags: RangeInclusive<i64>, min_overlap: usize) -> Result<RangeInclusive<i64>> {
    let admissible = admissible_lags(n_f, n_g, min_overlap).ok_or_else(|| {
        Error::EmptyLagRange(format!("sequences of {n_f} and {n_g} samples cannot overlap by {min_overlap}"))
    })?;
    let lo = (*lags.start()).max(*admissible.start());
    let hi = (*lags.end()).min(*admissible.end());
    if lo > hi {
        return Err(Error::EmptyLagRange(format!(
            "requested lags {}..={} leave no overlap of at least {min_overlap} samples",
            lags.start(),
            lags.end()
        )));
    }
    Ok(lo..=hi)
}

/// Index range `[a, b)` of `f` paired with `g[a + m .. b + m]` at lag `m`.
#[inline]
fn pair_range(n_f: usize, n_g: usize, m: i64) -> (usize, usize) {
    let a = 0i64.max(-m);
    let b = (n_f as i64).min(n_g as i64 - m);
    (a as usize, b.max(a) as usize)
}

fn overlaps(n_f: usize, n_g: usize, lags: &RangeInclusive<i64>) -> Vec<usize> {
    lags.clone().map(|m| overlap_length(n_f, n_g, m).max(0) as usize).collect()
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn fft_len(n: usize) -> usize {
    n.next_power_of_two()
}

/// `sum_n f[n] g[n + m]` for every `m` in `lags`, over the valid pairs only.
pub(crate) fn product_sums(f: &[f64], g: &[f64], lags: RangeInclusive<i64>) -> Vec<f64> {
    let (lo, hi) = (*lags.start(), *lags.end());
    let n_lags = (hi - lo + 1).max(0) as usize;
    if n_lags == 0 {
        return Vec::new();
    }
    let direct_cost = n_lags as f64 * f.len().min(g.len()) as f64;
    // Segment of g touched by any lag in range.
    let g0 = lo.max(0) as usize;
    let g1 = ((f.len() as i64 - 1 + hi + 1).min(g.len() as i64)).max(g0 as i64) as usize;
    let size = fft_len(f.len() + (g1 - g0));
    let fft_cost = 3.0 * size as f64 * (size as f64).log2() + 4.0 * size as f64;
    if direct_cost <= fft_cost {
        return par::map_range(lo, hi, |m| {
            let (a, b) = pair_range(f.len(), g.len(), m);
            let gm = &g[(a as i64 + m) as usize..(b as i64 + m) as usize];
            f[a..b].iter().zip(gm).map(|(x, y)| x * y).sum()
        });
    }
    fft_product_sums(f, &g[g0..g1], g0 as i64, lo, hi, size)
}

fn fft_product_sums(f: &[f64], g_seg: &[f64], g0: i64, lo: i64, hi: i64, size: usize) -> Vec<f64> {
    let (fwd, inv) = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(size), p.plan_fft_inverse(size))
    });
    let mut fa: Vec<Complex<f64>> = Vec::with_capacity(size);
    fa.extend(f.iter().map(|&x| Complex::new(x, 0.0)));
    fa.resize(size, Complex::new(0.0, 0.0));
    let mut ga: Vec<Complex<f64>> = Vec::with_capacity(size);
    ga.extend(g_seg.iter().map(|&x| Complex::new(x, 0.0)));
    ga.resize(size, Complex::new(0.0, 0.0));
    fwd.process(&mut fa);
    fwd.process(&mut ga);
    for (a, b) in fa.iter_mut().zip(&ga) {
        *a = a.conj() * b;
    }
    inv.process(&mut fa);
    let scale = 1.0 / size as f64;
    (lo..=hi)
        .map(|m| {
            // corr[k] = sum_n f[n] g_seg[n + k] with k = m - g0, stored at k mod size.
            let k = m - g0;
            let idx = k.rem_euclid(size as i64) as usize;
            fa[idx].re * scale
        })
        .collect()
}

fn centered(x: &[f64]) -> Vec<f64> {
    let mean = x.iter().sum::<f64>() / x.len().max(1) as f64;
    x.iter().map(|v| v - mean).collect()
}

fn prefix(x: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = vec![0.0];
    for v in x {
        acc += v;
        out.push(acc);
    }
    out
}

fn check_inputs(f: &[f64], g: &[f64]) -> Result<()> {
    if f.is_empty() || g.is_empty() {
        return Err(Error::invalid("lag scan over an empty sequence"));
    }
    Ok(())
}

fn normalized_products(
    f: &[f64],
    g: &[f64],
    lags: RangeInclusive<i64>,
    min_overlap: usize,
    method: ScanMethod,
) -> Result<LagScan> {
    check_inputs(f, g)?;
    let lags = clip_lags(f.len(), g.len(), lags, min_overlap)?;
    let overlap_lengths = overlaps(f.len(), g.len(), &lags);
    let scores =
        product_sums(f, g, lags.clone()).into_iter().zip(&overlap_lengths).map(|(s, &l)| s / l as f64).collect();
    Ok(LagScan { lag_min: *lags.start(), scores, overlap_lengths, method })
}

/// Overlap-normalized cross-correlation `R[m] = 1/l[m] sum f[n] g[n+m]`.
pub fn cross_correlation_scan(f: &[f64], g: &[f64], lags: RangeInclusive<i64>, min_overlap: usize) -> Result<LagScan> {
    normalized_products(f, g, lags, min_overlap, ScanMethod::Xcorr)
}

/// As [`cross_correlation_scan`] after removing each sequence's global mean.
pub fn cross_covariance_scan(f: &[f64], g: &[f64], lags: RangeInclusive<i64>, min_overlap: usize) -> Result<LagScan> {
    check_inputs(f, g)?;
    normalized_products(&centered(f), &centered(g), lags, min_overlap, ScanMethod::Xcov)
}

/// Huber loss: quadratic within `delta` of zero, linear outside.
#[inline]
pub fn huber(x: f64, delta: f64) -> f64 {
    let a = x.abs();
    if a <= delta {
        0.5 * x * x
    } else {
        delta * (a - 0.5 * delta)
    }
}

fn direct_scan<F>(
    f: &[f64],
    g: &[f64],
    lags: RangeInclusive<i64>,
    min_overlap: usize,
    method: ScanMethod,
    loss: F,
) -> Result<LagScan>
where
    F: Fn(f64) -> f64 + Sync + Send,
{
    check_inputs(f, g)?;
    let lags = clip_lags(f.len(), g.len(), lags, min_overlap)?;
    let overlap_lengths = overlaps(f.len(), g.len(), &lags);
    let scores = par::map_range(*lags.start(), *lags.end(), |m| {
        let (a, b) = pair_range(f.len(), g.len(), m);
        let gm = &g[(a as i64 + m) as usize..(b as i64 + m) as usize];
        let total: f64 = f[a..b].iter().zip(gm).map(|(x, y)| loss(x - y)).sum();
        total / (b - a) as f64
    });
    Ok(LagScan { lag_min: *lags.start(), scores, overlap_lengths, method })
}

/// Mean Huber loss of the pointwise difference, `1/l[m] sum L_delta(f[n] - g[n+m])`.
pub fn delta_error_scan(
    f: &[f64],
    g: &[f64],
    lags: RangeInclusive<i64>,
    min_overlap: usize,
    delta: f64,
) -> Result<LagScan> {
    if !(delta > 0.0) {
        return Err(Error::invalid(format!("huber delta must be positive, got {delta}")));
    }
    direct_scan(f, g, lags, min_overlap, ScanMethod::DeltaError, |d| huber(d, delta))
}

/// Mean absolute pointwise difference. Used as the simultaneity statistic.
pub fn mean_abs_diff_scan(f: &[f64], g: &[f64], lags: RangeInclusive<i64>, min_overlap: usize) -> Result<LagScan> {
    direct_scan(f, g, lags, min_overlap, ScanMethod::MeanAbsDiff, f64::abs)
}

/// Below this overlap the prefix-sum differences lose too many digits to the
/// rest of the sequence, so the difference is summed directly.
const DIRECT_STD_OVERLAP: usize = 256;

fn two_pass_std(f: &[f64], g: &[f64]) -> f64 {
    let l = f.len() as f64;
    let mean = f.iter().zip(g).map(|(x, y)| x - y).sum::<f64>() / l;
    let ss: f64 = f.iter().zip(g).map(|(x, y)| (x - y - mean).powi(2)).sum();
    (ss / (l - 1.0)).sqrt()
}

/// Sample standard deviation (`1/(l-1)`) of the pointwise difference
/// `f[n] - g[n+m]`. Invariant to constant offsets on either sequence.
pub fn delta_std_scan(f: &[f64], g: &[f64], lags: RangeInclusive<i64>, min_overlap: usize) -> Result<LagScan> {
    check_inputs(f, g)?;
    let lags = clip_lags(f.len(), g.len(), lags, min_overlap.max(2))?;
    let overlap_lengths = overlaps(f.len(), g.len(), &lags);
    let (fc, gc) = (centered(f), centered(g));
    let pf = prefix(fc.iter().copied());
    let pff = prefix(fc.iter().map(|x| x * x));
    let pg = prefix(gc.iter().copied());
    let pgg = prefix(gc.iter().map(|x| x * x));
    let fg = product_sums(&fc, &gc, lags.clone());
    let scores = lags
        .clone()
        .zip(fg)
        .map(|(m, sfg)| {
            let (a, b) = pair_range(f.len(), g.len(), m);
            let (ga, gb) = ((a as i64 + m) as usize, (b as i64 + m) as usize);
            if b - a < DIRECT_STD_OVERLAP {
                return two_pass_std(&fc[a..b], &gc[ga..gb]);
            }
            let l = (b - a) as f64;
            let sd = (pf[b] - pf[a]) - (pg[gb] - pg[ga]);
            let sdd = (pff[b] - pff[a]) + (pgg[gb] - pgg[ga]) - 2.0 * sfg;
            ((sdd - sd * sd / l) / (l - 1.0)).max(0.0).sqrt()
        })
        .collect();
    Ok(LagScan { lag_min: *lags.start(), scores, overlap_lengths, method: ScanMethod::DeltaStd })
}

/// Picks the extremal lag of a scan and converts it to seconds (`m / rate`).
///
/// Ties go to the smallest `|m|`, then to the negative lag. A scan whose
/// scores are all equal still returns a lag but is marked `flat`.
pub fn best_lag(scan: &LagScan, sample_rate_hz: f64) -> Result<LagEstimate> {
    if scan.scores.is_empty() {
        return Err(Error::EmptyLagRange("empty scan".into()));
    }
    if scan.scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Degenerate("lag scan produced NaN scores".into()));
    }
    let better = |a: f64, b: f64| match scan.polarity() {
        Polarity::Maximize => a > b,
        Polarity::Minimize => a < b,
    };
    let mut best_m = scan.lag_min;
    let mut best = scan.scores[0];
    for (m, &s) in scan.lags().zip(&scan.scores).skip(1) {
        let tie_wins = s == best && (m.abs() < best_m.abs() || (m.abs() == best_m.abs() && m < best_m));
        if better(s, best) || tie_wins {
            best = s;
            best_m = m;
        }
    }
    let first = scan.scores[0];
    let flat = scan.scores.iter().all(|&s| s == first);
    Ok(LagEstimate {
        lag_s: best_m as f64 / sample_rate_hz,
        score: best,
        method: scan.method,
        search_range_s: (scan.lag_min as f64 / sample_rate_hz, scan.lag_max() as f64 / sample_rate_hz),
        flat,
    })
}
