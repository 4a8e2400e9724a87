//! Train-window signal evaluation: daily IC series, summary statistics,
//! signal-level long-short Sharpe, coverage, and the pre-specified gate.
//!
//! All functions here are pure over immutable inputs. The gate consumes
//! train-window metrics only; validation metrics are diagnostic and never
//! alter pass/fail.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{mean, pearson, sample_std, Grid};
use crate::panel::Panel;

/// Trading days per year for annualization (crypto trades every calendar day).
pub const ANNUALIZATION_DAYS: f64 = 365.0;

/// The feedback tuple m(c) for one candidate.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvalMetrics {
    #[serde(with = "crate::serde_f64")]
    pub mean_ic: f64,
    /// One-sample t-statistic of the daily IC series. +/- infinity when the
    /// series has zero standard deviation (see `ic_tstat_degenerate`).
    #[serde(with = "crate::serde_f64")]
    pub ic_tstat: f64,
    /// Set when the IC series is constant and the t-stat is an infinity
    /// sentinel rather than a finite statistic.
    pub ic_tstat_degenerate: bool,
    /// Annualized, gross of costs.
    #[serde(with = "crate::serde_f64")]
    pub ls_sharpe: f64,
    pub coverage: f64,
    /// Days with a defined IC.
    pub n_days: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct GateConfig {
    #[serde(with = "crate::serde_f64")]
    pub tau_ic: f64,
    #[serde(with = "crate::serde_f64")]
    pub tau_t: f64,
    pub min_names_per_day: usize,
    pub min_days: usize,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig {
            tau_ic: 0.01,
            tau_t: 2.0,
            min_names_per_day: 5,
            min_days: 60,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum GateVerdict {
    Pass,
    Fail { reasons: Vec<String> },
}

impl GateVerdict {
    pub fn passed(&self) -> bool {
        matches!(self, GateVerdict::Pass)
    }
}

/// Daily Pearson IC across assets with both score and target present on the
/// date; NaN if fewer than `min_names` pairs or either side is constant.
/// Only the given formation dates are evaluated; the rest stay NaN.
pub fn daily_ic(scores: &Grid, targets: &Grid, dates: &[usize], min_names: usize) -> Vec<f64> {
    let mut out = vec![f64::NAN; scores.n_dates()];
    for &t in dates {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..scores.n_assets() {
            let s = scores.get(i, t);
            let r = targets.get(i, t);
            if !s.is_nan() && !r.is_nan() {
                xs.push(s);
                ys.push(r);
            }
        }
        if xs.len() < min_names {
            continue;
        }
        out[t] = pearson(&xs, &ys);
    }
    out
}

/// Mean and one-sample t-statistic over defined ICs.
///
/// A zero-variance series is reported as a signed infinity sentinel with the
/// degenerate flag set (0 if the mean is also 0), so the trace stays
/// append-only and complete rather than erroring.
pub fn summarize_ic(ic: &[f64]) -> Result<(f64, f64, bool)> {
    let defined: Vec<f64> = ic.iter().copied().filter(|v| !v.is_nan()).collect();
    let n = defined.len();
    if n < 2 {
        return Err(Error::InsufficientDays(n));
    }
    let m = mean(&defined);
    let s = sample_std(&defined);
    if s == 0.0 {
        let sentinel = if m > 0.0 {
            f64::INFINITY
        } else if m < 0.0 {
            f64::NEG_INFINITY
        } else {
            0.0
        };
        return Ok((m, sentinel, true));
    }
    Ok((m, m / (s / (n as f64).sqrt()), false))
}

/// Signal-level long-short Sharpe: per formation date, equal-weight long the
/// top `quantile` of scores and short the bottom; annualized mean/std of the
/// spread. Gross of costs; dates with too few names are skipped.
pub fn signal_ls_sharpe(scores: &Grid, targets: &Grid, dates: &[usize], quantile: f64) -> f64 {
    assert!(quantile > 0.0 && quantile <= 0.5);
    let spread = ls_spread_series(scores, targets, dates, quantile);
    let defined: Vec<f64> = spread.into_iter().filter(|v| !v.is_nan()).collect();
    if defined.len() < 2 {
        return f64::NAN;
    }
    let s = sample_std(&defined);
    if s == 0.0 {
        return f64::NAN;
    }
    mean(&defined) / s * ANNUALIZATION_DAYS.sqrt()
}

/// Daily long-short spread series (NaN on skipped dates), indexed by date.
pub fn ls_spread_series(
    scores: &Grid,
    targets: &Grid,
    dates: &[usize],
    quantile: f64,
) -> Vec<f64> {
    let mut out = vec![f64::NAN; scores.n_dates()];
    for &t in dates {
        // pairs with both score and target present, tie-broken by asset index
        let mut pairs: Vec<(f64, usize, f64)> = (0..scores.n_assets())
            .filter_map(|i| {
                let s = scores.get(i, t);
                let r = targets.get(i, t);
                (!s.is_nan() && !r.is_nan()).then_some((s, i, r))
            })
            .collect();
        let n = pairs.len();
        let k = (quantile * n as f64).floor() as usize;
        if k == 0 || 2 * k > n {
            continue;
        }
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let bottom: f64 = pairs[..k].iter().map(|p| p.2).sum::<f64>() / k as f64;
        let top: f64 = pairs[n - k..].iter().map(|p| p.2).sum::<f64>() / k as f64;
        out[t] = top - bottom;
    }
    out
}

/// Fraction of tradable asset-date cells (over the given dates) carrying a
/// non-missing score.
pub fn coverage(scores: &Grid, panel: &Panel, dates: &[usize]) -> f64 {
    let mut tradable_cells = 0usize;
    let mut scored_cells = 0usize;
    for &t in dates {
        for i in 0..panel.n_assets() {
            if panel.is_tradable(i, t) {
                tradable_cells += 1;
                if !scores.get(i, t).is_nan() {
                    scored_cells += 1;
                }
            }
        }
    }
    if tradable_cells == 0 {
        return 0.0;
    }
    scored_cells as f64 / tradable_cells as f64
}

/// Apply the selection gate to train-window metrics. All inequalities are
/// inclusive; every violated condition is reported.
pub fn apply_gate(m: &EvalMetrics, g: &GateConfig) -> GateVerdict {
    let mut reasons = Vec::new();
    if !(m.mean_ic >= g.tau_ic) {
        reasons.push(format!(
            "mean IC {:.6} below threshold {:.6}",
            m.mean_ic, g.tau_ic
        ));
    }
    if !(m.ic_tstat >= g.tau_t) {
        reasons.push(format!(
            "IC t-stat {:.4} below threshold {:.4}",
            m.ic_tstat, g.tau_t
        ));
    }
    if m.n_days < g.min_days {
        reasons.push(format!(
            "insufficient days: {} defined IC days, need {}",
            m.n_days, g.min_days
        ));
    }
    if reasons.is_empty() {
        GateVerdict::Pass
    } else {
        GateVerdict::Fail { reasons }
    }
}

/// Full feedback tuple for one score matrix over the given formation dates.
pub fn evaluate_metrics(
    scores: &Grid,
    targets: &Grid,
    panel: &Panel,
    dates: &[usize],
    gate: &GateConfig,
    ls_quantile: f64,
) -> EvalMetrics {
    let ic = daily_ic(scores, targets, dates, gate.min_names_per_day);
    let n_days = ic.iter().filter(|v| !v.is_nan()).count();
    let (mean_ic, ic_tstat, degenerate) =
        summarize_ic(&ic).unwrap_or((f64::NAN, f64::NAN, false));
    EvalMetrics {
        mean_ic,
        ic_tstat,
        ic_tstat_degenerate: degenerate,
        ls_sharpe: signal_ls_sharpe(scores, targets, dates, ls_quantile),
        coverage: coverage(scores, panel, dates),
        n_days,
    }
}
