//! Quintile portfolio construction, turnover, transaction costs, performance
//! metrics, and fee-sensitivity sweeps.
//!
//! Conventions: groups are sorted ascending by score, so Q{n-1} is the long
//! (highest-score) leg and Q0 the short leg. Annualization base is 365 with
//! zero risk-free rate. One-way fees apply to one-way turnover, so a full
//! round trip costs twice the fee per unit notional.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::ANNUALIZATION_DAYS;
use crate::grid::{mean, sample_std, Grid};
use crate::panel::Panel;

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Equal,
    Cap,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct PortfolioConfig {
    pub n_groups: usize,
    pub weighting: Weighting,
    /// One-way fee as a fraction of traded value (0.0005 = 5 bps).
    pub fee_one_way: f64,
}

impl Default for PortfolioConfig {
    fn default() -> Self {
        PortfolioConfig {
            n_groups: 5,
            weighting: Weighting::Equal,
            fee_one_way: 0.0005,
        }
    }
}

/// Per-date group assignment: group index as f64, NaN where unassigned.
pub fn sort_groups(scores: &Grid, panel: &Panel, dates: &[usize], n_groups: usize) -> Grid {
    assert!(n_groups >= 2);
    let mut out = Grid::missing(scores.n_assets(), scores.n_dates());
    for &t in dates {
        let mut members: Vec<(f64, usize)> = (0..scores.n_assets())
            .filter_map(|i| {
                let s = scores.get(i, t);
                (!s.is_nan() && panel.is_tradable(i, t)).then_some((s, i))
            })
            .collect();
        let n = members.len();
        if n < n_groups {
            continue;
        }
        // ascending by score, ties by asset index (assets are name-sorted)
        members.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        // as-equal-as-possible sizes, remainder assets to higher buckets
        let base = n / n_groups;
        let rem = n % n_groups;
        let mut cursor = 0usize;
        for g in 0..n_groups {
            let size = base + usize::from(g >= n_groups - rem);
            for &(_, i) in &members[cursor..cursor + size] {
                out.set(i, t, g as f64);
            }
            cursor += size;
        }
    }
    out
}

/// Daily returns and weight paths per group over the assignment dates.
#[derive(Debug, Clone)]
pub struct GroupSeries {
    /// Formation-date indices with a full assignment.
    pub dates: Vec<usize>,
    /// `[group][k]` return aligned to `dates`.
    pub returns: Vec<Vec<f64>>,
    /// `[group][k][asset]` portfolio weight (0 for non-members).
    pub weights: Vec<Vec<Vec<f64>>>,
}

/// Build per-group return and weight series. Group returns are weighted
/// means of member forward returns; the forward target already embeds the
/// execution lag, so no additional shifting happens here.
pub fn group_returns(
    assignments: &Grid,
    targets: &Grid,
    panel: &Panel,
    dates: &[usize],
    n_groups: usize,
    weighting: Weighting,
) -> GroupSeries {
    let n_assets = targets.n_assets();
    let mcap = panel.column("market_cap");
    let mut series = GroupSeries {
        dates: Vec::new(),
        returns: vec![Vec::new(); n_groups],
        weights: vec![Vec::new(); n_groups],
    };
    for &t in dates {
        // raw weight per (group, asset); members need a defined target
        let mut raw: Vec<Vec<f64>> = vec![vec![0.0; n_assets]; n_groups];
        let mut any = false;
        for i in 0..n_assets {
            let g = assignments.get(i, t);
            let r = targets.get(i, t);
            if g.is_nan() || r.is_nan() {
                continue;
            }
            let w = match weighting {
                Weighting::Equal => 1.0,
                Weighting::Cap => {
                    let m = mcap.map(|c| c.get(i, t)).unwrap_or(f64::NAN);
                    if m.is_nan() || m <= 0.0 {
                        continue;
                    }
                    m
                }
            };
            raw[g as usize][i] = w;
            any = true;
        }
        if !any {
            continue;
        }
        // require every group populated so the date is comparable
        if raw.iter().any(|ws| ws.iter().all(|&w| w == 0.0)) {
            continue;
        }
        series.dates.push(t);
        for g in 0..n_groups {
            let total: f64 = raw[g].iter().sum();
            let weights: Vec<f64> = raw[g].iter().map(|w| w / total).collect();
            let ret: f64 = weights
                .iter()
                .enumerate()
                .map(|(i, &w)| if w > 0.0 { w * targets.get(i, t) } else { 0.0 })
                .sum();
            series.returns[g].push(ret);
            series.weights[g].push(weights);
        }
    }
    series
}

/// Gross long-short series: top group minus bottom group.
pub fn long_short(series: &GroupSeries) -> Vec<f64> {
    let top = series.returns.len() - 1;
    series.returns[top]
        .iter()
        .zip(&series.returns[0])
        .map(|(a, b)| a - b)
        .collect()
}

/// One-way traded fraction between consecutive weight vectors:
/// 0.5 * sum |w_t - w_{t-1}|.
pub fn turnover(weights_t: &[f64], weights_prev: &[f64]) -> f64 {
    0.5 * weights_t
        .iter()
        .zip(weights_prev)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
}

/// Turnover series for one leg; the first entry is the full deployment (1.0).
pub fn turnover_series(weights: &[Vec<f64>]) -> Vec<f64> {
    let mut out = Vec::with_capacity(weights.len());
    for k in 0..weights.len() {
        if k == 0 {
            out.push(1.0);
        } else {
            out.push(turnover(&weights[k], &weights[k - 1]));
        }
    }
    out
}

/// Long-short turnover: both legs summed (range [0, 2]).
pub fn ls_turnover_series(series: &GroupSeries) -> Vec<f64> {
    let top = series.weights.len() - 1;
    let a = turnover_series(&series.weights[top]);
    let b = turnover_series(&series.weights[0]);
    a.iter().zip(&b).map(|(x, y)| x + y).collect()
}

/// net_t = gross_t - fee_one_way * turnover_t.
pub fn apply_costs(gross: &[f64], turnover: &[f64], fee_one_way: f64) -> Vec<f64> {
    gross
        .iter()
        .zip(turnover)
        .map(|(g, to)| g - fee_one_way * to)
        .collect()
}

/// One row of the performance report (Table-2 style columns).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ReportRow {
    pub label: String,
    #[serde(with = "crate::serde_f64")]
    pub ann_ret: f64,
    #[serde(with = "crate::serde_f64")]
    pub ann_vol: f64,
    /// NaN when the return series has zero variance (degenerate).
    #[serde(with = "crate::serde_f64")]
    pub sharpe: f64,
    #[serde(with = "crate::serde_f64")]
    pub max_dd: f64,
    #[serde(with = "crate::serde_f64")]
    pub calmar: f64,
    #[serde(with = "crate::serde_f64")]
    pub turnover: f64,
}

/// Compute the six report metrics from a net return series and its turnover
/// path. The first day's deployment turnover is excluded from the mean.
pub fn metrics(label: &str, net: &[f64], turnover: &[f64]) -> Result<ReportRow> {
    if net.len() < 30 {
        return Err(Error::TooFewObservations(net.len()));
    }
    let t = net.len() as f64;
    let growth: f64 = net.iter().map(|r| 1.0 + r).product();
    let ann_ret = if growth > 0.0 {
        growth.powf(ANNUALIZATION_DAYS / t) - 1.0
    } else {
        -1.0
    };
    let std = sample_std(net);
    let ann_vol = std * ANNUALIZATION_DAYS.sqrt();
    let sharpe = if std == 0.0 {
        f64::NAN
    } else {
        mean(net) / std * ANNUALIZATION_DAYS.sqrt()
    };
    let mut wealth = 1.0;
    let mut peak = 1.0f64;
    let mut max_dd = 0.0f64;
    for r in net {
        wealth *= 1.0 + r;
        peak = peak.max(wealth);
        max_dd = max_dd.min(wealth / peak - 1.0);
    }
    let calmar = if max_dd == 0.0 {
        f64::INFINITY * ann_ret.signum()
    } else {
        ann_ret / max_dd.abs()
    };
    let mean_turnover = if turnover.len() > 1 {
        mean(&turnover[1..])
    } else {
        0.0
    };
    Ok(ReportRow {
        label: label.to_string(),
        ann_ret,
        ann_vol,
        sharpe,
        max_dd,
        calmar,
        turnover: mean_turnover,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PortfolioReport {
    pub rows: Vec<ReportRow>,
}

/// Full quintile backtest of one score matrix: per-group net rows Q0..Q{n-1}
/// plus the L-S row, all net of costs.
pub fn backtest(
    scores: &Grid,
    targets: &Grid,
    panel: &Panel,
    dates: &[usize],
    cfg: &PortfolioConfig,
) -> Result<PortfolioReport> {
    let assignments = sort_groups(scores, panel, dates, cfg.n_groups);
    let series = group_returns(&assignments, targets, panel, dates, cfg.n_groups, cfg.weighting);
    let mut rows = Vec::new();
    for g in 0..cfg.n_groups {
        let to = turnover_series(&series.weights[g]);
        let net = apply_costs(&series.returns[g], &to, cfg.fee_one_way);
        rows.push(metrics(&format!("Q{g}"), &net, &to)?);
    }
    let gross_ls = long_short(&series);
    let to_ls = ls_turnover_series(&series);
    let net_ls = apply_costs(&gross_ls, &to_ls, cfg.fee_one_way);
    rows.push(metrics("L-S", &net_ls, &to_ls)?);
    Ok(PortfolioReport { rows })
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FeeRow {
    pub fee: f64,
    #[serde(with = "crate::serde_f64")]
    pub ann_ret: f64,
    #[serde(with = "crate::serde_f64")]
    pub ann_vol: f64,
    #[serde(with = "crate::serde_f64")]
    pub sharpe: f64,
    /// Annualized mean net L-S return minus the benchmark mean (simple
    /// excess, not a regression intercept).
    #[serde(with = "crate::serde_f64")]
    pub alpha: f64,
}

#[derive(Debug, Clone)]
pub struct FeeSweep {
    pub rows: Vec<FeeRow>,
    /// Per fee: cumulative net wealth aligned to the assignment dates.
    pub paths: Vec<(f64, Vec<(usize, f64)>)>,
}

/// Net-of-cost L-S metrics per fee rate, plus cumulative paths for plotting.
/// `benchmark` is a per-date buy-and-hold return series aligned to the panel
/// date axis (NaN where undefined).
pub fn fee_sweep(
    scores: &Grid,
    targets: &Grid,
    panel: &Panel,
    dates: &[usize],
    cfg: &PortfolioConfig,
    fees: &[f64],
    benchmark: &[f64],
) -> Result<FeeSweep> {
    let assignments = sort_groups(scores, panel, dates, cfg.n_groups);
    let series = group_returns(&assignments, targets, panel, dates, cfg.n_groups, cfg.weighting);
    let gross = long_short(&series);
    let to = ls_turnover_series(&series);
    let bench: Vec<f64> = series
        .dates
        .iter()
        .map(|&t| benchmark[t])
        .filter(|v| !v.is_nan())
        .collect();
    let bench_mean = if bench.is_empty() { 0.0 } else { mean(&bench) };

    let mut sweep = FeeSweep {
        rows: Vec::new(),
        paths: Vec::new(),
    };
    for &fee in fees {
        let net = apply_costs(&gross, &to, fee);
        let row = metrics("L-S", &net, &to)?;
        let alpha = (mean(&net) - bench_mean) * ANNUALIZATION_DAYS;
        sweep.rows.push(FeeRow {
            fee,
            ann_ret: row.ann_ret,
            ann_vol: row.ann_vol,
            sharpe: row.sharpe,
            alpha,
        });
        let mut wealth = 1.0;
        let mut path = Vec::with_capacity(net.len());
        for (k, r) in net.iter().enumerate() {
            wealth *= 1.0 + r;
            path.push((series.dates[k], wealth));
        }
        sweep.paths.push((fee, path));
    }
    Ok(sweep)
}

/// Universe buy-and-hold proxy: per-date equal-weight mean forward return
/// over tradable assets.
pub fn universe_benchmark(targets: &Grid, panel: &Panel) -> Vec<f64> {
    let mut out = vec![f64::NAN; targets.n_dates()];
    for t in 0..targets.n_dates() {
        let vals: Vec<f64> = (0..targets.n_assets())
            .filter_map(|i| {
                let r = targets.get(i, t);
                (panel.is_tradable(i, t) && !r.is_nan()).then_some(r)
            })
            .collect();
        if !vals.is_empty() {
            out[t] = mean(&vals);
        }
    }
    out
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.6}")
    }
}

/// Table-2 column order, exactly.
pub fn write_report_csv(report: &PortfolioReport, path: &Path) -> Result<()> {
    let mut out = String::from("group,AnnRet,AnnVol,Sharpe,MaxDD,Calmar,Turnover\n");
    for row in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.label,
            fmt(row.ann_ret),
            fmt(row.ann_vol),
            fmt(row.sharpe),
            fmt(row.max_dd),
            fmt(row.calmar),
            fmt(row.turnover)
        ));
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

/// Table-3 column set.
pub fn write_fee_sweep_csv(sweep: &FeeSweep, path: &Path) -> Result<()> {
    let mut out = String::from("fee,AnnRet,AnnVol,Sharpe,Alpha\n");
    for row in &sweep.rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.fee,
            fmt(row.ann_ret),
            fmt(row.ann_vol),
            fmt(row.sharpe),
            fmt(row.alpha)
        ));
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

/// Long-format (date, series, value) cumulative paths for external plotting.
pub fn write_paths_csv(sweep: &FeeSweep, panel: &Panel, path: &Path) -> Result<()> {
    let mut out = String::from("date,series,value\n");
    for (fee, points) in &sweep.paths {
        let label = format!("fee_{:.4}", fee);
        for &(t, wealth) in points {
            out.push_str(&format!("{},{},{}\n", panel.dates[t], label, fmt(wealth)));
        }
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| Error::io(path, e))
}
