//! Column-sweep recipe evaluator.
//!
//! Each node is materialized as a full (asset x date) grid; rolling operators
//! run over contiguous per-asset rows. Missing inputs propagate to missing
//! outputs everywhere; evaluation is a total, deterministic function of
//! (expr, panel).

use crate::grid::{mean, sample_std, Grid};
use crate::panel::Panel;

use super::Expr;

/// Evaluate a recipe over a panel, producing a score matrix.
pub fn evaluate(expr: &Expr, panel: &Panel) -> Grid {
    let n_assets = panel.n_assets();
    let n_dates = panel.n_dates();
    match expr {
        Expr::Column(name) => panel
            .column(name)
            .cloned()
            .unwrap_or_else(|| Grid::missing(n_assets, n_dates)),
        Expr::CsRank(child) => cs_rank(&evaluate(child, panel)),
        Expr::CsZscore(child) => cs_zscore(&evaluate(child, panel)),
        Expr::Lag(n, child) => lag(&evaluate(child, panel), *n),
        Expr::RollMean(w, child) => roll(&evaluate(child, panel), *w, mean),
        Expr::RollStd(w, child) => roll(&evaluate(child, panel), *w, sample_std),
        Expr::Diff(n, child) => {
            let x = evaluate(child, panel);
            let lagged = lag(&x, *n);
            zip(&x, &lagged, |a, b| a - b)
        }
        Expr::PctChange(n, child) => {
            let x = evaluate(child, panel);
            let lagged = lag(&x, *n);
            zip(&x, &lagged, |a, b| if b == 0.0 { f64::NAN } else { a / b - 1.0 })
        }
        Expr::Log1p(child) => map(&evaluate(child, panel), |v| {
            if v <= -1.0 {
                f64::NAN
            } else {
                v.ln_1p()
            }
        }),
        Expr::Abs(child) => map(&evaluate(child, panel), f64::abs),
        Expr::Clip(lo, hi, child) => {
            let (lo, hi) = (*lo, *hi);
            map(&evaluate(child, panel), move |v| v.clamp(lo, hi))
        }
        Expr::LinComb(terms) => {
            let mut acc = Grid::filled(n_assets, n_dates, 0.0);
            for (w, child) in terms {
                let x = evaluate(child, panel);
                acc = zip(&acc, &x, |a, b| a + w * b);
            }
            acc
        }
    }
}

fn map<F: Fn(f64) -> f64>(g: &Grid, f: F) -> Grid {
    let mut out = Grid::missing(g.n_assets(), g.n_dates());
    for i in 0..g.n_assets() {
        for t in 0..g.n_dates() {
            let v = g.get(i, t);
            if !v.is_nan() {
                out.set(i, t, f(v));
            }
        }
    }
    out
}

fn zip<F: Fn(f64, f64) -> f64>(a: &Grid, b: &Grid, f: F) -> Grid {
    let mut out = Grid::missing(a.n_assets(), a.n_dates());
    for i in 0..a.n_assets() {
        for t in 0..a.n_dates() {
            let (x, y) = (a.get(i, t), b.get(i, t));
            if !x.is_nan() && !y.is_nan() {
                out.set(i, t, f(x, y));
            }
        }
    }
    out
}

fn lag(g: &Grid, n: usize) -> Grid {
    let mut out = Grid::missing(g.n_assets(), g.n_dates());
    for i in 0..g.n_assets() {
        for t in n..g.n_dates() {
            out.set(i, t, g.get(i, t - n));
        }
    }
    out
}

/// Trailing window over the last `w` dates inclusive; missing until `w`
/// values seen or if any input in the window is missing.
fn roll<F: Fn(&[f64]) -> f64>(g: &Grid, w: usize, f: F) -> Grid {
    let mut out = Grid::missing(g.n_assets(), g.n_dates());
    if w == 0 {
        return out;
    }
    for i in 0..g.n_assets() {
        let row = g.row(i);
        for t in (w - 1)..g.n_dates() {
            let window = &row[t + 1 - w..=t];
            if window.iter().all(|v| !v.is_nan()) {
                out.set(i, t, f(window));
            }
        }
    }
    out
}

/// Within-date percentile rank in (0, 1]: average rank for ties, divided by
/// the count of non-missing entries.
fn cs_rank(g: &Grid) -> Grid {
    let mut out = Grid::missing(g.n_assets(), g.n_dates());
    for t in 0..g.n_dates() {
        let present: Vec<(usize, f64)> = (0..g.n_assets())
            .filter_map(|i| {
                let v = g.get(i, t);
                (!v.is_nan()).then_some((i, v))
            })
            .collect();
        let n = present.len();
        if n == 0 {
            continue;
        }
        for &(i, v) in &present {
            let below = present.iter().filter(|&&(_, u)| u < v).count();
            let equal = present.iter().filter(|&&(_, u)| u == v).count();
            // average of ranks below+1 ..= below+equal
            let avg_rank = below as f64 + (equal as f64 + 1.0) / 2.0;
            out.set(i, t, avg_rank / n as f64);
        }
    }
    out
}

/// Within-date z-score; missing if fewer than 2 names or zero std.
fn cs_zscore(g: &Grid) -> Grid {
    let mut out = Grid::missing(g.n_assets(), g.n_dates());
    for t in 0..g.n_dates() {
        let present: Vec<(usize, f64)> = (0..g.n_assets())
            .filter_map(|i| {
                let v = g.get(i, t);
                (!v.is_nan()).then_some((i, v))
            })
            .collect();
        if present.len() < 2 {
            continue;
        }
        let values: Vec<f64> = present.iter().map(|&(_, v)| v).collect();
        let m = mean(&values);
        let s = sample_std(&values);
        if s == 0.0 || s.is_nan() {
            continue;
        }
        for &(i, v) in &present {
            out.set(i, t, (v - m) / s);
        }
    }
    out
}
