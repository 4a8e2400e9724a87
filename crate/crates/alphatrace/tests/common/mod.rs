//! Shared test utilities: an independent per-cell recipe interpreter used as
//! an oracle against the production column-sweep evaluator, plus random
//! expression and panel generators.
//!
//! The naive interpreter is written from the operator definitions, not from
//! the production code: recursion per cell, own mean/std, no grids.

#![allow(dead_code)]

use std::collections::BTreeMap;

use chrono::NaiveDate;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use alphatrace::dsl::Expr;
use alphatrace::grid::Grid;
use alphatrace::panel::{Panel, Provenance};

fn naive_mean(vals: &[f64]) -> f64 {
    vals.iter().sum::<f64>() / vals.len() as f64
}

fn naive_std(vals: &[f64]) -> f64 {
    if vals.len() < 2 {
        return f64::NAN;
    }
    if vals.iter().all(|v| *v == vals[0]) {
        return 0.0;
    }
    let m = naive_mean(vals);
    (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (vals.len() - 1) as f64).sqrt()
}

/// Evaluate one cell of a recipe by direct recursion over the definitions.
pub fn naive_eval(expr: &Expr, panel: &Panel, asset: usize, date: usize) -> f64 {
    match expr {
        Expr::Column(name) => panel
            .column(name)
            .map(|g| g.get(asset, date))
            .unwrap_or(f64::NAN),
        Expr::Lag(n, child) => {
            if date < *n {
                f64::NAN
            } else {
                naive_eval(child, panel, asset, date - n)
            }
        }
        Expr::RollMean(w, child) | Expr::RollStd(w, child) => {
            if *w == 0 || date + 1 < *w {
                return f64::NAN;
            }
            let vals: Vec<f64> = (date + 1 - w..=date)
                .map(|t| naive_eval(child, panel, asset, t))
                .collect();
            if vals.iter().any(|v| v.is_nan()) {
                return f64::NAN;
            }
            match expr {
                Expr::RollMean(..) => naive_mean(&vals),
                _ => naive_std(&vals),
            }
        }
        Expr::Diff(n, child) => {
            let now = naive_eval(child, panel, asset, date);
            if date < *n {
                return f64::NAN;
            }
            let then = naive_eval(child, panel, asset, date - n);
            now - then
        }
        Expr::PctChange(n, child) => {
            let now = naive_eval(child, panel, asset, date);
            if date < *n {
                return f64::NAN;
            }
            let then = naive_eval(child, panel, asset, date - n);
            if then == 0.0 {
                f64::NAN
            } else {
                now / then - 1.0
            }
        }
        Expr::Log1p(child) => {
            let v = naive_eval(child, panel, asset, date);
            if v <= -1.0 {
                f64::NAN
            } else {
                v.ln_1p()
            }
        }
        Expr::Abs(child) => naive_eval(child, panel, asset, date).abs(),
        Expr::Clip(lo, hi, child) => {
            let v = naive_eval(child, panel, asset, date);
            if v.is_nan() {
                f64::NAN
            } else {
                v.clamp(*lo, *hi)
            }
        }
        Expr::LinComb(terms) => {
            let mut acc = 0.0;
            for (w, child) in terms {
                let v = naive_eval(child, panel, asset, date);
                if v.is_nan() {
                    return f64::NAN;
                }
                acc += w * v;
            }
            acc
        }
        Expr::CsRank(child) => {
            let mine = naive_eval(child, panel, asset, date);
            if mine.is_nan() {
                return f64::NAN;
            }
            let present: Vec<f64> = (0..panel.n_assets())
                .map(|i| naive_eval(child, panel, i, date))
                .filter(|v| !v.is_nan())
                .collect();
            let below = present.iter().filter(|v| **v < mine).count() as f64;
            let equal = present.iter().filter(|v| **v == mine).count() as f64;
            (below + (equal + 1.0) / 2.0) / present.len() as f64
        }
        Expr::CsZscore(child) => {
            let mine = naive_eval(child, panel, asset, date);
            if mine.is_nan() {
                return f64::NAN;
            }
            let present: Vec<f64> = (0..panel.n_assets())
                .map(|i| naive_eval(child, panel, i, date))
                .filter(|v| !v.is_nan())
                .collect();
            if present.len() < 2 {
                return f64::NAN;
            }
            let s = naive_std(&present);
            if s == 0.0 || s.is_nan() {
                return f64::NAN;
            }
            (mine - naive_mean(&present)) / s
        }
    }
}

/// Random panel with columns `x` and `y`, sprinkled missing values, and a
/// fully tradable mask.
pub fn random_panel(rng: &mut ChaCha8Rng, n_assets: usize, n_dates: usize) -> Panel {
    let mut columns = BTreeMap::new();
    for name in ["x", "y"] {
        let mut g = Grid::missing(n_assets, n_dates);
        for i in 0..n_assets {
            for t in 0..n_dates {
                if rng.gen_bool(0.9) {
                    g.set(i, t, rng.gen_range(-10.0..10.0));
                }
            }
        }
        columns.insert(name.to_string(), g);
    }
    Panel {
        assets: (0..n_assets).map(|i| format!("A{i:02}")).collect(),
        dates: (0..n_dates)
            .map(|t| NaiveDate::from_ymd_opt(2021, 1, 1).unwrap() + chrono::Days::new(t as u64))
            .collect(),
        columns,
        tradable: Grid::filled(n_assets, n_dates, 1.0),
        provenance: Provenance::default(),
    }
}

/// Random expression over columns `x`/`y` with bounded depth.
pub fn random_expr(rng: &mut ChaCha8Rng, depth: usize) -> Expr {
    if depth == 0 || rng.gen_bool(0.2) {
        let name = if rng.gen_bool(0.5) { "x" } else { "y" };
        return Expr::Column(name.into());
    }
    match rng.gen_range(0..12) {
        0 => Expr::CsRank(Box::new(random_expr(rng, depth - 1))),
        1 => Expr::CsZscore(Box::new(random_expr(rng, depth - 1))),
        2 => Expr::Lag(rng.gen_range(1..4), Box::new(random_expr(rng, depth - 1))),
        3 => Expr::RollMean(rng.gen_range(1..6), Box::new(random_expr(rng, depth - 1))),
        4 => Expr::RollStd(rng.gen_range(2..6), Box::new(random_expr(rng, depth - 1))),
        5 => Expr::Diff(rng.gen_range(1..4), Box::new(random_expr(rng, depth - 1))),
        6 => Expr::PctChange(rng.gen_range(1..4), Box::new(random_expr(rng, depth - 1))),
        7 => Expr::Log1p(Box::new(random_expr(rng, depth - 1))),
        8 => Expr::Abs(Box::new(random_expr(rng, depth - 1))),
        9 => {
            let lo = rng.gen_range(-5.0..0.0);
            let hi = rng.gen_range(0.1..5.0);
            Expr::Clip(lo, hi, Box::new(random_expr(rng, depth - 1)))
        }
        _ => {
            let k = rng.gen_range(2..4);
            Expr::LinComb(
                (0..k)
                    .map(|_| (rng.gen_range(-2.0..2.0), random_expr(rng, depth - 1)))
                    .collect(),
            )
        }
    }
}

/// Relative comparison treating NaN-pattern equality as success.
pub fn close_or_both_nan(a: f64, b: f64, tol: f64) -> bool {
    if a.is_nan() && b.is_nan() {
        return true;
    }
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}
