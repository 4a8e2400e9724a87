//! Ridge aggregation of curated factors into a single composite score.
//!
//! Factors are standardized cross-sectionally by date, pooled over training
//! rows, and combined with a no-intercept ridge fit. A per-date constant
//! shifts every name equally and cannot change cross-sectional ranking, so
//! no intercept is estimated.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{mean, sample_std, Grid};
use crate::panel::DateRange;

/// Per-date cross-sectional standardization: (x - mean) / std over
/// non-missing names; missing if fewer than 2 names or zero std.
pub fn standardize_by_date(scores: &Grid) -> Grid {
    let mut out = Grid::missing(scores.n_assets(), scores.n_dates());
    for t in 0..scores.n_dates() {
        let present: Vec<(usize, f64)> = (0..scores.n_assets())
            .filter_map(|i| {
                let v = scores.get(i, t);
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

/// Per-date standardized factor scores with a fixed name order.
#[derive(Debug, Clone)]
pub struct FactorMatrix {
    pub factor_names: Vec<String>,
    pub grids: Vec<Grid>,
}

impl FactorMatrix {
    /// Build from raw score matrices; each factor is standardized by date.
    pub fn from_raw(named_scores: Vec<(String, Grid)>) -> FactorMatrix {
        let mut factor_names = Vec::with_capacity(named_scores.len());
        let mut grids = Vec::with_capacity(named_scores.len());
        for (name, g) in named_scores {
            factor_names.push(name);
            grids.push(standardize_by_date(&g));
        }
        FactorMatrix {
            factor_names,
            grids,
        }
    }

    pub fn q(&self) -> usize {
        self.factor_names.len()
    }

    /// Factor vector at a cell, None if any component is missing.
    pub fn row_at(&self, asset: usize, date: usize) -> Option<Vec<f64>> {
        let mut row = Vec::with_capacity(self.q());
        for g in &self.grids {
            let v = g.get(asset, date);
            if v.is_nan() {
                return None;
            }
            row.push(v);
        }
        Some(row)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RidgeModel {
    pub factor_names: Vec<String>,
    pub beta: Vec<f64>,
    pub lambda: f64,
    pub fit_window: DateRange,
    /// Hash of the trace header record, tying the model to an exact session.
    pub trace_header_hash: String,
}

/// Solve (S'S + lambda I) beta = S' r over pooled complete rows restricted
/// to the given formation dates.
pub fn fit_ridge(
    fm: &FactorMatrix,
    targets: &Grid,
    dates: &[usize],
    lambda: f64,
    fit_window: DateRange,
    trace_header_hash: String,
) -> Result<RidgeModel> {
    assert!(lambda >= 0.0);
    let q = fm.q();
    let n_assets = targets.n_assets();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for &t in dates {
        for i in 0..n_assets {
            let y = targets.get(i, t);
            if y.is_nan() {
                continue;
            }
            if let Some(row) = fm.row_at(i, t) {
                rows.push(row);
                ys.push(y);
            }
        }
    }
    if rows.len() < q + 1 {
        return Err(Error::TooFewRows {
            need: q + 1,
            have: rows.len(),
        });
    }

    // normal equations on the q x q scale
    let mut sts = DMatrix::<f64>::zeros(q, q);
    let mut str_ = DVector::<f64>::zeros(q);
    for (row, &y) in rows.iter().zip(&ys) {
        for a in 0..q {
            str_[a] += row[a] * y;
            for b in 0..q {
                sts[(a, b)] += row[a] * row[b];
            }
        }
    }
    for k in 0..q {
        sts[(k, k)] += lambda;
    }

    let beta = sts
        .clone()
        .lu()
        .solve(&str_)
        .filter(|b| b.iter().all(|v| v.is_finite()))
        .ok_or(Error::SingularRidge)?;
    // LU can return garbage on near-singular systems instead of failing;
    // reject solutions that do not satisfy the normal equations.
    let residual = &sts * &beta - &str_;
    let scale = str_.amax().max(1.0);
    if residual.amax() > 1e-6 * scale {
        return Err(Error::SingularRidge);
    }

    Ok(RidgeModel {
        factor_names: fm.factor_names.clone(),
        beta: beta.iter().copied().collect(),
        lambda,
        fit_window,
        trace_header_hash,
    })
}

/// Composite score s*(i, t) = sum_k beta_k F_k(i, t); missing if any
/// component is missing.
pub fn composite_score(model: &RidgeModel, fm: &FactorMatrix) -> Result<Grid> {
    if model.factor_names != fm.factor_names {
        return Err(Error::FactorOrderMismatch);
    }
    let (n_assets, n_dates) = (fm.grids[0].n_assets(), fm.grids[0].n_dates());
    let mut out = Grid::missing(n_assets, n_dates);
    for i in 0..n_assets {
        for t in 0..n_dates {
            if let Some(row) = fm.row_at(i, t) {
                let v: f64 = row.iter().zip(&model.beta).map(|(x, b)| x * b).sum();
                out.set(i, t, v);
            }
        }
    }
    Ok(out)
}

pub fn write_model(model: &RidgeModel, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(serde_json::to_string_pretty(model)?.as_bytes())
        .map_err(|e| Error::io(path, e))?;
    f.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_model(path: &Path) -> Result<RidgeModel> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&raw)?)
}
