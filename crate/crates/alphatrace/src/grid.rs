//! Dense (asset x date) value grid with NaN as the missing marker.

use serde::{Deserialize, Serialize};

/// A dense matrix of optional values laid out asset-major.
///
/// Missing cells are stored as NaN. All panel columns and all factor score
/// matrices share this representation so that missing-ness propagates through
/// arithmetic for free.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Grid {
    n_assets: usize,
    n_dates: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn filled(n_assets: usize, n_dates: usize, value: f64) -> Self {
        Grid {
            n_assets,
            n_dates,
            data: vec![value; n_assets * n_dates],
        }
    }

    /// All-missing grid.
    pub fn missing(n_assets: usize, n_dates: usize) -> Self {
        Self::filled(n_assets, n_dates, f64::NAN)
    }

    pub fn n_assets(&self) -> usize {
        self.n_assets
    }

    pub fn n_dates(&self) -> usize {
        self.n_dates
    }

    #[inline]
    pub fn get(&self, asset: usize, date: usize) -> f64 {
        self.data[asset * self.n_dates + date]
    }

    #[inline]
    pub fn set(&mut self, asset: usize, date: usize, value: f64) {
        self.data[asset * self.n_dates + date] = value;
    }

    /// Contiguous per-asset row.
    pub fn row(&self, asset: usize) -> &[f64] {
        &self.data[asset * self.n_dates..(asset + 1) * self.n_dates]
    }

    pub fn row_mut(&mut self, asset: usize) -> &mut [f64] {
        &mut self.data[asset * self.n_dates..(asset + 1) * self.n_dates]
    }

    /// Values for one date across all assets (strided gather).
    pub fn date_slice(&self, date: usize) -> Vec<f64> {
        (0..self.n_assets).map(|i| self.get(i, date)).collect()
    }

    pub fn count_present(&self) -> usize {
        self.data.iter().filter(|v| !v.is_nan()).count()
    }

    /// Truncate to the first `n_dates_keep` dates (point-in-time prefix).
    pub fn prefix(&self, n_dates_keep: usize) -> Grid {
        assert!(n_dates_keep <= self.n_dates);
        let mut out = Grid::missing(self.n_assets, n_dates_keep);
        for i in 0..self.n_assets {
            for t in 0..n_dates_keep {
                out.set(i, t, self.get(i, t));
            }
        }
        out
    }

    /// Cell-exact equality: NaN patterns must match, numeric cells must be
    /// within `tol` of each other.
    pub fn approx_eq(&self, other: &Grid, tol: f64) -> bool {
        if self.n_assets != other.n_assets || self.n_dates != other.n_dates {
            return false;
        }
        self.data.iter().zip(&other.data).all(|(a, b)| {
            if a.is_nan() || b.is_nan() {
                a.is_nan() && b.is_nan()
            } else {
                (a - b).abs() <= tol
            }
        })
    }
}

/// Sample mean of a slice (no missing handling).
pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n - 1 denominator). NaN for fewer than 2 values.
pub fn sample_std(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return f64::NAN;
    }
    // exactly-constant series must report exactly zero so degenerate-case
    // sentinels fire instead of a float-noise statistic
    if values.windows(2).all(|w| w[0] == w[1]) {
        return 0.0;
    }
    let m = mean(values);
    let ss = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
    (ss / (n - 1) as f64).sqrt()
}

/// Pearson correlation over paired slices. NaN if fewer than 2 pairs or
/// either side is constant.
pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let mx = mean(xs);
    let my = mean(ys);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for k in 0..n {
        let dx = xs[k] - mx;
        let dy = ys[k] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return f64::NAN;
    }
    sxy / (sxx * syy).sqrt()
}
