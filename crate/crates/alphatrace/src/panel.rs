//! Point-in-time market panel: ingest, universe filtering, derived columns,
//! forward-return targets, and chronological splits.
//!
//! The panel is immutable after construction. Every derived value at (asset,
//! date t) depends only on raw values at dates <= t. Missing inputs are never
//! imputed; they propagate to missing outputs.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{sample_std, Grid};

pub const RAW_COLUMNS: [&str; 6] = ["open", "high", "low", "close", "volume", "market_cap"];

pub const DERIVED_COLUMNS: [&str; 7] = [
    "ret",
    "logret",
    "relvol",
    "rvol",
    "price_to_ma",
    "range",
    "vol_pct_change",
];

/// One validated ingest row.
#[derive(Debug, Clone)]
pub struct Bar {
    pub date: NaiveDate,
    pub asset: String,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
    pub market_cap: f64,
}

impl Bar {
    /// OHLC ordering plus positivity/sign constraints. Violations are
    /// dropped at ingest, not errors.
    pub fn is_valid(&self) -> bool {
        let prices_positive =
            self.open > 0.0 && self.high > 0.0 && self.low > 0.0 && self.close > 0.0;
        let ohlc_ordered = self.low <= self.open.min(self.close)
            && self.open.max(self.close) <= self.high;
        prices_positive && ohlc_ordered && self.volume >= 0.0 && self.market_cap >= 0.0
    }
}

/// Maps the six required logical fields to CSV header names.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SchemaMap {
    pub date: String,
    pub asset: String,
    pub open: String,
    pub high: String,
    pub low: String,
    pub close: String,
    pub volume: String,
    pub market_cap: String,
}

impl Default for SchemaMap {
    fn default() -> Self {
        SchemaMap {
            date: "date".into(),
            asset: "symbol".into(),
            open: "open".into(),
            high: "high".into(),
            low: "low".into(),
            close: "close".into(),
            volume: "volume".into(),
            market_cap: "market_cap".into(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_accepted: usize,
    pub rows_dropped_invariant: usize,
    /// Per-violation detail lines (asset, date, reason).
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct Provenance {
    pub source: String,
    pub filters: String,
}

/// Rolling-window lengths for the derived columns.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DerivedWindowConfig {
    pub relvol_window: usize,
    pub rvol_window: usize,
    pub price_ma_window: usize,
}

impl Default for DerivedWindowConfig {
    fn default() -> Self {
        DerivedWindowConfig {
            relvol_window: 20,
            rvol_window: 20,
            price_ma_window: 20,
        }
    }
}

/// Inclusive date range.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d <= self.end
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct SplitConfig {
    pub train: DateRange,
    pub validation: DateRange,
    pub oos: DateRange,
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [
            ("train", &self.train),
            ("validation", &self.validation),
            ("oos", &self.oos),
        ] {
            if r.start > r.end {
                return Err(Error::BadSplit(format!("{name} range start after end")));
            }
        }
        if self.train.end >= self.validation.start || self.validation.end >= self.oos.start {
            return Err(Error::BadSplit(
                "ranges must be disjoint and ordered train < validation < oos".into(),
            ));
        }
        Ok(())
    }
}

/// Date-index partitions produced by [`split`]. Membership is by signal
/// formation date; a train target may reference prices up to
/// `exec_lag + hold` days past the train boundary (documented overhang).
#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub oos: Vec<usize>,
}

/// Immutable asset x date panel of market variables.
#[derive(Debug, Clone)]
pub struct Panel {
    pub assets: Vec<String>,
    pub dates: Vec<NaiveDate>,
    pub columns: BTreeMap<String, Grid>,
    /// 1.0 where the asset-date cell is tradable, 0.0 where masked,
    /// NaN where the asset has no observation.
    pub tradable: Grid,
    pub provenance: Provenance,
}

impl Panel {
    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn column(&self, name: &str) -> Option<&Grid> {
        self.columns.get(name)
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.keys().cloned().collect()
    }

    pub fn is_tradable(&self, asset: usize, date: usize) -> bool {
        self.tradable.get(asset, date) == 1.0
    }

    pub fn date_index(&self, d: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&d).ok()
    }

    /// Panel restricted to the first `n_dates_keep` dates. Used by the
    /// point-in-time property tests.
    pub fn prefix(&self, n_dates_keep: usize) -> Panel {
        Panel {
            assets: self.assets.clone(),
            dates: self.dates[..n_dates_keep].to_vec(),
            columns: self
                .columns
                .iter()
                .map(|(k, v)| (k.clone(), v.prefix(n_dates_keep)))
                .collect(),
            tradable: self.tradable.prefix(n_dates_keep),
            provenance: self.provenance.clone(),
        }
    }
}

fn parse_field(row: usize, field: &str, value: &str) -> Result<f64> {
    value.trim().parse::<f64>().map_err(|_| Error::BadField {
        row,
        field: field.to_string(),
        value: value.to_string(),
    })
}

/// Load a raw panel from CSV. Rows violating Bar invariants are dropped and
/// counted in the returned ingest report; duplicates and unparseable fields
/// are hard errors.
pub fn load_panel(path: &Path, schema: &SchemaMap) -> Result<(Panel, IngestReport)> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::io(path, std::io::Error::other(e.to_string())),
        _ => Error::Csv(e),
    })?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let idx_date = col(&schema.date)?;
    let idx_asset = col(&schema.asset)?;
    let idx_open = col(&schema.open)?;
    let idx_high = col(&schema.high)?;
    let idx_low = col(&schema.low)?;
    let idx_close = col(&schema.close)?;
    let idx_volume = col(&schema.volume)?;
    let idx_mcap = col(&schema.market_cap)?;

    let mut report = IngestReport::default();
    let mut bars: BTreeMap<(String, NaiveDate), Bar> = BTreeMap::new();
    for (rownum, record) in reader.records().enumerate() {
        let record = record?;
        report.rows_read += 1;
        let date_str = record.get(idx_date).unwrap_or("").trim();
        let date = NaiveDate::parse_from_str(date_str, "%Y-%m-%d").map_err(|_| Error::BadField {
            row: rownum,
            field: "date".into(),
            value: date_str.to_string(),
        })?;
        let asset = record.get(idx_asset).unwrap_or("").trim().to_string();
        let bar = Bar {
            date,
            asset: asset.clone(),
            open: parse_field(rownum, "open", record.get(idx_open).unwrap_or(""))?,
            high: parse_field(rownum, "high", record.get(idx_high).unwrap_or(""))?,
            low: parse_field(rownum, "low", record.get(idx_low).unwrap_or(""))?,
            close: parse_field(rownum, "close", record.get(idx_close).unwrap_or(""))?,
            volume: parse_field(rownum, "volume", record.get(idx_volume).unwrap_or(""))?,
            market_cap: parse_field(rownum, "market_cap", record.get(idx_mcap).unwrap_or(""))?,
        };
        if !bar.is_valid() {
            report.rows_dropped_invariant += 1;
            report
                .violations
                .push(format!("{} {} bar invariant violated", bar.asset, bar.date));
            continue;
        }
        let key = (asset.clone(), date);
        if bars.contains_key(&key) {
            return Err(Error::DuplicateKey {
                asset,
                date: date.to_string(),
            });
        }
        report.rows_accepted += 1;
        bars.insert(key, bar);
    }

    let mut assets: Vec<String> = bars.keys().map(|(a, _)| a.clone()).collect();
    assets.dedup();
    assets.sort();
    assets.dedup();
    let mut dates: Vec<NaiveDate> = bars.keys().map(|(_, d)| *d).collect();
    dates.sort();
    dates.dedup();

    let asset_idx: BTreeMap<&str, usize> =
        assets.iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();
    let date_idx: BTreeMap<NaiveDate, usize> =
        dates.iter().enumerate().map(|(t, d)| (*d, t)).collect();

    let mut columns: BTreeMap<String, Grid> = RAW_COLUMNS
        .iter()
        .map(|c| (c.to_string(), Grid::missing(assets.len(), dates.len())))
        .collect();
    let mut tradable = Grid::missing(assets.len(), dates.len());
    for ((asset, date), bar) in &bars {
        let i = asset_idx[asset.as_str()];
        let t = date_idx[date];
        columns.get_mut("open").unwrap().set(i, t, bar.open);
        columns.get_mut("high").unwrap().set(i, t, bar.high);
        columns.get_mut("low").unwrap().set(i, t, bar.low);
        columns.get_mut("close").unwrap().set(i, t, bar.close);
        columns.get_mut("volume").unwrap().set(i, t, bar.volume);
        columns.get_mut("market_cap").unwrap().set(i, t, bar.market_cap);
        tradable.set(i, t, 1.0);
    }

    Ok((
        Panel {
            assets,
            dates,
            columns,
            tradable,
            provenance: Provenance {
                source: path.display().to_string(),
                filters: String::new(),
            },
        },
        report,
    ))
}

/// Universe filter policy for the average-volume threshold.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Default)]
#[serde(rename_all = "snake_case")]
pub enum VolumeFilterMode {
    /// Average over the asset's full observed history.
    #[default]
    FullHistory,
    /// Average over the trailing window of observed rows.
    Rolling(usize),
}

/// Remove assets with too little history or too little volume, and mask the
/// first `min_history_days - 1` observed dates of each survivor as
/// non-tradable. Idempotent.
pub fn filter_universe(
    panel: &Panel,
    min_history_days: usize,
    min_avg_volume: f64,
    mode: VolumeFilterMode,
) -> Result<Panel> {
    assert!(min_history_days >= 1);
    let close = panel.column("close").expect("raw close column");
    let volume = panel.column("volume").expect("raw volume column");

    let mut keep: Vec<usize> = Vec::new();
    for i in 0..panel.n_assets() {
        let observed: Vec<usize> = (0..panel.n_dates())
            .filter(|&t| !close.get(i, t).is_nan())
            .collect();
        if observed.len() < min_history_days {
            continue;
        }
        let vols: Vec<f64> = match mode {
            VolumeFilterMode::FullHistory => {
                observed.iter().map(|&t| volume.get(i, t)).collect()
            }
            VolumeFilterMode::Rolling(w) => observed
                .iter()
                .rev()
                .take(w)
                .map(|&t| volume.get(i, t))
                .collect(),
        };
        let avg = vols.iter().filter(|v| !v.is_nan()).sum::<f64>()
            / vols.iter().filter(|v| !v.is_nan()).count().max(1) as f64;
        if avg < min_avg_volume {
            continue;
        }
        keep.push(i);
    }
    if keep.is_empty() {
        return Err(Error::EmptyUniverse);
    }

    let assets: Vec<String> = keep.iter().map(|&i| panel.assets[i].clone()).collect();
    let copy_grid = |g: &Grid| {
        let mut out = Grid::missing(keep.len(), panel.n_dates());
        for (ni, &oi) in keep.iter().enumerate() {
            for t in 0..panel.n_dates() {
                out.set(ni, t, g.get(oi, t));
            }
        }
        out
    };
    let columns: BTreeMap<String, Grid> = panel
        .columns
        .iter()
        .map(|(k, v)| (k.clone(), copy_grid(v)))
        .collect();
    let mut tradable = copy_grid(&panel.tradable);
    // Mask the warm-up period: the first min_history_days - 1 observed dates
    // of each asset carry no tradable flag.
    let close = columns.get("close").unwrap();
    for i in 0..assets.len() {
        let mut seen = 0usize;
        for t in 0..panel.n_dates() {
            if close.get(i, t).is_nan() {
                continue;
            }
            seen += 1;
            if seen < min_history_days {
                tradable.set(i, t, 0.0);
            }
        }
    }

    Ok(Panel {
        assets,
        dates: panel.dates.clone(),
        columns,
        tradable,
        provenance: Provenance {
            source: panel.provenance.source.clone(),
            filters: format!(
                "min_history_days={min_history_days} min_avg_volume={min_avg_volume} mode={mode:?}"
            ),
        },
    })
}

/// Trailing-window statistic over the last `w` dates (inclusive); missing if
/// any input in the window is missing.
fn rolling<F: Fn(&[f64]) -> f64>(series: &[f64], w: usize, f: F) -> Vec<f64> {
    let mut out = vec![f64::NAN; series.len()];
    for t in 0..series.len() {
        if t + 1 < w {
            continue;
        }
        let window = &series[t + 1 - w..=t];
        if window.iter().any(|v| v.is_nan()) {
            continue;
        }
        out[t] = f(window);
    }
    out
}

/// Add the seven derived columns. Values with insufficient history stay
/// missing; nothing is imputed.
pub fn compute_derived(panel: &Panel, windows: &DerivedWindowConfig) -> Panel {
    let n_assets = panel.n_assets();
    let n_dates = panel.n_dates();
    let close = panel.column("close").expect("raw close column");
    let high = panel.column("high").expect("raw high column");
    let low = panel.column("low").expect("raw low column");
    let volume = panel.column("volume").expect("raw volume column");

    let mut derived: BTreeMap<String, Grid> = DERIVED_COLUMNS
        .iter()
        .map(|c| (c.to_string(), Grid::missing(n_assets, n_dates)))
        .collect();

    for i in 0..n_assets {
        let c: Vec<f64> = (0..n_dates).map(|t| close.get(i, t)).collect();
        let v: Vec<f64> = (0..n_dates).map(|t| volume.get(i, t)).collect();

        let mut ret = vec![f64::NAN; n_dates];
        let mut logret = vec![f64::NAN; n_dates];
        let mut vol_pct = vec![f64::NAN; n_dates];
        for t in 1..n_dates {
            if !c[t].is_nan() && !c[t - 1].is_nan() {
                ret[t] = c[t] / c[t - 1] - 1.0;
                logret[t] = c[t].ln() - c[t - 1].ln();
            }
            if !v[t].is_nan() && !v[t - 1].is_nan() && v[t - 1] != 0.0 {
                vol_pct[t] = v[t] / v[t - 1] - 1.0;
            }
        }

        let vol_ma = rolling(&v, windows.relvol_window, crate::grid::mean);
        let mut relvol = vec![f64::NAN; n_dates];
        for t in 0..n_dates {
            if !v[t].is_nan() && !vol_ma[t].is_nan() && vol_ma[t] != 0.0 {
                relvol[t] = v[t] / vol_ma[t];
            }
        }

        let rvol = rolling(&logret, windows.rvol_window, sample_std);

        let close_ma = rolling(&c, windows.price_ma_window, crate::grid::mean);
        let mut price_to_ma = vec![f64::NAN; n_dates];
        for t in 0..n_dates {
            if !c[t].is_nan() && !close_ma[t].is_nan() && close_ma[t] != 0.0 {
                price_to_ma[t] = c[t] / close_ma[t];
            }
        }

        let mut range = vec![f64::NAN; n_dates];
        for t in 0..n_dates {
            let (h, l) = (high.get(i, t), low.get(i, t));
            if !h.is_nan() && !l.is_nan() && !c[t].is_nan() && c[t] != 0.0 {
                range[t] = (h - l) / c[t];
            }
        }

        for (name, series) in [
            ("ret", &ret),
            ("logret", &logret),
            ("relvol", &relvol),
            ("rvol", &rvol),
            ("price_to_ma", &price_to_ma),
            ("range", &range),
            ("vol_pct_change", &vol_pct),
        ] {
            let g = derived.get_mut(name).unwrap();
            for t in 0..n_dates {
                g.set(i, t, series[t]);
            }
        }
    }

    let mut columns = panel.columns.clone();
    columns.extend(derived);
    Panel {
        assets: panel.assets.clone(),
        dates: panel.dates.clone(),
        columns,
        tradable: panel.tradable.clone(),
        provenance: panel.provenance.clone(),
    }
}

/// Forward-return target: close(t + exec_lag + hold) / close(t + exec_lag) - 1
/// at formation date t; missing if either price is unavailable.
pub fn forward_return(panel: &Panel, exec_lag: usize, hold: usize) -> Grid {
    assert!(exec_lag >= 1 && hold >= 1);
    let close = panel.column("close").expect("raw close column");
    let n_dates = panel.n_dates();
    let mut out = Grid::missing(panel.n_assets(), n_dates);
    for i in 0..panel.n_assets() {
        for t in 0..n_dates {
            let entry_t = t + exec_lag;
            let exit_t = t + exec_lag + hold;
            if exit_t >= n_dates {
                continue;
            }
            let entry = close.get(i, entry_t);
            let exit = close.get(i, exit_t);
            if !entry.is_nan() && !exit.is_nan() && entry != 0.0 {
                out.set(i, t, exit / entry - 1.0);
            }
        }
    }
    out
}

/// Partition date indices by signal-formation date.
pub fn split(panel: &Panel, cfg: &SplitConfig) -> Result<Splits> {
    cfg.validate()?;
    let pick = |r: &DateRange| -> Vec<usize> {
        panel
            .dates
            .iter()
            .enumerate()
            .filter(|(_, d)| r.contains(**d))
            .map(|(t, _)| t)
            .collect()
    };
    let splits = Splits {
        train: pick(&cfg.train),
        validation: pick(&cfg.validation),
        oos: pick(&cfg.oos),
    };
    if splits.train.is_empty() {
        return Err(Error::EmptyPartition("train"));
    }
    if splits.validation.is_empty() {
        return Err(Error::EmptyPartition("validation"));
    }
    if splits.oos.is_empty() {
        return Err(Error::EmptyPartition("oos"));
    }
    Ok(splits)
}

fn fmt_cell(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

/// Write the panel to a single wide CSV plus a small JSON sidecar with
/// provenance. Round-trips exactly through [`read_cache`].
pub fn write_cache(panel: &Panel, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Csv(e))?;
    let col_names = panel.column_names();
    let mut header = vec!["date".to_string(), "asset".to_string(), "tradable".to_string()];
    header.extend(col_names.iter().cloned());
    w.write_record(&header)?;
    for t in 0..panel.n_dates() {
        for i in 0..panel.n_assets() {
            let mut rec = vec![
                panel.dates[t].to_string(),
                panel.assets[i].clone(),
                fmt_cell(panel.tradable.get(i, t)),
            ];
            for c in &col_names {
                rec.push(fmt_cell(panel.columns[c].get(i, t)));
            }
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;

    let meta_path = path.with_extension("meta.json");
    let meta = serde_json::json!({
        "version": 1,
        "columns": col_names,
        "provenance": panel.provenance,
    });
    let mut f = std::fs::File::create(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    f.write_all(serde_json::to_string_pretty(&meta).unwrap().as_bytes())
        .map_err(|e| Error::io(&meta_path, e))?;
    Ok(())
}

/// Read a panel cache written by [`write_cache`].
pub fn read_cache(path: &Path) -> Result<Panel> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::io(path, std::io::Error::other(e.to_string())),
        _ => Error::Csv(e),
    })?;
    let headers = reader.headers()?.clone();
    let col_names: Vec<String> = headers.iter().skip(3).map(|s| s.to_string()).collect();

    let mut rows: Vec<(NaiveDate, String, Vec<f64>)> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let date = NaiveDate::parse_from_str(record.get(0).unwrap_or(""), "%Y-%m-%d")
            .map_err(|_| Error::CorruptTrace("bad date in panel cache".into()))?;
        let asset = record.get(1).unwrap_or("").to_string();
        let vals: Vec<f64> = (2..record.len())
            .map(|k| {
                let s = record.get(k).unwrap_or("");
                if s.is_empty() {
                    f64::NAN
                } else {
                    s.parse().unwrap_or(f64::NAN)
                }
            })
            .collect();
        rows.push((date, asset, vals));
    }

    let mut assets: Vec<String> = rows.iter().map(|(_, a, _)| a.clone()).collect();
    assets.sort();
    assets.dedup();
    let mut dates: Vec<NaiveDate> = rows.iter().map(|(d, _, _)| *d).collect();
    dates.sort();
    dates.dedup();
    let asset_idx: BTreeMap<&str, usize> =
        assets.iter().enumerate().map(|(i, a)| (a.as_str(), i)).collect();
    let date_idx: BTreeMap<NaiveDate, usize> =
        dates.iter().enumerate().map(|(t, d)| (*d, t)).collect();

    let mut columns: BTreeMap<String, Grid> = col_names
        .iter()
        .map(|c| (c.clone(), Grid::missing(assets.len(), dates.len())))
        .collect();
    let mut tradable = Grid::missing(assets.len(), dates.len());
    for (date, asset, vals) in &rows {
        let i = asset_idx[asset.as_str()];
        let t = date_idx[date];
        tradable.set(i, t, vals[0]);
        for (k, c) in col_names.iter().enumerate() {
            columns.get_mut(c).unwrap().set(i, t, vals[k + 1]);
        }
    }

    let meta_path = path.with_extension("meta.json");
    let provenance = std::fs::read_to_string(&meta_path)
        .ok()
        .and_then(|s| serde_json::from_str::<serde_json::Value>(&s).ok())
        .and_then(|v| serde_json::from_value(v["provenance"].clone()).ok())
        .unwrap_or_default();

    Ok(Panel {
        assets,
        dates,
        columns,
        tradable,
        provenance,
    })
}
