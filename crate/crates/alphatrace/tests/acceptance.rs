//! Acceptance gate: one test per release criterion, each printing a
//! `[PASS] ...` line on success (visible with `cargo test -- --nocapture`).
//!
//! Oracles are independent implementations living in `tests/common`, not
//! re-exports of production code paths.

mod common;

use std::collections::BTreeSet;
use std::time::Instant;

use chrono::NaiveDate;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use alphatrace::combine::{composite_score, fit_ridge, FactorMatrix};
use alphatrace::dsl::{self, Expr};
use alphatrace::eval::{
    apply_gate, daily_ic, signal_ls_sharpe, summarize_ic, EvalMetrics, GateConfig, GateVerdict,
};
use alphatrace::grid::Grid;
use alphatrace::panel::{
    compute_derived, filter_universe, forward_return, load_panel, split, DateRange, Panel,
    SchemaMap, SplitConfig, VolumeFilterMode,
};
use alphatrace::portfolio::{
    backtest, fee_sweep, universe_benchmark, write_fee_sweep_csv, write_paths_csv,
    write_report_csv, PortfolioConfig, Weighting,
};
use alphatrace::search::{curate_good_pool, run_round, AgentAdapter, RoundContext, StubAgent};
use alphatrace::trace::{verify_integrity, IntegrityReport, Payload, Trace, TRACE_VERSION};
use alphatrace::synth::{generate_csv, SynthConfig, PLANTED_RECIPE};

use common::{close_or_both_nan, naive_eval, random_expr, random_panel};

fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

/// Criterion 1: the production evaluator agrees with an independent
/// per-cell interpreter on 1000 random (expression, panel) pairs.
#[test]
fn c1_dsl_evaluator_matches_naive_oracle() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    for case in 0..1000 {
        let panel = random_panel(&mut rng, 6, 18);
        let expr = random_expr(&mut rng, 4);
        let fast = dsl::evaluate(&expr, &panel);
        for i in 0..panel.n_assets() {
            for t in 0..panel.n_dates() {
                let slow = naive_eval(&expr, &panel, i, t);
                assert!(
                    close_or_both_nan(fast.get(i, t), slow, 1e-10),
                    "case {case} cell ({i},{t}): fast {} vs naive {} for {}",
                    fast.get(i, t),
                    slow,
                    dsl::canonical_form(&expr)
                );
            }
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 60, "took {elapsed:?}, budget 60s");
    println!("[PASS] C1 dsl-oracle: 1000 random expr/panel pairs agree with the naive interpreter ({elapsed:?})");
}

/// Criterion 2: point-in-time discipline. Evaluating on a truncated panel
/// prefix reproduces the prefix of the full evaluation exactly: no operator
/// can see past the evaluation date.
#[test]
fn c2_point_in_time_prefix_property() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2002);
    for case in 0..200 {
        let panel = random_panel(&mut rng, 5, 30);
        let expr = random_expr(&mut rng, 4);
        let full = dsl::evaluate(&expr, &panel);
        for keep in [1usize, 7, 15, 29] {
            let truncated = dsl::evaluate(&expr, &panel.prefix(keep));
            assert!(
                truncated.approx_eq(&full.prefix(keep), 0.0),
                "case {case} prefix {keep} diverges for {}",
                dsl::canonical_form(&expr)
            );
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 30, "took {elapsed:?}, budget 30s");
    println!("[PASS] C2 point-in-time: 200 random recipes are prefix-stable under truncation ({elapsed:?})");
}

/// Criterion 3: daily IC and its t-statistic match an independent
/// computation on 500 random panels at 1e-10.
#[test]
fn c3_ic_and_tstat_match_independent_computation() {
    fn oracle_pearson(xs: &[f64], ys: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for (x, y) in xs.iter().zip(ys) {
            sxy += (x - mx) * (y - my);
            sxx += (x - mx) * (x - mx);
            syy += (y - my) * (y - my);
        }
        if sxx == 0.0 || syy == 0.0 {
            f64::NAN
        } else {
            sxy / (sxx * syy).sqrt()
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(3003);
    let min_names = 5;
    for case in 0..500 {
        let n_assets = rng.gen_range(4..12);
        let n_dates = rng.gen_range(5..40);
        let panel = random_panel(&mut rng, n_assets, n_dates);
        let scores = panel.column("x").unwrap().clone();
        let targets = panel.column("y").unwrap().clone();
        let dates: Vec<usize> = (0..n_dates).collect();
        let ic = daily_ic(&scores, &targets, &dates, min_names);

        let mut oracle_ic = vec![f64::NAN; n_dates];
        for t in 0..n_dates {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for i in 0..n_assets {
                let (s, r) = (scores.get(i, t), targets.get(i, t));
                if !s.is_nan() && !r.is_nan() {
                    xs.push(s);
                    ys.push(r);
                }
            }
            if xs.len() >= min_names {
                oracle_ic[t] = oracle_pearson(&xs, &ys);
            }
        }
        for t in 0..n_dates {
            assert!(
                close_or_both_nan(ic[t], oracle_ic[t], 1e-10),
                "case {case} date {t}: {} vs {}",
                ic[t],
                oracle_ic[t]
            );
        }

        let defined: Vec<f64> = oracle_ic.iter().copied().filter(|v| !v.is_nan()).collect();
        if defined.len() >= 2 {
            let (mean_ic, tstat, degenerate) = summarize_ic(&ic).unwrap();
            let n = defined.len() as f64;
            let om = defined.iter().sum::<f64>() / n;
            let ov = defined.iter().map(|v| (v - om) * (v - om)).sum::<f64>() / (n - 1.0);
            assert!(close_or_both_nan(mean_ic, om, 1e-10), "case {case} mean");
            if ov > 0.0 {
                assert!(!degenerate);
                let ot = om / (ov.sqrt() / n.sqrt());
                assert!(
                    close_or_both_nan(tstat, ot, 1e-10),
                    "case {case} t: {tstat} vs {ot}"
                );
            }
        }
    }
    println!("[PASS] C3 ic-oracle: daily IC and t-stat agree with independent formulas on 500 panels");
}

/// Criterion 4: the ridge solver matches an independent Gauss-elimination
/// solve at 1e-8 on 100 random problems, and reduces to no-intercept OLS at
/// lambda 0 with a single factor (1e-10).
#[test]
fn c4_ridge_matches_gauss_elimination_oracle() {
    /// Gauss elimination with partial pivoting, written from the textbook
    /// definition; independent of the nalgebra LU path.
    fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
                .unwrap();
            a.swap(col, pivot);
            b.swap(col, pivot);
            for row in col + 1..n {
                let f = a[row][col] / a[col][col];
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
        let mut x = vec![0.0; n];
        for row in (0..n).rev() {
            let mut acc = b[row];
            for k in row + 1..n {
                acc -= a[row][k] * x[k];
            }
            x[row] = acc / a[row][row];
        }
        x
    }

    let window = DateRange {
        start: ymd(2020, 1, 1),
        end: ymd(2020, 12, 31),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(4004);
    for case in 0..100 {
        let q = rng.gen_range(1..5);
        let n_assets = rng.gen_range(q + 4..q + 12);
        let n_dates = rng.gen_range(5..25);
        let lambda = [0.5, 1.0, 2.0][rng.gen_range(0..3)];

        let mut named = Vec::new();
        for k in 0..q {
            let mut g = Grid::missing(n_assets, n_dates);
            for i in 0..n_assets {
                for t in 0..n_dates {
                    if rng.gen_bool(0.95) {
                        g.set(i, t, rng.gen_range(-3.0..3.0));
                    }
                }
            }
            named.push((format!("f{k}"), g));
        }
        let mut targets = Grid::missing(n_assets, n_dates);
        for i in 0..n_assets {
            for t in 0..n_dates {
                if rng.gen_bool(0.95) {
                    targets.set(i, t, rng.gen_range(-0.1..0.1));
                }
            }
        }
        let fm = FactorMatrix::from_raw(named);
        let dates: Vec<usize> = (0..n_dates).collect();
        let model = fit_ridge(&fm, &targets, &dates, lambda, window.clone(), "h".into()).unwrap();

        // independent normal equations from the same standardized rows
        let mut sts = vec![vec![0.0; q]; q];
        let mut str_ = vec![0.0; q];
        for &t in &dates {
            for i in 0..n_assets {
                let y = targets.get(i, t);
                if y.is_nan() {
                    continue;
                }
                if let Some(row) = fm.row_at(i, t) {
                    for a in 0..q {
                        str_[a] += row[a] * y;
                        for b in 0..q {
                            sts[a][b] += row[a] * row[b];
                        }
                    }
                }
            }
        }
        for k in 0..q {
            sts[k][k] += lambda;
        }
        let oracle = gauss_solve(sts, str_);
        for k in 0..q {
            assert!(
                (model.beta[k] - oracle[k]).abs() <= 1e-8 * (1.0 + oracle[k].abs()),
                "case {case} beta[{k}]: {} vs {}",
                model.beta[k],
                oracle[k]
            );
        }
    }

    // OLS reduction: q = 1, lambda = 0 -> beta = sum(xy) / sum(xx)
    let mut rng = ChaCha8Rng::seed_from_u64(4014);
    let mut g = Grid::missing(10, 15);
    let mut r = Grid::missing(10, 15);
    for i in 0..10 {
        for t in 0..15 {
            g.set(i, t, rng.gen_range(-2.0..2.0));
            r.set(i, t, rng.gen_range(-0.05..0.05));
        }
    }
    let fm = FactorMatrix::from_raw(vec![("f".into(), g)]);
    let dates: Vec<usize> = (0..15).collect();
    let model = fit_ridge(&fm, &r, &dates, 0.0, window, "h".into()).unwrap();
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for t in 0..15 {
        for i in 0..10 {
            let x = fm.grids[0].get(i, t);
            if !x.is_nan() {
                sxy += x * r.get(i, t);
                sxx += x * x;
            }
        }
    }
    assert!((model.beta[0] - sxy / sxx).abs() < 1e-10);
    println!("[PASS] C4 ridge-oracle: 100 problems match Gauss elimination at 1e-8; lambda-0 OLS reduction at 1e-10");
}

fn backtest_panel(n_assets: usize, n_days: usize, seed: u64, equal_mcap: bool) -> Panel {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("synth.csv");
    generate_csv(
        &SynthConfig {
            seed,
            n_assets,
            n_days,
            planted_ic: 0.1,
            start_date: ymd(2020, 1, 1),
        },
        &path,
    )
    .unwrap();
    let (panel, _) = load_panel(&path, &SchemaMap::default()).unwrap();
    let mut panel = compute_derived(&panel, &Default::default());
    if equal_mcap {
        let g = Grid::filled(panel.n_assets(), panel.n_dates(), 1000.0);
        panel.columns.insert("market_cap".into(), g);
    }
    panel
}

/// Criterion 5: backtest accounting. Net returns satisfy the cost identity
/// to 1e-12, net performance is monotone non-increasing in the fee over
/// {0, 5, 10, 20, 30} bps, and cap weighting with identical market caps
/// reproduces equal weighting bit-for-bit.
#[test]
fn c5_backtest_accounting_identities() {
    use alphatrace::portfolio::{
        apply_costs, group_returns, long_short, ls_turnover_series, sort_groups,
    };

    let panel = backtest_panel(15, 200, 55, false);
    let targets = forward_return(&panel, 1, 1);
    let dates: Vec<usize> = (0..panel.n_dates()).collect();
    let scores = dsl::evaluate(&dsl::parse_recipe(PLANTED_RECIPE).unwrap(), &panel);

    // cost identity at 1e-12 on the L-S stream
    let assignments = sort_groups(&scores, &panel, &dates, 5);
    let series = group_returns(&assignments, &targets, &panel, &dates, 5, Weighting::Equal);
    let gross = long_short(&series);
    let to = ls_turnover_series(&series);
    let fee = 0.0005;
    let net = apply_costs(&gross, &to, fee);
    assert!(gross.len() > 30);
    for k in 0..net.len() {
        assert!(
            (net[k] - (gross[k] - fee * to[k])).abs() <= 1e-12,
            "cost identity violated at {k}"
        );
        assert!((0.0..=2.0 + 1e-12).contains(&to[k]), "L-S turnover bounds");
    }
    assert!((to[0] - 2.0).abs() <= 1e-12, "first-day deployment is 1.0 per leg");

    // fee monotonicity on mean net return
    let fees = [0.0, 0.0005, 0.0010, 0.0020, 0.0030];
    let means: Vec<f64> = fees
        .iter()
        .map(|&f| {
            let net = apply_costs(&gross, &to, f);
            net.iter().sum::<f64>() / net.len() as f64
        })
        .collect();
    for pair in means.windows(2) {
        assert!(pair[1] < pair[0], "net mean must fall as fees rise: {means:?}");
    }

    // cap == equal bitwise when market caps are identical
    let flat = backtest_panel(15, 200, 56, true);
    let flat_targets = forward_return(&flat, 1, 1);
    let flat_scores = dsl::evaluate(&dsl::parse_recipe("log1p(col(close))").unwrap(), &flat);
    let cfg_equal = PortfolioConfig {
        n_groups: 5,
        weighting: Weighting::Equal,
        fee_one_way: fee,
    };
    let cfg_cap = PortfolioConfig {
        weighting: Weighting::Cap,
        ..cfg_equal
    };
    let a = backtest(&flat_scores, &flat_targets, &flat, &dates, &cfg_equal).unwrap();
    let b = backtest(&flat_scores, &flat_targets, &flat, &dates, &cfg_cap).unwrap();
    for (ra, rb) in a.rows.iter().zip(&b.rows) {
        assert_eq!(ra.label, rb.label);
        for (x, y) in [
            (ra.ann_ret, rb.ann_ret),
            (ra.ann_vol, rb.ann_vol),
            (ra.sharpe, rb.sharpe),
            (ra.max_dd, rb.max_dd),
            (ra.calmar, rb.calmar),
            (ra.turnover, rb.turnover),
        ] {
            assert_eq!(x.to_bits(), y.to_bits(), "cap/equal divergence in {}", ra.label);
        }
    }
    println!("[PASS] C5 backtest-accounting: cost identity 1e-12, fee monotonicity, cap==equal bitwise");
}

/// Criterion 6: gate boundary semantics. Inclusive thresholds, every
/// violated condition reported, degenerate t-stat sentinel handled.
#[test]
fn c6_gate_boundary_semantics() {
    let g = GateConfig::default();
    let base = EvalMetrics {
        mean_ic: g.tau_ic,
        ic_tstat: g.tau_t,
        ic_tstat_degenerate: false,
        ls_sharpe: 1.0,
        coverage: 1.0,
        n_days: g.min_days,
    };
    // exactly at every threshold: pass (inclusive)
    assert!(apply_gate(&base, &g).passed());

    // one ulp below each threshold: that condition fails, alone
    let below = |v: f64| f64::from_bits(v.to_bits() - 1);
    for (m, needle) in [
        (
            EvalMetrics {
                mean_ic: below(g.tau_ic),
                ..base.clone()
            },
            "mean IC",
        ),
        (
            EvalMetrics {
                ic_tstat: below(g.tau_t),
                ..base.clone()
            },
            "t-stat",
        ),
        (
            EvalMetrics {
                n_days: g.min_days - 1,
                ..base.clone()
            },
            "insufficient days",
        ),
    ] {
        match apply_gate(&m, &g) {
            GateVerdict::Fail { reasons } => {
                assert_eq!(reasons.len(), 1, "{needle}: {reasons:?}");
                assert!(reasons[0].contains(needle), "{needle}: {reasons:?}");
            }
            GateVerdict::Pass => panic!("{needle} should have failed"),
        }
    }

    // all three violated: all three reported
    let all_bad = EvalMetrics {
        mean_ic: -0.5,
        ic_tstat: -3.0,
        n_days: 2,
        ..base.clone()
    };
    match apply_gate(&all_bad, &g) {
        GateVerdict::Fail { reasons } => assert_eq!(reasons.len(), 3),
        GateVerdict::Pass => panic!("must fail"),
    }

    // degenerate +inf sentinel clears the t threshold; NaN metrics never pass
    let degenerate = EvalMetrics {
        ic_tstat: f64::INFINITY,
        ic_tstat_degenerate: true,
        ..base.clone()
    };
    assert!(apply_gate(&degenerate, &g).passed());
    let nan_metrics = EvalMetrics {
        mean_ic: f64::NAN,
        ic_tstat: f64::NAN,
        ..base
    };
    assert!(!apply_gate(&nan_metrics, &g).passed());
    println!("[PASS] C6 gate-boundary: inclusive thresholds, exhaustive reasons, sentinel handling");
}

fn sample_header(digest: &str) -> Payload {
    Payload::Header {
        version: TRACE_VERSION,
        hash_algo: "sha256".into(),
        config_digest: digest.into(),
        session_seed: 42,
        gate: GateConfig::default(),
        split: SplitConfig {
            train: DateRange {
                start: ymd(2020, 1, 1),
                end: ymd(2022, 12, 31),
            },
            validation: DateRange {
                start: ymd(2023, 1, 1),
                end: ymd(2023, 12, 31),
            },
            oos: DateRange {
                start: ymd(2024, 1, 1),
                end: ymd(2025, 12, 31),
            },
        },
        timestamp: "2026-01-01T00:00:00Z".into(),
    }
}

/// Criterion 7: tamper evidence. Any single-byte mutation of a 50-record
/// trace is detected with the correct first bad sequence number, and a
/// replayed trace is byte-identical.
#[test]
fn c7_trace_tamper_evidence() {
    use alphatrace::eval::GateVerdict;
    use alphatrace::trace::{CandidateRecord, CandidateType};

    let dir = tempfile::tempdir().unwrap();
    let build = |path: &std::path::Path| {
        let mut trace = Trace::create(path, sample_header(&"d".repeat(64))).unwrap();
        for k in 0..49u64 {
            trace
                .append(Payload::Candidate(CandidateRecord {
                    round: (k / 10 + 1) as u32,
                    name: format!("cand_{k}"),
                    hypothesis: format!("hypothesis {k}"),
                    rationale: "test record".into(),
                    candidate_type: CandidateType::Hypothesis,
                    recipe_text: "log1p(col(market_cap))".into(),
                    metrics_train: EvalMetrics {
                        mean_ic: 0.001 * k as f64,
                        ic_tstat: 0.1 * k as f64,
                        ic_tstat_degenerate: false,
                        ls_sharpe: -0.5 + 0.05 * k as f64,
                        coverage: 0.95,
                        n_days: 100 + k as usize,
                    },
                    metrics_validation: None,
                    verdict: if k % 3 == 0 {
                        GateVerdict::Pass
                    } else {
                        GateVerdict::Fail {
                            reasons: vec!["mean IC below threshold".into()],
                        }
                    },
                    interpretation: String::new(),
                    timestamp: "2026-01-01T00:00:00Z".into(),
                }))
                .unwrap();
        }
    };
    let original = dir.path().join("trace.jsonl");
    build(&original);
    let pristine = std::fs::read(&original).unwrap();

    // replay determinism: an identical build yields identical bytes
    let replay = dir.path().join("replay.jsonl");
    build(&replay);
    assert_eq!(pristine, std::fs::read(&replay).unwrap());

    // line boundaries
    let mut line_starts = vec![0usize];
    for (idx, b) in pristine.iter().enumerate() {
        if *b == b'\n' && idx + 1 < pristine.len() {
            line_starts.push(idx + 1);
        }
    }
    assert_eq!(line_starts.len(), 50);

    let tampered_path = dir.path().join("tampered.jsonl");
    for (k, &start) in line_starts.iter().enumerate() {
        let end = pristine[start..].iter().position(|b| *b == b'\n').unwrap() + start;
        // flip a byte mid-line
        let pos = start + (end - start) / 2;
        let mut tampered = pristine.clone();
        tampered[pos] ^= 0x01;
        std::fs::write(&tampered_path, &tampered).unwrap();
        match verify_integrity(&tampered_path).unwrap() {
            IntegrityReport::Bad { first_bad_seq } => {
                assert_eq!(first_bad_seq, k as u64, "mutation in line {k}")
            }
            IntegrityReport::Ok { .. } => panic!("mutation in line {k} went undetected"),
        }
        assert!(Trace::open(&tampered_path).is_err());
    }
    println!("[PASS] C7 tamper-evidence: 50 single-byte mutations detected at the right seq; replay byte-identical");
}

struct Session {
    panel: Panel,
    targets: Grid,
    train: Vec<usize>,
    validation: Vec<usize>,
    oos: Vec<usize>,
    split_cfg: SplitConfig,
}

fn planted_session(dir: &std::path::Path, seed: u64, n_assets: usize, ic: f64) -> Session {
    let csv = dir.join("synth.csv");
    generate_csv(
        &SynthConfig {
            seed,
            n_assets,
            n_days: 1250,
            planted_ic: ic,
            start_date: ymd(2020, 1, 1),
        },
        &csv,
    )
    .unwrap();
    let (raw, _) = load_panel(&csv, &SchemaMap::default()).unwrap();
    let filtered = filter_universe(&raw, 180, 0.0, VolumeFilterMode::FullHistory).unwrap();
    let panel = compute_derived(&filtered, &Default::default());
    let split_cfg = SplitConfig {
        train: DateRange {
            start: ymd(2020, 1, 1),
            end: ymd(2022, 12, 31),
        },
        validation: DateRange {
            start: ymd(2023, 1, 1),
            end: ymd(2023, 2, 28),
        },
        oos: DateRange {
            start: ymd(2023, 3, 1),
            end: ymd(2023, 6, 3),
        },
    };
    let splits = split(&panel, &split_cfg).unwrap();
    let targets = forward_return(&panel, 1, 1);
    Session {
        targets,
        train: splits.train,
        validation: splits.validation,
        oos: splits.oos,
        split_cfg,
        panel,
    }
}

fn run_session(dir: &std::path::Path, s: &Session, rounds: usize, seed: u64) -> Trace {
    let trace_path = dir.join("trace.jsonl");
    // the header's frozen protocol must equal the round context
    let header = Payload::Header {
        version: TRACE_VERSION,
        hash_algo: "sha256".into(),
        config_digest: "c".repeat(64),
        session_seed: seed,
        gate: GateConfig::default(),
        split: s.split_cfg.clone(),
        timestamp: "2026-01-01T00:00:00Z".into(),
    };
    let mut trace = Trace::create(&trace_path, header).unwrap();
    let ctx = RoundContext {
        panel: &s.panel,
        targets: &s.targets,
        train_dates: &s.train,
        validation_dates: &s.validation,
        gate: GateConfig::default(),
        split: s.split_cfg.clone(),
        ls_quantile: 0.2,
        approved_columns: s.panel.column_names().into_iter().collect(),
        max_depth: dsl::DEFAULT_MAX_DEPTH,
        mechanical_top_k: 2,
        mechanical_batch: 6,
        hypothesis_batch: 6,
        timestamp: "2026-01-01T00:00:00Z".into(),
    };
    let mut agents: Vec<Box<dyn AgentAdapter>> = vec![Box::new(StubAgent::new(
        seed,
        vec![PLANTED_RECIPE.to_string()],
    ))];
    for _ in 0..rounds {
        run_round(&ctx, &mut trace, &mut agents).unwrap();
    }
    curate_good_pool(&mut trace, &s.panel, &s.train, 0.7, 8, "2026-01-01T00:00:00Z").unwrap();
    trace
}

fn good_pool_matrix(trace: &Trace, panel: &Panel) -> FactorMatrix {
    let state = trace.read_state();
    assert!(!state.good.is_empty(), "good pool must not be empty");
    let named = state
        .good
        .iter()
        .map(|name| {
            let expr = dsl::parse_recipe(state.recipe_for(name).unwrap()).unwrap();
            (name.clone(), dsl::evaluate(&expr, panel))
        })
        .collect();
    FactorMatrix::from_raw(named)
}

/// Criterion 8: end-to-end recovery of a planted signal. A 5-round session
/// on 50 assets with planted IC 0.05 must surface the planted factor, and
/// the ridge composite's train L-S Sharpe must beat the 95th percentile of
/// 100 within-date label-permutation refits.
#[test]
fn c8_end_to_end_planted_signal_recovery() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let s = planted_session(dir.path(), 42, 50, 0.05);
    assert!(s.train.len() >= 1095, "need ~3 years of train days");
    let trace = run_session(dir.path(), &s, 5, 42);

    let state = trace.read_state();
    let planted_name = state
        .candidates
        .iter()
        .find(|(_, r)| r.recipe_text == PLANTED_RECIPE)
        .map(|(_, r)| r.name.clone())
        .expect("planted recipe proposed");
    assert!(
        state.hold.contains(&planted_name),
        "planted factor must pass the gate; hold = {:?}",
        state.hold
    );
    // curation may keep a rank-equivalent mechanical variant instead of the
    // base factor itself; the planted signal must survive in some form
    let planted_lineage_in_good = state.good.iter().any(|name| {
        state
            .recipe_for(name)
            .map(|r| r.contains(PLANTED_RECIPE))
            .unwrap_or(false)
    });
    assert!(
        planted_lineage_in_good,
        "planted signal must survive curation; good = {:?}",
        state.good
    );

    let fm = good_pool_matrix(&trace, &s.panel);
    let fit_window = s.split_cfg.train.clone();
    let model = fit_ridge(&fm, &s.targets, &s.train, 1.0, fit_window.clone(), "h".into()).unwrap();
    let composite = composite_score(&model, &fm).unwrap();
    let real_sharpe = signal_ls_sharpe(&composite, &s.targets, &s.train, 0.2);
    assert!(real_sharpe.is_finite());

    // permutation null: shuffle targets within each date, refit, rescore
    let mut rng = ChaCha8Rng::seed_from_u64(8008);
    let mut null_sharpes = Vec::with_capacity(100);
    for _ in 0..100 {
        let mut permuted = Grid::missing(s.targets.n_assets(), s.targets.n_dates());
        for &t in &s.train {
            let defined: Vec<usize> = (0..s.targets.n_assets())
                .filter(|&i| !s.targets.get(i, t).is_nan())
                .collect();
            let mut shuffled = defined.clone();
            shuffled.shuffle(&mut rng);
            for (dst, src) in defined.iter().zip(&shuffled) {
                permuted.set(*dst, t, s.targets.get(*src, t));
            }
        }
        let null_model =
            fit_ridge(&fm, &permuted, &s.train, 1.0, fit_window.clone(), "h".into()).unwrap();
        let null_composite = composite_score(&null_model, &fm).unwrap();
        null_sharpes.push(signal_ls_sharpe(&null_composite, &permuted, &s.train, 0.2));
    }
    null_sharpes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let p95 = null_sharpes[94];
    assert!(
        real_sharpe > p95,
        "real train L-S Sharpe {real_sharpe} must beat permutation p95 {p95}"
    );
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 600, "took {elapsed:?}, budget 600s");
    println!(
        "[PASS] C8 planted-recovery: planted factor recovered; Sharpe {real_sharpe:.2} > null p95 {p95:.2} ({elapsed:?})"
    );
}

/// Criterion 9: full-session determinism. Two runs from the same seeds and
/// config produce byte-identical traces, models, and report CSVs.
#[test]
fn c9_session_replay_is_byte_identical() {
    let base = tempfile::tempdir().unwrap();
    let mut artifacts: Vec<Vec<Vec<u8>>> = Vec::new();
    for run in 0..2 {
        let dir = base.path().join(format!("run{run}"));
        std::fs::create_dir_all(&dir).unwrap();
        let s = planted_session(&dir, 42, 20, 0.15);
        let trace = run_session(&dir, &s, 2, 42);
        let fm = good_pool_matrix(&trace, &s.panel);
        let model = fit_ridge(
            &fm,
            &s.targets,
            &s.train,
            1.0,
            s.split_cfg.train.clone(),
            trace.entries()[0].hash.clone(),
        )
        .unwrap();
        let model_path = dir.join("model.json");
        alphatrace::combine::write_model(&model, &model_path).unwrap();
        let composite = composite_score(&model, &fm).unwrap();
        let cfg = PortfolioConfig::default();
        let report = backtest(&composite, &s.targets, &s.panel, &s.oos, &cfg).unwrap();
        let report_path = dir.join("report_oos_equal.csv");
        write_report_csv(&report, &report_path).unwrap();
        let sweep = fee_sweep(
            &composite,
            &s.targets,
            &s.panel,
            &s.oos,
            &cfg,
            &[0.0, 0.0005, 0.003],
            &universe_benchmark(&s.targets, &s.panel),
        )
        .unwrap();
        let sweep_path = dir.join("fee_sweep.csv");
        write_fee_sweep_csv(&sweep, &sweep_path).unwrap();
        artifacts.push(
            [dir.join("trace.jsonl"), model_path, report_path, sweep_path]
                .iter()
                .map(|p| std::fs::read(p).unwrap())
                .collect(),
        );
    }
    for (k, (a, b)) in artifacts[0].iter().zip(&artifacts[1]).enumerate() {
        assert_eq!(a, b, "artifact {k} differs between replays");
    }
    println!("[PASS] C9 determinism: trace, model, and report artifacts byte-identical across replays");
}

/// Criterion 10: CSV schema fidelity. Exact headers, exact row labels, and
/// fixed six-decimal formatting with nan/inf sentinels.
#[test]
fn c10_csv_schema_fidelity() {
    fn check_value(v: &str) -> bool {
        if matches!(v, "nan" | "inf" | "-inf") {
            return true;
        }
        let digits = v.strip_prefix('-').unwrap_or(v);
        match digits.split_once('.') {
            Some((int, frac)) => {
                frac.len() == 6
                    && !int.is_empty()
                    && int.bytes().all(|b| b.is_ascii_digit())
                    && frac.bytes().all(|b| b.is_ascii_digit())
            }
            None => false,
        }
    }

    let dir = tempfile::tempdir().unwrap();
    let panel = backtest_panel(15, 200, 77, false);
    let targets = forward_return(&panel, 1, 1);
    let dates: Vec<usize> = (0..panel.n_dates()).collect();
    let scores = dsl::evaluate(&dsl::parse_recipe(PLANTED_RECIPE).unwrap(), &panel);
    let cfg = PortfolioConfig::default();

    let report = backtest(&scores, &targets, &panel, &dates, &cfg).unwrap();
    let report_path = dir.path().join("report.csv");
    write_report_csv(&report, &report_path).unwrap();
    let raw = std::fs::read_to_string(&report_path).unwrap();
    let mut lines = raw.lines();
    assert_eq!(
        lines.next().unwrap(),
        "group,AnnRet,AnnVol,Sharpe,MaxDD,Calmar,Turnover"
    );
    let rows: Vec<&str> = lines.collect();
    let labels: Vec<&str> = rows.iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(labels, vec!["Q0", "Q1", "Q2", "Q3", "Q4", "L-S"]);
    for row in &rows {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 7);
        for v in &fields[1..] {
            assert!(check_value(v), "bad report value '{v}'");
        }
    }

    let sweep = fee_sweep(
        &scores,
        &targets,
        &panel,
        &dates,
        &cfg,
        &[0.0, 0.0005, 0.001, 0.002, 0.003],
        &universe_benchmark(&targets, &panel),
    )
    .unwrap();
    let sweep_path = dir.path().join("fee_sweep.csv");
    write_fee_sweep_csv(&sweep, &sweep_path).unwrap();
    let raw = std::fs::read_to_string(&sweep_path).unwrap();
    let mut lines = raw.lines();
    assert_eq!(lines.next().unwrap(), "fee,AnnRet,AnnVol,Sharpe,Alpha");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 5);
    for row in &rows {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 5);
        fields[0].parse::<f64>().expect("fee parses");
        for v in &fields[1..] {
            assert!(check_value(v), "bad sweep value '{v}'");
        }
    }

    let paths_path = dir.path().join("paths.csv");
    write_paths_csv(&sweep, &panel, &paths_path).unwrap();
    let raw = std::fs::read_to_string(&paths_path).unwrap();
    let mut lines = raw.lines();
    assert_eq!(lines.next().unwrap(), "date,series,value");
    let mut saw_rows = false;
    for row in lines {
        saw_rows = true;
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 3);
        NaiveDate::parse_from_str(fields[0], "%Y-%m-%d").expect("ISO date");
        assert!(fields[1].starts_with("fee_"));
        assert!(check_value(fields[2]), "bad path value '{}'", fields[2]);
    }
    assert!(saw_rows);
    println!("[PASS] C10 csv-schema: headers, row labels, and 6-decimal formatting are exact");
}
