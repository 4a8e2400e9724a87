//! Command-line entry point for the factor discovery engine.
//!
//! Exit codes: 0 success, 2 configuration or recipe error, 3 data or
//! dependency error, 4 protocol-freeze violation, 5 trace integrity failure.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Parser, Subcommand};

use alphatrace::combine::{composite_score, fit_ridge, read_model, write_model, FactorMatrix};
use alphatrace::config::{AgentConfig, SessionConfig};
use alphatrace::dsl;
use alphatrace::panel::{
    compute_derived, filter_universe, forward_return, load_panel, read_cache, split, write_cache,
    Panel, Splits, VolumeFilterMode,
};
use alphatrace::portfolio::{
    backtest, fee_sweep, universe_benchmark, write_fee_sweep_csv, write_paths_csv,
    write_report_csv, PortfolioConfig, Weighting,
};
use alphatrace::search::{
    curate_good_pool, run_round, AgentAdapter, RemoteAgent, RoundContext, StubAgent,
};
use alphatrace::synth::{generate_csv, SynthConfig};
use alphatrace::trace::{verify_integrity, IntegrityReport, Payload, Trace, TRACE_VERSION};
use alphatrace::{Error, Result};

#[derive(Parser)]
#[command(name = "alphatrace", version, about = "Deterministic, auditable factor discovery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a default session config TOML.
    InitConfig {
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate deterministic synthetic market data with a planted signal.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        assets: usize,
        #[arg(long, default_value_t = 1200)]
        days: usize,
        #[arg(long, default_value_t = 0.05)]
        ic: f64,
        #[arg(long, default_value = "2020-01-01")]
        start: NaiveDate,
    },
    /// Load, validate, filter, and cache the panel with derived columns.
    Ingest {
        #[arg(long)]
        config: PathBuf,
    },
    /// Execute one research round against the session trace.
    Round {
        #[arg(long)]
        config: PathBuf,
    },
    /// Curate the hold pool into the redundancy-controlled good pool.
    Curate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Fit the ridge combination model over the good pool.
    Combine {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run quintile backtests of the composite score on every window.
    Backtest {
        #[arg(long)]
        config: PathBuf,
    },
    /// Fee sensitivity of the out-of-sample long-short portfolio.
    FeeSweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the backtest and fee-sweep tables (requires prior backtest).
    Report {
        #[arg(long)]
        config: PathBuf,
    },
    /// Recompute the hash chain of a trace file.
    VerifyTrace {
        #[arg(long)]
        trace: PathBuf,
    },
    /// Parse and validate a recipe against the approved columns.
    ValidateRecipe {
        #[arg(long)]
        recipe: String,
        /// Optional config; approved columns come from its panel cache.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::BadSplit(_)
        | Error::Parse { .. }
        | Error::InvalidRecipe(_) => 2,
        Error::ProtocolFrozen(_) => 4,
        Error::TraceIntegrity { .. } | Error::CorruptTrace(_) | Error::TraceAppend(_) => 5,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn load_config(path: &Path) -> Result<SessionConfig> {
    let cfg = SessionConfig::load(path)?;
    cfg.validate()?;
    Ok(cfg)
}

fn cache_path(cfg: &SessionConfig) -> PathBuf {
    cfg.output_dir.join("panel_cache.csv")
}

fn trace_path(cfg: &SessionConfig) -> PathBuf {
    cfg.output_dir.join("trace.jsonl")
}

fn model_path(cfg: &SessionConfig) -> PathBuf {
    cfg.output_dir.join("model.json")
}

fn load_cached_panel(cfg: &SessionConfig) -> Result<Panel> {
    let path = cache_path(cfg);
    if !path.exists() {
        return Err(Error::MissingArtifact(format!(
            "panel cache {} not found; run `alphatrace ingest` first",
            path.display()
        )));
    }
    read_cache(&path)
}

/// Open the session trace, creating it with a header on first use, and
/// enforce that the frozen config digest still matches.
fn open_session_trace(cfg: &SessionConfig) -> Result<Trace> {
    let path = trace_path(cfg);
    if !path.exists() {
        return Trace::create(
            &path,
            Payload::Header {
                version: TRACE_VERSION,
                hash_algo: "sha256".into(),
                config_digest: cfg.digest(),
                session_seed: cfg.session_seed,
                gate: cfg.gate,
                split: cfg.split.clone(),
                timestamp: cfg.timestamp.clone(),
            },
        );
    }
    let trace = Trace::open(&path)?;
    match trace.header() {
        Some(Payload::Header { config_digest, .. }) => {
            if *config_digest != cfg.digest() {
                return Err(Error::ProtocolFrozen(format!(
                    "config digest {} does not match the trace header {}; \
                     the session protocol is frozen at trace creation",
                    cfg.digest(),
                    config_digest
                )));
            }
        }
        _ => return Err(Error::CorruptTrace("trace has no header record".into())),
    }
    Ok(trace)
}

fn session_splits(cfg: &SessionConfig, panel: &Panel) -> Result<Splits> {
    split(panel, &cfg.split)
}

fn build_agents(cfg: &SessionConfig) -> Vec<Box<dyn AgentAdapter>> {
    cfg.agents
        .iter()
        .map(|a| -> Box<dyn AgentAdapter> {
            match a {
                AgentConfig::Stub { bias_recipes } => {
                    Box::new(StubAgent::new(cfg.session_seed, bias_recipes.clone()))
                }
                AgentConfig::Remote {
                    endpoint,
                    model,
                    api_key_env,
                    timeout_secs,
                } => Box::new(RemoteAgent {
                    endpoint: endpoint.clone(),
                    model: model.clone(),
                    api_key_env: api_key_env.clone(),
                    timeout_secs: *timeout_secs,
                    audit_log: Some(cfg.output_dir.join("remote_agent.log")),
                }),
            }
        })
        .collect()
}

/// Good-pool factor matrix evaluated over the cached panel.
fn good_pool_matrix(trace: &Trace, panel: &Panel) -> Result<FactorMatrix> {
    let state = trace.read_state();
    if state.good.is_empty() {
        return Err(Error::MissingArtifact(
            "good pool is empty; run `alphatrace curate` after at least one passing round".into(),
        ));
    }
    let mut named = Vec::new();
    for name in &state.good {
        let recipe = state
            .recipe_for(name)
            .ok_or_else(|| Error::CorruptTrace(format!("no recipe for '{name}'")))?;
        let expr = dsl::parse_recipe(recipe)?;
        named.push((name.clone(), dsl::evaluate(&expr, panel)));
    }
    Ok(FactorMatrix::from_raw(named))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::InitConfig { out } => {
            SessionConfig::default().save(&out)?;
            println!("wrote default config to {}", out.display());
            Ok(())
        }
        Command::Synth {
            out,
            seed,
            assets,
            days,
            ic,
            start,
        } => {
            if !(0.0..=0.3).contains(&ic) {
                return Err(Error::Config("planted ic must lie in [0, 0.3]".into()));
            }
            generate_csv(
                &SynthConfig {
                    seed,
                    n_assets: assets,
                    n_days: days,
                    planted_ic: ic,
                    start_date: start,
                },
                &out,
            )?;
            println!("wrote synthetic panel ({assets} assets x {days} days) to {}", out.display());
            Ok(())
        }
        Command::Ingest { config } => {
            let cfg = load_config(&config)?;
            std::fs::create_dir_all(&cfg.output_dir)
                .map_err(|e| Error::io(&cfg.output_dir, e))?;
            let (raw, report) = load_panel(&cfg.data_path, &cfg.schema)?;
            let mode = match cfg.filter.rolling_volume_window {
                Some(w) => VolumeFilterMode::Rolling(w),
                None => VolumeFilterMode::FullHistory,
            };
            let filtered = filter_universe(
                &raw,
                cfg.filter.min_history_days,
                cfg.filter.min_avg_volume,
                mode,
            )?;
            let panel = compute_derived(&filtered, &cfg.derived_windows);
            // fail early if the split leaves any partition empty
            session_splits(&cfg, &panel)?;
            write_cache(&panel, &cache_path(&cfg))?;
            println!(
                "ingested {} rows ({} dropped on bar invariants), {} assets x {} dates cached to {}",
                report.rows_read,
                report.rows_dropped_invariant,
                panel.n_assets(),
                panel.n_dates(),
                cache_path(&cfg).display()
            );
            for v in report.violations.iter().take(10) {
                println!("  dropped: {v}");
            }
            Ok(())
        }
        Command::Round { config } => {
            let cfg = load_config(&config)?;
            let panel = load_cached_panel(&cfg)?;
            let mut trace = open_session_trace(&cfg)?;
            let state = trace.read_state();
            if state.last_round >= cfg.round_budget {
                return Err(Error::Config(format!(
                    "round budget exhausted: {} rounds completed of {}",
                    state.last_round, cfg.round_budget
                )));
            }
            let targets = forward_return(&panel, cfg.exec_lag, cfg.hold);
            let splits = session_splits(&cfg, &panel)?;
            let ctx = RoundContext {
                panel: &panel,
                targets: &targets,
                train_dates: &splits.train,
                validation_dates: &splits.validation,
                gate: cfg.gate,
                split: cfg.split.clone(),
                ls_quantile: cfg.ls_quantile,
                approved_columns: panel.column_names().into_iter().collect(),
                max_depth: dsl::DEFAULT_MAX_DEPTH,
                mechanical_top_k: cfg.mechanical_top_k,
                mechanical_batch: cfg.mechanical_batch,
                hypothesis_batch: cfg.hypothesis_batch,
                timestamp: cfg.timestamp.clone(),
            };
            let mut agents = build_agents(&cfg);
            let report = run_round(&ctx, &mut trace, &mut agents)?;
            println!(
                "round {}: {} evaluated, {} passed ({}), {} rejected",
                report.round,
                report.evaluated,
                report.passed.len(),
                report.passed.join(", "),
                report.rejected
            );
            for e in &report.agent_errors {
                eprintln!("warning: agent failed, round proceeded without it: {e}");
            }
            Ok(())
        }
        Command::Curate { config } => {
            let cfg = load_config(&config)?;
            let panel = load_cached_panel(&cfg)?;
            let mut trace = open_session_trace(&cfg)?;
            let splits = session_splits(&cfg, &panel)?;
            let good = curate_good_pool(
                &mut trace,
                &panel,
                &splits.train,
                cfg.curation_corr_threshold,
                cfg.curation_max_size,
                &cfg.timestamp,
            )?;
            println!("good pool ({}): {}", good.len(), good.join(", "));
            Ok(())
        }
        Command::Combine { config } => {
            let cfg = load_config(&config)?;
            let panel = load_cached_panel(&cfg)?;
            let trace = open_session_trace(&cfg)?;
            let fm = good_pool_matrix(&trace, &panel)?;
            let targets = forward_return(&panel, cfg.exec_lag, cfg.hold);
            let splits = session_splits(&cfg, &panel)?;
            let header_hash = trace.entries()[0].hash.clone();
            let model = fit_ridge(
                &fm,
                &targets,
                &splits.train,
                cfg.ridge_lambda,
                cfg.split.train.clone(),
                header_hash,
            )?;
            write_model(&model, &model_path(&cfg))?;
            println!("fit ridge over {} factors (lambda {}):", fm.q(), cfg.ridge_lambda);
            for (name, b) in model.factor_names.iter().zip(&model.beta) {
                println!("  {name}: {b:.6}");
            }
            println!("model written to {}", model_path(&cfg).display());
            Ok(())
        }
        Command::Backtest { config } => {
            let cfg = load_config(&config)?;
            let panel = load_cached_panel(&cfg)?;
            let trace = open_session_trace(&cfg)?;
            let model = read_model(&model_path(&cfg)).map_err(|_| {
                Error::MissingArtifact(format!(
                    "model {} not found; run `alphatrace combine` first",
                    model_path(&cfg).display()
                ))
            })?;
            let fm = good_pool_matrix(&trace, &panel)?;
            let scores = composite_score(&model, &fm)?;
            let targets = forward_return(&panel, cfg.exec_lag, cfg.hold);
            let splits = session_splits(&cfg, &panel)?;
            for (window, dates) in [
                ("train", &splits.train),
                ("validation", &splits.validation),
                ("oos", &splits.oos),
            ] {
                for weighting in [Weighting::Equal, Weighting::Cap] {
                    let wname = match weighting {
                        Weighting::Equal => "equal",
                        Weighting::Cap => "cap",
                    };
                    let pcfg = PortfolioConfig {
                        weighting,
                        ..cfg.portfolio
                    };
                    let path = cfg.output_dir.join(format!("report_{window}_{wname}.csv"));
                    match backtest(&scores, &targets, &panel, dates, &pcfg) {
                        Ok(report) => {
                            write_report_csv(&report, &path)?;
                            println!("wrote {}", path.display());
                        }
                        Err(Error::TooFewObservations(n)) => {
                            println!(
                                "skipped {window}/{wname}: only {n} portfolio observations (need 30)"
                            );
                        }
                        Err(e) => return Err(e),
                    }
                }
            }
            Ok(())
        }
        Command::FeeSweep { config } => {
            let cfg = load_config(&config)?;
            let panel = load_cached_panel(&cfg)?;
            let trace = open_session_trace(&cfg)?;
            let model = read_model(&model_path(&cfg)).map_err(|_| {
                Error::MissingArtifact(format!(
                    "model {} not found; run `alphatrace combine` first",
                    model_path(&cfg).display()
                ))
            })?;
            let fm = good_pool_matrix(&trace, &panel)?;
            let scores = composite_score(&model, &fm)?;
            let targets = forward_return(&panel, cfg.exec_lag, cfg.hold);
            let splits = session_splits(&cfg, &panel)?;
            let benchmark = universe_benchmark(&targets, &panel);
            let sweep = fee_sweep(
                &scores,
                &targets,
                &panel,
                &splits.oos,
                &cfg.portfolio,
                &cfg.fee_sweep,
                &benchmark,
            )?;
            let sweep_path = cfg.output_dir.join("fee_sweep.csv");
            let paths_path = cfg.output_dir.join("fee_paths.csv");
            write_fee_sweep_csv(&sweep, &sweep_path)?;
            write_paths_csv(&sweep, &panel, &paths_path)?;
            println!("wrote {} and {}", sweep_path.display(), paths_path.display());
            Ok(())
        }
        Command::Report { config } => {
            let cfg = load_config(&config)?;
            let mut any = false;
            for window in ["train", "validation", "oos"] {
                for wname in ["equal", "cap"] {
                    let path = cfg.output_dir.join(format!("report_{window}_{wname}.csv"));
                    if !path.exists() {
                        continue;
                    }
                    any = true;
                    println!("== {window} / {wname} weighting ==");
                    print!("{}", std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?);
                    println!();
                }
            }
            let sweep = cfg.output_dir.join("fee_sweep.csv");
            if sweep.exists() {
                any = true;
                println!("== fee sensitivity (out-of-sample L-S) ==");
                print!("{}", std::fs::read_to_string(&sweep).map_err(|e| Error::io(&sweep, e))?);
            }
            if !any {
                return Err(Error::MissingArtifact(
                    "no backtest artifacts found; run `alphatrace backtest` first".into(),
                ));
            }
            Ok(())
        }
        Command::VerifyTrace { trace } => match verify_integrity(&trace)? {
            IntegrityReport::Ok {
                records,
                truncated_tail,
            } => {
                println!(
                    "trace OK: {records} records{}",
                    if truncated_tail {
                        ", trailing partial line dropped"
                    } else {
                        ""
                    }
                );
                Ok(())
            }
            IntegrityReport::Bad { first_bad_seq } => Err(Error::TraceIntegrity {
                seq: first_bad_seq,
                message: "hash chain mismatch".into(),
            }),
        },
        Command::ValidateRecipe { recipe, config } => {
            let approved: BTreeSet<String> = match config {
                Some(path) => {
                    let cfg = load_config(&path)?;
                    load_cached_panel(&cfg)?.column_names().into_iter().collect()
                }
                None => [
                    "open", "high", "low", "close", "volume", "market_cap", "ret", "logret",
                    "relvol", "rvol", "price_to_ma", "range", "vol_pct_change",
                ]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            };
            let expr = dsl::parse_recipe(&recipe)?;
            let report = dsl::validate(&expr, &approved, dsl::DEFAULT_MAX_DEPTH);
            println!("{}", serde_json::to_string_pretty(&report)?);
            if !report.ok {
                let reasons: Vec<String> = report
                    .violations
                    .iter()
                    .map(|v| format!("[{}] {}", v.rule, v.message))
                    .collect();
                return Err(Error::InvalidRecipe(reasons.join("; ")));
            }
            println!("canonical form: {}", dsl::canonical_form(&expr));
            Ok(())
        }
    }
}
