//! Round orchestration: gather proposals, evaluate against the frozen
//! protocol, log every outcome to the trace, and curate the good pool.
//!
//! A round never edits prior records. Invalid proposals become `Rejected`
//! records with the reason; evaluated candidates become `Candidate` records
//! whether they pass or fail; the round closes with a `RoundSummary`.

pub mod agent;

pub use agent::{AgentAdapter, RemoteAgent, StubAgent};

use std::collections::BTreeSet;

use crate::combine::standardize_by_date;
use crate::dsl::{self, Expr};
use crate::error::{Error, Result};
use crate::eval::{apply_gate, evaluate_metrics, GateConfig};
use crate::grid::{pearson, Grid};
use crate::panel::{Panel, SplitConfig};
use crate::trace::{
    CandidateProposal, CandidateRecord, CandidateType, Payload, PoolDelta, ResearchState, Trace,
};

/// Everything a round needs beyond the trace itself. Gate and split must
/// match the trace header; `run_round` enforces this before any append.
pub struct RoundContext<'a> {
    pub panel: &'a Panel,
    pub targets: &'a Grid,
    pub train_dates: &'a [usize],
    pub validation_dates: &'a [usize],
    pub gate: GateConfig,
    pub split: SplitConfig,
    pub ls_quantile: f64,
    pub approved_columns: BTreeSet<String>,
    pub max_depth: usize,
    pub mechanical_top_k: usize,
    pub mechanical_batch: usize,
    pub hypothesis_batch: usize,
    pub timestamp: String,
}

#[derive(Debug, Clone, Default)]
pub struct RoundReport {
    pub round: u32,
    pub evaluated: usize,
    pub passed: Vec<String>,
    pub failed: Vec<String>,
    pub rejected: usize,
    /// Agents that errored this round (round proceeds without them).
    pub agent_errors: Vec<String>,
}

/// Mechanical variants of the top-k passed factors, ranked by train mean IC
/// (ties broken by name). Names already present in the trace are skipped.
pub fn mechanical_variants(state: &ResearchState, top_k: usize) -> Vec<CandidateProposal> {
    let mut ranked: Vec<(&str, f64)> = state
        .hold
        .iter()
        .filter_map(|name| {
            state
                .record_for(name)
                .map(|r| (name.as_str(), r.metrics_train.mean_ic))
        })
        .collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(b.0)));
    ranked.truncate(top_k);

    let taken: BTreeSet<&str> = state
        .candidates
        .iter()
        .map(|(_, r)| r.name.as_str())
        .collect();

    let mut out = Vec::new();
    for (base, _) in ranked {
        let Some(recipe) = state.recipe_for(base) else {
            continue;
        };
        let Ok(expr) = dsl::parse_recipe(recipe) else {
            continue;
        };
        let variants: [(&str, Expr, &str); 3] = [
            (
                "lag1",
                Expr::Lag(1, Box::new(expr.clone())),
                "one-day delayed variant probes signal persistence",
            ),
            (
                "ma3",
                Expr::RollMean(3, Box::new(expr.clone())),
                "three-day smoothed variant probes noise sensitivity",
            ),
            (
                "csz",
                Expr::CsZscore(Box::new(expr.clone())),
                "cross-sectionally standardized variant probes scale dependence",
            ),
        ];
        for (suffix, variant, why) in variants {
            let name = format!("{base}__{suffix}");
            if taken.contains(name.as_str()) || out.iter().any(|p: &CandidateProposal| p.name == name) {
                continue;
            }
            out.push(CandidateProposal {
                name,
                hypothesis: format!("a perturbation of '{base}' retains its predictive signal"),
                rationale: format!("{why}; derived from passed factor '{base}'"),
                candidate_type: CandidateType::Mechanical,
                recipe_text: dsl::canonical_form(&variant),
            });
        }
    }
    out
}

fn check_protocol_frozen(trace: &Trace, ctx: &RoundContext) -> Result<()> {
    match trace.header() {
        Some(Payload::Header { gate, split, .. }) => {
            if *gate != ctx.gate {
                return Err(Error::ProtocolFrozen(
                    "gate config differs from the trace header snapshot".into(),
                ));
            }
            if *split != ctx.split {
                return Err(Error::ProtocolFrozen(
                    "split config differs from the trace header snapshot".into(),
                ));
            }
            Ok(())
        }
        _ => Err(Error::CorruptTrace("trace has no header record".into())),
    }
}

/// Execute one research round against an open trace.
pub fn run_round(
    ctx: &RoundContext,
    trace: &mut Trace,
    agents: &mut [Box<dyn AgentAdapter>],
) -> Result<RoundReport> {
    check_protocol_frozen(trace, ctx)?;
    let state = trace.read_state();
    let round = state.last_round + 1;
    let mut report = RoundReport {
        round,
        ..Default::default()
    };

    let mut proposals = mechanical_variants(&state, ctx.mechanical_top_k);
    proposals.truncate(ctx.mechanical_batch);
    for agent in agents.iter_mut() {
        match agent.propose(&state, ctx.hypothesis_batch, &ctx.approved_columns) {
            Ok(mut batch) => proposals.append(&mut batch),
            Err(e) => report.agent_errors.push(format!("{}: {e}", agent.name())),
        }
    }

    let mut seen_names: BTreeSet<String> = state
        .candidates
        .iter()
        .map(|(_, r)| r.name.clone())
        .collect();

    for proposal in proposals {
        let reject = |trace: &mut Trace, proposal: CandidateProposal, reason: String| {
            trace.append(Payload::Rejected {
                round,
                proposal,
                reason,
                timestamp: ctx.timestamp.clone(),
            })
        };
        if let Err(e) = proposal.check_fields() {
            reject(trace, proposal, e.to_string())?;
            report.rejected += 1;
            continue;
        }
        if seen_names.contains(&proposal.name) {
            reject(
                trace,
                proposal.clone(),
                format!("duplicate candidate name '{}'", proposal.name),
            )?;
            report.rejected += 1;
            continue;
        }
        let expr = match dsl::parse_recipe(&proposal.recipe_text) {
            Ok(e) => e,
            Err(e) => {
                reject(trace, proposal, e.to_string())?;
                report.rejected += 1;
                continue;
            }
        };
        let validation = dsl::validate(&expr, &ctx.approved_columns, ctx.max_depth);
        if !validation.ok {
            let reasons: Vec<String> = validation
                .violations
                .iter()
                .map(|v| format!("[{}] {}", v.rule, v.message))
                .collect();
            reject(trace, proposal, reasons.join("; "))?;
            report.rejected += 1;
            continue;
        }

        let scores = dsl::evaluate(&expr, ctx.panel);
        let metrics_train = evaluate_metrics(
            &scores,
            ctx.targets,
            ctx.panel,
            ctx.train_dates,
            &ctx.gate,
            ctx.ls_quantile,
        );
        let metrics_validation = (!ctx.validation_dates.is_empty()).then(|| {
            evaluate_metrics(
                &scores,
                ctx.targets,
                ctx.panel,
                ctx.validation_dates,
                &ctx.gate,
                ctx.ls_quantile,
            )
        });
        let verdict = apply_gate(&metrics_train, &ctx.gate);
        if verdict.passed() {
            report.passed.push(proposal.name.clone());
        } else {
            report.failed.push(proposal.name.clone());
        }
        seen_names.insert(proposal.name.clone());
        report.evaluated += 1;
        trace.append(Payload::Candidate(CandidateRecord {
            round,
            name: proposal.name,
            hypothesis: proposal.hypothesis,
            rationale: proposal.rationale,
            candidate_type: proposal.candidate_type,
            recipe_text: proposal.recipe_text,
            metrics_train,
            metrics_validation,
            verdict,
            interpretation: String::new(),
            timestamp: ctx.timestamp.clone(),
        }))?;
    }

    let mut text = format!(
        "round {round}: {} evaluated, {} passed, {} rejected pre-evaluation",
        report.evaluated,
        report.passed.len(),
        report.rejected
    );
    for err in &report.agent_errors {
        text.push_str(&format!("; agent failure: {err}"));
    }
    let decision = if report.passed.is_empty() {
        "no candidates admitted to the hold pool".to_string()
    } else {
        format!("admitted to hold pool: {}", report.passed.join(", "))
    };
    trace.append(Payload::RoundSummary {
        round,
        text,
        decision,
        pool_delta: PoolDelta {
            hold_added: report.passed.clone(),
            good: Vec::new(),
        },
        timestamp: ctx.timestamp.clone(),
    })?;

    Ok(report)
}

/// Pooled Pearson correlation of two per-date-standardized score matrices
/// over cells defined in both, restricted to the given dates.
pub fn pooled_corr(a: &Grid, b: &Grid, dates: &[usize]) -> f64 {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &t in dates {
        for i in 0..a.n_assets() {
            let x = a.get(i, t);
            let y = b.get(i, t);
            if !x.is_nan() && !y.is_nan() {
                xs.push(x);
                ys.push(y);
            }
        }
    }
    if xs.len() < 2 {
        return f64::NAN;
    }
    pearson(&xs, &ys)
}

/// Greedy redundancy-controlled selection from the hold pool.
///
/// Candidates are ordered by train mean IC (descending, ties by name) and
/// admitted while their absolute pooled correlation with every member
/// already admitted stays below the threshold. The resulting ordered pool is
/// appended to the trace as a round summary.
pub fn curate_good_pool(
    trace: &mut Trace,
    panel: &Panel,
    train_dates: &[usize],
    corr_threshold: f64,
    max_size: usize,
    timestamp: &str,
) -> Result<Vec<String>> {
    let state = trace.read_state();
    let mut ranked: Vec<(String, f64)> = state
        .hold
        .iter()
        .filter_map(|name| {
            state
                .record_for(name)
                .map(|r| (name.clone(), r.metrics_train.mean_ic))
        })
        .collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));

    let mut admitted: Vec<String> = Vec::new();
    let mut admitted_grids: Vec<Grid> = Vec::new();
    let mut excluded: Vec<(String, String)> = Vec::new();
    for (name, _) in ranked {
        if admitted.len() >= max_size {
            break;
        }
        let recipe = state
            .recipe_for(&name)
            .ok_or_else(|| Error::CorruptTrace(format!("no recipe for '{name}'")))?;
        let expr = dsl::parse_recipe(recipe)?;
        let z = standardize_by_date(&dsl::evaluate(&expr, panel));
        let mut blocker: Option<(String, f64)> = None;
        for (member, grid) in admitted.iter().zip(&admitted_grids) {
            let c = pooled_corr(grid, &z, train_dates);
            if !c.is_nan() && c.abs() >= corr_threshold {
                blocker = Some((member.clone(), c));
                break;
            }
        }
        match blocker {
            None => {
                admitted.push(name);
                admitted_grids.push(z);
            }
            Some((member, c)) => {
                excluded.push((name, format!("|corr {c:.4}| with '{member}'")));
            }
        }
    }

    let mut text = format!(
        "curation: {} of {} hold-pool factors admitted (corr threshold {corr_threshold}, max {max_size})",
        admitted.len(),
        state.hold.len()
    );
    for (name, why) in &excluded {
        text.push_str(&format!("; excluded {name}: {why}"));
    }
    trace.append(Payload::RoundSummary {
        round: state.last_round,
        text,
        decision: format!("good pool: [{}]", admitted.join(", ")),
        pool_delta: PoolDelta {
            hold_added: Vec::new(),
            good: admitted.clone(),
        },
        timestamp: timestamp.to_string(),
    })?;

    Ok(admitted)
}
