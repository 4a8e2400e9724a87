//! Constrained symbolic factor DSL.
//!
//! A recipe is an expression tree over approved point-in-time panel columns.
//! Forward-looking operators are unrepresentable by construction: every
//! operator either acts within a date (cross-sectional) or looks strictly
//! backward in time (lag, rolling, difference).
//!
//! Concrete syntax is function-call form, e.g.
//! `cs_rank(lincomb(-0.6, log1p(col(market_cap)), 0.5, roll_mean(10, col(range))))`.
//! The grammar is documented in `docs/dsl-grammar.md`.

mod evaluate;
mod parser;

pub use evaluate::evaluate;
pub use parser::parse_recipe;

use serde::{Deserialize, Serialize};

use std::collections::BTreeSet;
use std::fmt::Write;

pub const DEFAULT_MAX_DEPTH: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Column(String),
    CsRank(Box<Expr>),
    CsZscore(Box<Expr>),
    Lag(usize, Box<Expr>),
    RollMean(usize, Box<Expr>),
    RollStd(usize, Box<Expr>),
    Diff(usize, Box<Expr>),
    PctChange(usize, Box<Expr>),
    Log1p(Box<Expr>),
    Abs(Box<Expr>),
    Clip(f64, f64, Box<Expr>),
    LinComb(Vec<(f64, Expr)>),
}

impl Expr {
    pub fn depth(&self) -> usize {
        match self {
            Expr::Column(_) => 1,
            Expr::CsRank(c)
            | Expr::CsZscore(c)
            | Expr::Lag(_, c)
            | Expr::RollMean(_, c)
            | Expr::RollStd(_, c)
            | Expr::Diff(_, c)
            | Expr::PctChange(_, c)
            | Expr::Log1p(c)
            | Expr::Abs(c)
            | Expr::Clip(_, _, c) => 1 + c.depth(),
            Expr::LinComb(terms) => {
                1 + terms.iter().map(|(_, e)| e.depth()).max().unwrap_or(0)
            }
        }
    }

    /// True for lag / rolling / difference operators.
    pub fn is_time_series_op(&self) -> bool {
        matches!(
            self,
            Expr::Lag(..)
                | Expr::RollMean(..)
                | Expr::RollStd(..)
                | Expr::Diff(..)
                | Expr::PctChange(..)
        )
    }

    /// True for the nonlinear operator family.
    pub fn is_nonlinear_op(&self) -> bool {
        matches!(self, Expr::Log1p(_) | Expr::Abs(_) | Expr::Clip(..))
    }

    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Column(_) => vec![],
            Expr::CsRank(c)
            | Expr::CsZscore(c)
            | Expr::Lag(_, c)
            | Expr::RollMean(_, c)
            | Expr::RollStd(_, c)
            | Expr::Diff(_, c)
            | Expr::PctChange(_, c)
            | Expr::Log1p(c)
            | Expr::Abs(c)
            | Expr::Clip(_, _, c) => vec![c],
            Expr::LinComb(terms) => terms.iter().map(|(_, e)| e).collect(),
        }
    }

    fn op_name(&self) -> &'static str {
        match self {
            Expr::Column(_) => "col",
            Expr::CsRank(_) => "cs_rank",
            Expr::CsZscore(_) => "cs_zscore",
            Expr::Lag(..) => "lag",
            Expr::RollMean(..) => "roll_mean",
            Expr::RollStd(..) => "roll_std",
            Expr::Diff(..) => "diff",
            Expr::PctChange(..) => "pct_change",
            Expr::Log1p(_) => "log1p",
            Expr::Abs(_) => "abs",
            Expr::Clip(..) => "clip",
            Expr::LinComb(_) => "lincomb",
        }
    }
}

/// A named recipe: the symbolic parameter of a factor.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Recipe {
    pub name: String,
    pub source_text: String,
}

impl Recipe {
    pub fn new(name: impl Into<String>, expr: &Expr) -> Recipe {
        Recipe {
            name: name.into(),
            source_text: canonical_form(expr),
        }
    }

    pub fn expr(&self) -> crate::error::Result<Expr> {
        parse_recipe(&self.source_text)
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Violation {
    pub rule: &'static str,
    pub message: String,
    pub node_path: String,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
    /// Forward-looking operators are unrepresentable in the grammar, so this
    /// is a structural guarantee rather than a runtime check.
    pub point_in_time_by_construction: bool,
}

/// Check a recipe against the approved-column list and structural rules.
pub fn validate(
    expr: &Expr,
    allowed_columns: &BTreeSet<String>,
    max_depth: usize,
) -> ValidationReport {
    let mut violations = Vec::new();
    let mut has_transform = false;

    fn walk(
        e: &Expr,
        path: &str,
        allowed: &BTreeSet<String>,
        violations: &mut Vec<Violation>,
        has_transform: &mut bool,
    ) {
        let here = if path.is_empty() {
            e.op_name().to_string()
        } else {
            format!("{path}/{}", e.op_name())
        };
        if e.is_time_series_op() || e.is_nonlinear_op() {
            *has_transform = true;
        }
        match e {
            Expr::Column(name) => {
                if !allowed.contains(name) {
                    violations.push(Violation {
                        rule: "approved-columns",
                        message: format!("column '{name}' is not an approved point-in-time column"),
                        node_path: here.clone(),
                    });
                }
            }
            Expr::Lag(n, _)
            | Expr::RollMean(n, _)
            | Expr::RollStd(n, _)
            | Expr::Diff(n, _)
            | Expr::PctChange(n, _) => {
                if *n < 1 {
                    violations.push(Violation {
                        rule: "window-min",
                        message: format!("window/lag parameter must be >= 1, got {n}"),
                        node_path: here.clone(),
                    });
                }
            }
            Expr::Clip(lo, hi, _) => {
                if !(lo < hi) {
                    violations.push(Violation {
                        rule: "clip-bounds",
                        message: format!("clip bounds must satisfy lo < hi, got [{lo}, {hi}]"),
                        node_path: here.clone(),
                    });
                }
            }
            _ => {}
        }
        for (k, child) in e.children().iter().enumerate() {
            walk(child, &format!("{here}/{k}"), allowed, violations, has_transform);
        }
    }
    walk(expr, "", allowed_columns, &mut violations, &mut has_transform);

    if !has_transform {
        violations.push(Violation {
            rule: "needs-transform",
            message: "recipe must include at least one time-series or nonlinear transformation"
                .into(),
            node_path: expr.op_name().to_string(),
        });
    }
    let depth = expr.depth();
    if depth > max_depth {
        violations.push(Violation {
            rule: "max-depth",
            message: format!("tree depth {depth} exceeds max_depth {max_depth}"),
            node_path: expr.op_name().to_string(),
        });
    }

    ValidationReport {
        ok: violations.is_empty(),
        violations,
        point_in_time_by_construction: true,
    }
}

/// Deterministic single-line textual form. Numeric parameters are rendered
/// with full round-trip precision so `parse_recipe(canonical_form(e)) == e`.
pub fn canonical_form(expr: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, expr);
    s
}

fn write_expr(out: &mut String, e: &Expr) {
    match e {
        Expr::Column(name) => {
            write!(out, "col({name})").unwrap();
        }
        Expr::CsRank(c) | Expr::CsZscore(c) | Expr::Log1p(c) | Expr::Abs(c) => {
            write!(out, "{}(", e.op_name()).unwrap();
            write_expr(out, c);
            out.push(')');
        }
        Expr::Lag(n, c)
        | Expr::RollMean(n, c)
        | Expr::RollStd(n, c)
        | Expr::Diff(n, c)
        | Expr::PctChange(n, c) => {
            write!(out, "{}({n}, ", e.op_name()).unwrap();
            write_expr(out, c);
            out.push(')');
        }
        Expr::Clip(lo, hi, c) => {
            write!(out, "clip({lo}, {hi}, ").unwrap();
            write_expr(out, c);
            out.push(')');
        }
        Expr::LinComb(terms) => {
            out.push_str("lincomb(");
            for (k, (w, child)) in terms.iter().enumerate() {
                if k > 0 {
                    out.push_str(", ");
                }
                write!(out, "{w}, ").unwrap();
                write_expr(out, child);
            }
            out.push(')');
        }
    }
}
