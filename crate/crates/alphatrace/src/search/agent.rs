//! Candidate sources: the agent adapter contract, a deterministic stub
//! sampler, and a chat-completion HTTP client.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::trace::{CandidateProposal, CandidateType, ResearchState};

/// Proposal source contract. Implementations must return proposals that
/// satisfy the five-field invariant; anything else is rejected downstream
/// with a logged reason.
pub trait AgentAdapter {
    fn name(&self) -> &str;

    fn propose(
        &mut self,
        state: &ResearchState,
        batch: usize,
        approved_columns: &BTreeSet<String>,
    ) -> Result<Vec<CandidateProposal>>;
}

/// Deterministic seeded template sampler over the DSL grammar.
///
/// Randomness derives from (session seed, round) only, so replaying a round
/// against the same trace state reproduces the identical batch.
pub struct StubAgent {
    session_seed: u64,
    /// Recipes sampled preferentially before random templates (e.g. a
    /// planted column in synthetic runs).
    bias_recipes: Vec<String>,
}

impl StubAgent {
    pub fn new(session_seed: u64, bias_recipes: Vec<String>) -> StubAgent {
        StubAgent {
            session_seed,
            bias_recipes,
        }
    }

    fn sample_recipe(rng: &mut ChaCha8Rng, columns: &[&String]) -> String {
        let col = |rng: &mut ChaCha8Rng| columns[rng.gen_range(0..columns.len())].clone();
        let window = |rng: &mut ChaCha8Rng| [3usize, 5, 10, 20][rng.gen_range(0..4)];
        match rng.gen_range(0..6) {
            0 => format!("cs_rank(roll_mean({}, col({})))", window(rng), col(rng)),
            1 => format!("cs_zscore(roll_std({}, col({})))", window(rng), col(rng)),
            2 => format!("cs_rank(log1p(abs(col({}))))", col(rng)),
            3 => format!("lag({}, cs_rank(col({})))", rng.gen_range(1..4), col(rng)),
            4 => format!(
                "cs_rank(pct_change({}, col({})))",
                rng.gen_range(1..6),
                col(rng)
            ),
            _ => {
                let w1 = (rng.gen_range(-10i32..=10) as f64) / 10.0;
                let w2 = (rng.gen_range(-10i32..=10) as f64) / 10.0;
                format!(
                    "cs_rank(lincomb({w1}, roll_mean({}, col({})), {w2}, log1p(abs(col({})))))",
                    window(rng),
                    col(rng),
                    col(rng)
                )
            }
        }
    }
}

impl AgentAdapter for StubAgent {
    fn name(&self) -> &str {
        "stub"
    }

    fn propose(
        &mut self,
        state: &ResearchState,
        batch: usize,
        approved_columns: &BTreeSet<String>,
    ) -> Result<Vec<CandidateProposal>> {
        let round = state.last_round + 1;
        let mut rng =
            ChaCha8Rng::seed_from_u64(self.session_seed.wrapping_mul(0x9e3779b9).wrapping_add(round as u64));
        let columns: Vec<&String> = approved_columns.iter().collect();
        if columns.is_empty() {
            return Err(Error::Agent {
                name: "stub".into(),
                message: "no approved columns".into(),
            });
        }
        let existing: BTreeSet<&str> = state
            .candidates
            .iter()
            .map(|(_, r)| r.recipe_text.as_str())
            .collect();

        let mut out = Vec::with_capacity(batch);
        let mut idx = 0usize;
        // biased templates first, once each per session
        for recipe in &self.bias_recipes {
            if out.len() >= batch || existing.contains(recipe.as_str()) {
                continue;
            }
            out.push(CandidateProposal {
                name: format!("stub_r{round}_{idx}_bias"),
                hypothesis: format!("the configured template '{recipe}' predicts forward returns"),
                rationale: "seeded template from the session configuration".into(),
                candidate_type: CandidateType::Hypothesis,
                recipe_text: recipe.clone(),
            });
            idx += 1;
        }
        let mut attempts = 0;
        while out.len() < batch && attempts < batch * 20 {
            attempts += 1;
            let recipe = Self::sample_recipe(&mut rng, &columns);
            if existing.contains(recipe.as_str())
                || out.iter().any(|p: &CandidateProposal| p.recipe_text == recipe)
            {
                continue;
            }
            out.push(CandidateProposal {
                name: format!("stub_r{round}_{idx}"),
                hypothesis: format!("cross-sectional signal '{recipe}' predicts forward returns"),
                rationale: "grammar template sampled by the deterministic stub".into(),
                candidate_type: CandidateType::Hypothesis,
                recipe_text: recipe,
            });
            idx += 1;
        }
        Ok(out)
    }
}

/// Chat-completion HTTP client. Renders the research state into a prompt,
/// sends it to an OpenAI-compatible endpoint, and parses structured proposal
/// blocks from the reply. Request/response bodies are appended to a sidecar
/// audit log with the key redacted.
pub struct RemoteAgent {
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub audit_log: Option<PathBuf>,
}

impl RemoteAgent {
    /// State rendered as the user prompt: prior candidates with metrics and
    /// verdicts, current pools, and the reply format contract.
    pub fn render_prompt(state: &ResearchState, batch: usize, approved: &BTreeSet<String>) -> String {
        let mut prompt = String::new();
        prompt.push_str(
            "You are an autonomous quantitative researcher proposing factor candidates \
             in a constrained DSL. Operators: col, cs_rank, cs_zscore, lag, roll_mean, \
             roll_std, diff, pct_change, log1p, abs, clip, lincomb.\n",
        );
        prompt.push_str(&format!(
            "Approved columns: {}.\n\nPrior evidence:\n",
            approved.iter().cloned().collect::<Vec<_>>().join(", ")
        ));
        for (_, rec) in &state.candidates {
            prompt.push_str(&format!(
                "- {} [{}] recipe `{}` mean_ic={:.4} t={:.2} verdict={} {}\n",
                rec.name,
                match rec.candidate_type {
                    CandidateType::Mechanical => "mechanical",
                    CandidateType::Hypothesis => "hypothesis",
                },
                rec.recipe_text,
                rec.metrics_train.mean_ic,
                rec.metrics_train.ic_tstat,
                if rec.verdict.passed() { "pass" } else { "fail" },
                rec.interpretation
            ));
        }
        prompt.push_str(&format!(
            "\nHold pool: {:?}\nGood pool: {:?}\n\nPropose exactly {batch} new candidates. \
             For each, emit a block:\nNAME: <unique_snake_case>\nHYPOTHESIS: <falsifiable statement>\n\
             RATIONALE: <link to evidence or market structure>\nTYPE: hypothesis|mechanical\n\
             RECIPE: <DSL expression>\n---\n",
            state.hold, state.good
        ));
        prompt
    }

    /// Parse proposal blocks; malformed blocks are skipped (rejected
    /// individually downstream via the returned skip count), never repaired.
    pub fn parse_reply(reply: &str) -> (Vec<CandidateProposal>, usize) {
        let mut proposals = Vec::new();
        let mut malformed = 0usize;
        for block in reply.split("---") {
            let block = block.trim();
            if block.is_empty() {
                continue;
            }
            let field = |key: &str| -> Option<String> {
                block.lines().find_map(|line| {
                    line.trim()
                        .strip_prefix(key)
                        .and_then(|rest| rest.strip_prefix(':'))
                        .map(|v| v.trim().to_string())
                })
            };
            let parsed = (|| {
                Some(CandidateProposal {
                    name: field("NAME")?,
                    hypothesis: field("HYPOTHESIS")?,
                    rationale: field("RATIONALE")?,
                    candidate_type: match field("TYPE")?.as_str() {
                        "mechanical" => CandidateType::Mechanical,
                        "hypothesis" => CandidateType::Hypothesis,
                        _ => return None,
                    },
                    recipe_text: field("RECIPE")?,
                })
            })();
            match parsed {
                Some(p) => proposals.push(p),
                None => malformed += 1,
            }
        }
        (proposals, malformed)
    }

    fn audit(&self, direction: &str, body: &str) {
        if let Some(path) = &self.audit_log {
            if let Ok(mut f) = std::fs::OpenOptions::new().create(true).append(true).open(path) {
                let _ = writeln!(f, "{direction}: {body}");
            }
        }
    }
}

impl AgentAdapter for RemoteAgent {
    fn name(&self) -> &str {
        "remote"
    }

    fn propose(
        &mut self,
        state: &ResearchState,
        batch: usize,
        approved_columns: &BTreeSet<String>,
    ) -> Result<Vec<CandidateProposal>> {
        let api_key = std::env::var(&self.api_key_env).map_err(|_| Error::Agent {
            name: "remote".into(),
            message: format!("environment variable {} not set", self.api_key_env),
        })?;
        let prompt = Self::render_prompt(state, batch, approved_columns);
        let body = serde_json::json!({
            "model": self.model,
            "messages": [
                {"role": "user", "content": prompt}
            ],
        });
        self.audit("request", &body.to_string());

        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(self.timeout_secs))
            .build()
            .map_err(|e| Error::Agent {
                name: "remote".into(),
                message: e.to_string(),
            })?;
        // at most one retry
        let mut last_err = String::new();
        for _attempt in 0..2 {
            let response = client
                .post(&self.endpoint)
                .bearer_auth(&api_key)
                .json(&body)
                .send();
            match response.and_then(|r| r.error_for_status()) {
                Ok(resp) => {
                    let value: serde_json::Value = resp.json().map_err(|e| Error::Agent {
                        name: "remote".into(),
                        message: format!("bad response body: {e}"),
                    })?;
                    self.audit("response", &value.to_string());
                    let content = value["choices"][0]["message"]["content"]
                        .as_str()
                        .ok_or_else(|| Error::Agent {
                            name: "remote".into(),
                            message: "reply missing choices[0].message.content".into(),
                        })?;
                    let (proposals, _malformed) = Self::parse_reply(content);
                    return Ok(proposals);
                }
                Err(e) => last_err = e.to_string(),
            }
        }
        Err(Error::Agent {
            name: "remote".into(),
            message: last_err,
        })
    }
}
