//! Optional language-model reasoner. Disabled unless the environment
//! provides an endpoint; every test and default run uses the scripted
//! policies instead. The prompt and reply grammars are fixed so step and
//! token accounting stay comparable with the scripted reasoners.

use crate::grid::{cell, GridCell};
use crate::knowledge::count_tokens;
use crate::pack::SerializedPack;
use crate::reasoner::{MacroDecision, Observation, ReasoningTrace, StepKind};
use std::time::Duration;
use thiserror::Error;

pub const ENV_URL: &str = "SKYPACK_LLM_URL";
pub const ENV_MODEL: &str = "SKYPACK_LLM_MODEL";
pub const ENV_KEY: &str = "SKYPACK_LLM_KEY";

const SYSTEM_TEXT: &str =
    "You pilot an aerial base station over a grid. Serve every listed cluster \
without entering the no-fly cell while it is active. Think in short lines, each prefixed exactly \
'STEP: '. Finish with exactly one line of the form \
'DECISION: cluster=<id|none> waypoint=(x,y) request_knowledge=<true|false>'.";

/// Canonical prompt: byte-identical for identical inputs. The knowledge
/// section carries the cached pack body verbatim and is omitted entirely
/// when no pack is cached.
pub fn build_prompt(obs: &Observation, pack: Option<&SerializedPack>) -> String {
    let mut p = String::new();
    p.push_str("SYSTEM\n");
    p.push_str(SYSTEM_TEXT);
    p.push('\n');
    if let Some(pk) = pack {
        p.push_str("KNOWLEDGE\n");
        p.push_str(&pk.body);
        if !pk.body.ends_with('\n') {
            p.push('\n');
        }
    }
    p.push_str("OBSERVATION\n");
    p.push_str(&format!(
        "clock={} cell=({},{}) budget={}\n",
        obs.clock, obs.uav.x, obs.uav.y, obs.budget
    ));
    let rem: Vec<String> = obs
        .remaining
        .iter()
        .map(|(id, c)| format!("c{}@({},{})", id, c.x, c.y))
        .collect();
    p.push_str(&format!(
        "remaining {}\n",
        if rem.is_empty() {
            "-".to_string()
        } else {
            rem.join(" ")
        }
    ));
    p.push_str(&format!(
        "backhaul={} pack={}\n",
        if obs.backhaul_feasible { "up" } else { "down" },
        if obs.has_pack { "cached" } else { "absent" }
    ));
    p
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LlmParseError {
    #[error("reply has no decision line")]
    MissingDecision,
    #[error("malformed decision line: {0}")]
    BadDecision(String),
    #[error("decision waypoint ({0},{1}) is outside the grid")]
    OffGrid(i32, i32),
}

fn parse_decision_line(line: &str, grid: (i32, i32)) -> Result<MacroDecision, LlmParseError> {
    let bad = || LlmParseError::BadDecision(line.to_string());
    let rest = line.strip_prefix("DECISION:").ok_or_else(bad)?.trim();
    let mut cluster: Option<Option<u32>> = None;
    let mut waypoint: Option<GridCell> = None;
    let mut request: Option<bool> = None;
    for field in rest.split_whitespace() {
        if let Some(v) = field.strip_prefix("cluster=") {
            cluster = Some(if v == "none" {
                None
            } else {
                Some(v.parse().map_err(|_| bad())?)
            });
        } else if let Some(v) = field.strip_prefix("waypoint=") {
            let inner = v
                .strip_prefix('(')
                .and_then(|s| s.strip_suffix(')'))
                .ok_or_else(bad)?;
            let (x, y) = inner.split_once(',').ok_or_else(bad)?;
            waypoint = Some(cell(
                x.trim().parse().map_err(|_| bad())?,
                y.trim().parse().map_err(|_| bad())?,
            ));
        } else if let Some(v) = field.strip_prefix("request_knowledge=") {
            request = Some(match v {
                "true" => true,
                "false" => false,
                _ => return Err(bad()),
            });
        } else {
            return Err(bad());
        }
    }
    let (cluster, waypoint, request) = match (cluster, waypoint, request) {
        (Some(c), Some(w), Some(r)) => (c, w, r),
        _ => return Err(bad()),
    };
    if waypoint.x < 0 || waypoint.x >= grid.0 || waypoint.y < 0 || waypoint.y >= grid.1 {
        return Err(LlmParseError::OffGrid(waypoint.x, waypoint.y));
    }
    Ok(MacroDecision {
        next_cluster: cluster,
        waypoint,
        request_knowledge: request,
    })
}

/// Read a model reply back into a decision and a costed trace. Each
/// `STEP:` line becomes one reasoning step billed at its own token count;
/// the decision line is billed as the commit. A reply with no steps still
/// costs its one commit.
pub fn parse_llm_response(
    text: &str,
    grid: (i32, i32),
) -> Result<(MacroDecision, ReasoningTrace), LlmParseError> {
    let mut trace = ReasoningTrace::default();
    let mut decision = None;
    for raw in text.lines() {
        let line = raw.trim();
        if line.starts_with("STEP:") {
            trace.push_costed(
                StepKind::Hypothesis,
                count_tokens(line),
                line.trim_start_matches("STEP:").trim().to_string(),
            );
        } else if line.starts_with("DECISION:") {
            decision = Some((parse_decision_line(line, grid)?, count_tokens(line)));
        }
    }
    let (decision, commit_tokens) = decision.ok_or(LlmParseError::MissingDecision)?;
    trace.push_costed(StepKind::Commit, commit_tokens, "commit model decision");
    Ok((decision, trace))
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("transport: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("endpoint returned status {0}")]
    Status(u16),
    #[error("reply had no message content")]
    EmptyReply,
    #[error(transparent)]
    Parse(#[from] LlmParseError),
}

/// Chat-completion client. Built from `SKYPACK_LLM_URL`, `SKYPACK_LLM_MODEL`
/// and `SKYPACK_LLM_KEY`; absent variables leave the adapter disabled.
pub struct LlmClient {
    url: String,
    model: String,
    key: Option<String>,
    http: reqwest::blocking::Client,
}

impl LlmClient {
    pub fn from_parts(url: String, model: String, key: Option<String>, timeout_s: f64) -> Self {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(timeout_s))
            .build()
            .expect("http client");
        LlmClient {
            url,
            model,
            key,
            http,
        }
    }

    pub fn from_env(timeout_s: f64) -> Option<Self> {
        let url = std::env::var(ENV_URL).ok()?;
        let model = std::env::var(ENV_MODEL).ok()?;
        let key = std::env::var(ENV_KEY).ok();
        Some(Self::from_parts(url, model, key, timeout_s))
    }

    pub fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        let body = serde_json::json!({
            "model": self.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut req = self.http.post(&self.url).json(&body);
        if let Some(k) = &self.key {
            req = req.bearer_auth(k);
        }
        let resp = req.send()?;
        if !resp.status().is_success() {
            return Err(LlmError::Status(resp.status().as_u16()));
        }
        let v: serde_json::Value = resp.json()?;
        v["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or(LlmError::EmptyReply)
    }

    /// One decision via the model, with a single retry on a malformed
    /// reply. Callers fall back to the scripted search policy on error.
    pub fn decide(
        &self,
        obs: &Observation,
        pack: Option<&SerializedPack>,
        grid: (i32, i32),
    ) -> Result<(MacroDecision, ReasoningTrace), LlmError> {
        let prompt = build_prompt(obs, pack);
        match self
            .complete(&prompt)
            .and_then(|t| Ok(parse_llm_response(&t, grid)?))
        {
            Ok(ok) => Ok(ok),
            Err(_) => {
                let text = self.complete(&prompt)?;
                Ok(parse_llm_response(&text, grid)?)
            }
        }
    }
}
