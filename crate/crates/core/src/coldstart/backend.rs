//! Transcript generators behind corpus construction.
//!
//! Corpus building needs two things from a generator: mode ballots (several
//! independent opinions on whether a query deserves step-by-step reasoning)
//! and a drafted transcript for the decided mode. Three implementations are
//! provided — a deterministic synthetic generator for self-contained runs,
//! a replay generator that serves pre-recorded transcripts from disk, and a
//! remote HTTP client.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;
use std::time::Duration;
use thiserror::Error;

use super::QueryRecord;
use crate::format::ReasoningMode;
use crate::rng::StreamId;

/// Environment variable holding the bearer token for [`RemoteBackend`].
pub const BACKEND_TOKEN_ENV: &str = "AUTOTHINK_BACKEND_TOKEN";

/// Generator failures.
#[derive(Debug, Error)]
pub enum BackendError {
    /// The request could not be completed (transport, process, or IO).
    #[error("backend request failed: {0}")]
    Request(String),
    /// The generator answered with something unusable.
    #[error("backend response invalid: {0}")]
    InvalidResponse(String),
    /// A replay file has no entry for this query/mode pair.
    #[error("no replay entry for query {id} in mode {mode}")]
    MissingReplay {
        /// Query id looked up.
        id: u64,
        /// Mode looked up.
        mode: ReasoningMode,
    },
}

/// The pieces of a drafted transcript, before rendering.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackendResponse {
    /// Why this mode suits the query.
    pub judge_analysis: String,
    /// Reasoning text; required when drafting in think-on mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thinking: Option<String>,
    /// The final answer text.
    pub answer: String,
}

/// A transcript generator the corpus builder can drive.
pub trait GeneratorBackend {
    /// One independent opinion on the right mode for `query`. `ballot`
    /// distinguishes the members of a voting ensemble.
    fn vote(&self, query: &QueryRecord, ballot: u32) -> Result<ReasoningMode, BackendError>;

    /// Drafts a transcript for `query` under the given mode.
    fn respond(&self, query: &QueryRecord, mode: ReasoningMode) -> Result<BackendResponse, BackendError>;
}

/// The shared fallback ballot when a generator has no voting signal of its
/// own: queries at or past the midpoint of the difficulty scale lean
/// think-on.
fn difficulty_vote(query: &QueryRecord) -> ReasoningMode {
    if query.difficulty >= 0.5 {
        ReasoningMode::ThinkOn
    } else {
        ReasoningMode::ThinkOff
    }
}

// ---------------------------------------------------------------------------
// Synthetic
// ---------------------------------------------------------------------------

/// Fully deterministic generator: ballots are seeded coin flips weighted by
/// query difficulty, transcripts are templated from the query itself.
#[derive(Clone, Copy, Debug)]
pub struct SyntheticBackend {
    seed: u64,
}

impl SyntheticBackend {
    /// A generator whose every output is a pure function of this seed.
    pub fn new(seed: u64) -> Self {
        SyntheticBackend { seed }
    }
}

impl GeneratorBackend for SyntheticBackend {
    fn vote(&self, query: &QueryRecord, ballot: u32) -> Result<ReasoningMode, BackendError> {
        let mut rng = StreamId::new(self.seed)
            .with_str("vote")
            .with_num(query.id)
            .with_num(u64::from(ballot))
            .rng();
        let p = query.difficulty.clamp(0.0, 1.0);
        Ok(if rng.random_bool(p) { ReasoningMode::ThinkOn } else { ReasoningMode::ThinkOff })
    }

    fn respond(&self, query: &QueryRecord, mode: ReasoningMode) -> Result<BackendResponse, BackendError> {
        let judge_analysis = format!(
            "This {} query sits at difficulty {:.2}, so {} reasoning is the better fit.",
            query.domain,
            query.difficulty,
            match mode {
                ReasoningMode::ThinkOn => "deliberate step-by-step",
                ReasoningMode::ThinkOff => "direct",
            }
        );
        let thinking = match mode {
            ReasoningMode::ThinkOn => {
                let steps = 1 + (query.difficulty.clamp(0.0, 1.0) * 6.0) as usize;
                let mut text = String::new();
                for step in 1..=steps {
                    if step > 1 {
                        text.push('\n');
                    }
                    text.push_str(&format!(
                        "Step {step}: narrow the candidate space for query {}.",
                        query.id
                    ));
                }
                Some(text)
            }
            ReasoningMode::ThinkOff => None,
        };
        let answer = format!("Worked answer for query {} in the {} domain.", query.id, query.domain);
        Ok(BackendResponse { judge_analysis, thinking, answer })
    }
}

// ---------------------------------------------------------------------------
// Replay
// ---------------------------------------------------------------------------

/// One line of a replay file.
#[derive(Deserialize)]
struct ReplayLine {
    id: u64,
    mode: ReasoningMode,
    judge_analysis: String,
    #[serde(default)]
    thinking: Option<String>,
    answer: String,
    #[serde(default)]
    votes: Option<Vec<ReasoningMode>>,
}

/// Serves transcripts recorded in a JSONL file, keyed by (query id, mode).
///
/// Each line holds `id`, `mode`, `judge_analysis`, optional `thinking`,
/// `answer`, and optionally a `votes` array. Ballots cycle through the
/// recorded votes; entries without votes fall back to the difficulty rule.
pub struct ReplayBackend {
    responses: HashMap<(u64, ReasoningMode), BackendResponse>,
    votes: HashMap<u64, Vec<ReasoningMode>>,
}

impl ReplayBackend {
    /// Loads a replay file, rejecting malformed lines and duplicate keys.
    pub fn from_path(path: &Path) -> Result<Self, BackendError> {
        let file = std::fs::File::open(path)
            .map_err(|e| BackendError::Request(format!("open {}: {e}", path.display())))?;
        let mut responses = HashMap::new();
        let mut votes = HashMap::new();
        for (index, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| BackendError::Request(format!("read line {}: {e}", index + 1)))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: ReplayLine = serde_json::from_str(&line)
                .map_err(|e| BackendError::InvalidResponse(format!("line {}: {e}", index + 1)))?;
            let key = (parsed.id, parsed.mode);
            if responses
                .insert(
                    key,
                    BackendResponse {
                        judge_analysis: parsed.judge_analysis,
                        thinking: parsed.thinking,
                        answer: parsed.answer,
                    },
                )
                .is_some()
            {
                return Err(BackendError::InvalidResponse(format!(
                    "line {}: duplicate entry for query {} mode {}",
                    index + 1,
                    parsed.id,
                    parsed.mode
                )));
            }
            if let Some(v) = parsed.votes {
                if v.is_empty() {
                    return Err(BackendError::InvalidResponse(format!(
                        "line {}: empty votes array",
                        index + 1
                    )));
                }
                votes.insert(parsed.id, v);
            }
        }
        Ok(ReplayBackend { responses, votes })
    }
}

impl GeneratorBackend for ReplayBackend {
    fn vote(&self, query: &QueryRecord, ballot: u32) -> Result<ReasoningMode, BackendError> {
        match self.votes.get(&query.id) {
            Some(recorded) => Ok(recorded[ballot as usize % recorded.len()]),
            None => Ok(difficulty_vote(query)),
        }
    }

    fn respond(&self, query: &QueryRecord, mode: ReasoningMode) -> Result<BackendResponse, BackendError> {
        self.responses
            .get(&(query.id, mode))
            .cloned()
            .ok_or(BackendError::MissingReplay { id: query.id, mode })
    }
}

// ---------------------------------------------------------------------------
// Remote
// ---------------------------------------------------------------------------

/// HTTP client for a generation service.
///
/// Transcripts come from `POST endpoint` with body
/// `{"query": ..., "mode": "on"|"off"}`; the service answers with a
/// [`BackendResponse`] JSON object. Transient failures (transport errors and
/// 5xx statuses) are retried with exponential backoff. Ballots use the local
/// difficulty rule — mode voting stays deterministic even with a remote
/// drafting service.
///
/// If [`BACKEND_TOKEN_ENV`] is set, its value is sent as a bearer token.
pub struct RemoteBackend {
    agent: ureq::Agent,
    endpoint: String,
    max_retries: u32,
    backoff: Duration,
    token: Option<String>,
}

impl RemoteBackend {
    /// A client for the given endpoint with 3 retries and 250 ms base backoff.
    pub fn new(endpoint: impl Into<String>) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(30)))
            .build();
        RemoteBackend {
            agent: config.new_agent(),
            endpoint: endpoint.into(),
            max_retries: 3,
            backoff: Duration::from_millis(250),
            token: std::env::var(BACKEND_TOKEN_ENV).ok(),
        }
    }

    /// Overrides the retry schedule (mostly for tests).
    pub fn with_retry(mut self, max_retries: u32, backoff: Duration) -> Self {
        self.max_retries = max_retries;
        self.backoff = backoff;
        self
    }

    fn attempt(&self, body: &serde_json::Value) -> Result<BackendResponse, (bool, BackendError)> {
        let mut request = self.agent.post(&self.endpoint);
        if let Some(token) = &self.token {
            request = request.header("authorization", &format!("Bearer {token}"));
        }
        match request.send_json(body) {
            Ok(mut response) => response
                .body_mut()
                .read_json::<BackendResponse>()
                .map_err(|e| (false, BackendError::InvalidResponse(e.to_string()))),
            Err(ureq::Error::StatusCode(code)) if (500..600).contains(&code) => {
                Err((true, BackendError::Request(format!("server error {code}"))))
            }
            Err(ureq::Error::StatusCode(code)) => {
                Err((false, BackendError::Request(format!("rejected with status {code}"))))
            }
            Err(e) => Err((true, BackendError::Request(e.to_string()))),
        }
    }
}

impl GeneratorBackend for RemoteBackend {
    fn vote(&self, query: &QueryRecord, _ballot: u32) -> Result<ReasoningMode, BackendError> {
        Ok(difficulty_vote(query))
    }

    fn respond(&self, query: &QueryRecord, mode: ReasoningMode) -> Result<BackendResponse, BackendError> {
        let body = serde_json::json!({ "query": query.query, "mode": mode.as_str() });
        let mut attempt = 0;
        loop {
            match self.attempt(&body) {
                Ok(response) => return Ok(response),
                Err((retryable, error)) => {
                    if !retryable || attempt >= self.max_retries {
                        return Err(error);
                    }
                    std::thread::sleep(self.backoff * 2u32.pow(attempt));
                    attempt += 1;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Domain;

    fn query(id: u64, difficulty: f64) -> QueryRecord {
        QueryRecord {
            id,
            domain: Domain::Math,
            difficulty,
            query: format!("question {id}"),
            reference: None,
            mode_label: None,
        }
    }

    #[test]
    fn synthetic_votes_follow_difficulty() {
        let backend = SyntheticBackend::new(11);
        let easy = query(1, 0.0);
        let hard = query(2, 1.0);
        for ballot in 0..5 {
            assert_eq!(backend.vote(&easy, ballot).unwrap(), ReasoningMode::ThinkOff);
            assert_eq!(backend.vote(&hard, ballot).unwrap(), ReasoningMode::ThinkOn);
        }
        // Mid difficulty: ballots split, deterministically per (seed, id, ballot).
        let mid = query(3, 0.5);
        let a: Vec<_> = (0..5).map(|b| backend.vote(&mid, b).unwrap()).collect();
        let b: Vec<_> = (0..5).map(|b| backend.vote(&mid, b).unwrap()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn synthetic_transcripts_are_tag_free_and_mode_shaped() {
        let backend = SyntheticBackend::new(11);
        let q = query(7, 0.8);
        let on = backend.respond(&q, ReasoningMode::ThinkOn).unwrap();
        assert!(on.thinking.is_some());
        let off = backend.respond(&q, ReasoningMode::ThinkOff).unwrap();
        assert!(off.thinking.is_none());
        for text in [&on.judge_analysis, on.thinking.as_ref().unwrap(), &on.answer, &off.answer] {
            assert!(!text.contains('<'), "reserved tag character in {text:?}");
        }
        // Harder queries think longer.
        let shallow = backend.respond(&query(8, 0.1), ReasoningMode::ThinkOn).unwrap();
        assert!(on.thinking.unwrap().len() > shallow.thinking.unwrap().len());
    }

    #[test]
    fn replay_serves_recorded_entries_and_votes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("replay.jsonl");
        std::fs::write(
            &path,
            concat!(
                r#"{"id": 1, "mode": "on", "judge_analysis": "needs care", "thinking": "steps", "answer": "42", "votes": ["on", "off", "on"]}"#,
                "\n",
                r#"{"id": 1, "mode": "off", "judge_analysis": "simple", "answer": "42"}"#,
                "\n",
            ),
        )
        .unwrap();
        let backend = ReplayBackend::from_path(&path).unwrap();
        let q = query(1, 0.9);
        assert_eq!(backend.respond(&q, ReasoningMode::ThinkOn).unwrap().thinking.as_deref(), Some("steps"));
        assert_eq!(backend.respond(&q, ReasoningMode::ThinkOff).unwrap().thinking, None);
        assert_eq!(backend.vote(&q, 0).unwrap(), ReasoningMode::ThinkOn);
        assert_eq!(backend.vote(&q, 1).unwrap(), ReasoningMode::ThinkOff);
        assert_eq!(backend.vote(&q, 3).unwrap(), ReasoningMode::ThinkOn, "ballots wrap around");
        // Unknown query: respond fails, vote falls back to difficulty.
        let unknown = query(9, 0.2);
        assert!(matches!(
            backend.respond(&unknown, ReasoningMode::ThinkOn),
            Err(BackendError::MissingReplay { id: 9, .. })
        ));
        assert_eq!(backend.vote(&unknown, 0).unwrap(), ReasoningMode::ThinkOff);
    }

    #[test]
    fn replay_rejects_duplicates_and_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dup.jsonl");
        std::fs::write(
            &path,
            concat!(
                r#"{"id": 1, "mode": "on", "judge_analysis": "a", "thinking": "t", "answer": "x"}"#,
                "\n",
                r#"{"id": 1, "mode": "on", "judge_analysis": "b", "thinking": "t", "answer": "y"}"#,
                "\n",
            ),
        )
        .unwrap();
        assert!(matches!(ReplayBackend::from_path(&path), Err(BackendError::InvalidResponse(_))));
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "not json\n").unwrap();
        assert!(matches!(ReplayBackend::from_path(&path), Err(BackendError::InvalidResponse(_))));
        assert!(matches!(
            ReplayBackend::from_path(&dir.path().join("missing.jsonl")),
            Err(BackendError::Request(_))
        ));
    }
}
