//! Binary answer verification, one verifier per task domain.
//!
//! Every verifier reduces to a 0/1 reward — correctness is never partial:
//!
//! - **math** — the candidate's final expression is checked for symbolic
//!   equivalence against a reference expression ([`expr::math_equiv`]).
//! - **code** — the candidate's final code block must pass *all* unit tests
//!   in a process sandbox ([`sandbox`]); one failure zeroes the reward.
//! - **science** — multiple choice: the extracted letter must match the key.
//! - **general** — the answer must cover at least a threshold fraction of the
//!   reference keywords.
//!
//! Wrong answers yield reward 0; infrastructure trouble (an unrunnable
//! sandbox) and malformed references are errors instead, so a broken harness
//! can never masquerade as a graded failure.

pub mod expr;
pub mod sandbox;

use serde::{Deserialize, Serialize};
use std::time::Duration;
use thiserror::Error;

use crate::config::SandboxConfig;
use crate::Domain;
use expr::{math_equiv, parse_math, EquivConfig, MathError};
use sandbox::{SandboxError, SandboxRequest, SandboxRunner};

/// Default keyword-coverage threshold for the general-domain verifier.
pub const DEFAULT_KEYWORD_THRESHOLD: f64 = 0.6;

fn default_keyword_threshold() -> f64 {
    DEFAULT_KEYWORD_THRESHOLD
}

/// One stdin/stdout unit test for the code verifier.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeCase {
    /// Bytes presented on the program's stdin.
    pub stdin: String,
    /// Expected stdout (compared per-line, trailing whitespace ignored).
    pub expected_stdout: String,
}

/// Ground truth for one query, discriminated by verifier kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceSpec {
    /// Math: a reference expression the candidate must be equivalent to.
    MathAnswer {
        /// Reference expression source text.
        expression: String,
    },
    /// Code: unit tests plus optional resource overrides.
    CodeTests {
        /// Test cases; all must pass.
        cases: Vec<CodeCase>,
        /// Per-case wall-clock limit; falls back to the sandbox defaults.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        time_limit_secs: Option<f64>,
        /// Address-space cap; falls back to the sandbox defaults.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        memory_limit_bytes: Option<u64>,
        /// Command template; `{source}` expands to the program path.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        run_command_template: Option<String>,
    },
    /// Science: a multiple-choice key in A–E.
    ChoiceKey {
        /// The correct option letter.
        letter: char,
    },
    /// General: keywords the answer must cover.
    KeywordSet {
        /// Reference keywords (single tokens).
        keywords: Vec<String>,
        /// Minimum matched fraction for reward 1.
        #[serde(default = "default_keyword_threshold")]
        threshold: f64,
    },
}

/// Verdict of a verification: a binary reward plus a short explanation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifierOutcome {
    /// 1 for correct, 0 for incorrect.
    pub reward: u8,
    /// Short human-oriented detail (per-case verdicts, matched counts, ...).
    pub detail: String,
}

impl VerifierOutcome {
    fn pass(detail: impl Into<String>) -> Self {
        VerifierOutcome { reward: 1, detail: detail.into() }
    }

    fn fail(detail: impl Into<String>) -> Self {
        VerifierOutcome { reward: 0, detail: detail.into() }
    }
}

/// Verification errors — all distinct from a 0 reward.
#[derive(Debug, Error)]
pub enum VerifyError {
    /// The reference kind does not verify this domain (or the domain has no
    /// verifier at all).
    #[error("domain {domain} cannot be verified against a {reference_kind} reference")]
    DomainSpecMismatch {
        /// Requested domain.
        domain: Domain,
        /// The reference's kind tag.
        reference_kind: &'static str,
    },
    /// The sandbox could not run the program at all.
    #[error(transparent)]
    SandboxUnavailable(#[from] SandboxError),
    /// Nothing extractable from the candidate answer text.
    #[error("no extractable answer in candidate text")]
    EmptyAnswer,
    /// The reference itself is malformed.
    #[error("invalid reference: {0}")]
    InvalidReference(String),
}

impl ReferenceSpec {
    fn kind_name(&self) -> &'static str {
        match self {
            ReferenceSpec::MathAnswer { .. } => "math_answer",
            ReferenceSpec::CodeTests { .. } => "code_tests",
            ReferenceSpec::ChoiceKey { .. } => "choice_key",
            ReferenceSpec::KeywordSet { .. } => "keyword_set",
        }
    }

    /// Structural validation: non-empty cases/keywords, threshold in [0,1],
    /// positive limits, key letter in A–E.
    pub fn validate(&self) -> Result<(), VerifyError> {
        match self {
            ReferenceSpec::MathAnswer { expression } => {
                if expression.trim().is_empty() {
                    return Err(VerifyError::InvalidReference("empty reference expression".into()));
                }
            }
            ReferenceSpec::CodeTests { cases, time_limit_secs, run_command_template, .. } => {
                if cases.is_empty() {
                    return Err(VerifyError::InvalidReference("code reference needs at least one case".into()));
                }
                if let Some(t) = time_limit_secs {
                    if !(t.is_finite() && *t > 0.0) {
                        return Err(VerifyError::InvalidReference(format!("non-positive time limit {t}")));
                    }
                }
                if let Some(tpl) = run_command_template {
                    if tpl.split_whitespace().next().is_none() {
                        return Err(VerifyError::InvalidReference("empty run command template".into()));
                    }
                }
            }
            ReferenceSpec::ChoiceKey { letter } => {
                if !letter.is_ascii_uppercase() || !('A'..='E').contains(letter) {
                    return Err(VerifyError::InvalidReference(format!(
                        "choice key must be an uppercase letter A-E, got {letter:?}"
                    )));
                }
            }
            ReferenceSpec::KeywordSet { keywords, threshold } => {
                if keywords.is_empty() {
                    return Err(VerifyError::InvalidReference("keyword reference needs at least one keyword".into()));
                }
                if !(0.0..=1.0).contains(threshold) {
                    return Err(VerifyError::InvalidReference(format!("threshold {threshold} outside [0, 1]")));
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Final-answer extraction
// ---------------------------------------------------------------------------

/// Content of the last `\boxed{...}` in `text`, brace-balanced.
fn last_boxed(text: &str) -> Option<&str> {
    let start = text.rfind("\\boxed{")?;
    let inner_start = start + "\\boxed{".len();
    let mut depth = 1usize;
    for (i, c) in text[inner_start..].char_indices() {
        match c {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[inner_start..inner_start + i]);
                }
            }
            _ => {}
        }
    }
    None
}

fn last_nonempty_line(text: &str) -> Option<&str> {
    text.lines().rev().map(str::trim).find(|l| !l.is_empty())
}

/// Content of the last complete ``` fenced block (any language tag).
fn last_fenced_block(text: &str) -> Option<String> {
    let mut fence_lines: Vec<usize> = Vec::new();
    let lines: Vec<&str> = text.lines().collect();
    for (i, line) in lines.iter().enumerate() {
        if line.trim_start().starts_with("```") {
            fence_lines.push(i);
        }
    }
    if fence_lines.len() < 2 {
        return None;
    }
    // Last complete pair: fences alternate open/close from the start.
    let pairs = fence_lines.len() / 2;
    let open = fence_lines[2 * pairs - 2];
    let close = fence_lines[2 * pairs - 1];
    Some(lines[open + 1..close].join("\n"))
}

/// Extracts the part of a free-form answer that the domain verifier grades:
/// the last `\boxed{...}` (else last non-empty line) for math, the last fenced
/// code block (else the whole text) for code, the first standalone A–E letter
/// of the final line for science, and the whole text for general.
pub fn extract_final_answer(domain: Domain, text: &str) -> Result<String, VerifyError> {
    match domain {
        Domain::Math => {
            if let Some(boxed) = last_boxed(text) {
                return Ok(boxed.trim().to_owned());
            }
            last_nonempty_line(text).map(str::to_owned).ok_or(VerifyError::EmptyAnswer)
        }
        Domain::Code => {
            if let Some(block) = last_fenced_block(text) {
                return Ok(block);
            }
            if text.trim().is_empty() {
                return Err(VerifyError::EmptyAnswer);
            }
            Ok(text.to_owned())
        }
        Domain::Science => {
            let line = last_nonempty_line(text).ok_or(VerifyError::EmptyAnswer)?;
            for token in line.split_whitespace() {
                let stripped = token.trim_matches(|c: char| !c.is_ascii_alphanumeric());
                let mut chars = stripped.chars();
                if let (Some(c), None) = (chars.next(), chars.next()) {
                    if c.is_ascii_alphabetic() && ('A'..='E').contains(&c.to_ascii_uppercase()) {
                        return Ok(c.to_ascii_uppercase().to_string());
                    }
                }
            }
            line.chars()
                .find(|c| c.is_ascii_alphabetic())
                .map(|c| c.to_ascii_uppercase().to_string())
                .ok_or(VerifyError::EmptyAnswer)
        }
        Domain::General => {
            if text.trim().is_empty() {
                return Err(VerifyError::EmptyAnswer);
            }
            Ok(text.to_owned())
        }
        other => Err(VerifyError::DomainSpecMismatch { domain: other, reference_kind: "any" }),
    }
}

// ---------------------------------------------------------------------------
// Per-domain verifiers
// ---------------------------------------------------------------------------

/// Case-folded multiple-choice match.
pub fn choice_match(candidate: &str, key: char) -> bool {
    let mut chars = candidate.trim().chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) => c.to_ascii_uppercase() == key.to_ascii_uppercase(),
        _ => false,
    }
}

fn answer_token_set(text: &str) -> std::collections::BTreeSet<String> {
    text.split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

/// Fraction of keywords present in the answer as whole tokens
/// (case-insensitive, punctuation-stripped), compared to the threshold.
pub fn keyword_reward(answer: &str, keywords: &[String], threshold: f64) -> VerifierOutcome {
    let tokens = answer_token_set(answer);
    let matched = keywords.iter().filter(|k| tokens.contains(&k.to_lowercase())).count();
    let fraction = matched as f64 / keywords.len() as f64;
    let detail = format!("matched {matched}/{} keywords", keywords.len());
    if fraction >= threshold {
        VerifierOutcome::pass(detail)
    } else {
        VerifierOutcome::fail(detail)
    }
}

/// Per-line comparison form: trailing whitespace stripped from every line,
/// trailing blank lines dropped.
fn normalize_program_output(raw: &[u8]) -> Vec<String> {
    let text = String::from_utf8_lossy(raw);
    let mut lines: Vec<String> = text.lines().map(|l| l.trim_end().to_owned()).collect();
    while lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    lines
}

/// Expands a `{source}` command template into argv (whitespace-split; no
/// shell quoting).
fn expand_template(template: &str, source_path: &str) -> Vec<String> {
    template.split_whitespace().map(|tok| tok.replace("{source}", source_path)).collect()
}

/// Runs a program against every test case; all-or-nothing reward.
///
/// Each case gets a fresh process built from the command template, so any
/// compile step embedded in the template bills against that case's wall
/// clock (in practice the first case, for compile-once templates).
pub fn run_code_tests(
    program_source: &str,
    cases: &[CodeCase],
    runner: &dyn SandboxRunner,
    sandbox_cfg: &SandboxConfig,
) -> Result<VerifierOutcome, VerifyError> {
    if cases.is_empty() {
        return Err(VerifyError::InvalidReference("code reference needs at least one case".into()));
    }
    let dir = tempfile::tempdir()
        .map_err(|e| VerifyError::SandboxUnavailable(SandboxError(format!("tempdir: {e}"))))?;
    let source_path = dir.path().join("program");
    std::fs::write(&source_path, program_source)
        .map_err(|e| VerifyError::SandboxUnavailable(SandboxError(format!("write program: {e}"))))?;
    let command = expand_template(&sandbox_cfg.run_command_template, &source_path.display().to_string());
    if command.is_empty() {
        return Err(VerifyError::InvalidReference("empty run command template".into()));
    }

    let mut verdicts = Vec::with_capacity(cases.len());
    let mut all_passed = true;
    for (i, case) in cases.iter().enumerate() {
        let response = runner.run(&SandboxRequest {
            command: command.clone(),
            stdin: case.stdin.clone().into_bytes(),
            time_limit: Duration::from_secs_f64(sandbox_cfg.time_limit_secs),
            memory_limit_bytes: sandbox_cfg.memory_limit_bytes,
        })?;
        let n = i + 1;
        let verdict = if response.timed_out {
            all_passed = false;
            format!("case {n}: timeout after {:.1}s", sandbox_cfg.time_limit_secs)
        } else if response.exit_status != Some(0) {
            all_passed = false;
            match response.exit_status {
                Some(code) => format!("case {n}: runtime error (exit {code})"),
                None => format!("case {n}: killed by signal"),
            }
        } else if normalize_program_output(&response.stdout)
            == normalize_program_output(case.expected_stdout.as_bytes())
        {
            format!("case {n}: ok")
        } else {
            all_passed = false;
            format!("case {n}: wrong output")
        };
        verdicts.push(verdict);
    }

    let detail = verdicts.join("; ");
    Ok(if all_passed { VerifierOutcome::pass(detail) } else { VerifierOutcome::fail(detail) })
}

/// Verifies a candidate answer against its domain's reference.
///
/// Candidate-side problems (unparseable expression, nothing to extract from a
/// numeric check) grade as reward 0; reference-side and infrastructure
/// problems surface as [`VerifyError`]s.
pub fn verify(
    domain: Domain,
    answer_text: &str,
    reference: &ReferenceSpec,
    runner: &dyn SandboxRunner,
    equiv: &EquivConfig,
    sandbox_defaults: &SandboxConfig,
) -> Result<VerifierOutcome, VerifyError> {
    reference.validate()?;
    match (domain, reference) {
        (Domain::Math, ReferenceSpec::MathAnswer { expression }) => {
            let candidate_text = extract_final_answer(domain, answer_text)?;
            let reference_expr = parse_math(expression)
                .map_err(|e| VerifyError::InvalidReference(format!("reference expression: {e}")))?;
            let candidate = match parse_math(&candidate_text) {
                Ok(c) => c,
                Err(e) => return Ok(VerifierOutcome::fail(format!("candidate not parseable: {e}"))),
            };
            match math_equiv(&candidate, &reference_expr, equiv) {
                Ok(true) => Ok(VerifierOutcome::pass("equivalent to reference")),
                Ok(false) => Ok(VerifierOutcome::fail("not equivalent to reference")),
                Err(MathError::UndefinedEverywhere) => {
                    Ok(VerifierOutcome::fail("candidate/reference pair undefined at every sample point"))
                }
                Err(e @ MathError::Syntax { .. }) => {
                    Err(VerifyError::InvalidReference(format!("equivalence check: {e}")))
                }
            }
        }
        (Domain::Code, ReferenceSpec::CodeTests { cases, time_limit_secs, memory_limit_bytes, run_command_template }) => {
            let program = extract_final_answer(domain, answer_text)?;
            let cfg = SandboxConfig {
                run_command_template: run_command_template
                    .clone()
                    .unwrap_or_else(|| sandbox_defaults.run_command_template.clone()),
                time_limit_secs: time_limit_secs.unwrap_or(sandbox_defaults.time_limit_secs),
                memory_limit_bytes: memory_limit_bytes.unwrap_or(sandbox_defaults.memory_limit_bytes),
            };
            run_code_tests(&program, cases, runner, &cfg)
        }
        (Domain::Science, ReferenceSpec::ChoiceKey { letter }) => {
            let candidate = extract_final_answer(domain, answer_text)?;
            let matched = choice_match(&candidate, *letter);
            let detail = format!("extracted {candidate:?}, key {letter}");
            Ok(if matched { VerifierOutcome::pass(detail) } else { VerifierOutcome::fail(detail) })
        }
        (Domain::General, ReferenceSpec::KeywordSet { keywords, threshold }) => {
            let answer = extract_final_answer(domain, answer_text)?;
            Ok(keyword_reward(&answer, keywords, *threshold))
        }
        (domain, reference) => {
            Err(VerifyError::DomainSpecMismatch { domain, reference_kind: reference.kind_name() })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SandboxConfig;

    fn sandbox_cfg() -> SandboxConfig {
        SandboxConfig {
            run_command_template: "sh {source}".into(),
            time_limit_secs: 5.0,
            memory_limit_bytes: 256 << 20,
        }
    }

    fn verify_with_defaults(domain: Domain, text: &str, reference: &ReferenceSpec) -> Result<VerifierOutcome, VerifyError> {
        verify(domain, text, reference, &sandbox::ProcessSandbox, &EquivConfig::default(), &sandbox_cfg())
    }

    #[test]
    fn math_extraction_prefers_last_boxed() {
        let text = "First \\boxed{1+1}. Final: \\boxed{x^{2}+1}\nleftover";
        assert_eq!(extract_final_answer(Domain::Math, text).unwrap(), "x^{2}+1");
        let text = "no boxes here\nx + 1";
        assert_eq!(extract_final_answer(Domain::Math, text).unwrap(), "x + 1");
    }

    #[test]
    fn science_extraction_finds_standalone_letter() {
        assert_eq!(extract_final_answer(Domain::Science, "b) entropy rises").unwrap(), "B");
        assert_eq!(extract_final_answer(Domain::Science, "I pick (C).").unwrap(), "C");
        assert_eq!(extract_final_answer(Domain::Science, "zebra").unwrap(), "Z");
        assert!(matches!(extract_final_answer(Domain::Science, "42 17"), Err(VerifyError::EmptyAnswer)));
    }

    #[test]
    fn code_extraction_takes_last_fenced_block() {
        let text = "Try this:\n```python\nprint(1)\n```\nBetter:\n```python\nprint(2)\n```\n";
        assert_eq!(extract_final_answer(Domain::Code, text).unwrap(), "print(2)");
        assert_eq!(extract_final_answer(Domain::Code, "echo hi").unwrap(), "echo hi");
    }

    #[test]
    fn math_verify_accepts_equivalent_expressions() {
        let reference = ReferenceSpec::MathAnswer { expression: "x^2 - 1".into() };
        let out = verify_with_defaults(Domain::Math, "So the result is \\boxed{(x-1)(x+1)}", &reference).unwrap();
        assert_eq!(out.reward, 1);
        let out = verify_with_defaults(Domain::Math, "\\boxed{x^2+1}", &reference).unwrap();
        assert_eq!(out.reward, 0);
    }

    #[test]
    fn math_verify_grades_unparseable_candidates_zero() {
        let reference = ReferenceSpec::MathAnswer { expression: "42".into() };
        let out = verify_with_defaults(Domain::Math, "the answer is $$$", &reference).unwrap();
        assert_eq!(out.reward, 0);
        assert!(out.detail.contains("not parseable"));
    }

    #[test]
    fn science_verify_case_folds() {
        let key = ReferenceSpec::ChoiceKey { letter: 'B' };
        assert_eq!(verify_with_defaults(Domain::Science, "b) entropy rises", &key).unwrap().reward, 1);
        assert_eq!(verify_with_defaults(Domain::Science, "Answer: D", &key).unwrap().reward, 0);
        let bad = ReferenceSpec::ChoiceKey { letter: 'x' };
        assert!(matches!(
            verify_with_defaults(Domain::Science, "A", &bad),
            Err(VerifyError::InvalidReference(_))
        ));
    }

    #[test]
    fn keyword_verify_counts_whole_tokens() {
        let reference = ReferenceSpec::KeywordSet {
            keywords: vec!["gravity".into(), "mass".into(), "distance".into()],
            threshold: 0.6,
        };
        let out = verify_with_defaults(
            Domain::General,
            "Gravity depends on mass, and on separation.",
            &reference,
        )
        .unwrap();
        assert_eq!(out.reward, 1, "{}", out.detail);
        assert!(out.detail.contains("matched 2/3"));
        // 'massive' must not count as 'mass'.
        let out = verify_with_defaults(Domain::General, "massive gravity", &reference).unwrap();
        assert_eq!(out.reward, 0);
        assert!(out.detail.contains("matched 1/3"));
    }

    #[test]
    fn exact_threshold_fraction_passes() {
        let keywords: Vec<String> = ["a", "b", "c", "d", "e"].iter().map(|s| s.to_string()).collect();
        let reference = ReferenceSpec::KeywordSet { keywords, threshold: 0.6 };
        let out = verify_with_defaults(Domain::General, "a b c zzz", &reference).unwrap();
        assert_eq!(out.reward, 1);
    }

    #[test]
    fn code_verify_is_all_or_nothing() {
        let echo = "cat";
        let cases = vec![
            CodeCase { stdin: "ping\n".into(), expected_stdout: "ping\n".into() },
            CodeCase { stdin: "pong\n".into(), expected_stdout: "pong\n".into() },
        ];
        let reference = ReferenceSpec::CodeTests {
            cases: cases.clone(),
            time_limit_secs: None,
            memory_limit_bytes: None,
            run_command_template: None,
        };
        let text = format!("```sh\n{echo}\n```");
        let out = verify_with_defaults(Domain::Code, &text, &reference).unwrap();
        assert_eq!(out.reward, 1, "{}", out.detail);

        let mut wrong = cases;
        wrong[1].expected_stdout = "PONG\n".into();
        let reference = ReferenceSpec::CodeTests {
            cases: wrong,
            time_limit_secs: None,
            memory_limit_bytes: None,
            run_command_template: None,
        };
        let out = verify_with_defaults(Domain::Code, &text, &reference).unwrap();
        assert_eq!(out.reward, 0);
        assert!(out.detail.contains("case 1: ok"));
        assert!(out.detail.contains("case 2: wrong output"));
    }

    #[test]
    fn trailing_whitespace_is_insignificant() {
        let cases = vec![CodeCase { stdin: "".into(), expected_stdout: "hi".into() }];
        let reference = ReferenceSpec::CodeTests {
            cases,
            time_limit_secs: None,
            memory_limit_bytes: None,
            run_command_template: None,
        };
        let text = "```sh\nprintf 'hi   \\n\\n\\n'\n```";
        let out = verify_with_defaults(Domain::Code, text, &reference).unwrap();
        assert_eq!(out.reward, 1, "{}", out.detail);
    }

    #[test]
    fn mismatched_domain_and_reference_error() {
        let reference = ReferenceSpec::MathAnswer { expression: "1".into() };
        assert!(matches!(
            verify_with_defaults(Domain::Code, "```sh\ntrue\n```", &reference),
            Err(VerifyError::DomainSpecMismatch { .. })
        ));
        assert!(matches!(
            verify_with_defaults(Domain::Multiturn, "hello", &reference),
            Err(VerifyError::DomainSpecMismatch { .. })
        ));
    }

    #[test]
    fn reference_specs_round_trip_as_tagged_json() {
        let reference = ReferenceSpec::ChoiceKey { letter: 'B' };
        let json = serde_json::to_string(&reference).unwrap();
        assert_eq!(json, r#"{"kind":"choice_key","letter":"B"}"#);
        assert_eq!(serde_json::from_str::<ReferenceSpec>(&json).unwrap(), reference);
        let json = r#"{"kind":"keyword_set","keywords":["a"]}"#;
        match serde_json::from_str::<ReferenceSpec>(json).unwrap() {
            ReferenceSpec::KeywordSet { threshold, .. } => assert_eq!(threshold, 0.6),
            other => panic!("wrong variant: {other:?}"),
        }
    }
}
