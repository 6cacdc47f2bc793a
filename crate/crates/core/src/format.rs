//! Parsing, validation, and canonical rendering of mode-gated reasoning
//! transcripts.
//!
//! A well-formed transcript opens with a `<judge>` block stating why the
//! query does or does not need step-by-step reasoning, declares the chosen
//! mode with a bare `<think_on>` or `<think_off>` tag, carries a `<think>`
//! block only in think-on mode, and closes with an `<answer>` block:
//!
//! ```text
//! <judge>
//! Two-digit addition; no working needed.
//! </judge>
//!
//! <think_off>
//! <answer>
//! 42
//! </answer>
//! ```
//!
//! [`parse_response`] runs in strict mode (exact segment order, nothing extra)
//! or lenient mode, which additionally recovers from missing `</judge>` /
//! `</answer>` closers at segment boundaries. [`render_response`] emits the
//! canonical layout shown above — one tag per line, one blank line between
//! blocks — and always strict-reparses to the value it was given.
//!
//! A documented limitation: segment bodies that themselves contain the literal
//! tag strings (e.g. an answer quoting `</answer>`) cannot round-trip.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Opening tag of the judge block.
pub const JUDGE_OPEN: &str = "<judge>";
/// Closing tag of the judge block.
pub const JUDGE_CLOSE: &str = "</judge>";
/// Mode tag declaring reasoning enabled.
pub const THINK_ON_TAG: &str = "<think_on>";
/// Mode tag declaring reasoning skipped.
pub const THINK_OFF_TAG: &str = "<think_off>";
/// Opening tag of the thinking block.
pub const THINK_OPEN: &str = "<think>";
/// Closing tag of the thinking block.
pub const THINK_CLOSE: &str = "</think>";
/// Opening tag of the answer block.
pub const ANSWER_OPEN: &str = "<answer>";
/// Closing tag of the answer block.
pub const ANSWER_CLOSE: &str = "</answer>";

/// Whether a response reasons step-by-step before answering.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ReasoningMode {
    /// Explicit reasoning: a `<think>` block precedes the answer.
    #[serde(rename = "on")]
    ThinkOn,
    /// Direct answering: no `<think>` block.
    #[serde(rename = "off")]
    ThinkOff,
}

impl ReasoningMode {
    /// The bare mode tag for this mode.
    pub fn tag(self) -> &'static str {
        match self {
            ReasoningMode::ThinkOn => THINK_ON_TAG,
            ReasoningMode::ThinkOff => THINK_OFF_TAG,
        }
    }

    /// Wire name, matching the serde representation.
    pub fn as_str(self) -> &'static str {
        match self {
            ReasoningMode::ThinkOn => "on",
            ReasoningMode::ThinkOff => "off",
        }
    }

    /// The opposite mode.
    pub fn flipped(self) -> Self {
        match self {
            ReasoningMode::ThinkOn => ReasoningMode::ThinkOff,
            ReasoningMode::ThinkOff => ReasoningMode::ThinkOn,
        }
    }
}

impl std::fmt::Display for ReasoningMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A fully parsed transcript.
///
/// `thinking` is `Some` exactly when `mode` is [`ReasoningMode::ThinkOn`];
/// [`StructuredResponse::validate`] checks that coupling. Segment bodies may
/// be empty strings.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredResponse {
    /// Body of the `<judge>` block.
    pub judge_analysis: String,
    /// Declared reasoning mode.
    pub mode: ReasoningMode,
    /// Body of the `<think>` block; present iff `mode` is think-on.
    pub thinking: Option<String>,
    /// Body of the `<answer>` block.
    pub answer: String,
}

impl StructuredResponse {
    /// Checks the mode/thinking coupling invariant.
    pub fn validate(&self) -> Result<(), ParseError> {
        let ok = match self.mode {
            ReasoningMode::ThinkOn => self.thinking.is_some(),
            ReasoningMode::ThinkOff => self.thinking.is_none(),
        };
        if ok {
            Ok(())
        } else {
            Err(ParseError { kind: ParseErrorKind::ThinkWithoutOn, byte_offset: 0 })
        }
    }
}

/// What went wrong while parsing, as the first violation in document order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParseErrorKind {
    /// The document does not begin with a `<judge>` block.
    MissingJudge,
    /// An opened block never closes (strict mode; lenient mode recovers
    /// missing `</judge>` / `</answer>` closers).
    UnclosedTag,
    /// Neither `<think_on>` nor `<think_off>` follows the judge block.
    MissingModeTag,
    /// Thinking presence contradicts the declared mode: a `<think>` block
    /// under `<think_off>`, or `<think_on>` without a `<think>` block.
    ThinkWithoutOn,
    /// No `<answer>` block where one is required.
    MissingAnswer,
    /// A segment appears again after it was already consumed.
    DuplicateSegment,
    /// Non-whitespace content after `</answer>`.
    TrailingContent,
}

impl std::fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ParseErrorKind::MissingJudge => "missing judge block",
            ParseErrorKind::UnclosedTag => "unclosed tag",
            ParseErrorKind::MissingModeTag => "missing mode tag",
            ParseErrorKind::ThinkWithoutOn => "thinking presence contradicts declared mode",
            ParseErrorKind::MissingAnswer => "missing answer block",
            ParseErrorKind::DuplicateSegment => "duplicate segment",
            ParseErrorKind::TrailingContent => "trailing content after answer",
        };
        f.write_str(s)
    }
}

/// Parse failure with the byte offset where the violation was detected
/// (always ≤ the input length; equals it for end-of-input violations).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("{kind} at byte {byte_offset}")]
pub struct ParseError {
    /// Violation category.
    pub kind: ParseErrorKind,
    /// Byte position in the input text.
    pub byte_offset: usize,
}

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn rest(&self) -> &'a str {
        &self.text[self.pos..]
    }

    fn skip_whitespace(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.text.len() - trimmed.len();
    }

    fn peek_tag(&self, tag: &str) -> bool {
        self.rest().starts_with(tag)
    }

    fn eat_tag(&mut self, tag: &str) -> bool {
        if self.peek_tag(tag) {
            self.pos += tag.len();
            true
        } else {
            false
        }
    }

    /// Position of the next occurrence of `tag` at or after the cursor.
    fn find(&self, tag: &str) -> Option<usize> {
        self.rest().find(tag).map(|i| self.pos + i)
    }
}

/// Strips the single boundary newline the canonical renderer inserts after an
/// opening tag and before the matching closer, leaving interior content
/// untouched so arbitrary bodies round-trip exactly.
fn strip_boundary_newlines(raw: &str) -> &str {
    let raw = raw.strip_prefix('\n').unwrap_or(raw);
    raw.strip_suffix('\n').unwrap_or(raw)
}

const ALL_TAGS: [&str; 8] = [
    JUDGE_OPEN,
    JUDGE_CLOSE,
    THINK_ON_TAG,
    THINK_OFF_TAG,
    THINK_OPEN,
    THINK_CLOSE,
    ANSWER_OPEN,
    ANSWER_CLOSE,
];

/// Earliest position of any known tag at or after the cursor.
fn next_tag_position(c: &Cursor<'_>) -> Option<usize> {
    ALL_TAGS.iter().filter_map(|t| c.find(t)).min()
}

/// Reads a segment body up to `close`, advancing past the closer.
///
/// When the closer is absent: strict mode fails with [`ParseErrorKind::UnclosedTag`]
/// at `open_pos`; lenient mode recovers the body as everything up to the next
/// known tag (or end of input) if `recover` is set, mirroring how truncated
/// generations lose their final closers.
fn read_body<'a>(
    c: &mut Cursor<'a>,
    close: &str,
    open_pos: usize,
    strict: bool,
    recover: bool,
) -> Result<&'a str, ParseError> {
    match c.find(close) {
        Some(at) => {
            let raw = &c.text[c.pos..at];
            c.pos = at + close.len();
            Ok(raw)
        }
        None if !strict && recover => {
            let end = next_tag_position(c).unwrap_or(c.text.len());
            let raw = &c.text[c.pos..end];
            c.pos = end;
            Ok(raw)
        }
        None => Err(ParseError { kind: ParseErrorKind::UnclosedTag, byte_offset: open_pos }),
    }
}

/// Parses a transcript.
///
/// Strict mode demands the exact segment order judge → mode tag → thinking
/// (think-on only) → answer with nothing but whitespace in between or after.
/// Lenient mode accepts a superset of strict: it additionally tolerates
/// missing `</judge>` / `</answer>` closers, recovering segment bodies by tag
/// position. The first violation in document order is reported.
pub fn parse_response(text: &str, strict: bool) -> Result<StructuredResponse, ParseError> {
    let mut c = Cursor { text, pos: 0 };

    c.skip_whitespace();
    let judge_open_pos = c.pos;
    if !c.eat_tag(JUDGE_OPEN) {
        return Err(ParseError { kind: ParseErrorKind::MissingJudge, byte_offset: c.pos });
    }
    let judge_raw = read_body(&mut c, JUDGE_CLOSE, judge_open_pos, strict, true)?;

    c.skip_whitespace();
    let mode = if c.eat_tag(THINK_ON_TAG) {
        ReasoningMode::ThinkOn
    } else if c.eat_tag(THINK_OFF_TAG) {
        ReasoningMode::ThinkOff
    } else if c.peek_tag(JUDGE_OPEN) {
        return Err(ParseError { kind: ParseErrorKind::DuplicateSegment, byte_offset: c.pos });
    } else {
        return Err(ParseError { kind: ParseErrorKind::MissingModeTag, byte_offset: c.pos });
    };

    let thinking_raw = match mode {
        ReasoningMode::ThinkOn => {
            c.skip_whitespace();
            let think_open_pos = c.pos;
            if c.eat_tag(THINK_OPEN) {
                Some(read_body(&mut c, THINK_CLOSE, think_open_pos, strict, false)?)
            } else if c.peek_tag(JUDGE_OPEN) || c.peek_tag(THINK_ON_TAG) || c.peek_tag(THINK_OFF_TAG) {
                return Err(ParseError { kind: ParseErrorKind::DuplicateSegment, byte_offset: c.pos });
            } else {
                // `<think_on>` promised a thinking block that never appears.
                return Err(ParseError { kind: ParseErrorKind::ThinkWithoutOn, byte_offset: c.pos });
            }
        }
        ReasoningMode::ThinkOff => {
            c.skip_whitespace();
            if c.peek_tag(THINK_OPEN) {
                return Err(ParseError { kind: ParseErrorKind::ThinkWithoutOn, byte_offset: c.pos });
            }
            None
        }
    };

    c.skip_whitespace();
    let answer_open_pos = c.pos;
    let answer_raw = if c.eat_tag(ANSWER_OPEN) {
        read_body(&mut c, ANSWER_CLOSE, answer_open_pos, strict, true)?
    } else if c.peek_tag(JUDGE_OPEN)
        || c.peek_tag(THINK_ON_TAG)
        || c.peek_tag(THINK_OFF_TAG)
        || c.peek_tag(THINK_OPEN)
    {
        return Err(ParseError { kind: ParseErrorKind::DuplicateSegment, byte_offset: c.pos });
    } else {
        return Err(ParseError { kind: ParseErrorKind::MissingAnswer, byte_offset: c.pos });
    };

    c.skip_whitespace();
    if c.pos < text.len() {
        return Err(ParseError { kind: ParseErrorKind::TrailingContent, byte_offset: c.pos });
    }

    Ok(StructuredResponse {
        judge_analysis: strip_boundary_newlines(judge_raw).to_owned(),
        mode,
        thinking: thinking_raw.map(|t| strip_boundary_newlines(t).to_owned()),
        answer: strip_boundary_newlines(answer_raw).to_owned(),
    })
}

/// Renders the canonical layout: one tag per line, segment bodies on their own
/// lines, one blank line between blocks.
///
/// The caller is expected to pass a schema-valid response (see
/// [`StructuredResponse::validate`]); a `thinking` value is only emitted in
/// think-on mode, and a missing one renders as an empty block.
pub fn render_response(r: &StructuredResponse) -> String {
    let mut out = String::new();
    out.push_str(JUDGE_OPEN);
    out.push('\n');
    out.push_str(&r.judge_analysis);
    out.push('\n');
    out.push_str(JUDGE_CLOSE);
    out.push_str("\n\n");
    out.push_str(r.mode.tag());
    out.push('\n');
    if r.mode == ReasoningMode::ThinkOn {
        out.push_str(THINK_OPEN);
        out.push('\n');
        out.push_str(r.thinking.as_deref().unwrap_or(""));
        out.push('\n');
        out.push_str(THINK_CLOSE);
        out.push_str("\n\n");
    }
    out.push_str(ANSWER_OPEN);
    out.push('\n');
    out.push_str(&r.answer);
    out.push('\n');
    out.push_str(ANSWER_CLOSE);
    out
}

/// Whitespace-delimited token count.
///
/// A proxy metric: real tokenizers count subwords, but whitespace tokens are
/// deterministic, dependency-free, and order the same transcripts the same
/// way, which is all the token-usage comparisons here need.
pub fn count_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}
