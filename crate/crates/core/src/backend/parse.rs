use serde::{Deserialize, Serialize};

use super::template::{CLOSE_TAG, OPEN_TAG};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParseDiagnostic {
    /// An opening tag with no closing tag before the end of the reply.
    Unterminated {
        offset: usize,
    },
    /// An opening tag followed by another opening tag before it closed.
    Nested {
        offset: usize,
    },
    /// A closing tag with no matching opening tag.
    StrayClose {
        offset: usize,
    },
    Empty {
        offset: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseOutcome {
    pub candidates: Vec<String>,
    pub diagnostics: Vec<ParseDiagnostic>,
    pub expected: usize,
}

impl ParseOutcome {
    pub fn count_mismatch(&self) -> bool {
        self.candidates.len() != self.expected
    }
}

/// Extract every well-formed `<candidate>…</candidate>` body, in order.
///
/// Never fails; malformed structure is reported through diagnostics.
pub fn parse_candidates(reply: &str, k_expected: usize) -> ParseOutcome {
    let mut candidates = Vec::new();
    let mut diagnostics = Vec::new();
    let mut cursor = 0;
    loop {
        let rest = &reply[cursor..];
        let open = rest.find(OPEN_TAG);
        let close = rest.find(CLOSE_TAG);
        let open_at = match (open, close) {
            (None, None) => break,
            (None, Some(c)) => {
                diagnostics.push(ParseDiagnostic::StrayClose { offset: cursor + c });
                cursor += c + CLOSE_TAG.len();
                continue;
            }
            (Some(o), Some(c)) if c < o => {
                diagnostics.push(ParseDiagnostic::StrayClose { offset: cursor + c });
                cursor += c + CLOSE_TAG.len();
                continue;
            }
            (Some(o), _) => cursor + o,
        };
        let body_start = open_at + OPEN_TAG.len();
        let after = &reply[body_start..];
        let next_open = after.find(OPEN_TAG);
        match after.find(CLOSE_TAG) {
            None => {
                diagnostics.push(ParseDiagnostic::Unterminated { offset: open_at });
                match next_open {
                    Some(o) => cursor = body_start + o,
                    None => break,
                }
            }
            Some(c) if next_open.is_some_and(|o| o < c) => {
                diagnostics.push(ParseDiagnostic::Nested { offset: open_at });
                cursor = body_start + next_open.unwrap_or_default();
            }
            Some(c) => {
                let body = after[..c].trim();
                if body.is_empty() {
                    diagnostics.push(ParseDiagnostic::Empty { offset: open_at });
                } else {
                    candidates.push(body.to_string());
                }
                cursor = body_start + c + CLOSE_TAG.len();
            }
        }
    }
    ParseOutcome {
        candidates,
        diagnostics,
        expected: k_expected,
    }
}
