//! Scripted backend for offline, reproducible runs.
//!
//! Each call consumes the next [`MockTurn`]. A turn may require that the
//! outgoing user message contains a substring, which turns a replay into a
//! check that the pipeline sent the expected prompt.

use std::collections::BTreeMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ChatBackend, ChatRequest, ChatResponse, FinishReason, GatewayError, Provenance, Usage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockFailure {
    ContextLength,
    Transport,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MockTurn {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect_substring: Option<String>,
    #[serde(default)]
    pub respond: String,
    #[serde(default, skip_serializing_if = "is_stop")]
    pub finish_reason: FinishReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail: Option<MockFailure>,
}

fn is_stop(r: &FinishReason) -> bool {
    *r == FinishReason::Stop
}

impl MockTurn {
    pub fn respond(text: impl Into<String>) -> Self {
        Self {
            respond: text.into(),
            ..Self::default()
        }
    }

    pub fn expecting(expect: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            expect_substring: Some(expect.into()),
            respond: text.into(),
            ..Self::default()
        }
    }

    pub fn fail(failure: MockFailure) -> Self {
        Self {
            fail: Some(failure),
            ..Self::default()
        }
    }

    pub fn truncated(text: impl Into<String>) -> Self {
        Self {
            respond: text.into(),
            finish_reason: FinishReason::Length,
            ..Self::default()
        }
    }
}

#[derive(Debug)]
pub struct MockBackend {
    turns: Vec<MockTurn>,
    next: Mutex<usize>,
}

/// Builds a mock that answers with `turns` in order.
pub fn script_mock(turns: Vec<MockTurn>) -> Result<MockBackend, GatewayError> {
    if turns.is_empty() {
        return Err(GatewayError::InvalidScript("script has no turns".into()));
    }
    Ok(MockBackend {
        turns,
        next: Mutex::new(0),
    })
}

impl MockBackend {
    /// Number of turns consumed so far.
    pub fn calls(&self) -> usize {
        *self.next.lock().unwrap()
    }

    pub fn remaining(&self) -> usize {
        self.turns.len() - self.calls()
    }
}

impl ChatBackend for MockBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let index = {
            let mut next = self.next.lock().unwrap();
            if *next >= self.turns.len() {
                return Err(GatewayError::MockScriptExhausted { calls: *next });
            }
            *next += 1;
            *next - 1
        };
        let turn = &self.turns[index];
        let number = index + 1;

        if let Some(expected) = &turn.expect_substring {
            let sent = req.last_user_message().unwrap_or_default();
            if !sent.contains(expected.as_str()) {
                return Err(GatewayError::MockExpectationFailed {
                    turn: number,
                    expected: expected.clone(),
                });
            }
        }
        match turn.fail {
            Some(MockFailure::ContextLength) => {
                return Err(GatewayError::ContextLengthExceeded(format!(
                    "scripted failure at turn {number}"
                )))
            }
            Some(MockFailure::Transport) => {
                return Err(GatewayError::Transport(format!(
                    "scripted failure at turn {number}"
                )))
            }
            None => {}
        }

        let prompt_tokens = req.estimated_prompt_tokens() as u64;
        Ok(ChatResponse {
            content: turn.respond.clone(),
            finish_reason: turn.finish_reason,
            usage: Usage {
                prompt_tokens,
                completion_tokens: turn.respond.chars().count().div_ceil(4) as u64,
            },
            provenance: Provenance::Mock,
        })
    }

    fn name(&self) -> &str {
        "mock"
    }
}

/// Routes each request to the script of the document it belongs to, so
/// documents can run concurrently without interleaving their turns.
#[derive(Debug)]
pub struct DocumentMock {
    scripts: BTreeMap<String, MockBackend>,
}

impl DocumentMock {
    pub fn new(scripts: BTreeMap<String, Vec<MockTurn>>) -> Result<Self, GatewayError> {
        let scripts = scripts
            .into_iter()
            .map(|(doc, turns)| {
                script_mock(turns)
                    .map(|m| (doc.clone(), m))
                    .map_err(|e| GatewayError::InvalidScript(format!("document {doc}: {e}")))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { scripts })
    }

    /// Unconsumed turns per document.
    pub fn remaining(&self) -> BTreeMap<&str, usize> {
        self.scripts
            .iter()
            .map(|(doc, m)| (doc.as_str(), m.remaining()))
            .collect()
    }
}

impl ChatBackend for DocumentMock {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let doc = req
            .document_id
            .as_deref()
            .ok_or_else(|| GatewayError::InvalidScript("request has no document id".into()))?;
        match self.scripts.get(doc) {
            Some(mock) => mock.complete(req),
            None => Err(GatewayError::InvalidScript(format!(
                "no script for document {doc}"
            ))),
        }
    }

    fn name(&self) -> &str {
        "mock"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(prompt: &str) -> ChatRequest {
        ChatRequest::single("mock-model", prompt, 32)
    }

    #[test]
    fn responds_in_order_then_exhausts() {
        let mock = script_mock(vec![MockTurn::respond("one"), MockTurn::respond("two")]).unwrap();
        assert_eq!(mock.complete(&req("a")).unwrap().content, "one");
        let second = mock.complete(&req("b")).unwrap();
        assert_eq!(second.content, "two");
        assert_eq!(second.provenance, Provenance::Mock);
        assert_eq!(
            mock.complete(&req("c")),
            Err(GatewayError::MockScriptExhausted { calls: 2 })
        );
        assert_eq!(mock.remaining(), 0);
    }

    #[test]
    fn expectation_guard_names_the_turn() {
        let mock = script_mock(vec![MockTurn::expecting("### Question", "x")]).unwrap();
        assert_eq!(
            mock.complete(&req("no heading here")),
            Err(GatewayError::MockExpectationFailed {
                turn: 1,
                expected: "### Question".into()
            })
        );

        let mock = script_mock(vec![MockTurn::expecting("### Question", "x")]).unwrap();
        assert!(mock.complete(&req("...\n### Question\nWhy?")).is_ok());
    }

    #[test]
    fn empty_script_is_rejected() {
        assert!(matches!(script_mock(vec![]), Err(GatewayError::InvalidScript(_))));
    }

    #[test]
    fn script_turns_deserialize_with_defaults() {
        let turns: Vec<MockTurn> = serde_json::from_str(
            r#"[{"respond": "a"}, {"expect_substring": "x", "respond": "b", "finish_reason": "length"}, {"fail": "transport"}]"#,
        )
        .unwrap();
        assert_eq!(turns[0], MockTurn::respond("a"));
        assert_eq!(turns[1].finish_reason, FinishReason::Length);
        assert_eq!(turns[2].fail, Some(MockFailure::Transport));
    }

    #[test]
    fn document_mock_routes_by_document() {
        let mock = DocumentMock::new(BTreeMap::from([
            ("a".to_string(), vec![MockTurn::respond("for a")]),
            ("b".to_string(), vec![MockTurn::respond("for b")]),
        ]))
        .unwrap();
        let b = mock.complete(&req("q").for_document("b")).unwrap();
        assert_eq!(b.content, "for b");
        assert_eq!(mock.remaining()["a"], 1);
        assert!(mock.complete(&req("q").for_document("c")).is_err());
        assert!(mock.complete(&req("q")).is_err());
    }
}
