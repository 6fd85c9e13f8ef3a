//! Mock backend scripts for `numqa run --backend mock`.
//!
//! ```json
//! {"model": "mock-model", "turns": [{"respond": "..."}]}
//! {"documents": {"tatqa-dev-0": [{"respond": "..."}]}}
//! ```
//!
//! A flat `turns` list is consumed in call order, so it only makes sense
//! with one worker. A `documents` map routes every call to the script of its
//! document and is safe at any concurrency.

use std::collections::BTreeMap;
use std::path::Path;

use numqa_core::gateway::{script_mock, ChatBackend, DocumentMock, GatewayError, MockTurn};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScript {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub turns: Vec<MockTurn>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub documents: BTreeMap<String, Vec<MockTurn>>,
}

impl MockScript {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let script: MockScript = serde_json::from_str(&text)?;
        if script.turns.is_empty() == script.documents.is_empty() {
            anyhow::bail!("mock script needs exactly one of `turns` or `documents`");
        }
        Ok(script)
    }

    pub fn is_sequential(&self) -> bool {
        !self.turns.is_empty()
    }

    pub fn backend(&self) -> Result<Box<dyn ChatBackend>, GatewayError> {
        Ok(if self.is_sequential() {
            Box::new(script_mock(self.turns.clone())?)
        } else {
            Box::new(DocumentMock::new(self.documents.clone())?)
        })
    }
}
