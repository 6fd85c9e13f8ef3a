//! Fixed prompt templates for every agent interaction, plus the table
//! layout they embed.
//!
//! Placeholders are written `{name}` inside the template assets. Only the
//! names in [`Placeholder`] are markers; all other braces are literal, which
//! is what lets the JSON output schemas sit in the templates unescaped.

mod table;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use table::{serialize_table, TableBlock};

/// Version of the template asset set, bumped on any byte change.
pub const TEMPLATE_VERSION: &str = "v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TemplateId {
    CoT,
    PoT,
    CriticCritique,
    CriticFinal,
    ICriticReview,
    ICriticReconcile,
    CalExtract,
    CalImprove,
    CoTWithScaleNote,
}

impl TemplateId {
    pub const ALL: [TemplateId; 9] = [
        TemplateId::CoT,
        TemplateId::PoT,
        TemplateId::CriticCritique,
        TemplateId::CriticFinal,
        TemplateId::ICriticReview,
        TemplateId::ICriticReconcile,
        TemplateId::CalExtract,
        TemplateId::CalImprove,
        TemplateId::CoTWithScaleNote,
    ];

    /// Asset file stem, also used on the command line.
    pub fn name(self) -> &'static str {
        match self {
            TemplateId::CoT => "cot",
            TemplateId::PoT => "pot",
            TemplateId::CriticCritique => "critic_critique",
            TemplateId::CriticFinal => "critic_final",
            TemplateId::ICriticReview => "icritic_review",
            TemplateId::ICriticReconcile => "icritic_reconcile",
            TemplateId::CalExtract => "cal_extract",
            TemplateId::CalImprove => "cal_improve",
            TemplateId::CoTWithScaleNote => "cot_scale_note",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|id| id.name() == name)
    }

    fn body(self) -> &'static str {
        match self {
            TemplateId::CoT => include_str!("../../templates/cot.txt"),
            TemplateId::PoT => include_str!("../../templates/pot.txt"),
            TemplateId::CriticCritique => include_str!("../../templates/critic_critique.txt"),
            TemplateId::CriticFinal => include_str!("../../templates/critic_final.txt"),
            TemplateId::ICriticReview => include_str!("../../templates/icritic_review.txt"),
            TemplateId::ICriticReconcile => include_str!("../../templates/icritic_reconcile.txt"),
            TemplateId::CalExtract => include_str!("../../templates/cal_extract.txt"),
            TemplateId::CalImprove => include_str!("../../templates/cal_improve.txt"),
            TemplateId::CoTWithScaleNote => include_str!("../../templates/cot_scale_note.txt"),
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Placeholder {
    Text,
    Table,
    Question,
    CotOutput,
    CriticOutput,
    ICriticOutput,
    AnalystOutput,
    CalculatorOutput,
}

impl Placeholder {
    pub const ALL: [Placeholder; 8] = [
        Placeholder::Text,
        Placeholder::Table,
        Placeholder::Question,
        Placeholder::CotOutput,
        Placeholder::CriticOutput,
        Placeholder::ICriticOutput,
        Placeholder::AnalystOutput,
        Placeholder::CalculatorOutput,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Placeholder::Text => "text",
            Placeholder::Table => "table",
            Placeholder::Question => "question",
            Placeholder::CotOutput => "CoT output",
            Placeholder::CriticOutput => "critic agent output",
            Placeholder::ICriticOutput => "i-critic agent output",
            Placeholder::AnalystOutput => "analyst agent output",
            Placeholder::CalculatorOutput => "calculator agent output",
        }
    }

    pub fn marker(self) -> String {
        format!("{{{}}}", self.name())
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RenderError {
    #[error("no binding for placeholder {{{0}}}")]
    MissingBinding(&'static str),
    #[error("binding {{{0}}} is not used by this template")]
    UnknownPlaceholder(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Segment {
    Literal(&'static str),
    Slot(Placeholder),
}

#[derive(Debug)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub body: &'static str,
    segments: Vec<Segment>,
}

impl PromptTemplate {
    fn compile(id: TemplateId) -> Self {
        let body = id.body();
        let mut segments = Vec::new();
        let mut literal_start = 0;
        let mut i = 0;
        while let Some(off) = body[i..].find('{') {
            let open = i + off;
            let slot = body[open + 1..].find('}').and_then(|len| {
                let name = &body[open + 1..open + 1 + len];
                Placeholder::from_name(name).map(|p| (p, open + len + 2))
            });
            match slot {
                Some((p, end)) => {
                    if literal_start < open {
                        segments.push(Segment::Literal(&body[literal_start..open]));
                    }
                    segments.push(Segment::Slot(p));
                    literal_start = end;
                    i = end;
                }
                None => i = open + 1,
            }
        }
        if literal_start < body.len() {
            segments.push(Segment::Literal(&body[literal_start..]));
        }
        Self { id, body, segments }
    }

    /// Placeholders in order of first appearance.
    pub fn placeholders(&self) -> Vec<Placeholder> {
        let mut seen = Vec::new();
        for seg in &self.segments {
            if let Segment::Slot(p) = seg {
                if !seen.contains(p) {
                    seen.push(*p);
                }
            }
        }
        seen
    }

    /// Hex SHA-256 of the template body.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.body.as_bytes()))
    }

    /// Substitutes every placeholder exactly once, with no escaping or
    /// trimming. Bindings the template does not use are an error.
    pub fn render(&self, bindings: &Bindings) -> Result<String, RenderError> {
        let used = self.placeholders();
        if let Some(extra) = bindings.0.keys().find(|p| !used.contains(p)) {
            return Err(RenderError::UnknownPlaceholder(extra.name().to_owned()));
        }
        self.render_lenient(bindings)
    }

    /// Like [`render`](Self::render) but ignores unused bindings.
    pub fn render_lenient(&self, bindings: &Bindings) -> Result<String, RenderError> {
        let mut out = String::with_capacity(self.body.len());
        for seg in &self.segments {
            match seg {
                Segment::Literal(text) => out.push_str(text),
                Segment::Slot(p) => {
                    let value = bindings.0.get(p).ok_or(RenderError::MissingBinding(p.name()))?;
                    out.push_str(value);
                }
            }
        }
        Ok(out)
    }
}

pub fn template(id: TemplateId) -> &'static PromptTemplate {
    static TEMPLATES: OnceLock<Vec<PromptTemplate>> = OnceLock::new();
    let all = TEMPLATES.get_or_init(|| TemplateId::ALL.iter().map(|&id| PromptTemplate::compile(id)).collect());
    &all[TemplateId::ALL.iter().position(|&t| t == id).unwrap()]
}

pub fn render(id: TemplateId, bindings: &Bindings) -> Result<String, RenderError> {
    template(id).render(bindings)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Bindings(BTreeMap<Placeholder, String>);

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, placeholder: Placeholder, value: impl Into<String>) -> Self {
        self.0.insert(placeholder, value.into());
        self
    }

    pub fn set(&mut self, placeholder: Placeholder, value: impl Into<String>) {
        self.0.insert(placeholder, value.into());
    }

    /// Binds every placeholder to its own marker text.
    pub fn markers(placeholders: &[Placeholder]) -> Self {
        placeholders
            .iter()
            .fold(Self::new(), |b, &p| b.with(p, p.marker()))
    }

    /// Builds bindings from placeholder names, rejecting unknown names.
    pub fn from_names<'a>(
        pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<Self, RenderError> {
        let mut b = Self::new();
        for (name, value) in pairs {
            let p = Placeholder::from_name(name)
                .ok_or_else(|| RenderError::UnknownPlaceholder(name.to_owned()))?;
            b.set(p, value);
        }
        Ok(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn placeholder_sets() {
        use Placeholder::*;
        assert_eq!(template(TemplateId::CoT).placeholders(), [Text, Table, Question]);
        assert_eq!(
            template(TemplateId::CriticFinal).placeholders(),
            [Text, Table, Question, CotOutput, CriticOutput]
        );
        assert_eq!(
            template(TemplateId::ICriticReconcile).placeholders(),
            [CotOutput, ICriticOutput]
        );
        assert_eq!(template(TemplateId::CalExtract).placeholders(), [AnalystOutput]);
        assert_eq!(
            template(TemplateId::CalImprove).placeholders(),
            [AnalystOutput, CalculatorOutput]
        );
    }

    #[test]
    fn missing_binding() {
        let b = Bindings::new()
            .with(Placeholder::Text, "t")
            .with(Placeholder::Table, "| x | ");
        assert_eq!(
            render(TemplateId::CoT, &b),
            Err(RenderError::MissingBinding("question"))
        );
    }

    #[test]
    fn extra_binding_is_rejected_in_strict_mode() {
        let b = Bindings::markers(&[Placeholder::Text, Placeholder::Table, Placeholder::Question])
            .with(Placeholder::CriticOutput, "x");
        assert_eq!(
            render(TemplateId::CoT, &b),
            Err(RenderError::UnknownPlaceholder("critic agent output".into()))
        );
        assert!(template(TemplateId::CoT).render_lenient(&b).is_ok());
    }

    #[test]
    fn bound_values_are_not_rescanned() {
        let b = Bindings::new()
            .with(Placeholder::Text, "{question}")
            .with(Placeholder::Table, "")
            .with(Placeholder::Question, "q?");
        let out = render(TemplateId::CoT, &b).unwrap();
        assert!(out.contains("### Text\n{question}\n"));
        assert!(out.ends_with("### Question\nq?"));
    }

    #[test]
    fn names_round_trip() {
        for id in TemplateId::ALL {
            assert_eq!(TemplateId::from_name(id.name()), Some(id));
        }
        assert!(Bindings::from_names([("nope", "x")]).is_err());
        assert_eq!(
            Bindings::from_names([("CoT output", "x")]).unwrap(),
            Bindings::new().with(Placeholder::CotOutput, "x")
        );
    }

    #[test]
    fn json_schema_braces_are_literal() {
        let body = template(TemplateId::ICriticReconcile).body;
        assert!(body.contains("format:\n{\n    \"steps\""));
        assert!(!body.contains("{{"));
    }
}
