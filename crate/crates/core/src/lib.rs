//! Multi-agent numerical question answering over financial tables and text.
//!
//! An analyst agent answers with chain-of-thought or a program; a critic or
//! improved critic may revise the answer; a calculator agent extracts the
//! arithmetic from the reasoning steps and recomputes it with the safe
//! evaluator in [`expr`]. Everything talks to an LLM through
//! [`gateway::Gateway`], which can be backed by a live OpenAI-compatible
//! endpoint or a scripted mock.

pub mod answer;
pub mod dataset;
pub mod expr;
pub mod gateway;
pub mod pipeline;
pub mod prompt;
pub mod report;
