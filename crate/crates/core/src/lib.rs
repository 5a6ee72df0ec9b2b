//! Schema-grounded visual question answering.
//!
//! The pipeline has three stages plus evaluation:
//!
//! 1. [`extraction`] asks a language model for a short schema program that
//!    decomposes an abstract concept (for example `maze`) into components.
//! 2. [`grounding`] resolves each component on an image with a vision-language
//!    model, in dependency order, conditioning on what was already resolved.
//! 3. [`qa`] answers questions with the resolved schema in the prompt.
//! 4. [`eval`] scores predictions against human annotations.
//!
//! Models are reached through [`gateway`], which also provides a fixture-driven
//! scripted backend and a content-addressed response cache.

pub mod error;
pub mod eval;
pub mod extraction;
pub mod gateway;
pub mod grounding;
pub mod phrase;
pub mod pipeline;
pub mod qa;
pub mod schema;

pub use error::{Error, Result};
