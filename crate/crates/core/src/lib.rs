//! Guess Who? played against a zero-shot image classifier.
//!
//! The player asks yes/no questions about the faces on a board. Each question
//! becomes a pair of captions; a dual-encoder model decides, per image, which
//! caption fits better, and every card answered differently from the hidden
//! winner is eliminated. The [`benchmark`] module measures how well a set of
//! prompt pairs separates labeled face attributes.

pub mod benchmark;
pub mod catalog;
pub mod classifier;
pub mod engine;
pub mod parallel;

pub use catalog::{Catalog, CatalogEntry, CatalogError, Method, PromptPair};
pub use classifier::{BinaryPrediction, ClassifierError, Decision, EncoderBackend, ImageRef};
pub use engine::{GameSession, Question, SessionView, TurnRecord};
pub use parallel::Execution;
