//! offtrack: a harness for measuring how reasoning LLMs behave when forced
//! to continue trajectories they did not produce.
//!
//! The pipeline samples solo trajectories from a served model, splices
//! truncated foreign prefixes into fresh prompts (distracting steers from
//! other questions, guiding steers from stronger models), forces
//! completions, verifies the answers, and aggregates recoverability and
//! guidability scores with the supporting statistics.

pub mod cli;
pub mod gateway;
pub mod metrics;
pub mod model;
pub mod reporter;
pub mod segmenter;
pub mod simreasoner;
pub mod testgen;
pub mod verifier;

pub use cli::{Config, RunContext};
pub use model::{Question, QuestionSet, RunManifest, SteeredItem, Trajectory};
