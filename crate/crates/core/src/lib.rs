//! Collaborative path reasoning over paired semantic graphs.
//!
//! Two agents walk labeled directed multigraphs — one built from video
//! triplets, one from dialogue context — while a shared recurrent
//! communicator passes each agent's last (relation, entity) observation to
//! the other. Paths are scored by unigram overlap with reference
//! descriptions and the policies are trained with score-weighted log
//! likelihood. The crate covers graph construction, embedding
//! initialization from word vectors, the communicator and per-agent edge
//! policies, reward computation, synthetic task generation with exact
//! oracles, training, evaluation, and answer assembly.

pub mod assemble;
pub mod comms;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod learn;
pub mod lexicon;
pub mod model;
pub mod policy;
pub mod reward;
pub mod seeding;
pub mod semgraph;
pub mod synth;

pub use error::{CopathError, Result};
