//! Treat a probabilistic context-free grammar as a fully known language
//! source: sample constrained corpora, compute exact masked and causal token
//! probabilities (hence exact perplexity lower bounds), and evaluate external
//! language-model score files against the grammar's true distribution.

pub mod compare;
pub mod corpus;
pub mod earley;
pub mod grammar;
pub mod inside_outside;
pub mod num;
pub mod sampler;
pub mod score;
pub mod stats;

pub mod cli;
