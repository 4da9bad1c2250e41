//! Repository-level code retrieval over a typed code knowledge graph.
//!
//! The pipeline: [`parser`] turns source files into per-file records,
//! [`builder`] stitches them into a [`graph::CodeGraph`], [`annotate`] adds
//! descriptions and embeddings bottom-up, and queries are answered either by
//! the [`cypher`] engine or by the [`mcts`] graph search, with [`router`]
//! choosing between the two.

pub mod annotate;
pub mod builder;
pub mod cypher;
pub mod encoders;
pub mod eval;
pub mod graph;
pub mod mcts;
pub mod parser;
pub mod prompts;
pub mod router;

pub mod fixtures;
