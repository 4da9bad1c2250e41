//! Doc-test harness for the guide in `book/`.
//!
//! Each chapter is pulled in as a module doc so `cargo test` compiles and runs
//! its Rust samples.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/graph.md")]
pub mod graph {}

#[doc = include_str!("../../../book/src/annotation.md")]
pub mod annotation {}

#[doc = include_str!("../../../book/src/cypher.md")]
pub mod cypher {}

#[doc = include_str!("../../../book/src/search.md")]
pub mod search {}

#[doc = include_str!("../../../book/src/routing.md")]
pub mod routing {}

#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
