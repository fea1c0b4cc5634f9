//! The guide's chapters as doc-tested modules. Every fenced Rust block in
//! `book/src` compiles and runs under `cargo test`, so the book and the
//! library cannot drift apart. Render the prose with `mdbook build book`.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/surfaces.md")]
pub mod surfaces {}

#[doc = include_str!("../../../book/src/matrices.md")]
pub mod matrices {}

#[doc = include_str!("../../../book/src/fitting.md")]
pub mod fitting {}

#[doc = include_str!("../../../book/src/stability.md")]
pub mod stability {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
