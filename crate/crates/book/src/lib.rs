//! The chapters of `book/src`, included here so `cargo test` runs their
//! code blocks.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/evidence.md")]
pub mod evidence {}
#[doc = include_str!("../../../book/src/factors.md")]
pub mod factors {}
#[doc = include_str!("../../../book/src/debate.md")]
pub mod debate {}
#[doc = include_str!("../../../book/src/citations.md")]
pub mod citations {}
#[doc = include_str!("../../../book/src/analysis.md")]
pub mod analysis {}
#[doc = include_str!("../../../book/src/reports.md")]
pub mod reports {}
#[doc = include_str!("../../../book/src/rei.md")]
pub mod rei {}
#[doc = include_str!("../../../book/src/statistics.md")]
pub mod statistics {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
