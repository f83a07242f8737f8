//! The mfcca guide. Every snippet in it runs as a doc-test.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/returns.md")]
pub mod returns {}

#[doc = include_str!("../../../book/src/fluctuation.md")]
pub mod fluctuation {}

#[doc = include_str!("../../../book/src/spectrum.md")]
pub mod spectrum {}

#[doc = include_str!("../../../book/src/cross-correlation.md")]
pub mod cross_correlation {}

#[doc = include_str!("../../../book/src/tails.md")]
pub mod tails {}

#[doc = include_str!("../../../book/src/networks.md")]
pub mod networks {}

#[doc = include_str!("../../../book/src/synthetic.md")]
pub mod synthetic {}

#[doc = include_str!("../../../book/src/pipeline.md")]
pub mod pipeline {}

#[doc = include_str!("../../../README.md")]
pub mod readme {}
