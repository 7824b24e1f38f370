//! Compiles the guide's code blocks as doctests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/geometry.md")]
pub mod geometry {}
#[doc = include_str!("../../../book/src/energies.md")]
pub mod energies {}
#[doc = include_str!("../../../book/src/sampler.md")]
pub mod sampler {}
#[doc = include_str!("../../../book/src/oracle.md")]
pub mod oracle {}
#[doc = include_str!("../../../book/src/scans.md")]
pub mod scans {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
#[doc = include_str!("../../../book/src/reproducibility.md")]
pub mod reproducibility {}
