//! Every chapter of the book is compiled here so its listings run as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/data.md")]
pub mod data {}

#[doc = include_str!("../../../book/src/boosting.md")]
pub mod boosting {}

#[doc = include_str!("../../../book/src/genetic.md")]
pub mod genetic {}

#[doc = include_str!("../../../book/src/importance.md")]
pub mod importance {}

#[doc = include_str!("../../../book/src/clustering.md")]
pub mod clustering {}

#[doc = include_str!("../../../book/src/pipeline.md")]
pub mod pipeline {}
