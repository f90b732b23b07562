pub mod constraints;
pub mod decide;
pub mod embed;
pub mod error;
pub mod features;
pub mod harness;
pub mod kb;
pub mod relate;
pub mod subgraph;
pub mod text;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/knowledge-base.md")]
    mod knowledge_base {}
    #[doc = include_str!("../../../book/src/candidates.md")]
    mod candidates {}
    #[doc = include_str!("../../../book/src/constraints.md")]
    mod constraints {}
    #[doc = include_str!("../../../book/src/link-prediction.md")]
    mod link_prediction {}
    #[doc = include_str!("../../../book/src/decisions.md")]
    mod decisions {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
}
