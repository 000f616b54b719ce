//! Statement-level vulnerability detection over program dependence graphs,
//! with edge-mask explanations of each detection.

pub mod frontend;
pub mod corpus;
pub mod features;
pub mod encoders;
pub mod explainer;
pub mod metrics;
pub mod model;
pub mod patterns;
pub mod pipeline;

pub use pdgvd_autodiff as autodiff;

// Code blocks in the book run as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/frontend.md")]
    mod frontend {}
    #[doc = include_str!("../../../book/src/autodiff.md")]
    mod autodiff {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/explaining.md")]
    mod explaining {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/patterns.md")]
    mod patterns {}
    #[doc = include_str!("../../../book/src/corpus.md")]
    mod corpus {}
}
