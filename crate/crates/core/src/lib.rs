pub mod autodiff;
pub mod data;
pub mod error;
pub mod fed;
pub mod labels;
pub mod metrics;
pub mod model;
pub mod params;
pub mod rng;
pub mod store;
pub mod tensor;

pub use error::{Error, Result};
pub use params::ModelParams;
pub use tensor::{Fill, Tensor};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/autodiff.md")]
    mod autodiff {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/federation.md")]
    mod federation {}
    #[doc = include_str!("../../../book/src/privacy.md")]
    mod privacy {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
}
