//! Deterministic generation of mutant question–image–answer samples, plus
//! the numeric objectives used to train against them.
//!
//! The data side: rasterize object polygons to pixel masks, remove or
//! color-invert the matching image regions, negate or reword questions, and
//! derive the mutant's answer by rule (count arithmetic, color inversion on
//! a fixed palette, clustered answer categories). Everything is seeded and
//! reproducible.
//!
//! The numeric side: a shared projection layer, softmax cross entropy over
//! type-masked logits, a contrastive loss over answer-embedding cosines, and
//! a pairwise consistency penalty, all with analytic gradients verified
//! against central finite differences, plus a small end-to-end trainer.
//!
//! Numeric code is generic over [`num::Real`] (f32 or f64); the aliases at
//! the crate root fix the default scalar to f64.

pub mod answer;
pub mod cluster;
pub mod error;
pub mod image;
pub mod io;
pub mod lexicon;
pub mod model;
pub mod num;
pub mod objective;
pub mod pipeline;
pub mod question;

pub use error::{Error, Result};
pub use model::{
    AnswerType, InstanceAnnotation, MutantRecord, MutationKind, RasterImage, VqaSample,
};

/// Default scalar for the numeric modules.
pub type Scalar = f64;

pub type ProjectionLayer = objective::ProjectionLayer<Scalar>;
pub type ObjectiveBatch = objective::ObjectiveBatch<Scalar>;
pub type TotalLossConfig = objective::TotalLossConfig<Scalar>;
pub type TrainState = objective::TrainState<Scalar>;
pub type ToyTask = objective::ToyTask<Scalar>;
pub type KmeansResult = cluster::KmeansResult<Scalar>;
