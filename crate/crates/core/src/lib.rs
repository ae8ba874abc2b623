//! Transform-domain tensor algebra and tensor neural networks.
//!
//! The crate is organised bottom-up:
//!
//! - [`transform`]: the orthogonal mode-3 transform `M` that defines the t-product.
//! - [`tensor`]: dense 3-way tensors and the t-product algebra built on `M`.
//! - [`tsvd`]: t-SVD, tubal rank, optimal low-tubal-rank truncation, stable rank.
//! - [`tnn`]: t-product neural networks with exact reverse-mode gradients.
//! - [`loss`] and [`adversarial`]: margin losses, attacks, adversarial risk and margins.
//! - [`training`]: adversarial GD/SGD with rank projection or nuclear-norm proximal steps.
//! - [`bounds`]: closed-form generalization-bound evaluators and the compression certificate.
//! - [`data`]: datasets of t-vectors and a seeded teacher-labelled generator.
//!
//! Everything here is `no_std` with `alloc`. File formats, the CLI and the
//! experiment drivers live in the companion `tnn-tools` crate.

#![no_std]
// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod adversarial;
pub mod bounds;
pub mod data;
mod error;
pub mod loss;
pub mod math;
pub mod stats;
mod svd;
pub mod tensor;
pub mod tnn;
pub mod training;
pub mod transform;
pub mod tsvd;

pub use adversarial::{AttackConfig, AttackKind, MarginMetrics};
pub use data::{Dataset, Sample};
pub use error::{Error, Result};
pub use loss::{LossKind, LossSpec};
pub use tensor::Tensor3;
pub use tnn::TnnModel;
pub use training::{Constraint, Optimizer, TrainConfig, TrainLogRecord};
pub use transform::{OrthogonalTransform, TransformKind};
pub use tsvd::TsvdFactors;
