//! Structure-preserving summation of tensor networks.
//!
//! The central operation is summing two tensors that are held in factored
//! form without contracting either one to a dense array: matrix chains are
//! summed by bordering the end links and block-diagonalizing the interior,
//! and Tucker-format networks are summed by concatenating factor matrices
//! and stacking the cores along the superdiagonal of a block tensor. The
//! represented sum is exact; only the representation grows.
//!
//! On top of that sit the pieces of an image-classification pipeline that
//! uses the summation structure for feature fusion: per-sample Tucker
//! decomposition with core normalization, a common factor basis extracted
//! from the concatenated per-sample factors, projection of every sample
//! onto that basis, and a Gaussian-kernel SVM over the projected cores,
//! together with raw-pixel and concatenated-decomposition baselines.
//!
//! Conventions used throughout:
//! - tensor elements are stored with the first mode varying fastest, so an
//!   order-2 tensor is a column-major matrix;
//! - modes are indexed from 0;
//! - all scalars are `f64`.

pub mod classify;
pub mod data;
pub mod error;
pub mod features;
pub mod linalg;
pub mod sum;
pub mod tensor;
pub mod tucker;

pub use classify::{ConfusionMatrix, SvmModel};
pub use data::{DatasetManifest, LabeledTensor, SynthConfig};
pub use error::{Error, Result};
pub use features::{BasisFit, CommonBasis, FeatureVector};
pub use linalg::{svd, symmetric_eigen, tsvd, EigResult, SvdResult};
pub use sum::{sum_chains, sum_many, sum_tucker, superdiag_stack, BlockCore, MatrixChain};
pub use tensor::{contract, outer, DenseTensor, Matrix};
pub use tucker::TuckerNetwork;
