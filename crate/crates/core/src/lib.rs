//! Representation similarity with centered kernel alignment (CKA).
//!
//! - [`linalg`]: representation matrices, centering, Gram matrices, spectra, seeded RNG
//! - [`similarity`]: RBF bandwidths, kernels, biased/unbiased HSIC, full and minibatch CKA
//! - [`theory`]: large-distance limit of linear CKA under subset translation
//! - [`transforms`]: subset translation, margin-preserving directions, invertible maps
//! - [`synthetic`]: two-cube and Gaussian data sets
//! - [`manipulate`]: driving CKA to a target while preserving linear read-outs
//! - [`io`]: CSV and `RSM1` binary matrix files

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod io;
pub mod linalg;
pub mod manipulate;
pub mod similarity;
pub mod synthetic;
pub mod theory;
pub mod transforms;

pub use error::{Error, Result};
pub use linalg::{
    center_columns, covariance_spectrum, gram, sample_unit_direction, RepresentationMatrix,
    SeededRng, SpectrumSummary,
};
pub use manipulate::{
    lambda_step, linear_cka_gradient, log_cosh_map_loss, manipulate_to_target, CkaMap, Constraint,
    LambdaSchedulerState, ManipulationConfig, ManipulationOutcome, ManipulationTrace,
};
pub use similarity::{
    cka, hsic_biased, hsic_unbiased, kernel_matrix, minibatch_cka, rbf_bandwidth, unbiased_cka,
    BandwidthMode, CkaResult, Estimator, KernelMatrix, KernelSpec,
};
pub use synthetic::{gaussian_cloud, two_cubes, TwoCubeConfig, TwoCubes};
pub use theory::{
    gamma, participation_ratio, predict_limit, predict_limit_outlier, LimitPrediction,
};
pub use transforms::{
    apply_linear, check_separation, margin_preserving_direction, random_invertible_gaussian,
    subset_translate, Hyperplane, SeparationReport, TranslationSpec,
};
