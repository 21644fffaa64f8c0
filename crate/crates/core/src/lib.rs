//! Dense per-pixel uncertainty: decomposition of sampled prediction stacks
//! into predictive, aleatoric and epistemic maps, heteroscedastic losses,
//! toy samplers (MC-dropout, ensembles, Langevin ABP/EBM) and patch-based
//! calibration scores (PAvPU and friends).

// `!(x >= 0.0)` is used on purpose: unlike `x < 0.0` it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calib;
pub mod decompose;
pub mod error;
pub mod io;
pub mod loss;
pub mod map;
pub mod rng;
pub mod sampler;

pub use decompose::{
    best_model_aleatoric, decompose_blvm_entropy, decompose_blvm_variance, decompose_entropy,
    decompose_variance, entropy_map, mean_prediction,
};
pub use error::{Result, UqError};
pub use map::{
    DenseMap, MapKind, Measure, NestedSampleStack, Origin, SampleStack, Shape, UncertaintyMaps,
};
