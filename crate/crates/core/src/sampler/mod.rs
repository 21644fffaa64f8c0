//! Toy models, synthetic data and samplers that produce [`SampleStack`]s.
//!
//! [`SampleStack`]: crate::map::SampleStack

pub mod ebm;
pub mod ensemble;
pub mod generative;
pub mod grid;
pub mod langevin;
pub mod mlp;
pub mod segmenter;
pub mod synthetic;

pub use ebm::{
    ebm_langevin_chain, ebm_langevin_predict, ebm_update, ContrastivePair, EnergyFn, EnergyModel,
    LinearEnergy, MlpEnergy, QuadraticEnergy, StartMode,
};
pub use ensemble::{
    deep_ensemble_train, mc_dropout_stack, snapshot_stack, train_regressor, ModelSpec, Objective,
    SnapshotTrainer, TrainConfig,
};
pub use generative::{cvae_losses, gan_losses, DiagGaussian, ElboLoss, GanLosses};
pub use grid::{FeatureGrid, OutputHead};
pub use langevin::{
    abp_langevin_latent, abp_learn, AbpConfig, Chain, Example, LangevinConfig,
};
pub use mlp::{Activation, ToyMlp};
pub use segmenter::{train_segmenter, DualHeadSegmenter, SegSample, SegmenterConfig};
pub use synthetic::{make_synthetic, DatasetKind, SyntheticDataset};
