//! Deep InfoMax: encoder, scoring networks, objectives and training.

mod encoder;
mod model;
mod objective;
mod prior;
mod scorer;

pub use encoder::{local_flat, local_rows, ConvSpec, DimEncoder, Encoded, EncoderConfig};
pub use model::{dim_train_step, DimConfig, DimModel, DimOptimizers, FeatureSource, Occlusion, StepMetrics};
pub use objective::{global_mi_objective, local_mi_objective, total_loss, DimHyperparams, DimLossParts};
pub use prior::{
    discriminator_loss, encoder_prior_loss, prior_match_losses, sample_prior, PriorDiscriminator, PriorLoss,
};
pub use scorer::{Embedder, Scorer, ScorerConfig, ScorerKind};
