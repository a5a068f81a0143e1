//! Generative adversarial ensembles for data supported on disconnected
//! sets.
//!
//! A single continuous generator pushing a connected latent distribution
//! forward must place mass between the components of a disconnected
//! support. This crate trains and measures the alternatives: independent
//! per-class ensembles, ℓ1-coupled hybrids, the weight-tied endpoint, and
//! the cGAN and GM-GAN parameter-sharing views, all on 2-D point clouds.
//!
//! ```no_run
//! use ensgan_core::prelude::*;
//!
//! let data = DisconnectedDataset::two_blobs(2000, 7)?;
//! let cfg = TrainConfig::wasserstein(SharingMode::Independent, 2000, 7);
//! let g = MlpSpec::default_generator();
//! let d = MlpSpec::default_critic(OutputActivation::None);
//! let run = train_ensemble(&cfg, &g, &d, &data)?;
//! let report = evaluate_model(&run.model, &data, &EvalSettings::default())?;
//! println!("out-of-support mass {:.4}", report.oos.mass);
//! # Ok::<(), ensgan_core::Error>(())
//! ```

pub mod autodiff;
pub mod datasets;
pub mod error;
pub mod metrics;
pub mod networks;
pub mod objectives;
pub mod optim;
pub mod sampling;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::autodiff::{clamp_params, Activation, Tape, Var};
    pub use crate::datasets::{mle_mixture_weights, ComponentSpec, DisconnectedDataset};
    pub use crate::error::{Error, Result};
    pub use crate::metrics::{
        evaluate_model, evaluate_resampler, frechet_gaussian, inversion_mse, knn_precision_recall,
        EvalSettings, InversionSettings, MetricReport,
    };
    pub use crate::networks::{
        equivalent_width, Checkpoint, EnsembleModel, MemberParams, Members, MlpSpec,
        OutputActivation, ParamVector, SharingMode,
    };
    pub use crate::objectives::{Batch, Player, ValueKind};
    pub use crate::optim::OptimizerKind;
    pub use crate::sampling::{out_of_support_mass, sample_mixture, truncated_sample, OosEstimate};
    pub use crate::tensor::Tensor;
    pub use crate::training::{
        train, train_cgan, train_ensemble, train_gmgan, train_hybrid, train_single, train_tied,
        HistoryRow, Session, TrainConfig, TrainOutcome,
    };
}
