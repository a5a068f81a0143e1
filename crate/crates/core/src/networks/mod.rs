//! Dense generators and critics, ensemble storage and the structural views
//! of an ensemble member.

mod budget;
mod checkpoint;
mod ensemble;
mod mlp;
mod views;

pub use budget::{dcgan_critic_params, dcgan_generator_params, equivalent_width};
pub use checkpoint::Checkpoint;
pub use ensemble::{
    pairwise_l1, validate_weights, EnsembleModel, MemberParams, Members, SharingMode,
};
pub use mlp::{BoundMlp, MlpSpec, OutputActivation, ParamVector};
pub use views::{affine_latent, cgan_member, concat_one_hot, conditional_network, gmgan_member};
