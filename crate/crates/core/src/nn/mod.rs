//! Dense feed-forward networks with rectifier, tanh and dual-pathway units.

mod activation;
mod batch;
mod dual;
mod loss;
mod network;

pub use activation::{dual_pathway, dual_pathway_grad, ActivationKind, ActivationTag};
pub use batch::PatchBatch;
pub use dual::{compact_dual, expand_dual};
pub use loss::mse_loss;
pub use network::{ForwardCache, Layer, LayerSpec, NetworkParams, Weight};
