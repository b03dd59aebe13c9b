//! Reference models: a binary latent factor model, a sigmoid belief network
//! and a small Gaussian-latent variational autoencoder.

pub mod factor;
pub mod sbn;
pub mod vae;
