pub mod cli;
pub mod error;
pub mod denoiser;
pub mod diffusion;
pub mod numeric;
pub mod patch_grid;
pub mod radar;
pub mod rng;
pub mod spen;
pub mod verification;

pub use error::{Error, Result};
