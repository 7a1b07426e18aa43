//! Dense feed-forward networks with hand-written reverse-mode gradients, and
//! an adaptive-moment optimizer over flat parameter vectors.

mod adam;
mod mlp;

pub use adam::{polyak_update, Adam, AdamConfig};
pub use mlp::{Mlp, OutputActivation};
