//! Network backbone, input encoding and the structure-preserving wrappers.

pub mod checkpoint;
mod encoding;
mod resnet;
mod surrogate;

pub use encoding::{fourier_embed, fourier_embed_dx, InputEncoding};
pub use resnet::{describe, xavier_init, AdaptiveResNet, ArraySlot, ResNetShape, BETA_INIT, BETA_MAX, BETA_MIN};
pub use surrogate::{row, FieldVars1D, FieldVars2D, NetBundle, SurrogateConfig, SurrogateSet1D, SurrogateSet2D, SIGN_PATTERNS};
