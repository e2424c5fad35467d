//! Learnable and normalizing blocks: instance normalization, the complex
//! interpolation layer, attention over variates and the flow-head MLP.

pub mod complex_linear;
pub mod flow_head;
pub mod mha;
pub mod rin;

pub use complex_linear::{complex_interpolate, ComplexLinearLayer};
pub use flow_head::{time_embed, FlowHead, TIME_EMBED_DIM};
pub use mha::MhaBlock;
pub use rin::{rin_denormalize, rin_normalize, RinAffine, RinState, RinStats, SCALE_FLOOR};
