//! The two-stage behavioral recognition model.
//!
//! Stage one encodes each 1-second window independently: a stem convolution,
//! three multi-dilation convolution blocks with squeeze-and-excitation
//! channel gates, a bidirectional GRU over timesteps, additive attention
//! pooling, and a linear projection to a `D`-dimensional embedding. Stage two
//! runs a single pre-LN transformer layer over the sequence of window
//! embeddings plus a learned class token with positional embeddings. A
//! scenario head reads the class token; the action head mixes a local
//! (per-window) and a contextual (transformer token) logit path through a
//! learned sigmoid gate.

mod checkpoint;
mod forward;
mod params;

pub use checkpoint::Checkpoint;
pub use forward::{forward, DropoutMode, ForwardOutput, ParamNodes};
pub use params::{init_params, param_count, ParamSet};
