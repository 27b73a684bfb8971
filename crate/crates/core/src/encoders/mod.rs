//! Sentence encoders: convolution with attention pooling, bidirectional
//! SRU, and a self-attention word encoder.

mod cnn;
mod layers;
mod sru;
mod transformer;

pub use cnn::{CnnAttEncoder, ConvBank, ConvFilter, Pooled};
pub use layers::{glorot, uniform, Linear};
pub use sru::{BiSruStack, BiStates, SruLayer};
pub use transformer::{
    EncoderBlock, LayerNormParams, TransformerDims, TransformerOutput, TransformerWordEncoder, LAYER_NORM_EPS,
};
