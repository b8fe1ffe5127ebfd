//! Encoder/decoder networks: model descriptions, layer graphs, weights and
//! the forward pass.

mod build;
mod convert;
mod graph;
mod infer;
mod spec;
mod weights;

pub use build::build_model;
pub use convert::convert_upconv_weights;
pub use graph::{Layer, LayerGraph, LayerOp, ParamSpec, SkipEdge};
pub use infer::{infer, infer_traced};
pub use spec::{
    parse_resolution, DecoderKind, EncoderKind, ModelSpec, SkipKind, Widths, PRESETS,
    RESOLUTION_MULTIPLE, SCALED_WIDTH_DIVISOR,
};
pub use weights::{Param, WeightContainer, MAGIC as WEIGHTS_MAGIC, VERSION as WEIGHTS_VERSION};
