use thiserror::Error;

use crate::tensor::Shape4;

/// Errors raised by the kernels, model construction and weight I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape {0}: every dimension must be at least 1")]
    InvalidShape(Shape4),

    #[error("data length {len} does not match shape {shape} ({expected} elements)")]
    DataLength {
        shape: Shape4,
        len: usize,
        expected: usize,
    },

    #[error("channel mismatch: input has {input} channels, kernel expects {kernel}")]
    ChannelMismatch { input: usize, kernel: usize },

    #[error("shape mismatch: {left} vs {right}")]
    ShapeMismatch { left: Shape4, right: Shape4 },

    #[error("{kh}x{kw} kernel with stride {stride} produces an empty output on {h}x{w} input")]
    EmptyOutput {
        h: usize,
        w: usize,
        kh: usize,
        kw: usize,
        stride: usize,
    },

    #[error("cannot max-pool odd spatial size {h}x{w}")]
    OddDims { h: usize, w: usize },

    #[error("kernel is {kh}x{kw}, expected {expected}")]
    KernelExtent {
        kh: usize,
        kw: usize,
        expected: &'static str,
    },

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("parameter length {got} does not match {expected} channels")]
    ParamLength { got: usize, expected: usize },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("stride must be positive")]
    ZeroStride,

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("layer `{layer}`: missing weight `{key}`")]
    MissingWeight { layer: String, key: String },

    #[error("layer `{layer}`: {source}")]
    Layer {
        layer: String,
        #[source]
        source: Box<Error>,
    },

    #[error("weight file: {0}")]
    Format(String),

    #[error("duplicate weight name `{0}`")]
    DuplicateName(String),

    #[error("no valid pixels: ground truth is nonpositive everywhere")]
    EmptyMask,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at_layer(self, layer: &str) -> Error {
        match self {
            e @ (Error::MissingWeight { .. } | Error::Layer { .. }) => e,
            e => Error::Layer {
                layer: layer.to_string(),
                source: Box::new(e),
            },
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
