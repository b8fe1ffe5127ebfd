use crate::ops::{conv2d_macs, deconv2d_macs, Padding};
use crate::tensor::Shape4;
use crate::upconv::{upconv_macs_fast, upconv_macs_naive};

use super::spec::ModelSpec;

/// Shape of one learnable parameter block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamSpec {
    Conv {
        kh: usize,
        kw: usize,
        cin: usize,
        cout: usize,
        bias: bool,
    },
    BatchNorm {
        channels: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerOp {
    Input,
    /// Weight key: the layer name.
    Conv {
        stride: usize,
        padding: Padding,
    },
    /// Weight key: the layer name.
    BatchNorm,
    Relu,
    MaxPool2,
    NearestUp2,
    /// 5x5 transposed convolution; weight key: the layer name.
    Deconv {
        stride: usize,
    },
    /// Weight keys: `<name>.k31`, `<name>.k13`.
    NonBt,
    /// Weight keys: `<name>.conv5x5`, `<name>.bn`.
    UpConvNaive,
    /// Weight keys: `<name>.conv3x3`, `.conv3x2`, `.conv2x3`, `.conv2x2`, `<name>.bn`.
    UpConvFast,
    Add,
    /// Keeps the top-left window of the recorded output shape.
    Crop,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub name: String,
    pub op: LayerOp,
    /// Indices of earlier layers this one consumes.
    pub inputs: Vec<usize>,
    pub shape: Shape4,
    /// Weight keys and their expected shapes.
    pub params: Vec<(String, ParamSpec)>,
}

/// A shortcut from an encoder layer into the decoder merge at `to`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SkipEdge {
    pub name: String,
    pub from: usize,
    pub to: usize,
}

/// Layers in topological order (every input index precedes its consumer),
/// with their output shapes.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGraph {
    pub(super) spec: ModelSpec,
    pub(super) layers: Vec<Layer>,
    pub(super) skips: Vec<SkipEdge>,
    pub(super) bottleneck: usize,
}

impl LayerGraph {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer(&self, name: &str) -> Option<&Layer> {
        self.layers.iter().find(|l| l.name == name)
    }

    pub fn skips(&self) -> &[SkipEdge] {
        &self.skips
    }

    pub fn input_shape(&self) -> Shape4 {
        self.layers[0].shape
    }

    pub fn output_shape(&self) -> Shape4 {
        self.layers.last().expect("graph has layers").shape
    }

    /// Output of the encoder.
    pub fn bottleneck(&self) -> &Layer {
        &self.layers[self.bottleneck]
    }

    /// Layer names and output shapes, computed without running any kernel.
    pub fn shape_trace(&self) -> Vec<(String, Shape4)> {
        self.layers
            .iter()
            .map(|l| (l.name.clone(), l.shape))
            .collect()
    }

    /// Every weight the graph needs, in layer order.
    pub fn weight_specs(&self) -> impl Iterator<Item = (&str, &str, &ParamSpec)> + '_ {
        self.layers.iter().flat_map(|l| {
            l.params
                .iter()
                .map(move |(k, p)| (l.name.as_str(), k.as_str(), p))
        })
    }

    /// Multiply-accumulates of one forward pass.
    pub fn macs(&self) -> u64 {
        self.layers.iter().map(|l| self.layer_macs(l)).sum()
    }

    pub fn layer_macs(&self, layer: &Layer) -> u64 {
        let input = || self.layers[layer.inputs[0]].shape;
        let conv_spec = |i: usize| match layer.params[i].1 {
            ParamSpec::Conv { kh, kw, cout, .. } => (kh, kw, cout),
            ParamSpec::BatchNorm { .. } => unreachable!("conv parameter expected"),
        };
        match layer.op {
            LayerOp::Conv { stride, padding } => {
                let (kh, kw, cout) = conv_spec(0);
                conv2d_macs(input(), kh, kw, cout, stride, padding).unwrap_or(0)
            }
            LayerOp::Deconv { .. } => {
                let (kh, kw, cout) = conv_spec(0);
                deconv2d_macs(input(), kh, kw, cout)
            }
            LayerOp::NonBt => {
                let (_, _, mid) = conv_spec(0);
                let (_, _, cout) = conv_spec(1);
                let x = input();
                conv2d_macs(x, 3, 1, mid, 1, Padding::Same).unwrap_or(0)
                    + conv2d_macs(x.with_channels(mid), 1, 3, cout, 1, Padding::Same).unwrap_or(0)
            }
            LayerOp::UpConvNaive => upconv_macs_naive(input(), layer.shape.c),
            LayerOp::UpConvFast => upconv_macs_fast(input(), layer.shape.c),
            _ => 0,
        }
    }
}
