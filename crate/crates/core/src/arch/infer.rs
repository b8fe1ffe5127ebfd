use crate::error::{Error, Result};
use crate::ops::{
    add, batchnorm_infer, conv2d, crop, deconv2d, nonbt_block, relu, resample, Resample,
};
use crate::tensor::{Shape4, Tensor4};
use crate::upconv::{upconv_fast, upconv_naive};

use super::graph::{Layer, LayerGraph, LayerOp};
use super::weights::WeightContainer;

/// Runs one forward pass.
pub fn infer(graph: &LayerGraph, weights: &WeightContainer, input: &Tensor4) -> Result<Tensor4> {
    run(graph, weights, input, |_, _| {})
}

/// Runs one forward pass and records every layer's output shape.
pub fn infer_traced(
    graph: &LayerGraph,
    weights: &WeightContainer,
    input: &Tensor4,
) -> Result<(Tensor4, Vec<(String, Shape4)>)> {
    let mut trace = Vec::with_capacity(graph.layers().len());
    let out = run(graph, weights, input, |name, shape| {
        trace.push((name.to_string(), shape))
    })?;
    Ok((out, trace))
}

fn run(
    graph: &LayerGraph,
    weights: &WeightContainer,
    input: &Tensor4,
    mut observe: impl FnMut(&str, Shape4),
) -> Result<Tensor4> {
    if input.shape() != graph.input_shape() {
        return Err(Error::ShapeMismatch {
            left: input.shape(),
            right: graph.input_shape(),
        });
    }
    weights.check_resolves(graph)?;

    let layers = graph.layers();
    let mut last_use = vec![0; layers.len()];
    for (i, l) in layers.iter().enumerate() {
        for &j in &l.inputs {
            last_use[j] = i;
        }
    }
    let last = layers.len() - 1;
    let mut values: Vec<Option<Tensor4>> = vec![None; layers.len()];

    for (i, layer) in layers.iter().enumerate() {
        let out = if layer.op == LayerOp::Input {
            input.clone()
        } else {
            let args: Vec<&Tensor4> = layer
                .inputs
                .iter()
                .map(|&j| values[j].as_ref().expect("inputs are computed before use"))
                .collect();
            eval(layer, weights, &args).map_err(|e| e.at_layer(&layer.name))?
        };
        if out.shape() != layer.shape {
            return Err(Error::ShapeMismatch {
                left: out.shape(),
                right: layer.shape,
            }
            .at_layer(&layer.name));
        }
        observe(&layer.name, out.shape());
        values[i] = Some(out);
        for &j in &layer.inputs {
            if last_use[j] == i {
                values[j] = None;
            }
        }
    }
    Ok(values[last].take().expect("output layer was computed"))
}

fn eval(layer: &Layer, w: &WeightContainer, args: &[&Tensor4]) -> Result<Tensor4> {
    let name = layer.name.as_str();
    let conv = |i: usize| {
        let (key, spec) = &layer.params[i];
        w.conv(name, key, spec)
    };
    let bn = |i: usize| {
        let (key, spec) = &layer.params[i];
        w.batchnorm(name, key, spec)
    };
    let x = args[0];
    match layer.op {
        LayerOp::Input => Ok(x.clone()),
        LayerOp::Conv { stride, padding } => conv2d(x, conv(0)?, stride, padding),
        LayerOp::BatchNorm => batchnorm_infer(x, bn(0)?),
        LayerOp::Relu => Ok(relu(x)),
        LayerOp::MaxPool2 => resample(x, Resample::MaxPool2),
        LayerOp::NearestUp2 => resample(x, Resample::NearestUp2),
        LayerOp::Deconv { stride } => deconv2d(x, conv(0)?, stride),
        LayerOp::NonBt => nonbt_block(x, conv(0)?, conv(1)?),
        LayerOp::UpConvNaive => upconv_naive(x, conv(0)?, bn(1)?),
        LayerOp::UpConvFast => upconv_fast(x, [conv(0)?, conv(1)?, conv(2)?, conv(3)?], bn(4)?),
        LayerOp::Add => add(x, args[1]),
        LayerOp::Crop => crop(x, layer.shape.h, layer.shape.w),
    }
}
