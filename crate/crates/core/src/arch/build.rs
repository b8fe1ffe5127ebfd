use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::ops::{conv_geometry, Padding};
use crate::tensor::Shape4;

use super::graph::{Layer, LayerGraph, LayerOp, ParamSpec, SkipEdge};
use super::spec::{DecoderKind, ModelSpec, SkipKind};

/// Full-width bottleneck channels per stack; block outputs are 4x these.
const STACK_MID_CHANNELS: [usize; 4] = [64, 128, 256, 512];
const STEM_CHANNELS: usize = 64;

struct Builder {
    layers: Vec<Layer>,
    names: HashSet<String>,
}

impl Builder {
    fn shape(&self, i: usize) -> Shape4 {
        self.layers[i].shape
    }

    fn push(
        &mut self,
        name: String,
        op: LayerOp,
        inputs: Vec<usize>,
        shape: Shape4,
        params: Vec<(String, ParamSpec)>,
    ) -> usize {
        assert!(
            self.names.insert(name.clone()),
            "duplicate layer name {name}"
        );
        self.layers.push(Layer {
            name,
            op,
            inputs,
            shape,
            params,
        });
        self.layers.len() - 1
    }

    #[allow(clippy::too_many_arguments)]
    fn conv(
        &mut self,
        name: String,
        from: usize,
        (kh, kw): (usize, usize),
        cout: usize,
        stride: usize,
        padding: Padding,
        bias: bool,
    ) -> Result<usize> {
        let s = self.shape(from);
        let (oh, ow, _) = conv_geometry(s.h, s.w, kh, kw, stride, padding)?;
        let spec = ParamSpec::Conv {
            kh,
            kw,
            cin: s.c,
            cout,
            bias,
        };
        let key = name.clone();
        Ok(self.push(
            name,
            LayerOp::Conv { stride, padding },
            vec![from],
            Shape4::new(s.n, oh, ow, cout),
            vec![(key, spec)],
        ))
    }

    fn bn(&mut self, name: String, from: usize) -> usize {
        let s = self.shape(from);
        let key = name.clone();
        self.push(
            name,
            LayerOp::BatchNorm,
            vec![from],
            s,
            vec![(key, ParamSpec::BatchNorm { channels: s.c })],
        )
    }

    fn unary(&mut self, name: String, op: LayerOp, from: usize, shape: Shape4) -> usize {
        self.push(name, op, vec![from], shape, vec![])
    }

    fn relu(&mut self, name: String, from: usize) -> usize {
        let s = self.shape(from);
        self.unary(name, LayerOp::Relu, from, s)
    }

    fn conv_bn_relu(
        &mut self,
        prefix: &str,
        idx: &str,
        from: usize,
        k: (usize, usize),
        cout: usize,
        stride: usize,
    ) -> Result<usize> {
        let c = self.conv(
            format!("{prefix}.conv{idx}"),
            from,
            k,
            cout,
            stride,
            Padding::Same,
            false,
        )?;
        let b = self.bn(format!("{prefix}.bn{idx}"), c);
        Ok(self.relu(format!("{prefix}.relu{idx}"), b))
    }

    fn add(&mut self, name: String, a: usize, b: usize) -> Result<usize> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::Layer {
                layer: name,
                source: Box::new(Error::ShapeMismatch {
                    left: sa,
                    right: sb,
                }),
            });
        }
        Ok(self.push(name, LayerOp::Add, vec![a, b], sa, vec![]))
    }

    /// ResNet bottleneck block: 1x1 -> 3x3 -> 1x1 with a (projected when
    /// `project`) identity shortcut. The stride sits on the first 1x1.
    fn bottleneck(
        &mut self,
        prefix: &str,
        from: usize,
        mid: usize,
        out: usize,
        stride: usize,
        project: bool,
    ) -> Result<usize> {
        let x = self.conv_bn_relu(prefix, "1", from, (1, 1), mid, stride)?;
        let x = self.conv_bn_relu(prefix, "2", x, (3, 3), mid, 1)?;
        let x = self.conv(
            format!("{prefix}.conv3"),
            x,
            (1, 1),
            out,
            1,
            Padding::Same,
            false,
        )?;
        let x = self.bn(format!("{prefix}.bn3"), x);
        let shortcut = if project {
            let p = self.conv(
                format!("{prefix}.proj"),
                from,
                (1, 1),
                out,
                stride,
                Padding::Same,
                false,
            )?;
            self.bn(format!("{prefix}.proj_bn"), p)
        } else {
            from
        };
        let sum = self.add(format!("{prefix}.add"), x, shortcut)?;
        Ok(self.relu(format!("{prefix}.relu"), sum))
    }

    fn decoder_block(
        &mut self,
        kind: DecoderKind,
        prefix: &str,
        from: usize,
        cout: usize,
    ) -> Result<usize> {
        let s = self.shape(from);
        let up = s.with_spatial(2 * s.h, 2 * s.w).with_channels(cout);
        let conv = |kh, kw, cin, bias| ParamSpec::Conv {
            kh,
            kw,
            cin,
            cout,
            bias,
        };
        Ok(match kind {
            DecoderKind::Deconv => {
                let name = format!("{prefix}.deconv");
                let params = vec![(name.clone(), conv(5, 5, s.c, false))];
                let d = self.push(name, LayerOp::Deconv { stride: 2 }, vec![from], up, params);
                let b = self.bn(format!("{prefix}.bn"), d);
                self.relu(format!("{prefix}.relu"), b)
            }
            DecoderKind::UpsamplingNonbt => {
                let u = self.unary(
                    format!("{prefix}.up"),
                    LayerOp::NearestUp2,
                    from,
                    s.with_spatial(2 * s.h, 2 * s.w),
                );
                let name = format!("{prefix}.nonbt");
                let params = vec![
                    (format!("{name}.k31"), conv(3, 1, s.c, true)),
                    (format!("{name}.k13"), conv(1, 3, cout, true)),
                ];
                self.push(name, LayerOp::NonBt, vec![u], up, params)
            }
            DecoderKind::UpconvNaive => {
                let name = format!("{prefix}.upconv");
                let params = vec![
                    (format!("{name}.conv5x5"), conv(5, 5, s.c, false)),
                    (
                        format!("{name}.bn"),
                        ParamSpec::BatchNorm { channels: cout },
                    ),
                ];
                self.push(name, LayerOp::UpConvNaive, vec![from], up, params)
            }
            DecoderKind::UpconvFast => {
                let name = format!("{prefix}.upconv");
                let params = vec![
                    (format!("{name}.conv3x3"), conv(3, 3, s.c, false)),
                    (format!("{name}.conv3x2"), conv(3, 2, s.c, false)),
                    (format!("{name}.conv2x3"), conv(2, 3, s.c, false)),
                    (format!("{name}.conv2x2"), conv(2, 2, s.c, false)),
                    (
                        format!("{name}.bn"),
                        ParamSpec::BatchNorm { channels: cout },
                    ),
                ];
                self.push(name, LayerOp::UpConvFast, vec![from], up, params)
            }
        })
    }
}

/// Builds the executable layer graph for `spec`.
///
/// Encoder: 7x7/2 stem with batch norm and ReLU, 2x2 max pool, then the
/// bottleneck stacks of [`EncoderKind::stacks`](super::EncoderKind::stacks)
/// (stacks after the first downsample by 2). Decoder: one block per encoder
/// halving, halving the channel count each time; a block whose output
/// overshoots the mirrored encoder resolution (odd sizes rounded up on the
/// way down) is cropped back to it. Shortcuts are merged by addition, behind
/// a 1x1 projection when channel counts differ. A final convolution (5x5
/// for the non-bottleneck decoder, 3x3 otherwise) produces one depth channel.
pub fn build_model(spec: &ModelSpec) -> Result<LayerGraph> {
    spec.validate()?;
    let mut b = Builder {
        layers: Vec::new(),
        names: HashSet::new(),
    };
    let input = b.push(
        "input".into(),
        LayerOp::Input,
        vec![],
        Shape4::new(1, spec.input_h, spec.input_w, 3),
        vec![],
    );

    // (downsampling factor, tap name, layer)
    let mut taps: Vec<(usize, &str, usize)> = vec![(1, "input", input)];
    let stem = b.conv(
        "enc.stem.conv".into(),
        input,
        (7, 7),
        spec.channels(STEM_CHANNELS),
        2,
        Padding::Same,
        false,
    )?;
    let stem = b.bn("enc.stem.bn".into(), stem);
    let stem = b.relu("enc.stem.relu".into(), stem);
    taps.push((2, "stem", stem));
    let s = b.shape(stem);
    if !s.h.is_multiple_of(2) || !s.w.is_multiple_of(2) {
        return Err(Error::InvalidModel(format!(
            "stem output {s} cannot be pooled"
        )));
    }
    let pooled = b.unary(
        "enc.pool".into(),
        LayerOp::MaxPool2,
        stem,
        s.with_spatial(s.h / 2, s.w / 2),
    );

    const STACK_TAPS: [&str; 4] = ["s1", "s2", "s3", "s4"];
    let mut x = pooled;
    let mut factor = 4;
    for (si, &blocks) in spec.encoder.stacks().iter().enumerate() {
        let mid = spec.channels(STACK_MID_CHANNELS[si]);
        let out = spec.channels(4 * STACK_MID_CHANNELS[si]);
        let stride = if si == 0 { 1 } else { 2 };
        factor *= stride;
        for blk in 0..blocks {
            let prefix = format!("enc.s{}.b{blk}", si + 1);
            let s = if blk == 0 { stride } else { 1 };
            x = b.bottleneck(&prefix, x, mid, out, s, blk == 0)?;
        }
        taps.push((factor, STACK_TAPS[si], x));
    }
    let bottleneck = x;
    let down = factor;

    let skip_factors: &[usize] = match spec.skips {
        SkipKind::None => &[],
        SkipKind::Full => &[4, 8, 16],
        SkipKind::OuterMiddle => &[2, 8],
    };

    let mut skips = Vec::new();
    let bottleneck_c = b.shape(bottleneck).c;
    for j in 1..=spec.decoder_blocks() {
        let prefix = format!("dec.b{j}");
        let cout = (bottleneck_c >> j).max(1);
        x = b.decoder_block(spec.decoder, &prefix, x, cout)?;
        let target_factor = down >> j;
        let &(_, _, mirror) = taps
            .iter()
            .find(|t| t.0 == target_factor)
            .expect("every decoder resolution mirrors an encoder tap");
        let target = b.shape(mirror);
        let s = b.shape(x);
        if (s.h, s.w) != (target.h, target.w) {
            x = b.unary(
                format!("{prefix}.crop"),
                LayerOp::Crop,
                x,
                s.with_spatial(target.h, target.w),
            );
        }
        if skip_factors.contains(&target_factor) {
            let &(_, tap_name, tap) = taps.iter().find(|t| t.0 == target_factor).unwrap();
            let mut from = tap;
            if b.shape(tap).c != b.shape(x).c {
                from = b.conv(
                    format!("skip.{tap_name}.proj"),
                    tap,
                    (1, 1),
                    b.shape(x).c,
                    1,
                    Padding::Same,
                    false,
                )?;
            }
            x = b.add(format!("{prefix}.skip"), x, from)?;
            skips.push(SkipEdge {
                name: format!("skip.{tap_name}"),
                from: tap,
                to: x,
            });
        }
    }

    let head_k = if spec.decoder == DecoderKind::UpsamplingNonbt {
        5
    } else {
        3
    };
    b.conv(
        "head.conv".into(),
        x,
        (head_k, head_k),
        1,
        1,
        Padding::Same,
        true,
    )?;

    Ok(LayerGraph {
        spec: *spec,
        layers: b.layers,
        skips,
        bottleneck,
    })
}
