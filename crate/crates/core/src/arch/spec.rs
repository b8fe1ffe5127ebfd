use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EncoderKind {
    /// ResNet50: stem plus four bottleneck stacks, output at 1/32 resolution.
    Basic,
    /// ResNet50 without its last stack, output at 1/16 resolution.
    LiteBasic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DecoderKind {
    /// 5x5 stride-2 transposed convolution + batch norm + ReLU per block.
    Deconv,
    /// Nearest-neighbour 2x upsampling + factorized non-bottleneck block.
    UpsamplingNonbt,
    /// Unpooling + 5x5 convolution + batch norm + ReLU per block.
    UpconvNaive,
    /// The same blocks computed as four interleaved small convolutions.
    UpconvFast,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SkipKind {
    None,
    /// One shortcut from every encoder stack below the bottleneck.
    Full,
    /// Two shortcuts: the stem (outer) and the second stack (middle).
    OuterMiddle,
}

/// Channel widths: the canonical ResNet50 widths or the same network with
/// every width divided by [`SCALED_WIDTH_DIVISOR`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Widths {
    Full,
    Scaled,
}

pub const SCALED_WIDTH_DIVISOR: usize = 8;

/// Input height and width must be multiples of this.
pub const RESOLUTION_MULTIPLE: usize = 16;

impl EncoderKind {
    pub fn name(self) -> &'static str {
        match self {
            EncoderKind::Basic => "basic",
            EncoderKind::LiteBasic => "lite_basic",
        }
    }

    /// Bottleneck blocks per residual stack.
    pub fn stacks(self) -> &'static [usize] {
        match self {
            EncoderKind::Basic => &[3, 4, 6, 3],
            EncoderKind::LiteBasic => &[3, 4, 6],
        }
    }

    /// Number of 2x reductions: stem, max pool, and one per strided stack.
    pub fn halvings(self) -> u32 {
        self.stacks().len() as u32 + 1
    }
}

impl DecoderKind {
    pub fn name(self) -> &'static str {
        match self {
            DecoderKind::Deconv => "deconv",
            DecoderKind::UpsamplingNonbt => "upsampling_nonbt",
            DecoderKind::UpconvNaive => "upconv_naive",
            DecoderKind::UpconvFast => "upconv_fast",
        }
    }

    pub fn is_upconv(self) -> bool {
        matches!(self, DecoderKind::UpconvNaive | DecoderKind::UpconvFast)
    }
}

impl SkipKind {
    pub fn name(self) -> &'static str {
        match self {
            SkipKind::None => "none",
            SkipKind::Full => "full",
            SkipKind::OuterMiddle => "outer_middle",
        }
    }
}

impl FromStr for EncoderKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "basic" => Ok(EncoderKind::Basic),
            "lite_basic" | "lite" => Ok(EncoderKind::LiteBasic),
            _ => Err(Error::InvalidModel(format!("unknown encoder `{s}`"))),
        }
    }
}

impl FromStr for DecoderKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "deconv" => Ok(DecoderKind::Deconv),
            "upsampling_nonbt" | "nonbt" => Ok(DecoderKind::UpsamplingNonbt),
            "upconv_naive" => Ok(DecoderKind::UpconvNaive),
            "upconv_fast" | "interl" => Ok(DecoderKind::UpconvFast),
            _ => Err(Error::InvalidModel(format!("unknown decoder `{s}`"))),
        }
    }
}

impl FromStr for SkipKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(SkipKind::None),
            "full" | "sc" => Ok(SkipKind::Full),
            "outer_middle" => Ok(SkipKind::OuterMiddle),
            _ => Err(Error::InvalidModel(format!(
                "unknown skip configuration `{s}`"
            ))),
        }
    }
}

/// The six evaluated encoder/decoder/shortcut combinations.
pub const PRESETS: [(&str, EncoderKind, DecoderKind, SkipKind); 6] = [
    (
        "basic_deconv",
        EncoderKind::Basic,
        DecoderKind::Deconv,
        SkipKind::None,
    ),
    (
        "basic_sc_deconv",
        EncoderKind::Basic,
        DecoderKind::Deconv,
        SkipKind::Full,
    ),
    (
        "basic_sc_nonbt",
        EncoderKind::Basic,
        DecoderKind::UpsamplingNonbt,
        SkipKind::Full,
    ),
    (
        "lite_sc_nonbt",
        EncoderKind::LiteBasic,
        DecoderKind::UpsamplingNonbt,
        SkipKind::Full,
    ),
    (
        "basic_sc_interl",
        EncoderKind::Basic,
        DecoderKind::UpconvFast,
        SkipKind::OuterMiddle,
    ),
    (
        "lite_interl",
        EncoderKind::LiteBasic,
        DecoderKind::UpconvFast,
        SkipKind::None,
    ),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ModelSpec {
    pub encoder: EncoderKind,
    pub decoder: DecoderKind,
    pub skips: SkipKind,
    pub input_h: usize,
    pub input_w: usize,
    pub widths: Widths,
}

impl ModelSpec {
    pub fn new(
        encoder: EncoderKind,
        decoder: DecoderKind,
        skips: SkipKind,
        input_h: usize,
        input_w: usize,
        widths: Widths,
    ) -> Result<Self> {
        let spec = ModelSpec {
            encoder,
            decoder,
            skips,
            input_h,
            input_w,
            widths,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// A named preset at `input_w x input_h` with scaled widths.
    pub fn preset(name: &str, input_w: usize, input_h: usize) -> Result<Self> {
        let &(_, encoder, decoder, skips) = PRESETS
            .iter()
            .find(|p| p.0 == name)
            .ok_or_else(|| Error::InvalidModel(format!("unknown preset `{name}`")))?;
        Self::new(encoder, decoder, skips, input_h, input_w, Widths::Scaled)
    }

    pub fn validate(&self) -> Result<()> {
        for (what, v) in [("height", self.input_h), ("width", self.input_w)] {
            if v == 0 || v % RESOLUTION_MULTIPLE != 0 {
                return Err(Error::InvalidModel(format!(
                    "input {what} {v} is not a positive multiple of {RESOLUTION_MULTIPLE}"
                )));
            }
        }
        Ok(())
    }

    pub fn with_decoder(self, decoder: DecoderKind) -> Self {
        ModelSpec { decoder, ..self }
    }

    pub fn with_widths(self, widths: Widths) -> Self {
        ModelSpec { widths, ..self }
    }

    pub fn with_resolution(self, input_w: usize, input_h: usize) -> Result<Self> {
        let s = ModelSpec {
            input_w,
            input_h,
            ..self
        };
        s.validate()?;
        Ok(s)
    }

    pub fn preset_name(&self) -> Option<&'static str> {
        PRESETS
            .iter()
            .find(|p| (p.1, p.2, p.3) == (self.encoder, self.decoder, self.skips))
            .map(|p| p.0)
    }

    /// Whether this is one of the six evaluated combinations.
    pub fn is_preset_combination(&self) -> bool {
        self.preset_name().is_some()
    }

    /// Channel count for a layer whose full-width count is `full`.
    pub fn channels(&self, full: usize) -> usize {
        match self.widths {
            Widths::Full => full,
            Widths::Scaled => (full / SCALED_WIDTH_DIVISOR).max(1),
        }
    }

    /// Number of decoder blocks; each undoes one encoder halving.
    pub fn decoder_blocks(&self) -> usize {
        self.encoder.halvings() as usize
    }

    /// Parses `MODEL[:WxH][:full|:scaled]`, where `MODEL` is a preset name or
    /// `encoder/decoder/skips`. `default_resolution` is `(w, h)`, used when
    /// the string has none.
    pub fn parse(s: &str, default_resolution: Option<(usize, usize)>) -> Result<Self> {
        let mut parts = s.split(':');
        let model = parts.next().unwrap_or_default();
        let (encoder, decoder, skips) = if let Some(p) = PRESETS.iter().find(|p| p.0 == model) {
            (p.1, p.2, p.3)
        } else {
            let fields: Vec<&str> = model.split('/').collect();
            match fields.as_slice() {
                [e, d, k] => (e.parse()?, d.parse()?, k.parse()?),
                _ => {
                    return Err(Error::InvalidModel(format!(
                        "`{model}` is neither a preset nor encoder/decoder/skips"
                    )))
                }
            }
        };
        let mut resolution = default_resolution;
        let mut widths = Widths::Scaled;
        for opt in parts {
            match opt {
                "full" => widths = Widths::Full,
                "scaled" => widths = Widths::Scaled,
                res => resolution = Some(parse_resolution(res)?),
            }
        }
        let (w, h) = resolution
            .ok_or_else(|| Error::InvalidModel(format!("model `{s}` has no input resolution")))?;
        Self::new(encoder, decoder, skips, h, w, widths)
    }
}

/// Parses `WxH` into `(w, h)`.
pub fn parse_resolution(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::InvalidModel(format!("resolution `{s}` is not WIDTHxHEIGHT"));
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let w: usize = w.parse().map_err(|_| bad())?;
    let h: usize = h.parse().map_err(|_| bad())?;
    if w == 0 || h == 0 {
        return Err(bad());
    }
    Ok((w, h))
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.preset_name() {
            Some(name) => f.write_str(name)?,
            None => write!(
                f,
                "{}/{}/{}",
                self.encoder.name(),
                self.decoder.name(),
                self.skips.name()
            )?,
        }
        write!(f, ":{}x{}", self.input_w, self.input_h)?;
        if self.widths == Widths::Full {
            f.write_str(":full")?;
        }
        Ok(())
    }
}
