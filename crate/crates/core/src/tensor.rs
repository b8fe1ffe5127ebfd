//! Dense rank-4 tensors in (N, H, W, C) layout and the parameter blocks that
//! the kernels consume.

use std::fmt::{self, Debug, Display};
use std::ops::AddAssign;

use num_traits::Float;
use rand::Rng;

use crate::error::{Error, Result};

/// Scalar type the kernels are generic over. Production paths use `f32`;
/// `f64` instantiations serve as high-precision oracles.
pub trait Element: Float + Default + Debug + Display + Send + Sync + AddAssign + 'static {
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Element for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Element for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape4 {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl Shape4 {
    pub const fn new(n: usize, h: usize, w: usize, c: usize) -> Self {
        Shape4 { n, h, w, c }
    }

    pub fn len(&self) -> usize {
        self.n * self.h * self.w * self.c
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_valid(&self) -> bool {
        self.n >= 1 && self.h >= 1 && self.w >= 1 && self.c >= 1
    }

    /// Linear offset of `(n, h, w, c)`.
    #[inline]
    pub fn offset(&self, n: usize, h: usize, w: usize, c: usize) -> usize {
        ((n * self.h + h) * self.w + w) * self.c + c
    }

    pub fn with_channels(self, c: usize) -> Self {
        Shape4 { c, ..self }
    }

    pub fn with_spatial(self, h: usize, w: usize) -> Self {
        Shape4 { h, w, ..self }
    }
}

impl Display for Shape4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.h, self.w, self.c)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4<T = f32> {
    shape: Shape4,
    data: Vec<T>,
}

impl<T: Element> Tensor4<T> {
    pub fn from_vec(shape: Shape4, data: Vec<T>) -> Result<Self> {
        if !shape.is_valid() {
            return Err(Error::InvalidShape(shape));
        }
        if data.len() != shape.len() {
            return Err(Error::DataLength {
                shape,
                len: data.len(),
                expected: shape.len(),
            });
        }
        Ok(Tensor4 { shape, data })
    }

    /// # Panics
    /// If any dimension of `shape` is zero.
    pub fn filled(shape: Shape4, value: T) -> Self {
        assert!(shape.is_valid(), "invalid tensor shape {shape}");
        Tensor4 {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn zeros(shape: Shape4) -> Self {
        Self::filled(shape, T::zero())
    }

    pub fn from_fn(shape: Shape4, mut f: impl FnMut(usize, usize, usize, usize) -> T) -> Self {
        let mut t = Self::zeros(shape);
        for n in 0..shape.n {
            for h in 0..shape.h {
                for w in 0..shape.w {
                    for c in 0..shape.c {
                        t.data[shape.offset(n, h, w, c)] = f(n, h, w, c);
                    }
                }
            }
        }
        t
    }

    /// Uniform samples in `[lo, hi)`.
    pub fn random<R: Rng + ?Sized>(shape: Shape4, lo: f64, hi: f64, rng: &mut R) -> Self {
        assert!(shape.is_valid(), "invalid tensor shape {shape}");
        let data = (0..shape.len())
            .map(|_| T::from_f64(rng.gen_range(lo..hi)))
            .collect();
        Tensor4 { shape, data }
    }

    pub fn shape(&self) -> Shape4 {
        self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, n: usize, h: usize, w: usize, c: usize) -> T {
        self.data[self.shape.offset(n, h, w, c)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, h: usize, w: usize, c: usize, v: T) {
        let i = self.shape.offset(n, h, w, c);
        self.data[i] = v;
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor4 {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Element>(&self) -> Tensor4<U> {
        Tensor4 {
            shape: self.shape,
            data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }

    /// Largest elementwise absolute difference; `None` when shapes differ.
    pub fn max_abs_diff(&self, other: &Self) -> Option<T> {
        if self.shape != other.shape {
            return None;
        }
        Some(
            self.data
                .iter()
                .zip(&other.data)
                .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs())),
        )
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Convolution weights in `(kh, kw, cin, cout)` order with an optional bias.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvKernel<T = f32> {
    kh: usize,
    kw: usize,
    cin: usize,
    cout: usize,
    weights: Vec<T>,
    bias: Option<Vec<T>>,
}

impl<T: Element> ConvKernel<T> {
    pub fn new(
        kh: usize,
        kw: usize,
        cin: usize,
        cout: usize,
        weights: Vec<T>,
        bias: Option<Vec<T>>,
    ) -> Result<Self> {
        if kh == 0 || kw == 0 || cin == 0 || cout == 0 {
            return Err(Error::InvalidKernel(format!(
                "zero extent {kh}x{kw}x{cin}x{cout}"
            )));
        }
        if weights.len() != kh * kw * cin * cout {
            return Err(Error::InvalidKernel(format!(
                "{} weights for a {kh}x{kw}x{cin}x{cout} kernel",
                weights.len()
            )));
        }
        if let Some(b) = &bias {
            if b.len() != cout {
                return Err(Error::InvalidKernel(format!(
                    "bias of length {} for {cout} output channels",
                    b.len()
                )));
            }
        }
        Ok(ConvKernel {
            kh,
            kw,
            cin,
            cout,
            weights,
            bias,
        })
    }

    pub fn zeros(kh: usize, kw: usize, cin: usize, cout: usize) -> Self {
        Self::from_fn(kh, kw, cin, cout, |_, _, _, _| T::zero())
    }

    pub fn from_fn(
        kh: usize,
        kw: usize,
        cin: usize,
        cout: usize,
        mut f: impl FnMut(usize, usize, usize, usize) -> T,
    ) -> Self {
        let mut weights = Vec::with_capacity(kh * kw * cin * cout);
        for a in 0..kh {
            for b in 0..kw {
                for ci in 0..cin {
                    for co in 0..cout {
                        weights.push(f(a, b, ci, co));
                    }
                }
            }
        }
        Self::new(kh, kw, cin, cout, weights, None).expect("extents must be nonzero")
    }

    /// Uniform weights in `[-scale, scale)`, optional uniform bias in the same range.
    pub fn random<R: Rng + ?Sized>(
        kh: usize,
        kw: usize,
        cin: usize,
        cout: usize,
        scale: f64,
        with_bias: bool,
        rng: &mut R,
    ) -> Self {
        let mut k = Self::from_fn(kh, kw, cin, cout, |_, _, _, _| {
            T::from_f64(rng.gen_range(-scale..scale))
        });
        if with_bias {
            k.bias = Some(
                (0..cout)
                    .map(|_| T::from_f64(rng.gen_range(-scale..scale)))
                    .collect(),
            );
        }
        k
    }

    pub fn with_bias(mut self, bias: Vec<T>) -> Result<Self> {
        if bias.len() != self.cout {
            return Err(Error::InvalidKernel(format!(
                "bias of length {} for {} output channels",
                bias.len(),
                self.cout
            )));
        }
        self.bias = Some(bias);
        Ok(self)
    }

    pub fn kh(&self) -> usize {
        self.kh
    }
    pub fn kw(&self) -> usize {
        self.kw
    }
    pub fn cin(&self) -> usize {
        self.cin
    }
    pub fn cout(&self) -> usize {
        self.cout
    }
    pub fn weights(&self) -> &[T] {
        &self.weights
    }
    pub fn bias(&self) -> Option<&[T]> {
        self.bias.as_deref()
    }

    #[inline]
    pub fn at(&self, a: usize, b: usize, ci: usize, co: usize) -> T {
        self.weights[((a * self.kw + b) * self.cin + ci) * self.cout + co]
    }

    pub fn cast<U: Element>(&self) -> ConvKernel<U> {
        ConvKernel {
            kh: self.kh,
            kw: self.kw,
            cin: self.cin,
            cout: self.cout,
            weights: self
                .weights
                .iter()
                .map(|v| U::from_f64(v.as_f64()))
                .collect(),
            bias: self
                .bias
                .as_ref()
                .map(|b| b.iter().map(|v| U::from_f64(v.as_f64())).collect()),
        }
    }
}

/// Inference-time batch normalization statistics and affine parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormParams<T = f32> {
    pub mean: Vec<T>,
    pub variance: Vec<T>,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub eps: T,
}

impl<T: Element> BatchNormParams<T> {
    pub fn new(
        mean: Vec<T>,
        variance: Vec<T>,
        gamma: Vec<T>,
        beta: Vec<T>,
        eps: T,
    ) -> Result<Self> {
        let p = BatchNormParams {
            mean,
            variance,
            gamma,
            beta,
            eps,
        };
        p.validate()?;
        Ok(p)
    }

    /// Normalization that leaves its input unchanged up to `eps`.
    pub fn identity(channels: usize) -> Self {
        BatchNormParams {
            mean: vec![T::zero(); channels],
            variance: vec![T::one(); channels],
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            eps: T::from_f64(1e-5),
        }
    }

    /// Random statistics close to the identity: means and betas in
    /// `[-0.1, 0.1)`, variances in `[0.5, 1.5)`, gammas in `[0.5, 1.5)`.
    pub fn random<R: Rng + ?Sized>(channels: usize, rng: &mut R) -> Self {
        let mut draw = |lo: f64, hi: f64| -> Vec<T> {
            (0..channels)
                .map(|_| T::from_f64(rng.gen_range(lo..hi)))
                .collect()
        };
        let mean = draw(-0.1, 0.1);
        let variance = draw(0.5, 1.5);
        let gamma = draw(0.5, 1.5);
        let beta = draw(-0.1, 0.1);
        BatchNormParams {
            mean,
            variance,
            gamma,
            beta,
            eps: T::from_f64(1e-3),
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.mean.len();
        for len in [self.variance.len(), self.gamma.len(), self.beta.len()] {
            if len != c {
                return Err(Error::ParamLength {
                    got: len,
                    expected: c,
                });
            }
        }
        if self.variance.iter().any(|v| v.is_nan() || *v < T::zero()) {
            return Err(Error::InvalidParam(
                "batch-norm variance must be >= 0".into(),
            ));
        }
        if self.eps.is_nan() || self.eps <= T::zero() {
            return Err(Error::InvalidParam("batch-norm eps must be > 0".into()));
        }
        Ok(())
    }

    pub fn cast<U: Element>(&self) -> BatchNormParams<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::from_f64(x.as_f64())).collect();
        BatchNormParams {
            mean: conv(&self.mean),
            variance: conv(&self.variance),
            gamma: conv(&self.gamma),
            beta: conv(&self.beta),
            eps: U::from_f64(self.eps.as_f64()),
        }
    }
}
