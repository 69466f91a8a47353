use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gemm::{gemm_new, Real, View};
use crate::rng::derive_seed;
use crate::{Error, Result};

/// Memory order of a convolution's input, per sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputLayout {
    /// Channel-first, as observations are stored.
    Chw,
    /// Channel-last, as convolutions emit.
    Hwc,
}

/// Layer descriptor without weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerSpec {
    Conv2d {
        in_ch: usize,
        out_ch: usize,
        in_h: usize,
        in_w: usize,
        kernel: usize,
        layout: InputLayout,
    },
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Relu,
    Sigmoid,
    Dropout {
        rate: f32,
    },
    /// Appends the network's side input to every sample's features.
    ConcatSide {
        width: usize,
    },
}

/// Valid-padding, stride-1 square convolution. Weights are
/// `out_ch x (kernel * kernel * in_ch)` with the inner index ordered
/// `(ky, kx, c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub in_ch: usize,
    pub out_ch: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub kernel: usize,
    pub layout: InputLayout,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

/// Fully connected layer; weights are `inputs x outputs`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Conv2d(Conv2d<T>),
    Dense(Dense<T>),
    Relu,
    Sigmoid,
    Dropout(f32),
    ConcatSide(usize),
}

impl<T: Real> Conv2d<T> {
    pub fn out_h(&self) -> usize {
        self.in_h + 1 - self.kernel
    }

    pub fn out_w(&self) -> usize {
        self.in_w + 1 - self.kernel
    }

    fn patch_len(&self) -> usize {
        self.kernel * self.kernel * self.in_ch
    }

    fn positions(&self) -> usize {
        self.out_h() * self.out_w()
    }

    pub fn input_len(&self) -> usize {
        self.in_ch * self.in_h * self.in_w
    }

    pub fn output_len(&self) -> usize {
        self.positions() * self.out_ch
    }


    /// One sample converted to height-width-channel order.
    fn to_hwc<'a>(&self, x: &'a [T], scratch: &'a mut Vec<T>) -> &'a [T] {
        match self.layout {
            InputLayout::Hwc => x,
            InputLayout::Chw => {
                let plane = self.in_h * self.in_w;
                scratch.clear();
                scratch.resize(x.len(), T::zero());
                for c in 0..self.in_ch {
                    for (i, v) in x[c * plane..(c + 1) * plane].iter().enumerate() {
                        scratch[i * self.in_ch + c] = *v;
                    }
                }
                scratch
            }
        }
    }

    /// Unrolls every receptive field into a row of a `(batch * P) x K` matrix
    /// with patch entries in (ky, kx, c) order.
    fn im2col(&self, input: &[T], batch: usize) -> Vec<T> {
        let (k, p, n_in) = (self.patch_len(), self.positions(), self.input_len());
        let run = self.kernel * self.in_ch;
        let row_stride = self.in_w * self.in_ch;
        let mut cols = Vec::with_capacity(batch * p * k);
        let mut scratch = Vec::new();
        for b in 0..batch {
            let x = self.to_hwc(&input[b * n_in..(b + 1) * n_in], &mut scratch);
            for oy in 0..self.out_h() {
                for ox in 0..self.out_w() {
                    for ky in 0..self.kernel {
                        let start = (oy + ky) * row_stride + ox * self.in_ch;
                        cols.extend_from_slice(&x[start..start + run]);
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, dcols: &[T], batch: usize) -> Vec<T> {
        let (k, p, n_in) = (self.patch_len(), self.positions(), self.input_len());
        let run = self.kernel * self.in_ch;
        let row_stride = self.in_w * self.in_ch;
        let mut dx = vec![T::zero(); batch * n_in];
        let mut hwc = vec![T::zero(); n_in];
        for b in 0..batch {
            hwc.iter_mut().for_each(|v| *v = T::zero());
            let mut rows = dcols[b * p * k..(b + 1) * p * k].chunks_exact(run);
            for oy in 0..self.out_h() {
                for ox in 0..self.out_w() {
                    for ky in 0..self.kernel {
                        let start = (oy + ky) * row_stride + ox * self.in_ch;
                        let src = rows.next().expect("patch rows cover the output");
                        for (g, v) in hwc[start..start + run].iter_mut().zip(src) {
                            *g += *v;
                        }
                    }
                }
            }
            let g = &mut dx[b * n_in..(b + 1) * n_in];
            match self.layout {
                InputLayout::Hwc => g.copy_from_slice(&hwc),
                InputLayout::Chw => {
                    for (i, px) in hwc.chunks_exact(self.in_ch).enumerate() {
                        for (c, v) in px.iter().enumerate() {
                            g[c * self.in_h * self.in_w + i] = *v;
                        }
                    }
                }
            }
        }
        dx
    }

    pub(crate) fn forward(&self, input: &[T], batch: usize) -> (Vec<T>, Vec<T>) {
        let cols = self.im2col(input, batch);
        let rows = batch * self.positions();
        let mut out = gemm_new(
            View::row_major(&cols, rows, self.patch_len()),
            View::transposed(&self.weights, self.out_ch, self.patch_len()),
        );
        for row in out.chunks_exact_mut(self.out_ch) {
            for (v, b) in row.iter_mut().zip(&self.bias) {
                *v += *b;
            }
        }
        (out, cols)
    }

    /// Returns `(dW, db, dX)`.
    pub(crate) fn backward(
        &self,
        cols: &[T],
        grad: &[T],
        batch: usize,
        need_params: bool,
        need_input: bool,
    ) -> (Vec<T>, Vec<T>, Option<Vec<T>>) {
        let rows = batch * self.positions();
        let k = self.patch_len();
        let (mut dw, mut db) = (Vec::new(), Vec::new());
        if need_params {
            dw = gemm_new(
                View::transposed(grad, rows, self.out_ch),
                View::row_major(cols, rows, k),
            );
            db = vec![T::zero(); self.out_ch];
            for row in grad.chunks_exact(self.out_ch) {
                for (d, g) in db.iter_mut().zip(row) {
                    *d += *g;
                }
            }
        }
        let dx = need_input.then(|| {
            let dcols = gemm_new(
                View::row_major(grad, rows, self.out_ch),
                View::row_major(&self.weights, self.out_ch, k),
            );
            self.col2im(&dcols, batch)
        });
        (dw, db, dx)
    }
}

impl<T: Real> Dense<T> {
    pub(crate) fn forward(&self, input: &[T], batch: usize) -> Vec<T> {
        let mut out = gemm_new(
            View::row_major(input, batch, self.inputs),
            View::row_major(&self.weights, self.inputs, self.outputs),
        );
        for row in out.chunks_exact_mut(self.outputs) {
            for (v, b) in row.iter_mut().zip(&self.bias) {
                *v += *b;
            }
        }
        out
    }

    pub(crate) fn backward(
        &self,
        input: &[T],
        grad: &[T],
        batch: usize,
        need_params: bool,
        need_input: bool,
    ) -> (Vec<T>, Vec<T>, Option<Vec<T>>) {
        let (mut dw, mut db) = (Vec::new(), Vec::new());
        if need_params {
            dw = gemm_new(
                View::transposed(input, batch, self.inputs),
                View::row_major(grad, batch, self.outputs),
            );
            db = vec![T::zero(); self.outputs];
            for row in grad.chunks_exact(self.outputs) {
                for (d, g) in db.iter_mut().zip(row) {
                    *d += *g;
                }
            }
        }
        let dx = need_input.then(|| {
            gemm_new(
                View::row_major(grad, batch, self.outputs),
                View::transposed(&self.weights, self.inputs, self.outputs),
            )
        });
        (dw, db, dx)
    }
}

/// Inverted-dropout multipliers (`0` or `1 / (1 - rate)`) for one layer.
pub(crate) fn dropout_mask<T: Real>(rate: f32, len: usize, seed: u64, layer: usize) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x4452_4f50, layer as u64));
    let keep = T::of_f64(1.0 / (1.0 - rate as f64));
    (0..len)
        .map(|_| {
            if rng.random::<f32>() < rate {
                T::zero()
            } else {
                keep
            }
        })
        .collect()
}

impl<T: Real> Layer<T> {
    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Conv2d(c) => LayerSpec::Conv2d {
                in_ch: c.in_ch,
                out_ch: c.out_ch,
                in_h: c.in_h,
                in_w: c.in_w,
                kernel: c.kernel,
                layout: c.layout,
            },
            Layer::Dense(d) => LayerSpec::Dense {
                inputs: d.inputs,
                outputs: d.outputs,
            },
            Layer::Relu => LayerSpec::Relu,
            Layer::Sigmoid => LayerSpec::Sigmoid,
            Layer::Dropout(rate) => LayerSpec::Dropout { rate: *rate },
            Layer::ConcatSide(width) => LayerSpec::ConcatSide { width: *width },
        }
    }

    /// Output length per sample for an input of `input_len`.
    pub fn output_len(&self, input_len: usize) -> Result<usize> {
        match self {
            Layer::Conv2d(c) => {
                if c.input_len() != input_len {
                    return Err(Error::Shape(format!(
                        "convolution expects {} inputs per sample, got {input_len}",
                        c.input_len()
                    )));
                }
                Ok(c.output_len())
            }
            Layer::Dense(d) => {
                if d.inputs != input_len {
                    return Err(Error::Shape(format!(
                        "dense layer expects {} inputs per sample, got {input_len}",
                        d.inputs
                    )));
                }
                Ok(d.outputs)
            }
            Layer::ConcatSide(width) => Ok(input_len + width),
            Layer::Relu | Layer::Sigmoid | Layer::Dropout(_) => Ok(input_len),
        }
    }

    pub fn params(&self) -> Vec<&[T]> {
        match self {
            Layer::Conv2d(c) => vec![&c.weights, &c.bias],
            Layer::Dense(d) => vec![&d.weights, &d.bias],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        match self {
            Layer::Conv2d(c) => vec![&mut c.weights, &mut c.bias],
            Layer::Dense(d) => vec![&mut d.weights, &mut d.bias],
            _ => Vec::new(),
        }
    }

    pub(crate) fn cast<U: Real>(&self) -> Layer<U> {
        let cv = |v: &[T]| v.iter().map(|x| U::of_f64(x.as_f64())).collect::<Vec<U>>();
        match self {
            Layer::Conv2d(c) => Layer::Conv2d(Conv2d {
                in_ch: c.in_ch,
                out_ch: c.out_ch,
                in_h: c.in_h,
                in_w: c.in_w,
                kernel: c.kernel,
                layout: c.layout,
                weights: cv(&c.weights),
                bias: cv(&c.bias),
            }),
            Layer::Dense(d) => Layer::Dense(Dense {
                inputs: d.inputs,
                outputs: d.outputs,
                weights: cv(&d.weights),
                bias: cv(&d.bias),
            }),
            Layer::Relu => Layer::Relu,
            Layer::Sigmoid => Layer::Sigmoid,
            Layer::Dropout(r) => Layer::Dropout(*r),
            Layer::ConcatSide(w) => Layer::ConcatSide(*w),
        }
    }

    /// Layer with zeroed parameters for a descriptor.
    pub fn from_spec(spec: LayerSpec) -> Result<Self> {
        Ok(match spec {
            LayerSpec::Conv2d {
                in_ch,
                out_ch,
                in_h,
                in_w,
                kernel,
                layout,
            } => {
                if kernel != 3 {
                    return Err(Error::Shape(format!("only 3x3 kernels are supported, got {kernel}")));
                }
                if in_h < kernel || in_w < kernel || in_ch == 0 || out_ch == 0 {
                    return Err(Error::Shape(format!(
                        "convolution {in_ch}x{in_h}x{in_w} -> {out_ch} is degenerate"
                    )));
                }
                Layer::Conv2d(Conv2d {
                    in_ch,
                    out_ch,
                    in_h,
                    in_w,
                    kernel,
                    layout,
                    weights: vec![T::zero(); out_ch * kernel * kernel * in_ch],
                    bias: vec![T::zero(); out_ch],
                })
            }
            LayerSpec::Dense { inputs, outputs } => {
                if inputs == 0 || outputs == 0 {
                    return Err(Error::Shape("dense layer with zero width".into()));
                }
                Layer::Dense(Dense {
                    inputs,
                    outputs,
                    weights: vec![T::zero(); inputs * outputs],
                    bias: vec![T::zero(); outputs],
                })
            }
            LayerSpec::Relu => Layer::Relu,
            LayerSpec::Sigmoid => Layer::Sigmoid,
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(Error::InvalidConfig(format!("dropout rate {rate} not in [0, 1)")));
                }
                Layer::Dropout(rate)
            }
            LayerSpec::ConcatSide { width } => Layer::ConcatSide(width),
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub(crate) fn init_glorot<R: Rng>(&mut self, rng: &mut R) {
        let (fan_in, fan_out, weights) = match self {
            Layer::Conv2d(c) => {
                let area = c.kernel * c.kernel;
                (c.in_ch * area, c.out_ch * area, &mut c.weights)
            }
            Layer::Dense(d) => (d.inputs, d.outputs, &mut d.weights),
            _ => return,
        };
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for w in weights.iter_mut() {
            *w = T::of_f64(rng.random_range(-limit..limit));
        }
    }
}
