use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use super::gemm::Real;
use super::layers::{dropout_mask, Layer, LayerSpec};
use super::tensor::Tensor;
use crate::{Error, Result};

static NEXT_NETWORK_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_NETWORK_ID.fetch_add(1, Ordering::Relaxed)
}

/// A feed-forward layer sequence with its weights.
#[derive(Debug)]
pub struct Network<T = f32> {
    input_shape: Vec<usize>,
    side_width: usize,
    layers: Vec<Layer<T>>,
    /// Per-sample activation length before each layer and after the last.
    sizes: Vec<usize>,
    id: u64,
    generation: u64,
}

impl<T: Real> Clone for Network<T> {
    fn clone(&self) -> Self {
        Network {
            input_shape: self.input_shape.clone(),
            side_width: self.side_width,
            layers: self.layers.clone(),
            sizes: self.sizes.clone(),
            id: fresh_id(),
            generation: 0,
        }
    }
}

impl<T: Real> PartialEq for Network<T> {
    fn eq(&self, other: &Self) -> bool {
        self.input_shape == other.input_shape
            && self.side_width == other.side_width
            && self.layers == other.layers
    }
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct Cache<T> {
    network: u64,
    generation: u64,
    batch: usize,
    /// Input of every layer followed by the network output.
    acts: Vec<Vec<T>>,
    cols: Vec<Option<Vec<T>>>,
    masks: Vec<Option<Vec<T>>>,
}

impl<T> Cache<T> {
    pub fn batch(&self) -> usize {
        self.batch
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BackwardOptions {
    /// Compute parameter gradients.
    pub params: bool,
    /// Compute the gradient with respect to the network input.
    pub input: bool,
}

impl Default for BackwardOptions {
    fn default() -> Self {
        BackwardOptions {
            params: true,
            input: false,
        }
    }
}

/// Gradients in [`Network::params`] order, plus optional input gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub params: Vec<Vec<T>>,
    pub input: Option<Vec<T>>,
    pub side: Option<Vec<T>>,
}

impl<T: Real> Network<T> {
    /// Builds a network with zeroed weights from layer descriptors.
    pub fn from_specs(input_shape: Vec<usize>, side_width: usize, specs: &[LayerSpec]) -> Result<Self> {
        let layers = specs
            .iter()
            .map(|s| Layer::from_spec(*s))
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(input_shape, side_width, layers)
    }

    pub fn from_layers(input_shape: Vec<usize>, side_width: usize, layers: Vec<Layer<T>>) -> Result<Self> {
        let mut sizes = vec![input_shape.iter().product::<usize>()];
        if sizes[0] == 0 {
            return Err(Error::Shape("network input has no elements".into()));
        }
        let mut concat_seen = 0;
        for layer in &layers {
            if let Layer::ConcatSide(width) = layer {
                concat_seen += 1;
                if *width != side_width {
                    return Err(Error::Shape(format!(
                        "side input is {side_width} wide but the concat layer expects {width}"
                    )));
                }
            }
            let next = layer.output_len(*sizes.last().expect("non-empty"))?;
            sizes.push(next);
        }
        if (side_width > 0) != (concat_seen == 1) || concat_seen > 1 {
            return Err(Error::Shape(
                "a side input needs exactly one concat layer and vice versa".into(),
            ));
        }
        Ok(Network {
            input_shape,
            side_width,
            layers,
            sizes,
            id: fresh_id(),
            generation: 0,
        })
    }

    pub fn init_glorot<R: Rng>(&mut self, rng: &mut R) {
        for layer in &mut self.layers {
            layer.init_glorot(rng);
        }
        self.generation += 1;
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn input_len(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_len(&self) -> usize {
        *self.sizes.last().expect("non-empty")
    }

    pub fn side_width(&self) -> usize {
        self.side_width
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec()).collect()
    }

    pub fn params(&self) -> Vec<&[T]> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    /// Mutable parameter views; any cache taken earlier becomes stale.
    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        self.generation += 1;
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn same_architecture(&self, other: &Self) -> bool {
        self.input_shape == other.input_shape
            && self.side_width == other.side_width
            && self.specs() == other.specs()
    }

    /// Copy with every parameter converted to another precision.
    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            input_shape: self.input_shape.clone(),
            side_width: self.side_width,
            layers: self.layers.iter().map(|l| l.cast()).collect(),
            sizes: self.sizes.clone(),
            id: fresh_id(),
            generation: 0,
        }
    }

    fn check_inputs(&self, input: &[T], batch: usize, side: Option<&[T]>) -> Result<()> {
        if batch == 0 || input.len() != batch * self.input_len() {
            return Err(Error::Shape(format!(
                "input of {} values is not a batch of {batch} x {}",
                input.len(),
                self.input_len()
            )));
        }
        match side {
            Some(s) if s.len() != batch * self.side_width || self.side_width == 0 => {
                return Err(Error::Shape(format!(
                    "side input of {} values is not a batch of {batch} x {}",
                    s.len(),
                    self.side_width
                )))
            }
            None if self.side_width > 0 => {
                return Err(Error::Shape("network needs a side input".into()))
            }
            _ => {}
        }
        let finite = input.iter().all(|v| v.is_finite())
            && side.map_or(true, |s| s.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::InvalidInput("non-finite network input".into()));
        }
        Ok(())
    }

    fn check_tensor(&self, input: &Tensor<T>) -> Result<usize> {
        let shape = input.shape();
        if shape.len() == self.input_shape.len() + 1 && shape[1..] == self.input_shape[..] {
            Ok(shape[0])
        } else if shape == self.input_shape.as_slice() {
            Ok(1)
        } else {
            Err(Error::Shape(format!(
                "input shape {shape:?} does not match network input {:?}",
                self.input_shape
            )))
        }
    }

    /// Forward pass keeping what backpropagation needs. Dropout is active
    /// only when `training` and its masks are a function of `dropout_seed`.
    pub fn forward(
        &self,
        input: &Tensor<T>,
        side: Option<&Tensor<T>>,
        training: bool,
        dropout_seed: u64,
    ) -> Result<(Tensor<T>, Cache<T>)> {
        let batch = self.check_tensor(input)?;
        let (out, cache) = self.forward_flat(
            input.data(),
            batch,
            side.map(|s| s.data()),
            training,
            dropout_seed,
        )?;
        Ok((Tensor::new(vec![batch, self.output_len()], out)?, cache))
    }

    /// Inference-mode forward pass without a cache.
    pub fn predict(&self, input: &Tensor<T>, side: Option<&Tensor<T>>) -> Result<Tensor<T>> {
        let batch = self.check_tensor(input)?;
        let out = self.predict_flat(input.data(), batch, side.map(|s| s.data()))?;
        Tensor::new(vec![batch, self.output_len()], out)
    }

    pub fn predict_flat(&self, input: &[T], batch: usize, side: Option<&[T]>) -> Result<Vec<T>> {
        self.check_inputs(input, batch, side)?;
        let mut x = input.to_vec();
        for layer in &self.layers {
            x = match layer {
                Layer::Conv2d(c) => c.forward(&x, batch).0,
                Layer::Dense(d) => d.forward(&x, batch),
                Layer::Relu => relu(x),
                Layer::Sigmoid => sigmoid(x),
                Layer::Dropout(_) => x,
                Layer::ConcatSide(w) => concat(&x, side.expect("checked"), batch, *w),
            };
        }
        check_output(&x)?;
        Ok(x)
    }

    pub fn forward_flat(
        &self,
        input: &[T],
        batch: usize,
        side: Option<&[T]>,
        training: bool,
        dropout_seed: u64,
    ) -> Result<(Vec<T>, Cache<T>)> {
        self.check_inputs(input, batch, side)?;
        let n = self.layers.len();
        let mut acts = Vec::with_capacity(n + 1);
        let mut cols = vec![None; n];
        let mut masks = vec![None; n];
        acts.push(input.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let x = &acts[i];
            let y = match layer {
                Layer::Conv2d(c) => {
                    let (y, c_cols) = c.forward(x, batch);
                    cols[i] = Some(c_cols);
                    y
                }
                Layer::Dense(d) => d.forward(x, batch),
                Layer::Relu => relu(x.clone()),
                Layer::Sigmoid => sigmoid(x.clone()),
                Layer::Dropout(rate) if training && *rate > 0.0 => {
                    let mask = dropout_mask::<T>(*rate, x.len(), dropout_seed, i);
                    let y = x.iter().zip(&mask).map(|(a, m)| *a * *m).collect();
                    masks[i] = Some(mask);
                    y
                }
                Layer::Dropout(_) => x.clone(),
                Layer::ConcatSide(w) => concat(x, side.expect("checked"), batch, *w),
            };
            acts.push(y);
        }
        let out = acts.last().expect("non-empty").clone();
        check_output(&out)?;
        Ok((
            out,
            Cache {
                network: self.id,
                generation: self.generation,
                batch,
                acts,
                cols,
                masks,
            },
        ))
    }

    pub fn backward(&self, cache: &Cache<T>, output_grad: &Tensor<T>) -> Result<Gradients<T>> {
        self.backward_flat(cache, output_grad.data(), BackwardOptions::default())
    }

    /// Exact gradients of `sum(output_grad * output)` with respect to the
    /// parameters and, when asked, the inputs.
    pub fn backward_flat(
        &self,
        cache: &Cache<T>,
        output_grad: &[T],
        opts: BackwardOptions,
    ) -> Result<Gradients<T>> {
        if cache.network != self.id || cache.generation != self.generation {
            return Err(Error::Contract(
                "cache does not come from the current weights of this network".into(),
            ));
        }
        let batch = cache.batch;
        if output_grad.len() != batch * self.output_len() {
            return Err(Error::Shape(format!(
                "output gradient of {} values for a batch of {batch} x {}",
                output_grad.len(),
                self.output_len()
            )));
        }
        let mut param_grads: Vec<Vec<Vec<T>>> = vec![Vec::new(); self.layers.len()];
        let mut side_grad = None;
        let mut grad = output_grad.to_vec();
        let concat_at = self
            .layers
            .iter()
            .position(|l| matches!(l, Layer::ConcatSide(_)));
        let mut reached_input = true;

        for i in (0..self.layers.len()).rev() {
            // Below the concat point nothing is needed for a pure side-input
            // gradient.
            if !opts.params && !opts.input && concat_at.is_some_and(|c| i < c) {
                reached_input = false;
                break;
            }
            let need_input = i > 0 || opts.input;
            match &self.layers[i] {
                Layer::Conv2d(c) => {
                    let cols = cache.cols[i].as_ref().ok_or_else(|| {
                        Error::Contract("convolution cache missing".into())
                    })?;
                    let (dw, db, dx) = c.backward(cols, &grad, batch, opts.params, need_input);
                    if opts.params {
                        param_grads[i] = vec![dw, db];
                    }
                    grad = dx.unwrap_or_default();
                }
                Layer::Dense(d) => {
                    let (dw, db, dx) =
                        d.backward(&cache.acts[i], &grad, batch, opts.params, need_input);
                    if opts.params {
                        param_grads[i] = vec![dw, db];
                    }
                    grad = dx.unwrap_or_default();
                }
                Layer::Relu => {
                    for (g, y) in grad.iter_mut().zip(&cache.acts[i + 1]) {
                        if *y <= T::zero() {
                            *g = T::zero();
                        }
                    }
                }
                Layer::Sigmoid => {
                    for (g, y) in grad.iter_mut().zip(&cache.acts[i + 1]) {
                        *g *= *y * (T::one() - *y);
                    }
                }
                Layer::Dropout(_) => {
                    if let Some(mask) = &cache.masks[i] {
                        for (g, m) in grad.iter_mut().zip(mask) {
                            *g *= *m;
                        }
                    }
                }
                Layer::ConcatSide(w) => {
                    let total = self.sizes[i + 1];
                    let feat = total - w;
                    let mut features = Vec::with_capacity(batch * feat);
                    let mut side = Vec::with_capacity(batch * w);
                    for row in grad.chunks_exact(total) {
                        features.extend_from_slice(&row[..feat]);
                        side.extend_from_slice(&row[feat..]);
                    }
                    side_grad = Some(side);
                    grad = features;
                }
            }
        }

        let params = if opts.params {
            param_grads.into_iter().flatten().collect()
        } else {
            Vec::new()
        };
        Ok(Gradients {
            params,
            input: (opts.input && reached_input).then_some(grad),
            side: side_grad,
        })
    }
}

fn relu<T: Real>(mut x: Vec<T>) -> Vec<T> {
    for v in x.iter_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
    x
}

fn sigmoid<T: Real>(mut x: Vec<T>) -> Vec<T> {
    for v in x.iter_mut() {
        *v = T::one() / (T::one() + (-*v).exp());
    }
    x
}

fn concat<T: Real>(x: &[T], side: &[T], batch: usize, width: usize) -> Vec<T> {
    let feat = x.len() / batch;
    let mut out = Vec::with_capacity(batch * (feat + width));
    for b in 0..batch {
        out.extend_from_slice(&x[b * feat..(b + 1) * feat]);
        out.extend_from_slice(&side[b * width..(b + 1) * width]);
    }
    out
}

fn check_output<T: Real>(out: &[T]) -> Result<()> {
    if out.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput("network produced non-finite output".into()))
    }
}
