use super::network::{BackwardOptions, Network};
use super::tensor::Tensor;
use crate::Result;

const STEP: f64 = 1e-5;

/// Central finite differences of `f` at `x` with step `h`.
pub fn numeric_gradient(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Largest relative error between backpropagated and central-difference
/// gradients over every parameter and every input element.
///
/// The check runs on a double-precision copy of `net`. `loss` maps network
/// outputs to a scalar and its gradient. With `dropout_seed` set, dropout is
/// active with the same masks for every evaluation.
pub fn gradient_check(
    net: &Network<f32>,
    input: &Tensor<f32>,
    side: Option<&Tensor<f32>>,
    dropout_seed: Option<u64>,
    loss: impl Fn(&[f64]) -> (f64, Vec<f64>),
) -> Result<f64> {
    let mut net64: Network<f64> = net.cast();
    let x: Vec<f64> = input.data().iter().map(|&v| v as f64).collect();
    let s: Option<Vec<f64>> = side.map(|t| t.data().iter().map(|&v| v as f64).collect());
    let batch = x.len() / net.input_len();
    let training = dropout_seed.is_some();
    let seed = dropout_seed.unwrap_or(0);

    let (out, cache) = net64.forward_flat(&x, batch, s.as_deref(), training, seed)?;
    let (_, out_grad) = loss(&out);
    let analytic = net64.backward_flat(
        &cache,
        &out_grad,
        BackwardOptions {
            params: true,
            input: true,
        },
    )?;

    let eval = |n: &Network<f64>, x: &[f64], s: Option<&[f64]>| -> f64 {
        let (out, _) = n
            .forward_flat(x, batch, s, training, seed)
            .expect("shapes were checked by the first pass");
        loss(&out).0
    };

    let mut worst: f64 = 0.0;
    let tensors = analytic.params.len();
    for t in 0..tensors {
        let len = analytic.params[t].len();
        for i in 0..len {
            let orig = net64.params()[t][i];
            net64.params_mut()[t][i] = orig + STEP;
            let up = eval(&net64, &x, s.as_deref());
            net64.params_mut()[t][i] = orig - STEP;
            let down = eval(&net64, &x, s.as_deref());
            net64.params_mut()[t][i] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            worst = worst.max(rel_error(analytic.params[t][i], numeric));
        }
    }

    if let Some(dx) = &analytic.input {
        let numeric = numeric_gradient(&x, STEP, |xp| eval(&net64, xp, s.as_deref()));
        for (a, n) in dx.iter().zip(&numeric) {
            worst = worst.max(rel_error(*a, *n));
        }
    }
    if let (Some(ds), Some(sv)) = (&analytic.side, &s) {
        let numeric = numeric_gradient(sv, STEP, |sp| eval(&net64, &x, Some(sp)));
        for (a, n) in ds.iter().zip(&numeric) {
            worst = worst.max(rel_error(*a, *n));
        }
    }
    Ok(worst)
}
