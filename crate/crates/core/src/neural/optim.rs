use super::gemm::Real;
use super::network::{Gradients, Network};
use crate::{Error, Result};

/// RMSprop: `acc <- rho * acc + (1 - rho) * g^2`,
/// `p <- p - lr * g / (sqrt(acc) + eps)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsProp<T = f32> {
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
    /// Second-moment accumulators, one per parameter tensor; empty until the
    /// first update.
    pub accumulators: Vec<Vec<T>>,
}

impl<T: Real> RmsProp<T> {
    pub fn new(learning_rate: f64) -> Self {
        RmsProp {
            learning_rate,
            rho: 0.9,
            epsilon: 1e-7,
            accumulators: Vec::new(),
        }
    }

    pub fn step(&mut self, net: &mut Network<T>, grads: &Gradients<T>) -> Result<()> {
        let mut params = net.params_mut();
        self.apply(&mut params, &grads.params)
    }

    /// Updates raw parameter tensors in place.
    pub fn apply(&mut self, params: &mut [&mut [T]], grads: &[Vec<T>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Shape(format!(
                "{} parameter tensors but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.len() != g.len() {
                return Err(Error::Shape(format!(
                    "parameter of {} values with gradient of {}",
                    p.len(),
                    g.len()
                )));
            }
        }
        if self.accumulators.is_empty() {
            self.accumulators = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
        }
        if self.accumulators.len() != params.len()
            || self.accumulators.iter().zip(params.iter()).any(|(a, p)| a.len() != p.len())
        {
            return Err(Error::Shape("optimizer state does not match the parameters".into()));
        }
        let lr = T::of_f64(self.learning_rate);
        let rho = T::of_f64(self.rho);
        let one_minus_rho = T::of_f64(1.0 - self.rho);
        let eps = T::of_f64(self.epsilon);
        for ((p, g), acc) in params.iter_mut().zip(grads).zip(&mut self.accumulators) {
            for ((w, &gi), a) in p.iter_mut().zip(g).zip(acc.iter_mut()) {
                *a = rho * *a + one_minus_rho * gi * gi;
                *w -= lr * gi / (a.sqrt() + eps);
            }
        }
        Ok(())
    }
}
