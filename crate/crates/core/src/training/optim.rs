use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

fn check_grads<T: Scalar>(params: &ParamSet<T>, grads: &[Option<Tensor<T>>]) -> Result<()> {
    if grads.len() != params.len() {
        return Err(Error::Contract(format!(
            "{} gradients for {} parameters",
            grads.len(),
            params.len()
        )));
    }
    for (p, g) in params.iter().zip(grads) {
        if let Some(g) = g {
            p.value.check_same(g, "optimizer step")?;
        }
    }
    Ok(())
}

/// Plain gradient descent `θ ← θ − lr·g`. Parameters with no gradient are
/// left alone.
pub fn sgd_step<T: Scalar>(params: &mut ParamSet<T>, grads: &[Option<Tensor<T>>], lr: T) -> Result<()> {
    check_grads(params, grads)?;
    for (p, g) in params.iter_mut().zip(grads) {
        let Some(g) = g else { continue };
        for (x, &d) in p.value.data_mut().iter_mut().zip(g.data()) {
            *x -= lr * d;
        }
    }
    Ok(())
}

/// Adam moments and hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    /// Steps taken so far.
    pub t: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    /// Zero moments shaped like `params`, with β1 = 0.9, β2 = 0.999, eps = 1e-8.
    pub fn new(params: &ParamSet<T>, lr: T) -> Self {
        let zeros: Vec<Tensor<T>> = params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        Self {
            lr,
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            eps: T::of(1e-8),
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn first_moments(&self) -> &[Tensor<T>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Tensor<T>] {
        &self.v
    }
}

/// One bias-corrected Adam update:
/// `m̂ = m/(1−β1ᵗ)`, `v̂ = v/(1−β2ᵗ)`, `θ ← θ − lr·m̂/(√v̂ + eps)`.
pub fn adam_step<T: Scalar>(params: &mut ParamSet<T>, grads: &[Option<Tensor<T>>], state: &mut AdamState<T>) -> Result<()> {
    check_grads(params, grads)?;
    if state.m.len() != params.len() {
        return Err(Error::Contract("Adam state does not match the parameter set".into()));
    }
    state.t += 1;
    let t = state.t as f64;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = T::one() - T::of(b1.as_f64().powf(t));
    let c2 = T::one() - T::of(b2.as_f64().powf(t));
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let Some(g) = g else { continue };
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (((x, &d), mi), vi) in p.value.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
            *mi = b1 * *mi + (T::one() - b1) * d;
            *vi = b2 * *vi + (T::one() - b2) * d * d;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *x -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Optimizer<T> {
    Sgd { lr: T },
    Adam(AdamState<T>),
}

impl<T: Scalar> Optimizer<T> {
    pub fn step(&mut self, params: &mut ParamSet<T>, grads: &[Option<Tensor<T>>]) -> Result<()> {
        match self {
            Optimizer::Sgd { lr } => sgd_step(params, grads, *lr),
            Optimizer::Adam(state) => adam_step(params, grads, state),
        }
    }
}
