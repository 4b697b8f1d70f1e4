//! Elementwise parameter updates.

use super::TrainError;
use crate::error::TensorError;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub const NAMES: [&'static str; 2] = ["sgd", "adam"];

    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Optimizer::Sgd => "sgd",
            Optimizer::Adam { .. } => "adam",
        }
    }

    /// Parses `sgd` or `adam` (the latter with default moments).
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sgd" => Some(Optimizer::Sgd),
            "adam" => Some(Self::adam()),
            _ => None,
        }
    }
}

fn same_shape<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<(), TrainError> {
    if a.shape() != b.shape() {
        return Err(TensorError::Shape {
            op: "optimizer step",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        }
        .into());
    }
    Ok(())
}

/// `θ ← θ − lr·g`
pub fn sgd_step<T: Scalar>(params: &mut Tensor<T>, grads: &Tensor<T>, lr: T) -> Result<(), TrainError> {
    same_shape(params, grads)?;
    for (p, &g) in params.as_mut_slice().iter_mut().zip(grads.data()) {
        *p -= lr * g;
    }
    Ok(())
}

/// First and second moment estimates plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub t: i32,
}

impl<T: Scalar> AdamState<T> {
    pub fn zeros(len: usize) -> Self {
        Self {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step<T: Scalar>(
    params: &mut Tensor<T>,
    grads: &Tensor<T>,
    state: &mut AdamState<T>,
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
) -> Result<(), TrainError> {
    same_shape(params, grads)?;
    if state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(TensorError::Shape {
            op: "adam state",
            lhs: params.shape().to_vec(),
            rhs: vec![state.m.len()],
        }
        .into());
    }
    state.t += 1;
    let one = T::one();
    let c1 = one - beta1.powi(state.t);
    let c2 = one - beta2.powi(state.t);
    for (((p, &g), m), v) in params
        .as_mut_slice()
        .iter_mut()
        .zip(grads.data())
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = beta1 * *m + (one - beta1) * g;
        *v = beta2 * *v + (one - beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f64]) -> Tensor<f64> {
        Tensor::new([v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn sgd_cases() {
        let mut p = t(&[1.0]);
        sgd_step(&mut p, &t(&[0.5]), 0.1).unwrap();
        assert!((p.data()[0] - 0.95).abs() < 1e-15);
        let mut p = t(&[1.0, -2.0]);
        sgd_step(&mut p, &t(&[3.0, 4.0]), 0.0).unwrap();
        assert_eq!(p.data(), &[1.0, -2.0]);
        sgd_step(&mut p, &t(&[0.0, 0.0]), 0.5).unwrap();
        assert_eq!(p.data(), &[1.0, -2.0]);
        assert!(sgd_step(&mut p, &t(&[0.0]), 0.5).is_err());
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let lr = 0.01;
        for g in [0.3, -5.0, 1e-3] {
            let mut p = t(&[0.0]);
            let mut s = AdamState::zeros(1);
            adam_step(&mut p, &t(&[g]), &mut s, lr, 0.9, 0.999, 1e-8).unwrap();
            // m̂ = g, v̂ = g², so the step is lr·|g| / (|g| + ε)
            let expected = lr * g.abs() / (g.abs() + 1e-8);
            assert!((p.data()[0].abs() - expected).abs() < 1e-12);
            assert!((p.data()[0].abs() - lr).abs() < 1e-7);
            assert_eq!(s.t, 1);
        }
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut p = t(&[0.7, -0.2]);
        let mut s = AdamState::zeros(2);
        adam_step(&mut p, &t(&[0.0, 0.0]), &mut s, 0.1, 0.9, 0.999, 1e-8).unwrap();
        assert_eq!(p.data(), &[0.7, -0.2]);
    }

    #[test]
    fn adam_two_steps_decrease() {
        let mut p = t(&[1.0]);
        let mut s = AdamState::zeros(1);
        let mut trace = vec![1.0];
        for _ in 0..2 {
            adam_step(&mut p, &t(&[1.0]), &mut s, 0.001, 0.9, 0.999, 1e-8).unwrap();
            trace.push(p.data()[0]);
        }
        assert!(trace.windows(2).all(|w| w[1] < w[0]), "{trace:?}");
        // constant gradient: both bias-corrected steps are ≈ lr
        assert!((trace[2] - (1.0 - 0.002)).abs() < 1e-6);
    }

    #[test]
    fn updates_are_elementwise() {
        let params = [0.3, -1.2, 2.0, 0.0];
        let grads = [0.5, -0.1, 0.0, 2.0];
        let perm = [2, 0, 3, 1];
        let mut direct = t(&params);
        let mut sd = AdamState::zeros(4);
        let mut permuted = t(&perm.map(|i| params[i]));
        let mut sp = AdamState::zeros(4);
        for _ in 0..3 {
            adam_step(&mut direct, &t(&grads), &mut sd, 0.01, 0.9, 0.999, 1e-8).unwrap();
            adam_step(&mut permuted, &t(&perm.map(|i| grads[i])), &mut sp, 0.01, 0.9, 0.999, 1e-8).unwrap();
        }
        for (k, &i) in perm.iter().enumerate() {
            assert_eq!(permuted.data()[k], direct.data()[i]);
        }
    }
}
