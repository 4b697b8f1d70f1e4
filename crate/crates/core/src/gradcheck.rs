//! Central finite differences, used as the independent oracle for backprop.

use crate::error::{Result, TensorError};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// `(f(x + h·eᵢ) − f(x − h·eᵢ)) / 2h` for every element `i`, in 64-bit.
pub fn finite_diff_grad<F>(mut f: F, x: &Tensor<f64>, h: f64) -> Tensor<f64>
where
    F: FnMut(&Tensor<f64>) -> f64,
{
    assert!(h > 0.0, "finite difference step must be positive");
    let mut probe = x.clone();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = x.data()[i];
        probe.as_mut_slice()[i] = orig + h;
        let plus = f(&probe);
        probe.as_mut_slice()[i] = orig - h;
        let minus = f(&probe);
        probe.as_mut_slice()[i] = orig;
        grad.push((plus - minus) / (2.0 * h));
    }
    Tensor::from_parts(x.shape().to_vec(), grad)
}

/// Largest elementwise `|a − b| / max(|a|, |b|, floor)`.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Compares tape gradients of a scalar `build(tape, leaves)` against
/// central differences for every element of every input, returning the
/// largest relative error.
pub fn check_gradients<F>(inputs: &[Tensor<f64>], h: f64, floor: f64, build: F) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|v| tape.constant(v.clone())).collect();
        let loss = build(&mut tape, &vars)?;
        Ok(tape.value(loss).data()[0])
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|v| tape.param(v.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    let mut worst = 0.0f64;
    for (k, var) in vars.iter().enumerate() {
        let analytic = grads
            .get(*var)
            .ok_or_else(|| TensorError::Contract(format!("input {k} received no gradient")))?;
        let mut failure = None;
        let numeric = finite_diff_grad(
            |probe| {
                let mut values = inputs.to_vec();
                values[k] = probe.clone();
                eval(&values).unwrap_or_else(|e| {
                    failure.get_or_insert(e);
                    f64::NAN
                })
            },
            &inputs[k],
            h,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        worst = worst.max(max_relative_error(analytic.data(), numeric.data(), floor));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gives_ones() {
        let x = Tensor::new([3], vec![0.3, -1.0, 7.0]).unwrap();
        let g = finite_diff_grad(|t| t.data().iter().sum(), &x, 1e-5);
        assert!(g.data().iter().all(|&v| (v - 1.0).abs() < 1e-9));
    }

    #[test]
    fn square_at_three() {
        let x = Tensor::new([1], vec![3.0]).unwrap();
        let g = finite_diff_grad(|t| t.data().iter().map(|v| v * v).sum(), &x, 1e-5);
        assert!((g.data()[0] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn constant_gives_zeros() {
        let x = Tensor::new([2], vec![1.0, 2.0]).unwrap();
        let g = finite_diff_grad(|_| 4.2, &x, 1e-5);
        assert_eq!(g.data(), &[0.0, 0.0]);
    }
}
