//! Finite-difference verification of tape gradients.
//!
//! Rebuilds the computation from scratch for every probe, so the closure
//! must be a pure function of its inputs.

use crate::error::AafError;
use crate::scalar::Scalar;
use crate::tape::{GradTape, Var};
use crate::tensor::Tensor;

/// Outcome of a finite-difference sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    /// Largest relative error across all checked coordinates.
    pub max_rel_err: f64,
    /// Index (into the input slice) of the tensor holding the worst error.
    pub worst_input: usize,
    /// Flat coordinate of the worst error inside that tensor.
    pub worst_coord: usize,
    /// Total coordinates probed.
    pub coords_checked: usize,
}

impl GradReport {
    pub fn within(&self, tol: f64) -> bool {
        self.max_rel_err.is_finite() && self.max_rel_err <= tol
    }
}

/// Builds a scalar loss on the given tape from leaves already registered
/// for each input tensor, in order.
pub type LossFn<'a, S> = dyn Fn(&mut GradTape<S>, &[Var]) -> Result<Var, AafError> + 'a;

fn eval_loss<S: Scalar>(inputs: &[Tensor<S>], f: &LossFn<S>) -> Result<f64, AafError> {
    let mut tape = GradTape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t)).collect();
    let loss = f(&mut tape, &vars)?;
    if tape.value(loss).numel() != 1 {
        return Err(AafError::NonScalarLoss {
            shape: tape.shape_of(loss).to_vec(),
        });
    }
    Ok(tape.value(loss).data()[0].as_f64())
}

/// Central-difference check of every coordinate of every input.
pub fn gradcheck<S: Scalar>(
    inputs: &[Tensor<S>],
    f: &LossFn<S>,
    eps: f64,
) -> Result<GradReport, AafError> {
    gradcheck_sampled(inputs, f, usize::MAX, eps)
}

/// Central-difference check probing at most `max_coords` evenly spaced
/// coordinates per input tensor. Relative error for a coordinate is
/// `|analytic - numeric| / max(1, |analytic|)`.
pub fn gradcheck_sampled<S: Scalar>(
    inputs: &[Tensor<S>],
    f: &LossFn<S>,
    max_coords: usize,
    eps: f64,
) -> Result<GradReport, AafError> {
    // Analytic gradients from one reverse pass.
    let mut tape = GradTape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| tape.leaf(&t.clone().with_grad()))
        .collect();
    let loss = f(&mut tape, &vars)?;
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| match tape.grad(v) {
            Some(g) => g.iter().map(|&x| x.as_f64()).collect(),
            None => vec![0.0; t.numel()],
        })
        .collect();

    let mut report = GradReport {
        max_rel_err: 0.0,
        worst_input: 0,
        worst_coord: 0,
        coords_checked: 0,
    };
    let step = S::lit(eps);
    for (i, input) in inputs.iter().enumerate() {
        let n = input.numel();
        let stride = if n <= max_coords { 1 } else { n.div_ceil(max_coords) };
        let mut coord = 0;
        while coord < n {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[coord] += step;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[coord] -= step;
            let numeric =
                (eval_loss(&plus, f)? - eval_loss(&minus, f)?) / (2.0 * eps);
            let a = analytic[i][coord];
            let rel = if a.is_finite() && numeric.is_finite() {
                (a - numeric).abs() / 1.0f64.max(a.abs())
            } else {
                f64::INFINITY
            };
            report.coords_checked += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst_input = i;
                report.worst_coord = coord;
            }
            coord += stride;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_verifies() {
        let x = Tensor::from_rows(&[vec![0.5, -1.25], vec![2.0, 0.1]]).unwrap();
        let report = gradcheck(
            &[x],
            &|tape, vars| {
                let sq = tape.mul(vars[0], vars[0])?;
                Ok(tape.sum(sq))
            },
            1e-5,
        )
        .unwrap();
        assert_eq!(report.coords_checked, 4);
        assert!(report.within(1e-7), "max err {}", report.max_rel_err);
    }

    #[test]
    fn detects_wrong_gradient() {
        // Half the dependence on x is smuggled through a constant snapshot,
        // so the tape reports d/dx sum(x*x) as x instead of 2x. The numeric
        // probe re-snapshots the perturbed value and sees the true slope.
        let x = Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let report = gradcheck(
            &[x],
            &|tape, vars| {
                let snapshot = tape.value(vars[0]).clone();
                let hidden = tape.constant(&snapshot);
                let prod = tape.mul(vars[0], hidden)?;
                Ok(tape.sum(prod))
            },
            1e-5,
        )
        .unwrap();
        assert!(
            report.max_rel_err > 1e-2,
            "expected a large error, got {}",
            report.max_rel_err
        );
    }

    #[test]
    fn sampling_caps_probe_count() {
        let x: Tensor<f64> = Tensor::zeros(vec![10, 10]);
        let report = gradcheck_sampled(
            &[x],
            &|tape, vars| Ok(tape.sum(vars[0])),
            7,
            1e-5,
        )
        .unwrap();
        assert!(report.coords_checked <= 7, "{}", report.coords_checked);
        assert!(report.within(1e-9));
    }

    #[test]
    fn softmax_chain_verifies() {
        let x = Tensor::from_rows(&[vec![0.3, -0.7, 1.1], vec![0.0, 0.4, -0.2]]).unwrap();
        let w = Tensor::from_rows(&[vec![0.2], vec![-0.5], vec![0.9]]).unwrap();
        let report = gradcheck(
            &[x, w],
            &|tape, vars| {
                let s = tape.softmax(vars[0], 1)?;
                let y = tape.matmul(s, vars[1])?;
                let e = tape.exp(y);
                Ok(tape.sum(e))
            },
            1e-5,
        )
        .unwrap();
        assert!(report.within(1e-8), "max err {}", report.max_rel_err);
    }
}
