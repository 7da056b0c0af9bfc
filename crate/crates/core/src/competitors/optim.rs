//! Derivative-free minimization shared by the competitor fits.

use argmin::core::{CostFunction, Error as ArgminError, Executor, State};
use argmin::solver::neldermead::NelderMead;

/// Returned for parameter vectors outside the admissible region.
pub(crate) const PENALTY: f64 = 1e100;

struct Objective<'a, F: Fn(&[f64]) -> f64> {
    f: &'a F,
}

impl<F: Fn(&[f64]) -> f64> CostFunction for Objective<'_, F> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> Result<f64, ArgminError> {
        let v = (self.f)(p);
        Ok(if v.is_finite() { v } else { PENALTY })
    }
}

/// Nelder-Mead from `x0` with an axis-aligned initial simplex of edge `step`.
/// Returns the best point and its value.
pub(crate) fn nelder_mead<F: Fn(&[f64]) -> f64>(
    f: &F,
    x0: &[f64],
    step: &[f64],
    max_iters: u64,
    tol: f64,
) -> (Vec<f64>, f64) {
    let mut simplex = vec![x0.to_vec()];
    for j in 0..x0.len() {
        let mut v = x0.to_vec();
        v[j] += step[j];
        simplex.push(v);
    }
    let fallback = (x0.to_vec(), {
        let v = f(x0);
        if v.is_finite() {
            v
        } else {
            PENALTY
        }
    });
    let solver = match NelderMead::new(simplex).with_sd_tolerance(tol) {
        Ok(s) => s,
        Err(_) => return fallback,
    };
    let run = Executor::new(Objective { f }, solver)
        .configure(|state| state.max_iters(max_iters))
        .run();
    match run {
        Ok(res) => {
            let state = res.state();
            match state.get_best_param() {
                Some(p) if state.get_best_cost() <= fallback.1 => (p.clone(), state.get_best_cost()),
                _ => fallback,
            }
        }
        Err(_) => fallback,
    }
}

/// Repeats [`nelder_mead`] from its own optimum until the improvement
/// stalls; a single simplex run often stops on a ridge.
pub(crate) fn nelder_mead_restarts<F: Fn(&[f64]) -> f64>(
    f: &F,
    x0: &[f64],
    step: &[f64],
    max_iters: u64,
    restarts: usize,
) -> (Vec<f64>, f64) {
    let (mut x, mut fx) = nelder_mead(f, x0, step, max_iters, 1e-10);
    for _ in 0..restarts {
        let (x2, f2) = nelder_mead(f, &x, step, max_iters, 1e-10);
        let gain = fx - f2;
        if f2 < fx {
            x = x2;
            fx = f2;
        }
        if gain <= 1e-9 * (1.0 + fx.abs()) {
            break;
        }
    }
    (x, fx)
}

/// Maps unconstrained `u` to nonnegative weights summing to less than one
/// (softmax against an implicit zero logit).
pub(crate) fn simplex_weights(u: &[f64]) -> Vec<f64> {
    let top = u.iter().cloned().fold(0.0, f64::max);
    let e: Vec<f64> = u.iter().map(|v| (v - top).exp()).collect();
    let denom = (-top).exp() + e.iter().sum::<f64>();
    e.iter().map(|v| v / denom).collect()
}

/// Inverse of [`simplex_weights`] for weights with positive slack.
pub(crate) fn simplex_logits(w: &[f64]) -> Vec<f64> {
    let slack = 1.0 - w.iter().sum::<f64>();
    w.iter().map(|v| (v.max(1e-8) / slack).ln()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_quadratic() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + 10.0 * (x[1] + 2.0).powi(2);
        let (x, fx) = nelder_mead_restarts(&f, &[0.0, 0.0], &[0.5, 0.5], 2000, 3);
        assert!((x[0] - 1.0).abs() < 1e-4 && (x[1] + 2.0).abs() < 1e-4);
        assert!(fx < 1e-8);
    }

    #[test]
    fn weights_round_trip() {
        let w = [0.05, 0.02, 0.9];
        let back = simplex_weights(&simplex_logits(&w));
        for (a, b) in back.iter().zip(w) {
            assert!((a - b).abs() < 1e-12);
        }
        let w = simplex_weights(&[800.0, -3.0]);
        assert!(w.iter().sum::<f64>() <= 1.0 && w.iter().all(|v| *v >= 0.0));
    }
}
