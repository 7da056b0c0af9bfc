//! Exact vertex refinement for the check-loss linear program.
//!
//! The objective is piecewise linear, so an optimum is attained at a basic
//! solution that interpolates `p` observations. Starting from any
//! nonsingular basis, each step moves along the edge with the most negative
//! directional derivative to the breakpoint where the derivative turns
//! non-negative (a weighted-median line search), swapping one observation
//! in and one out. The loop stops when every edge is non-descending, which
//! is the exact LP optimality condition.

use nalgebra::{DMatrix, DVector};

use super::{check_loss, ColumnView};

pub(crate) struct Vertex {
    pub theta: Vec<f64>,
    pub basis: Vec<usize>,
    pub residuals: Vec<f64>,
    pub pivots: usize,
    pub optimal: bool,
}

/// Relative tolerance under which a directional derivative counts as zero.
const OPT_TOL: f64 = 1e-10;

fn basis_matrix(x: &ColumnView<'_>, basis: &[usize]) -> DMatrix<f64> {
    let p = x.p();
    DMatrix::from_fn(p, p, |r, c| x.col(c)[basis[r]])
}

fn residuals(x: &ColumnView<'_>, y: &[f64], theta: &[f64]) -> Vec<f64> {
    let mut r = y.to_vec();
    for (j, t) in theta.iter().enumerate() {
        for (ri, xv) in r.iter_mut().zip(x.col(j)) {
            *ri -= xv * t;
        }
    }
    r
}

/// Picks `p` linearly independent rows, preferring small `|score|`.
pub(crate) fn select_basis(x: &ColumnView<'_>, score: &[f64]) -> Option<Vec<usize>> {
    let p = x.p();
    let mut order: Vec<usize> = (0..x.n()).collect();
    order.sort_by(|&a, &b| score[a].abs().total_cmp(&score[b].abs()));

    let mut chosen = Vec::with_capacity(p);
    let mut ortho: Vec<Vec<f64>> = Vec::with_capacity(p);
    for i in order {
        let row: Vec<f64> = (0..p).map(|j| x.col(j)[i]).collect();
        let norm0 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm0 == 0.0 {
            continue;
        }
        let mut v = row;
        for u in &ortho {
            let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 * norm0 {
            v.iter_mut().for_each(|a| *a /= norm);
            ortho.push(v);
            chosen.push(i);
            if chosen.len() == p {
                return Some(chosen);
            }
        }
    }
    None
}

pub(crate) fn descend(
    x: &ColumnView<'_>,
    y: &[f64],
    tau: f64,
    mut basis: Vec<usize>,
    max_pivots: usize,
) -> Option<Vertex> {
    let n = x.n();
    let p = x.p();
    if basis.len() != p {
        return None;
    }
    let yscale = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let zero_tol = 1e-11 * yscale;

    let mut in_basis = vec![false; n];
    let mut pivots = 0;
    loop {
        let xh = basis_matrix(x, &basis);
        let lu = xh.lu();
        let yh = DVector::from_iterator(p, basis.iter().map(|&i| y[i]));
        let theta = lu.solve(&yh)?;
        let hinv = lu.try_inverse()?;
        if theta.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let theta_v: Vec<f64> = theta.iter().copied().collect();
        let mut r = residuals(x, y, &theta_v);
        in_basis.iter_mut().for_each(|b| *b = false);
        for &i in &basis {
            in_basis[i] = true;
            r[i] = 0.0;
        }

        // g = sum of psi(r_i) x_i over non-basic, nonzero residuals
        let mut g = DVector::zeros(p);
        let mut degenerate = Vec::new();
        for i in 0..n {
            if in_basis[i] {
                continue;
            }
            if r[i].abs() <= zero_tol {
                degenerate.push(i);
                continue;
            }
            let psi = if r[i] < 0.0 { tau - 1.0 } else { tau };
            for j in 0..p {
                g[j] += psi * x.col(j)[i];
            }
        }
        let v = hinv.transpose() * &g;

        // B = X H^{-1}; column j is the response of every fitted value to
        // moving along edge j.
        let mut bmat = vec![vec![0.0; n]; p];
        for (j, bj) in bmat.iter_mut().enumerate() {
            for k in 0..p {
                let h = hinv[(k, j)];
                if h != 0.0 {
                    for (o, xv) in bj.iter_mut().zip(x.col(k)) {
                        *o += xv * h;
                    }
                }
            }
        }

        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..p {
            for sigma in [1.0, -1.0] {
                let mut d = if sigma > 0.0 { 1.0 - tau - v[j] } else { tau + v[j] };
                for &i in &degenerate {
                    let a = sigma * bmat[j][i];
                    d += if a > 0.0 { (1.0 - tau) * a } else { -tau * a };
                }
                if d < -OPT_TOL * (1.0 + v[j].abs()) && best.is_none_or(|(_, _, bd)| d < bd) {
                    best = Some((j, sigma, d));
                }
            }
        }

        let Some((j, sigma, d)) = best else {
            return Some(Vertex {
                theta: theta_v,
                basis,
                residuals: r,
                pivots,
                optimal: true,
            });
        };
        if pivots >= max_pivots {
            return Some(Vertex {
                theta: theta_v,
                basis,
                residuals: r,
                pivots,
                optimal: false,
            });
        }

        // weighted-median line search along the chosen edge
        let mut cands: Vec<(f64, f64, usize)> = Vec::new();
        for i in 0..n {
            if in_basis[i] || r[i].abs() <= zero_tol {
                continue;
            }
            let a = sigma * bmat[j][i];
            if a != 0.0 {
                let t = r[i] / a;
                if t > 0.0 {
                    cands.push((t, a.abs(), i));
                }
            }
        }
        cands.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut slope = d;
        let mut entering = None;
        for (_, w, i) in cands {
            slope += w;
            if slope >= 0.0 {
                entering = Some(i);
                break;
            }
        }
        let entering = entering?;
        basis[j] = entering;
        pivots += 1;
    }
}

/// Check loss of a residual vector.
pub(crate) fn total_loss(r: &[f64], tau: f64) -> f64 {
    r.iter().map(|&u| check_loss(u, tau)).sum()
}
