//! Frisch-Newton primal-dual interior point method for the quantile
//! regression dual `max y'd  s.t.  X'd = (1 - tau) X'1,  0 <= d <= 1`,
//! written as the minimization `min c'x, Ax = b, 0 <= x <= u` with
//! `A = X'`, `c = -y`, `u = 1`. Mehrotra predictor-corrector steps; the
//! coefficient vector is the negated dual of the equality constraints.

use nalgebra::{DMatrix, DVector};

use super::ColumnView;

const STEP_DAMPING: f64 = 0.9995;

pub(crate) struct IpmOutcome {
    pub beta: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// `X' diag(w) X`
fn weighted_gram(x: &ColumnView<'_>, w: &[f64]) -> DMatrix<f64> {
    let p = x.p();
    let mut m = DMatrix::zeros(p, p);
    for j in 0..p {
        let cj = x.col(j);
        for k in j..p {
            let ck = x.col(k);
            let v: f64 = cj.iter().zip(ck).zip(w).map(|((a, b), c)| a * b * c).sum();
            m[(j, k)] = v;
            m[(k, j)] = v;
        }
    }
    m
}

fn xt_times(x: &ColumnView<'_>, v: &[f64]) -> DVector<f64> {
    DVector::from_iterator(
        x.p(),
        (0..x.p()).map(|j| x.col(j).iter().zip(v).map(|(a, b)| a * b).sum()),
    )
}

fn x_times(x: &ColumnView<'_>, b: &DVector<f64>) -> Vec<f64> {
    let mut out = vec![0.0; x.n()];
    for j in 0..x.p() {
        let bj = b[j];
        for (o, v) in out.iter_mut().zip(x.col(j)) {
            *o += v * bj;
        }
    }
    out
}

/// Solves the SPD system, ridging the diagonal if the factorization breaks down.
fn spd_solve(m: DMatrix<f64>, rhs: DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = m.clone().cholesky() {
        return Some(ch.solve(&rhs));
    }
    let scale = (0..m.nrows()).map(|i| m[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut ridge = 1e-12 * scale;
    for _ in 0..8 {
        let mut mm = m.clone();
        for i in 0..mm.nrows() {
            mm[(i, i)] += ridge;
        }
        if let Some(ch) = mm.cholesky() {
            return Some(ch.solve(&rhs));
        }
        ridge *= 100.0;
    }
    None
}

fn step_length(v: &[f64], dv: &[f64]) -> f64 {
    v.iter()
        .zip(dv)
        .filter(|(_, d)| **d < 0.0)
        .map(|(a, d)| -a / d)
        .fold(1e20, f64::min)
}

pub(crate) fn frisch_newton(
    x: &ColumnView<'_>,
    y: &[f64],
    tau: f64,
    tol: f64,
    max_iter: usize,
) -> Option<IpmOutcome> {
    let n = x.n();
    let nf = n as f64;

    let c: Vec<f64> = y.iter().map(|v| -v).collect();
    let mut xp = vec![1.0 - tau; n];
    let b = xt_times(x, &xp);
    let mut s: Vec<f64> = xp.iter().map(|v| 1.0 - v).collect();

    // least-squares start for the dual
    let ones = vec![1.0; n];
    let mut yd = spd_solve(weighted_gram(x, &ones), xt_times(x, &c))?;
    let xy = x_times(x, &yd);
    let mut r: Vec<f64> = c
        .iter()
        .zip(&xy)
        .map(|(ci, v)| {
            let r = ci - v;
            if r == 0.0 {
                0.001
            } else {
                r
            }
        })
        .collect();
    let mut z: Vec<f64> = r.iter().map(|v| v.max(0.0)).collect();
    let mut w: Vec<f64> = z.iter().zip(&r).map(|(zi, ri)| zi - ri).collect();

    let gap_of = |xp: &[f64], yd: &DVector<f64>, w: &[f64]| -> (f64, f64) {
        let cx: f64 = c.iter().zip(xp).map(|(a, b)| a * b).sum();
        let yb: f64 = yd.dot(&b);
        let wu: f64 = w.iter().sum();
        (cx - yb + wu, cx)
    };
    let (mut gap, mut obj) = gap_of(&xp, &yd, &w);

    let mut it = 0;
    let mut q = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    while gap > tol * (1.0 + obj.abs()) && it < max_iter {
        it += 1;

        for i in 0..n {
            q[i] = 1.0 / (z[i] / xp[i] + w[i] / s[i]);
            r[i] = z[i] - w[i];
            rhs[i] = q[i] * r[i];
        }
        let m = weighted_gram(x, &q);

        // affine step
        let mut dy = spd_solve(m.clone(), xt_times(x, &rhs))?;
        let ady = x_times(x, &dy);
        let mut dx: Vec<f64> = (0..n).map(|i| q[i] * (ady[i] - r[i])).collect();
        let mut ds: Vec<f64> = dx.iter().map(|v| -v).collect();
        let mut dz: Vec<f64> = (0..n).map(|i| -z[i] * (dx[i] / xp[i] + 1.0)).collect();
        let mut dw: Vec<f64> = (0..n).map(|i| -w[i] * (ds[i] / s[i] + 1.0)).collect();

        let steps = |dx: &[f64], ds: &[f64], dz: &[f64], dw: &[f64]| -> (f64, f64) {
            let fp = step_length(&xp, dx).min(step_length(&s, ds));
            let fd = step_length(&w, dw).min(step_length(&z, dz));
            ((STEP_DAMPING * fp).min(1.0), (STEP_DAMPING * fd).min(1.0))
        };
        let (mut fp, mut fd) = steps(&dx, &ds, &dz, &dw);

        if fp.min(fd) < 1.0 {
            // centering and corrector
            let mut mu: f64 = (0..n).map(|i| z[i] * xp[i] + w[i] * s[i]).sum();
            let g: f64 = (0..n)
                .map(|i| {
                    (z[i] + fd * dz[i]) * (xp[i] + fp * dx[i])
                        + (w[i] + fd * dw[i]) * (s[i] + fp * ds[i])
                })
                .sum();
            mu = mu * (g / mu).powi(3) / (2.0 * nf);

            let dxdz: Vec<f64> = (0..n).map(|i| dx[i] * dz[i]).collect();
            let dsdw: Vec<f64> = (0..n).map(|i| ds[i] * dw[i]).collect();
            let xi: Vec<f64> = (0..n).map(|i| mu * (1.0 / xp[i] - 1.0 / s[i])).collect();
            for i in 0..n {
                rhs[i] = q[i] * (r[i] + dxdz[i] - dsdw[i] - xi[i]);
            }
            dy = spd_solve(m, xt_times(x, &rhs))?;
            let ady = x_times(x, &dy);
            for i in 0..n {
                dx[i] = q[i] * (ady[i] + xi[i] - r[i] - dxdz[i] + dsdw[i]);
                ds[i] = -dx[i];
                dz[i] = mu / xp[i] - z[i] - z[i] * dx[i] / xp[i] - dxdz[i];
                dw[i] = mu / s[i] - w[i] - w[i] * ds[i] / s[i] - dsdw[i];
            }
            (fp, fd) = steps(&dx, &ds, &dz, &dw);
        }

        for i in 0..n {
            xp[i] += fp * dx[i];
            s[i] += fp * ds[i];
            w[i] += fd * dw[i];
            z[i] += fd * dz[i];
        }
        yd += fd * dy;
        (gap, obj) = gap_of(&xp, &yd, &w);
        if !gap.is_finite() {
            return None;
        }
    }

    Some(IpmOutcome {
        beta: yd.iter().map(|v| -v).collect(),
        iterations: it,
        converged: gap <= tol * (1.0 + obj.abs()),
    })
}
