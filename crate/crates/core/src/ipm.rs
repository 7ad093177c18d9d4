//! Primal-dual interior point method for smooth nonlinear programs
//!
//! ```text
//! min f(x)  s.t.  g(x) = 0,  h(x) <= 0,  lb <= x <= ub
//! ```
//!
//! Inequalities carry slacks `z > 0` and the Newton step is taken on the
//! perturbed KKT conditions with a centering parameter, followed by a
//! fraction-to-boundary step. Variable bounds are folded in as single-entry
//! rows; fixed variables become equality rows.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

/// Sparse gradient of one constraint row: `(column, value)` pairs.
pub type SparseRow = Vec<(usize, f64)>;

#[derive(Debug, Clone, Default)]
pub struct Evaluation {
    pub f: f64,
    pub df: Vec<f64>,
    pub g: Vec<f64>,
    pub jg: Vec<SparseRow>,
    pub h: Vec<f64>,
    pub jh: Vec<SparseRow>,
}

pub trait Nlp {
    fn dim(&self) -> usize;
    fn bounds(&self) -> (Vec<f64>, Vec<f64>);
    fn evaluate(&self, x: &[f64]) -> Evaluation;
    /// Hessian of `sigma f + lam' g + mu' h` over the problem's own rows.
    fn hessian(&self, x: &[f64], sigma: f64, lam: &[f64], mu: &[f64]) -> DMatrix<f64>;
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct IpmOptions {
    pub feastol: f64,
    pub gradtol: f64,
    pub comptol: f64,
    pub costtol: f64,
    pub max_iter: usize,
    /// Fraction-to-boundary factor.
    pub xi: f64,
    /// Centering parameter.
    pub sigma: f64,
    pub z0: f64,
}

impl Default for IpmOptions {
    fn default() -> Self {
        Self::with_tol(1e-6)
    }
}

impl IpmOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            feastol: tol,
            gradtol: tol,
            comptol: tol,
            costtol: tol,
            max_iter: 150,
            xi: 0.99995,
            sigma: 0.1,
            z0: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IpmResult {
    pub x: Vec<f64>,
    pub f: f64,
    /// Multipliers of the problem's equality rows.
    pub lambda: Vec<f64>,
    /// Multipliers of the problem's inequality rows.
    pub mu: Vec<f64>,
    /// Bound multipliers per variable (lower, upper); a fixed variable
    /// reports its equality multiplier in `mu_upper` with sign.
    pub mu_lower: Vec<f64>,
    pub mu_upper: Vec<f64>,
    pub iterations: usize,
    /// False when the iteration limit was reached; `x` is then the last iterate.
    pub converged: bool,
    pub feascond: f64,
    pub gradcond: f64,
    pub compcond: f64,
    pub costcond: f64,
}

enum BoundRow {
    Fixed(usize, f64),
    Lower(usize, f64),
    Upper(usize, f64),
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

struct Augmented {
    f: f64,
    df: Vec<f64>,
    g: Vec<f64>,
    jg: Vec<SparseRow>,
    h: Vec<f64>,
    jh: Vec<SparseRow>,
}

fn augment(nlp: &dyn Nlp, x: &[f64], rows: &[BoundRow]) -> Augmented {
    let e = nlp.evaluate(x);
    let (mut g, mut jg, mut h, mut jh) = (e.g, e.jg, e.h, e.jh);
    for r in rows {
        match *r {
            BoundRow::Fixed(i, v) => {
                g.push(x[i] - v);
                jg.push(vec![(i, 1.0)]);
            }
            BoundRow::Lower(i, v) => {
                h.push(v - x[i]);
                jh.push(vec![(i, -1.0)]);
            }
            BoundRow::Upper(i, v) => {
                h.push(x[i] - v);
                jh.push(vec![(i, 1.0)]);
            }
        }
    }
    Augmented {
        f: e.f,
        df: e.df,
        g,
        jg,
        h,
        jh,
    }
}

fn lagrangian_gradient(a: &Augmented, lam: &[f64], mu: &[f64]) -> Vec<f64> {
    let mut lx = a.df.clone();
    for (row, l) in a.jg.iter().zip(lam) {
        for &(c, v) in row {
            lx[c] += v * l;
        }
    }
    for (row, m) in a.jh.iter().zip(mu) {
        for &(c, v) in row {
            lx[c] += v * m;
        }
    }
    lx
}

pub fn solve(nlp: &dyn Nlp, x0: &[f64], opts: &IpmOptions) -> Result<IpmResult> {
    let n = nlp.dim();
    if x0.len() != n {
        return Err(Error::Degenerate(format!(
            "start point has {} entries, problem has {n}",
            x0.len()
        )));
    }
    let (lb, ub) = nlp.bounds();
    let mut rows = Vec::new();
    for i in 0..n {
        if lb[i] > ub[i] {
            return Err(Error::Infeasible(format!(
                "variable {i}: lower bound {} above upper bound {}",
                lb[i], ub[i]
            )));
        }
        if lb[i].is_finite() && (ub[i] - lb[i]).abs() <= 1e-12 * (1.0 + lb[i].abs()) {
            rows.push(BoundRow::Fixed(i, lb[i]));
            continue;
        }
        if lb[i].is_finite() {
            rows.push(BoundRow::Lower(i, lb[i]));
        }
        if ub[i].is_finite() {
            rows.push(BoundRow::Upper(i, ub[i]));
        }
    }

    let mut x = x0.to_vec();
    let mut a = augment(nlp, &x, &rows);
    let n_eq_prob = nlp.evaluate(&x).g.len();
    let neq = a.g.len();
    let niq = a.h.len();
    let n_iq_prob = niq - rows.iter().filter(|r| !matches!(r, BoundRow::Fixed(..))).count();

    let mut z: Vec<f64> = a.h.iter().map(|&h| if h < -opts.z0 { -h } else { opts.z0 }).collect();
    let mut gamma = 1.0;
    let mut mu: Vec<f64> = z.iter().map(|z| gamma / z).collect();
    let mut lam = vec![0.0; neq];
    let mut f0 = a.f;

    let conds = |a: &Augmented, x: &[f64], z: &[f64], lam: &[f64], mu: &[f64], f_prev: f64| {
        let lx = lagrangian_gradient(a, lam, mu);
        let maxh = a.h.iter().fold(0.0f64, |m, &h| m.max(h));
        let feas = inf_norm(&a.g).max(maxh) / (1.0 + inf_norm(x).max(inf_norm(z)));
        let grad = inf_norm(&lx) / (1.0 + inf_norm(lam).max(inf_norm(mu)));
        let zmu: f64 = z.iter().zip(mu).map(|(z, m)| z * m).sum();
        let comp = zmu / (1.0 + inf_norm(x));
        let cost = (a.f - f_prev).abs() / (1.0 + f_prev.abs());
        (feas, grad, comp, cost, lx)
    };

    let (mut feas, mut grad, mut comp, mut cost, mut lx) = conds(&a, &x, &z, &lam, &mu, f0);
    cost = cost.max(1.0);
    let mut it = 0;
    let mut converged = false;
    let dim = n + neq;
    loop {
        if feas < opts.feastol && grad < opts.gradtol && comp < opts.comptol && cost < opts.costtol
        {
            converged = true;
            break;
        }
        if it >= opts.max_iter {
            break;
        }
        it += 1;

        // Hessian of the Lagrangian; bound rows are linear.
        let mut kkt = DMatrix::<f64>::zeros(dim, dim);
        let hess = nlp.hessian(&x, 1.0, &lam[..n_eq_prob], &mu[..n_iq_prob]);
        kkt.view_mut((0, 0), (n, n)).copy_from(&hess);
        let mut rhs = DVector::<f64>::zeros(dim);
        for i in 0..n {
            rhs[i] = -lx[i];
        }
        for (r, row) in a.jh.iter().enumerate() {
            let w = mu[r] / z[r];
            let s = (mu[r] * a.h[r] + gamma) / z[r];
            for &(c1, v1) in row {
                rhs[c1] -= v1 * s;
                for &(c2, v2) in row {
                    kkt[(c1, c2)] += w * v1 * v2;
                }
            }
        }
        for (r, row) in a.jg.iter().enumerate() {
            for &(c, v) in row {
                kkt[(n + r, c)] += v;
                kkt[(c, n + r)] += v;
            }
            rhs[n + r] = -a.g[r];
        }
        let step = match kkt.clone().lu().solve(&rhs) {
            Some(s) if s.iter().all(|v| v.is_finite()) => s,
            _ => {
                // Rank-deficient equality rows: regularize the dual block.
                for r in 0..neq {
                    kkt[(n + r, n + r)] -= 1e-10;
                }
                match kkt.lu().solve(&rhs) {
                    Some(s) if s.iter().all(|v| v.is_finite()) => s,
                    _ => return Err(Error::SingularJacobian { iteration: it }),
                }
            }
        };
        let dx = &step.as_slice()[..n];
        let dlam = &step.as_slice()[n..];

        let mut dz = vec![0.0; niq];
        let mut dmu = vec![0.0; niq];
        for (r, row) in a.jh.iter().enumerate() {
            let jdx: f64 = row.iter().map(|&(c, v)| v * dx[c]).sum();
            dz[r] = -a.h[r] - z[r] - jdx;
            dmu[r] = -mu[r] + (gamma - mu[r] * dz[r]) / z[r];
        }

        let mut alpha_p = 1.0f64;
        let mut alpha_d = 1.0f64;
        for r in 0..niq {
            if dz[r] < 0.0 {
                alpha_p = alpha_p.min(opts.xi * -z[r] / dz[r]);
            }
            if dmu[r] < 0.0 {
                alpha_d = alpha_d.min(opts.xi * -mu[r] / dmu[r]);
            }
        }
        for i in 0..n {
            x[i] += alpha_p * dx[i];
        }
        for r in 0..niq {
            z[r] += alpha_p * dz[r];
            mu[r] += alpha_d * dmu[r];
        }
        for r in 0..neq {
            lam[r] += alpha_d * dlam[r];
        }
        if niq > 0 {
            let zmu: f64 = z.iter().zip(&mu).map(|(z, m)| z * m).sum();
            gamma = opts.sigma * zmu / niq as f64;
        }

        a = augment(nlp, &x, &rows);
        if !a.f.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonConvergence {
                iterations: it,
                mismatch: f64::NAN,
            });
        }
        (feas, grad, comp, cost, lx) = conds(&a, &x, &z, &lam, &mu, f0);
        f0 = a.f;
    }

    let mut mu_lower = vec![0.0; n];
    let mut mu_upper = vec![0.0; n];
    let mut iq = n_iq_prob;
    let mut eq = n_eq_prob;
    for r in &rows {
        match *r {
            BoundRow::Fixed(i, _) => {
                mu_upper[i] = lam[eq];
                eq += 1;
            }
            BoundRow::Lower(i, _) => {
                mu_lower[i] = mu[iq];
                iq += 1;
            }
            BoundRow::Upper(i, _) => {
                mu_upper[i] = mu[iq];
                iq += 1;
            }
        }
    }
    Ok(IpmResult {
        f: a.f,
        lambda: lam[..n_eq_prob].to_vec(),
        mu: mu[..n_iq_prob].to_vec(),
        mu_lower,
        mu_upper,
        x,
        iterations: it,
        converged,
        feascond: feas,
        gradcond: grad,
        compcond: comp,
        costcond: cost,
    })
}
