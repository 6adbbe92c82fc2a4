//! Restarted GMRES with right preconditioning, plus a dense LU fallback.
//!
//! Operators are plain closures on flat vectors so the same machinery serves
//! field equations and bordered systems with extra scalar unknowns.

use nalgebra::{DMatrix, DVector};

pub(crate) type VecOp<'a> = dyn Fn(&[f64]) -> Vec<f64> + 'a;

#[derive(Debug, Clone, Copy)]
pub(crate) struct GmresSettings {
    pub tol: f64,
    pub restart: usize,
    pub max_iters: usize,
}

impl Default for GmresSettings {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            restart: 80,
            max_iters: 800,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct GmresOutcome {
    pub x: Vec<f64>,
    /// True relative residual `‖b − Ax‖ / ‖b‖`.
    pub rel_residual: f64,
    pub converged: bool,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn residual(apply: &VecOp, b: &[f64], x: &[f64]) -> Vec<f64> {
    let ax = apply(x);
    b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect()
}

pub(crate) fn gmres(
    apply: &VecOp,
    precond: &VecOp,
    b: &[f64],
    settings: GmresSettings,
) -> GmresOutcome {
    let n = b.len();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return GmresOutcome {
            x,
            rel_residual: 0.0,
            converged: true,
        };
    }
    let m = settings.restart.max(1);
    let mut total = 0;
    let mut r = b.to_vec();
    let mut rel = 1.0;

    while total < settings.max_iters {
        let beta = norm(&r);
        rel = beta / bnorm;
        if rel <= settings.tol {
            break;
        }
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|v| v / beta).collect());
        let mut zs: Vec<Vec<f64>> = Vec::with_capacity(m);
        // Hessenberg columns, Givens rotations, rotated rhs.
        let mut h: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut cs: Vec<f64> = Vec::with_capacity(m);
        let mut sn: Vec<f64> = Vec::with_capacity(m);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;

        for j in 0..m {
            let z = precond(&basis[j]);
            let mut w = apply(&z);
            zs.push(z);
            let mut col = vec![0.0; j + 2];
            // Modified Gram-Schmidt, twice for stability.
            for _ in 0..2 {
                for (i, vi) in basis.iter().enumerate() {
                    let hij = dot(&w, vi);
                    col[i] += hij;
                    for (wk, vk) in w.iter_mut().zip(vi) {
                        *wk -= hij * vk;
                    }
                }
            }
            let hnext = norm(&w);
            col[j + 1] = hnext;
            for i in 0..j {
                let t = cs[i] * col[i] + sn[i] * col[i + 1];
                col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
                col[i] = t;
            }
            let denom = col[j].hypot(col[j + 1]);
            let (c, s) = if denom == 0.0 {
                (1.0, 0.0)
            } else {
                (col[j] / denom, col[j + 1] / denom)
            };
            cs.push(c);
            sn.push(s);
            col[j] = denom;
            col[j + 1] = 0.0;
            g[j + 1] = -s * g[j];
            g[j] *= c;
            h.push(col);
            k_used = j + 1;
            total += 1;
            let est = g[j + 1].abs() / bnorm;
            if est <= settings.tol * 0.5 || hnext <= 1e-300 || total >= settings.max_iters {
                break;
            }
            basis.push(w.iter().map(|v| v / hnext).collect());
        }

        // Back substitution on the triangular system.
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for k in i + 1..k_used {
                s -= h[k][i] * y[k];
            }
            y[i] = if h[i][i] != 0.0 { s / h[i][i] } else { 0.0 };
        }
        for (yi, zi) in y.iter().zip(&zs) {
            for (xk, zk) in x.iter_mut().zip(zi) {
                *xk += yi * zk;
            }
        }
        r = residual(apply, b, &x);
        let new_rel = norm(&r) / bnorm;
        if new_rel >= rel * 0.999 && new_rel > settings.tol {
            // Stagnated across a full restart cycle.
            rel = new_rel;
            break;
        }
        rel = new_rel;
    }

    GmresOutcome {
        converged: rel <= settings.tol,
        x,
        rel_residual: rel,
    }
}

/// Builds the dense matrix of a linear operator column by column.
pub(crate) fn assemble(apply: &VecOp, n: usize) -> DMatrix<f64> {
    let mut mat = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = apply(&e);
        for (i, v) in col.into_iter().enumerate() {
            mat[(i, j)] = v;
        }
        e[j] = 0.0;
    }
    mat
}

/// Dense LU solve. Returns `None` when the matrix is numerically singular.
pub(crate) fn dense_solve(apply: &VecOp, b: &[f64]) -> Option<Vec<f64>> {
    let mat = assemble(apply, b.len());
    let lu = mat.lu();
    let x = lu.solve(&DVector::from_column_slice(b))?;
    if x.iter().all(|v| v.is_finite()) {
        Some(x.iter().copied().collect())
    } else {
        None
    }
}
