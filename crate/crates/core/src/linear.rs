//! Linear elliptic solves `Δu + ⟨du, θ⟩ + c·u = f` on the torus.
//!
//! The drift term makes the operator non-self-adjoint, so the workhorse is
//! GMRES right-preconditioned by the spectral inverse of `Δ + σ`. Systems with
//! a kernel (c ≡ 0) are bordered with extra scalar unknowns and constraint
//! rows instead of being solved in a quotient space. Grids with at most 4096
//! points fall back to a dense LU factorization if GMRES stalls.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{laplacian_symbol, pairing, OneFormField, ScalarField, Spectrum, TorusGrid};
use crate::krylov::{dense_solve, gmres, GmresSettings};

pub const DEFAULT_LINEAR_TOL: f64 = 1e-10;
const DENSE_FALLBACK_MAX: usize = 4096;

/// `L u = Δu + ip(du, θ) + c·u` with flat Δ and flat pairing.
#[derive(Debug, Clone)]
pub struct EllipticOperator {
    theta: OneFormField,
    c: ScalarField,
}

impl EllipticOperator {
    pub fn new(theta: OneFormField, c: ScalarField) -> Result<Self> {
        theta.grid().check_same(c.grid())?;
        Ok(Self { theta, c })
    }

    pub fn grid(&self) -> &TorusGrid {
        self.c.grid()
    }

    pub fn apply(&self, u: &ScalarField) -> ScalarField {
        let spec = Spectrum::of(u);
        let lap = spec.laplacian();
        let drift = pairing(&spec.gradient(), &self.theta, None).expect("same grid");
        let cu = self.c.mul(u);
        lap.add(&drift).add(&cu)
    }
}

/// A field equation with `k` extra scalar unknowns and `k` constraint rows:
///
/// ```text
/// [ op   cols ] [v]   [f]
/// [ rows corner] [s] = [r]
/// ```
///
/// where a row acts on `v` as the flat integral `∫ row·v`.
pub(crate) struct BorderedSystem<'a> {
    pub grid: TorusGrid,
    pub op: &'a dyn Fn(&ScalarField) -> ScalarField,
    pub cols: Vec<ScalarField>,
    pub rows: Vec<ScalarField>,
    pub corner: Vec<Vec<f64>>,
    /// Shift of the spectral preconditioner `(Δ + σ)⁻¹`.
    pub sigma: f64,
}

impl<'a> BorderedSystem<'a> {
    pub fn plain(grid: TorusGrid, op: &'a dyn Fn(&ScalarField) -> ScalarField, sigma: f64) -> Self {
        Self {
            grid,
            op,
            cols: Vec::new(),
            rows: Vec::new(),
            corner: Vec::new(),
            sigma,
        }
    }

    /// Field equation bordered by a single column and row with a zero corner.
    pub fn with_border(
        grid: TorusGrid,
        op: &'a dyn Fn(&ScalarField) -> ScalarField,
        col: ScalarField,
        row: ScalarField,
    ) -> Self {
        Self {
            grid,
            op,
            cols: vec![col],
            rows: vec![row],
            corner: vec![vec![0.0]],
            sigma: 0.0,
        }
    }

    fn extra(&self) -> usize {
        self.cols.len()
    }

    fn apply_flat(&self, x: &[f64]) -> Vec<f64> {
        let m = self.grid.len();
        let v = ScalarField::raw(self.grid, x[..m].to_vec());
        let s = &x[m..];
        let mut out = (self.op)(&v).into_values();
        for (col, sj) in self.cols.iter().zip(s) {
            for (o, cv) in out.iter_mut().zip(col.values()) {
                *o += sj * cv;
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            let mut val = row.dot(&v);
            for (j, sj) in s.iter().enumerate() {
                val += self.corner[i][j] * sj;
            }
            out.push(val);
        }
        out
    }

    fn precondition(&self, x: &[f64]) -> Vec<f64> {
        let m = self.grid.len();
        let g = self.grid;
        let bordered = self.extra() > 0;
        let sigma = self.sigma.abs().max(1e-8);
        let spec = Spectrum::of(&ScalarField::raw(g, x[..m].to_vec()));
        let out = spec.apply(|mi| {
            let lam = laplacian_symbol(&g, mi);
            let inv = if lam == 0.0 {
                if bordered {
                    1.0
                } else {
                    1.0 / sigma
                }
            } else {
                1.0 / (lam + sigma)
            };
            Complex64::new(inv, 0.0)
        });
        let mut out = out.into_values();
        out.extend_from_slice(&x[m..]);
        out
    }

    /// Solves the system; returns the field part, scalar part and the true
    /// relative residual.
    pub fn solve(
        &self,
        rhs: &ScalarField,
        rhs_scalars: &[f64],
        tol: f64,
    ) -> Result<(ScalarField, Vec<f64>, f64)> {
        let m = self.grid.len();
        let mut b = rhs.values().to_vec();
        b.extend_from_slice(rhs_scalars);
        let apply = |x: &[f64]| self.apply_flat(x);
        let prec = |x: &[f64]| self.precondition(x);
        let settings = GmresSettings {
            tol: (tol * 0.1).max(1e-15),
            ..GmresSettings::default()
        };
        let out = gmres(&apply, &prec, &b, settings);
        // GMRES aims a decade below `tol`; near the rounding floor it may stall
        // short of that while still meeting `tol`, which is good enough.
        let (x, rel) = if out.converged || out.rel_residual <= tol {
            (out.x, out.rel_residual)
        } else if b.len() <= DENSE_FALLBACK_MAX + self.extra() {
            match dense_solve(&apply, &b) {
                Some(x) => {
                    let r = apply(&x);
                    let bn = b.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let rn = r
                        .iter()
                        .zip(&b)
                        .map(|(a, c)| (a - c) * (a - c))
                        .sum::<f64>()
                        .sqrt();
                    (x, if bn > 0.0 { rn / bn } else { rn })
                }
                None => {
                    return Err(Error::NoConvergence {
                        residual: out.rel_residual,
                    })
                }
            }
        } else {
            return Err(Error::NoConvergence {
                residual: out.rel_residual,
            });
        };
        let field = ScalarField::raw(self.grid, x[..m].to_vec());
        Ok((field, x[m..].to_vec(), rel))
    }
}

/// Solves `Δu + ip(du, θ) + c·u = rhs`.
///
/// With `min c > 0` the operator is invertible. With `c ≡ 0` the mean-zero
/// solution is returned, provided `rhs` pairs to zero with the kernel of the
/// adjoint; the normalized value of that pairing is reported in
/// [`Error::SingularOperator`] otherwise. Any other `c` is attempted as is and
/// invertibility is then the caller's concern.
pub fn solve_linear(
    theta: &OneFormField,
    c: &ScalarField,
    rhs: &ScalarField,
    tol: f64,
) -> Result<ScalarField> {
    theta.grid().check_same(c.grid())?;
    theta.grid().check_same(rhs.grid())?;
    let op = EllipticOperator::new(theta.clone(), c.clone())?;
    let grid = *rhs.grid();
    let apply = |u: &ScalarField| op.apply(u);
    let rhs_rms = rhs.l2();

    if c.max_abs() <= 1e-14 {
        let one = ScalarField::constant(grid, 1.0);
        let sys = BorderedSystem::with_border(grid, &apply, one.clone(), one);
        let (u, s, _) = sys.solve(rhs, &[0.0], tol)?;
        // `s` is the component of rhs outside the range of L.
        if rhs_rms > 0.0 && s[0].abs() / rhs_rms > tol {
            return Err(Error::SingularOperator { functional: s[0] });
        }
        check_residual(&op, &u, rhs, tol)?;
        return Ok(u);
    }

    let sys = BorderedSystem::plain(grid, &apply, c.mean());
    let (u, _, _) = sys.solve(rhs, &[], tol)?;
    check_residual(&op, &u, rhs, tol)?;
    Ok(u)
}

fn check_residual(
    op: &EllipticOperator,
    u: &ScalarField,
    rhs: &ScalarField,
    tol: f64,
) -> Result<()> {
    let r = op.apply(u).sub(rhs).l2();
    let scale = rhs.l2();
    let rel = if scale > 0.0 { r / scale } else { r };
    if rel < tol || (scale == 0.0 && r < tol) {
        Ok(())
    } else {
        Err(Error::NoConvergence { residual: rel })
    }
}

/// Mean-zero solution of `L u = rhs` for a singular `L` whose range misses
/// only constants-like directions, discarding any incompatible component.
pub(crate) fn solve_projected(
    grid: TorusGrid,
    op: &dyn Fn(&ScalarField) -> ScalarField,
    rhs: &ScalarField,
    tol: f64,
) -> Result<ScalarField> {
    let one = ScalarField::constant(grid, 1.0);
    let sys = BorderedSystem::with_border(grid, op, one.clone(), one);
    let (u, _, rel) = sys.solve(rhs, &[0.0], tol)?;
    if rel > tol.max(1e-8) {
        return Err(Error::NoConvergence { residual: rel });
    }
    Ok(u)
}
