//! Positive degree: small-data solutions near `(u, g, S) = (0, 0, 0)`.
//!
//! On the volume-one Gauduchon representative `η` the adjoint Chern Laplacian
//! kills constants, so `F(u) = Δ^Ch u + S − g·exp(2u/n) = 0` splits into its
//! mean-zero part and the scalar identity `∫ (S − g·exp(2u/n)) dV = 0`. Writing
//! `u = w + c` with `w` mean-zero, Newton is run on the bordered system
//!
//! ```text
//! J δw + (J 1) δc + σ       = −F
//! ∫ δw                      = 0
//! ∫ J(δw + δc) dV           = −∫ F dV
//! ```
//!
//! with `J = Δ^Ch − (2/n)·g·exp(2u/n)`. The slack `σ` vanishes at every step.

use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::hermitian::HermitianBackground;
use crate::linear::{BorderedSystem, DEFAULT_LINEAR_TOL};
use crate::solve_negative::SolveOptions;

#[derive(Debug, Clone)]
pub struct LocalOutcome {
    pub u: ScalarField,
    pub newton_iterations: usize,
    pub residual: f64,
}

fn require_gauduchon(bg: &HermitianBackground) -> Result<()> {
    if !bg.is_gauduchon(1e-8) || (bg.volume() - 1.0).abs() > 1e-10 {
        return Err(Error::WrongRegime(
            "background must be the volume-one Gauduchon representative".into(),
        ));
    }
    Ok(())
}

/// Solves `Δ^Ch u + S − g·exp(2u/n) = 0` near zero. `s` defaults to the
/// curvature of `bg`. Newton iterates leaving the ball of radius
/// `opts.local_radius` count as divergence.
pub fn local_solve(
    bg: &HermitianBackground,
    g: &ScalarField,
    s: Option<&ScalarField>,
    opts: &SolveOptions,
) -> Result<LocalOutcome> {
    opts.validate()?;
    require_gauduchon(bg)?;
    let gamma = bg.integrate(&bg.scalar_curvature());
    if !(gamma > 0.0) {
        return Err(Error::WrongRegime(format!(
            "degree {gamma} is not positive"
        )));
    }
    let s = s.cloned().unwrap_or_else(|| bg.scalar_curvature());
    let base_point = g.max_abs() == 0.0 && s.max_abs() == 0.0;
    if g.max() <= 0.0 && !base_point {
        return Err(Error::WrongRegime("g must be positive somewhere".into()));
    }
    let grid = *g.grid();
    let n = grid.n_f64();
    let dens = bg.volume_density();
    let one = ScalarField::constant(grid, 1.0);
    let diverged = Error::NewtonDiverged { t: 1.0 };

    let mut u = ScalarField::zeros(grid);
    for it in 0..=opts.newton_max {
        let big_g = g.mul(&u.exp_scaled(2.0 / n));
        let f = bg.chern_laplacian(&u).add(&s).sub(&big_g);
        let norm = f.max_abs();
        if !norm.is_finite() {
            return Err(diverged);
        }
        if norm < opts.newton_tol {
            // Curvature of exp(2u/n)·η computed with the supplied S.
            let residual = u
                .exp_scaled(-2.0 / n)
                .mul(&bg.chern_laplacian(&u).add(&s))
                .sub(g)
                .max_abs();
            return Ok(LocalOutcome {
                u,
                newton_iterations: it,
                residual,
            });
        }
        if it == opts.newton_max {
            break;
        }
        let coupling = big_g.scale(2.0 / n);
        let op = |d: &ScalarField| bg.chern_laplacian(d).sub(&coupling.mul(d));
        let col_c = coupling.scale(-1.0);
        let row_w = coupling.mul(&dens).scale(-1.0);
        let corner_c = bg.integrate(&col_c);
        let sys = BorderedSystem {
            grid,
            op: &op,
            cols: vec![col_c, one.clone()],
            rows: vec![one.clone(), row_w],
            corner: vec![vec![0.0, 0.0], vec![corner_c, 0.0]],
            sigma: 0.0,
        };
        let (dw, ds, _) = sys
            .solve(
                &f.scale(-1.0),
                &[0.0, -bg.integrate(&f)],
                DEFAULT_LINEAR_TOL,
            )
            .map_err(|_| Error::JacobianSingular { t: 1.0 })?;
        u = u.add(&dw.shift(ds[0]));
        if !(u.max_abs() <= opts.local_radius) {
            return Err(diverged);
        }
    }
    Err(diverged)
}

/// Largest `ε = 2^{−j}`, `j = −4, …, 30`, for which [`local_solve`] converges on
/// `(ε·g_dir, ε·s_dir)`; zero if none does. `ε` is measured in units of the
/// given directions, so halving both directions doubles the answer.
pub fn neighborhood_probe(
    bg: &HermitianBackground,
    g_dir: &ScalarField,
    s_dir: &ScalarField,
    opts: &SolveOptions,
) -> Result<f64> {
    if g_dir.max() <= 0.0 {
        return Err(Error::WrongRegime(
            "g direction must be positive somewhere".into(),
        ));
    }
    require_gauduchon(bg)?;
    for j in -4..=30 {
        let eps = 2f64.powi(-j);
        let g = g_dir.scale(eps);
        let s = s_dir.scale(eps);
        if local_solve(bg, &g, Some(&s), opts).is_ok() {
            return Ok(eps);
        }
    }
    Ok(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TorusGrid;
    use crate::linear::solve_projected;
    use std::f64::consts::PI;

    fn grid() -> TorusGrid {
        TorusGrid::new(2, 32, 2).unwrap()
    }

    fn standard(g: TorusGrid) -> (ScalarField, ScalarField) {
        (
            ScalarField::from_fn(g, |x| 0.5 * (1.0 + (2.0 * PI * x[0]).cos())),
            ScalarField::constant(g, 0.5),
        )
    }

    #[test]
    fn base_point_is_fixed() {
        let g = grid();
        let bg = HermitianBackground::flat(g, 0.1);
        let zero = ScalarField::zeros(g);
        let out = local_solve(&bg, &zero, Some(&zero), &SolveOptions::default()).unwrap();
        assert_eq!(out.u.max_abs(), 0.0);
    }

    #[test]
    fn mean_zero_block_is_invertible() {
        // At u = 0, g = 0 the field block is the Laplacian on mean-zero fields.
        let g = grid();
        let bg = HermitianBackground::flat(g, 0.1);
        let rhs = ScalarField::from_fn(g, |x| (2.0 * PI * x[1]).sin());
        let op = |f: &ScalarField| bg.chern_laplacian(f);
        let w = solve_projected(g, &op, &rhs, 1e-12).unwrap();
        assert!(bg.chern_laplacian(&w).sub(&rhs).max_abs() < 1e-10);
    }

    #[test]
    fn manufactured_small_data() {
        let g = grid();
        let bg = HermitianBackground::flat(g, 0.5);
        let eps = 0.05;
        let ustar = ScalarField::from_fn(g, |x| {
            eps * (2.0 * PI * x[0]).cos() * (2.0 * PI * x[1]).sin()
        });
        let s = ScalarField::constant(g, eps);
        let target = bg
            .chern_laplacian(&ustar)
            .add(&s)
            .mul(&ustar.exp_scaled(-1.0));
        assert!(target.max() > 0.0);
        let out = local_solve(&bg, &target, Some(&s), &SolveOptions::default()).unwrap();
        assert!(out.u.sub(&ustar).max_abs() < 1e-7);
        assert!(out.residual < 1e-9);
    }

    #[test]
    fn large_data_diverges_gracefully() {
        let g = grid();
        let bg = HermitianBackground::flat(g, 0.5);
        let big = ScalarField::from_fn(g, |x| 10.0 * (1.0 + (2.0 * PI * x[0]).cos()));
        let err = local_solve(&bg, &big, None, &SolveOptions::default());
        assert!(matches!(err, Err(Error::NewtonDiverged { .. })), "{err:?}");
    }

    #[test]
    fn probe_and_preconditions() {
        let g = grid();
        let bg = HermitianBackground::flat(g, 0.5);
        let (gd, sd) = standard(g);
        // A tight ball keeps the answer inside the sweep range.
        let opts = SolveOptions {
            local_radius: 0.05,
            ..SolveOptions::default()
        };
        let eps = neighborhood_probe(&bg, &gd, &sd, &opts).unwrap();
        assert!(eps > 0.0 && eps < 16.0);
        let half = neighborhood_probe(&bg, &gd.scale(0.5), &sd.scale(0.5), &opts).unwrap();
        assert_eq!(half, 2.0 * eps);
        assert!(matches!(
            neighborhood_probe(&bg, &gd.scale(-1.0), &sd, &SolveOptions::default()),
            Err(Error::WrongRegime(_))
        ));
    }
}
