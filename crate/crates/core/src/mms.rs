//! Manufactured-solution convergence tables.
//!
//! The exact solution `u*(x) = A·log(1 − 2ρ cos 2πx₁ + ρ²)` is smooth but not
//! band-limited: its cosine coefficients are `−2Aρ^k/k`, so aliasing errors
//! decay geometrically in `N` and each doubling should gain far more than a
//! factor of ten. `g` comes from the closed-form derivatives of `u*`, so the
//! only discretization error is the solver's.

use std::f64::consts::PI;
use std::path::Path;

use serde::Serialize;

use crate::cli::Regime;
use crate::config::Config;
use crate::error::{Error, Result};
use crate::grid::{OneFormField, ScalarField, TorusGrid};
use crate::hermitian::HermitianBackground;
use crate::solve_negative::{continuity_solve, yamabe_normalize, SolveOptions};
use crate::solve_positive::local_solve;
use crate::solve_zero::solve_balanced;

pub const MMS_SIZES: [usize; 3] = [16, 32, 64];
pub const DEFAULT_AMPLITUDE: f64 = 0.1;
pub const DEFAULT_RHO: f64 = 0.5;
/// Error reduction demanded per doubling of `N`.
pub const MIN_RATIO: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Manufactured {
    pub amplitude: f64,
    pub rho: f64,
}

impl Default for Manufactured {
    fn default() -> Self {
        Self {
            amplitude: DEFAULT_AMPLITUDE,
            rho: DEFAULT_RHO,
        }
    }
}

impl Manufactured {
    fn denom(&self, th: f64) -> f64 {
        1.0 - 2.0 * self.rho * th.cos() + self.rho * self.rho
    }

    pub fn value(&self, grid: TorusGrid) -> ScalarField {
        ScalarField::from_fn(grid, |x| self.amplitude * self.denom(2.0 * PI * x[0]).ln())
    }

    pub fn gradient(&self, grid: TorusGrid) -> OneFormField {
        let d1 = ScalarField::from_fn(grid, |x| {
            let th = 2.0 * PI * x[0];
            self.amplitude * 2.0 * PI * 2.0 * self.rho * th.sin() / self.denom(th)
        });
        let mut comps = vec![ScalarField::zeros(grid); grid.dim()];
        comps[0] = d1;
        OneFormField::new(grid, comps).expect("components share the grid")
    }

    /// Geometer's Laplacian `−∂₁²u*`.
    pub fn laplacian(&self, grid: TorusGrid) -> ScalarField {
        let r = self.rho;
        ScalarField::from_fn(grid, |x| {
            let th = 2.0 * PI * x[0];
            let d = self.denom(th);
            let second = (2.0 * r * th.cos() * d - 4.0 * r * r * th.sin().powi(2)) / (d * d);
            -self.amplitude * 4.0 * PI * PI * second
        })
    }

    /// Curvature of `exp(2u*/n)·ω` from closed-form derivatives.
    pub fn curvature(&self, bg: &HermitianBackground) -> ScalarField {
        let grid = *bg.grid();
        let n = grid.n_f64();
        let u = self.value(grid);
        let du = self.gradient(grid);
        // Δ^Ch u* = exp(−2p/n)(Δu* + ⟨du*, θ₀⟩) for background potential p.
        let chern = bg
            .potential()
            .exp_scaled(-2.0 / n)
            .mul(&self.laplacian(grid).add(&bg.pair(&du, bg.theta0())));
        u.exp_scaled(-2.0 / n)
            .mul(&chern.add(&bg.scalar_curvature()))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MmsRow {
    #[serde(rename = "N")]
    pub n_pts: usize,
    pub max_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MmsTable {
    pub regime: Regime,
    pub rows: Vec<MmsRow>,
    /// `error(N)/error(2N)` for consecutive sizes.
    pub ratios: Vec<f64>,
    pub pass: bool,
}

/// Recovers `u*` on one background with the solver of its regime.
pub fn recover(
    bg: &HermitianBackground,
    mf: &Manufactured,
    opts: &SolveOptions,
) -> Result<(Regime, ScalarField)> {
    let grid = *bg.grid();
    let g = mf.curvature(bg);
    let regime = Regime::classify(bg.gauduchon_degree()?);
    let u = match regime {
        Regime::Negative => {
            let (bc, to_c) = yamabe_normalize(bg, opts)?;
            to_c.add(&continuity_solve(&bc, &g, opts)?.u)
        }
        Regime::Zero => solve_balanced(bg, &g, opts)?.0,
        Regime::Positive => {
            let (eta, to_eta) = bg.gauduchon_normalize()?;
            to_eta.add(&local_solve(&eta, &g, None, opts)?.u)
        }
    };
    debug_assert_eq!(u.grid(), &grid);
    Ok((regime, u))
}

/// Convergence table over [`MMS_SIZES`] for the background described by
/// `config`, whose fields must not come from files.
pub fn convergence_table(config: &Config, base: &Path, mf: &Manufactured) -> Result<MmsTable> {
    if config.uses_files() {
        return Err(Error::Config(
            "mms resamples the background on several grids and cannot use file fields".into(),
        ));
    }
    let mut rows = Vec::new();
    let mut regime = None;
    for &n_pts in &MMS_SIZES {
        let grid = TorusGrid::new(config.grid.d, n_pts, config.grid.n)?;
        let (bg, _) = config.build(grid, base)?;
        let (r, u) = recover(&bg, mf, &config.solver)?;
        if regime.is_some_and(|prev| prev != r) {
            return Err(Error::WrongRegime(
                "degree changes sign under refinement".into(),
            ));
        }
        regime = Some(r);
        rows.push(MmsRow {
            n_pts,
            max_error: u.sub(&mf.value(grid)).max_abs(),
        });
    }
    let ratios: Vec<f64> = rows
        .windows(2)
        .map(|w| w[0].max_error / w[1].max_error)
        .collect();
    let pass = ratios.iter().all(|r| *r >= MIN_RATIO);
    Ok(MmsTable {
        regime: regime.expect("at least one size"),
        rows,
        ratios,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::laplacian_flat;

    #[test]
    fn closed_forms_match_spectral_derivatives() {
        // At N = 128 the truncation error ρ^64 is far below rounding.
        let grid = TorusGrid::new(2, 128, 2).unwrap();
        let mf = Manufactured::default();
        let u = mf.value(grid);
        assert!(laplacian_flat(&u).sub(&mf.laplacian(grid)).max_abs() < 1e-10);
        let du = crate::grid::gradient(&u);
        let err = du.add(&mf.gradient(grid).scale(-1.0)).max_abs();
        assert!(err < 1e-11, "{err}");
        assert!(u.mean().abs() < 1e-14);
    }

    #[test]
    fn curvature_matches_conformal_change() {
        let grid = TorusGrid::new(2, 128, 3).unwrap();
        let mf = Manufactured::default();
        let bg = HermitianBackground::flat(grid, -1.0);
        let direct = bg
            .conformal_change(&mf.value(grid))
            .unwrap()
            .scalar_curvature();
        assert!(direct.sub(&mf.curvature(&bg)).max_abs() < 1e-10);
    }
}
