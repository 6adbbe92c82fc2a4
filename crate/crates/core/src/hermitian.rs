//! Synthetic Hermitian backgrounds and their conformal calculus.
//!
//! A background is a base structure on the flat torus, given by a torsion
//! one-form `θ₀` and a reference Chern scalar curvature `S⁰`, together with an
//! accumulated conformal potential `u`. The current metric is
//! `exp(2u/n)·ω_base`. With `κ = 2(n−1)/n`:
//!
//! * torsion: `θ = θ₀ + κ·du`
//! * volume density: `exp(2u)`
//! * one-form pairing weight: `exp(−2u/n)`
//! * Chern Laplacian: `Δ^Ch f = exp(−2u/n)·(Δ_u f + ⟨df, θ⟩)`, where
//!   `Δ_u = Δ − κ⟨du, d·⟩` is the Hodge Laplacian of the conformal metric in
//!   flat coordinates. The drift in `Δ_u` cancels the `κ·du` part of `θ`, so
//!   `Δ^Ch f = exp(−2u/n)·(Δf + ⟨df, θ₀⟩)` and the operator transforms by the
//!   conformal factor alone.
//!
//! Inner products of functions are taken against the volume density.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::{
    divergence, gradient, laplacian_flat, pairing, OneFormField, ScalarField, Spectrum, TorusGrid,
};
use crate::krylov::assemble;
use crate::linear::{solve_linear, solve_projected, BorderedSystem, DEFAULT_LINEAR_TOL};

const DENSE_NULLSPACE_MAX: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct HermitianBackground {
    grid: TorusGrid,
    theta0: OneFormField,
    s0: ScalarField,
    potential: ScalarField,
}

impl HermitianBackground {
    pub fn new(theta0: OneFormField, s0: ScalarField) -> Result<Self> {
        let grid = *s0.grid();
        grid.check_same(theta0.grid())?;
        Ok(Self {
            grid,
            potential: ScalarField::zeros(grid),
            theta0,
            s0,
        })
    }

    pub fn with_potential(mut self, potential: ScalarField) -> Result<Self> {
        self.grid.check_same(potential.grid())?;
        self.potential = potential;
        Ok(self)
    }

    /// Flat torsion-free background with constant reference curvature.
    pub fn flat(grid: TorusGrid, s0: f64) -> Self {
        Self::new(OneFormField::zeros(grid), ScalarField::constant(grid, s0)).expect("same grid")
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn theta0(&self) -> &OneFormField {
        &self.theta0
    }

    pub fn s0(&self) -> &ScalarField {
        &self.s0
    }

    pub fn potential(&self) -> &ScalarField {
        &self.potential
    }

    fn n(&self) -> f64 {
        self.grid.n_f64()
    }

    /// `2(n−1)/n`, the torsion response to a conformal change.
    pub fn torsion_coupling(&self) -> f64 {
        2.0 * (self.n() - 1.0) / self.n()
    }

    pub fn theta_eff(&self) -> OneFormField {
        self.theta0
            .add(&gradient(&self.potential).scale(self.torsion_coupling()))
    }

    pub fn volume_density(&self) -> ScalarField {
        self.potential.exp_scaled(2.0)
    }

    pub fn pairing_weight(&self) -> ScalarField {
        self.potential.exp_scaled(-2.0 / self.n())
    }

    /// `exp(−2u/n)`, the factor relating the current Chern Laplacian to the base one.
    fn conformal_factor(&self) -> ScalarField {
        self.pairing_weight()
    }

    pub fn volume(&self) -> f64 {
        self.volume_density().mean()
    }

    /// `∫ f dV` for the current metric.
    pub fn integrate(&self, f: &ScalarField) -> f64 {
        f.dot(&self.volume_density())
    }

    /// Metric pairing of one-forms, `exp(−2u/n)·Σ a_k b_k`.
    pub fn pair(&self, a: &OneFormField, b: &OneFormField) -> ScalarField {
        pairing(a, b, Some(&self.pairing_weight())).expect("same grid")
    }

    /// Base operator `Δf + ⟨df, θ₀⟩` in flat coordinates.
    pub(crate) fn base_operator(&self, f: &ScalarField) -> ScalarField {
        let spec = Spectrum::of(f);
        spec.laplacian()
            .add(&pairing(&spec.gradient(), &self.theta0, None).expect("same grid"))
    }

    /// Flat transpose of the base operator, `Δh − div(h θ₀)`.
    fn base_adjoint(&self, h: &ScalarField) -> ScalarField {
        laplacian_flat(h).sub(&divergence(&self.theta0.weighted(h)))
    }

    pub fn chern_laplacian(&self, f: &ScalarField) -> ScalarField {
        self.conformal_factor().mul(&self.base_operator(f))
    }

    /// Formal adjoint of [`Self::chern_laplacian`] for the volume-weighted inner
    /// product: `exp(−2u)·(Δh − div(hθ₀))` with `h = f·exp(κu)`. On the base
    /// this is `Δf − ⟨df, θ₀⟩ − f·div θ₀`.
    pub fn chern_adjoint(&self, f: &ScalarField) -> ScalarField {
        let h = f.mul(&self.potential.exp_scaled(self.torsion_coupling()));
        self.potential.exp_scaled(-2.0).mul(&self.base_adjoint(&h))
    }

    /// Codifferential of the torsion one-form in the current metric, up to sign:
    /// `exp(−2u/n − κu)·div(exp(κu)·θ)`. Zero exactly for Gauduchon metrics.
    pub fn torsion_codifferential(&self) -> ScalarField {
        let kappa = self.torsion_coupling();
        let h = self.potential.exp_scaled(kappa);
        // exp(κu)·θ = h·θ₀ + dh
        let div = divergence(&self.theta0.weighted(&h)).sub(&laplacian_flat(&h));
        let factor = self.potential.exp_scaled(-2.0 / self.n() - kappa);
        factor.mul(&div)
    }

    pub fn is_gauduchon(&self, tol: f64) -> bool {
        self.torsion_codifferential().max_abs() < tol
    }

    pub fn is_balanced(&self, tol: f64) -> bool {
        self.theta_eff().max_abs() < tol
    }

    pub fn conformal_change(&self, u: &ScalarField) -> Result<Self> {
        self.grid.check_same(u.grid())?;
        Ok(Self {
            potential: self.potential.add(u),
            ..self.clone()
        })
    }

    /// `exp(−2u/n)·(Δ^Ch_base u + S⁰)`.
    pub fn scalar_curvature(&self) -> ScalarField {
        self.conformal_factor()
            .mul(&self.base_operator(&self.potential).add(&self.s0))
    }

    /// The positive generator of the kernel of the adjoint Chern Laplacian,
    /// normalized so that `∫ f₀ dV = Vol`.
    pub fn eccentricity(&self) -> Result<ScalarField> {
        let grid = self.grid;
        let one = ScalarField::constant(grid, 1.0);
        let adj = |f: &ScalarField| self.chern_adjoint(f);
        // f₀ = 1 + v with v mean-zero and A*v = −A*1.
        let rhs = self.chern_adjoint(&one).scale(-1.0);
        let sys = BorderedSystem::with_border(grid, &adj, one.clone(), one.clone());
        let (v, _, _) = sys.solve(&rhs, &[0.0], 1e-13)?;
        self.finish_eccentricity(one.add(&v))
    }

    /// Same kernel computed by a dense SVD. Only for grids with at most 1024 points.
    pub fn eccentricity_dense(&self) -> Result<ScalarField> {
        let m = self.grid.len();
        if m > DENSE_NULLSPACE_MAX {
            return Err(Error::InvalidGrid(format!(
                "dense null space limited to {DENSE_NULLSPACE_MAX} points, grid has {m}"
            )));
        }
        let grid = self.grid;
        let apply = |x: &[f64]| {
            self.chern_adjoint(&ScalarField::raw(grid, x.to_vec()))
                .into_values()
        };
        let mat: DMatrix<f64> = assemble(&apply, m);
        let svd = mat.svd(false, true);
        let vt = svd
            .v_t
            .ok_or_else(|| Error::DegenerateKernel("SVD failed".into()))?;
        let sv = &svd.singular_values;
        let (imin, smin) =
            sv.iter().enumerate().fold(
                (0, f64::INFINITY),
                |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc },
            );
        let second = sv
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != imin)
            .fold(f64::INFINITY, |acc, (_, &s)| acc.min(s));
        if second < 1e3 * smin.max(1e-300) {
            return Err(Error::DegenerateKernel(format!(
                "smallest singular values {smin:e} and {second:e} are not separated"
            )));
        }
        let v: Vec<f64> = vt.row(imin).iter().copied().collect();
        self.finish_eccentricity(ScalarField::raw(grid, v))
    }

    fn finish_eccentricity(&self, raw: ScalarField) -> Result<ScalarField> {
        let integral = self.integrate(&raw);
        if integral == 0.0 || !integral.is_finite() {
            return Err(Error::DegenerateKernel(
                "kernel element has zero mass".into(),
            ));
        }
        let f0 = raw.scale(self.volume() / integral);
        if f0.min() <= 0.0 {
            return Err(Error::DegenerateKernel(format!(
                "kernel element is not positive (min {})",
                f0.min()
            )));
        }
        let defect = self.chern_adjoint(&f0).l2() / f0.l2();
        if defect > 1e-9 {
            return Err(Error::DegenerateKernel(format!(
                "adjoint residual {defect:e} too large"
            )));
        }
        Ok(f0)
    }

    /// Moves to the unique volume-one Gauduchon metric of the conformal class.
    ///
    /// With `U` the total potential of the target metric, the Gauduchon
    /// condition reads `div(exp(κU)·(θ₀ + κ dU)) = 0`, which is linear in
    /// `h = exp(κU)`: `Δh − div(hθ₀) = 0`. It is solved as `h = 1 + v`
    /// with `v` mean-zero; the volume is fixed afterwards by a constant shift.
    /// Returns the new background and the exponent applied to `self`.
    pub fn gauduchon_normalize(&self) -> Result<(Self, ScalarField)> {
        let grid = self.grid;
        let kappa = self.torsion_coupling();
        let adj = |h: &ScalarField| self.base_adjoint(h);
        let rhs = divergence(&self.theta0);
        let v = if rhs.max_abs() == 0.0 {
            ScalarField::zeros(grid)
        } else {
            solve_projected(grid, &adj, &rhs, 1e-13)?
        };
        let h = v.shift(1.0);
        if h.min() <= 0.0 {
            return Err(Error::DegenerateKernel(format!(
                "Gauduchon density not positive (min {})",
                h.min()
            )));
        }
        let total = h.map(|x| x.ln() / kappa);
        let vol = total.exp_scaled(2.0).mean();
        let total = total.shift(-0.5 * vol.ln());
        let exponent = total.sub(&self.potential);
        let eta = Self {
            potential: total,
            ..self.clone()
        };
        Ok((eta, exponent))
    }

    /// Total Chern scalar curvature of the volume-one Gauduchon representative.
    pub fn gauduchon_degree(&self) -> Result<f64> {
        let (eta, _) = self.gauduchon_normalize()?;
        Ok(eta.integrate(&eta.scalar_curvature()))
    }

    /// Sup norm of `w·Δ^Ch u + (n/2)·Δ^Ch w + (n/2)·|dw|²/w` with `w = exp(−2u/n)`,
    /// which vanishes identically.
    pub fn formula4_residual(&self, u: &ScalarField) -> f64 {
        let n = self.n();
        let w = u.exp_scaled(-2.0 / n);
        let dw = gradient(&w);
        let sq = self.pair(&dw, &dw);
        let lhs = w
            .mul(&self.chern_laplacian(u))
            .add(&self.chern_laplacian(&w).scale(n / 2.0))
            .add(&sq.zip_map(&w, |a, b| a / b).scale(n / 2.0));
        lhs.max_abs()
    }

    /// `‖S(exp(2u/n)·ω) − g‖∞`.
    pub fn prescribed_residual(&self, g: &ScalarField, u: &ScalarField) -> Result<f64> {
        Ok(self
            .conformal_change(u)?
            .scalar_curvature()
            .sub(g)
            .max_abs())
    }

    /// Integral identity that every solution must satisfy: for the metric
    /// `exp(2u/n)·ω` with curvature `g`, `∫ g exp(2w/n) dV_η = Γ` where `w` is
    /// the exponent relative to the Gauduchon representative `η`.
    /// Returns `(∫ g exp(2w/n) dV_η, Γ)`.
    pub fn degree_closure(&self, g: &ScalarField, u: &ScalarField) -> Result<(f64, f64)> {
        let (eta, to_eta) = self.gauduchon_normalize()?;
        let w = u.sub(&to_eta);
        let lhs = eta.integrate(&g.mul(&w.exp_scaled(2.0 / self.n())));
        let gamma = eta.integrate(&eta.scalar_curvature());
        Ok((lhs, gamma))
    }

    /// Solves `Δ^Ch f + c·f = rhs` for the current metric.
    pub fn solve_shifted(
        &self,
        c: &ScalarField,
        rhs: &ScalarField,
        tol: f64,
    ) -> Result<ScalarField> {
        let inv = self.potential.exp_scaled(2.0 / self.n());
        solve_linear(&self.theta0, &c.mul(&inv), &rhs.mul(&inv), tol)
    }

    /// Mean-zero solution of `Δ^Ch f = rhs` for a right-hand side that is
    /// compatible up to quadrature error; the incompatible part is discarded.
    pub fn solve_poisson(&self, rhs: &ScalarField) -> Result<ScalarField> {
        let inv = self.potential.exp_scaled(2.0 / self.n());
        let op = |f: &ScalarField| self.base_operator(f);
        solve_projected(self.grid, &op, &rhs.mul(&inv), DEFAULT_LINEAR_TOL)
    }
}
