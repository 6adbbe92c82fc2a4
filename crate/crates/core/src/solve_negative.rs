//! Negative degree: constant-curvature normalization, the continuity path,
//! explicit sub/supersolutions and monotone iteration.
//!
//! Throughout, `R(u) = Δ^Ch u + S − g·exp(2u/n)` is the residual of the
//! prescribed-curvature equation on a background with curvature `S`; `u` is a
//! subsolution when `R(u) ≤ 0` and a supersolution when `R(u) ≥ 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::hermitian::HermitianBackground;
use crate::linear::DEFAULT_LINEAR_TOL;
use crate::obstructions::constant_curvature;

/// Solver knobs shared by all three regimes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    /// Uniform steps of the continuity parameter before any halving.
    pub t_steps: usize,
    pub newton_max: usize,
    /// Sup-norm residual at which Newton stops.
    pub newton_tol: f64,
    pub monotone_max: usize,
    pub monotone_tol: f64,
    /// Multiplier on the Lipschitz constant of the nonlinearity.
    pub k_safety: f64,
    /// Iteration cap of the variational descent.
    pub descent_max: usize,
    /// Largest sup-norm Newton update accepted by the small-data solver.
    pub local_radius: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            t_steps: 4,
            newton_max: 30,
            newton_tol: 1e-10,
            monotone_max: 5000,
            monotone_tol: 1e-8,
            k_safety: 1.1,
            descent_max: 2000,
            local_radius: 1.0,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        let ok = self.t_steps >= 1
            && self.newton_max >= 1
            && self.newton_tol > 0.0
            && self.monotone_tol > 0.0
            && self.k_safety > 1.0
            && self.local_radius > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid solver options {self:?}")))
        }
    }
}

#[derive(Debug, Clone)]
pub struct ContinuityOutcome {
    pub u: ScalarField,
    pub newton_iterations: usize,
    /// Whether the maximum-principle bounds hold; `None` when `g` is not negative.
    pub bounds_ok: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct MonotoneOutcome {
    pub u: ScalarField,
    pub iterations: usize,
    /// Smallest pointwise increment `u_k − u_{k−1}` over the whole run.
    pub min_increment: f64,
    pub residual: f64,
}

/// `R(u) = Δ^Ch u + S − g·exp(2u/n)`.
pub fn equation_residual(
    bg: &HermitianBackground,
    s: &ScalarField,
    g: &ScalarField,
    u: &ScalarField,
) -> ScalarField {
    let n = bg.grid().n_f64();
    bg.chern_laplacian(u)
        .add(s)
        .sub(&g.mul(&u.exp_scaled(2.0 / n)))
}

/// Newton on `R_t(u) = Δ^Ch u + t·S + (1−t)·g − g·exp(2u/n) = 0` from `u0`.
fn newton(
    bg: &HermitianBackground,
    s: &ScalarField,
    g: &ScalarField,
    t: f64,
    u0: &ScalarField,
    opts: &SolveOptions,
) -> Result<(ScalarField, usize)> {
    let n = bg.grid().n_f64();
    let source = s.scale(t).add(&g.scale(1.0 - t));
    let mut u = u0.clone();
    for it in 0..=opts.newton_max {
        let r = equation_residual(bg, &source, g, &u);
        let norm = r.max_abs();
        if !norm.is_finite() {
            return Err(Error::NewtonDiverged { t });
        }
        if norm < opts.newton_tol {
            return Ok((u, it));
        }
        if it == opts.newton_max {
            break;
        }
        let shift = g.mul(&u.exp_scaled(2.0 / n)).scale(-2.0 / n);
        let delta = bg
            .solve_shifted(
                &shift,
                &r.scale(-1.0),
                DEFAULT_LINEAR_TOL.min(opts.newton_tol),
            )
            .map_err(|_| Error::JacobianSingular { t })?;
        if !(delta.max_abs() < 20.0) {
            return Err(Error::NewtonDiverged { t });
        }
        u = u.add(&delta);
    }
    Err(Error::NewtonDiverged { t })
}

/// Follows `t ↦ u_t` from the trivial solution `u_0 = 0` to `t = 1`, halving a
/// failed step up to three times.
fn continuation(
    bg: &HermitianBackground,
    s: &ScalarField,
    g: &ScalarField,
    opts: &SolveOptions,
) -> Result<(ScalarField, usize)> {
    opts.validate()?;
    let grid = *g.grid();
    let mut u = ScalarField::zeros(grid);
    let mut t = 0.0;
    let base = 1.0 / opts.t_steps as f64;
    let mut total = 0;
    while t < 1.0 {
        let mut step = base.min(1.0 - t);
        let mut halvings = 0;
        loop {
            let target = if t + step >= 1.0 - 1e-14 {
                1.0
            } else {
                t + step
            };
            match newton(bg, s, g, target, &u, opts) {
                Ok((next, its)) => {
                    total += its;
                    u = next;
                    t = target;
                    break;
                }
                Err(e @ Error::JacobianSingular { .. }) => return Err(e),
                Err(_) if halvings < 3 => {
                    halvings += 1;
                    step *= 0.5;
                }
                Err(_) => return Err(Error::NewtonDiverged { t: target }),
            }
        }
    }
    Ok((u, total))
}

/// Solves the prescribed-curvature equation on a constant-curvature
/// background by continuation from `g`-independent data at `t = 0`.
///
/// For negative `g` the result is checked against the maximum-principle bounds
/// `min(−max S, −max g)/(−min g) ≤ exp(2u/n) ≤ (−min S − min g)/(−max g)`.
pub fn continuity_solve(
    bg: &HermitianBackground,
    g: &ScalarField,
    opts: &SolveOptions,
) -> Result<ContinuityOutcome> {
    constant_curvature(bg)?;
    let s = bg.scalar_curvature();
    let (u, newton_iterations) = continuation(bg, &s, g, opts)?;
    let bounds_ok = (g.max() < 0.0).then(|| a_priori_bounds_hold(bg, &s, g, &u));
    Ok(ContinuityOutcome {
        u,
        newton_iterations,
        bounds_ok,
    })
}

fn a_priori_bounds_hold(
    bg: &HermitianBackground,
    s: &ScalarField,
    g: &ScalarField,
    u: &ScalarField,
) -> bool {
    let n = bg.grid().n_f64();
    let upper = (-s.min() - g.min()) / (-g.max());
    let lower = (-s.max()).min(-g.max()) / (-g.min());
    let slack = 1e-8;
    let top = (2.0 * u.max() / n).exp();
    let bottom = (2.0 * u.min() / n).exp();
    top <= upper * (1.0 + slack) && bottom >= lower * (1.0 - slack)
}

/// Plain Newton on the full equation from an arbitrary starting field; used to
/// probe uniqueness.
pub fn newton_solve(
    bg: &HermitianBackground,
    g: &ScalarField,
    u0: &ScalarField,
    opts: &SolveOptions,
) -> Result<(ScalarField, usize)> {
    let s = bg.scalar_curvature();
    newton(bg, &s, g, 1.0, u0, opts)
}

/// Moves `bg` to the metric of constant curvature `Γ < 0` in its conformal
/// class. Returns the new background and the exponent applied to `bg`.
pub fn yamabe_normalize(
    bg: &HermitianBackground,
    opts: &SolveOptions,
) -> Result<(HermitianBackground, ScalarField)> {
    let gamma = bg.gauduchon_degree()?;
    if !(gamma < 0.0) {
        return Err(Error::WrongRegime(format!(
            "constant-curvature normalization needs a negative degree, got {gamma}"
        )));
    }
    let (eta, to_eta) = bg.gauduchon_normalize()?;
    let s = eta.scalar_curvature();
    let target = ScalarField::constant(*bg.grid(), gamma);
    let (w, _) = continuation(&eta, &s, &target, opts)?;
    let out = eta.conformal_change(&w)?;
    Ok((out, to_eta.add(&w)))
}

/// The constant subsolution `(n/2)·log(Γ / min g)`.
pub fn build_subsolution(bg: &HermitianBackground, g: &ScalarField) -> Result<f64> {
    let s = constant_curvature(bg)?;
    let min_g = g.min();
    if min_g >= 0.0 {
        return Err(Error::NoNegativePart { min_g });
    }
    let n = bg.grid().n_f64();
    let u = n / 2.0 * (s / min_g).ln();
    let r = equation_residual(
        bg,
        &bg.scalar_curvature(),
        g,
        &ScalarField::constant(*g.grid(), u),
    );
    if r.max() > 1e-10 * (1.0 + s.abs()) {
        return Err(Error::OrderingViolated(format!(
            "constant {u} is not a subsolution (max residual {:e})",
            r.max()
        )));
    }
    Ok(u)
}

/// Supersolution `k₁φ + k₂` for `g ≤ 0`, `g ≢ 0`, where
/// `Δ^Ch φ = g − m` with `m = ∫ g f₀ dV / Vol`, `k₁ = 1.01·Γ/m` and
/// `k₂ = B + 0.01|B|` with `B = max((n/2)·log k₁ − k₁φ)`.
pub fn build_supersolution(bg: &HermitianBackground, g: &ScalarField) -> Result<ScalarField> {
    let s = constant_curvature(bg)?;
    if g.max() > 0.0 {
        return Err(Error::WrongSignClass(format!("max g = {} > 0", g.max())));
    }
    if g.max_abs() == 0.0 {
        return Err(Error::WrongSignClass("g vanishes identically".into()));
    }
    let n = bg.grid().n_f64();
    let f0 = bg.eccentricity()?;
    let m = bg.integrate(&g.mul(&f0)) / bg.volume();
    let phi = bg.solve_poisson(&g.shift(-m))?;
    let k1 = 1.01 * s / m;
    let b = phi.scale(-k1).shift(n / 2.0 * k1.ln()).max();
    let k2 = b + 0.01 * b.abs();
    let u = phi.scale(k1).shift(k2);
    let r = equation_residual(bg, &bg.scalar_curvature(), g, &u);
    if r.min() < -1e-9 * (1.0 + s.abs()) {
        return Err(Error::OrderingViolated(format!(
            "constructed field is not a supersolution (min residual {:e})",
            r.min()
        )));
    }
    Ok(u)
}

/// Monotone iteration `(Δ^Ch + K)u_k = g·exp(2u_{k−1}/n) − S + K·u_{k−1}` from
/// the subsolution upwards. The iterates are nondecreasing and stay below the
/// supersolution, which is checked at every step.
pub fn monotone_solve(
    bg: &HermitianBackground,
    g: &ScalarField,
    u_minus: &ScalarField,
    u_plus: &ScalarField,
    opts: &SolveOptions,
) -> Result<MonotoneOutcome> {
    opts.validate()?;
    let n = bg.grid().n_f64();
    let s = bg.scalar_curvature();
    let order_tol = 1e-10;
    let gap = u_plus.sub(u_minus).min();
    if gap < -order_tol {
        return Err(Error::OrderingViolated(format!(
            "u₋ exceeds u₊ by {:e}",
            -gap
        )));
    }
    let scale = 1.0 + s.max_abs() + g.max_abs();
    let r_minus = equation_residual(bg, &s, g, u_minus);
    if r_minus.max() > 1e-8 * scale {
        return Err(Error::OrderingViolated(format!(
            "lower barrier is not a subsolution (max residual {:e})",
            r_minus.max()
        )));
    }
    let r_plus = equation_residual(bg, &s, g, u_plus);
    if r_plus.min() < -1e-8 * scale {
        return Err(Error::OrderingViolated(format!(
            "upper barrier is not a supersolution (min residual {:e})",
            r_plus.min()
        )));
    }

    let lip = g
        .map(f64::abs)
        .scale(2.0 / n * (2.0 * u_plus.max() / n).exp())
        .max();
    let k = (opts.k_safety * lip).max(1e-6);
    let shift = ScalarField::constant(*g.grid(), k);

    let mut u = u_minus.clone();
    let mut min_increment = f64::INFINITY;
    let mut residual = bg.prescribed_residual(g, &u)?;
    for it in 0..opts.monotone_max {
        if residual < opts.monotone_tol {
            return Ok(MonotoneOutcome {
                u,
                iterations: it,
                min_increment,
                residual,
            });
        }
        let r = equation_residual(bg, &s, g, &u);
        let delta = bg.solve_shifted(&shift, &r.scale(-1.0), DEFAULT_LINEAR_TOL)?;
        let step_min = delta.min();
        min_increment = min_increment.min(step_min);
        if step_min < -order_tol {
            return Err(Error::OrderingViolated(format!(
                "iterate {} decreased by {:e}",
                it + 1,
                -step_min
            )));
        }
        u = u.add(&delta);
        let over = u.sub(u_plus).max();
        if over > order_tol {
            return Err(Error::OrderingViolated(format!(
                "iterate {} exceeds u₊ by {over:e}",
                it + 1
            )));
        }
        residual = bg.prescribed_residual(g, &u)?;
    }
    if residual < opts.monotone_tol {
        return Ok(MonotoneOutcome {
            u,
            iterations: opts.monotone_max,
            min_increment,
            residual,
        });
    }
    Err(Error::MaxIters {
        iterations: opts.monotone_max,
        residual,
    })
}

/// Full pipeline for `g ≤ 0`, `g ≢ 0`: constant-curvature normalization,
/// barriers, monotone iteration. The returned exponent is relative to `bg`.
pub fn solve_nonpositive(
    bg: &HermitianBackground,
    g: &ScalarField,
    opts: &SolveOptions,
) -> Result<MonotoneOutcome> {
    let (bc, to_const) = yamabe_normalize(bg, opts)?;
    let u_plus = build_supersolution(&bc, g)?;
    let lower = build_subsolution(&bc, g)?.min(u_plus.min());
    let u_minus = ScalarField::constant(*g.grid(), lower);
    let out = monotone_solve(&bc, g, &u_minus, &u_plus, opts)?;
    let u = to_const.add(&out.u);
    let residual = bg.prescribed_residual(g, &u)?;
    Ok(MonotoneOutcome { u, residual, ..out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{OneFormField, TorusGrid};
    use std::f64::consts::PI;

    fn grid() -> TorusGrid {
        TorusGrid::new(2, 32, 2).unwrap()
    }

    fn opts() -> SolveOptions {
        SolveOptions::default()
    }

    #[test]
    fn options_round_trip_and_defaults() {
        let o: SolveOptions = serde_json::from_str(r#"{"t_steps": 7}"#).unwrap();
        assert_eq!(o.t_steps, 7);
        assert_eq!(o.newton_tol, SolveOptions::default().newton_tol);
        assert!(serde_json::from_str::<SolveOptions>(r#"{"bogus": 1}"#).is_err());
        let bad = SolveOptions {
            k_safety: 0.5,
            ..SolveOptions::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn continuity_exact_path_for_constant_target() {
        let g = grid();
        let bg = HermitianBackground::flat(g, -1.0);
        let out = continuity_solve(&bg, &ScalarField::constant(g, -1.0), &opts()).unwrap();
        assert!(out.u.max_abs() < 1e-14);
        assert_eq!(out.bounds_ok, Some(true));
    }

    #[test]
    fn yamabe_fixed_point_and_wavy_case() {
        let g = grid();
        let (bc, u) = yamabe_normalize(&HermitianBackground::flat(g, -1.0), &opts()).unwrap();
        assert!(u.max_abs() < 1e-12);
        assert!(bc.scalar_curvature().shift(1.0).max_abs() < 1e-10);

        let s0 = ScalarField::from_fn(g, |x| -1.0 + 0.3 * (2.0 * PI * x[0]).cos());
        let bg = HermitianBackground::new(OneFormField::zeros(g), s0).unwrap();
        let (bc, _) = yamabe_normalize(&bg, &opts()).unwrap();
        let curv = bc.scalar_curvature();
        assert!(curv.shift(1.0).max_abs() < 1e-7);
        assert!((bc.gauduchon_degree().unwrap() + 1.0).abs() < 1e-9);

        let positive = HermitianBackground::flat(g, 1.0);
        assert!(matches!(
            yamabe_normalize(&positive, &opts()),
            Err(Error::WrongRegime(_))
        ));
    }

    #[test]
    fn subsolution_closed_form() {
        let g = grid();
        let bg = HermitianBackground::flat(g, -1.0);
        assert_eq!(
            build_subsolution(&bg, &ScalarField::constant(g, -1.0)).unwrap(),
            0.0
        );
        let target = ScalarField::from_fn(g, |x| -1.5 - 0.5 * (2.0 * PI * x[0]).cos());
        let u = build_subsolution(&bg, &target).unwrap();
        assert!((u - 0.5f64.ln()).abs() < 1e-12);
        assert!(matches!(
            build_subsolution(&bg, &ScalarField::constant(g, 0.0)),
            Err(Error::NoNegativePart { .. })
        ));
    }

    #[test]
    fn supersolution_for_touching_target() {
        let g = grid();
        let bg = HermitianBackground::flat(g, -1.0);
        let target = ScalarField::from_fn(g, |x| -1.0 - (2.0 * PI * x[0]).cos());
        let up = build_supersolution(&bg, &target).unwrap();
        let r = equation_residual(&bg, bg.s0(), &target, &up);
        assert!(r.min() >= 0.0);
        let low = build_subsolution(&bg, &ScalarField::constant(g, -1.0)).unwrap();
        let up_const = build_supersolution(&bg, &ScalarField::constant(g, -1.0)).unwrap();
        assert!(up_const.min() >= low);
        assert!(matches!(
            build_supersolution(&bg, &ScalarField::from_fn(g, |x| (2.0 * PI * x[0]).cos())),
            Err(Error::WrongSignClass(_))
        ));
    }

    #[test]
    fn monotone_constant_solution() {
        let g = grid();
        let bg = HermitianBackground::flat(g, -1.0);
        let target = ScalarField::constant(g, -1.0);
        let out = monotone_solve(
            &bg,
            &target,
            &ScalarField::constant(g, -1.0),
            &ScalarField::constant(g, 1.0),
            &opts(),
        )
        .unwrap();
        assert!(out.u.max_abs() < 1e-8);
        assert!(out.min_increment >= -1e-10);
        assert!(matches!(
            monotone_solve(
                &bg,
                &target,
                &ScalarField::constant(g, 1.0),
                &ScalarField::constant(g, -1.0),
                &opts()
            ),
            Err(Error::OrderingViolated(_))
        ));
    }

    #[test]
    fn nonpositive_end_to_end() {
        let g = grid();
        let bg = HermitianBackground::flat(g, -1.0);
        let target = ScalarField::from_fn(g, |x| -(2.0 * PI * x[0]).cos().exp());
        let out = solve_nonpositive(&bg, &target, &opts()).unwrap();
        assert!(out.residual < 1e-6);
        let cont = continuity_solve(&bg, &target, &opts()).unwrap();
        assert!(cont.u.sub(&out.u).max_abs() < 1e-6);
        assert_eq!(cont.bounds_ok, Some(true));
    }
}
