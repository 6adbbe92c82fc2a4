//! Zero degree on a balanced background with vanishing curvature.
//!
//! Minimizes `F(v) = ½∫|dv|² dV` over
//! `B = {v : ∫ g·exp(2v/n) dV = 0, ∫ v dV = 0}`. A minimizer satisfies
//! `Δ^Ch v = κ·G + μ` with `G = g·exp(2v/n)`; integrating shows `μ = 0`, and
//! testing against `exp(−2v/n)` gives
//!
//! ```text
//! λ := ∫ exp(−2v/n)|dv|² dV / ∫ g dV = −(n/2)·κ < 0.
//! ```
//!
//! The shift `γ = (n/2)·log(−2λ/n)` then makes `u = v + γ` a solution of
//! `Δ^Ch u = g·exp(2u/n)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::hermitian::HermitianBackground;
use crate::linear::{BorderedSystem, DEFAULT_LINEAR_TOL};
use crate::solve_negative::SolveOptions;

const NEWTON_HANDOFF: f64 = 1e-3;
const STATIONARITY_TOL: f64 = 1e-11;
const CONSTRAINT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct VariationalState {
    #[serde(skip)]
    pub v: ScalarField,
    pub lambda: f64,
    pub gamma: f64,
    /// Multiplier of the mean constraint.
    pub mu: f64,
    pub energy: f64,
    /// `|∫ g·exp(2v/n) dV| + |∫ v dV|`.
    pub constraint_residual: f64,
    /// RMS of `Δ^Ch v − κ·G − μ`.
    pub stationarity: f64,
    pub descent_steps: usize,
    pub newton_steps: usize,
    /// Energy after every accepted step.
    #[serde(skip)]
    pub energy_trace: Vec<f64>,
}

fn require_flat_balanced(bg: &HermitianBackground) -> Result<()> {
    if !bg.is_balanced(1e-8) {
        return Err(Error::WrongRegime("background is not balanced".into()));
    }
    let s = bg.scalar_curvature().max_abs();
    if s >= 1e-8 {
        return Err(Error::WrongRegime(format!(
            "background curvature does not vanish (sup {s:e})"
        )));
    }
    Ok(())
}

/// True iff `g` changes sign and `∫ g dV < 0`.
pub fn check_hypotheses(bg: &HermitianBackground, g: &ScalarField) -> Result<bool> {
    require_flat_balanced(bg)?;
    Ok(g.min() < 0.0 && g.max() > 0.0 && bg.integrate(g) < -1e-12)
}

struct Problem<'a> {
    bg: &'a HermitianBackground,
    g: &'a ScalarField,
    n: f64,
}

impl Problem<'_> {
    fn big_g(&self, v: &ScalarField) -> ScalarField {
        self.g.mul(&v.exp_scaled(2.0 / self.n))
    }

    fn constraint(&self, v: &ScalarField) -> f64 {
        self.bg.integrate(&self.big_g(v))
    }

    /// `½∫ v·Δ^Ch v dV`, equal to `½∫|dv|² dV` on a balanced background. This
    /// form keeps the Nyquist mode, so `Δ^Ch v` is its exact discrete gradient.
    fn energy(&self, v: &ScalarField) -> f64 {
        0.5 * self.bg.integrate(&v.mul(&self.bg.chern_laplacian(v)))
    }

    /// Least-squares `(κ, μ)` for `Δ^Ch v ≈ κ·G + μ` in the volume inner product.
    fn multipliers(&self, grad: &ScalarField, big_g: &ScalarField) -> (f64, f64) {
        let ip = |a: &ScalarField, b: &ScalarField| self.bg.integrate(&a.mul(b));
        let one = ScalarField::constant(*grad.grid(), 1.0);
        let (a11, a12, a22) = (ip(big_g, big_g), ip(big_g, &one), ip(&one, &one));
        let (b1, b2) = (ip(grad, big_g), ip(grad, &one));
        let det = a11 * a22 - a12 * a12;
        if det.abs() <= 1e-300 {
            return (0.0, b2 / a22);
        }
        ((b1 * a22 - b2 * a12) / det, (a11 * b2 - a12 * b1) / det)
    }

    /// Removes the components along `G` and `1` (volume inner product).
    fn project(&self, d: &ScalarField, big_g: &ScalarField) -> ScalarField {
        let (k, m) = self.multipliers(d, big_g);
        d.sub(&big_g.scale(k)).shift(-m)
    }

    /// 1-D Newton for `s` with `∫ g·exp(2(w + sχ)/n) dV = 0`.
    fn restore(&self, w: &ScalarField, chi: &ScalarField) -> Option<(ScalarField, f64)> {
        let scale = self.bg.integrate(&self.big_g(w).map(f64::abs)).max(1e-300);
        let mut s = 0.0;
        for _ in 0..60 {
            let trial = w.add(&chi.scale(s));
            let big_g = self.big_g(&trial);
            let h = self.bg.integrate(&big_g);
            if h.abs() <= CONSTRAINT_TOL * scale {
                return Some((trial, h.abs()));
            }
            let dh = 2.0 / self.n * self.bg.integrate(&big_g.mul(chi));
            if dh == 0.0 || !dh.is_finite() {
                return None;
            }
            let step = -h / dh;
            if !(step.abs() < 10.0) {
                return None;
            }
            s += step;
        }
        None
    }
}

/// Smooth periodic bump of unit height centred at grid point `center`.
fn bump(bg: &HermitianBackground, center: usize) -> ScalarField {
    let grid = *bg.grid();
    let c = grid.point(center);
    let d = grid.dim();
    ScalarField::from_fn(grid, move |x| {
        (0..d)
            .map(|k| {
                let b = 0.5 * (1.0 + (2.0 * std::f64::consts::PI * (x[k] - c[k])).cos());
                b * b
            })
            .product()
    })
}

fn remove_mean(bg: &HermitianBackground, f: &ScalarField) -> ScalarField {
    f.shift(-bg.integrate(f) / bg.volume())
}

/// A mean-zero point of `B`: `s·χ` minus its mean, with `χ` a bump at the
/// maximum of `g` and `s` found by bisection on `s ∈ [0, 64]`.
pub fn initial_feasible(bg: &HermitianBackground, g: &ScalarField) -> Result<ScalarField> {
    if !check_hypotheses(bg, g)? {
        return Err(Error::WrongRegime(
            "g must change sign and have negative integral".into(),
        ));
    }
    let problem = Problem {
        bg,
        g,
        n: bg.grid().n_f64(),
    };
    let chi = bump(bg, g.argmax());
    let h = |s: f64| problem.constraint(&chi.scale(s));
    let mut lo = 0.0;
    let mut hi = 1.0;
    while h(hi) <= 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 64.0 {
            return Err(Error::BisectionFailed(
                "no sign change of the constraint for s ≤ 64".into(),
            ));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if h(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = if h(lo).abs() < h(hi).abs() { lo } else { hi };
    let phi = remove_mean(bg, &chi.scale(s));
    let residual = problem.constraint(&phi).abs();
    let scale = bg.integrate(&problem.big_g(&phi).map(f64::abs)).max(1.0);
    if residual >= 1e-10 * scale {
        return Err(Error::BisectionFailed(format!(
            "constraint residual {residual:e} after bisection"
        )));
    }
    Ok(phi)
}

/// Projected, semi-implicit gradient descent on `B`, finished by bordered
/// Newton on the Euler–Lagrange system once the stationarity residual is
/// below `1e−3`.
pub fn minimize_energy(
    bg: &HermitianBackground,
    g: &ScalarField,
    phi0: &ScalarField,
    opts: &SolveOptions,
) -> Result<VariationalState> {
    require_flat_balanced(bg)?;
    let problem = Problem {
        bg,
        g,
        n: bg.grid().n_f64(),
    };
    let grid = *g.grid();
    let chi = remove_mean(bg, &bump(bg, g.argmax()));
    let (mut v, _) = problem
        .restore(&remove_mean(bg, phi0), &chi)
        .ok_or(Error::LineSearchFailed)?;
    let mut energy = problem.energy(&v);
    let mut trace = vec![energy];
    let tau0 = 1.0 / (4.0 * std::f64::consts::PI.powi(2));
    let mut tau = tau0;
    let mut descent_steps = 0;

    loop {
        let big_g = problem.big_g(&v);
        let grad = bg.chern_laplacian(&v);
        let (k, m) = problem.multipliers(&grad, &big_g);
        let p = grad.sub(&big_g.scale(k)).shift(-m);
        let stationarity = p.l2();
        if stationarity < NEWTON_HANDOFF {
            break;
        }
        if descent_steps >= opts.descent_max {
            return Err(Error::MaxIters {
                iterations: descent_steps,
                residual: stationarity,
            });
        }
        // Restore along the constraint normal, which is never tangent to B.
        let normal = remove_mean(bg, &big_g);
        let normal = normal.scale(1.0 / normal.max_abs().max(1e-300));
        let mut accepted = false;
        while tau > 1e-12 {
            // (I + τΔ^Ch)⁻¹ smooths the step; the projection keeps it tangent.
            let one = ScalarField::constant(grid, 1.0);
            let pre = bg.solve_shifted(&one.scale(1.0 / tau), &p.scale(1.0 / tau), 1e-10)?;
            let d = problem.project(&pre, &big_g);
            let slope = bg.integrate(&d.mul(&p));
            let trial = v.sub(&d.scale(tau));
            if let Some((next, _)) = problem.restore(&trial, &normal) {
                let e = problem.energy(&next);
                if e <= energy - 1e-4 * tau * slope.max(0.0) {
                    v = next;
                    energy = e;
                    trace.push(e);
                    accepted = true;
                    tau = (tau * 2.0).min(64.0 * tau0);
                    break;
                }
            }
            tau *= 0.5;
        }
        if !accepted {
            return Err(Error::LineSearchFailed);
        }
        descent_steps += 1;
    }

    let big_g = problem.big_g(&v);
    let (k0, m0) = problem.multipliers(&bg.chern_laplacian(&v), &big_g);
    let (v, k, mu, newton_steps) = newton_polish(&problem, v, k0, m0, opts)?;
    let energy_final = problem.energy(&v);
    trace.push(energy_final);

    let big_g = problem.big_g(&v);
    let stationarity = bg.chern_laplacian(&v).sub(&big_g.scale(k)).shift(-mu).l2();
    // Integrating the Euler–Lagrange equation against exp(−2v/n) gives
    // λ = ∫exp(−2v/n)|dv|² / ∫g = −nκ/2. Only the multiplier form is exact on
    // the grid, and it makes the recovered u solve the discrete equation.
    let lambda = -problem.n * k / 2.0;
    let gamma = if lambda < 0.0 {
        problem.n / 2.0 * (-2.0 * lambda / problem.n).ln()
    } else {
        f64::NAN
    };
    Ok(VariationalState {
        constraint_residual: bg.integrate(&big_g).abs() + bg.integrate(&v).abs(),
        v,
        lambda,
        gamma,
        mu,
        energy: energy_final,
        stationarity,
        descent_steps,
        newton_steps,
        energy_trace: trace,
    })
}

/// Newton on `(v, κ, μ)` for `Δ^Ch v − κG − μ = 0`, `∫G dV = 0`, `∫v dV = 0`.
fn newton_polish(
    problem: &Problem,
    mut v: ScalarField,
    mut k: f64,
    mut mu: f64,
    opts: &SolveOptions,
) -> Result<(ScalarField, f64, f64, usize)> {
    let bg = problem.bg;
    let grid = *v.grid();
    let n = problem.n;
    let dens = bg.volume_density();
    let one = ScalarField::constant(grid, 1.0);
    for it in 0..=opts.newton_max {
        let big_g = problem.big_g(&v);
        let field = bg.chern_laplacian(&v).sub(&big_g.scale(k)).shift(-mu);
        let c1 = bg.integrate(&big_g);
        let c2 = bg.integrate(&v);
        let scale = bg.integrate(&big_g.map(f64::abs)).max(1e-300);
        if field.l2() < STATIONARITY_TOL
            && c1.abs() < CONSTRAINT_TOL * scale
            && c2.abs() < CONSTRAINT_TOL
        {
            return Ok((v, k, mu, it));
        }
        if it == opts.newton_max {
            break;
        }
        let coupling = big_g.scale(2.0 * k / n);
        let op = |d: &ScalarField| bg.chern_laplacian(d).sub(&coupling.mul(d));
        let sys = BorderedSystem {
            grid,
            op: &op,
            cols: vec![big_g.scale(-1.0), one.scale(-1.0)],
            rows: vec![big_g.scale(2.0 / n).mul(&dens), dens.clone()],
            corner: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            sigma: 0.0,
        };
        let (dv, ds, _) = sys
            .solve(&field.scale(-1.0), &[-c1, -c2], DEFAULT_LINEAR_TOL)
            .map_err(|_| Error::JacobianSingular { t: 1.0 })?;
        v = v.add(&dv);
        k += ds[0];
        mu += ds[1];
    }
    let residual = bg
        .chern_laplacian(&v)
        .sub(&problem.big_g(&v).scale(k))
        .shift(-mu)
        .l2();
    Err(Error::MaxIters {
        iterations: opts.newton_max,
        residual,
    })
}

/// `u = v + γ` with `γ = (n/2)·log(−2λ/n)`.
pub fn recover_solution(state: &VariationalState, n: usize) -> Result<ScalarField> {
    if !(state.lambda < 0.0) {
        return Err(Error::NonNegativeMultiplier(state.lambda));
    }
    let nf = n as f64;
    Ok(state.v.shift(nf / 2.0 * (-2.0 * state.lambda / nf).ln()))
}

/// Hypothesis check, feasible start, minimization and recovery.
pub fn solve_balanced(
    bg: &HermitianBackground,
    g: &ScalarField,
    opts: &SolveOptions,
) -> Result<(ScalarField, VariationalState)> {
    let phi0 = initial_feasible(bg, g)?;
    let state = minimize_energy(bg, g, &phi0, opts)?;
    let u = recover_solution(&state, bg.grid().n())?;
    Ok((u, state))
}
