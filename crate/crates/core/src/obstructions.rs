//! Necessary conditions for realizability when the degree is negative, the
//! `c(g)` upper bound, and a generator of functions that pass the integral
//! condition yet are not realizable.
//!
//! Every checker takes a constant-curvature background (curvature `s < 0`,
//! as produced by the constant-curvature normalization) and writes `s` in
//! place of the degree. On such a background the linear equation
//!
//! ```text
//! Δ^Ch ψ − (2/n)·s·ψ = −(2/n)·g
//! ```
//!
//! is uniquely solvable and, for realizable `g`, has a positive solution
//! (the conformal factor `exp(−2u/n)` of the solution is one).

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::grid::{gradient, ScalarField};
use crate::hermitian::HermitianBackground;
use crate::linear::DEFAULT_LINEAR_TOL;

const CONSTANT_TOL: f64 = 1e-6;
const ROUNDING_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    NotRealizable,
    Unknown,
    TriviallyRealizable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObstructionReport {
    pub gamma: f64,
    pub star_value: f64,
    pub star_pass: bool,
    pub psi_min: f64,
    pub psi_pass: bool,
    /// `None` when the integral condition fails and the bound is undefined.
    #[serde(serialize_with = "serialize_extended")]
    pub c_upper: Option<f64>,
    pub verdict: Verdict,
}

/// JSON has no infinities; `-inf` is written as a string.
fn serialize_extended<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        None => s.serialize_none(),
        Some(x) if x.is_finite() => s.serialize_f64(*x),
        Some(x) if *x < 0.0 => s.serialize_str("-inf"),
        Some(_) => s.serialize_str("inf"),
    }
}

/// The constant curvature of `bg`, or `WrongRegime` if it is not a negative constant.
pub fn constant_curvature(bg: &HermitianBackground) -> Result<f64> {
    let s = bg.scalar_curvature();
    let value = s.mean();
    let spread = s.max() - s.min();
    if spread > CONSTANT_TOL {
        return Err(Error::WrongRegime(format!(
            "curvature is not constant (oscillation {spread:e})"
        )));
    }
    if value >= 0.0 {
        return Err(Error::WrongRegime(format!(
            "curvature {value} is not negative"
        )));
    }
    Ok(value)
}

/// `(∫ g f₀ dV, ∫ g f₀ dV < 0)`. Values within rounding of zero, relative
/// to `∫ |g| f₀ dV`, count as zero.
pub fn check_star(bg: &HermitianBackground, g: &ScalarField) -> Result<(f64, bool)> {
    constant_curvature(bg)?;
    let f0 = bg.eccentricity()?;
    let value = bg.integrate(&g.mul(&f0));
    let scale = bg.integrate(&g.map(f64::abs).mul(&f0));
    Ok((value, value < -ROUNDING_TOL * scale))
}

/// Solves the ψ-equation and reports `(ψ, min ψ, min ψ > 0)`.
pub fn positivity_test(
    bg: &HermitianBackground,
    g: &ScalarField,
) -> Result<(ScalarField, f64, bool)> {
    let s = constant_curvature(bg)?;
    let n = bg.grid().n_f64();
    let shift = ScalarField::constant(*g.grid(), -2.0 * s / n);
    let psi = bg.solve_shifted(&shift, &g.scale(-2.0 / n), DEFAULT_LINEAR_TOL)?;
    let min = psi.min();
    Ok((psi, min, min > 0.0))
}

/// Upper bound for `c(g)`, the infimum of constants `c` for which
/// `Δ^Ch u + s − g·exp(2u/n) = c·exp(2u/n)` has no solution for larger `c`.
///
/// With `m = ∫ g f₀ dV / Vol` and `Δ^Ch φ = (2/n)(m − g)`, the function
/// `v = φ + a` turns `−(n/2)·log v` into a supersolution once
/// `a ≥ max{−(n/m)·|dφ|² − φ}`, giving the bound `m / (2·max v)`. A constant `φ`
/// makes the bound vacuous and `−∞` is returned.
pub fn c_upper_bound(bg: &HermitianBackground, g: &ScalarField) -> Result<f64> {
    let (star, pass) = check_star(bg, g)?;
    if !pass {
        return Err(Error::StarViolated { value: star });
    }
    let n = bg.grid().n_f64();
    let m = star / bg.volume();
    let rhs = g.scale(-1.0).shift(m).scale(2.0 / n);
    let phi = bg.solve_poisson(&rhs)?;
    let dphi = gradient(&phi);
    let grad_sq = bg.pair(&dphi, &dphi);
    let a = grad_sq.scale(-n / m).sub(&phi).max();
    let top = phi.shift(a).max();
    if top <= 1e-12 * (1.0 + a.abs()) {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(m / (2.0 * top))
}

/// Builds `g` that passes the integral condition but fails the ψ-test.
///
/// `ψ = ψ′ + k` is centred so that `∫ ψ f₀ dV = 0`; with `a = −½·min ψ` the
/// function `ψ + a` changes sign and
/// `g = (n/2)·(−Δ^Ch ψ + (2/n)·s·(ψ + a))` makes it the ψ-solution. Returns
/// `(g, ψ + a)`.
pub fn make_counterexample(
    bg: &HermitianBackground,
    psi_prime: &ScalarField,
) -> Result<(ScalarField, ScalarField)> {
    let s = constant_curvature(bg)?;
    if psi_prime.max() - psi_prime.min() <= 1e-10 {
        return Err(Error::ConstantInput);
    }
    let n = bg.grid().n_f64();
    let f0 = bg.eccentricity()?;
    let vol = bg.volume();
    let k = -bg.integrate(&psi_prime.mul(&f0)) / vol;
    let psi = psi_prime.shift(k);
    let a = -0.5 * psi.min();
    let certificate = psi.shift(a);
    let g = bg
        .chern_laplacian(&psi)
        .scale(-1.0)
        .add(&certificate.scale(2.0 * s / n))
        .scale(n / 2.0);

    let star = bg.integrate(&g.mul(&f0));
    let expected = s * a * vol;
    if (star - expected).abs() > 1e-9 * (1.0 + expected.abs()) {
        return Err(Error::DegenerateKernel(format!(
            "counterexample integral {star} differs from {expected}"
        )));
    }
    Ok((g, certificate))
}

/// Transports a solution for `g` into one for `λ·g`: `u − (n/2)·log λ`.
pub fn scaling_transport(u: &ScalarField, lambda: f64, n: usize) -> Result<ScalarField> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::NonPositiveScale(lambda));
    }
    Ok(u.shift(-(n as f64) / 2.0 * lambda.ln()))
}

/// Runs the full ladder on a constant-curvature background.
pub fn obstruction_report(bg: &HermitianBackground, g: &ScalarField) -> Result<ObstructionReport> {
    let (star_value, star_pass) = check_star(bg, g)?;
    let (_, psi_min, psi_pass) = positivity_test(bg, g)?;
    let c_upper = if star_pass {
        Some(c_upper_bound(bg, g)?)
    } else {
        None
    };
    let nonpositive = g.max() <= 0.0 && g.min() < 0.0;
    let verdict = if !star_pass || !psi_pass {
        Verdict::NotRealizable
    } else if nonpositive {
        Verdict::TriviallyRealizable
    } else {
        Verdict::Unknown
    };
    Ok(ObstructionReport {
        gamma: bg.gauduchon_degree()?,
        star_value,
        star_pass,
        psi_min,
        psi_pass,
        c_upper,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{OneFormField, TorusGrid};
    use std::f64::consts::PI;

    fn grid() -> TorusGrid {
        TorusGrid::new(2, 32, 2).unwrap()
    }

    fn cos1(g: TorusGrid) -> ScalarField {
        ScalarField::from_fn(g, |x| (2.0 * PI * x[0]).cos())
    }

    #[test]
    fn star_on_flat_background() {
        let g = grid();
        let bg = HermitianBackground::flat(g, -1.0);
        let (v, pass) = check_star(&bg, &ScalarField::constant(g, -1.0)).unwrap();
        assert!((v + 1.0).abs() < 1e-12 && pass);
        let (v, pass) = check_star(&bg, &cos1(g)).unwrap();
        assert!(v.abs() < 1e-14 && !pass);
    }

    #[test]
    fn wrong_regime_is_rejected() {
        let g = grid();
        let bg = HermitianBackground::flat(g, 0.5);
        assert!(matches!(
            check_star(&bg, &cos1(g)),
            Err(Error::WrongRegime(_))
        ));
        let wavy = HermitianBackground::new(OneFormField::zeros(g), cos1(g).shift(-1.0)).unwrap();
        assert!(matches!(
            positivity_test(&wavy, &cos1(g)),
            Err(Error::WrongRegime(_))
        ));
    }

    #[test]
    fn positivity_of_constant_target() {
        let g = grid();
        let bg = HermitianBackground::flat(g, -1.0);
        let (psi, min, pass) = positivity_test(&bg, &ScalarField::constant(g, -1.0)).unwrap();
        assert!(psi.shift(-1.0).max_abs() < 1e-10);
        assert!(pass && (min - 1.0).abs() < 1e-10);
    }

    #[test]
    fn c_bound_is_minus_infinity_for_constant_target() {
        let g = grid();
        let bg = HermitianBackground::flat(g, -1.0);
        let c = c_upper_bound(&bg, &ScalarField::constant(g, -1.0)).unwrap();
        assert_eq!(c, f64::NEG_INFINITY);
        assert!(matches!(
            c_upper_bound(&bg, &cos1(g)),
            Err(Error::StarViolated { .. })
        ));
    }

    #[test]
    fn c_bound_matches_hand_evaluation() {
        // Flat torus, s = −1, n = 2, g = −1 + 0.1 cos: m = −1 and
        // φ = −0.1 cos / (4π²), |dφ|² = (0.1/(2π))² sin², so
        // a = max{2(0.1/(2π))² sin² + 0.1 cos/(4π²)} and the bound is −1/(2·max(φ+a)).
        let g = grid();
        let bg = HermitianBackground::flat(g, -1.0);
        let target = cos1(g).scale(0.1).shift(-1.0);
        let got = c_upper_bound(&bg, &target).unwrap();

        let (mut a, mut top) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        let pts: Vec<f64> = (0..32).map(|i| i as f64 / 32.0).collect();
        let phi = |x: f64| -0.1 * (2.0 * PI * x).cos() / (4.0 * PI * PI);
        for &x in &pts {
            let s = (2.0 * PI * x).sin();
            a = a.max(2.0 * (0.1 / (2.0 * PI)).powi(2) * s * s - phi(x));
        }
        for &x in &pts {
            top = top.max(phi(x) + a);
        }
        let want = -1.0 / (2.0 * top);
        assert!(got < 0.0 && got.is_finite());
        assert!((got - want).abs() < 1e-9 * want.abs(), "{got} vs {want}");
    }

    #[test]
    fn c_bound_gives_a_supersolution() {
        // −(n/2)·log(φ + a + δ) must satisfy Δ^Ch u + s − g e^{2u/n} ≥ c e^{2u/n}
        // for c equal to the bound, small δ > 0 aside.
        let g = grid();
        let bg = HermitianBackground::flat(g, -1.0);
        let target = ScalarField::from_fn(g, |x| {
            -1.0 + 0.3 * (2.0 * PI * x[0]).cos() * (2.0 * PI * x[1]).sin()
        });
        let c = c_upper_bound(&bg, &target).unwrap();
        assert!(c.is_finite() && c < 0.0);
        let n = 2.0;
        let (star, _) = check_star(&bg, &target).unwrap();
        let m = star / bg.volume();
        let phi = bg
            .solve_poisson(&target.scale(-1.0).shift(m).scale(2.0 / n))
            .unwrap();
        let dphi = gradient(&phi);
        let a = bg.pair(&dphi, &dphi).scale(-n / m).sub(&phi).max();
        let v = phi.shift(a + 1e-9);
        let u = v.map(|x| -n / 2.0 * x.ln());
        let e = u.exp_scaled(2.0 / n);
        let lhs = bg.chern_laplacian(&u).shift(-1.0).sub(&target.mul(&e));
        let slack = lhs.sub(&e.scale(c));
        assert!(slack.min() > -1e-6, "min slack {}", slack.min());
    }

    #[test]
    fn counterexample_for_cosine_profile() {
        let g = grid();
        let bg = HermitianBackground::flat(g, -1.0);
        let (target, cert) = make_counterexample(&bg, &cos1(g)).unwrap();
        // Closed form: ψ = cos, a = ½, g = −(4π² + 1)·cos − ½.
        let want = cos1(g).scale(-(4.0 * PI * PI + 1.0)).shift(-0.5);
        assert!(target.sub(&want).max_abs() < 1e-9);
        let (star, pass) = check_star(&bg, &target).unwrap();
        assert!(pass && (star + 0.5).abs() < 1e-9);
        let (psi, min, ok) = positivity_test(&bg, &target).unwrap();
        assert!(!ok && min <= 0.0);
        assert!(psi.sub(&cert).max_abs() < 1e-8);
        assert!(matches!(
            make_counterexample(&bg, &ScalarField::constant(g, 3.0)),
            Err(Error::ConstantInput)
        ));
        let rep = obstruction_report(&bg, &target).unwrap();
        assert_eq!(rep.verdict, Verdict::NotRealizable);
    }

    #[test]
    fn scaling_transport_laws() {
        let g = grid();
        let u = cos1(g);
        assert_eq!(scaling_transport(&u, 1.0, 2).unwrap(), u);
        let a = scaling_transport(&scaling_transport(&u, 2.0, 3).unwrap(), 5.0, 3).unwrap();
        let b = scaling_transport(&u, 10.0, 3).unwrap();
        assert!(a.sub(&b).max_abs() < 1e-14);
        assert!(matches!(
            scaling_transport(&u, 0.0, 2),
            Err(Error::NonPositiveScale(_))
        ));

        let bg = HermitianBackground::flat(g, -1.0);
        let moved = scaling_transport(&ScalarField::zeros(g), 2.0, 2).unwrap();
        let r = bg
            .prescribed_residual(&ScalarField::constant(g, -2.0), &moved)
            .unwrap();
        assert!(r < 1e-9);
    }

    #[test]
    fn report_serializes_infinite_bound() {
        let g = grid();
        let bg = HermitianBackground::flat(g, -1.0);
        let rep = obstruction_report(&bg, &ScalarField::constant(g, -1.0)).unwrap();
        assert_eq!(rep.verdict, Verdict::TriviallyRealizable);
        let json = serde_json::to_string(&rep).unwrap();
        assert!(json.contains("\"c_upper\":\"-inf\""), "{json}");
    }
}
