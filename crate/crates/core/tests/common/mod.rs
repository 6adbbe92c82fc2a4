//! Helpers shared by the integration suites.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::PathBuf;
use std::process::Command;

use pcsc::grid::{OneFormField, ScalarField, TorusGrid};
use pcsc::hermitian::HermitianBackground;
use rand::rngs::StdRng;
use rand::Rng;

/// `(file, command, expected exit code)` for the fixture set.
pub const FIXTURES: [(&str, &str, i32); 9] = [
    ("neg_solve_constant.json", "solve", 0),
    ("neg_analyze_positive_mean.json", "analyze", 2),
    ("neg_analyze_sign_changing.json", "analyze", 3),
    ("zero_solve_shifted_cosine.json", "solve", 0),
    ("zero_analyze_cosine.json", "analyze", 2),
    ("zero_solve_starved.json", "solve", 3),
    ("pos_solve_small.json", "solve", 0),
    ("pos_analyze_negative_g.json", "analyze", 2),
    ("pos_solve_large.json", "solve", 3),
];

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

/// Runs the binary; returns (exit code, stdout).
pub fn pcsc(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_pcsc"))
        .args(args)
        .output()
        .expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8(out.stdout).expect("utf-8 report"),
    )
}

/// A few random Fourier modes with `|k_i| ≤ 2`, each of size at most `amp`.
pub fn random_field(rng: &mut StdRng, grid: TorusGrid, amp: f64) -> ScalarField {
    let d = grid.dim();
    let modes: Vec<(Vec<f64>, f64, f64)> = (0..4)
        .map(|_| {
            let k: Vec<f64> = (0..d).map(|_| rng.random_range(-2..=2) as f64).collect();
            (
                k,
                rng.random_range(-amp..amp) / 4.0,
                rng.random_range(0.0..2.0 * PI),
            )
        })
        .collect();
    ScalarField::from_fn(grid, move |x| {
        modes
            .iter()
            .map(|(k, a, ph)| {
                let arg: f64 = k.iter().zip(x).map(|(ki, xi)| ki * xi).sum();
                a * (2.0 * PI * arg + ph).cos()
            })
            .sum()
    })
}

pub fn random_form(rng: &mut StdRng, grid: TorusGrid, amp: f64) -> OneFormField {
    let comps = (0..grid.dim())
        .map(|_| random_field(rng, grid, amp))
        .collect();
    OneFormField::new(grid, comps).unwrap()
}

/// Random torsion, curvature and potential.
pub fn random_background(rng: &mut StdRng, grid: TorusGrid) -> HermitianBackground {
    let theta = random_form(rng, grid, 0.6);
    let s0 = random_field(rng, grid, 1.0).shift(rng.random_range(-1.0..1.0));
    let pot = random_field(rng, grid, 0.4);
    HermitianBackground::new(theta, s0)
        .unwrap()
        .with_potential(pot)
        .unwrap()
}

pub fn cos1(grid: TorusGrid) -> ScalarField {
    ScalarField::from_fn(grid, |x| (2.0 * PI * x[0]).cos())
}
