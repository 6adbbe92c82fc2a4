//! JSON run configurations and textual field descriptions.
//!
//! A field is either a bare number, a constant plus a list of Fourier terms,
//! or a CSV dump produced by [`crate::io::write_csv`]:
//!
//! ```json
//! -1.0
//! {"constant": -0.1, "terms": [{"amplitude": 1.0, "kvec": [1, 0], "phase": "cos"}]}
//! {"file": "g.csv"}
//! ```
//!
//! A term contributes `amplitude·cos(2π k·x)` or `amplitude·sin(2π k·x)`.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{OneFormField, ScalarField, TorusGrid};
use crate::hermitian::HermitianBackground;
use crate::io::read_csv;
use crate::solve_negative::SolveOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Cos,
    Sin,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub amplitude: f64,
    pub kvec: Vec<i64>,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierSpec {
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub terms: Vec<Term>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSpec {
    pub file: PathBuf,
}

/// Unknown keys are rejected in every form, so a misspelt `file` cannot pass
/// as an empty Fourier sum.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum FieldSpec {
    Constant(f64),
    File(FileSpec),
    Fourier(FourierSpec),
}

impl FieldSpec {
    pub fn zero() -> Self {
        FieldSpec::Constant(0.0)
    }

    /// Samples the field on `grid`; relative file paths resolve against `base`.
    pub fn evaluate(&self, grid: TorusGrid, base: &Path) -> Result<ScalarField> {
        match self {
            FieldSpec::Constant(c) => Ok(ScalarField::constant(grid, *c)),
            FieldSpec::Fourier(FourierSpec { constant, terms }) => {
                for t in terms {
                    check_mode(grid, &t.kvec)?;
                }
                let terms = terms.clone();
                let constant = *constant;
                Ok(ScalarField::from_fn(grid, move |x| {
                    constant
                        + terms
                            .iter()
                            .map(|t| {
                                let arg: f64 = t
                                    .kvec
                                    .iter()
                                    .zip(x)
                                    .map(|(k, xi)| *k as f64 * xi)
                                    .sum::<f64>()
                                    * 2.0
                                    * PI;
                                t.amplitude
                                    * match t.phase {
                                        Phase::Cos => arg.cos(),
                                        Phase::Sin => arg.sin(),
                                    }
                            })
                            .sum::<f64>()
                }))
            }
            FieldSpec::File(FileSpec { file }) => {
                let path = if file.is_absolute() {
                    file.clone()
                } else {
                    base.join(file)
                };
                let text = std::fs::read_to_string(&path).map_err(|e| {
                    Error::Config(format!("cannot read field file {}: {e}", path.display()))
                })?;
                read_csv(&text, grid)
            }
        }
    }

    /// `cos(2πx₁)` on a `d`-dimensional grid.
    pub fn first_cosine(d: usize) -> Self {
        let mut kvec = vec![0; d];
        kvec[0] = 1;
        FieldSpec::Fourier(FourierSpec {
            constant: 0.0,
            terms: vec![Term {
                amplitude: 1.0,
                kvec,
                phase: Phase::Cos,
            }],
        })
    }

    pub fn is_file(&self) -> bool {
        matches!(self, FieldSpec::File(_))
    }
}

fn check_mode(grid: TorusGrid, kvec: &[i64]) -> Result<()> {
    if kvec.len() != grid.dim() {
        return Err(Error::Config(format!(
            "kvec {kvec:?} has {} entries, grid has d = {}",
            kvec.len(),
            grid.dim()
        )));
    }
    let half = (grid.n_pts() / 2) as i64;
    if kvec.iter().any(|k| k.abs() >= half) {
        return Err(Error::UnresolvedMode {
            kvec: kvec.to_vec(),
            n_pts: grid.n_pts(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub d: usize,
    #[serde(rename = "N")]
    pub n_pts: usize,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub grid: GridSpec,
    /// One spec per axis; all zero when absent.
    #[serde(default)]
    pub theta0: Option<Vec<FieldSpec>>,
    #[serde(rename = "S0")]
    pub s0: FieldSpec,
    #[serde(default)]
    pub potential: Option<FieldSpec>,
    pub g: FieldSpec,
    /// Candidate solution for `verify`.
    #[serde(default)]
    pub u: Option<FieldSpec>,
    /// Profile for `counterexample`; `cos(2πx₁)` when absent.
    #[serde(default)]
    pub psi_prime: Option<FieldSpec>,
    #[serde(default)]
    pub solver: SolveOptions,
}

/// A configuration with every field sampled on its grid.
#[derive(Debug, Clone)]
pub struct Parsed {
    pub config: Config,
    pub grid: TorusGrid,
    pub background: HermitianBackground,
    pub g: ScalarField,
    pub options: SolveOptions,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// The background and `g` sampled on `grid`, which may differ from the
    /// configured one as long as no field comes from a file.
    pub fn build(
        &self,
        grid: TorusGrid,
        base: &Path,
    ) -> Result<(HermitianBackground, ScalarField)> {
        let theta = match &self.theta0 {
            None => OneFormField::zeros(grid),
            Some(specs) => {
                if specs.len() != grid.dim() {
                    return Err(Error::Config(format!(
                        "theta0 has {} components, grid has d = {}",
                        specs.len(),
                        grid.dim()
                    )));
                }
                let comps = specs
                    .iter()
                    .map(|s| s.evaluate(grid, base))
                    .collect::<Result<Vec<_>>>()?;
                OneFormField::new(grid, comps)?
            }
        };
        let s0 = self.s0.evaluate(grid, base)?;
        let mut bg = HermitianBackground::new(theta, s0)?;
        if let Some(p) = &self.potential {
            bg = bg.with_potential(p.evaluate(grid, base)?)?;
        }
        let g = self.g.evaluate(grid, base)?;
        Ok((bg, g))
    }

    pub fn uses_files(&self) -> bool {
        let mut all: Vec<&FieldSpec> = vec![&self.s0, &self.g];
        all.extend(self.theta0.iter().flatten());
        all.extend(self.potential.iter());
        all.iter().any(|s| s.is_file())
    }
}

/// Parses and samples a configuration. `base` anchors relative file paths.
pub fn parse_config(text: &str, base: &Path) -> Result<Parsed> {
    let config = Config::from_json(text)?;
    let gs = config.grid;
    let grid = TorusGrid::new(gs.d, gs.n_pts, gs.n)?;
    config.solver.validate()?;
    let (background, g) = config.build(grid, base)?;
    Ok(Parsed {
        options: config.solver,
        config,
        grid,
        background,
        g,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "grid": {"d": 2, "N": 32, "n": 2},
        "S0": -1.0,
        "g": {"terms": [{"amplitude": 1.0, "kvec": [1, 0], "phase": "cos"}]}
    }"#;

    #[test]
    fn minimal_config() {
        let p = parse_config(MINIMAL, Path::new(".")).unwrap();
        assert_eq!(p.grid.n_pts(), 32);
        assert!((p.background.gauduchon_degree().unwrap() + 1.0).abs() < 1e-12);
        let want = ScalarField::from_fn(p.grid, |x| (2.0 * PI * x[0]).cos());
        assert!(p.g.sub(&want).max_abs() < 1e-15);
        assert_eq!(p.options, SolveOptions::default());
    }

    #[test]
    fn unresolved_mode() {
        let text = MINIMAL.replace("[1, 0]", "[16, 0]");
        assert!(matches!(
            parse_config(&text, Path::new(".")),
            Err(Error::UnresolvedMode { n_pts: 32, .. })
        ));
    }

    #[test]
    fn schema_errors_name_the_problem() {
        let text = MINIMAL.replace("\"S0\"", "\"S_0\"");
        let err = parse_config(&text, Path::new(".")).unwrap_err().to_string();
        assert!(err.contains("line"), "{err}");
        let text = MINIMAL.replace("\"N\": 32", "\"N\": 30");
        assert!(matches!(
            parse_config(&text, Path::new(".")),
            Err(Error::InvalidGrid(_))
        ));
    }

    #[test]
    fn sine_phase_and_constant() {
        let spec: FieldSpec = serde_json::from_str(
            r#"{"constant": 0.5, "terms": [{"amplitude": 2.0, "kvec": [0, 3], "phase": "sin"}]}"#,
        )
        .unwrap();
        let grid = TorusGrid::new(2, 16, 2).unwrap();
        let f = spec.evaluate(grid, Path::new(".")).unwrap();
        let want = ScalarField::from_fn(grid, |x| 0.5 + 2.0 * (6.0 * PI * x[1]).sin());
        assert!(f.sub(&want).max_abs() < 1e-14);
    }

    #[test]
    fn field_forms_reject_unknown_keys() {
        let file: FieldSpec = serde_json::from_str(r#"{"file": "u.csv"}"#).unwrap();
        assert!(file.is_file());
        assert!(serde_json::from_str::<FieldSpec>(r#"{"fiel": "u.csv"}"#).is_err());
        assert!(
            serde_json::from_str::<FieldSpec>(r#"{"constant": 1.0, "file": "u.csv"}"#).is_err()
        );
        let empty: FieldSpec = serde_json::from_str("{}").unwrap();
        assert_eq!(empty, FieldSpec::Fourier(FourierSpec::default()));
    }
}
