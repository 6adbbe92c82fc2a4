//! Command dispatch for the `pcsc` binary.
//!
//! Every command produces one JSON report. Exit codes: 0 on success, 2 when
//! the prescribed `g` is certified not to be realizable, 3 when the answer is
//! unknown or a solver failed. Configuration and I/O problems surface as
//! [`Error`]s and map to exit code 1 in the binary.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::config::{parse_config, FieldSpec, GridSpec, Parsed};
use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::hermitian::HermitianBackground;
use crate::io::{write_csv, write_pgm};
use crate::mms::{convergence_table, Manufactured, MmsTable};
use crate::obstructions::{make_counterexample, obstruction_report, ObstructionReport, Verdict};
use crate::solve_negative::{continuity_solve, solve_nonpositive, yamabe_normalize};
use crate::solve_positive::local_solve;
use crate::solve_zero::{solve_balanced, VariationalState};

/// `|Γ|` below this counts as zero degree.
pub const ZERO_DEGREE_TOL: f64 = 1e-10;
pub const DEFAULT_TOL: f64 = 1e-6;
const FLAG_TOL: f64 = 1e-8;
const CLOSURE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Analyze,
    Solve,
    Verify,
    Counterexample,
    Mms,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Analyze => "analyze",
            Command::Solve => "solve",
            Command::Verify => "verify",
            Command::Counterexample => "counterexample",
            Command::Mms => "mms",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    Negative,
    Zero,
    Positive,
}

impl Regime {
    pub fn classify(gamma: f64) -> Self {
        if gamma.abs() <= ZERO_DEGREE_TOL {
            Regime::Zero
        } else if gamma < 0.0 {
            Regime::Negative
        } else {
            Regime::Positive
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    /// Existence is guaranteed by a sufficient condition, or the command succeeded.
    Ok,
    NotRealizable,
    Unknown,
    Failed,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::NotRealizable => 2,
            Status::Unknown | Status::Failed => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub ok: bool,
}

fn check(name: &str, ok: bool) -> Check {
    Check {
        name: name.to_string(),
        ok,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl Stats {
    fn of(f: &ScalarField) -> Self {
        Self {
            min: f.min(),
            max: f.max(),
            mean: f.mean(),
        }
    }
}

/// Zero-degree data measured on the curvature-free metric of the class.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZeroAnalysis {
    /// `∫ g f₀ dV` on the curvature-free metric; must be negative.
    pub star_value: f64,
    /// `star_value` is negative beyond quadrature rounding.
    pub star_pass: bool,
    pub changes_sign: bool,
    /// The curvature-free metric is balanced and the sufficient conditions hold.
    pub hypotheses: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Meta {
    pub version: String,
    pub timestamp: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub command: String,
    pub grid: GridSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regime: Option<Regime>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gauduchon: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub balanced: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eccentricity: Option<Stats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub obstruction: Option<ObstructionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zero: Option<ZeroAnalysis>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_shift: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variational: Option<VariationalState>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mms: Option<MmsTable>,
    pub bounds_checked: Vec<Check>,
    pub field_outputs: Vec<String>,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub meta: Option<Meta>,
}

impl SolveReport {
    fn new(command: Command, grid: GridSpec) -> Self {
        Self {
            command: command.name().to_string(),
            grid,
            gamma: None,
            regime: None,
            gauduchon: None,
            balanced: None,
            eccentricity: None,
            obstruction: None,
            zero: None,
            solver: None,
            iterations: None,
            residual: None,
            tolerance: None,
            lambda: None,
            gamma_shift: None,
            variational: None,
            mms: None,
            bounds_checked: Vec::new(),
            field_outputs: Vec::new(),
            status: Status::Ok,
            message: None,
            exit_code: 0,
            meta: None,
        }
    }

    fn fail(&mut self, status: Status, message: impl Into<String>) {
        self.status = status;
        self.message = Some(message.into());
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports contain only serializable data")
    }
}

#[derive(Debug, Clone)]
pub struct RunArgs {
    pub command: Command,
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub tol: Option<f64>,
    pub no_meta: bool,
}

/// Fields produced by a command, written to the output directory by name.
type Emitted = Vec<(&'static str, ScalarField)>;

/// Runs one command. Solver failures are recorded in the report; only
/// configuration and I/O problems are returned as errors.
pub fn run(args: &RunArgs) -> Result<SolveReport> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let base = args
        .config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    run_text(args, &text, &base)
}

/// [`run`] on configuration text already in memory.
pub fn run_text(args: &RunArgs, text: &str, base: &Path) -> Result<SolveReport> {
    let tol = args.tol.unwrap_or(DEFAULT_TOL);
    if !(tol > 0.0) {
        return Err(Error::Config(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let parsed = parse_config(text, base)?;
    let mut report = SolveReport::new(args.command, parsed.config.grid);
    let mut emitted: Emitted = Vec::new();
    if let Err(e) = dispatch(args.command, &parsed, base, tol, &mut report, &mut emitted) {
        report.fail(Status::Failed, e.to_string());
    }
    // Never claim success without a residual below tolerance when a field was solved for.
    if report.status == Status::Ok {
        if let Some(r) = report.residual {
            if !(r < tol) {
                report.fail(
                    Status::Failed,
                    format!("residual {r:e} exceeds tolerance {tol:e}"),
                );
            }
        }
    }
    report.exit_code = report.status.exit_code();
    if !args.no_meta {
        report.meta = Some(Meta {
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        });
    }
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
        for (name, field) in &emitted {
            std::fs::write(dir.join(format!("{name}.csv")), write_csv(field))?;
            report.field_outputs.push(format!("{name}.csv"));
            if field.grid().dim() == 2 {
                std::fs::write(dir.join(format!("{name}.pgm")), write_pgm(field)?)?;
                report.field_outputs.push(format!("{name}.pgm"));
            }
        }
        std::fs::write(dir.join("report.json"), report.to_json() + "\n")?;
    }
    Ok(report)
}

fn dispatch(
    command: Command,
    p: &Parsed,
    base: &Path,
    tol: f64,
    report: &mut SolveReport,
    emitted: &mut Emitted,
) -> Result<()> {
    let bg = &p.background;
    let gamma = bg.gauduchon_degree()?;
    let regime = Regime::classify(gamma);
    report.gamma = Some(gamma);
    report.regime = Some(regime);
    match command {
        Command::Analyze => analyze(p, regime, report),
        Command::Solve => solve(p, regime, tol, report, emitted),
        Command::Verify => {
            let spec = p
                .config
                .u
                .as_ref()
                .ok_or_else(|| Error::Config("verify needs a `u` field".into()))?;
            let u = spec.evaluate(p.grid, base)?;
            finish_solution(bg, &p.g, &u, tol, report);
            emitted.push(("u", u));
            Ok(())
        }
        Command::Counterexample => counterexample(p, base, regime, report, emitted),
        Command::Mms => {
            let table = convergence_table(&p.config, base, &Manufactured::default())?;
            report.solver = Some(
                match table.regime {
                    Regime::Negative => "continuity",
                    Regime::Zero => "variational",
                    Regime::Positive => "local_newton",
                }
                .to_string(),
            );
            if !table.pass {
                report.fail(Status::Failed, "error ratio below 10 for some doubling");
            }
            report
                .bounds_checked
                .push(check("spectral_rate", table.pass));
            report.mms = Some(table);
            Ok(())
        }
    }
}

/// Constant-curvature background for a negative degree and the exponent to it.
fn negative_ladder(
    p: &Parsed,
    report: &mut SolveReport,
) -> Result<(HermitianBackground, ScalarField)> {
    let (bc, to_c) = yamabe_normalize(&p.background, &p.options)?;
    let obstruction = obstruction_report(&bc, &p.g)?;
    report.obstruction = Some(obstruction);
    Ok((bc, to_c))
}

/// Curvature-free metric of a zero-degree class and the exponent to it.
fn zero_ladder(p: &Parsed, report: &mut SolveReport) -> Result<(HermitianBackground, ScalarField)> {
    let (eta, to_eta) = p.background.gauduchon_normalize()?;
    let w = eta.solve_poisson(&eta.scalar_curvature().scale(-1.0))?;
    let flat = eta.conformal_change(&w)?;
    let s = flat.scalar_curvature().max_abs();
    if s >= FLAG_TOL {
        return Err(Error::DegenerateKernel(format!(
            "curvature-free metric not reached (sup curvature {s:e})"
        )));
    }
    let g = &p.g;
    let f0 = flat.eccentricity()?;
    let star_value = flat.integrate(&g.mul(&f0));
    let changes_sign = g.min() < 0.0 && g.max() > 0.0;
    let star_pass = star_value < -1e-12 * flat.integrate(&g.map(f64::abs).mul(&f0));
    let hypotheses = flat.is_balanced(FLAG_TOL) && changes_sign && star_pass;
    report.zero = Some(ZeroAnalysis {
        star_value,
        star_pass,
        changes_sign,
        hypotheses,
    });
    Ok((flat, to_eta.add(&w)))
}

/// Classification shared by `analyze` and `solve`.
fn verdict(p: &Parsed, regime: Regime, report: &SolveReport) -> Verdict {
    let g = &p.g;
    match regime {
        Regime::Negative => report
            .obstruction
            .as_ref()
            .map_or(Verdict::Unknown, |o| o.verdict),
        Regime::Zero => {
            let z = report.zero.as_ref().expect("zero analysis ran");
            if g.max_abs() == 0.0 {
                Verdict::TriviallyRealizable
            } else if !z.changes_sign || !z.star_pass {
                Verdict::NotRealizable
            } else if z.hypotheses {
                Verdict::TriviallyRealizable
            } else {
                Verdict::Unknown
            }
        }
        Regime::Positive if g.max() <= 0.0 => Verdict::NotRealizable,
        Regime::Positive => Verdict::Unknown,
    }
}

fn analyze(p: &Parsed, regime: Regime, report: &mut SolveReport) -> Result<()> {
    let bg = &p.background;
    report.gauduchon = Some(bg.is_gauduchon(FLAG_TOL));
    report.balanced = Some(bg.is_balanced(FLAG_TOL));
    report.eccentricity = Some(Stats::of(&bg.eccentricity()?));
    match regime {
        Regime::Negative => {
            negative_ladder(p, report)?;
        }
        Regime::Zero => {
            zero_ladder(p, report)?;
        }
        Regime::Positive => {}
    }
    match verdict(p, regime, report) {
        Verdict::NotRealizable => {
            report.fail(Status::NotRealizable, "necessary condition violated")
        }
        Verdict::Unknown => report.fail(Status::Unknown, "no sufficient condition applies"),
        Verdict::TriviallyRealizable => {}
    }
    Ok(())
}

fn solve(
    p: &Parsed,
    regime: Regime,
    tol: f64,
    report: &mut SolveReport,
    emitted: &mut Emitted,
) -> Result<()> {
    let bg = &p.background;
    let g = &p.g;
    let opts = &p.options;
    let u = match regime {
        Regime::Negative => {
            let (bc, to_c) = negative_ladder(p, report)?;
            if verdict(p, regime, report) == Verdict::NotRealizable {
                report.fail(Status::NotRealizable, "necessary condition violated");
                return Ok(());
            }
            if g.max() <= 0.0 {
                let out = solve_nonpositive(bg, g, opts)?;
                report.solver = Some("monotone".into());
                report.iterations = Some(out.iterations);
                report
                    .bounds_checked
                    .push(check("monotone_nondecreasing", out.min_increment >= -1e-10));
                out.u
            } else {
                let out = continuity_solve(&bc, g, opts)?;
                report.solver = Some("continuity".into());
                report.iterations = Some(out.newton_iterations);
                if let Some(ok) = out.bounds_ok {
                    report.bounds_checked.push(check("maximum_principle", ok));
                }
                to_c.add(&out.u)
            }
        }
        Regime::Zero => {
            let (flat, to_flat) = zero_ladder(p, report)?;
            match verdict(p, regime, report) {
                Verdict::NotRealizable => {
                    report.fail(Status::NotRealizable, "necessary condition violated");
                    return Ok(());
                }
                Verdict::Unknown => {
                    report.fail(
                        Status::Unknown,
                        "no solver for non-balanced zero-degree classes",
                    );
                    return Ok(());
                }
                Verdict::TriviallyRealizable => {}
            }
            report.solver = Some("variational".into());
            let (u, state) = solve_balanced(&flat, g, opts)?;
            report.iterations = Some(state.descent_steps + state.newton_steps);
            report.lambda = Some(state.lambda);
            report.gamma_shift = Some(state.gamma);
            report
                .bounds_checked
                .push(check("lambda_negative", state.lambda < 0.0));
            report.variational = Some(state);
            to_flat.add(&u)
        }
        Regime::Positive => {
            if verdict(p, regime, report) == Verdict::NotRealizable {
                report.fail(Status::NotRealizable, "g must be positive somewhere");
                return Ok(());
            }
            let (eta, to_eta) = bg.gauduchon_normalize()?;
            report.solver = Some("local_newton".into());
            let out = local_solve(&eta, g, None, opts)?;
            report.iterations = Some(out.newton_iterations);
            to_eta.add(&out.u)
        }
    };
    finish_solution(bg, g, &u, tol, report);
    emitted.push(("u", u));
    Ok(())
}

/// Residual, degree identity and status for a candidate solution.
fn finish_solution(
    bg: &HermitianBackground,
    g: &ScalarField,
    u: &ScalarField,
    tol: f64,
    report: &mut SolveReport,
) {
    let residual = bg.prescribed_residual(g, u).unwrap_or(f64::NAN);
    report.residual = Some(residual);
    report.tolerance = Some(tol);
    report
        .bounds_checked
        .push(check("residual_below_tolerance", residual < tol));
    if let Ok((lhs, gamma)) = bg.degree_closure(g, u) {
        let rel = (lhs - gamma).abs() / gamma.abs().max(1.0);
        report
            .bounds_checked
            .push(check("degree_closure", rel < CLOSURE_TOL));
    }
    if !(residual < tol) {
        report.fail(
            Status::Failed,
            format!("residual {residual:e} exceeds tolerance {tol:e}"),
        );
    }
}

fn counterexample(
    p: &Parsed,
    base: &Path,
    regime: Regime,
    report: &mut SolveReport,
    emitted: &mut Emitted,
) -> Result<()> {
    if regime != Regime::Negative {
        return Err(Error::WrongRegime(
            "counterexamples are generated for negative degree only".into(),
        ));
    }
    let (bc, _) = yamabe_normalize(&p.background, &p.options)?;
    let profile = match &p.config.psi_prime {
        Some(spec) => spec.evaluate(p.grid, base)?,
        None => FieldSpec::first_cosine(p.grid.dim()).evaluate(p.grid, base)?,
    };
    let (g, psi) = make_counterexample(&bc, &profile)?;
    let obstruction = obstruction_report(&bc, &g)?;
    report
        .bounds_checked
        .push(check("integral_condition_holds", obstruction.star_pass));
    report
        .bounds_checked
        .push(check("positivity_test_fails", !obstruction.psi_pass));
    let certified = obstruction.star_pass && obstruction.verdict == Verdict::NotRealizable;
    report.obstruction = Some(obstruction);
    if !certified {
        report.fail(
            Status::Failed,
            "generated g is not certified non-realizable",
        );
    }
    emitted.push(("g", g));
    emitted.push(("psi", psi));
    Ok(())
}
