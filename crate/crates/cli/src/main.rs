//! `cavity`: trace particles, integrate resistance, optimize shapes and check
//! the Double Parabola theorems from the command line.
//!
//! JSON goes to stdout, CSV to `--out`. Exit codes: 0 success, 1 IO or
//! computation failure, 2 bad flags, 3 verification violations.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use cavity_core::analysis::{self, linspace, midpoints, stepped_range};
use cavity_core::optimize::SurveySpec;
use cavity_core::{
    body_resistance, census, AppendixConstants, census_csv, cavity_resistance_with, grid_census, make_double_parabola,
    make_flat, make_quadratic, make_rectangle, make_right_triangle, optimize_family, outer_angles,
    perimeter_ratio, scan_r_grid, scan_r_of_h, trace, verify_appendix_structure, verify_corollary,
    verify_theorem1, verify_theorem2, BodySpec, Cavity, EntryState, Family, Method, ObjectiveSpec,
    Face, QuadraticFamilyParams, QuadratureSpec, Rule, TheoremReport, TraceLimits,
};

#[derive(Debug, Parser)]
#[command(name = "cavity", version, about = "Billiards in cavities and the resistance of rough bodies")]
struct Cli {
    /// Worker threads for data-parallel loops (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Trace one particle; JSON summary on stdout, polyline CSV (x,y) to --out.
    Trace(TraceArgs),
    /// Integrate the mean resistance of a cavity.
    Resistance(ResistanceArgs),
    /// Maximize resistance over a shape family.
    Optimize(OptimizeArgs),
    /// Uniform random census of trajectories; CSV to --out.
    Census(CensusArgs),
    /// Check the Double Parabola theorems; exits 3 on any violation.
    Verify(VerifyArgs),
    /// Tabulate R over (h, beta) in the quadratic family.
    Scan(ScanArgs),
    /// Resistance of a disc faceted into identical cavities.
    Body(BodyArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ShapeKind {
    Flat,
    RightTriangle,
    Rectangle,
    DoubleParabola,
    Quadratic,
}

#[derive(Debug, Args)]
struct ShapeArgs {
    /// Built-in cavity.
    #[arg(long, value_enum, default_value = "double-parabola", conflicts_with = "shape_file")]
    shape: ShapeKind,
    /// Cavity JSON document (as written by the library's `Cavity::to_json`).
    #[arg(long, value_name = "PATH")]
    shape_file: Option<PathBuf>,
    /// Rectangle depth (opening width is 1).
    #[arg(long, default_value_t = 1.0)]
    depth: f64,
    /// Quadratic family height.
    #[arg(long, default_value_t = std::f64::consts::SQRT_2)]
    h: f64,
    /// Quadratic family slope at the opening.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    beta: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RuleArg {
    Midpoint,
    #[value(alias = "simpson-symmetric")]
    Simpson,
}

impl From<RuleArg> for Rule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::Midpoint => Rule::Midpoint,
            RuleArg::Simpson => Rule::SimpsonSymmetric,
        }
    }
}

#[derive(Debug, Args)]
struct TraceArgs {
    #[command(flatten)]
    shape: ShapeArgs,
    /// Entry abscissa in (-1/2, 1/2).
    #[arg(long, allow_negative_numbers = true)]
    x: f64,
    /// Entry angle, degrees unless --radians.
    #[arg(long, allow_negative_numbers = true)]
    phi: f64,
    /// Read and report angles in radians.
    #[arg(long)]
    radians: bool,
    #[arg(long, default_value_t = 1000)]
    max_reflections: usize,
    /// Polyline CSV (x,y) destination.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct QuadArgs {
    #[arg(long, value_enum, default_value = "midpoint")]
    rule: RuleArg,
    /// Subdivisions in both x and phi (overridden by --nx / --nphi).
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    nphi: Option<usize>,
}

impl QuadArgs {
    fn spec(&self) -> Result<QuadratureSpec> {
        QuadratureSpec::new(self.nx.unwrap_or(self.n), self.nphi.unwrap_or(self.n), self.rule.into())
            .map_err(|e| usage(e.to_string()))
    }
}

#[derive(Debug, Args)]
struct ResistanceArgs {
    #[command(flatten)]
    shape: ShapeArgs,
    #[command(flatten)]
    quad: QuadArgs,
    /// Reflection cap per trajectory; deep rectangles need a large one.
    #[arg(long, default_value_t = 1000)]
    max_reflections: usize,
}

#[derive(Debug, Args)]
struct OptimizeArgs {
    /// `quadratic` or `polyline-N` (N even).
    #[arg(long, default_value = "quadratic")]
    family: String,
    #[arg(long, value_enum, default_value = "nelder-mead")]
    method: MethodArg,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Evaluation budget per local search.
    #[arg(long, default_value_t = 500)]
    budget: usize,
    /// Seeded random starts.
    #[arg(long, default_value_t = 1)]
    starts: usize,
    /// Quadrature size during the search.
    #[arg(long, default_value_t = 400)]
    n: usize,
    /// Quadrature size for the reported final value.
    #[arg(long, default_value_t = 2000)]
    final_n: usize,
    /// Skip the coarse survey and use random starts only.
    #[arg(long)]
    no_survey: bool,
    /// Convergence trace CSV of the best run (params..., value).
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    NelderMead,
    PatternSearch,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::NelderMead => Method::NelderMead,
            MethodArg::PatternSearch => Method::PatternSearch,
        }
    }
}

#[derive(Debug, Args)]
struct CensusArgs {
    #[command(flatten)]
    shape: ShapeArgs,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Census CSV (x,phi,exit_phi,reflections,valid; radians).
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, ValueEnum)]
enum Suite {
    Theorems,
    Appendix,
    Corollary,
    All,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(flatten)]
    shape: ShapeArgs,
    #[arg(long, value_enum, default_value = "all")]
    suite: Suite,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Side of the deterministic grid added to the random census; 0 disables it.
    #[arg(long, default_value_t = 200)]
    grid: usize,
}

#[derive(Debug, Args)]
struct ScanArgs {
    /// Heights: `lo:hi:step`, `lo:hi:nCOUNT` or a single value.
    #[arg(long, value_parser = parse_range, default_value = "0.6:3:0.02")]
    h: Values,
    /// Slopes, same grammar; more than one value gives an (h, beta) grid.
    #[arg(long, value_parser = parse_range, default_value = "0", allow_hyphen_values = true)]
    beta: Values,
    #[arg(long, value_enum, default_value = "simpson")]
    rule: RuleArg,
    #[arg(long, default_value_t = 400)]
    n: usize,
    /// CSV: h,R or h,beta,R.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BodyArgs {
    #[arg(long)]
    cavities: usize,
    #[arg(long)]
    cavity_r: f64,
}

/// Bad flag combination: exit 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Parsed range flag.
#[derive(Debug, Clone)]
struct Values(Vec<f64>);

/// `lo:hi:step`, `lo:hi:nCOUNT` or a bare number.
fn parse_range(s: &str) -> Result<Values, String> {
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("'{t}' is not a number"));
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [v] => Ok(Values(vec![num(v)?])),
        [lo, hi, step] => {
            let (lo, hi) = (num(lo)?, num(hi)?);
            if let Some(count) = step.trim().strip_prefix('n') {
                let count: usize = count.parse().map_err(|_| format!("'{step}' is not a count"))?;
                if count == 0 || lo > hi {
                    return Err(format!("empty range '{s}'"));
                }
                Ok(Values(linspace(lo, hi, count)))
            } else {
                stepped_range(lo, hi, num(step)?).map(Values).map_err(|e| e.to_string())
            }
        }
        _ => Err(format!("'{s}' is not lo:hi:step")),
    }
}

fn load_shape(args: &ShapeArgs) -> Result<Cavity> {
    if let Some(path) = &args.shape_file {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        return Cavity::from_json(&text).map_err(|e| usage(format!("{}: {e}", path.display())));
    }
    let cavity = match args.shape {
        ShapeKind::Flat => make_flat(),
        ShapeKind::RightTriangle => make_right_triangle(),
        ShapeKind::DoubleParabola => make_double_parabola(),
        ShapeKind::Rectangle => make_rectangle(args.depth).map_err(|e| usage(e.to_string()))?,
        ShapeKind::Quadratic => {
            make_quadratic(QuadraticFamilyParams::new(args.h, args.beta)).map_err(|e| usage(e.to_string()))?
        }
    };
    Ok(cavity)
}

fn write_out(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn print_json(value: &Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("JSON values serialize"));
}

fn run_trace(args: TraceArgs) -> Result<u8> {
    let cavity = load_shape(&args.shape)?;
    let to_rad = |a: f64| if args.radians { a } else { a.to_radians() };
    let from_rad = |a: f64| if args.radians { a } else { a.to_degrees() };
    let entry = EntryState::new(args.x, to_rad(args.phi)).map_err(|e| usage(e.to_string()))?;
    let t = trace(&cavity, entry, TraceLimits::with_max_reflections(args.max_reflections));
    if let Some(path) = &args.out {
        let mut csv = String::from("x,y\n");
        for p in t.polyline() {
            csv.push_str(&format!("{},{}\n", p.x, p.y));
        }
        write_out(path, &csv)?;
    }
    print_json(&json!({
        "shape": cavity.name(),
        "x": args.x,
        "phi": args.phi,
        "units": if args.radians { "radians" } else { "degrees" },
        "exit_x": t.exit_x,
        "exit_phi": from_rad(t.exit_phi),
        "reflections": t.reflections,
        "faces": t.faces.iter().map(|f| f.to_string()).collect::<Vec<_>>(),
        "points": t.points.iter().map(|p| [p.x, p.y]).collect::<Vec<_>>(),
        "valid": t.valid(),
        "invalid": t.invalid,
    }));
    Ok(0)
}

fn run_resistance(args: ResistanceArgs) -> Result<u8> {
    let cavity = load_shape(&args.shape)?;
    let spec = args.quad.spec()?;
    if spec.rule == Rule::SimpsonSymmetric && !cavity.is_symmetric() {
        return Err(usage(format!("--rule simpson needs a mirror-symmetric cavity; '{}' is not", cavity.name())));
    }
    let est = cavity_resistance_with(&cavity, spec, TraceLimits::with_max_reflections(args.max_reflections))?;
    print_json(&json!({
        "shape": cavity.name(),
        "value": est.value,
        "n_x": est.spec.n_x,
        "n_phi": est.spec.n_phi,
        "rule": est.spec.rule.to_string(),
        "invalid_samples": est.invalid_samples,
        "refinement_delta": est.refinement_delta,
    }));
    Ok(0)
}

fn run_optimize(args: OptimizeArgs) -> Result<u8> {
    let family: Family = args.family.parse().map_err(usage)?;
    let quad = |n| QuadratureSpec::square(n, Rule::SimpsonSymmetric).map_err(|e| usage(e.to_string()));
    let mut spec = ObjectiveSpec::new(family);
    spec.quadrature = quad(args.n)?;
    spec.final_quadrature = quad(args.final_n)?;
    spec.starts = args.starts;
    spec.options.budget = args.budget;
    if args.no_survey {
        spec.survey = None::<SurveySpec>;
    }
    if spec.starts == 0 && spec.survey.is_none() {
        return Err(usage("need at least one start (--starts) or the survey"));
    }
    let result = optimize_family(&spec, args.method.into(), args.seed)?;
    if let Some(path) = &args.out {
        let dim = result.best.best_params.len();
        let mut csv = (0..dim).map(|i| format!("p{i},")).collect::<String>() + "value\n";
        for point in &result.best.trace {
            for p in &point.params {
                csv.push_str(&format!("{p},"));
            }
            csv.push_str(&format!("{}\n", point.value));
        }
        write_out(path, &csv)?;
    }
    let runs: Vec<Value> = result
        .runs
        .iter()
        .map(|r| {
            json!({
                "start": r.start,
                "from_survey": r.from_survey,
                "best_params": r.result.best_params,
                "best_value": r.result.best_value,
                "evaluations": r.result.evaluations,
                "converged": r.result.converged,
            })
        })
        .collect();
    print_json(&json!({
        "family": args.family,
        "method": result_method_name(args.method),
        "seed": args.seed,
        "best_params": result.best.best_params,
        "best_value": result.best.best_value,
        "evaluations": result.best.evaluations,
        "converged": result.best.converged,
        "survey_evaluations": result.survey_evaluations,
        "final_value": result.final_estimate.value,
        "final_n": args.final_n,
        "final_refinement_delta": result.final_estimate.refinement_delta,
        "runs": runs,
    }));
    Ok(0)
}

fn result_method_name(m: MethodArg) -> &'static str {
    match m {
        MethodArg::NelderMead => "nelder-mead",
        MethodArg::PatternSearch => "pattern-search",
    }
}

fn run_census(args: CensusArgs) -> Result<u8> {
    if args.samples == 0 {
        return Err(usage("--samples must be at least 1"));
    }
    let cavity = load_shape(&args.shape)?;
    let records = census(&cavity, args.samples, args.seed);
    if let Some(path) = &args.out {
        write_out(path, &census_csv(&records))?;
    }
    let valid: Vec<_> = records.iter().filter(|r| r.valid).collect();
    let max_refl = valid.iter().map(|r| r.reflections).max().unwrap_or(0);
    let mut histogram = vec![0usize; max_refl + 1];
    for r in &valid {
        histogram[r.reflections] += 1;
    }
    let (diagonal, anti_diagonal) = analysis::scatter_concentration(&records);
    print_json(&json!({
        "shape": cavity.name(),
        "samples": records.len(),
        "seed": args.seed,
        "valid": valid.len(),
        "invalid": records.len() - valid.len(),
        "reflection_histogram": histogram,
        "near_diagonal_fraction": diagonal,
        "near_anti_diagonal_fraction": anti_diagonal,
        "max_lag_3_reflections": analysis::max_lag(&records, 3),
    }));
    Ok(0)
}

fn run_verify(args: VerifyArgs) -> Result<u8> {
    if args.samples == 0 {
        return Err(usage("--samples must be at least 1"));
    }
    let cavity = load_shape(&args.shape)?;
    let mut records = census(&cavity, args.samples, args.seed);
    let mut outer = Vec::new();
    if args.grid > 0 {
        // full angular range for the reflection-count checks, |phi| > phi0 for theorem 1
        records.extend(grid_census(&cavity, args.grid, &midpoints(-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2, args.grid)));
        outer = grid_census(&cavity, args.grid, &outer_angles(args.grid));
    }
    // theorem 1 and the appendix structure only make sense on two parabolic faces
    let parabolic = cavity.faces().iter().all(|f| matches!(f, Face::Left | Face::Right));
    let mut reports: Vec<TheoremReport> = Vec::new();
    let mut skipped: Vec<&str> = Vec::new();
    let suite = args.suite;
    if matches!(suite, Suite::Theorems | Suite::All) {
        if parabolic {
            reports.push(verify_theorem1(&records)?);
            if !outer.is_empty() {
                let mut grid = verify_theorem1(&outer)?;
                grid.name = "theorem-1-grid".into();
                reports.push(grid);
            }
        } else {
            skipped.push("theorem-1");
        }
        reports.push(verify_theorem2(&records));
    }
    if matches!(suite, Suite::Corollary | Suite::All) {
        reports.push(verify_corollary(&records));
    }
    if matches!(suite, Suite::Appendix | Suite::All) {
        if parabolic {
            reports.push(verify_appendix_structure(&cavity, args.samples, args.seed)?);
        } else {
            skipped.push("appendix-structure");
        }
    }
    if reports.is_empty() {
        return Err(usage(format!("suite {suite:?} does not apply to '{}'", cavity.name())));
    }
    let passed = reports.iter().all(TheoremReport::passed);
    print_json(&json!({
        "shape": cavity.name(),
        "samples": args.samples,
        "grid": args.grid,
        "seed": args.seed,
        "passed": passed,
        "reports": reports,
        "skipped": skipped,
        "constants": AppendixConstants::new(),
        "two_phi0_degrees": 2.0 * AppendixConstants::new().phi0.to_degrees(),
    }));
    Ok(if passed { 0 } else { 3 })
}

fn run_scan(args: ScanArgs) -> Result<u8> {
    let quad = QuadratureSpec::square(args.n, args.rule.into()).map_err(|e| usage(e.to_string()))?;
    let (hs, betas) = (&args.h.0, &args.beta.0);
    let grid = betas.len() > 1;
    let rows = if grid {
        scan_r_grid(hs, betas, quad)
    } else {
        scan_r_of_h(betas[0], hs, quad)
    };
    if let Some(path) = &args.out {
        write_out(path, &analysis::scan_csv(&rows, grid))?;
    }
    let best = analysis::scan_argmax(&rows);
    print_json(&json!({
        "points": rows.len(),
        "valid_points": rows.iter().filter(|r| r.r.is_some()).count(),
        "n": args.n,
        "rule": Rule::from(args.rule).to_string(),
        "argmax": best.map(|b| json!({"h": b.h, "beta": b.beta, "R": b.r})),
    }));
    Ok(0)
}

fn run_body(args: BodyArgs) -> Result<u8> {
    let body = BodySpec::new(args.cavities).map_err(|e| usage(e.to_string()))?;
    if !(args.cavity_r.is_finite() && args.cavity_r > 0.0) {
        return Err(usage("--cavity-r must be positive"));
    }
    print_json(&json!({
        "cavities": body.n_cavities(),
        "eps_over_r": body.eps_over_r(),
        "perimeter_ratio": perimeter_ratio(body.eps_over_r()),
        "cavity_r": args.cavity_r,
        "resistance": body_resistance(body, args.cavity_r),
    }));
    Ok(0)
}

fn run(cli: Cli) -> Result<u8> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Trace(a) => run_trace(a),
        Command::Resistance(a) => run_resistance(a),
        Command::Optimize(a) => run_optimize(a),
        Command::Census(a) => run_census(a),
        Command::Verify(a) => run_verify(a),
        Command::Scan(a) => run_scan(a),
        Command::Body(a) => run_body(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
