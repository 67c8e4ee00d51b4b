//! Derivative-free maximization of cavity resistance over shape parameters.
//!
//! Both searches work inside a box; candidates outside it are projected back
//! onto the bounds. Objectives may return `-inf` for infeasible points.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::billiard::TraceLimits;
use crate::geometry::Vec2;
use crate::resistance::{cavity_resistance, integrate, QuadratureSpec, ResistanceEstimate, Rule};
use crate::shapes::{make_polyline, make_quadratic, Cavity, QuadraticFamilyParams, ShapeError, LEFT_END, RIGHT_END};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizeError {
    #[error("bounds must be finite with lo <= hi, got [{0}, {1}]")]
    Bounds(f64, f64),
    #[error("start point has {got} coordinates, bounds have {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("unsupported family: {0}")]
    Family(String),
    #[error("no feasible start found after {0} draws")]
    NoFeasibleStart(usize),
    #[error(transparent)]
    Resistance(#[from] crate::resistance::ResistanceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SearchOptions {
    /// Simplex diameter (or pattern mesh) needed to stop.
    pub tol_x: f64,
    /// Simplex value spread needed, together with `tol_x`, to stop.
    pub tol_f: f64,
    /// Maximum number of objective evaluations.
    pub budget: usize,
    /// Initial simplex edge / pattern mesh, as a fraction of each bound width.
    pub initial_step: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            tol_x: 1e-6,
            tol_f: 1e-8,
            budget: 500,
            initial_step: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TracePoint {
    pub params: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizationResult {
    pub best_params: Vec<f64>,
    pub best_value: f64,
    pub evaluations: usize,
    /// Incumbent after each iteration.
    pub trace: Vec<TracePoint>,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    NelderMead,
    PatternSearch,
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "nelder-mead" | "nm" => Ok(Method::NelderMead),
            "pattern-search" | "pattern" | "ps" => Ok(Method::PatternSearch),
            other => Err(format!("unknown method '{other}'")),
        }
    }
}

fn check_bounds(bounds: &[(f64, f64)], start: &[f64]) -> Result<(), OptimizeError> {
    if start.len() != bounds.len() {
        return Err(OptimizeError::Dimension {
            expected: bounds.len(),
            got: start.len(),
        });
    }
    for &(lo, hi) in bounds {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(OptimizeError::Bounds(lo, hi));
        }
    }
    Ok(())
}

fn project(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, &(lo, hi)) in x.iter_mut().zip(bounds) {
        *v = v.clamp(lo, hi);
    }
}

/// Counts evaluations and maps NaN to `-inf`.
struct Counted<'a, F> {
    f: &'a F,
    evaluations: usize,
}

impl<F: Fn(&[f64]) -> f64> Counted<'_, F> {
    fn eval(&mut self, x: &[f64]) -> f64 {
        self.evaluations += 1;
        let v = (self.f)(x);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }
}

/// Nelder–Mead simplex search (reflection 1, expansion 2, contraction 1/2,
/// shrink 1/2), maximizing `objective`.
pub fn nelder_mead<F>(
    objective: F,
    start: &[f64],
    bounds: &[(f64, f64)],
    opts: SearchOptions,
) -> Result<OptimizationResult, OptimizeError>
where
    F: Fn(&[f64]) -> f64,
{
    check_bounds(bounds, start)?;
    let n = start.len();
    let mut f = Counted { f: &objective, evaluations: 0 };

    let mut x0 = start.to_vec();
    project(&mut x0, bounds);
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let v0 = f.eval(&x0);
    simplex.push((x0.clone(), v0));
    for i in 0..n {
        let (lo, hi) = bounds[i];
        let step = opts.initial_step * (hi - lo).max(1e-3);
        let mut xi = x0.clone();
        // step inward when the start sits on the upper bound
        xi[i] = if x0[i] + step <= hi { x0[i] + step } else { x0[i] - step };
        project(&mut xi, bounds);
        let vi = f.eval(&xi);
        simplex.push((xi, vi));
    }

    let mut trace = Vec::new();
    let mut converged = false;
    loop {
        // best first
        simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
        trace.push(TracePoint {
            params: simplex[0].0.clone(),
            value: simplex[0].1,
        });

        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| distance(x, &simplex[0].0))
            .fold(0.0, f64::max);
        let spread = simplex[0].1 - simplex[n].1;
        if diameter < opts.tol_x && spread.is_finite() && spread.abs() < opts.tol_f {
            converged = true;
            break;
        }
        if f.evaluations >= opts.budget {
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> = centroid
                .iter()
                .zip(&worst.0)
                .map(|(c, w)| c + t * (c - w))
                .collect();
            project(&mut p, bounds);
            p
        };

        let xr = along(1.0);
        let vr = f.eval(&xr);
        if vr > simplex[0].1 {
            let xe = along(2.0);
            let ve = f.eval(&xe);
            simplex[n] = if ve > vr { (xe, ve) } else { (xr, vr) };
            continue;
        }
        if vr > simplex[n - 1].1 {
            simplex[n] = (xr, vr);
            continue;
        }
        // outside contraction when the reflection beat the worst vertex
        let outside = vr > worst.1;
        let xc = along(if outside { 0.5 } else { -0.5 });
        let vc = f.eval(&xc);
        if (outside && vc >= vr) || (!outside && vc > worst.1) {
            simplex[n] = (xc, vc);
            continue;
        }
        // shrink toward the best vertex
        let best = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let mut p: Vec<f64> = best
                .iter()
                .zip(&vertex.0)
                .map(|(b, x)| b + 0.5 * (x - b))
                .collect();
            project(&mut p, bounds);
            let v = f.eval(&p);
            *vertex = (p, v);
        }
    }

    let (best_params, best_value) = simplex.swap_remove(0);
    Ok(OptimizationResult {
        best_params,
        best_value,
        evaluations: f.evaluations,
        trace,
        converged,
    })
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Coordinate pattern search: poll `±mesh` along every axis, move to the
/// best improving point, halve the mesh when nothing improves.
pub fn pattern_search<F>(
    objective: F,
    start: &[f64],
    bounds: &[(f64, f64)],
    opts: SearchOptions,
) -> Result<OptimizationResult, OptimizeError>
where
    F: Fn(&[f64]) -> f64,
{
    check_bounds(bounds, start)?;
    let mut f = Counted { f: &objective, evaluations: 0 };
    let widths: Vec<f64> = bounds.iter().map(|(lo, hi)| (hi - lo).max(1e-3)).collect();
    let max_width = widths.iter().copied().fold(0.0, f64::max);

    let mut best = start.to_vec();
    project(&mut best, bounds);
    let mut best_value = f.eval(&best);
    let mut mesh = opts.initial_step;
    let mut trace = vec![TracePoint {
        params: best.clone(),
        value: best_value,
    }];
    let mut converged = false;

    loop {
        if mesh * max_width < opts.tol_x {
            converged = true;
            break;
        }
        if f.evaluations >= opts.budget {
            break;
        }
        let mut improved: Option<(Vec<f64>, f64)> = None;
        for (i, width) in widths.iter().enumerate() {
            for sign in [1.0, -1.0] {
                let mut p = best.clone();
                p[i] += sign * mesh * width;
                project(&mut p, bounds);
                if p == best {
                    continue;
                }
                let v = f.eval(&p);
                let incumbent = improved.as_ref().map_or(best_value, |(_, iv)| *iv);
                if v > incumbent {
                    improved = Some((p, v));
                }
            }
        }
        match improved {
            Some((p, v)) => {
                best = p;
                best_value = v;
            }
            None => mesh *= 0.5,
        }
        trace.push(TracePoint {
            params: best.clone(),
            value: best_value,
        });
    }

    Ok(OptimizationResult {
        best_params: best,
        best_value,
        evaluations: f.evaluations,
        trace,
        converged,
    })
}

/// Shape families the optimizer can search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// `x = ±g(y)` with parameters `[h, beta]`.
    Quadratic,
    /// Mirror-symmetric polyline with the given (even) number of segments.
    /// Parameters: apex height, then `(x, y)` for each right-side vertex
    /// from the bottom up.
    Polyline(usize),
}

impl Family {
    pub fn dimension(&self) -> usize {
        match self {
            Family::Quadratic => 2,
            Family::Polyline(n) => 1 + 2 * (n / 2 - 1),
        }
    }

    pub fn default_bounds(&self) -> Vec<(f64, f64)> {
        match self {
            Family::Quadratic => vec![(0.5, 3.0), (-1.0, 1.0)],
            Family::Polyline(n) => {
                let mut b = vec![(0.05, 3.0)];
                for _ in 0..(n / 2 - 1) {
                    b.push((0.0, 1.5));
                    b.push((0.0, 3.0));
                }
                b
            }
        }
    }

    pub fn build(&self, params: &[f64]) -> Result<Cavity, ShapeError> {
        match self {
            Family::Quadratic => make_quadratic(QuadraticFamilyParams::new(params[0], params[1])),
            Family::Polyline(_) => {
                let right: Vec<Vec2> = params[1..]
                    .chunks(2)
                    .map(|c| Vec2::new(c[0], c[1]))
                    .collect();
                let mut vertices = vec![RIGHT_END];
                vertices.extend(&right);
                vertices.push(Vec2::new(0.0, params[0]));
                vertices.extend(right.iter().rev().map(|p| Vec2::new(-p.x, p.y)));
                vertices.push(LEFT_END);
                make_polyline(&vertices)
            }
        }
    }

    /// Default survey: 0.05-wide cells at N=100 for the quadratic family,
    /// none for polylines with more than one parameter.
    pub fn default_survey(&self) -> Option<SurveySpec> {
        let quadrature = QuadratureSpec::square(100, Rule::SimpsonSymmetric).expect("valid");
        match self {
            Family::Quadratic => Some(SurveySpec {
                cells: vec![50, 40],
                quadrature,
                seeds: 6,
            }),
            Family::Polyline(2) => Some(SurveySpec {
                cells: vec![60],
                quadrature,
                seeds: 2,
            }),
            Family::Polyline(_) => None,
        }
    }

    fn validate(&self) -> Result<(), OptimizeError> {
        match self {
            Family::Polyline(n) if *n < 2 || n % 2 != 0 => Err(OptimizeError::Family(format!(
                "polyline-{n}: the segment count must be even and at least 2"
            ))),
            _ => Ok(()),
        }
    }
}

impl std::str::FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "quadratic" {
            return Ok(Family::Quadratic);
        }
        s.strip_prefix("polyline-")
            .and_then(|n| n.parse().ok())
            .map(Family::Polyline)
            .ok_or_else(|| format!("unknown family '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectiveSpec {
    pub family: Family,
    /// One closed interval per parameter; `lo == hi` freezes a parameter.
    pub bounds: Vec<(f64, f64)>,
    /// Fidelity used while searching.
    pub quadrature: QuadratureSpec,
    /// Fidelity used to report the final optimum.
    pub final_quadrature: QuadratureSpec,
    pub starts: usize,
    pub options: SearchOptions,
    /// Stratified survey whose best local maxima seed extra local runs;
    /// `None` runs the random starts only.
    pub survey: Option<SurveySpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurveySpec {
    /// Cells per family parameter; entries for frozen parameters are ignored.
    pub cells: Vec<usize>,
    pub quadrature: QuadratureSpec,
    /// How many of the best lattice-local maxima start a local search.
    pub seeds: usize,
}

impl ObjectiveSpec {
    /// Coarse N=400 search, fine N=2000 report, one start.
    pub fn new(family: Family) -> Self {
        let rule = Rule::SimpsonSymmetric;
        Self {
            family,
            bounds: family.default_bounds(),
            quadrature: QuadratureSpec::square(400, rule).expect("valid"),
            final_quadrature: QuadratureSpec::square(2000, rule).expect("valid"),
            starts: 1,
            options: SearchOptions::default(),
            survey: family.default_survey(),
        }
    }

    /// Resistance of the family member at `params`, `-inf` when the shape is
    /// infeasible or cannot be integrated.
    pub fn evaluate(&self, params: &[f64]) -> f64 {
        self.evaluate_at(params, self.quadrature)
    }

    fn evaluate_at(&self, params: &[f64], quadrature: QuadratureSpec) -> f64 {
        let Ok(cavity) = self.family.build(params) else {
            return f64::NEG_INFINITY;
        };
        let spec = fit_rule(quadrature, &cavity);
        integrate(&cavity, spec, TraceLimits::default()).map_or(f64::NEG_INFINITY, |i| i.value)
    }
}

/// Falls back to the midpoint rule for asymmetric members.
fn fit_rule(spec: QuadratureSpec, cavity: &Cavity) -> QuadratureSpec {
    if spec.rule == Rule::SimpsonSymmetric && !cavity.is_symmetric() {
        QuadratureSpec { rule: Rule::Midpoint, ..spec }
    } else {
        spec
    }
}

/// Draws a feasible start uniformly inside the bounds.
pub fn draw_start(spec: &ObjectiveSpec, rng: &mut impl Rng) -> Result<Vec<f64>, OptimizeError> {
    const MAX_DRAWS: usize = 10_000;
    for _ in 0..MAX_DRAWS {
        let x: Vec<f64> = spec
            .bounds
            .iter()
            .map(|&(lo, hi)| if lo < hi { rng.random_range(lo..hi) } else { lo })
            .collect();
        if spec.family.build(&x).is_ok() {
            return Ok(x);
        }
    }
    Err(OptimizeError::NoFeasibleStart(MAX_DRAWS))
}

/// Jittered stratified sample of the box: one uniform draw inside each of
/// the `cells[0] × cells[1] × …` cells, evaluated in lattice order.
pub fn stratified_survey<F>(
    objective: F,
    bounds: &[(f64, f64)],
    cells: &[usize],
    rng: &mut impl Rng,
) -> Result<Vec<TracePoint>, OptimizeError>
where
    F: Fn(&[f64]) -> f64,
{
    check_bounds(bounds, &vec![0.0; cells.len()])?;
    let total: usize = cells.iter().product();
    let mut points = Vec::with_capacity(total);
    for flat in 0..total {
        let mut rest = flat;
        let params: Vec<f64> = bounds
            .iter()
            .zip(cells)
            .map(|(&(lo, hi), &n)| {
                let cell = rest % n;
                rest /= n;
                let width = (hi - lo) / n as f64;
                lo + (cell as f64 + rng.random::<f64>()) * width
            })
            .collect();
        let value = objective(&params);
        points.push(TracePoint {
            params,
            value: if value.is_nan() { f64::NEG_INFINITY } else { value },
        });
    }
    Ok(points)
}

/// Points of a stratified survey that beat every axis neighbour on the
/// lattice, best first.
pub fn lattice_maxima(points: &[TracePoint], cells: &[usize]) -> Vec<TracePoint> {
    let mut maxima: Vec<TracePoint> = Vec::new();
    for (flat, p) in points.iter().enumerate() {
        if !p.value.is_finite() {
            continue;
        }
        let mut stride = 1;
        let mut is_max = true;
        for &n in cells {
            let coord = (flat / stride) % n;
            if coord > 0 && points[flat - stride].value > p.value {
                is_max = false;
            }
            if coord + 1 < n && points[flat + stride].value > p.value {
                is_max = false;
            }
            stride *= n;
        }
        if is_max {
            maxima.push(p.clone());
        }
    }
    maxima.sort_by(|a, b| b.value.total_cmp(&a.value));
    maxima
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalRun {
    pub start: Vec<f64>,
    /// Seeded from a survey maximum rather than a random draw.
    pub from_survey: bool,
    pub result: OptimizationResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyResult {
    /// Best run across all starts.
    pub best: OptimizationResult,
    /// Random-start runs in draw order, then survey-seeded runs.
    pub runs: Vec<LocalRun>,
    pub survey_evaluations: usize,
    /// The optimum re-evaluated at the final fidelity.
    pub final_estimate: ResistanceEstimate,
}

impl FamilyResult {
    pub fn random_runs(&self) -> impl Iterator<Item = &LocalRun> {
        self.runs.iter().filter(|r| !r.from_survey)
    }
}

/// Multi-start maximization of resistance over `spec.family`.
///
/// Every seeded random start runs one local search. When a survey is
/// configured, its best lattice maxima start further local searches, which
/// guards against the narrow peaks this objective has.
pub fn optimize_family(spec: &ObjectiveSpec, method: Method, seed: u64) -> Result<FamilyResult, OptimizeError> {
    spec.family.validate()?;
    check_bounds(&spec.bounds, &vec![0.0; spec.family.dimension()])?;
    spec.quadrature.validate()?;
    spec.final_quadrature.validate()?;

    // frozen parameters are kept out of the search space
    let free: Vec<usize> = (0..spec.bounds.len())
        .filter(|&i| spec.bounds[i].0 < spec.bounds[i].1)
        .collect();
    let free_bounds: Vec<(f64, f64)> = free.iter().map(|&i| spec.bounds[i]).collect();
    let expand = |y: &[f64]| -> Vec<f64> {
        let mut x: Vec<f64> = spec.bounds.iter().map(|b| b.0).collect();
        for (&i, &v) in free.iter().zip(y) {
            x[i] = v;
        }
        x
    };
    let objective = |y: &[f64]| spec.evaluate(&expand(y));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts: Vec<(Vec<f64>, bool)> = (0..spec.starts.max(1))
        .map(|_| draw_start(spec, &mut rng).map(|x| (free.iter().map(|&i| x[i]).collect(), false)))
        .collect::<Result<_, _>>()?;

    let mut survey_evaluations = 0;
    if let Some(survey) = spec.survey.as_ref().filter(|_| !free.is_empty()) {
        if survey.cells.len() != spec.bounds.len() {
            return Err(OptimizeError::Dimension {
                expected: spec.bounds.len(),
                got: survey.cells.len(),
            });
        }
        survey.quadrature.validate()?;
        let cells: Vec<usize> = free.iter().map(|&i| survey.cells[i].max(1)).collect();
        let coarse = |y: &[f64]| spec.evaluate_at(&expand(y), survey.quadrature);
        let points = stratified_survey(coarse, &free_bounds, &cells, &mut rng)?;
        survey_evaluations = points.len();
        // maxima closer than SEED_SEPARATION cells to a chosen seed sit on
        // the same ridge and would repeat its run
        const SEED_SEPARATION: f64 = 3.0;
        let cell_widths: Vec<f64> = free_bounds
            .iter()
            .zip(&cells)
            .map(|(&(lo, hi), &n)| (hi - lo) / n as f64)
            .collect();
        let mut seeds: Vec<Vec<f64>> = Vec::new();
        for p in lattice_maxima(&points, &cells) {
            if seeds.len() == survey.seeds {
                break;
            }
            let near = seeds.iter().any(|q| {
                q.iter()
                    .zip(&p.params)
                    .zip(&cell_widths)
                    .all(|((a, b), w)| (a - b).abs() < SEED_SEPARATION * w)
            });
            if !near {
                seeds.push(p.params);
            }
        }
        starts.extend(seeds.into_iter().map(|p| (p, true)));
    }

    let mut runs = Vec::with_capacity(starts.len());
    for (start, from_survey) in starts {
        let mut result = match method {
            Method::NelderMead => nelder_mead(objective, &start, &free_bounds, spec.options)?,
            Method::PatternSearch => pattern_search(objective, &start, &free_bounds, spec.options)?,
        };
        result.best_params = expand(&result.best_params);
        for point in &mut result.trace {
            point.params = expand(&point.params);
        }
        runs.push(LocalRun {
            start: expand(&start),
            from_survey,
            result,
        });
    }

    let best = runs
        .iter()
        .map(|r| &r.result)
        .max_by(|a, b| a.best_value.total_cmp(&b.best_value))
        .cloned()
        .expect("at least one start");
    let cavity = spec
        .family
        .build(&best.best_params)
        .map_err(|e| OptimizeError::Family(e.to_string()))?;
    let final_estimate = cavity_resistance(&cavity, fit_rule(spec.final_quadrature, &cavity))?;
    Ok(FamilyResult {
        best,
        runs,
        survey_evaluations,
        final_estimate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQRT2: f64 = std::f64::consts::SQRT_2;

    fn bowl(x: &[f64]) -> f64 {
        -(x[0] - SQRT2).powi(2) - x[1].powi(2)
    }

    fn bowl_bounds() -> Vec<(f64, f64)> {
        vec![(0.5, 3.0), (-1.0, 1.0)]
    }

    #[test]
    fn nelder_mead_bowl() {
        let r = nelder_mead(bowl, &[1.0, 0.5], &bowl_bounds(), SearchOptions::default()).unwrap();
        assert!(r.converged);
        assert!((r.best_params[0] - SQRT2).abs() < 1e-6, "{:?}", r.best_params);
        assert!(r.best_params[1].abs() < 1e-6);
        assert!(r.evaluations <= 500);
    }

    #[test]
    fn pattern_search_bowl() {
        let r = pattern_search(bowl, &[1.0, 0.5], &bowl_bounds(), SearchOptions::default()).unwrap();
        assert!(r.converged);
        assert!((r.best_params[0] - SQRT2).abs() < 1e-4, "{:?}", r.best_params);
        assert!(r.best_params[1].abs() < 1e-4);
    }

    #[test]
    fn traces_improve_monotonically() {
        for r in [
            nelder_mead(bowl, &[2.5, -0.8], &bowl_bounds(), SearchOptions::default()).unwrap(),
            pattern_search(bowl, &[2.5, -0.8], &bowl_bounds(), SearchOptions::default()).unwrap(),
        ] {
            assert!(r.trace.windows(2).all(|w| w[1].value >= w[0].value));
            assert_eq!(r.trace.last().unwrap().value, r.best_value);
            assert_eq!(bowl(&r.best_params), r.best_value);
        }
    }

    #[test]
    fn start_on_a_bound_corner() {
        let opts = SearchOptions { budget: 60, ..SearchOptions::default() };
        for r in [
            nelder_mead(bowl, &[3.0, 1.0], &bowl_bounds(), opts).unwrap(),
            pattern_search(bowl, &[3.0, 1.0], &bowl_bounds(), opts).unwrap(),
        ] {
            assert!(r.best_value > bowl(&[3.0, 1.0]));
            assert!(r.best_params.iter().zip(bowl_bounds()).all(|(v, (lo, hi))| lo <= *v && *v <= hi));
            // 60 evaluations cannot reach 1e-6 from a corner
            assert!(!r.converged);
            assert!(r.evaluations <= 60 + 4);
        }
    }

    #[test]
    fn plateau_terminates_on_mesh() {
        let r = pattern_search(|_: &[f64]| 1.0, &[1.0, 0.0], &bowl_bounds(), SearchOptions::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.best_params, vec![1.0, 0.0]);
    }

    #[test]
    fn infeasible_regions_are_avoided() {
        let f = |x: &[f64]| if x[0] > 2.0 { f64::NAN } else { bowl(x) };
        let r = nelder_mead(f, &[1.9, 0.2], &bowl_bounds(), SearchOptions::default()).unwrap();
        assert!((r.best_params[0] - SQRT2).abs() < 1e-6, "{:?}", r.best_params);
    }

    #[test]
    fn dimension_and_bounds_errors() {
        assert!(nelder_mead(bowl, &[1.0], &bowl_bounds(), SearchOptions::default()).is_err());
        assert!(pattern_search(bowl, &[1.0, 0.0], &[(1.0, 0.0), (0.0, 1.0)], SearchOptions::default()).is_err());
    }

    #[test]
    fn family_parsing_and_building() {
        assert_eq!("quadratic".parse::<Family>(), Ok(Family::Quadratic));
        assert_eq!("polyline-4".parse::<Family>(), Ok(Family::Polyline(4)));
        assert!("spline".parse::<Family>().is_err());
        assert_eq!(Family::Polyline(2).dimension(), 1);
        assert_eq!(Family::Polyline(6).dimension(), 5);
        let tri = Family::Polyline(2).build(&[0.5]).unwrap();
        assert_eq!(tri.curves(), crate::shapes::make_right_triangle().curves());
        let cav = Family::Polyline(4).build(&[1.0, 0.6, 0.5]).unwrap();
        assert!(cav.is_symmetric());
        assert_eq!(cav.curves().len(), 4);
        assert!(Family::Quadratic.build(&[3.0, -0.9]).is_err());
        let mut spec = ObjectiveSpec::new(Family::Polyline(3));
        spec.bounds = vec![(0.1, 1.0)];
        assert!(optimize_family(&spec, Method::NelderMead, 0).is_err());
    }

    #[test]
    fn infeasible_members_score_negative_infinity() {
        let spec = ObjectiveSpec::new(Family::Quadratic);
        assert_eq!(spec.evaluate(&[3.0, -0.9]), f64::NEG_INFINITY);
    }

    #[test]
    fn starts_are_feasible_and_seeded() {
        let spec = ObjectiveSpec::new(Family::Quadratic);
        let mut a = ChaCha8Rng::seed_from_u64(7);
        let mut b = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let x = draw_start(&spec, &mut a).unwrap();
            assert_eq!(x, draw_start(&spec, &mut b).unwrap());
            assert!(QuadraticFamilyParams::new(x[0], x[1]).is_valid());
        }
    }
}
