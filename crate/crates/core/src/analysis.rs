//! Trajectory censuses, empirical checks of the Double Parabola theorems and
//! resistance scans over the quadratic family.

use std::f64::consts::{FRAC_PI_2, SQRT_2};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::billiard::{trace, EntryState, TraceLimits, TrajectoryResult};
use crate::resistance::{integrate, QuadratureSpec, Rule};
use crate::shapes::{make_quadratic, Cavity, Face, QuadraticFamilyParams};

/// Strict-inequality guard around the critical angle.
pub const PHI0_GUARD: f64 = 1e-12;

/// Half-width, in radians, of the bands used by [`scatter_concentration`].
pub const CONCENTRATION_BAND: f64 = 5.0 * std::f64::consts::PI / 180.0;

/// Critical angle `arctan(√2/4)` beyond which every Double Parabola
/// trajectory has exactly three reflections.
pub fn phi0() -> f64 {
    (SQRT_2 / 4.0).atan()
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("check applies to the Double Parabola only; '{0}' has non-parabolic faces")]
    NotDoubleParabola(String),
    #[error("range {0}")]
    Range(String),
}

/// Lower bounds from the three-reflection argument for the Double Parabola.
///
/// They are derived assuming a fourth reflection happens, so they are not
/// properties of actual trajectories; they are kept as checked constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AppendixConstants {
    pub phi0: f64,
    pub y1_star: f64,
    pub y2_star: f64,
    pub y3_star: f64,
    pub y_tilde3: f64,
    /// Lower bound on the slope `dx/dy` of the segment `B1 B2`.
    pub slope_bound: f64,
}

impl AppendixConstants {
    pub fn new() -> Self {
        let root = (-51.0 + 6.0 * 79f64.sqrt()).sqrt();
        let k = 54.0 * SQRT_2 + 6.0 * 546f64.sqrt();
        Self {
            phi0: phi0(),
            y1_star: 2.3 * SQRT_2
                - (444_498.0 - 33_120.0 * SQRT_2 * root - 38_400.0 * 79f64.sqrt()).sqrt() / 90.0,
            y2_star: 8.0 / 9.0 * root,
            // real root of y³ + 8y − 4√2 (Cardano)
            y3_star: k.cbrt() / 3.0 - 8.0 / k.cbrt(),
            y_tilde3: 2.0 / 3.0 * root,
            slope_bound: 23.0 / 20.0 * SQRT_2,
        }
    }
}

impl Default for AppendixConstants {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CensusRecord {
    pub x: f64,
    pub phi: f64,
    pub exit_phi: f64,
    pub reflections: usize,
    pub faces: Vec<Face>,
    pub valid: bool,
}

impl From<&TrajectoryResult> for CensusRecord {
    fn from(t: &TrajectoryResult) -> Self {
        Self {
            x: t.entry.x(),
            phi: t.entry.phi(),
            exit_phi: t.exit_phi,
            reflections: t.reflections,
            faces: t.faces.clone(),
            valid: t.valid(),
        }
    }
}

fn trace_all(cavity: &Cavity, entries: &[EntryState]) -> Vec<TrajectoryResult> {
    let limits = TraceLimits::default();
    entries
        .par_iter()
        .map(|&e| trace(cavity, e, limits))
        .collect()
}

/// Uniform draw from the open square `(-1/2, 1/2) × (phi_lo, phi_hi)`.
fn draw_entry(rng: &mut ChaCha8Rng, phi_lo: f64, phi_hi: f64) -> EntryState {
    loop {
        let x = rng.random_range(-0.5..0.5);
        let phi = rng.random_range(phi_lo..phi_hi);
        if x > -0.5 && phi > phi_lo {
            if let Ok(e) = EntryState::new(x, phi) {
                return e;
            }
        }
    }
}

/// `n_samples` i.i.d. uniform entries from a seeded generator; records come
/// back in sample order.
pub fn census(cavity: &Cavity, n_samples: usize, seed: u64) -> Vec<CensusRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entries: Vec<EntryState> = (0..n_samples)
        .map(|_| draw_entry(&mut rng, -FRAC_PI_2, FRAC_PI_2))
        .collect();
    trace_all(cavity, &entries).iter().map(CensusRecord::from).collect()
}

/// Cell midpoints of `n` equal subintervals of `(lo, hi)`.
pub fn midpoints(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let w = (hi - lo) / n as f64;
    (0..n).map(|i| lo + (i as f64 + 0.5) * w).collect()
}

/// Deterministic census over `n_x` abscissa midpoints and the given angles.
pub fn grid_census(cavity: &Cavity, n_x: usize, phis: &[f64]) -> Vec<CensusRecord> {
    let entries: Vec<EntryState> = midpoints(-0.5, 0.5, n_x)
        .into_iter()
        .flat_map(|x| phis.iter().filter_map(move |&phi| EntryState::new(x, phi).ok()))
        .collect();
    trace_all(cavity, &entries).iter().map(CensusRecord::from).collect()
}

/// Angles strictly outside `[-phi0, phi0]`: `n / 2` midpoints on each side.
pub fn outer_angles(n: usize) -> Vec<f64> {
    let lo = phi0() + PHI0_GUARD;
    let mut phis = midpoints(-FRAC_PI_2, -lo, n / 2);
    phis.extend(midpoints(lo, FRAC_PI_2, n - n / 2));
    phis
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremReport {
    pub name: String,
    /// Records the check applied to.
    pub samples: usize,
    pub violations: usize,
    /// First violating record, if any.
    pub witness: Option<CensusRecord>,
    pub bound_checked: String,
    /// Extremal value of the checked quantity, when meaningful.
    pub observed: Option<f64>,
}

impl TheoremReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    fn new(name: &str, bound: &str) -> Self {
        Self {
            name: name.to_owned(),
            samples: 0,
            violations: 0,
            witness: None,
            bound_checked: bound.to_owned(),
            observed: None,
        }
    }

    fn check(&mut self, ok: bool, record: impl FnOnce() -> CensusRecord) {
        self.samples += 1;
        if !ok {
            self.violations += 1;
            if self.witness.is_none() {
                self.witness = Some(record());
            }
        }
    }
}

fn is_parabolic(face: &Face) -> bool {
    matches!(face, Face::Left | Face::Right)
}

/// Face pattern of a three-reflection trajectory entering at `phi`.
fn alternating(phi: f64) -> [Face; 3] {
    if phi > 0.0 {
        [Face::Left, Face::Right, Face::Left]
    } else {
        [Face::Right, Face::Left, Face::Right]
    }
}

/// Exactly three reflections, alternating faces, whenever `|phi| > phi0`.
pub fn verify_theorem1(records: &[CensusRecord]) -> Result<TheoremReport, AnalysisError> {
    if let Some(r) = records.iter().find(|r| !r.faces.iter().all(is_parabolic)) {
        return Err(AnalysisError::NotDoubleParabola(format!("{:?}", r.faces)));
    }
    let limit = phi0() + PHI0_GUARD;
    let mut report = TheoremReport::new(
        "theorem-1",
        "|phi| > arctan(sqrt(2)/4) => 3 reflections on alternating faces",
    );
    for r in records.iter().filter(|r| r.valid && r.phi.abs() > limit) {
        let ok = r.reflections == 3 && r.faces == alternating(r.phi);
        report.check(ok, || r.clone());
    }
    Ok(report)
}

/// Every valid trajectory has at least three reflections.
pub fn verify_theorem2(records: &[CensusRecord]) -> TheoremReport {
    let mut report = TheoremReport::new("theorem-2", "reflections >= 3");
    for r in records.iter().filter(|r| r.valid) {
        report.check(r.reflections >= 3, || r.clone());
    }
    report.observed = records
        .iter()
        .filter(|r| r.valid)
        .map(|r| r.reflections as f64)
        .reduce(f64::min);
    report
}

/// Trajectories with four or more reflections lag by less than `2 phi0`.
pub fn verify_corollary(records: &[CensusRecord]) -> TheoremReport {
    let bound = 2.0 * phi0();
    let mut report = TheoremReport::new("corollary", "reflections >= 4 => |phi - phi_out| < 2 arctan(sqrt(2)/4)");
    for r in records.iter().filter(|r| r.valid && r.reflections >= 4) {
        let lag = (r.phi - r.exit_phi).abs();
        report.check(lag < bound, || r.clone());
        report.observed = Some(report.observed.map_or(lag, |m: f64| m.max(lag)));
    }
    report
}

/// Sub-trajectory structure for `|phi| > phi0`: faces alternate starting
/// on the far side, `B1 B2` climbs, `B2 B3` descends, and `B3` stays above
/// the opening.
pub fn verify_appendix_structure(cavity: &Cavity, n_samples: usize, seed: u64) -> Result<TheoremReport, AnalysisError> {
    if !cavity.faces().iter().all(is_parabolic) {
        return Err(AnalysisError::NotDoubleParabola(cavity.name().to_owned()));
    }
    let lo = phi0() + PHI0_GUARD;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entries: Vec<EntryState> = (0..n_samples)
        .map(|_| {
            let e = draw_entry(&mut rng, lo, FRAC_PI_2);
            // mirrored half of the sample
            if rng.random::<bool>() {
                EntryState::new(-e.x(), -e.phi()).expect("mirror of a valid entry")
            } else {
                e
            }
        })
        .collect();
    let mut report = TheoremReport::new(
        "appendix-structure",
        "faces alternate, y2 > y1, y3 < y2, y3 > 0",
    );
    for t in trace_all(cavity, &entries).iter().filter(|t| t.valid()) {
        let ok = t.reflections == 3 && t.faces == alternating(t.entry.phi()) && {
            let [y1, y2, y3] = [t.points[0].y, t.points[1].y, t.points[2].y];
            y2 > y1 && y3 < y2 && y3 > 0.0
        };
        report.check(ok, || CensusRecord::from(t));
    }
    Ok(report)
}

/// Largest `|phi - phi_out|` over valid records with the given reflection
/// count.
pub fn max_lag(records: &[CensusRecord], reflections: usize) -> Option<f64> {
    records
        .iter()
        .filter(|r| r.valid && r.reflections == reflections)
        .map(|r| (r.phi - r.exit_phi).abs())
        .reduce(f64::max)
}

/// Fractions of valid records near the diagonal `phi_out = phi` and near the
/// anti-diagonal `phi_out = -phi`.
pub fn scatter_concentration(records: &[CensusRecord]) -> (f64, f64) {
    let valid: Vec<&CensusRecord> = records.iter().filter(|r| r.valid).collect();
    let n = valid.len().max(1) as f64;
    let near = |f: &dyn Fn(&CensusRecord) -> f64| {
        valid.iter().filter(|r| f(r).abs() < CONCENTRATION_BAND).count() as f64 / n
    };
    (near(&|r| r.exit_phi - r.phi), near(&|r| r.exit_phi + r.phi))
}

/// `x,phi,exit_phi,reflections,valid` with angles in radians.
pub fn census_csv(records: &[CensusRecord]) -> String {
    let mut out = String::from("x,phi,exit_phi,reflections,valid\n");
    for r in records {
        writeln!(out, "{},{},{},{},{}", r.x, r.phi, r.exit_phi, r.reflections, r.valid).expect("write to string");
    }
    out
}

/// `lo, lo + step, …` up to `hi` inclusive (within a relative 1e-9 of a step).
pub fn stepped_range(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>, AnalysisError> {
    if !(lo.is_finite() && hi.is_finite() && step.is_finite() && step > 0.0 && lo <= hi) {
        return Err(AnalysisError::Range(format!("{lo}:{hi}:{step} is malformed")));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|i| lo + i as f64 * step).collect())
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanRow {
    pub h: f64,
    pub beta: f64,
    /// `None` when `(h, beta)` does not give a valid cavity.
    pub r: Option<f64>,
}

fn scan_point(h: f64, beta: f64, quad: QuadratureSpec) -> ScanRow {
    let r = make_quadratic(QuadraticFamilyParams::new(h, beta)).ok().and_then(|cavity| {
        let spec = if cavity.is_symmetric() {
            quad
        } else {
            QuadratureSpec { rule: Rule::Midpoint, ..quad }
        };
        integrate(&cavity, spec, TraceLimits::default()).ok().map(|i| i.value)
    });
    ScanRow { h, beta, r }
}

/// `R(h)` along a fixed `beta`.
pub fn scan_r_of_h(beta: f64, hs: &[f64], quad: QuadratureSpec) -> Vec<ScanRow> {
    hs.iter().map(|&h| scan_point(h, beta, quad)).collect()
}

/// `R(h, beta)` on the product grid, `beta` varying fastest.
pub fn scan_r_grid(hs: &[f64], betas: &[f64], quad: QuadratureSpec) -> Vec<ScanRow> {
    hs.iter()
        .flat_map(|&h| betas.iter().map(move |&b| (h, b)))
        .map(|(h, b)| scan_point(h, b, quad))
        .collect()
}

pub fn scan_argmax(rows: &[ScanRow]) -> Option<ScanRow> {
    rows.iter()
        .filter(|r| r.r.is_some())
        .copied()
        .max_by(|a, b| a.r.unwrap().total_cmp(&b.r.unwrap()))
}

/// `h,R` rows, or `h,beta,R` when `with_beta`; invalid shapes are skipped.
pub fn scan_csv(rows: &[ScanRow], with_beta: bool) -> String {
    let mut out = String::from(if with_beta { "h,beta,R\n" } else { "h,R\n" });
    for row in rows {
        let Some(r) = row.r else { continue };
        if with_beta {
            writeln!(out, "{},{},{}", row.h, row.beta, r).expect("write to string");
        } else {
            writeln!(out, "{},{}", row.h, r).expect("write to string");
        }
    }
    out
}
