//! Quadrature of the cavity resistance functional
//!
//! ```text
//! R = 3/8 ∫∫ (1 + cos(phi_out(x, phi) - phi)) cos(phi) dphi dx
//! ```
//!
//! over `x ∈ [-1/2, 1/2]`, `phi ∈ [-pi/2, pi/2]`, and the perimeter-weighted
//! formulas assembling a whole body from its cavities.

use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::billiard::{exit_angle, TraceLimits};
use crate::shapes::Cavity;

/// Integrations with a larger share of unusable trajectories are rejected.
pub const MAX_INVALID_FRACTION: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ResistanceError {
    #[error("invalid quadrature spec: {0}")]
    InvalidSpec(String),
    #[error("Simpson's symmetric scheme needs a mirror-symmetric cavity, '{0}' is not")]
    NotSymmetric(String),
    #[error("{invalid} of {samples} trajectories were unusable")]
    IntegrationFailure { invalid: usize, samples: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    /// Cell midpoints in both `x` and `phi`.
    Midpoint,
    /// Midpoints on the positive half of the opening, Simpson 1/3 in `phi`.
    SimpsonSymmetric,
}

impl std::fmt::Display for Rule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Rule::Midpoint => "midpoint",
            Rule::SimpsonSymmetric => "simpson-symmetric",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct QuadratureSpec {
    pub n_x: usize,
    pub n_phi: usize,
    pub rule: Rule,
}

impl QuadratureSpec {
    pub fn new(n_x: usize, n_phi: usize, rule: Rule) -> Result<Self, ResistanceError> {
        let spec = Self { n_x, n_phi, rule };
        spec.validate()?;
        Ok(spec)
    }

    /// Same resolution in both directions.
    pub fn square(n: usize, rule: Rule) -> Result<Self, ResistanceError> {
        Self::new(n, n, rule)
    }

    pub fn validate(&self) -> Result<(), ResistanceError> {
        for (name, n) in [("n_x", self.n_x), ("n_phi", self.n_phi)] {
            if n < 2 || n % 2 != 0 {
                return Err(ResistanceError::InvalidSpec(format!(
                    "{name} must be even and at least 2, got {n}"
                )));
            }
        }
        Ok(())
    }

    /// Half the resolution, kept even; `None` when already minimal.
    fn coarsened(&self) -> Option<Self> {
        let half = |n: usize| ((n / 2) & !1).max(2);
        let coarse = Self {
            n_x: half(self.n_x),
            n_phi: half(self.n_phi),
            rule: self.rule,
        };
        (coarse != *self).then_some(coarse)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResistanceEstimate {
    pub value: f64,
    pub spec: QuadratureSpec,
    pub invalid_samples: usize,
    /// `|value - value at half resolution|`; NaN when no coarser grid exists.
    pub refinement_delta: f64,
}

/// Raw result of one quadrature pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub samples: usize,
    pub invalid_samples: usize,
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.carry
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct Row {
    sum: f64,
    invalid: usize,
}

fn integrand(cavity: &Cavity, x: f64, phi: f64, limits: TraceLimits) -> Option<f64> {
    exit_angle(cavity, x, phi, limits)
        .ok()
        .map(|out| (1.0 + (out - phi).cos()) * phi.cos())
}

/// Evaluates rows in parallel and reduces them in index order, so the result
/// does not depend on scheduling.
fn reduce_rows(rows: Vec<Row>, samples: usize, scale: f64) -> Result<Integral, ResistanceError> {
    let mut total = CompensatedSum::default();
    let mut invalid = 0;
    for row in &rows {
        total.add(row.sum);
        invalid += row.invalid;
    }
    if invalid as f64 > MAX_INVALID_FRACTION * samples as f64 {
        return Err(ResistanceError::IntegrationFailure { invalid, samples });
    }
    Ok(Integral {
        value: scale * total.total(),
        samples,
        invalid_samples: invalid,
    })
}

fn midpoint(cavity: &Cavity, n_x: usize, n_phi: usize, limits: TraceLimits) -> Result<Integral, ResistanceError> {
    let dx = 1.0 / n_x as f64;
    let dphi = PI / n_phi as f64;
    let rows: Vec<Row> = (0..n_x)
        .into_par_iter()
        .map(|i| {
            let x = -0.5 + (i as f64 + 0.5) * dx;
            let mut sum = CompensatedSum::default();
            let mut invalid = 0;
            for k in 0..n_phi {
                let phi = -FRAC_PI_2 + (k as f64 + 0.5) * dphi;
                match integrand(cavity, x, phi, limits) {
                    Some(v) => sum.add(v),
                    None => invalid += 1,
                }
            }
            Row { sum: sum.total(), invalid }
        })
        .collect();
    reduce_rows(rows, n_x * n_phi, 0.375 * dx * dphi)
}

/// Midpoints over `x > 0` doubled by the `(x, phi) -> (-x, -phi)` symmetry,
/// Simpson 1/3 in `phi` with the 4/2 pattern halved to 2/1. The endpoint
/// nodes `phi = ±pi/2` carry zero weight through `cos(phi)`.
fn simpson(cavity: &Cavity, n_x: usize, n_phi: usize, limits: TraceLimits) -> Result<Integral, ResistanceError> {
    let dx = 1.0 / n_x as f64;
    let dphi = PI / n_phi as f64;
    let rows: Vec<Row> = (n_x / 2 + 1..=n_x)
        .into_par_iter()
        .map(|i| {
            let x = -0.5 + (i as f64 - 0.5) * dx;
            let mut sum = CompensatedSum::default();
            let mut invalid = 0;
            for k in 1..n_phi {
                let phi = -FRAC_PI_2 + k as f64 * dphi;
                let weight = if k % 2 == 1 { 2.0 } else { 1.0 };
                match integrand(cavity, x, phi, limits) {
                    Some(v) => sum.add(weight * v),
                    None => invalid += 1,
                }
            }
            Row { sum: sum.total(), invalid }
        })
        .collect();
    reduce_rows(rows, (n_x / 2) * (n_phi - 1), 0.5 * dx * dphi)
}

/// One quadrature pass at exactly the given resolution.
pub fn integrate(cavity: &Cavity, spec: QuadratureSpec, limits: TraceLimits) -> Result<Integral, ResistanceError> {
    spec.validate()?;
    match spec.rule {
        Rule::Midpoint => midpoint(cavity, spec.n_x, spec.n_phi, limits),
        Rule::SimpsonSymmetric => {
            if !cavity.is_symmetric() {
                return Err(ResistanceError::NotSymmetric(cavity.name().to_owned()));
            }
            simpson(cavity, spec.n_x, spec.n_phi, limits)
        }
    }
}

/// Resistance at `spec`, plus the change from the half-resolution grid.
pub fn cavity_resistance_with(
    cavity: &Cavity,
    spec: QuadratureSpec,
    limits: TraceLimits,
) -> Result<ResistanceEstimate, ResistanceError> {
    let fine = integrate(cavity, spec, limits)?;
    let refinement_delta = match spec.coarsened() {
        Some(coarse) => (fine.value - integrate(cavity, coarse, limits)?.value).abs(),
        None => f64::NAN,
    };
    Ok(ResistanceEstimate {
        value: fine.value,
        spec,
        invalid_samples: fine.invalid_samples,
        refinement_delta,
    })
}

pub fn cavity_resistance(cavity: &Cavity, spec: QuadratureSpec) -> Result<ResistanceEstimate, ResistanceError> {
    cavity_resistance_with(cavity, spec, TraceLimits::default())
}

pub fn simpson_resistance(cavity: &Cavity, n_x: usize, n_phi: usize) -> Result<ResistanceEstimate, ResistanceError> {
    cavity_resistance(cavity, QuadratureSpec::new(n_x, n_phi, Rule::SimpsonSymmetric)?)
}

/// `|∂ conv B| / |∂ C_r|` for cavities spanning arcs of angle `eps_over_r`:
/// the chord-to-arc ratio `sin(e/2) / (e/2)`.
pub fn perimeter_ratio(eps_over_r: f64) -> f64 {
    let half = 0.5 * eps_over_r;
    if half == 0.0 {
        1.0
    } else {
        half.sin() / half
    }
}

/// Second-order expansion `1 - (eps/r)^2 / 24` of [`perimeter_ratio`].
pub fn perimeter_ratio_second_order(eps_over_r: f64) -> f64 {
    1.0 - eps_over_r * eps_over_r / 24.0
}

/// A disc whose rim is tiled by `n_cavities` equal cavities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BodySpec {
    n_cavities: usize,
}

impl BodySpec {
    pub fn new(n_cavities: usize) -> Result<Self, ResistanceError> {
        if n_cavities < 3 {
            return Err(ResistanceError::InvalidSpec(format!(
                "a body needs at least 3 cavities, got {n_cavities}"
            )));
        }
        Ok(Self { n_cavities })
    }

    pub fn n_cavities(&self) -> usize {
        self.n_cavities
    }

    pub fn eps_over_r(&self) -> f64 {
        2.0 * PI / self.n_cavities as f64
    }
}

pub fn body_resistance(body: BodySpec, r_cavity: f64) -> f64 {
    perimeter_ratio(body.eps_over_r()) * r_cavity
}

/// Weighted mean of the convex part (resistance 1) and the cavities, scaled
/// by the hull-to-disc perimeter ratio. `openings` holds `(L_i, R_i)`.
pub fn combine_cavity_resistances(convex_len: f64, openings: &[(f64, f64)], hull_ratio: f64) -> f64 {
    let total = convex_len + openings.iter().map(|(l, _)| l).sum::<f64>();
    let weighted = openings.iter().map(|(l, r)| l / total * r).sum::<f64>();
    hull_ratio * (convex_len / total + weighted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes::{make_double_parabola, make_flat, make_polyline, make_right_triangle, LEFT_END, RIGHT_END};
    use crate::geometry::Vec2;

    #[test]
    fn spec_validation() {
        assert!(QuadratureSpec::new(3, 4, Rule::Midpoint).is_err());
        assert!(QuadratureSpec::new(0, 4, Rule::Midpoint).is_err());
        assert!(QuadratureSpec::new(2, 2, Rule::SimpsonSymmetric).is_ok());
        let spec = QuadratureSpec::square(2000, Rule::SimpsonSymmetric).unwrap();
        assert_eq!(spec.coarsened().map(|s| s.n_x), Some(1000));
        let spec = QuadratureSpec::square(6, Rule::SimpsonSymmetric).unwrap();
        assert_eq!(spec.coarsened().map(|s| s.n_x), Some(2));
        assert_eq!(QuadratureSpec::square(2, Rule::Midpoint).unwrap().coarsened(), None);
    }

    #[test]
    fn compensated_sum_keeps_small_terms() {
        let mut s = CompensatedSum::default();
        s.add(1.0);
        for _ in 0..10 {
            s.add(1e-16);
        }
        s.add(-1.0);
        assert!((s.total() - 1e-15).abs() < 1e-30);
    }

    #[test]
    fn flat_cavity_closed_form() {
        // integrand (1 + cos 2phi) cos phi: midpoint error is O(dphi^2)
        let flat = make_flat();
        let est = cavity_resistance(&flat, QuadratureSpec::square(500, Rule::Midpoint).unwrap()).unwrap();
        assert!((est.value - 1.0).abs() < 1e-5, "{}", est.value);
        assert_eq!(est.invalid_samples, 0);
        let est = simpson_resistance(&flat, 100, 100).unwrap();
        assert!((est.value - 1.0).abs() < 1e-6, "{}", est.value);
    }

    #[test]
    fn simpson_requires_symmetry() {
        let asym = make_polyline(&[RIGHT_END, Vec2::new(0.2, 0.7), LEFT_END]).unwrap();
        assert!(matches!(
            simpson_resistance(&asym, 10, 10),
            Err(ResistanceError::NotSymmetric(_))
        ));
        assert!(cavity_resistance(&asym, QuadratureSpec::square(10, Rule::Midpoint).unwrap()).is_ok());
    }

    #[test]
    fn coarse_estimates_are_ordered() {
        let spec = QuadratureSpec::square(200, Rule::Midpoint).unwrap();
        let flat = cavity_resistance(&make_flat(), spec).unwrap().value;
        let tri = cavity_resistance(&make_right_triangle(), spec).unwrap().value;
        let dp = cavity_resistance(&make_double_parabola(), spec).unwrap().value;
        assert!(flat < tri && tri < dp && dp <= 1.5, "{flat} {tri} {dp}");
    }

    #[test]
    fn integration_failure_on_capped_trajectories() {
        // every trajectory needs at least 3 reflections
        let dp = make_double_parabola();
        let spec = QuadratureSpec::square(10, Rule::Midpoint).unwrap();
        let err = cavity_resistance_with(&dp, spec, TraceLimits::with_max_reflections(2)).unwrap_err();
        assert!(matches!(err, ResistanceError::IntegrationFailure { samples: 100, .. }));
    }

    #[test]
    fn perimeter_ratio_values() {
        assert_eq!(perimeter_ratio(0.0), 1.0);
        assert!((perimeter_ratio(1e-8) - 1.0).abs() < 1e-15);
        let e = 2.0 * PI / 42.0;
        let direct = (PI / 42.0).sin() / (PI / 42.0);
        assert_eq!(perimeter_ratio(e), direct);
        assert!((direct - 0.99907).abs() < 5e-6);
        // remainder is (eps/r)^4 / 1920 to leading order
        let r = perimeter_ratio(e) - perimeter_ratio_second_order(e);
        assert!((r / e.powi(4) - 1.0 / 1920.0).abs() < 1e-5);
    }

    #[test]
    fn body_examples() {
        let body = BodySpec::new(42).unwrap();
        assert!((body_resistance(body, 1.4965) - 1.4951).abs() < 1e-4);
        assert!((body_resistance(body, 1.0) - 0.99907).abs() < 5e-6);
        let big = BodySpec::new(1_000_000).unwrap();
        assert!((body_resistance(big, 1.4965) - 1.4965).abs() < 1e-10);
        assert!(BodySpec::new(2).is_err());
    }

    #[test]
    fn combination_examples() {
        assert_eq!(combine_cavity_resistances(2.0, &[], 1.0), 1.0);
        assert_eq!(combine_cavity_resistances(0.0, &[(3.0, 1.3)], 1.0), 1.3);
        let ratio = perimeter_ratio(2.0 * PI / 42.0);
        let openings = vec![(0.1, 1.4965); 42];
        let r = combine_cavity_resistances(0.0, &openings, ratio);
        assert!((r - 1.4951).abs() < 1e-4);
        assert!((r - body_resistance(BodySpec::new(42).unwrap(), 1.4965)).abs() < 1e-12);
        // half smooth, half cavities
        let r = combine_cavity_resistances(1.0, &[(1.0, 1.5)], 1.0);
        assert!((r - 1.25).abs() < 1e-15);
    }
}
