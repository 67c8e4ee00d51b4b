//! Cavity families normalized to the unit opening `[-1/2, 1/2] × {0}`.
//!
//! A cavity is a chain of boundary curves running right-to-left from
//! `(1/2, 0)` to `(-1/2, 0)` through the upper half-plane. Together with the
//! opening it bounds the region particles bounce around in.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Axis, BoundaryCurve, Conic, ConicArc, Orientation, Vec2};

/// Tolerance on chain endpoints.
const JOIN_TOLERANCE: f64 = 1e-12;
/// Tolerance for the mirror-symmetry test.
const MIRROR_TOLERANCE: f64 = 1e-9;
const SAMPLES_PER_CURVE: usize = 64;

pub const RIGHT_END: Vec2 = Vec2::new(0.5, 0.0);
pub const LEFT_END: Vec2 = Vec2::new(-0.5, 0.0);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ShapeError {
    #[error("invalid shape: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ShapeError {
    ShapeError::Invalid(msg.into())
}

/// Label attached to each boundary curve, used when reporting which face a
/// reflection happened on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Face {
    Left,
    Right,
    /// Anything else, identified by its index in the chain.
    Segment(usize),
}

impl std::fmt::Display for Face {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Face::Left => f.write_str("L"),
            Face::Right => f.write_str("R"),
            Face::Segment(i) => write!(f, "S{i}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CavityDocument", into = "CavityDocument")]
pub struct Cavity {
    name: String,
    symmetric: bool,
    curves: Vec<BoundaryCurve>,
    faces: Vec<Face>,
    junctions: Vec<Vec2>,
}

impl Cavity {
    /// Validates the chain and detects mirror symmetry about `x = 0`.
    pub fn new(
        name: impl Into<String>,
        curves: Vec<BoundaryCurve>,
        faces: Vec<Face>,
    ) -> Result<Self, ShapeError> {
        if curves.is_empty() {
            return Err(invalid("a cavity needs at least one curve"));
        }
        if faces.len() != curves.len() {
            return Err(invalid("one face label per curve is required"));
        }
        if curves[0].start().distance(RIGHT_END) > JOIN_TOLERANCE {
            return Err(invalid("chain must start at (1/2, 0)"));
        }
        if curves[curves.len() - 1].end().distance(LEFT_END) > JOIN_TOLERANCE {
            return Err(invalid("chain must end at (-1/2, 0)"));
        }
        for (i, pair) in curves.windows(2).enumerate() {
            if pair[0].end().distance(pair[1].start()) > JOIN_TOLERANCE {
                return Err(invalid(format!("curves {i} and {} do not meet", i + 1)));
            }
        }
        for (i, curve) in curves.iter().enumerate() {
            check_curve(i, curve)?;
        }
        check_segments_disjoint(&curves)?;

        let junctions = curves.windows(2).map(|pair| pair[0].end()).collect();
        let mut cavity = Self {
            name: name.into(),
            symmetric: false,
            curves,
            faces,
            junctions,
        };
        cavity.symmetric = cavity.mirror_symmetric();
        Ok(cavity)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn curves(&self) -> &[BoundaryCurve] {
        &self.curves
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn face(&self, curve_index: usize) -> Face {
        self.faces[curve_index]
    }

    /// Interior junction points between consecutive curves.
    pub fn junctions(&self) -> &[Vec2] {
        &self.junctions
    }

    /// Points spread along every curve of the chain.
    pub fn sample_boundary(&self, per_curve: usize) -> Vec<Vec2> {
        self.curves
            .iter()
            .flat_map(|c| sample_curve(c, per_curve))
            .collect()
    }

    /// Whether `p` lies on some curve of the chain within `tol`.
    pub fn on_boundary(&self, p: Vec2, tol: f64) -> bool {
        self.curves.iter().any(|c| distance_to_curve(c, p) <= tol)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    fn mirror_symmetric(&self) -> bool {
        self.sample_boundary(SAMPLES_PER_CURVE)
            .into_iter()
            .all(|p| self.on_boundary(Vec2::new(-p.x, p.y), MIRROR_TOLERANCE))
    }
}

fn check_curve(index: usize, curve: &BoundaryCurve) -> Result<(), ShapeError> {
    match curve {
        BoundaryCurve::Segment { p0, p1 } => {
            if !p0.is_finite() || !p1.is_finite() {
                return Err(invalid(format!("segment {index} has non-finite endpoints")));
            }
            if p0.distance(*p1) <= JOIN_TOLERANCE {
                return Err(invalid(format!("segment {index} is degenerate")));
            }
        }
        BoundaryCurve::ConicArc(arc) => {
            let [lo, hi] = arc.interval;
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(invalid(format!("arc {index} has a degenerate interval")));
            }
            if let Some([clo, chi]) = arc.clip {
                if !(clo.is_finite() && chi.is_finite() && clo < chi) {
                    return Err(invalid(format!("arc {index} has a degenerate clip window")));
                }
            }
            for end in [arc.start, arc.end] {
                if distance_to_curve(curve, end) > 1e-9 {
                    return Err(invalid(format!("arc {index} endpoint is off the conic")));
                }
            }
        }
    }
    if sample_curve(curve, SAMPLES_PER_CURVE)
        .iter()
        .any(|p| p.y < -JOIN_TOLERANCE)
    {
        return Err(invalid(format!("curve {index} dips below the opening")));
    }
    Ok(())
}

/// Rejects polylines whose non-adjacent segments cross.
fn check_segments_disjoint(curves: &[BoundaryCurve]) -> Result<(), ShapeError> {
    let segments: Vec<(usize, Vec2, Vec2)> = curves
        .iter()
        .enumerate()
        .filter_map(|(i, c)| match c {
            BoundaryCurve::Segment { p0, p1 } => Some((i, *p0, *p1)),
            BoundaryCurve::ConicArc(_) => None,
        })
        .collect();
    for (a, &(i, p0, p1)) in segments.iter().enumerate() {
        for &(j, q0, q1) in &segments[a + 1..] {
            if j == i + 1 {
                // adjacent: only a fold-back onto the previous segment is a problem
                let e = p1 - p0;
                let f = q1 - q0;
                if e.cross(f).abs() <= 1e-15 * e.norm() * f.norm() && e.dot(f) < 0.0 {
                    return Err(invalid(format!("segments {i} and {j} fold back")));
                }
                continue;
            }
            if segments_touch(p0, p1, q0, q1) {
                return Err(invalid(format!("segments {i} and {j} intersect")));
            }
        }
    }
    Ok(())
}

fn segments_touch(p0: Vec2, p1: Vec2, q0: Vec2, q1: Vec2) -> bool {
    let d1 = (q1 - q0).cross(p0 - q0);
    let d2 = (q1 - q0).cross(p1 - q0);
    let d3 = (p1 - p0).cross(q0 - p0);
    let d4 = (p1 - p0).cross(q1 - p0);
    (d1 * d2 <= 0.0) && (d3 * d4 <= 0.0) && !(d1 == 0.0 && d2 == 0.0 && !overlap(p0, p1, q0, q1))
}

fn overlap(p0: Vec2, p1: Vec2, q0: Vec2, q1: Vec2) -> bool {
    let within = |a: f64, b: f64, c: f64, d: f64| a.min(b) <= c.max(d) && c.min(d) <= a.max(b);
    within(p0.x, p1.x, q0.x, q1.x) && within(p0.y, p1.y, q0.y, q1.y)
}

/// Points of the arc whose parameter coordinate equals `v`.
/// Rebuilds a point from (fixed, free) coordinates.
type Lift = fn(f64, f64) -> Vec2;

fn arc_points_at(arc: &ConicArc, v: f64) -> Vec<Vec2> {
    let Conic { a, b, c, d, e, f } = arc.conic;
    // quadratic in the free coordinate u
    let (qa, qb, qc, make): (f64, f64, f64, Lift) = match arc.axis {
        Axis::Y => (a, b * v + d, c * v * v + e * v + f, |v, u| Vec2::new(u, v)),
        Axis::X => (c, b * v + e, a * v * v + d * v + f, |v, u| Vec2::new(v, u)),
    };
    let roots: Vec<f64> = if qa.abs() <= 1e-14 * qa.abs().max(qb.abs()).max(qc.abs()) {
        if qb == 0.0 {
            vec![]
        } else {
            vec![-qc / qb]
        }
    } else {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc < 0.0 {
            vec![]
        } else {
            let q = -0.5 * (qb + qb.signum() * disc.sqrt());
            if q == 0.0 {
                vec![0.0]
            } else {
                vec![q / qa, qc / q]
            }
        }
    };
    roots
        .into_iter()
        .map(|u| make(v, u))
        .filter(|p| match arc.clip {
            Some([lo, hi]) => {
                let across = match arc.axis {
                    Axis::Y => p.x,
                    Axis::X => p.y,
                };
                across >= lo - 1e-12 && across <= hi + 1e-12
            }
            None => true,
        })
        .collect()
}

fn sample_curve(curve: &BoundaryCurve, n: usize) -> Vec<Vec2> {
    let n = n.max(2);
    match curve {
        BoundaryCurve::Segment { p0, p1 } => (0..n)
            .map(|i| {
                let s = i as f64 / (n - 1) as f64;
                *p0 + (*p1 - *p0) * s
            })
            .collect(),
        BoundaryCurve::ConicArc(arc) => {
            let [lo, hi] = arc.interval;
            (0..n)
                .flat_map(|i| arc_points_at(arc, lo + (hi - lo) * i as f64 / (n - 1) as f64))
                .collect()
        }
    }
}

fn distance_to_curve(curve: &BoundaryCurve, p: Vec2) -> f64 {
    match curve {
        BoundaryCurve::Segment { p0, p1 } => {
            let e = *p1 - *p0;
            let s = ((p - *p0).dot(e) / e.dot(e)).clamp(0.0, 1.0);
            p.distance(*p0 + e * s)
        }
        BoundaryCurve::ConicArc(arc) => {
            let v = match arc.axis {
                Axis::X => p.x,
                Axis::Y => p.y,
            };
            let [lo, hi] = arc.interval;
            let slack = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
            if v < lo - slack || v > hi + slack {
                return f64::INFINITY;
            }
            arc_points_at(arc, v.clamp(lo, hi))
                .into_iter()
                .map(|q| q.distance(p))
                .fold(f64::INFINITY, f64::min)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFamilyParams {
    pub h: f64,
    pub beta: f64,
}

impl QuadraticFamilyParams {
    pub fn new(h: f64, beta: f64) -> Self {
        Self { h, beta }
    }

    /// Leading coefficient chosen so that `g(h) = 0`.
    pub fn alpha(&self) -> f64 {
        (-self.beta * self.h - 0.5) / (self.h * self.h)
    }

    /// Half-width profile `g(y) = α y² + β y + 1/2`.
    pub fn g(&self, y: f64) -> f64 {
        0.5 + y * (self.beta + self.alpha() * y)
    }

    /// `g ≥ 0` on `[0, h]`. For convex profiles the second root of `g` is
    /// `1/(2αh)`, which stays beyond `h` exactly when `βh ≥ -1`.
    pub fn is_valid(&self) -> bool {
        self.h.is_finite() && self.h > 0.0 && self.beta.is_finite() && self.beta * self.h >= -1.0
    }
}

pub fn make_flat() -> Cavity {
    Cavity::new(
        "flat",
        vec![BoundaryCurve::segment(RIGHT_END, LEFT_END)],
        vec![Face::Segment(0)],
    )
    .expect("flat cavity is valid")
}

/// Isosceles right triangle with apex `(0, 1/2)`: a 2D corner reflector.
pub fn make_right_triangle() -> Cavity {
    make_polyline(&[RIGHT_END, Vec2::new(0.0, 0.5), LEFT_END])
        .expect("triangle is valid")
        .with_name("right-triangle")
}

pub fn make_rectangle(depth: f64) -> Result<Cavity, ShapeError> {
    if !(depth.is_finite() && depth > 0.0) {
        return Err(invalid(format!("rectangle depth must be positive, got {depth}")));
    }
    Ok(make_polyline(&[
        RIGHT_END,
        Vec2::new(0.5, depth),
        Vec2::new(-0.5, depth),
        LEFT_END,
    ])?
    .with_name("rectangle"))
}

pub fn make_polyline(vertices: &[Vec2]) -> Result<Cavity, ShapeError> {
    if vertices.len() < 2 {
        return Err(invalid("a polyline needs at least two vertices"));
    }
    if let Some(p) = vertices.iter().find(|p| p.y < 0.0 || !p.is_finite()) {
        return Err(invalid(format!("vertex ({}, {}) is below the opening", p.x, p.y)));
    }
    let curves: Vec<BoundaryCurve> = vertices
        .windows(2)
        .map(|w| BoundaryCurve::segment(w[0], w[1]))
        .collect();
    let faces = (0..curves.len()).map(Face::Segment).collect();
    Cavity::new("polyline", curves, faces)
}

pub fn make_quadratic(params: QuadraticFamilyParams) -> Result<Cavity, ShapeError> {
    if !params.is_valid() {
        return Err(invalid(format!(
            "g is negative inside (0, h) for h = {}, beta = {}",
            params.h, params.beta
        )));
    }
    quadratic_cavity("quadratic", params.h, params.alpha(), params.beta)
}

/// Arcs `x = ±(y²/4 − 1/2)` on `y ∈ [0, √2]`; the focus of each parabola is
/// the vertex of the other.
pub fn make_double_parabola() -> Cavity {
    quadratic_cavity("double-parabola", std::f64::consts::SQRT_2, -0.25, 0.0)
        .expect("double parabola is valid")
}

/// Right arc `x = g(y)` and left arc `x = -g(y)`, stored as implicit conics.
fn quadratic_cavity(name: &str, h: f64, alpha: f64, beta: f64) -> Result<Cavity, ShapeError> {
    let apex = Vec2::new(0.0, h);
    let right = ConicArc {
        // x - g(y) = 0, negative inside
        conic: Conic::new(0.0, 0.0, -alpha, 1.0, -beta, -0.5),
        axis: Axis::Y,
        interval: [0.0, h],
        clip: None,
        orientation: Orientation::AgainstGradient,
        start: RIGHT_END,
        end: apex,
    };
    let left = ConicArc {
        // -x - g(y) = 0, negative inside
        conic: Conic::new(0.0, 0.0, -alpha, -1.0, -beta, -0.5),
        axis: Axis::Y,
        interval: [0.0, h],
        clip: None,
        orientation: Orientation::AgainstGradient,
        start: apex,
        end: LEFT_END,
    };
    Cavity::new(
        name,
        vec![BoundaryCurve::ConicArc(right), BoundaryCurve::ConicArc(left)],
        vec![Face::Right, Face::Left],
    )
}

/// On-disk form of a cavity.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct CavityDocument {
    name: String,
    #[serde(default)]
    symmetric: bool,
    curves: Vec<CurveEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CurveEntry {
    #[serde(flatten)]
    curve: BoundaryCurve,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    face: Option<Face>,
}

impl TryFrom<CavityDocument> for Cavity {
    type Error = ShapeError;

    fn try_from(doc: CavityDocument) -> Result<Self, ShapeError> {
        let faces = doc
            .curves
            .iter()
            .enumerate()
            .map(|(i, c)| c.face.unwrap_or(Face::Segment(i)))
            .collect();
        let curves = doc.curves.into_iter().map(|c| c.curve).collect();
        let cavity = Cavity::new(doc.name, curves, faces)?;
        if doc.symmetric && !cavity.symmetric {
            return Err(invalid("document claims mirror symmetry the curves do not have"));
        }
        Ok(cavity)
    }
}

impl From<Cavity> for CavityDocument {
    fn from(cavity: Cavity) -> Self {
        CavityDocument {
            name: cavity.name,
            symmetric: cavity.symmetric,
            curves: cavity
                .curves
                .into_iter()
                .zip(cavity.faces)
                .map(|(curve, face)| CurveEntry { curve, face: Some(face) })
                .collect(),
        }
    }
}

impl Cavity {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("cavity serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ShapeError> {
        serde_json::from_str(text).map_err(|e| invalid(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SQRT2: f64 = std::f64::consts::SQRT_2;

    #[test]
    fn flat_is_one_segment() {
        let flat = make_flat();
        assert_eq!(flat.curves().len(), 1);
        assert!(flat.is_symmetric());
        assert!(flat.junctions().is_empty());
    }

    #[test]
    fn triangle_apex() {
        let tri = make_right_triangle();
        assert_eq!(tri.junctions(), &[Vec2::new(0.0, 0.5)]);
        assert!(tri.is_symmetric());
        let poly = make_polyline(&[RIGHT_END, Vec2::new(0.0, 0.5), LEFT_END]).unwrap();
        assert_eq!(poly.curves(), tri.curves());
        assert_eq!(poly.faces(), tri.faces());
    }

    #[test]
    fn rectangle_chain() {
        let rect = make_rectangle(1.0).unwrap();
        let expected = [RIGHT_END, Vec2::new(0.5, 1.0), Vec2::new(-0.5, 1.0), LEFT_END];
        let mut chain = vec![rect.curves()[0].start()];
        chain.extend(rect.curves().iter().map(|c| c.end()));
        assert_eq!(chain, expected);
        assert_eq!(make_polyline(&expected).unwrap().curves(), rect.curves());
        assert!(make_rectangle(0.0).is_err());
        assert!(make_rectangle(-1.0).is_err());
    }

    #[test]
    fn single_segment_polyline_is_flat() {
        assert_eq!(
            make_polyline(&[RIGHT_END, LEFT_END]).unwrap().curves(),
            make_flat().curves()
        );
    }

    #[test]
    fn polyline_validation() {
        assert!(make_polyline(&[Vec2::new(0.4, 0.0), LEFT_END]).is_err());
        assert!(make_polyline(&[RIGHT_END, Vec2::new(0.0, -0.1), LEFT_END]).is_err());
        // bow tie: segments 0 and 2 cross
        let crossing = [
            RIGHT_END,
            Vec2::new(-0.4, 1.0),
            Vec2::new(0.4, 1.0),
            LEFT_END,
        ];
        assert!(make_polyline(&crossing).is_err());
        let asym = make_polyline(&[RIGHT_END, Vec2::new(0.2, 0.7), LEFT_END]).unwrap();
        assert!(!asym.is_symmetric());
    }

    #[test]
    fn quadratic_examples() {
        let p = QuadraticFamilyParams::new(SQRT2, 0.0);
        assert!((p.alpha() + 0.25).abs() < 1e-15);
        assert!((p.g(1.0) - 0.25).abs() < 1e-15);

        // alpha = 0: straight sides, triangle with apex (0, 1)
        let line = QuadraticFamilyParams::new(1.0, -0.5);
        assert_eq!(line.alpha(), 0.0);
        let cav = make_quadratic(line).unwrap();
        assert_eq!(cav.junctions(), &[Vec2::new(0.0, 1.0)]);
        assert!(cav.on_boundary(Vec2::new(0.25, 0.5), 1e-15));

        assert!(make_quadratic(QuadraticFamilyParams::new(2.0, -0.6)).is_err());
        assert!(make_quadratic(QuadraticFamilyParams::new(2.0, -0.5)).is_ok());
        assert!(make_quadratic(QuadraticFamilyParams::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn double_parabola_matches_quadratic_family() {
        let dp = make_double_parabola();
        let q = make_quadratic(QuadraticFamilyParams::new(SQRT2, 0.0)).unwrap();
        assert_eq!(dp.junctions(), &[Vec2::new(0.0, SQRT2)]);
        assert!(dp.is_symmetric() && q.is_symmetric());
        let conic = match dp.curves()[1] {
            BoundaryCurve::ConicArc(arc) => arc.conic,
            _ => unreachable!(),
        };
        assert_eq!(conic, Conic::new(0.0, 0.0, 0.25, -1.0, 0.0, -0.5));
        for i in 0..100 {
            let y = SQRT2 * i as f64 / 99.0;
            for side in [-1.0, 1.0] {
                let p = Vec2::new(side * (0.5 - y * y / 4.0), y);
                assert!(dp.on_boundary(p, 1e-12));
                assert!(q.on_boundary(p, 1e-12));
            }
        }
    }

    #[test]
    fn double_parabola_focal_property() {
        // x = y²/4 - 1/2 opens toward +x with focal length 1: focus at (1/2, 0)
        let left_vertex = Vec2::new(-0.5, 0.0);
        let focal_length = 1.0;
        let left_focus = left_vertex + Vec2::new(focal_length, 0.0);
        assert_eq!(left_focus, RIGHT_END);
        // every point on the left parabola is equidistant from the focus and the directrix x = -3/2
        for i in 0..=20 {
            let y = SQRT2 * i as f64 / 20.0;
            let p = Vec2::new(y * y / 4.0 - 0.5, y);
            assert!((p.distance(left_focus) - (p.x + 1.5)).abs() < 1e-14);
        }
    }

    #[test]
    fn json_round_trip_and_validation() {
        for cav in [make_double_parabola(), make_right_triangle(), make_rectangle(3.0).unwrap()] {
            let back = Cavity::from_json(&cav.to_json()).unwrap();
            assert_eq!(back, cav);
        }
        let lying = r#"{"name":"x","symmetric":true,"curves":[
            {"kind":"segment","p0":{"x":0.5,"y":0.0},"p1":{"x":0.2,"y":0.7}},
            {"kind":"segment","p0":{"x":0.2,"y":0.7},"p1":{"x":-0.5,"y":0.0}}]}"#;
        assert!(Cavity::from_json(lying).is_err());
        let open = r#"{"name":"x","curves":[
            {"kind":"segment","p0":{"x":0.5,"y":0.0},"p1":{"x":0.0,"y":0.7}}]}"#;
        assert!(Cavity::from_json(open).is_err());
    }

    proptest! {
        #[test]
        fn quadratic_endpoint_conditions(h in 0.1f64..4.0, beta in -1.0f64..1.0) {
            let p = QuadraticFamilyParams::new(h, beta);
            prop_assume!(p.is_valid());
            prop_assert_eq!(p.g(0.0), 0.5);
            prop_assert!(p.g(h).abs() < 1e-14);
            let cav = make_quadratic(p).unwrap();
            prop_assert!(cav.is_symmetric());
            for q in cav.sample_boundary(16) {
                prop_assert!(q.y >= 0.0);
                prop_assert!(cav.on_boundary(Vec2::new(-q.x, q.y), 1e-9));
            }
        }
    }
}
