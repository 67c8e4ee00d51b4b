//! Exact 2D primitives: rays, boundary curves (segments and implicit conic
//! arcs), first-hit intersection and specular reflection.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::shapes::Cavity;

/// Re-hit guard: hits closer than this to the ray origin are ignored.
pub const MIN_TRAVEL: f64 = 1e-9;

/// Hits closer than this to a junction between two curves are rejected.
pub const CORNER_TOLERANCE: f64 = 1e-9;

/// Slack used when deciding whether a point belongs to a curve's extent.
const EXTENT_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        Vec2::new(self.x / n, self.y / n)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// A half-line with unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec2,
    pub direction: Vec2,
}

impl Ray {
    /// Builds a ray, normalizing `direction`.
    pub fn new(origin: Vec2, direction: Vec2) -> Self {
        Self {
            origin,
            direction: direction.normalized(),
        }
    }

    pub fn at(&self, t: f64) -> Vec2 {
        self.origin + self.direction * t
    }
}

/// General conic `A x² + B xy + C y² + D x + E y + F = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conic {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
}

impl Conic {
    pub const fn new(a: f64, b: f64, c: f64, d: f64, e: f64, f: f64) -> Self {
        Self { a, b, c, d, e, f }
    }

    pub fn eval(&self, p: Vec2) -> f64 {
        let Vec2 { x, y } = p;
        self.a * x * x + self.b * x * y + self.c * y * y + self.d * x + self.e * y + self.f
    }

    pub fn gradient(&self, p: Vec2) -> Vec2 {
        let Vec2 { x, y } = p;
        Vec2::new(
            2.0 * self.a * x + self.b * y + self.d,
            self.b * x + 2.0 * self.c * y + self.e,
        )
    }

    /// Ray parameters at which the ray meets the conic, unordered.
    fn ray_roots(&self, ray: &Ray) -> Roots {
        let Vec2 { x: px, y: py } = ray.origin;
        let Vec2 { x: dx, y: dy } = ray.direction;
        let qa = self.a * dx * dx + self.b * dx * dy + self.c * dy * dy;
        let qb = 2.0 * self.a * px * dx
            + self.b * (px * dy + py * dx)
            + 2.0 * self.c * py * dy
            + self.d * dx
            + self.e * dy;
        let qc = self.eval(ray.origin);
        solve_quadratic(qa, qb, qc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Roots {
    None,
    One(f64),
    Two(f64, f64),
}

/// Real roots of `a t² + b t + c`, degrading to the linear case when the
/// quadratic coefficient is negligible.
fn solve_quadratic(a: f64, b: f64, c: f64) -> Roots {
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == 0.0 {
        return Roots::None;
    }
    if a.abs() <= 1e-14 * scale {
        return if b == 0.0 { Roots::None } else { Roots::One(-c / b) };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Roots::None;
    }
    // sign-matched form: no cancellation between -b and sqrt(disc)
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    if q == 0.0 {
        return Roots::One(0.0);
    }
    Roots::Two(q / a, c / q)
}

/// Coordinate used to delimit a conic arc.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

/// Which multiple of the implicit gradient points into the cavity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    AlongGradient,
    AgainstGradient,
}

impl Orientation {
    fn sign(self) -> f64 {
        match self {
            Orientation::AlongGradient => 1.0,
            Orientation::AgainstGradient => -1.0,
        }
    }
}

/// A connected piece of a conic: the points of `conic` whose `axis`
/// coordinate lies in `interval`, optionally clipped on the other axis to
/// pick a single branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConicArc {
    pub conic: Conic,
    pub axis: Axis,
    pub interval: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip: Option<[f64; 2]>,
    pub orientation: Orientation,
    pub start: Vec2,
    pub end: Vec2,
}

impl ConicArc {
    fn contains(&self, p: Vec2) -> bool {
        let (along, across) = match self.axis {
            Axis::X => (p.x, p.y),
            Axis::Y => (p.y, p.x),
        };
        let [lo, hi] = self.interval;
        let slack = EXTENT_SLACK * (1.0 + lo.abs().max(hi.abs()));
        if along < lo - slack || along > hi + slack {
            return false;
        }
        match self.clip {
            Some([clo, chi]) => {
                let slack = EXTENT_SLACK * (1.0 + clo.abs().max(chi.abs()));
                across >= clo - slack && across <= chi + slack
            }
            None => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BoundaryCurve {
    /// Straight mirror from `p0` to `p1`; the inward side is on the left.
    Segment { p0: Vec2, p1: Vec2 },
    ConicArc(ConicArc),
}

impl BoundaryCurve {
    pub fn segment(p0: Vec2, p1: Vec2) -> Self {
        BoundaryCurve::Segment { p0, p1 }
    }

    pub fn start(&self) -> Vec2 {
        match self {
            BoundaryCurve::Segment { p0, .. } => *p0,
            BoundaryCurve::ConicArc(arc) => arc.start,
        }
    }

    pub fn end(&self) -> Vec2 {
        match self {
            BoundaryCurve::Segment { p1, .. } => *p1,
            BoundaryCurve::ConicArc(arc) => arc.end,
        }
    }

    /// Smallest ray parameter greater than `min_travel` at which the ray
    /// meets this curve.
    pub fn intersect(&self, ray: &Ray, min_travel: f64) -> Option<f64> {
        match self {
            BoundaryCurve::Segment { p0, p1 } => {
                let edge = *p1 - *p0;
                let denom = ray.direction.cross(edge);
                if denom == 0.0 {
                    return None;
                }
                let w = *p0 - ray.origin;
                let t = w.cross(edge) / denom;
                let s = w.cross(ray.direction) / denom;
                if t > min_travel && (-EXTENT_SLACK..=1.0 + EXTENT_SLACK).contains(&s) {
                    Some(t)
                } else {
                    None
                }
            }
            BoundaryCurve::ConicArc(arc) => {
                let accept = |t: f64| t > min_travel && arc.contains(ray.at(t));
                match arc.conic.ray_roots(ray) {
                    Roots::None => None,
                    Roots::One(t) => accept(t).then_some(t),
                    Roots::Two(t1, t2) => {
                        let (near, far) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
                        if accept(near) {
                            Some(near)
                        } else if accept(far) {
                            Some(far)
                        } else {
                            None
                        }
                    }
                }
            }
        }
    }

    /// Residual of the curve equation at `p` (signed distance for segments).
    pub fn residual(&self, p: Vec2) -> f64 {
        match self {
            BoundaryCurve::Segment { p0, p1 } => {
                let edge = *p1 - *p0;
                edge.cross(p - *p0) / edge.norm()
            }
            BoundaryCurve::ConicArc(arc) => arc.conic.eval(p),
        }
    }
}

/// Specular reflection `d − 2(d·n)n`.
pub fn reflect_direction(incoming: Vec2, normal: Vec2) -> Vec2 {
    incoming - normal * (2.0 * incoming.dot(normal))
}

/// Unit normal at `point` pointing into the cavity.
pub fn normal_at(curve: &BoundaryCurve, point: Vec2) -> Result<Vec2, GeometryError> {
    match curve {
        BoundaryCurve::Segment { p0, p1 } => {
            let edge = *p1 - *p0;
            if edge.norm() == 0.0 {
                return Err(GeometryError::SingularPoint { point });
            }
            Ok(edge.perp().normalized())
        }
        BoundaryCurve::ConicArc(arc) => {
            let g = arc.conic.gradient(point);
            let len = g.norm();
            if len == 0.0 || !len.is_finite() {
                return Err(GeometryError::SingularPoint { point });
            }
            Ok(g * (arc.orientation.sign() / len))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub point: Vec2,
    pub travel: f64,
    pub curve_index: usize,
    pub inward_normal: Vec2,
}

/// Outcome of following a ray to its next event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Crossing {
    Hit(Hit),
    /// The ray leaves through the opening at `point`.
    Exit { point: Vec2, travel: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GeometryError {
    #[error("ray from ({:.6}, {:.6}) escaped the cavity without crossing the opening", .origin.x, .origin.y)]
    Leak { origin: Vec2 },
    #[error("hit at ({:.6}, {:.6}) lies on a junction between curves", .point.x, .point.y)]
    CornerHit { point: Vec2 },
    #[error("curve normal is undefined at ({:.6}, {:.6})", .point.x, .point.y)]
    SingularPoint { point: Vec2 },
}

/// Follows `ray` to the nearest boundary curve or to the opening, whichever
/// comes first. The opening is tested before the curves, so a ray moving
/// down through it never tunnels to a curve beyond.
pub fn first_hit(ray: &Ray, cavity: &Cavity, min_travel: f64) -> Result<Crossing, GeometryError> {
    let exit = if ray.direction.y < 0.0 {
        let t = (-ray.origin.y / ray.direction.y).max(0.0);
        let x = ray.origin.x + t * ray.direction.x;
        (x.abs() <= 0.5 + EXTENT_SLACK).then_some(t)
    } else {
        None
    };

    let mut best: Option<(usize, f64)> = None;
    for (index, curve) in cavity.curves().iter().enumerate() {
        if let Some(t) = curve.intersect(ray, min_travel) {
            if best.is_none_or(|(_, b)| t < b) {
                best = Some((index, t));
            }
        }
    }

    match (exit, best) {
        (Some(te), Some((_, th))) if te <= th => Ok(Crossing::Exit {
            point: exit_point(ray, te),
            travel: te,
        }),
        (Some(te), None) => Ok(Crossing::Exit {
            point: exit_point(ray, te),
            travel: te,
        }),
        (_, Some((index, t))) => {
            let point = ray.at(t);
            if cavity
                .junctions()
                .iter()
                .any(|j| j.distance(point) < CORNER_TOLERANCE)
            {
                return Err(GeometryError::CornerHit { point });
            }
            let inward_normal = normal_at(&cavity.curves()[index], point)?;
            Ok(Crossing::Hit(Hit {
                point,
                travel: t,
                curve_index: index,
                inward_normal,
            }))
        }
        (None, None) => Err(GeometryError::Leak { origin: ray.origin }),
    }
}

fn exit_point(ray: &Ray, t: f64) -> Vec2 {
    Vec2::new(ray.origin.x + t * ray.direction.x, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes::{make_double_parabola, make_flat};
    use proptest::prelude::*;

    const SQRT2: f64 = std::f64::consts::SQRT_2;

    fn close(a: Vec2, b: Vec2, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    fn left_parabola() -> BoundaryCurve {
        BoundaryCurve::ConicArc(ConicArc {
            conic: Conic::new(0.0, 0.0, 0.25, -1.0, 0.0, -0.5),
            axis: Axis::Y,
            interval: [0.0, SQRT2],
            clip: None,
            orientation: Orientation::AgainstGradient,
            start: Vec2::new(0.0, SQRT2),
            end: Vec2::new(-0.5, 0.0),
        })
    }

    #[test]
    fn reflection_examples() {
        let n = Vec2::new(0.0, 1.0);
        assert_eq!(reflect_direction(Vec2::new(0.0, -1.0), n), Vec2::new(0.0, 1.0));
        assert_eq!(reflect_direction(Vec2::new(1.0, 0.0), n), Vec2::new(1.0, 0.0));
        let h = SQRT2 / 2.0;
        assert!(close(reflect_direction(Vec2::new(h, -h), n), Vec2::new(h, h), 1e-15));
    }

    #[test]
    fn parabola_coefficients_reproduce_curve() {
        let curve = left_parabola();
        for i in 0..=20 {
            let y = SQRT2 * i as f64 / 20.0;
            let p = Vec2::new(y * y / 4.0 - 0.5, y);
            assert!(curve.residual(p).abs() < 1e-15);
        }
    }

    #[test]
    fn normal_examples() {
        let curve = left_parabola();
        let n = normal_at(&curve, Vec2::new(-0.5, 0.0)).unwrap();
        assert!(close(n, Vec2::new(1.0, 0.0), 1e-15));

        // gradient (-1, sqrt2/2) normalized, flipped toward the interior
        let g = Vec2::new(-1.0, SQRT2 / 2.0);
        let expected = -g.normalized();
        let n = normal_at(&curve, Vec2::new(0.0, SQRT2)).unwrap();
        assert!(close(n, expected, 1e-15));
        assert!((n.x - 0.816_496_580_927_726).abs() < 1e-12);
        assert!((n.y + 0.577_350_269_189_626).abs() < 1e-12);
        // the interior point (0, 1) lies on the side the normal points to
        assert!(n.dot(Vec2::new(0.0, 1.0) - Vec2::new(0.0, SQRT2)) > 0.0);

        let floor = BoundaryCurve::segment(Vec2::new(-0.5, 0.0), Vec2::new(0.5, 0.0));
        assert_eq!(normal_at(&floor, Vec2::new(0.1, 0.0)).unwrap(), Vec2::new(0.0, 1.0));
    }

    #[test]
    fn singular_conic_point_is_reported() {
        // x² − y² = 0 has a zero gradient at the origin
        let arc = BoundaryCurve::ConicArc(ConicArc {
            conic: Conic::new(1.0, 0.0, -1.0, 0.0, 0.0, 0.0),
            axis: Axis::Y,
            interval: [0.0, 1.0],
            clip: Some([0.0, 1.0]),
            orientation: Orientation::AlongGradient,
            start: Vec2::new(1.0, 1.0),
            end: Vec2::new(0.0, 0.0),
        });
        assert!(matches!(
            normal_at(&arc, Vec2::new(0.0, 0.0)),
            Err(GeometryError::SingularPoint { .. })
        ));
    }

    #[test]
    fn first_hit_examples() {
        let dp = make_double_parabola();
        let phi = 75f64.to_radians();
        let ray = Ray::new(Vec2::new(0.45, 0.0), Vec2::new(-phi.sin(), phi.cos()));
        match first_hit(&ray, &dp, MIN_TRAVEL).unwrap() {
            Crossing::Hit(hit) => {
                let p = hit.point;
                assert!((p.x - (p.y * p.y / 4.0 - 0.5)).abs() < 1e-12, "{p:?}");
            }
            other => panic!("expected a hit, got {other:?}"),
        }

        let ray = Ray::new(Vec2::new(0.0, 1.0), Vec2::new(0.0, -1.0));
        assert_eq!(
            first_hit(&ray, &dp, MIN_TRAVEL).unwrap(),
            Crossing::Exit { point: Vec2::new(0.0, 0.0), travel: 1.0 }
        );

        let ray = Ray::new(Vec2::new(-0.3, 0.0), Vec2::new(0.0, 1.0));
        match first_hit(&ray, &dp, MIN_TRAVEL).unwrap() {
            Crossing::Hit(hit) => {
                assert!(close(hit.point, Vec2::new(-0.3, 2.0 * 0.2f64.sqrt()), 1e-12));
                assert!((hit.point.y - 0.894_427_190_999_916).abs() < 1e-12);
            }
            other => panic!("expected a hit, got {other:?}"),
        }
    }

    #[test]
    fn apex_hit_is_a_corner() {
        let dp = make_double_parabola();
        let ray = Ray::new(Vec2::new(0.0, 0.5), Vec2::new(0.0, 1.0));
        assert!(matches!(
            first_hit(&ray, &dp, MIN_TRAVEL),
            Err(GeometryError::CornerHit { .. })
        ));
    }

    #[test]
    fn upward_ray_in_flat_cavity_leaks() {
        let flat = make_flat();
        let ray = Ray::new(Vec2::new(0.0, 0.5), Vec2::new(0.0, 1.0));
        assert!(matches!(
            first_hit(&ray, &flat, MIN_TRAVEL),
            Err(GeometryError::Leak { .. })
        ));
    }

    #[test]
    fn quadratic_solver_is_stable() {
        // roots 1e-10 and 1e6: naive formula loses the small one entirely
        match solve_quadratic(1.0, -(1e6 + 1e-10), 1e-4) {
            Roots::Two(a, b) => {
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                assert!((lo - 1e-10).abs() < 1e-22);
                assert!((hi - 1e6).abs() < 1e-6);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(solve_quadratic(0.0, 2.0, -4.0), Roots::One(2.0));
        assert_eq!(solve_quadratic(1.0, 0.0, 1.0), Roots::None);
    }

    fn unit() -> impl Strategy<Value = Vec2> {
        (0.0..std::f64::consts::TAU).prop_map(|a| Vec2::new(a.cos(), a.sin()))
    }

    proptest! {
        #[test]
        fn reflection_is_an_isometric_involution(d in unit(), n in unit()) {
            let r = reflect_direction(d, n);
            prop_assert!((r.norm() - 1.0).abs() < 1e-12);
            prop_assert!(close(reflect_direction(r, n), d, 1e-12));
            prop_assert!((r.dot(n) + d.dot(n)).abs() < 1e-12);
            prop_assert!((r.cross(n) - d.cross(n)).abs() < 1e-12);
        }

        #[test]
        fn conic_hits_satisfy_the_implicit_equation(
            x in -0.49f64..0.49, y in 0.0f64..1.0, angle in 0.0..std::f64::consts::TAU,
        ) {
            let dp = make_double_parabola();
            // stay strictly inside: |x| < g(y)
            prop_assume!(x.abs() < 0.5 - y * y / 4.0 - 1e-6);
            let ray = Ray::new(Vec2::new(x, y), Vec2::new(angle.cos(), angle.sin()));
            match first_hit(&ray, &dp, MIN_TRAVEL) {
                Ok(Crossing::Hit(hit)) => {
                    let curve = &dp.curves()[hit.curve_index];
                    prop_assert!(curve.residual(hit.point).abs() < 1e-9);
                    prop_assert!(hit.travel > MIN_TRAVEL);
                }
                Ok(Crossing::Exit { point, .. }) => prop_assert!(point.x.abs() <= 0.5 + 1e-12),
                Err(GeometryError::CornerHit { .. }) => {}
                Err(e) => prop_assert!(false, "{e}"),
            }
        }
    }
}
