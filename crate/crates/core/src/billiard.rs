//! Particle trajectories inside a cavity.
//!
//! Angle convention: a particle entering at `(x, 0)` with angle `phi` moves
//! with velocity `(-sin phi, cos phi)`; it leaves with velocity
//! `(sin phi_out, -cos phi_out)`. A flat mirror maps `phi` to `-phi`, a
//! perfect retroreflector maps it to itself.

use std::f64::consts::FRAC_PI_2;

use serde::Serialize;
use thiserror::Error;

use crate::geometry::{first_hit, reflect_direction, Crossing, GeometryError, Ray, Vec2, MIN_TRAVEL};
use crate::shapes::{Cavity, Face};

/// Guard for the entry step. Curves lying on the opening itself (the flat
/// cavity) are hit at zero travel.
const ENTRY_GUARD: f64 = -f64::MIN_POSITIVE;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum EntryError {
    #[error("entry abscissa {0} is outside (-1/2, 1/2)")]
    Abscissa(f64),
    #[error("entry angle {0} is outside (-pi/2, pi/2)")]
    Angle(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntryState {
    x: f64,
    phi: f64,
}

impl EntryState {
    pub fn new(x: f64, phi: f64) -> Result<Self, EntryError> {
        if !(x > -0.5 && x < 0.5) {
            return Err(EntryError::Abscissa(x));
        }
        if !(phi > -FRAC_PI_2 && phi < FRAC_PI_2) {
            return Err(EntryError::Angle(phi));
        }
        Ok(Self { x, phi })
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn velocity(&self) -> Vec2 {
        Vec2::new(-self.phi.sin(), self.phi.cos())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceLimits {
    pub max_reflections: usize,
    pub min_travel: f64,
}

impl Default for TraceLimits {
    fn default() -> Self {
        Self {
            max_reflections: 1000,
            min_travel: MIN_TRAVEL,
        }
    }
}

impl TraceLimits {
    pub fn with_max_reflections(max_reflections: usize) -> Self {
        Self {
            max_reflections: max_reflections.max(1),
            ..Self::default()
        }
    }
}

/// Why a trajectory was discarded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Invalidity {
    CornerHit,
    CapExceeded,
    SingularPoint,
    /// The tracer lost the particle; always a geometry bug.
    Leak,
    /// The entry pair lies outside the open domain.
    OutOfDomain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryResult {
    pub entry: EntryState,
    pub exit_x: f64,
    pub exit_phi: f64,
    pub reflections: usize,
    pub points: Vec<Vec2>,
    pub faces: Vec<Face>,
    pub invalid: Option<Invalidity>,
}

impl TrajectoryResult {
    pub fn valid(&self) -> bool {
        self.invalid.is_none()
    }

    /// Entry point, reflection points and exit point in order.
    pub fn polyline(&self) -> Vec<Vec2> {
        let mut path = Vec::with_capacity(self.points.len() + 2);
        path.push(Vec2::new(self.entry.x, 0.0));
        path.extend_from_slice(&self.points);
        if self.valid() {
            path.push(Vec2::new(self.exit_x, 0.0));
        }
        path
    }
}

pub fn trace(cavity: &Cavity, entry: EntryState, limits: TraceLimits) -> TrajectoryResult {
    let mut ray = Ray {
        origin: Vec2::new(entry.x, 0.0),
        direction: entry.velocity(),
    };
    let mut points = Vec::new();
    let mut faces = Vec::new();
    let mut guard = ENTRY_GUARD;

    let invalid = loop {
        match first_hit(&ray, cavity, guard) {
            Ok(Crossing::Exit { point, .. }) => {
                let v = ray.direction;
                return TrajectoryResult {
                    entry,
                    exit_x: point.x.clamp(-0.5, 0.5),
                    exit_phi: v.x.atan2(-v.y),
                    reflections: points.len(),
                    points,
                    faces,
                    invalid: None,
                };
            }
            Ok(Crossing::Hit(hit)) => {
                if points.len() == limits.max_reflections {
                    break Invalidity::CapExceeded;
                }
                points.push(hit.point);
                faces.push(cavity.face(hit.curve_index));
                ray = Ray {
                    origin: hit.point,
                    direction: reflect_direction(ray.direction, hit.inward_normal).normalized(),
                };
                guard = limits.min_travel;
            }
            Err(GeometryError::CornerHit { .. }) => break Invalidity::CornerHit,
            Err(GeometryError::SingularPoint { .. }) => break Invalidity::SingularPoint,
            Err(GeometryError::Leak { .. }) => break Invalidity::Leak,
        }
    };
    TrajectoryResult {
        entry,
        exit_x: f64::NAN,
        exit_phi: f64::NAN,
        reflections: points.len(),
        points,
        faces,
        invalid: Some(invalid),
    }
}

/// Exit angle for entry `(x, phi)`, or the reason the sample is unusable.
pub fn exit_angle(cavity: &Cavity, x: f64, phi: f64, limits: TraceLimits) -> Result<f64, Invalidity> {
    let entry = EntryState::new(x, phi).map_err(|_| Invalidity::OutOfDomain)?;
    let result = trace(cavity, entry, limits);
    match result.invalid {
        None => Ok(result.exit_phi),
        Some(reason) => Err(reason),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes::{make_double_parabola, make_flat, make_rectangle, make_right_triangle};
    use proptest::prelude::*;

    fn deg(d: f64) -> f64 {
        d.to_radians()
    }

    fn phi0() -> f64 {
        (std::f64::consts::SQRT_2 / 4.0).atan()
    }

    #[test]
    fn entry_state_rejects_closed_ends() {
        assert!(EntryState::new(0.5, 0.0).is_err());
        assert!(EntryState::new(-0.5, 0.0).is_err());
        assert!(EntryState::new(0.0, FRAC_PI_2).is_err());
        assert!(EntryState::new(f64::NAN, 0.0).is_err());
        assert!(EntryState::new(0.49, -1.5).is_ok());
    }

    #[test]
    fn flat_mirror() {
        let flat = make_flat();
        for (x, phi) in [(0.2, 0.5), (-0.3, -1.2), (0.0, 0.0), (0.49, 1.5)] {
            let t = trace(&flat, EntryState::new(x, phi).unwrap(), TraceLimits::default());
            assert!(t.valid());
            assert_eq!(t.reflections, 1);
            assert!((t.exit_phi + phi).abs() < 1e-15);
            assert!((t.exit_x - x).abs() < 1e-15);
        }
        let out = exit_angle(&flat, 0.2, 0.5, TraceLimits::default()).unwrap();
        assert!((out + 0.5).abs() < 1e-15);
    }

    #[test]
    fn triangle_corner_retroreflects() {
        let tri = make_right_triangle();
        let t = trace(&tri, EntryState::new(0.25, 0.0).unwrap(), TraceLimits::default());
        assert_eq!(t.reflections, 2);
        assert!(t.exit_phi.abs() < 1e-12);
        // (0.25, 0) -> (0.25, 0.25) -> (-0.25, 0.25) -> (-0.25, 0)
        assert!((t.points[0] - Vec2::new(0.25, 0.25)).norm() < 1e-12);
        assert!((t.points[1] - Vec2::new(-0.25, 0.25)).norm() < 1e-12);
        assert!((t.exit_x + 0.25).abs() < 1e-12);
    }

    #[test]
    fn rectangle_normal_incidence() {
        let rect = make_rectangle(1.0).unwrap();
        let t = trace(&rect, EntryState::new(0.0, 0.0).unwrap(), TraceLimits::default());
        assert_eq!(t.reflections, 1);
        assert_eq!(t.exit_phi, 0.0);
    }

    #[test]
    fn double_parabola_figure_4a() {
        let dp = make_double_parabola();
        let t = trace(&dp, EntryState::new(0.45, deg(75.0)).unwrap(), TraceLimits::default());
        assert!(t.valid());
        assert_eq!(t.reflections, 3);
        assert_eq!(t.faces, vec![Face::Left, Face::Right, Face::Left]);
        // nearly retroreflected
        assert!((t.exit_phi - deg(75.0)).abs() < deg(5.0), "{}", t.exit_phi.to_degrees());
        let [b1, b2, b3] = [t.points[0], t.points[1], t.points[2]];
        assert!(b2.y > b1.y && b3.y < b2.y && b3.y > 0.0);
    }

    #[test]
    fn double_parabola_figure_4e() {
        let dp = make_double_parabola();
        let phi = deg(35.0);
        let t = trace(&dp, EntryState::new(0.0, phi).unwrap(), TraceLimits::default());
        assert_eq!(t.reflections, 3);
        assert!((t.exit_phi - phi).abs() < 2.0 * phi0());
    }

    #[test]
    fn cap_marks_sample_invalid() {
        let rect = make_rectangle(10.0).unwrap();
        let t = trace(
            &rect,
            EntryState::new(0.1, deg(89.0)).unwrap(),
            TraceLimits::with_max_reflections(5),
        );
        assert_eq!(t.invalid, Some(Invalidity::CapExceeded));
        assert_eq!(t.reflections, 5);
        assert_eq!(t.points.len(), t.faces.len());
    }

    #[test]
    fn polyline_has_entry_and_exit() {
        let dp = make_double_parabola();
        let t = trace(&dp, EntryState::new(0.45, deg(75.0)).unwrap(), TraceLimits::default());
        let path = t.polyline();
        assert_eq!(path.len(), 5);
        assert_eq!(path[0], Vec2::new(0.45, 0.0));
        assert_eq!(path[4].y, 0.0);
    }

    proptest! {
        #[test]
        fn trajectories_are_reversible(x in -0.4999f64..0.4999, phi in -1.57f64..1.57) {
            let dp = make_double_parabola();
            let limits = TraceLimits::default();
            let fwd = trace(&dp, EntryState::new(x, phi).unwrap(), limits);
            prop_assume!(fwd.valid());
            prop_assume!(fwd.exit_x.abs() < 0.5);
            let back = trace(&dp, EntryState::new(fwd.exit_x, fwd.exit_phi).unwrap(), limits);
            prop_assert!(back.valid());
            prop_assert_eq!(back.reflections, fwd.reflections);
            prop_assert!((back.exit_x - x).abs() < 1e-9);
            prop_assert!((back.exit_phi - phi).abs() < 1e-9);
        }

        #[test]
        fn mirror_symmetry(x in -0.4999f64..0.4999, phi in -1.57f64..1.57) {
            let dp = make_double_parabola();
            let limits = TraceLimits::default();
            let a = exit_angle(&dp, x, phi, limits);
            let b = exit_angle(&dp, -x, -phi, limits);
            if let (Ok(a), Ok(b)) = (a, b) {
                prop_assert!((a + b).abs() < 1e-9);
            }
        }

        #[test]
        fn at_least_three_reflections_in_double_parabola(x in -0.4999f64..0.4999, phi in -1.57f64..1.57) {
            let dp = make_double_parabola();
            let t = trace(&dp, EntryState::new(x, phi).unwrap(), TraceLimits::default());
            if t.valid() {
                prop_assert!(t.reflections >= 3);
                prop_assert!(t.exit_phi.abs() <= FRAC_PI_2);
            }
        }
    }
}
