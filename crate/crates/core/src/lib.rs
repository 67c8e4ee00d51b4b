//! Specular billiards in two-dimensional cavities and the mean Newtonian
//! resistance of slowly rotating rough bodies.
//!
//! - [`geometry`]: rays, segments, implicit conic arcs, first-hit queries
//! - [`shapes`]: cavity families on the unit opening
//! - [`billiard`]: full particle trajectories
//! - [`resistance`]: quadrature of the resistance functional, body assembly
//! - [`optimize`]: derivative-free maximization over shape parameters
//! - [`analysis`]: censuses, theorem checks and parameter scans

pub mod analysis;
pub mod billiard;
pub mod geometry;
pub mod optimize;
pub mod resistance;
pub mod shapes;

pub use billiard::{exit_angle, trace, EntryState, Invalidity, TraceLimits, TrajectoryResult};
pub use geometry::{first_hit, normal_at, reflect_direction, BoundaryCurve, Crossing, Hit, Ray, Vec2};
pub use shapes::{
    make_double_parabola, make_flat, make_polyline, make_quadratic, make_rectangle,
    make_right_triangle, Cavity, Face, QuadraticFamilyParams, ShapeError,
};
pub use resistance::{
    body_resistance, cavity_resistance, cavity_resistance_with, combine_cavity_resistances,
    perimeter_ratio, simpson_resistance, BodySpec, QuadratureSpec, ResistanceError,
    ResistanceEstimate, Rule,
};
pub use optimize::{
    nelder_mead, optimize_family, pattern_search, Family, FamilyResult, Method, ObjectiveSpec,
    OptimizationResult, SearchOptions,
};
pub use analysis::{
    census, census_csv, grid_census, outer_angles, phi0, scan_r_grid, scan_r_of_h,
    verify_appendix_structure, verify_corollary, verify_theorem1, verify_theorem2,
    AppendixConstants, CensusRecord, ScanRow, TheoremReport,
};
