//! Plane-stress finite elements on structured rectangular meshes.

pub mod assembly;
pub mod banded;
pub mod element;
pub mod mesh;
pub mod shape;

pub use assembly::{
    min_wavelength, solve_dynamic, solve_static, Discretization, FieldRule, HarmonicParams, MaterialSample,
    StaticSolution, StaticSystem, YoungField,
};
pub use mesh::{BeamGeometry, LevelSpec, Mesh, RefinementKind, Support};
