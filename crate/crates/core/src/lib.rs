//! Origami mechanism design, simulation and optimization.
//!
//! A crease pattern is an annotated planar graph ([`design`]). Panels are
//! detected and triangulated by [`mesh`], simulated as coupled membranes by
//! [`sim`], exported to MJCF by [`mjcf`], and tuned with CMA-ES by
//! [`optimizer`]. [`catapult`] ties these together for the throwing study.

pub mod catapult;
pub mod design;
pub mod fixtures;
pub mod geometry;
pub mod mesh;
pub mod mjcf;
pub mod optimizer;
pub mod sim;

pub use design::{CreasePattern, DesignError, EdgeKind, KeypointId, Panel};
pub use geometry::{Vec2, Vec3};
pub use mesh::{MeshError, TriMesh};
