//! Multi-resolution tetrahedral radiance fields.
//!
//! A coarse tetrahedral mesh is the only stored geometry. Finer levels are
//! inferred on the fly by recursive 1-to-8 subdivision driven purely by
//! barycentric coordinates, each level indexing its own spatially hashed
//! feature table. The same machinery renders deformed states of the mesh,
//! because child selection never looks at vertex positions.
//!
//! The crate is `no_std` (with `alloc`) when built without the default
//! `std` feature. The `parallel` feature spreads rendering and gradient
//! computation over a rayon pool.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod bvh;
pub mod deform;
pub mod encoding;
pub mod field;
pub mod raytrace;
pub mod scene;
pub mod math;
pub mod subdivision;
pub mod tetmesh;

pub use math::{Aabb, Mat3, Mat4, Vec3};
pub use subdivision::{ChildIndex, DescentState, SubdivisionTable};
pub use tetmesh::{generate_grid, Locator, TetGridConfig, TetLocation, TetMesh};
pub use field::{camera::Camera, render::RenderSettings, RadianceField};
