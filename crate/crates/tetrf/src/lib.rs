//! File formats, datasets, checkpoints and the live session for
//! tetrahedral radiance fields. The numerical core lives in [`tetrf_core`].

pub mod anim_io;
pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod images;
pub mod mesh_io;
pub mod server;
pub mod session;
pub mod subdiv_check;

pub use tetrf_core as core;
