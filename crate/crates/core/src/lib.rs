//! Gravity-aware geometric losses for dense depth.
//!
//! Semantic regions whose surfaces are known to be horizontal (roads) or vertical
//! (buildings, vehicles) are back-projected to 3D and penalized by their spread along the
//! gravity direction, or along the best direction orthogonal to it. Around those losses
//! sit the pieces needed to use them: pinhole geometry, gravity estimation from IMU data,
//! photometric terms, an inverse-depth refiner, depth metrics, a synthetic scene
//! renderer and file formats.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod camera;
pub mod cli;
pub mod data_io;
pub mod error;
pub mod gravity;
pub mod grid;
pub mod metrics;
pub mod refiner;
pub mod regularizers;
pub mod semantics;
pub mod sigl;
pub mod synthetic;
pub mod warp;
