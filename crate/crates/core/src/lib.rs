//! Fast truncated distance field (TDF) mapping and direct LiDAR-inertial
//! odometry.
//!
//! The map is a dense grid of 64-bit distance masks: an obstacle's truncated
//! L1 field is a precomputed [`tdf::BinaryKernel`] that is ANDed into the
//! grid, so updates cost a constant amount of work per point regardless of
//! map size. Odometry couples an error-state EKF driven by the IMU with
//! robust scan-to-map registration against the interpolated distance field.
//!
//! Module map:
//!
//! - [`tdf`]: masks, kernels, grid insertion, decoding and interpolation
//! - [`ekf`]: inertial error-state Kalman filter and the deskew pose buffer
//! - [`registration`]: robust Levenberg–Marquardt alignment over SE(3)
//! - [`pipeline`]: deskew, register, update, keyframe and map update loop
//! - [`dataset`]: scan/IMU/trajectory I/O and trajectory error evaluation
//! - [`synthetic`]: ray-cast scenes and IMU streams for tests and demos

pub mod dataset;
pub mod ekf;
pub mod geometry;
pub mod pipeline;
pub mod registration;
pub mod synthetic;
pub mod tdf;

pub use geometry::Pose;
pub use tdf::{Aabb, BinaryKernel, CellIndex, DistanceMask, TdfGrid};
