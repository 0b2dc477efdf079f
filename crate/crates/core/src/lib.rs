//! Pose and parameter tracking of a tumbling rigid target from point-cloud
//! scans: ICP registration feeding a multiplicative EKF over attitude,
//! rate, inertia ratios, relative orbit and the grasp-frame offset.
//!
//! Numerical modules are generic over [`Real`] (`f32` or `f64`); the
//! aliases below name the common double- and single-precision types. The
//! scenario pipeline, file I/O and model generation run in `f64`.

// `!(x <= tol)` style checks are used so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod ekf;
pub mod error;
pub mod icp;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod quat;
pub mod rng;
pub mod scalar;
pub mod selftest;
pub mod sensor;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Quaternion64 = quat::UnitQuaternion<f64>;
pub type Pose64 = icp::Pose<f64>;
pub type PointCloud64 = icp::PointCloud<f64>;
pub type SurfaceModel64 = icp::SurfaceModel<f64>;
pub type StateVector64 = dynamics::StateVector<f64>;
pub type FilterState64 = ekf::FilterState<f64>;

pub type Quaternion32 = quat::UnitQuaternion<f32>;
pub type Pose32 = icp::Pose<f32>;
pub type PointCloud32 = icp::PointCloud<f32>;
pub type SurfaceModel32 = icp::SurfaceModel<f32>;
pub type StateVector32 = dynamics::StateVector<f32>;
pub type FilterState32 = ekf::FilterState<f32>;
