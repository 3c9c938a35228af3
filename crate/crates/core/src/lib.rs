//! Leader–follower formation control on a curved potential surface.
//!
//! The geometric core (`geometry`, `formation`, `dmd`) is generic over the
//! scalar type; the aliases below fix it to `f64`, which is what the sensor,
//! control and harness layers use.

pub mod config;
pub mod control;
pub mod dmd;
pub mod formation;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod rng;
pub mod scalar;
pub mod sensors;

pub use scalar::Scalar;

pub type Point = geometry::ChartPoint<f64>;
pub type Tangent = geometry::TangentVector<f64>;
pub type State = geometry::GeodesicState<f64>;
pub type Surface = geometry::SurfaceSpec<f64>;
pub type Metric = geometry::MetricAt<f64>;
pub type Christoffel = geometry::ChristoffelAt<f64>;
pub type Formation = formation::FormationSpec<f64>;
pub type Leader = formation::LeaderTrajectory<f64>;
pub type Reference = formation::ReferenceTrajectory<f64>;
pub type Mat = linalg::Matrix<f64>;
pub type Dmd = dmd::DmdState<f64>;
pub type Snapshot = dmd::SnapshotPair<f64>;
