//! Graph-defined dynamical systems, reference ODE solvers and a graph-network surrogate
//! trained on their trajectories.

pub mod dataset;
pub mod dynsys;
pub mod error;
pub mod evalbench;
pub mod graph;
pub mod neural;
pub mod ngs;
pub mod odesolve;
pub mod scalar;
pub mod traffic;
pub mod trainer;
pub mod trajectory;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type DenseMatrixF64 = neural::DenseMatrix<f64>;
pub type DenseMatrixF32 = neural::DenseMatrix<f32>;
pub type NgsModelF64 = ngs::NgsModel<f64>;
pub type NgsModelF32 = ngs::NgsModel<f32>;
pub type SystemSpecF64 = dynsys::SystemSpec<f64>;
pub type TrajectoryF64 = trajectory::Trajectory<f64>;
