//! Numerical laboratory for Jacobi fields, Riccati comparison, geodesic index
//! theory and intermediate Ricci curvature on explicit Riemannian charts.

pub mod comparison;
pub mod error;
pub mod linalg;
pub mod geodesic;
pub mod index;
pub mod jacobi;
pub mod lifting;
pub mod manifold;
pub mod scenarios;
pub mod submanifold;
pub mod zoo;

pub use error::{GeomError, Result};
pub use manifold::{ChristoffelMode, CurvatureOperator, MetricChart, MetricFamily};
