//! Multi-patch isogeometric analysis with B-spline dual mortar coupling.
//!
//! The crate couples non-conforming tensor-product B-spline patches with
//! weak `C⁰`/`C¹` interface constraints discretized by dual basis functions,
//! eliminates the constraints through a sparse null-space basis, and solves
//! biharmonic and second-order benchmark problems on the condensed system.

pub mod dual;
pub mod error;
pub mod fem;
pub mod gauss;
pub mod jet;
pub mod model;
pub mod mortar;
pub mod spline;
pub mod study;

pub use error::{Error, Result};
pub use spline::{SplineSpace1D, TensorSpace2D};
