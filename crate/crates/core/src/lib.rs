//! Discrete convex-analysis model of weak geodesic rays.
//!
//! Convex potentials are sampled on uniform grids over a box in one or two
//! dimensions. On top of that the crate builds:
//!
//! * [`legendre`]: the discrete Legendre-Fenchel transform (brute force and an
//!   axis-separable sweep), biconjugates and subgradient ranges;
//! * [`monge_ampere`]: Alexandrov Monge-Ampere measures as gradient-map
//!   pullbacks and the relative energy in primal and dual form;
//! * [`test_curve`]: test curves, their concave transform and maximal envelopes;
//! * [`geodesic`]: rays as Legendre transforms in the curve parameter, the dual
//!   construction, energy linearity and the inverse transform;
//! * [`filtration`]: weighted lattice data, Bergman-type metrics and the
//!   Phong-Sturm ray;
//! * [`checks`]: the acceptance suite driven by the `hrma check` command.

pub mod checks;
mod error;
pub mod filtration;
pub mod geodesic;
pub mod grid;
pub mod hull;
pub mod legendre;
pub mod monge_ampere;
pub mod test_curve;

pub use error::{Error, Result};
pub use filtration::{BergmanInstance, ConcaveTransformG, WeightedLatticeData};
pub use geodesic::{LinearityReport, Ray, RaySource};
pub use grid::{ConvexGridFunction, ConvexityVerdict, Grid, GridBox, GridFunction, NEG_INF};
pub use legendre::{DualGrid, SlopeRegion};
pub use monge_ampere::{DiscreteMeasure, EnergyFrame, EnergyMethod, EnergyReport};
pub use test_curve::{ConcaveTransform, CurveDiagnostics, TestCurve};
