//! Numerical laboratory for controlled Kuramoto oscillators: the mean-field
//! Fokker–Planck equation on the circle, its N-particle and N-body Liouville
//! counterparts, tracking-type optimal control, and studies comparing them.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod circle;
pub mod control;
pub mod density;
pub mod error;
pub mod lab;
pub mod liouville;
pub mod particles;
pub mod pde;

pub use circle::{wrap_angle, AngularGrid, TWO_PI};
pub use control::cost::{cost_j, cost_jn, CostBreakdown, CostWeights, TargetDensity};
pub use control::field::{Channel, ControlConstraint, ControlField};
pub use density::DensityField;
pub use error::{Error, Result};
pub use pde::{solve_pde, PdeParams, Trajectory};
