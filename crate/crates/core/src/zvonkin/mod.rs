//! Zvonkin regularization: the reference OU semigroup, the resolvent solver,
//! the diffeomorphism `θ = id + u` and the transformed coefficients.

pub mod field;
pub mod kernel;
pub mod reference;
pub mod solver;
pub mod transform;

pub use field::{CertifiedBounds, FieldHeader, RegularizingField};
pub use reference::ReferenceSemigroup;
pub use solver::{bounds_monotone, lambda_threshold, solve_u, time_nodes, SolverOptions, SpatialGrid};
pub use transform::{
    lipschitz_grad_check, representation_residual, sandwich_check, theta, theta_invert, transform_coeffs, Battery,
    FittedConstant, LemmaConstants, SandwichReport, TransformedSystem,
};
