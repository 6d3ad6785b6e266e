//! Reduction and reconstruction for Hamiltonian systems whose momentum maps
//! close under the Poisson bracket.
//!
//! For a symmetry group that does **not** preserve the Hamiltonian, the
//! momentum components `j_a` are not conserved — but when every bracket
//! `{j_a, h}` is again a polynomial in the components, `μ = j(z)` still obeys
//! an autonomous ODE `μ̇ = f(μ)` of much lower dimension. This crate verifies
//! that closure exactly, integrates the reduced flow, and rebuilds full
//! phase-space trajectories from it by three routes: a moving-line frame
//! adapted to planar SE(2) systems, a general lift-plus-group-ODE method,
//! and a commuting split of the flow where one exists.
//!
//! The algebra layer ([`poly`]) is exact: sparse multivariate polynomials
//! over arbitrary-precision rationals, with Poisson brackets and rewriting in
//! generators done by exact elimination. The numerics layer ([`integrate`],
//! [`elliptic`]) supplies an adaptive Dormand–Prince 5(4) integrator with
//! dense output and Jacobi elliptic functions for closed-form references.

// Index loops stay where they transcribe the elimination/assembly they
// implement; reference constants are quoted beyond f64 precision on purpose.
#![allow(clippy::needless_range_loop, clippy::excessive_precision)]

pub mod elliptic;
pub mod error;
pub mod integrate;
pub mod parse;
pub mod poly;
pub mod reduction;
pub mod se2;
pub mod systems;

pub use error::{Error, Result};
pub use integrate::{
    integrate_ode, IntegratorConfig, Method, SampleGrid, Termination, Trajectory,
};
pub use parse::{parse_poly, SymbolTable};
pub use poly::{
    express_in_generators, poisson_bracket, CompiledPoly, Monomial, Poly, Rational,
};
pub use reduction::{
    moving_line_lift, moving_line_reconstruction, reduced_derivative, reduced_dynamics,
    reduced_trajectory, second_reconstruction, split_flow_state, split_flow_trajectory,
    split_hamiltonians, verify_closure, verify_invariant_descent, ClosureEntry, ClosureReport,
    DescentReport, ReconstructionResult, ReducedDynamics, SDotStats,
    SecondReconstructionOptions, SplitOrder,
};
pub use se2::{momentum_transport, AlgebraElement, GroupElement};
pub use systems::{
    Dynamics, GroupDescriptor, GroupKind, GroupTransform, SystemSpec, VectorField,
};
