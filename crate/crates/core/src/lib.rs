//! Implicit finite-difference schemes for degenerate parabolic stochastic
//! PDEs on a periodic torus, with Richardson extrapolation in the mesh size.
//!
//! The pieces, bottom up: [`grid`] (lattice, fields, differences, norms),
//! [`problem`] (continuous data, difference schemes, validators), [`noise`]
//! (Wiener increments), [`stepper`] (the implicit space-time scheme),
//! [`reference`] (the time scheme with continuous operators), [`correctors`]
//! (the expansion in powers of `h`) and [`richardson`] (weights, ladder
//! combination, order estimation).

pub mod coefficient;
pub mod correctors;
pub mod error;
pub mod grid;
pub mod io;
pub mod library;
pub mod linalg;
pub mod noise;
pub mod operator;
pub mod problem;
pub mod reference;
pub mod richardson;
pub mod spectral;
pub mod stepper;

pub use coefficient::{Coefficient, Sampled};
pub use correctors::{
    binomial, corrector_operator_l, corrector_operator_m, expansion_constants, expansion_residual,
    run_corrector_system, CorrectorSet, ResidualReport,
};
pub use error::{Error, Result, SolveFailure, SolveFailureKind};
pub use grid::{GridField, Norms, Stencil, TorusGrid};
pub use library::named_problem;
pub use noise::{sample_increments, BrownianIncrements};
pub use operator::{apply_l, apply_m, DiscreteOperator};
pub use problem::{
    build_scheme_example1, build_scheme_example2, check_consistency, check_degenerate_parabolicity,
    check_scheme_positivity, factorize_psd, DifferenceScheme, DifferentialProblem, SamplePoint,
};
pub use reference::{run_reference_time_scheme, ReferenceMode};
pub use richardson::{
    estimate_order, extrapolate_derivative, restrict_to_coarse, richardson_combine, vandermonde_weights,
    ConvergenceReport, OrderBand, RichardsonWeights,
};
pub use spectral::SpectralGrid;
pub use stepper::{
    assemble_implicit_operator, implicit_step, run_space_time_scheme, ImplicitOperator, SolverMode, Trajectory,
    TrajectoryMeta,
};
