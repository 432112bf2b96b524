//! Radial normalized solutions of nonlinear scalar field equations.
//!
//! The problem: find `(μ, u)` with `−Δu + μu = g(u)` in `ℝ^N` and
//! `‖u‖₂² = m`. The multiplier is written `μ = e^λ` and the pair `(λ, u)` is
//! a critical point of
//!
//! ```text
//! I(λ, u) = ½‖∇u‖² − ∫G(u) + (e^λ/2)(‖u‖² − m).
//! ```
//!
//! Modules, roughly in dependency order:
//!
//! - [`nonlin`]: nonlinearities `g`, their primitives, hypothesis checks and
//!   the constants `λ₀`, `C_δ`.
//! - [`grid`]: radial mesh, weighted quadrature, norms and dilation.
//! - [`energy`]: the functionals, their exact discrete differentials, the
//!   scaling metric and criticality residuals.
//! - [`shoot`]: bound states by shooting in `u(0)`, polished by Newton.
//! - [`minimax`]: mountain-pass levels by path relaxation, and the
//!   deformation flow on `(θ, λ, u)`.
//! - [`mass`]: mass thresholds, normalized solutions by three methods, and
//!   the identity checks.
//!
//! ```
//! use scalar_field_lab::{Nonlinearity, ShootOptions, find_bound_state};
//!
//! let nl = Nonlinearity::pure_power(3.0, 1)?;
//! let gs = find_bound_state(&nl, 0.0, 0, &ShootOptions::default())?;
//! assert!((gs.u0 - 2f64.sqrt()).abs() < 1e-6);
//! assert!((gs.ihat - 4.0 / 3.0).abs() < 1e-6);
//! # Ok::<(), scalar_field_lab::Error>(())
//! ```

pub mod energy;
pub mod error;
pub mod grid;
pub mod mass;
pub mod minimax;
pub mod nonlin;
pub mod numerics;
pub mod ode;
pub mod shoot;

pub use energy::{
    differential, diagnose_sequence, energies, psp_residual, AugmentedPoint, CompactnessDiagnosis, Differential,
    EnergyReport, PSPResidual, Tangent,
};
pub use error::{Error, Result};
pub use grid::{make_grid, Norm, Profile, RadialGrid};
pub use mass::{
    minimize_on_sphere, solve_normalized, threshold_curve, verify_identities, Method, SolveOptions, SolveReport,
    SphereOptions, ThresholdCurve, VerificationReport, VerifyOptions,
};
pub use minimax::{
    deform, mp_level_least_energy, mp_level_path, pseudo_gradient, FlowOptions, FlowTrace, PathEnsemble, PathOptions,
};
pub use nonlin::{Nonlinearity, NonlinearityKind};
pub use shoot::{branch_sweep, find_bound_state, shoot, BranchSample, GridPolicy, ShootOptions, ShotOutcome, Classification};

// Book chapters are compiled as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/nonlinearities.md")]
    mod nonlinearities {}
    #[doc = include_str!("../../../book/src/discretization.md")]
    mod discretization {}
    #[doc = include_str!("../../../book/src/functionals.md")]
    mod functionals {}
    #[doc = include_str!("../../../book/src/bound-states.md")]
    mod bound_states {}
    #[doc = include_str!("../../../book/src/mountain-pass.md")]
    mod mountain_pass {}
    #[doc = include_str!("../../../book/src/normalized.md")]
    mod normalized {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
