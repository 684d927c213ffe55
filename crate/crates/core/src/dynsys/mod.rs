//! Deterministic generators for the four dynamical systems.

pub mod ks;
pub mod lorenz;
pub mod maps;
pub mod ode;

pub use ks::{etdrk4_coefficients, solve_ks, Etdrk4Coefficients, KsRun, KsSolver};
pub use lorenz::{integrate_lorenz, integrate_lorenz_with, LorenzComponent, LorenzParams, LorenzTrajectory};
pub use maps::{iterate, iterate_logistic, iterate_sine_circle, map_derivative, MapOrbit, MapSystem, SINE_CIRCLE_OMEGA};
pub use ode::{Dopri5, Tolerances};
