//! Optimal control of a harmonically driven error signal.
//!
//! The error obeys `dE/dt = f(t) + u`, where `f` is a finite harmonic sum
//! ([`harmonic_model`]) that can be identified from a sampled trace
//! ([`spectral_id`]). Two syntheses minimize `∫ u² dt + E(t1)`: an
//! open-loop law from the maximum principle ([`program_control`]) and a
//! feedback law from the Bellman equation ([`feedback_control`]). Both are
//! simulated and scored by [`ode_sim`]. [`scheduler`] holds the
//! weighted-completion scheduling rules with exact oracles.

// `!(a > b)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod feedback_control;
pub mod format;
pub mod harmonic_model;
pub mod ode_sim;
pub mod program_control;
pub mod scheduler;
pub mod spectral_id;

pub use error::{Error, ErrorClass, Result};
pub use feedback_control::{solve_feedback, FeedbackLaw, FeedbackParams};
pub use harmonic_model::{synth_trace, Harmonic, HarmonicModel, SynthParams, TraceKind};
pub use ode_sim::{cost_functional, integrate, Arm, Law, SimConfig, Trajectory};
pub use program_control::{solve_program, Mode, ProgramLaw};
pub use spectral_id::{identify, spectrum, Spectrum, Trace, Window};
