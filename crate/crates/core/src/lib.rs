//! Design and simulation of giant atoms on a linear-dispersion waveguide.
//!
//! A giant atom couples to the waveguide at many points; choosing the
//! positions, amplitudes and phases shapes its momentum-space coupling `G_k`.
//! This crate designs such coupling sequences for band-gap and chiral targets
//! and checks them against single-excitation dynamics.

pub mod analysis;
pub mod coupling;
pub mod dynamics;
pub mod error;
pub mod io;
pub mod montecarlo;
pub mod optimizer;
pub mod tables;
pub mod waveguide;

/// Library version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use coupling::{CouplingPoint, CouplingSequence, ConstraintSet, ValidationReport};
pub use error::{Error, Result};
pub use optimizer::{optimize, DesignProblem, OptimizationResult};
pub use waveguide::{build_kgrid, KGrid, ProfileKind, TargetProfile, WaveguideModel, WeightProfile};
