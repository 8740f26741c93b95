//! Simulation and stability certification of nonlinear differential
//! repetitive processes: passes of an ODE over `[0, T]` chained by a
//! pass-to-pass recursion.

pub mod claims;
pub mod engine;
pub mod error;
pub mod ilc;
pub mod linearize;
pub mod ltv;
pub mod pass;
pub mod picard;
pub mod signal;
pub mod systems;

pub use engine::{run_drp, run_drp_with, BoundarySpec, RateFit, RunOptions, RunRecord};
pub use error::{DrpError, Result};
pub use ilc::{IlcCertificate, IlcProblem, LearningOutput, UpdateLaw};
pub use linearize::LtvQuadruple;
pub use ltv::{StabilityCertificate, Verdict};
pub use pass::{Dynamics, DrpSystem, FnDynamics, PassResult};
pub use picard::PicardProblem;
pub use signal::{SequenceClass, Signal, TimeGrid, VectorSequence};

pub use nalgebra::{DMatrix, DVector};
