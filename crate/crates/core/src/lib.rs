//! Effective magnetic Hamiltonians for isolated band families via Parseval
//! tight-frames and the Peierls–Onsager substitution.
//!
//! The crate works on finite boxes of `Z^d` (`d = 1, 2`). Operators commuting with
//! the supercell magnetic translations are stored block-diagonally per momentum
//! sector, see [`lattice::DenseOperator`].

pub mod bloch;
pub mod error;
pub mod frames;
pub mod lattice;
pub mod linalg;
pub mod magnetic;
pub mod model;
pub mod phases;
pub mod pipeline;
pub mod reduction;
pub mod sequence;
pub mod validate;

pub use bloch::{BandStructure, IsolatedFamily, ProjectionField};
pub use error::{Error, Result};
pub use frames::{CovariantFrame, FrameConfig, FrameField, WannierFrame};
pub use lattice::{Boundary, DenseOperator, Geometry, LatticeBox, SectorLayout, Site};
pub use linalg::{c64, CMat};
pub use magnetic::{EffectiveMagneticOperator, MagneticFrame};
pub use model::{HoppingTable, ReciprocalGrid};
pub use phases::{FluctuationPotential, MagneticSetup};
pub use reduction::{SchurDecomposition, SpectralWindow};
pub use sequence::BlockSequence;
pub use validate::{ScalingReport, SpectrumSet};
