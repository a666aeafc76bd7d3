//! Holomorphic 1-chains bounded by a given 1-cycle: shadow arrangement,
//! Cauchy moments, Newton identities, branch continuation and assembly.

pub mod arrangement;
pub mod moments;
pub mod solver;

pub use arrangement::{Crossing, Face, PlanarArrangement, TransversalityReport};
pub use moments::{cauchy_moments, CycleQuadrature};
pub use solver::{
    assemble, build_arrangement, family_continuity_check, mass_minimality_warning, solve_scalar, validate_cycle,
    verify_boundary, BoundaryOptions, BoundaryResidual, ChainFace, ChainSolution, ContinuityReport, ContinuityRow,
    ScalarFace, ScalarSolution,
};

/// Shadow samples per cell.
pub const DEFAULT_SAMPLES: usize = 2048;
