//! Time-harmonic linear elasticity on trilinear hexahedra.

mod assembly;
mod element;
mod material;
mod solver;

pub use assembly::{
    assemble, assemble_on, AssembledSystem, BoundaryLoad, DisplacementField, FeSpace, SourceData,
};
pub use element::{
    gauss_points, mesh_kinematics, shape_functions, symmetric_part, ElementKinematics, QUAD_POINTS,
    REF_NODES,
};
pub use material::{apply_hooke, Coefficients, FrequencyConfig, Material, MaterialField};
pub use solver::{
    boundary_pairing, element_strain_div, energy_form, solve_forward, solve_source,
    weighted_energy, ForwardSolver, RESONANCE_CONDITION,
};
