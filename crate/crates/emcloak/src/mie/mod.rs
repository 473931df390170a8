//! Vector spherical harmonics and the semi-analytic layered-sphere solver.

pub mod bessel;
pub mod expansion;
pub mod layered;
pub mod sh;

pub use expansion::{mode_index, modes, n_modes, vsh_analyze, VshExpansion};
pub use layered::{
    admittance_sphere, free_space_admittance, is_em_eigenvalue, pec_scattered_wave,
    solve_layered_sphere, solve_unit_modes, vsh_annulus_nu_cross_v, AdmittanceMatrix, EigenvalueCheck, LayerMedium,
    LayeredSolution, LayeredSphereSpec, OutgoingWave, Polarization,
};
