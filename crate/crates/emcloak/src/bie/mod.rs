//! Boundary layer potentials: kernels, Nystrom operators, field evaluation.

pub mod assemble;
pub mod eval;
pub mod kernel;

pub use assemble::{
    assemble_electric_dipole_cross, assemble_electric_dipole_self, assemble_magnetic_dipole,
    assemble_magnetic_dipole_cross, assemble_single_layer, frame_components, read_matrix,
    trace_from_components, write_matrix, ElectricDipoleOp, NearQuadrature, TangentFrame,
    TargetSet,
};
pub use eval::{
    eval_curl_curl_layer, eval_curl_layer, eval_electric_dipole_potential, far_field_curl_layer,
    radiation_defect, separation_in_panel_units,
};
pub use kernel::{helmholtz_hessian, helmholtz_kernel, kernel_split, KernelEval, KernelSplit};
