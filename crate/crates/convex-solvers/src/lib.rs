//! Classical reconstructions: SIRT, TV-regularized compressed sensing (CS)
//! and the homogeneous-material variant CSHM.

mod cs;
pub mod primal_dual;
mod sirt;

pub use cs::{
    cs_objective, cshm_objective, pixel_upper_bounds, scaled_weight, solve_cs, solve_cs_with,
    solve_cshm, solve_cshm_with, tv_norm, tv_operator, write_trace_csv, CsConfig, CshmConfig,
    CshmReconstruction, Reconstruction, REFERENCE_SIDE,
};
pub use primal_dual::TracePoint;
pub use sirt::{sirt, sirt_with_trace};
