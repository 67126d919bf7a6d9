//! Mixed-integer encoding of ReLU networks and a small exact solver:
//! a dense dual simplex for the relaxations and best-first
//! branch-and-bound on top of it.

mod bnb;
pub mod lp;
mod model;
mod relu;
mod subregion;

pub use bnb::{
    relative_gap, solve_mip, solve_mip_with, BnbLogEntry, Completion, MipLimits, MipSolution,
    MipStatus, SolveHints,
};
pub use model::{MipModel, QuadTerm, Row, Sense, VarKind, Variable};
pub use relu::{
    compute_neuron_bounds, encode_network, encode_network_into, max_output, max_output_solution,
    NetworkVars, NeuronBounds, NeuronVars,
};
pub use subregion::{build_subregion_mip, Formulation, SubregionMip, SubregionParams};
