//! Exact resilience for linear systems under linear state feedback.
//!
//! For a product specification `Γ_0 × … × Γ_N` the robust constraint is
//! eliminated with the affine Farkas lemma; the remaining multiplier problem
//! has a closed form, so each candidate controller is scored exactly and only
//! the search over controller parameters is heuristic.

mod farkas;
mod oracle;
mod synth;

pub use farkas::{
    build_farkas, fixed_controller_resilience, FarkasMatrices, ResilienceStatus, RowDiagnostic, FEASIBILITY_TOL,
};
pub use oracle::{all_vertices_satisfy, violating_vertex, vertex_oracle_resilience, OracleConfig, MAX_ORACLE_DIM};
pub use synth::{best_offset, controller_resilience, evaluate_linear, synthesize_linear, Diagnostics, ResilienceResult};
