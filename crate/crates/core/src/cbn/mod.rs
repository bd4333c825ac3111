//! The contingent-network runtime: ground variables over partial worlds,
//! decision-tree evaluation with reference tracing, world probability,
//! parent/child structure, edge contingency and core computation, and
//! minimality maintenance.

mod eval;

#[cfg(test)]
pub(crate) mod tests;
mod ops;
mod world;

pub use eval::{eval_term, eval_tree, values_equal, EvalTrace, TraceResult};
pub use ops::{
    alive_objects_dist, check_world_invariants, children, core, extend_support,
    extend_to_minimal, finite_domain, is_edge_contingent, is_switching_parent,
    is_switching_var, log_prob, prune, struct_log, structural_keeps, supports, target_vars,
    upsilon, Extender, Targets,
};
pub use world::{GroupResolution, PartialWorld};

pub(crate) use world::rename_var as world_rename_var;
