//! Open-universe probabilistic models: a small modeling language, a
//! contingent-network runtime over lazily grounded partial worlds, MCMC
//! samplers (parent-conditional Metropolis–Hastings, full-conditional
//! sampling with core reduction, birth/death moves for object counts), and
//! an exact enumeration oracle for validation.

pub mod cbn;
pub mod cli;
pub mod dist;
pub mod dsl;
pub mod infer;
pub mod model;
pub mod oracle;
pub mod value;
