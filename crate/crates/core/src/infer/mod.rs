//! Samplers and chain orchestration: parent-conditional
//! Metropolis–Hastings, the full-conditional sampler over partial worlds,
//! birth/death moves for number variables, and query estimation.

mod moves;

#[cfg(test)]
mod tests;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::cbn::{
    self, check_world_invariants, eval_term, finite_domain, Extender, PartialWorld, Targets,
};
use crate::dist::NEG_INF;
use crate::model::Model;
use crate::value::{GroundVar, ObjectId, Value};

pub use moves::{
    acceptance_ratio, birth_death_update, build_candidate, gibbs_log_weight, gibbs_update,
    mh_update, pickable_vars, proposal_logprob,
};

/// One deterministic chain RNG. ChaCha streams are seedable, portable and
/// cheap to fork per chain.
pub type ChainRng = ChaCha12Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerKind {
    ParentMh,
    Gibbs,
    GibbsNoblock,
}

impl SamplerKind {
    pub fn name(&self) -> &'static str {
        match self {
            SamplerKind::ParentMh => "mh",
            SamplerKind::Gibbs => "gibbs",
            SamplerKind::GibbsNoblock => "gibbs-noblock",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mh" | "parent-mh" => Some(SamplerKind::ParentMh),
            "gibbs" => Some(SamplerKind::Gibbs),
            "gibbs-noblock" => Some(SamplerKind::GibbsNoblock),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    pub steps: u64,
    pub burn_in: u64,
    /// Relaxed birth/death phase length; defaults to 10% of the burn-in.
    pub init_phase: Option<u64>,
    /// Probability of attempting a birth/death move at each step (only in
    /// models with eligible number statements).
    pub birth_death_rate: f64,
    pub seed: u64,
    /// Check the full state invariant after every step.
    pub debug_checks: bool,
}

impl SamplerConfig {
    pub fn new(kind: SamplerKind, steps: u64, burn_in: u64, seed: u64) -> Self {
        SamplerConfig {
            kind,
            steps,
            burn_in,
            init_phase: None,
            birth_death_rate: 0.2,
            seed,
            debug_checks: false,
        }
    }

    pub fn validate(&self) -> Result<(), InferError> {
        if self.burn_in >= self.steps {
            return Err(InferError::Config(
                "burn_in must be smaller than steps".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.birth_death_rate) {
            return Err(InferError::Config(
                "birth_death_rate must lie in [0, 1)".into(),
            ));
        }
        Ok(())
    }

    pub fn init_phase_len(&self) -> u64 {
        self.init_phase.unwrap_or(self.burn_in / 10)
    }
}

#[derive(Debug, Error)]
pub enum InferError {
    #[error("invalid sampler configuration: {0}")]
    Config(String),
    #[error("initialization failed after {attempts} attempts")]
    InitFailure { attempts: u32 },
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MoveCounter {
    pub proposed: u64,
    pub accepted: u64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MoveStats {
    pub gibbs: MoveCounter,
    pub mh: MoveCounter,
    pub birth: MoveCounter,
    pub death: MoveCounter,
}

/// Running estimate for one query term.
#[derive(Debug, Clone)]
pub struct QueryEstimate {
    pub query: String,
    pub samples: u64,
    /// Per-value counts for finitely valued queries.
    pub freqs: BTreeMap<Value, u64>,
    /// Numeric accumulation (real- and integer-valued queries).
    pub sum: f64,
    numeric: bool,
}

impl QueryEstimate {
    fn new(query: String) -> Self {
        QueryEstimate {
            query,
            samples: 0,
            freqs: BTreeMap::new(),
            sum: 0.0,
            numeric: false,
        }
    }

    fn update(&mut self, value: &Value) {
        self.samples += 1;
        match value {
            Value::Real(r) => {
                self.numeric = true;
                self.sum += r;
            }
            other => {
                if let Value::Int(i) = other {
                    self.sum += *i as f64;
                }
                *self.freqs.entry(other.clone()).or_insert(0) += 1;
            }
        }
    }

    pub fn is_numeric(&self) -> bool {
        self.numeric
    }

    pub fn mean(&self) -> Option<f64> {
        if self.samples == 0 {
            None
        } else {
            Some(self.sum / self.samples as f64)
        }
    }

    pub fn probability(&self, v: &Value) -> Option<f64> {
        if self.samples == 0 {
            None
        } else {
            Some(*self.freqs.get(v).unwrap_or(&0) as f64 / self.samples as f64)
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChainState {
    pub world: PartialWorld,
    pub rng: ChainRng,
    pub step_count: u64,
    pub move_stats: MoveStats,
}

const INIT_ATTEMPTS: u32 = 10_000;

/// Create an initial minimal self-supporting feasible world consistent
/// with the evidence: labeled symbols start in the origin-free group,
/// ancestors of the evidence are forward-sampled, evidence values are
/// clamped, and infeasible draws are rejected up to a bounded number of
/// attempts.
pub fn init_chain(model: &Model, targets: &Targets, seed: u64) -> Result<ChainState, InferError> {
    let mut rng = ChainRng::seed_from_u64(seed);
    for _attempt in 1..=INIT_ATTEMPTS {
        let mut world = PartialWorld::new();
        for se in &model.set_evidence {
            // all symbols start in the group of the statement with no
            // origin functions; feasible whenever that statement exists
            let has_free_stmt = model
                .ty(se.ty)
                .stmts
                .iter()
                .any(|s| model.stmt(*s).origins.is_empty());
            if !has_free_stmt {
                return Err(InferError::Config(
                    "set evidence needs an origin-free number statement for initialization"
                        .into(),
                ));
            }
            let mut origin_funcs = Vec::new();
            for sid in &model.ty(se.ty).stmts {
                for f in &model.stmt(*sid).origins {
                    if !origin_funcs.contains(f) {
                        origin_funcs.push(*f);
                    }
                }
            }
            for sym in &se.symbols {
                let obj = Value::Obj(ObjectId::Evidence {
                    ty: se.ty,
                    sym: *sym,
                });
                for f in &origin_funcs {
                    world.set_value(model, GroundVar::app(*f, vec![obj.clone()]), Value::Null);
                }
            }
        }
        world.refresh_structure(model);
        {
            let mut ext = Extender::new(model, &mut rng);
            for (stmt, binding) in &model.anchored {
                ext.ensure_var(&mut world, &GroundVar::num(*stmt, binding.clone()));
            }
            for (var, value) in &targets.evidence {
                ext.ensure_clamped(&mut world, var, value.clone());
            }
            for q in &targets.query_terms {
                ext.ensure_term(&mut world, q);
            }
        }
        cbn::prune(model, &mut world, targets);
        if cbn::log_prob(model, &world) > NEG_INF {
            return Ok(ChainState {
                world,
                rng,
                step_count: 0,
                move_stats: MoveStats::default(),
            });
        }
    }
    Err(InferError::InitFailure {
        attempts: INIT_ATTEMPTS,
    })
}

/// Advance the chain by one step of the configured move mixture.
pub fn step(
    model: &Model,
    targets: &Targets,
    state: &mut ChainState,
    config: &SamplerConfig,
    relaxed: bool,
) {
    let has_bd = !model.birth_death_instances().is_empty();
    if has_bd && state.rng.random::<f64>() < config.birth_death_rate {
        if let Some(out) =
            birth_death_update(model, &state.world, targets, relaxed, &mut state.rng)
        {
            let counter = if out.was_birth {
                &mut state.move_stats.birth
            } else {
                &mut state.move_stats.death
            };
            counter.proposed += 1;
            if out.accepted {
                counter.accepted += 1;
            }
            state.world = out.world;
        }
    } else {
        let picks = pickable_vars(model, &state.world, targets);
        if picks.is_empty() {
            state.step_count += 1;
            return;
        }
        let x = picks[state.rng.random_range(0..picks.len())].clone();
        let use_gibbs = config.kind != SamplerKind::ParentMh;
        let dom = if use_gibbs {
            finite_domain(model, &state.world, &x)
        } else {
            None
        };
        match dom {
            Some(dom) if !dom.is_empty() => {
                let noblock = config.kind == SamplerKind::GibbsNoblock;
                let out = gibbs_update(
                    model,
                    &state.world,
                    targets,
                    &x,
                    &dom,
                    noblock,
                    &mut state.rng,
                );
                state.move_stats.gibbs.proposed += 1;
                if out.changed {
                    state.move_stats.gibbs.accepted += 1;
                }
                state.world = out.world;
            }
            _ => {
                let out = mh_update(model, &state.world, targets, &x, &mut state.rng);
                state.move_stats.mh.proposed += 1;
                if out.accepted {
                    state.move_stats.mh.accepted += 1;
                }
                state.world = out.world;
            }
        }
    }
    state.step_count += 1;
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub estimates: Vec<QueryEstimate>,
    pub move_stats: MoveStats,
    /// Snapshots of the estimates after the requested step counts.
    pub checkpoints: Vec<(u64, Vec<QueryEstimate>)>,
}

/// Run one chain: initialize, iterate the move mixture, and update query
/// statistics after burn-in (initialization-phase steps are always
/// excluded). Fully deterministic given the seed.
pub fn run(
    model: &Model,
    config: &SamplerConfig,
    checkpoints: &[u64],
) -> Result<RunResult, InferError> {
    config.validate()?;
    let targets = Targets::from_model(model);
    let mut state = init_chain(model, &targets, config.seed)?;
    let mut estimates: Vec<QueryEstimate> = model
        .queries
        .iter()
        .map(|q| QueryEstimate::new(q.text.clone()))
        .collect();
    let init_phase = config.init_phase_len();
    let mut out_checkpoints = Vec::new();
    for step_idx in 0..config.steps {
        let relaxed = step_idx < init_phase;
        step(model, &targets, &mut state, config, relaxed);
        if config.debug_checks {
            check_world_invariants(model, &state.world, &targets)
                .unwrap_or_else(|e| panic!("state invariant broken at step {step_idx}: {e}"));
        }
        if step_idx >= config.burn_in && step_idx >= init_phase {
            for (q, est) in model.queries.iter().zip(&mut estimates) {
                match eval_term(model, &state.world, &q.term).0 {
                    Ok(v) => est.update(&v),
                    Err(missing) => panic!(
                        "query {} unsupported after a completed step (missing {})",
                        q.text,
                        model.display_var(&missing)
                    ),
                }
            }
        }
        if checkpoints.contains(&(step_idx + 1)) {
            out_checkpoints.push((step_idx + 1, estimates.clone()));
        }
    }
    Ok(RunResult {
        estimates,
        move_stats: state.move_stats,
        checkpoints: out_checkpoints,
    })
}
