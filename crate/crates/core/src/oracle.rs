//! Exact ground truth by exhaustive enumeration.
//!
//! The enumeration walks the same lazy-grounding machinery the samplers
//! use: counts are branched up to a per-Poisson truncation point, labeled
//! symbols are assigned to groups in canonical first-use order, and every
//! remaining variable needed to support the evidence and queries is
//! branched over its finite support. Each complete world's mass is
//! `exp(log_prob)`, so the oracle and the runtime share one density
//! definition by construction.
//!
//! Everything excluded — Poisson tails beyond the truncation point and
//! branches whose mass upper bound falls below the pruning threshold — is
//! accumulated into an explicit bound that is reported with every
//! posterior probability.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::cbn::{
    self, eval_term, eval_tree, log_prob, struct_log, PartialWorld, Targets, TraceResult,
};
use crate::dist::{poisson_tail_mass, Distribution, NEG_INF};
use crate::infer::proposal_logprob;
use crate::model::{FuncKind, Model, RtLeaf};
use crate::value::{GroundVar, ObjectId, Value};

#[derive(Debug, Clone)]
pub struct OracleOptions {
    /// Uniform per-Poisson maximum count; `None` picks, per rate, the
    /// smallest cutoff with tail mass below 1e-8.
    pub trunc: Option<u64>,
    /// Absolute prior-mass threshold below which a branch is dropped (and
    /// accounted into the truncation bound).
    pub min_mass: f64,
    /// Relative pruning: branches whose mass upper bound falls below this
    /// fraction of the evidence mass found so far are dropped and
    /// accounted. Keeps open-universe enumerations tractable while the
    /// reported bound stays far below any acceptance tolerance.
    pub rel_prune: f64,
    /// Cap on the number of worlds a materializing enumeration may keep.
    pub max_worlds: usize,
    /// When false, evidence variables are branched over their support
    /// instead of clamped; the result is the prior over minimal worlds
    /// supporting the targets.
    pub clamp_evidence: bool,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            trunc: None,
            min_mass: 0.0,
            rel_prune: 1e-12,
            max_worlds: 4_000_000,
            clamp_evidence: true,
        }
    }
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("oracle limitation: {0} has no finite domain and is not clamped by evidence")]
    Continuous(String),
    #[error("enumeration exceeded {0} worlds")]
    TooLarge(usize),
}

/// Explicit list of minimal self-supporting worlds with posterior
/// probabilities. `sum(probabilities) + truncation_bound = 1`.
#[derive(Debug, Clone)]
pub struct WorldDist {
    pub worlds: Vec<(PartialWorld, f64)>,
    pub truncation_bound: f64,
    /// Natural log of the enumerated evidence mass (the normalizer).
    pub log_evidence_mass: f64,
}

/// Posterior of one query term with the truncation bound as uncertainty
/// radius. Worlds in which the term cannot be evaluated land in
/// `undefined` rather than being dropped.
#[derive(Debug, Clone)]
pub struct QueryPosterior {
    pub query: String,
    pub probs: BTreeMap<Value, f64>,
    pub undefined: f64,
    pub bound: f64,
}

impl QueryPosterior {
    pub fn prob(&self, v: &Value) -> f64 {
        *self.probs.get(v).unwrap_or(&0.0)
    }
}

struct Dfs<'a, F> {
    model: &'a Model,
    targets: &'a Targets,
    opts: &'a OracleOptions,
    evidence_peaks: BTreeMap<GroundVar, f64>,
    visit: F,
    mass_in: f64,
    excluded: f64,
    worlds_seen: usize,
    label_order: Vec<GroundVar>,
}

const DEFAULT_TAIL: f64 = 1e-8;
const MAX_COUNT: u64 = 400;

fn default_trunc(rate: f64) -> u64 {
    let mut k = rate.ceil() as u64 + 1;
    while poisson_tail_mass(rate, k) >= DEFAULT_TAIL && k < MAX_COUNT {
        k += 1;
    }
    k
}

/// Static upper bound on the density any leaf of this function can assign
/// to a fixed observation.
fn peak_bound(model: &Model, func: crate::value::FuncId) -> f64 {
    let mut peak: f64 = 0.0;
    if let Some(tree) = &model.func(func).tree {
        for leaf in tree.leaves() {
            let p = match leaf {
                RtLeaf::Gaussian { variance, .. } => {
                    1.0 / (2.0 * std::f64::consts::PI * variance).sqrt()
                }
                RtLeaf::UniformReal { lo, hi } => 1.0 / (hi - lo),
                _ => 1.0,
            };
            peak = peak.max(p);
        }
    }
    peak.max(f64::MIN_POSITIVE)
}

enum Action {
    Assign(GroundVar, Value),
    BranchFinite(GroundVar, Vec<Value>),
    BranchCount(GroundVar, f64),
    Done,
}

impl<'a, F: FnMut(&PartialWorld, f64) -> Result<(), OracleError>> Dfs<'a, F> {
    /// Prefix mass: assigned-variable densities plus the partial
    /// structural factor; completions only multiply this by probability
    /// sums (at most one) and by the clamped-evidence peaks.
    fn prefix_log_mass(&self, world: &PartialWorld) -> f64 {
        let mut lp = struct_log(self.model, world);
        if lp == NEG_INF {
            return NEG_INF;
        }
        for (var, value) in world.entries() {
            if let Some(t) = world.trace(var) {
                if let Some(d) = t.dist() {
                    lp += d.log_density(value);
                    if lp == NEG_INF {
                        return NEG_INF;
                    }
                }
            }
        }
        lp
    }

    fn remaining_evidence_peaks(&self, world: &PartialWorld) -> f64 {
        let mut ub = 0.0;
        for (var, _) in &self.targets.evidence {
            if !world.contains(var) {
                ub += self.evidence_peaks[var].ln();
            }
        }
        ub
    }

    /// Follow the chain of first missing references down to a variable
    /// whose own tree is evaluable right now.
    fn blocker(&self, world: &PartialWorld, var: &GroundVar) -> Result<GroundVar, OracleError> {
        let mut v = var.clone();
        for _ in 0..100_000 {
            match eval_tree(self.model, world, &v).result {
                TraceResult::Dist(_) => return Ok(v),
                TraceResult::Unsupported(u) => v = u,
            }
        }
        panic!("dependency recursion limit reached during enumeration")
    }

    fn classify(&self, world: &PartialWorld, var: GroundVar) -> Result<Action, OracleError> {
        if self.opts.clamp_evidence {
            if let Some(value) = self.targets.evidence.get(&var) {
                return Ok(Action::Assign(var, value.clone()));
            }
        }
        match &var {
            GroundVar::Num { .. } => {
                let t = eval_tree(self.model, world, &var);
                match t.dist() {
                    Some(Distribution::Poisson { rate }) => Ok(Action::BranchCount(var, *rate)),
                    Some(other) => {
                        let sup = other.finite_support().ok_or_else(|| {
                            OracleError::Continuous(self.model.display_var(&var))
                        })?;
                        Ok(Action::BranchFinite(var, sup))
                    }
                    None => unreachable!("blocker trees are evaluable"),
                }
            }
            GroundVar::App { func, args } => {
                let info = self.model.func(*func);
                if info.kind == FuncKind::Origin {
                    match args[0].as_object() {
                        Some(ObjectId::Generated { stmt, binding, .. }) => {
                            let v = crate::cbn::eval_tree(self.model, world, &var);
                            let _ = v;
                            let value = match self.model.binding_pos(*stmt, *func) {
                                Some(pos) => binding[pos].clone(),
                                None => Value::Null,
                            };
                            Ok(Action::Assign(var, value))
                        }
                        _ => {
                            // a label variable outside the label phase;
                            // branch it over its domain
                            let dom = cbn::finite_domain(self.model, world, &var)
                                .expect("origin domains are finite");
                            Ok(Action::BranchFinite(var, dom))
                        }
                    }
                } else {
                    let t = eval_tree(self.model, world, &var);
                    let d = t.dist().expect("blocker trees are evaluable");
                    match d.finite_support() {
                        Some(sup) => Ok(Action::BranchFinite(var, sup)),
                        None => Err(OracleError::Continuous(self.model.display_var(&var))),
                    }
                }
            }
        }
    }

    fn next_action(&self, world: &PartialWorld) -> Result<Action, OracleError> {
        for (stmt, binding) in &self.model.anchored {
            // counts of set-evidence types are derived from the labeling,
            // never branched
            if self.model.ty(self.model.stmt(*stmt).ty).set_evidence.is_some() {
                continue;
            }
            let var = GroundVar::num(*stmt, binding.clone());
            if !world.contains(&var) {
                let b = self.blocker(world, &var)?;
                return self.classify(world, b);
            }
        }
        for var in &self.label_order {
            if !world.contains(var) {
                let dom = cbn::finite_domain(self.model, world, var)
                    .expect("label domains are finite");
                return Ok(Action::BranchFinite(var.clone(), dom));
            }
        }
        for (var, _) in &self.targets.evidence {
            if world.contains(var) {
                continue;
            }
            let b = self.blocker(world, var)?;
            if &b == var && self.opts.clamp_evidence {
                return Ok(Action::Assign(
                    var.clone(),
                    self.targets.evidence[var].clone(),
                ));
            }
            return self.classify(world, b);
        }
        for q in &self.targets.query_terms {
            if let Err(u) = eval_term(self.model, world, q).0 {
                let b = self.blocker(world, &u)?;
                return self.classify(world, b);
            }
        }
        Ok(Action::Done)
    }

    fn prune_threshold(&self) -> f64 {
        self.opts.min_mass.max(self.mass_in * self.opts.rel_prune)
    }

    fn explore(&mut self, world: &mut PartialWorld) -> Result<(), OracleError> {
        let prefix = self.prefix_log_mass(world);
        if prefix == NEG_INF {
            return Ok(());
        }
        let cap = prefix + self.remaining_evidence_peaks(world);
        if cap.exp() < self.prune_threshold() {
            self.excluded += cap.exp();
            return Ok(());
        }
        // deterministic value assignments (evidence clamps, origin
        // derivations) mutate in place; only real branch points recurse
        let action = loop {
            match self.next_action(world)? {
                Action::Assign(var, value) => {
                    world.set_value(self.model, var, value);
                    let lp = self.prefix_log_mass(world);
                    if lp == NEG_INF {
                        return Ok(());
                    }
                    let cap = lp + self.remaining_evidence_peaks(world);
                    if cap.exp() < self.prune_threshold() {
                        self.excluded += cap.exp();
                        return Ok(());
                    }
                }
                other => break other,
            }
        };
        match action {
            Action::Done => {
                let mass = log_prob(self.model, world).exp();
                if mass > 0.0 {
                    self.worlds_seen += 1;
                    self.mass_in += mass;
                    (self.visit)(world, mass)?;
                }
                Ok(())
            }
            Action::Assign(..) => unreachable!("assignments are applied in place"),
            Action::BranchFinite(var, dom) => {
                for v in dom {
                    let mut child = world.clone();
                    child.set_value(self.model, var.clone(), v);
                    child.refresh_structure(self.model);
                    self.explore(&mut child)?;
                }
                Ok(())
            }
            Action::BranchCount(var, rate) => {
                let k = self.opts.trunc.unwrap_or_else(|| default_trunc(rate));
                for n in 0..=k {
                    let mut child = world.clone();
                    child.set_value(self.model, var.clone(), Value::Int(n as i64));
                    self.explore(&mut child)?;
                }
                // everything beyond the truncation point
                let tail = poisson_tail_mass(rate, k);
                self.excluded +=
                    (prefix + self.remaining_evidence_peaks(world)).exp() * tail;
                Ok(())
            }
        }
    }
}

/// Enumerate and fold without materializing; `visit` receives each world
/// and its unnormalized prior mass.
pub fn enumerate_fold<F>(
    model: &Model,
    targets: &Targets,
    opts: &OracleOptions,
    visit: F,
) -> Result<(f64, f64), OracleError>
where
    F: FnMut(&PartialWorld, f64) -> Result<(), OracleError>,
{
    let mut label_order = Vec::new();
    for se in &model.set_evidence {
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
                label_order.push(GroundVar::app(*f, vec![obj.clone()]));
            }
        }
    }
    let evidence_peaks = targets
        .evidence
        .keys()
        .map(|var| {
            let f = match var {
                GroundVar::App { func, .. } => *func,
                GroundVar::Num { .. } => unreachable!("evidence is on applications"),
            };
            (var.clone(), peak_bound(model, f))
        })
        .collect();
    let mut dfs = Dfs {
        model,
        targets,
        opts,
        evidence_peaks,
        visit,
        mass_in: 0.0,
        excluded: 0.0,
        worlds_seen: 0,
        label_order,
    };
    let mut root = PartialWorld::new();
    dfs.explore(&mut root)?;
    Ok((dfs.mass_in, dfs.excluded))
}

/// Enumerate all minimal self-supporting worlds over the model's evidence
/// and queries, with posterior probabilities and an explicit truncation
/// bound.
pub fn enumerate_worlds(model: &Model, opts: &OracleOptions) -> Result<WorldDist, OracleError> {
    let targets = Targets::from_model(model);
    enumerate_worlds_over(model, &targets, opts)
}

pub fn enumerate_worlds_over(
    model: &Model,
    targets: &Targets,
    opts: &OracleOptions,
) -> Result<WorldDist, OracleError> {
    let mut worlds: Vec<(PartialWorld, f64)> = Vec::new();
    let cap = opts.max_worlds;
    let (mass_in, excluded) = enumerate_fold(model, targets, opts, |w, mass| {
        if worlds.len() >= cap {
            return Err(OracleError::TooLarge(cap));
        }
        worlds.push((w.clone(), mass));
        Ok(())
    })?;
    let bound = excluded / (mass_in + excluded);
    let scale = (1.0 - bound) / mass_in;
    for (_, p) in &mut worlds {
        *p *= scale;
    }
    Ok(WorldDist {
        worlds,
        truncation_bound: bound,
        log_evidence_mass: mass_in.ln(),
    })
}

/// Marginalize a world distribution by a query term.
pub fn exact_posterior(model: &Model, dist: &WorldDist, query_idx: usize) -> QueryPosterior {
    let q = &model.queries[query_idx];
    let mut probs: BTreeMap<Value, f64> = BTreeMap::new();
    let mut undefined = 0.0;
    for (w, p) in &dist.worlds {
        match eval_term(model, w, &q.term).0 {
            Ok(v) => *probs.entry(v).or_insert(0.0) += *p,
            Err(_) => undefined += *p,
        }
    }
    QueryPosterior {
        query: q.text.clone(),
        probs,
        undefined,
        bound: dist.truncation_bound,
    }
}

/// All query posteriors computed in one streaming pass (no world list is
/// kept in memory).
pub fn exact_posteriors_streaming(
    model: &Model,
    opts: &OracleOptions,
) -> Result<Vec<QueryPosterior>, OracleError> {
    let targets = Targets::from_model(model);
    let mut acc: Vec<(BTreeMap<Value, f64>, f64)> =
        model.queries.iter().map(|_| (BTreeMap::new(), 0.0)).collect();
    let (mass_in, excluded) = enumerate_fold(model, &targets, opts, |w, mass| {
        for (q, slot) in model.queries.iter().zip(&mut acc) {
            match eval_term(model, w, &q.term).0 {
                Ok(v) => *slot.0.entry(v).or_insert(0.0) += mass,
                Err(_) => slot.1 += mass,
            }
        }
        Ok(())
    })?;
    let bound = excluded / (mass_in + excluded);
    let scale = (1.0 - bound) / mass_in;
    Ok(model
        .queries
        .iter()
        .zip(acc)
        .map(|(q, (mut probs, undefined))| {
            for p in probs.values_mut() {
                *p *= scale;
            }
            QueryPosterior {
                query: q.text.clone(),
                probs,
                undefined: undefined * scale,
                bound,
            }
        })
        .collect())
}

/// The unreduced transition ratio `min(1, p(σ')q(σ'→σ) / (p(σ)q(σ→σ')))`
/// computed directly from the world density and the proposal probability,
/// for equivalence testing against the reduced acceptance ratio.
pub fn naive_transition_ratio(
    model: &Model,
    world: &PartialWorld,
    next: &PartialWorld,
    x: &GroundVar,
    targets: &Targets,
) -> f64 {
    let log_ratio = log_prob(model, next) + proposal_logprob(model, next, world, x, targets)
        - log_prob(model, world)
        - proposal_logprob(model, world, next, x, targets);
    log_ratio.exp().min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cbn::tests::{app0, chain_world, y};
    use crate::dsl::load_model;
    use crate::dsl::tests::corpus;

    fn chain() -> Model {
        load_model(&corpus("chain.oum")).unwrap()
    }

    #[test]
    fn chain_enumeration_matches_the_hand_posterior() {
        let m = chain();
        let dist = enumerate_worlds(&m, &OracleOptions::default()).unwrap();
        assert_eq!(dist.worlds.len(), 4, "four evidence-consistent worlds");
        let total: f64 = dist.worlds.iter().map(|(_, p)| p).sum();
        assert!((total + dist.truncation_bound - 1.0).abs() < 1e-9);
        assert_eq!(dist.truncation_bound, 0.0, "fully finite model");
        let post = exact_posterior(&m, &dist, 0);
        assert!((post.prob(&Value::Int(0)) - 0.11320754716981132).abs() < 1e-12);
        assert!((post.prob(&Value::Int(1)) - 0.679245283018868).abs() < 1e-12);
        assert!((post.prob(&Value::Int(2)) - 0.20754716981132074).abs() < 1e-12);
        // evidence mass: .1*.5 + .6*.5 + .3*(11/36)
        assert!((dist.log_evidence_mass.exp() - 0.44166666666666665).abs() < 1e-12);
    }

    #[test]
    fn chain_enumeration_without_clamping_yields_the_prior_worlds() {
        let m = chain();
        let opts = OracleOptions {
            clamp_evidence: false,
            ..OracleOptions::default()
        };
        let dist = enumerate_worlds(&m, &opts).unwrap();
        // 8 feasible minimal worlds over {X, Y(1)}
        assert_eq!(dist.worlds.len(), 8);
        let total: f64 = dist.worlds.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_bernoulli_model_has_two_worlds() {
        let m = load_model(
            "
random Boolean Coin;
Coin ~ Bernoulli[0.5];
query Coin;
",
        )
        .unwrap();
        let dist = enumerate_worlds(&m, &OracleOptions::default()).unwrap();
        assert_eq!(dist.worlds.len(), 2);
        let post = exact_posterior(&m, &dist, 0);
        assert!((post.prob(&Value::Bool(true)) - 0.5).abs() < 1e-12);
        assert!((post.prob(&Value::Bool(false)) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn world_probabilities_match_their_log_prob() {
        let m = chain();
        let dist = enumerate_worlds(&m, &OracleOptions::default()).unwrap();
        for (w, p) in &dist.worlds {
            let direct = log_prob(&m, w).exp() / dist.log_evidence_mass.exp();
            assert!(
                ((p / direct) - 1.0).abs() < 1e-12,
                "stored {p} vs exp(log_prob)/Z {direct}"
            );
        }
    }

    #[test]
    fn smallnet_posterior_matches_hand_computation() {
        let m = load_model(&corpus("smallnet.oum")).unwrap();
        let dist = enumerate_worlds(&m, &OracleOptions::default()).unwrap();
        // minimal worlds never contain SlipperyRoad
        for (w, _) in &dist.worlds {
            assert_eq!(w.len(), 4);
        }
        let post_c = exact_posterior(&m, &dist, 0);
        let post_r = exact_posterior(&m, &dist, 1);
        assert!((post_c.prob(&Value::Bool(true)) - 0.5746153846153846).abs() < 1e-10);
        assert!((post_r.prob(&Value::Bool(true)) - 0.7047692307692308).abs() < 1e-10);
    }

    #[test]
    fn naive_ratio_matches_the_hand_value() {
        let m = chain();
        let targets = Targets::from_model(&m);
        let from = chain_world(&m, 1, 1, None);
        let to = chain_world(&m, 0, 1, Some(1));
        let r = naive_transition_ratio(&m, &from, &to, &app0(&m, "X"), &targets);
        assert!((r - 0.5).abs() < 1e-12);
        let identical = naive_transition_ratio(&m, &from, &from, &app0(&m, "X"), &targets);
        assert!((identical - 1.0).abs() < 1e-12);
    }

    #[test]
    fn urn_oracle_is_rejected_for_unclamped_continuous_variables() {
        let m = load_model(&corpus("urn.oum")).unwrap();
        match enumerate_worlds(&m, &OracleOptions::default()) {
            Err(OracleError::Continuous(v)) => assert!(v.contains("TrueWeight"), "{v}"),
            other => panic!("expected a continuous-variable rejection, got {other:?}"),
        }
    }

    #[test]
    fn query_support_extends_beyond_evidence() {
        // query a variable that evidence alone would not instantiate
        let m = load_model(
            "
random Boolean A;
random Boolean B;
A ~ Bernoulli[0.3];
B { if A then ~Bernoulli[0.9] else ~Bernoulli[0.2] };
obs A = true;
query B;
",
        )
        .unwrap();
        let dist = enumerate_worlds(&m, &OracleOptions::default()).unwrap();
        assert_eq!(dist.worlds.len(), 2);
        let post = exact_posterior(&m, &dist, 0);
        assert!((post.prob(&Value::Bool(true)) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn chain_worlds_include_the_expected_dumps() {
        let m = chain();
        let dist = enumerate_worlds(&m, &OracleOptions::default()).unwrap();
        let dumps: Vec<String> = dist.worlds.iter().map(|(w, _)| w.dump(&m)).collect();
        assert!(dumps.contains(&"X = 1\nY(1) = 1".to_string()));
        assert!(dumps.contains(&"X = 0\nY(1) = 1\nY(2) = 1".to_string()));
        assert!(dumps.contains(&"X = 2\nY(1) = 1\nY(2) = 0".to_string()));
        assert!(dumps.contains(&"X = 2\nY(1) = 1\nY(2) = 1".to_string()));
        let _ = y(&m, 1);
    }
}
