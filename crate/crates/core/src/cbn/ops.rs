//! World-level operations: probability, parent/child structure, edge
//! contingency, core computation, domain enumeration, extension to a
//! minimal self-supporting world, and pruning.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use crate::dist::{ln_factorial, Distribution, NEG_INF};
use crate::model::{DomainClass, FuncKind, Model, RtExpr, RtLeaf, RtTree};
use crate::value::{FuncId, GroundVar, ObjectId, StmtId, TypeId, Value};

use super::eval::{eval_stmt_pmf, eval_term, eval_tree, origin_from_identity, Evaluator, TraceResult};
use super::world::PartialWorld;

/// The variables a world must stay self-supporting over: scalar evidence
/// clamps plus the query terms.
#[derive(Debug, Clone)]
pub struct Targets {
    pub evidence: BTreeMap<GroundVar, Value>,
    pub query_terms: Vec<RtExpr>,
}

impl Targets {
    pub fn from_model(model: &Model) -> Self {
        Targets {
            evidence: model.evidence.iter().cloned().collect(),
            query_terms: model.queries.iter().map(|q| q.term.clone()).collect(),
        }
    }

    pub fn is_evidence(&self, var: &GroundVar) -> bool {
        self.evidence.contains_key(var)
    }
}

/// True iff the world supports `x`: its tree can be fully evaluated from
/// assigned variables.
pub fn supports(model: &Model, world: &PartialWorld, x: &GroundVar) -> bool {
    eval_tree(model, world, x).supported()
}

/// Children of `x` per the inverse reference relation.
pub fn children(model: &Model, world: &PartialWorld, x: &GroundVar) -> BTreeSet<GroundVar> {
    let _ = model;
    debug_assert!(world.contains(x), "children of an unassigned variable");
    world.children_of(x)
}

pub fn is_switching_parent(world: &PartialWorld, x: &GroundVar, y: &GroundVar) -> bool {
    if x == y {
        return false;
    }
    world
        .trace(y)
        .map(|t| t.guard_refs.contains(x))
        .unwrap_or(false)
}

pub fn is_switching_var(world: &PartialWorld, x: &GroundVar) -> bool {
    world
        .children_of(x)
        .iter()
        .any(|y| is_switching_parent(world, x, y))
}

/// Edge contingency: the edge `y -> z` is contingent on `x` iff the tree of
/// `z` references `x` strictly before its first reference to `y`.
pub fn is_edge_contingent(
    world: &PartialWorld,
    z: &GroundVar,
    y: &GroundVar,
    x: &GroundVar,
) -> bool {
    let t = world.trace(z).expect("contingency on an untraced variable");
    let y_pos = t
        .ref_pos(y)
        .expect("edge contingency requires y to be a parent of z");
    match t.ref_pos(x) {
        Some(x_pos) => x_pos < y_pos,
        None => false,
    }
}

/// Log probability of a self-supporting world: the sum of per-variable
/// conditional log densities plus the structural terms (set-evidence
/// labeling and object-index multiplicity).
///
/// Panics if the world is not self-supporting.
pub fn log_prob(model: &Model, world: &PartialWorld) -> f64 {
    assert!(
        world.is_self_supporting(),
        "log_prob requires a self-supporting world"
    );
    let mut lp = 0.0;
    for (var, value) in world.entries() {
        let t = world.trace(var).expect("trace exists");
        let d = t.dist().expect("supported");
        lp += d.log_density(value);
        if lp == NEG_INF {
            return NEG_INF;
        }
    }
    lp + struct_log(model, world)
}

/// Structural log density: everything the per-variable product does not
/// carry. For each set-evidence type this is the labeling factor
/// `sum ln(m_g!) - ln(n!)`, the count constraint, and the zero-count
/// residuals of alive-but-unreferenced generator objects; for latent
/// generated objects it is the index-assignment multiplicity
/// `ln(n! / (n-k)!)` of each binding group.
pub fn struct_log(model: &Model, world: &PartialWorld) -> f64 {
    let mut lp = 0.0;
    for se in &model.set_evidence {
        // symbols whose labeling is complete; partial worlds under
        // construction only account for what is already labeled
        let mut n: i64 = 0;
        for sym in &se.symbols {
            match world.symbol_group(model, se.ty, *sym) {
                super::world::GroupResolution::Group(..) => n += 1,
                super::world::GroupResolution::Unassigned => {}
                super::world::GroupResolution::NoMatch => return NEG_INF,
            }
        }
        let mut total: i64 = 0;
        let mut ln_fact_sum = 0.0;
        for sid in &model.ty(se.ty).stmts {
            let stmt = model.stmt(*sid);
            if let Some(instances) = model.static_instances(*sid) {
                for binding in instances {
                    // derived group counts appear once the first refresh
                    // has run; a world under construction just has nothing
                    // to account yet
                    let Some(m) = world.count(*sid, &binding) else {
                        continue;
                    };
                    total += m as i64;
                    ln_fact_sum += ln_factorial(m);
                }
            } else {
                // object-bound groups: explicit when nonempty, zero residual
                // for every other alive generator object
                let mut explicit_generators: BTreeMap<(StmtId, Vec<Value>), u64> =
                    BTreeMap::new();
                for (var, value) in world.entries() {
                    if let GroundVar::Num { stmt: s, binding } = var {
                        if s == sid {
                            let m = match value {
                                Value::Int(m) if *m >= 0 => *m as u64,
                                other => panic!("number variable holds {other:?}"),
                            };
                            total += m as i64;
                            ln_fact_sum += ln_factorial(m);
                            for b in binding {
                                if let Value::Obj(ObjectId::Generated {
                                    stmt: gs,
                                    binding: gb,
                                    ..
                                }) = b
                                {
                                    *explicit_generators
                                        .entry((*gs, gb.clone()))
                                        .or_insert(0) += 1;
                                }
                            }
                        }
                    }
                }
                // generator families: binding tuples range over a generated
                // type; the corpus binds exactly one origin per statement
                let gen_ty = match model.func(stmt.origins[0]).ret {
                    crate::model::TypeRef::Decl(t) => t,
                    _ => continue,
                };
                for gsid in &model.ty(gen_ty).stmts {
                    if let Some(instances) = model.static_instances(*gsid) {
                        for gbinding in instances {
                            // unassigned generator counts (worlds under
                            // construction) have no residual yet
                            let Some(alive) = world.count(*gsid, &gbinding) else {
                                continue;
                            };
                            let explicit = explicit_generators
                                .get(&(*gsid, gbinding.clone()))
                                .copied()
                                .unwrap_or(0);
                            if explicit > alive {
                                return NEG_INF;
                            }
                            let spares = alive - explicit;
                            if spares > 0 {
                                let rep = ObjectId::Generated {
                                    stmt: *gsid,
                                    binding: gbinding.clone(),
                                    index: 0,
                                };
                                let pmf =
                                    eval_stmt_pmf(model, world, *sid, &[Value::Obj(rep)]);
                                lp += spares as f64 * pmf.log_density(&Value::Int(0));
                            }
                        }
                    }
                }
            }
        }
        if total != n {
            return NEG_INF;
        }
        lp += ln_fact_sum - ln_factorial(n as u64);
    }
    // index-assignment multiplicity of referenced latent objects
    for ((stmt, binding), indices) in world.referenced_objects() {
        let n = world
            .count(stmt, &binding)
            .expect("count of a referenced object group is assigned");
        let k = indices.len() as u64;
        if k > n {
            return NEG_INF;
        }
        for i in (n - k + 1)..=n {
            lp += (i as f64).ln();
        }
    }
    lp
}

/// Variables with a parent-child path to `targets` that avoids every edge
/// contingent on `x`; computed by reverse reachability.
pub fn core(
    model: &Model,
    world: &PartialWorld,
    x: &GroundVar,
    target_vars: &BTreeSet<GroundVar>,
) -> BTreeSet<GroundVar> {
    let _ = model;
    let mut out: BTreeSet<GroundVar> = BTreeSet::new();
    let mut queue: Vec<GroundVar> = target_vars
        .iter()
        .filter(|t| *t != x && world.contains(t))
        .cloned()
        .collect();
    while let Some(z) = queue.pop() {
        if !out.insert(z.clone()) {
            continue;
        }
        if let Some(t) = world.trace(&z) {
            for (y_pos, y) in t.refs.iter().enumerate() {
                if y == x || out.contains(y) {
                    continue;
                }
                let contingent = match t.ref_pos(x) {
                    Some(x_pos) => x_pos < y_pos,
                    None => false,
                };
                if !contingent {
                    queue.push(y.clone());
                }
            }
        }
    }
    out
}

/// Children of `x` inside the core.
pub fn upsilon(
    model: &Model,
    world: &PartialWorld,
    x: &GroundVar,
    target_vars: &BTreeSet<GroundVar>,
) -> BTreeSet<GroundVar> {
    let c = core(model, world, x, target_vars);
    world.children_of(x).intersection(&c).cloned().collect()
}

/// The values a resampling step enumerates for `x`, or `None` when the
/// domain is not finite (number variables, Poisson-valued and continuous
/// functions).
///
/// Object-valued domains are computed relative to the world without `x`'s
/// own reference: an object the variable alone keeps alive collapses onto
/// the fresh representative of its binding group, so every candidate value
/// leads to a distinct canonical world.
pub fn finite_domain(model: &Model, world: &PartialWorld, x: &GroundVar) -> Option<Vec<Value>> {
    match x {
        GroundVar::Num { .. } => None,
        GroundVar::App { func, args } => {
            let f = model.func(*func);
            if f.kind == FuncKind::Origin {
                let obj = args[0].as_object().expect("origin argument is an object");
                let arg_ty = match obj {
                    ObjectId::Evidence { ty, .. } | ObjectId::Guaranteed { ty, .. } => *ty,
                    ObjectId::Generated { stmt, .. } => model.stmt(*stmt).ty,
                };
                let null_possible = model
                    .ty(arg_ty)
                    .stmts
                    .iter()
                    .any(|s| !model.stmt(*s).origins.contains(func));
                return match model.func_domain_class(*func) {
                    DomainClass::Finite(dom) => Some(dom.clone()),
                    _ => {
                        let ret_ty = match f.ret {
                            crate::model::TypeRef::Decl(t) => t,
                            _ => return None,
                        };
                        let mut dom = Vec::new();
                        if null_possible {
                            dom.push(Value::Null);
                        }
                        dom.extend(resample_objects(model, world, x, ret_ty)?);
                        Some(dedup_keep_order(dom))
                    }
                };
            }
            match model.func_domain_class(*func) {
                DomainClass::Finite(dom) => Some(dom.clone()),
                DomainClass::FinitePerWorld => {
                    let tree = f.tree.as_ref().expect("random function has a tree");
                    let mut dom = Vec::new();
                    if collect_leaf_domain(model, world, x, tree, &mut dom).is_err() {
                        return None;
                    }
                    Some(dedup_keep_order(dom))
                }
                DomainClass::CountablyInfinite | DomainClass::Continuous => None,
            }
        }
    }
}

/// Candidate objects of `ty` for resampling `x`: objects referenced by the
/// rest of the world, plus `x`'s current object when nothing else holds it
/// (it stands for every spare of its group), plus one fresh representative
/// per binding group that still has spares.
fn resample_objects(
    model: &Model,
    world: &PartialWorld,
    x: &GroundVar,
    ty: TypeId,
) -> Option<Vec<Value>> {
    let info = model.ty(ty);
    if let Some(se_idx) = info.set_evidence {
        let se = &model.set_evidence[se_idx];
        return Some(
            se.symbols
                .iter()
                .map(|s| Value::Obj(ObjectId::Evidence { ty, sym: *s }))
                .collect(),
        );
    }
    if !info.guaranteed.is_empty() {
        return Some(
            info.guaranteed
                .iter()
                .map(|s| Value::Obj(ObjectId::Guaranteed { ty, sym: *s }))
                .collect(),
        );
    }
    let refs_ex = world.referenced_excluding(model, x);
    let current_obj = match world.value(x) {
        Some(Value::Obj(o @ ObjectId::Generated { .. })) => Some(o.clone()),
        _ => None,
    };
    let mut out = Vec::new();
    for sid in &info.stmts {
        let instances = model.static_instances(*sid)?;
        for binding in instances {
            let n = world.count(*sid, &binding)?;
            let empty = std::collections::BTreeSet::new();
            let others = refs_ex.get(&(*sid, binding.clone())).unwrap_or(&empty);
            for idx in others {
                out.push(Value::Obj(ObjectId::Generated {
                    stmt: *sid,
                    binding: binding.clone(),
                    index: *idx,
                }));
            }
            let current_here = match &current_obj {
                Some(ObjectId::Generated {
                    stmt: cs,
                    binding: cb,
                    index: ci,
                }) => *cs == *sid && *cb == binding && !others.contains(ci),
                _ => false,
            };
            if current_here {
                // the lone-referenced current object stands for all spares
                // of this group: any "fresh" move would canonicalize back
                // into the same world
                out.push(Value::Obj(current_obj.clone().unwrap()));
            } else {
                let spares = n.saturating_sub(others.len() as u64);
                if spares > 0 {
                    let taken = world.referenced_indices(*sid, &binding);
                    let fresh_idx = taken.iter().max().copied().unwrap_or(0) + 1;
                    out.push(Value::Obj(ObjectId::Generated {
                        stmt: *sid,
                        binding: binding.clone(),
                        index: fresh_idx,
                    }));
                }
            }
        }
    }
    Some(out)
}

fn dedup_keep_order(dom: Vec<Value>) -> Vec<Value> {
    let mut seen = BTreeSet::new();
    dom.into_iter().filter(|v| seen.insert(v.clone())).collect()
}

fn collect_leaf_domain(
    model: &Model,
    world: &PartialWorld,
    x: &GroundVar,
    tree: &RtTree,
    out: &mut Vec<Value>,
) -> Result<(), ()> {
    match tree {
        RtTree::Node {
            then_branch,
            else_branch,
            ..
        } => {
            collect_leaf_domain(model, world, x, then_branch, out)?;
            collect_leaf_domain(model, world, x, else_branch, out)
        }
        RtTree::Leaf(leaf) => {
            match leaf {
                RtLeaf::Categorical { domain, .. } | RtLeaf::Tabular { domain, .. } => {
                    out.extend(domain.iter().cloned());
                }
                RtLeaf::Bernoulli { int_valued, .. } => {
                    if *int_valued {
                        out.push(Value::Int(0));
                        out.push(Value::Int(1));
                    } else {
                        out.push(Value::Bool(false));
                        out.push(Value::Bool(true));
                    }
                }
                RtLeaf::NullLeaf => out.push(Value::Null),
                RtLeaf::UniformChoice { ty } => match resample_objects(model, world, x, *ty) {
                    Some(objs) => {
                        if objs.is_empty() {
                            out.push(Value::Null);
                        }
                        out.extend(objs);
                    }
                    None => return Err(()),
                },
                RtLeaf::Poisson { .. }
                | RtLeaf::UniformReal { .. }
                | RtLeaf::Gaussian { .. } => return Err(()),
            }
            Ok(())
        }
    }
}

/// Resolve the alive object set of a type in this world.
pub fn alive_objects_dist(
    model: &Model,
    world: &PartialWorld,
    ty: TypeId,
) -> Result<Distribution, GroundVar> {
    let mut ev = Evaluator::new(model, world);
    ev.alive_objects(ty)
}

/// The variables the world must keep: evidence, query support, labeling
/// variables, anchored number variables, and the derived group variables of
/// set-evidence types.
pub fn target_vars(
    model: &Model,
    world: &PartialWorld,
    targets: &Targets,
) -> BTreeSet<GroundVar> {
    let mut out: BTreeSet<GroundVar> = targets.evidence.keys().cloned().collect();
    for q in &targets.query_terms {
        let (_, refs) = eval_term(model, world, q);
        out.extend(refs);
    }
    out.extend(structural_keeps(model, world));
    out
}

/// Labeling variables, anchored number variables and current set-evidence
/// group variables.
pub fn structural_keeps(model: &Model, world: &PartialWorld) -> BTreeSet<GroundVar> {
    let mut out = BTreeSet::new();
    for se in &model.set_evidence {
        let mut origin_funcs: BTreeSet<FuncId> = BTreeSet::new();
        for sid in &model.ty(se.ty).stmts {
            origin_funcs.extend(model.stmt(*sid).origins.iter().copied());
        }
        for sym in &se.symbols {
            let obj = Value::Obj(ObjectId::Evidence {
                ty: se.ty,
                sym: *sym,
            });
            for f in &origin_funcs {
                out.insert(GroundVar::app(*f, vec![obj.clone()]));
            }
        }
        for var in world.vars() {
            if let GroundVar::Num { stmt, .. } = var {
                if model.stmt(*stmt).ty == se.ty {
                    out.insert(var.clone());
                }
            }
        }
    }
    for (stmt, binding) in &model.anchored {
        out.insert(GroundVar::num(*stmt, binding.clone()));
    }
    out
}

/// Remove every variable without a support path to the targets, then
/// restore canonical structure. Idempotent.
pub fn prune(model: &Model, world: &mut PartialWorld, targets: &Targets) {
    let roots = target_vars(model, world, targets);
    let mut needed: BTreeSet<GroundVar> = BTreeSet::new();
    let mut queue: Vec<GroundVar> = roots.into_iter().filter(|v| world.contains(v)).collect();
    while let Some(v) = queue.pop() {
        if !needed.insert(v.clone()) {
            continue;
        }
        if let Some(t) = world.trace(&v) {
            for r in &t.refs {
                if !needed.contains(r) {
                    queue.push(r.clone());
                }
            }
        }
    }
    let drop: Vec<GroundVar> = world
        .vars()
        .filter(|v| !needed.contains(*v))
        .cloned()
        .collect();
    for v in drop {
        world.unassign(model, &v);
    }
    world.refresh_structure(model);
}

const RECURSION_LIMIT: usize = 100_000;

/// Extension state: samples every missing variable from its
/// parent-conditional distribution, parents before children, and records
/// the total sampling log probability.
pub struct Extender<'a, R: Rng> {
    pub model: &'a Model,
    pub rng: &'a mut R,
    pub log_prob: f64,
    depth: usize,
}

impl<'a, R: Rng> Extender<'a, R> {
    pub fn new(model: &'a Model, rng: &'a mut R) -> Self {
        Extender {
            model,
            rng,
            log_prob: 0.0,
            depth: 0,
        }
    }

    pub fn ensure_var(&mut self, world: &mut PartialWorld, var: &GroundVar) {
        self.depth += 1;
        assert!(
            self.depth < RECURSION_LIMIT,
            "dependency recursion limit reached while extending a world"
        );
        if world.contains(var) {
            self.ensure_support(world, var);
            self.depth -= 1;
            return;
        }
        match var {
            GroundVar::App { func, args }
                if self.model.func(*func).kind == FuncKind::Origin =>
            {
                let value = match args[0].as_object() {
                    Some(ObjectId::Generated { stmt, binding, .. }) => {
                        origin_from_identity(self.model, *stmt, binding, *func)
                    }
                    Some(ObjectId::Evidence { .. }) => {
                        panic!("evidence symbol lost its labeling")
                    }
                    _ => panic!("origin variable applied to a guaranteed object"),
                };
                world.set_value(self.model, var.clone(), value);
            }
            _ => loop {
                let trace = eval_tree(self.model, world, var);
                match trace.result {
                    TraceResult::Unsupported(u) => {
                        assert_ne!(&u, var, "variable depends on itself");
                        self.ensure_var(world, &u);
                    }
                    TraceResult::Dist(d) => {
                        let v = d.sample(self.rng);
                        self.log_prob += d.sample_log_prob(&v);
                        world.set_value(self.model, var.clone(), v);
                        break;
                    }
                }
            },
        }
        self.depth -= 1;
    }

    /// Make the tree of an already-assigned variable evaluable.
    pub fn ensure_support(&mut self, world: &mut PartialWorld, var: &GroundVar) {
        loop {
            let trace = eval_tree(self.model, world, var);
            match trace.result {
                TraceResult::Dist(_) => {
                    // refresh the cache if it went stale during extension
                    if world.trace(var) != Some(&trace) {
                        world.retrace(self.model, var);
                    }
                    return;
                }
                TraceResult::Unsupported(u) => {
                    assert_ne!(&u, var, "variable depends on itself");
                    self.ensure_var(world, &u);
                }
            }
        }
    }

    pub fn ensure_term(&mut self, world: &mut PartialWorld, term: &RtExpr) {
        loop {
            match eval_term(self.model, world, term).0 {
                Ok(_) => return,
                Err(u) => self.ensure_var(world, &u),
            }
        }
    }

    /// Make `var`'s tree evaluable, then pin it to `value` (evidence
    /// clamping: the value is set, not sampled).
    pub fn ensure_clamped(&mut self, world: &mut PartialWorld, var: &GroundVar, value: Value) {
        loop {
            let trace = eval_tree(self.model, world, var);
            match trace.result {
                TraceResult::Dist(_) => {
                    world.set_value(self.model, var.clone(), value);
                    return;
                }
                TraceResult::Unsupported(u) => {
                    assert_ne!(&u, var, "variable depends on itself");
                    self.ensure_var(world, &u);
                }
            }
        }
    }
}

/// Make the world self-supporting over the targets without pruning.
/// Returns the sampling log probability of the newly drawn variables.
pub fn extend_support<R: Rng>(
    model: &Model,
    world: &mut PartialWorld,
    targets: &Targets,
    rng: &mut R,
) -> f64 {
    let mut ext = Extender::new(model, rng);
    for (stmt, binding) in &model.anchored {
        ext.ensure_var(world, &GroundVar::num(*stmt, binding.clone()));
    }
    for (var, _) in &targets.evidence {
        ext.ensure_var(world, var);
    }
    for q in &targets.query_terms {
        ext.ensure_term(world, q);
    }
    ext.log_prob
}

/// Extend to a minimal self-supporting world over the targets. Newly
/// required variables are sampled from their parent-conditional
/// distributions (parents before children); returns the total sampling log
/// probability of the extension.
pub fn extend_to_minimal<R: Rng>(
    model: &Model,
    world: &mut PartialWorld,
    targets: &Targets,
    rng: &mut R,
) -> f64 {
    let lp = extend_support(model, world, targets, rng);
    prune(model, world, targets);
    lp
}

/// State-invariant check used by the samplers' debug mode and the test
/// suite: self-supporting, cache-coherent, minimal, feasible, evidence
/// consistent, canonical.
pub fn check_world_invariants(
    model: &Model,
    world: &PartialWorld,
    targets: &Targets,
) -> Result<(), String> {
    if !world.is_self_supporting() {
        return Err("world is not self-supporting".into());
    }
    world.check_coherence(model)?;
    for (var, value) in &targets.evidence {
        match world.value(var) {
            Some(v) if v == value => {}
            _ => return Err(format!("evidence {} not clamped", model.display_var(var))),
        }
    }
    let lp = log_prob(model, world);
    if lp == NEG_INF {
        return Err("world is infeasible".into());
    }
    let mut pruned = world.clone();
    prune(model, &mut pruned, targets);
    if pruned.dump(model) != world.dump(model) {
        return Err("world is not minimal or not canonical".into());
    }
    Ok(())
}
