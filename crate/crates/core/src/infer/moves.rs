//! The three move families: parent-conditional Metropolis–Hastings,
//! full-conditional resampling with core reduction, and birth/death moves
//! on object counts.

use std::collections::BTreeSet;

use rand::Rng;

use crate::cbn::{
    children, core, extend_support, finite_domain, log_prob, prune, struct_log,
    structural_keeps, target_vars, PartialWorld, Targets,
};
use crate::dist::NEG_INF;
use crate::model::{FuncKind, Model};
use crate::value::{GroundVar, ObjectId, Value};

/// Resampleable variables: everything assigned except evidence and number
/// variables (birth/death moves own the counts).
pub fn pickable_vars(model: &Model, world: &PartialWorld, targets: &Targets) -> Vec<GroundVar> {
    let _ = model;
    world
        .vars()
        .filter(|v| !v.is_number() && !targets.is_evidence(v))
        .cloned()
        .collect()
}

fn n_pickable(model: &Model, world: &PartialWorld, targets: &Targets) -> f64 {
    pickable_vars(model, world, targets).len() as f64
}

/// Set `x := v`, restructuring when `x` is an origin attribute of a
/// generated object (the object migrates to the binding group of the new
/// value and both counts are adjusted). Returns `x`'s key after the move,
/// before canonical renaming.
pub fn apply_value(model: &Model, world: &mut PartialWorld, x: &GroundVar, v: Value) -> GroundVar {
    let (func, args) = match x {
        GroundVar::App { func, args } => (*func, args),
        GroundVar::Num { .. } => panic!("number variables are moved by birth/death only"),
    };
    if model.func(func).kind == FuncKind::Random {
        world.set_value(model, x.clone(), v);
        return x.clone();
    }
    match args[0].as_object().cloned() {
        Some(ObjectId::Evidence { .. }) | None => {
            // a labeling variable; groups are re-derived afterwards
            world.set_value(model, x.clone(), v);
            x.clone()
        }
        Some(ObjectId::Guaranteed { .. }) => {
            panic!("origin variable applied to a guaranteed object")
        }
        Some(ObjectId::Generated {
            stmt,
            binding,
            index,
        }) => {
            let pos = model
                .binding_pos(stmt, func)
                .expect("flipping an origin the statement does not bind");
            if binding[pos] == v {
                world.set_value(model, x.clone(), v);
                return x.clone();
            }
            let mut new_binding = binding.clone();
            new_binding[pos] = v.clone();
            // adjust the two counts
            let old_num = GroundVar::num(stmt, binding.clone());
            let new_num = GroundVar::num(stmt, new_binding.clone());
            let old_n = world.count(stmt, &binding).expect("count of old group");
            let new_n = world.count(stmt, &new_binding).expect("count of new group");
            world.set_value(model, old_num, Value::Int(old_n as i64 - 1));
            world.set_value(model, new_num, Value::Int(new_n as i64 + 1));
            // relocate the object under a temporary index; the canonical
            // refresh settles its final position
            let max_idx = world
                .referenced_indices(stmt, &new_binding)
                .into_iter()
                .max()
                .unwrap_or(0);
            let old_obj = ObjectId::Generated {
                stmt,
                binding,
                index,
            };
            let new_obj = ObjectId::Generated {
                stmt,
                binding: new_binding,
                index: max_idx + 1,
            };
            world.rename_object(model, &old_obj, &new_obj);
            let renamed = GroundVar::app(func, vec![Value::Obj(new_obj)]);
            world.set_value(model, renamed.clone(), v);
            renamed
        }
    }
}

/// A rebuilt candidate world plus the bookkeeping needed to talk about the
/// original variables inside it (origin flips rename objects).
pub struct Candidate {
    pub world: PartialWorld,
    pub ext_log_prob: f64,
    pub x: GroundVar,
    renames: std::collections::BTreeMap<ObjectId, ObjectId>,
}

impl Candidate {
    /// Key of an original-world variable inside this candidate.
    pub fn key_of(&self, var: &GroundVar) -> GroundVar {
        crate::cbn::world_rename_var(var, &self.renames)
    }
}

/// Rebuild a candidate world that agrees with `keep` (plus the structural
/// state), assigns `x := v`, and re-extends over the targets. With
/// `minimal` unset the candidate keeps variables with no support path
/// (ablation mode).
pub fn build_candidate<R: Rng>(
    model: &Model,
    world: &PartialWorld,
    targets: &Targets,
    keep: &BTreeSet<GroundVar>,
    x: &GroundVar,
    v: Value,
    minimal: bool,
    rng: &mut R,
) -> Candidate {
    let mut cand = world.clone();
    let structural = structural_keeps(model, world);
    let drop: Vec<GroundVar> = cand
        .vars()
        .filter(|y| !(keep.contains(*y) || structural.contains(*y) || *y == x))
        .cloned()
        .collect();
    for y in &drop {
        cand.unassign(model, y);
    }
    let x1 = apply_value(model, &mut cand, x, v);
    let mut renames = std::collections::BTreeMap::new();
    if let (GroundVar::App { args: old_args, .. }, GroundVar::App { args: new_args, .. }) =
        (x, &x1)
    {
        if let (Some(Value::Obj(old_obj)), Some(Value::Obj(new_obj))) =
            (old_args.first(), new_args.first())
        {
            if old_obj != new_obj {
                renames.insert(old_obj.clone(), new_obj.clone());
            }
        }
    }
    let canon = cand.refresh_structure(model);
    // compose the flip rename with the canonical rename
    for v in renames.values_mut() {
        if let Some(next) = canon.get(v) {
            *v = next.clone();
        }
    }
    for (k, v) in &canon {
        renames.entry(k.clone()).or_insert_with(|| v.clone());
    }
    let x2 = crate::cbn::world_rename_var(&x1, &canon);
    let ext = extend_support(model, &mut cand, targets, rng);
    if minimal {
        prune(model, &mut cand, targets);
    }
    Candidate {
        world: cand,
        ext_log_prob: ext,
        x: x2,
        renames,
    }
}

/// Full-conditional weight of a candidate: the structural factor, the
/// variable's own parent-conditional density, one over the number of
/// resampleable variables, and the densities of the shared children inside
/// the core. Log scale; minus infinity marks an impossible candidate.
pub fn gibbs_log_weight(
    model: &Model,
    cand: &PartialWorld,
    targets: &Targets,
    x: &GroundVar,
    ups: &BTreeSet<GroundVar>,
) -> f64 {
    let mut w = struct_log(model, cand);
    if w == NEG_INF {
        return NEG_INF;
    }
    let mut terms: Vec<&GroundVar> = ups.iter().collect();
    terms.push(x);
    for y in terms {
        let t = cand.trace(y).unwrap_or_else(|| {
            panic!(
                "core child {} missing from a candidate world",
                model.display_var(y)
            )
        });
        match t.dist() {
            Some(d) => {
                let val = cand.value(y).expect("assigned");
                w += d.log_density(val);
            }
            None => return NEG_INF,
        }
        if w == NEG_INF {
            return NEG_INF;
        }
    }
    w - n_pickable(model, cand, targets).ln()
}

pub struct GibbsOutcome {
    pub world: PartialWorld,
    pub changed: bool,
}

/// One full-conditional update of `x` over its finite domain: reduce to the
/// core, build one candidate per value, weight them, and sample. Never
/// rejects. With `noblock` the reduction is skipped (the ablation sampler):
/// candidates keep every pinned variable and impossible ones get weight
/// zero.
pub fn gibbs_update<R: Rng>(
    model: &Model,
    world: &PartialWorld,
    targets: &Targets,
    x: &GroundVar,
    domain: &[Value],
    noblock: bool,
    rng: &mut R,
) -> GibbsOutcome {
    let keep: BTreeSet<GroundVar> = if noblock {
        world.vars().filter(|v| *v != x).cloned().collect()
    } else {
        let tv = target_vars(model, world, targets);
        core(model, world, x, &tv)
    };
    let ups: BTreeSet<GroundVar> = children(model, world, x)
        .intersection(&keep)
        .cloned()
        .collect();
    let current = world.value(x).expect("x assigned").clone();
    let mut cands: Vec<Candidate> = Vec::with_capacity(domain.len());
    let mut current_idx = None;
    for v in domain {
        if *v == current {
            current_idx = Some(cands.len());
            cands.push(Candidate {
                world: world.clone(),
                ext_log_prob: 0.0,
                x: x.clone(),
                renames: std::collections::BTreeMap::new(),
            });
        } else {
            cands.push(build_candidate(
                model,
                world,
                targets,
                &keep,
                x,
                v.clone(),
                !noblock,
                rng,
            ));
        }
    }
    let current_idx = current_idx.unwrap_or_else(|| {
        panic!(
            "current value of {} is outside its finite domain",
            model.display_var(x)
        )
    });
    let weights: Vec<f64> = cands
        .iter()
        .map(|cand| {
            let cand_ups: BTreeSet<GroundVar> =
                ups.iter().map(|u| cand.key_of(u)).collect();
            gibbs_log_weight(model, &cand.world, targets, &cand.x, &cand_ups)
        })
        .collect();
    let max = weights.iter().cloned().fold(NEG_INF, f64::max);
    assert!(
        max > NEG_INF,
        "all full-conditional candidates have zero weight for {}",
        model.display_var(x)
    );
    let probs: Vec<f64> = weights.iter().map(|w| (w - max).exp()).collect();
    let total: f64 = probs.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut pick = probs.len() - 1;
    for (i, p) in probs.iter().enumerate() {
        u -= p;
        if u <= 0.0 {
            pick = i;
            break;
        }
    }
    let mut chosen = cands.swap_remove(pick).world;
    if noblock && pick != current_idx {
        // restore the state invariant; the blocking behavior above is what
        // the ablation is about
        prune(model, &mut chosen, targets);
    }
    GibbsOutcome {
        changed: pick != current_idx,
        world: chosen,
    }
}

/// Log proposal probability of the transition `world -x-> next`: pick `x`
/// uniformly among the resampleable variables, draw its new value from the
/// parent-conditional distribution, then draw every newly instantiated
/// variable parent-conditionally in the new world.
///
/// Panics when the two worlds disagree on a shared variable other than
/// `x` (the transition is then unreachable).
pub fn proposal_logprob(
    model: &Model,
    world: &PartialWorld,
    next: &PartialWorld,
    x: &GroundVar,
    targets: &Targets,
) -> f64 {
    for (var, value) in world.entries() {
        if var != x {
            if let Some(other) = next.value(var) {
                assert!(
                    other == value,
                    "transition not reachable via {}: {} differs",
                    model.display_var(x),
                    model.display_var(var)
                );
            }
        }
    }
    let next_val = next.value(x).expect("x assigned in the target world");
    let d = world
        .trace(x)
        .expect("x traced")
        .dist()
        .expect("x supported");
    let mut lp = -n_pickable(model, world, targets).ln() + d.sample_log_prob(next_val);
    for (var, value) in next.entries() {
        if world.contains(var) {
            continue;
        }
        let t = next.trace(var).expect("traced");
        let dist = t.dist().expect("supported");
        lp += dist.log_density(value);
    }
    lp
}

/// Reduced acceptance ratio for a parent-conditional move on a random
/// variable without structural change:
/// `min(1, |V(σ)|/|V(σ')| Π_{Y ∈ Λ(σ,x) ∩ Λ(σ',x)} p_Y(σ')/p_Y(σ))`.
pub fn acceptance_ratio(
    model: &Model,
    world: &PartialWorld,
    next: &PartialWorld,
    x: &GroundVar,
    targets: &Targets,
) -> f64 {
    debug_assert!(
        (struct_log(model, world) - struct_log(model, next)).abs() < 1e-9,
        "the reduced ratio applies to moves without structural change"
    );
    let shared: Vec<GroundVar> = children(model, world, x)
        .intersection(&children(model, next, x))
        .cloned()
        .collect();
    let mut log_ratio =
        n_pickable(model, world, targets).ln() - n_pickable(model, next, targets).ln();
    for y in &shared {
        let before = world
            .trace(y)
            .and_then(|t| t.dist())
            .map(|d| d.log_density(world.value(y).unwrap()))
            .expect("supported");
        let after = next
            .trace(y)
            .and_then(|t| t.dist())
            .map(|d| d.log_density(next.value(y).unwrap()))
            .expect("supported");
        if after == NEG_INF {
            return 0.0;
        }
        log_ratio += after - before;
    }
    log_ratio.exp().min(1.0)
}

pub struct MhOutcome {
    pub world: PartialWorld,
    pub accepted: bool,
}

/// One parent-conditional Metropolis–Hastings move on `x`: draw a new value
/// from the parent-conditional distribution (uniformly over the current
/// domain for origin attributes), repair the world to minimal
/// self-supporting form, and accept with the exact ratio computed from the
/// density change and both proposal probabilities.
pub fn mh_update<R: Rng>(
    model: &Model,
    world: &PartialWorld,
    targets: &Targets,
    x: &GroundVar,
    rng: &mut R,
) -> MhOutcome {
    let reject = || MhOutcome {
        world: world.clone(),
        accepted: false,
    };
    let is_origin = matches!(
        x,
        GroundVar::App { func, .. } if model.func(*func).kind == FuncKind::Origin
    );
    let current = world.value(x).expect("x assigned").clone();
    let (proposed, fwd_val_lp) = if is_origin {
        let dom = finite_domain(model, world, x).expect("origin domains are finite");
        let v = dom[rng.random_range(0..dom.len())].clone();
        (v, -(dom.len() as f64).ln())
    } else {
        let d = world.trace(x).expect("traced").dist().expect("supported");
        let v = d.sample(rng);
        let lp = d.sample_log_prob(&v);
        (v, lp)
    };
    let keep: BTreeSet<GroundVar> = world.vars().filter(|v| *v != x).cloned().collect();
    let built = build_candidate(model, world, targets, &keep, x, proposed.clone(), true, rng);
    let (cand, fwd_ext_lp, cx) = (built.world, built.ext_log_prob, built.x);
    if cand.dump(model) == world.dump(model) {
        // proposing the current world again is always accepted
        return MhOutcome {
            world: cand,
            accepted: true,
        };
    }
    if !cand.contains(&cx) {
        // the new value made x itself unnecessary; the reverse move cannot
        // pick it, so the proposal falls outside the reachable relation
        return reject();
    }
    let lp_before = log_prob(model, world);
    let lp_after = log_prob(model, &cand);
    if lp_after == NEG_INF {
        return reject();
    }
    let fwd_q = -n_pickable(model, world, targets).ln() + fwd_val_lp + fwd_ext_lp;
    // reverse proposal: pick x in the candidate, draw the old value back,
    // re-instantiate what the forward move pruned
    let rev_val_lp = if is_origin {
        let dom = finite_domain(model, &cand, &cx).expect("origin domains are finite");
        if !dom.contains(&reverse_value(&cand, &current)) {
            return reject();
        }
        -(dom.len() as f64).ln()
    } else {
        let d = cand.trace(&cx).expect("traced").dist().expect("supported");
        let lp = d.sample_log_prob(&reverse_value(&cand, &current));
        if lp == NEG_INF {
            return reject();
        }
        lp
    };
    let mut rev_ext_lp = 0.0;
    for (var, value) in world.entries() {
        if cand.contains(var) {
            continue;
        }
        let t = world.trace(var).expect("traced");
        let dist = t.dist().expect("supported");
        debug_assert!(
            dist.sample_log_prob(value) == dist.log_density(value),
            "pruned object-valued variable would need guided re-extension"
        );
        rev_ext_lp += dist.log_density(value);
    }
    let rev_q = -n_pickable(model, &cand, targets).ln() + rev_val_lp + rev_ext_lp;
    let log_alpha = lp_after + rev_q - lp_before - fwd_q;
    let accepted = log_alpha >= 0.0 || rng.random::<f64>() < log_alpha.exp();
    MhOutcome {
        world: if accepted { cand } else { world.clone() },
        accepted,
    }
}

/// Map the old value into the candidate's canonical view: a generated
/// object that lost all its references reads as the fresh representative
/// of its binding group.
fn reverse_value(cand: &PartialWorld, old: &Value) -> Value {
    if let Value::Obj(ObjectId::Generated {
        stmt,
        binding,
        index,
    }) = old
    {
        let refd = cand.referenced_indices(*stmt, binding);
        if !refd.contains(index) {
            return Value::Obj(ObjectId::Generated {
                stmt: *stmt,
                binding: binding.clone(),
                index: refd.len() as u32 + 1,
            });
        }
    }
    old.clone()
}

pub struct BirthDeathOutcome {
    pub world: PartialWorld,
    pub accepted: bool,
    pub was_birth: bool,
}

/// One birth or death move on a uniformly chosen number-statement
/// instance. A birth adds one unreferenced object (a count increment in
/// the canonical representation); a death removes one and is a rejected
/// no-op when every alive object carries content. During the relaxed
/// initialization phase the ratio keeps only the count pmf and the index
/// multiplicity, ignoring child-variable and residual terms.
pub fn birth_death_update<R: Rng>(
    model: &Model,
    world: &PartialWorld,
    targets: &Targets,
    relaxed: bool,
    rng: &mut R,
) -> Option<BirthDeathOutcome> {
    let _ = targets;
    let instances = model.birth_death_instances();
    if instances.is_empty() {
        return None;
    }
    let (stmt, binding) = instances[rng.random_range(0..instances.len())].clone();
    let num = GroundVar::num(stmt, binding.clone());
    let n = world
        .count(stmt, &binding)
        .unwrap_or_else(|| panic!("count {} not instantiated", model.display_var(&num)));
    let k = world.referenced_indices(stmt, &binding).len() as u64;
    let birth = rng.random::<f64>() < 0.5;
    if !birth && n <= k {
        return Some(BirthDeathOutcome {
            world: world.clone(),
            accepted: false,
            was_birth: false,
        });
    }
    let new_n = if birth { n + 1 } else { n - 1 };
    let mut cand = world.clone();
    cand.set_value(model, num.clone(), Value::Int(new_n as i64));
    cand.refresh_structure(model);
    let log_alpha = if relaxed {
        let pmf = world.trace(&num).expect("traced").dist().expect("supported");
        let d = pmf.log_density(&Value::Int(new_n as i64))
            - pmf.log_density(&Value::Int(n as i64));
        let mult = if birth {
            ((n + 1) as f64 / (n + 1 - k) as f64).ln()
        } else {
            -((n as f64 / (n - k) as f64).ln())
        };
        d + mult
    } else {
        let lp_after = log_prob(model, &cand);
        if lp_after == NEG_INF {
            return Some(BirthDeathOutcome {
                world: world.clone(),
                accepted: false,
                was_birth: birth,
            });
        }
        lp_after - log_prob(model, world)
    };
    let accepted = log_alpha >= 0.0 || rng.random::<f64>() < log_alpha.exp();
    Some(BirthDeathOutcome {
        world: if accepted { cand } else { world.clone() },
        accepted,
        was_birth: birth,
    })
}
