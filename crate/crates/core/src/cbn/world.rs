//! Mutable partial-world state.
//!
//! A world owns three synchronized maps: the assignment, the cached
//! evaluation traces (one per assigned variable) and the children index,
//! which is exactly the inverse of the trace reference relation. Traces are
//! recomputed only for variables whose reference list contains a changed
//! variable; `check_coherence` in the test suite guards the cache policy.
//!
//! Generated objects are kept canonical: within each number-statement
//! binding group the objects that carry content occupy indices `1..=k`
//! (ordered by their smallest stable referencer), and the remaining alive
//! objects are interchangeable and exist only through the count.

use std::collections::{BTreeMap, BTreeSet};

use crate::model::Model;
use crate::value::{GroundVar, ObjectId, StmtId, SymbolId, TypeId, Value};

use super::eval::{eval_tree, EvalTrace};

/// How a labeled symbol's group resolved from its origin variables.
#[derive(Debug, Clone, PartialEq)]
pub enum GroupResolution {
    Group(StmtId, Vec<Value>),
    /// Some origin variable of the symbol is not assigned yet.
    Unassigned,
    /// The non-null origin set matches no number statement.
    NoMatch,
}

#[derive(Debug, Clone, Default)]
pub struct PartialWorld {
    assignment: BTreeMap<GroundVar, Value>,
    traces: BTreeMap<GroundVar, EvalTrace>,
    children: BTreeMap<GroundVar, BTreeSet<GroundVar>>,
}

impl PartialWorld {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn value(&self, var: &GroundVar) -> Option<&Value> {
        self.assignment.get(var)
    }

    pub fn contains(&self, var: &GroundVar) -> bool {
        self.assignment.contains_key(var)
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn vars(&self) -> impl Iterator<Item = &GroundVar> {
        self.assignment.keys()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&GroundVar, &Value)> {
        self.assignment.iter()
    }

    pub fn trace(&self, var: &GroundVar) -> Option<&EvalTrace> {
        self.traces.get(var)
    }

    /// Children of `var` per the inverse reference relation.
    pub fn children_of(&self, var: &GroundVar) -> BTreeSet<GroundVar> {
        self.children.get(var).cloned().unwrap_or_default()
    }

    pub fn count(&self, stmt: StmtId, binding: &[Value]) -> Option<u64> {
        match self.assignment.get(&GroundVar::num(stmt, binding.to_vec())) {
            Some(Value::Int(n)) if *n >= 0 => Some(*n as u64),
            Some(_) => None,
            None => None,
        }
    }

    /// Assign (or reassign) a variable and refresh the affected traces.
    pub fn set_value(&mut self, model: &Model, var: GroundVar, value: Value) {
        let dirty = self.children_of(&var);
        self.assignment.insert(var.clone(), value);
        self.retrace(model, &var);
        for c in dirty {
            self.retrace(model, &c);
        }
    }

    /// Remove a variable; its children become unsupported.
    pub fn unassign(&mut self, model: &Model, var: &GroundVar) {
        let dirty = self.children_of(var);
        self.assignment.remove(var);
        self.drop_trace(var);
        for c in dirty {
            self.retrace(model, &c);
        }
    }

    fn drop_trace(&mut self, var: &GroundVar) {
        if let Some(old) = self.traces.remove(var) {
            for r in &old.refs {
                if let Some(set) = self.children.get_mut(r) {
                    set.remove(var);
                    if set.is_empty() {
                        self.children.remove(r);
                    }
                }
            }
        }
    }

    pub(crate) fn retrace(&mut self, model: &Model, var: &GroundVar) {
        if !self.assignment.contains_key(var) {
            self.drop_trace(var);
            return;
        }
        let trace = eval_tree(model, self, var);
        self.drop_trace(var);
        for r in &trace.refs {
            self.children
                .entry(r.clone())
                .or_default()
                .insert(var.clone());
        }
        self.traces.insert(var.clone(), trace);
    }

    pub fn retrace_all(&mut self, model: &Model) {
        self.traces.clear();
        self.children.clear();
        let vars: Vec<GroundVar> = self.assignment.keys().cloned().collect();
        for v in vars {
            self.retrace(model, &v);
        }
    }

    /// Indices of the generated objects of `(stmt, binding)` that occur
    /// anywhere in the world content.
    pub fn referenced_indices(&self, stmt: StmtId, binding: &[Value]) -> BTreeSet<u32> {
        let mut out = BTreeSet::new();
        let mut visit = |o: &ObjectId| {
            if let ObjectId::Generated {
                stmt: s,
                binding: b,
                index,
            } = o
            {
                if *s == stmt && b == binding {
                    out.insert(*index);
                }
            }
        };
        for (var, value) in &self.assignment {
            scan_var(var, &mut visit);
            scan_value(value, &mut visit);
        }
        out
    }

    /// All generated objects occurring in the world, grouped by statement
    /// and binding.
    pub fn referenced_objects(&self) -> BTreeMap<(StmtId, Vec<Value>), BTreeSet<u32>> {
        let mut out: BTreeMap<(StmtId, Vec<Value>), BTreeSet<u32>> = BTreeMap::new();
        let mut visit = |o: &ObjectId| {
            if let ObjectId::Generated {
                stmt,
                binding,
                index,
            } = o
            {
                out.entry((*stmt, binding.clone())).or_default().insert(*index);
            }
        };
        for (var, value) in &self.assignment {
            scan_var(var, &mut visit);
            scan_value(value, &mut visit);
        }
        out
    }

    /// Generated objects that would remain referenced if `exclude` moved
    /// somewhere else: the excluded variable's entry is skipped, and so are
    /// the derived group variables of set-evidence types (they only mirror
    /// label references).
    pub fn referenced_excluding(
        &self,
        model: &Model,
        exclude: &GroundVar,
    ) -> BTreeMap<(StmtId, Vec<Value>), BTreeSet<u32>> {
        let mut out: BTreeMap<(StmtId, Vec<Value>), BTreeSet<u32>> = BTreeMap::new();
        let mut visit = |o: &ObjectId| {
            if let ObjectId::Generated {
                stmt,
                binding,
                index,
            } = o
            {
                out.entry((*stmt, binding.clone())).or_default().insert(*index);
            }
        };
        for (var, value) in &self.assignment {
            if var == exclude {
                continue;
            }
            if let GroundVar::Num { stmt, .. } = var {
                if model.ty(model.stmt(*stmt).ty).set_evidence.is_some() {
                    continue;
                }
            }
            scan_var(var, &mut visit);
            scan_value(value, &mut visit);
        }
        out
    }

    /// Group of a labeled symbol per its origin-variable values: the number
    /// statement whose origin set matches the non-null values, plus the
    /// binding tuple.
    pub fn symbol_group(&self, model: &Model, ty: TypeId, sym: SymbolId) -> GroupResolution {
        let obj = Value::Obj(ObjectId::Evidence { ty, sym });
        let mut bound: BTreeMap<crate::value::FuncId, Value> = BTreeMap::new();
        for sid in &model.ty(ty).stmts {
            for f in &model.stmt(*sid).origins {
                if !bound.contains_key(f) {
                    let var = GroundVar::app(*f, vec![obj.clone()]);
                    match self.assignment.get(&var) {
                        Some(v) => {
                            bound.insert(*f, v.clone());
                        }
                        None => return GroupResolution::Unassigned,
                    }
                }
            }
        }
        let nonnull: BTreeSet<crate::value::FuncId> = bound
            .iter()
            .filter(|(_, v)| !v.is_null())
            .map(|(f, _)| *f)
            .collect();
        for sid in &model.ty(ty).stmts {
            let origins: BTreeSet<crate::value::FuncId> =
                model.stmt(*sid).origins.iter().copied().collect();
            if origins == nonnull {
                let binding: Vec<Value> = model
                    .stmt(*sid)
                    .origins
                    .iter()
                    .map(|f| bound[f].clone())
                    .collect();
                return GroupResolution::Group(*sid, binding);
            }
        }
        GroupResolution::NoMatch
    }

    /// Recompute the derived number variables of set-evidence types from
    /// the current labeling: static instances stay explicit (possibly
    /// zero), object-bound groups are explicit exactly when nonempty.
    /// Symbols with an incomplete labeling simply do not count yet.
    pub fn sync_groups(&mut self, model: &Model) {
        for se in &model.set_evidence {
            let mut counts: BTreeMap<(StmtId, Vec<Value>), i64> = BTreeMap::new();
            for sid in &model.ty(se.ty).stmts {
                if let Some(instances) = model.static_instances(*sid) {
                    for b in instances {
                        counts.insert((*sid, b), 0);
                    }
                }
            }
            for sym in &se.symbols {
                if let GroupResolution::Group(stmt, binding) =
                    self.symbol_group(model, se.ty, *sym)
                {
                    *counts.entry((stmt, binding)).or_insert(0) += 1;
                }
            }
            // retire object-bound group variables that emptied out
            let stale: Vec<GroundVar> = self
                .assignment
                .keys()
                .filter(|v| match v {
                    GroundVar::Num { stmt, binding } => {
                        model.stmt(*stmt).ty == se.ty
                            && !counts.contains_key(&(*stmt, binding.clone()))
                    }
                    _ => false,
                })
                .cloned()
                .collect();
            for v in stale {
                self.unassign(model, &v);
            }
            for ((stmt, binding), n) in counts {
                let var = GroundVar::num(stmt, binding);
                if self.assignment.get(&var) != Some(&Value::Int(n)) {
                    self.set_value(model, var, Value::Int(n));
                }
            }
        }
    }

    /// Canonical renaming of generated objects: within each binding group,
    /// content-carrying objects are ordered by their smallest stable
    /// referencer and packed into indices `1..=k`. Returns the applied
    /// rename map (empty when already canonical).
    pub fn canonicalize(&mut self, model: &Model) -> BTreeMap<ObjectId, ObjectId> {
        let groups = self.referenced_objects();
        if groups.is_empty() {
            return BTreeMap::new();
        }
        // stable referencers: application variables whose own arguments
        // contain no generated objects
        let mut anchor: BTreeMap<ObjectId, GroundVar> = BTreeMap::new();
        for (var, value) in &self.assignment {
            let stable = match var {
                GroundVar::App { args, .. } => args.iter().all(|a| {
                    let mut has_gen = false;
                    scan_value(a, &mut |o| {
                        if o.is_generated() {
                            has_gen = true;
                        }
                    });
                    !has_gen
                }),
                GroundVar::Num { .. } => false,
            };
            if !stable {
                continue;
            }
            if let Value::Obj(o) = value {
                if o.is_generated() {
                    let e = anchor.entry(o.clone());
                    e.and_modify(|cur| {
                        if var < cur {
                            *cur = var.clone();
                        }
                    })
                    .or_insert_with(|| var.clone());
                }
            }
        }
        let mut rename: BTreeMap<ObjectId, ObjectId> = BTreeMap::new();
        for ((stmt, binding), indices) in &groups {
            let mut objs: Vec<(Option<&GroundVar>, u32)> = indices
                .iter()
                .map(|i| {
                    let o = ObjectId::Generated {
                        stmt: *stmt,
                        binding: binding.clone(),
                        index: *i,
                    };
                    (anchor.get(&o), *i)
                })
                .collect();
            objs.sort_by(|a, b| match (&a.0, &b.0) {
                (Some(x), Some(y)) => x.cmp(y).then(a.1.cmp(&b.1)),
                (Some(_), None) => std::cmp::Ordering::Less,
                (None, Some(_)) => std::cmp::Ordering::Greater,
                (None, None) => a.1.cmp(&b.1),
            });
            for (pos, (_, old_index)) in objs.iter().enumerate() {
                let new_index = pos as u32 + 1;
                if *old_index != new_index {
                    rename.insert(
                        ObjectId::Generated {
                            stmt: *stmt,
                            binding: binding.clone(),
                            index: *old_index,
                        },
                        ObjectId::Generated {
                            stmt: *stmt,
                            binding: binding.clone(),
                            index: new_index,
                        },
                    );
                }
            }
        }
        if rename.is_empty() {
            return BTreeMap::new();
        }
        let old = std::mem::take(&mut self.assignment);
        for (var, value) in old {
            let var = rename_var(&var, &rename);
            let value = rename_value(&value, &rename);
            self.assignment.insert(var, value);
        }
        self.retrace_all(model);
        rename
    }

    /// Rename one generated object everywhere (variable keys, values, and
    /// number-variable bindings). Traces are rebuilt.
    pub fn rename_object(&mut self, model: &Model, from: &ObjectId, to: &ObjectId) {
        let mut rename = BTreeMap::new();
        rename.insert(from.clone(), to.clone());
        let old = std::mem::take(&mut self.assignment);
        for (var, value) in old {
            let var = rename_var(&var, &rename);
            let value = rename_value(&value, &rename);
            self.assignment.insert(var, value);
        }
        self.retrace_all(model);
    }

    /// Structural refresh after a move: groups, canonical indices and the
    /// trace cache. Alive-object sets inside traces depend on the registry
    /// of referenced objects rather than on variable values, so models
    /// with uniform-choice leaves rebuild the cache even without renames.
    /// Returns the canonical rename map.
    pub fn refresh_structure(&mut self, model: &Model) -> BTreeMap<ObjectId, ObjectId> {
        if model.typed.stmts.is_empty() {
            return BTreeMap::new();
        }
        self.sync_groups(model);
        let renames = self.canonicalize(model);
        // canonicalize already rebuilt the cache when it renamed anything
        if renames.is_empty() && model.has_uniform_choice {
            self.retrace_all(model);
        }
        renames
    }

    /// Debug dump: one line per variable, `var = value`, sorted
    /// lexicographically.
    pub fn dump(&self, model: &Model) -> String {
        let mut lines: Vec<String> = self
            .assignment
            .iter()
            .map(|(var, value)| {
                format!("{} = {}", model.display_var(var), model.display_value(value))
            })
            .collect();
        lines.sort();
        lines.join("\n")
    }

    /// Every assigned variable has a supported trace whose references are
    /// all assigned.
    pub fn is_self_supporting(&self) -> bool {
        self.assignment.keys().all(|v| match self.traces.get(v) {
            Some(t) => {
                t.supported() && t.refs.iter().all(|r| self.assignment.contains_key(r))
            }
            None => false,
        })
    }

    /// Cache coherence: cached traces equal recomputation, and the children
    /// index is exactly the inverse of the reference relation.
    pub fn check_coherence(&self, model: &Model) -> Result<(), String> {
        for var in self.assignment.keys() {
            let fresh = eval_tree(model, self, var);
            match self.traces.get(var) {
                Some(t) if *t == fresh => {}
                Some(_) => return Err(format!("stale trace for {}", model.display_var(var))),
                None => return Err(format!("missing trace for {}", model.display_var(var))),
            }
        }
        let mut inverse: BTreeMap<GroundVar, BTreeSet<GroundVar>> = BTreeMap::new();
        for (var, t) in &self.traces {
            for r in &t.refs {
                inverse.entry(r.clone()).or_default().insert(var.clone());
            }
        }
        if inverse != self.children {
            return Err("children index out of sync".to_string());
        }
        Ok(())
    }
}

fn scan_var(var: &GroundVar, visit: &mut impl FnMut(&ObjectId)) {
    match var {
        GroundVar::App { args, .. } => {
            for a in args {
                scan_value(a, visit);
            }
        }
        GroundVar::Num { binding, .. } => {
            for b in binding {
                scan_value(b, visit);
            }
        }
    }
}

fn scan_value(v: &Value, visit: &mut impl FnMut(&ObjectId)) {
    if let Value::Obj(o) = v {
        visit(o);
        if let ObjectId::Generated { binding, .. } = o {
            for b in binding {
                scan_value(b, visit);
            }
        }
    }
}

pub(crate) fn rename_value(v: &Value, rename: &BTreeMap<ObjectId, ObjectId>) -> Value {
    match v {
        Value::Obj(o) => Value::Obj(rename_object(o, rename)),
        other => other.clone(),
    }
}

fn rename_object(o: &ObjectId, rename: &BTreeMap<ObjectId, ObjectId>) -> ObjectId {
    // inner bindings first, then the object itself
    let inner = match o {
        ObjectId::Generated {
            stmt,
            binding,
            index,
        } => ObjectId::Generated {
            stmt: *stmt,
            binding: binding.iter().map(|b| rename_value(b, rename)).collect(),
            index: *index,
        },
        other => other.clone(),
    };
    rename.get(&inner).cloned().unwrap_or(inner)
}

pub(crate) fn rename_var(var: &GroundVar, rename: &BTreeMap<ObjectId, ObjectId>) -> GroundVar {
    match var {
        GroundVar::App { func, args } => GroundVar::App {
            func: *func,
            args: args.iter().map(|a| rename_value(a, rename)).collect(),
        },
        GroundVar::Num { stmt, binding } => GroundVar::Num {
            stmt: *stmt,
            binding: binding.iter().map(|b| rename_value(b, rename)).collect(),
        },
    }
}
