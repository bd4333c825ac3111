//! Lowering: attach runtime classifications to a validated model.

use std::collections::BTreeSet;

use crate::model::*;
use crate::value::{StmtId, TypeId, Value};

pub fn lower(typed: TypedModel) -> Model {
    let domain_class = typed
        .funcs
        .iter()
        .map(|f| classify(&typed, f))
        .collect();
    let child_index = child_index_schema(&typed);
    let anchored = anchored_instances(&typed);
    let has_uniform_choice = typed
        .funcs
        .iter()
        .filter_map(|f| f.tree.as_ref())
        .chain(typed.stmts.iter().map(|s| &s.tree))
        .any(|t| {
            t.leaves()
                .iter()
                .any(|l| matches!(l, RtLeaf::UniformChoice { .. }))
        });
    Model {
        typed,
        domain_class,
        child_index,
        anchored,
        has_uniform_choice,
    }
}

fn classify(m: &TypedModel, f: &FuncInfo) -> DomainClass {
    if f.kind == FuncKind::Origin {
        // the binding value; null when some statement of the generated type
        // does not bind this function
        let generated = match f.args[0] {
            TypeRef::Decl(t) => t,
            _ => unreachable!("origin argument is always a declared type"),
        };
        let null_possible = m
            .ty(generated)
            .stmts
            .iter()
            .any(|s| !m.stmt(*s).origins.contains(&find_self(m, f)));
        return match f.ret {
            TypeRef::Boolean => {
                let mut dom = vec![Value::Bool(false), Value::Bool(true)];
                if null_possible {
                    dom.insert(0, Value::Null);
                }
                DomainClass::Finite(dom)
            }
            TypeRef::Decl(t) if m.ty(t).stmts.is_empty() => {
                let mut dom: Vec<Value> = m
                    .ty(t)
                    .guaranteed
                    .iter()
                    .map(|s| {
                        Value::Obj(crate::value::ObjectId::Guaranteed { ty: t, sym: *s })
                    })
                    .collect();
                if null_possible {
                    dom.insert(0, Value::Null);
                }
                DomainClass::Finite(dom)
            }
            _ => DomainClass::FinitePerWorld,
        };
    }
    let tree = f.tree.as_ref().expect("random function has a tree");
    let mut finite: BTreeSet<Value> = BTreeSet::new();
    let mut per_world = false;
    let mut countable = false;
    let mut continuous = false;
    for leaf in tree.leaves() {
        match leaf {
            RtLeaf::Categorical { domain, .. } | RtLeaf::Tabular { domain, .. } => {
                finite.extend(domain.iter().cloned());
            }
            RtLeaf::Bernoulli { int_valued, .. } => {
                if *int_valued {
                    finite.insert(Value::Int(0));
                    finite.insert(Value::Int(1));
                } else {
                    finite.insert(Value::Bool(false));
                    finite.insert(Value::Bool(true));
                }
            }
            RtLeaf::NullLeaf => {
                finite.insert(Value::Null);
            }
            RtLeaf::UniformChoice { .. } => per_world = true,
            RtLeaf::Poisson { .. } => countable = true,
            RtLeaf::UniformReal { .. } | RtLeaf::Gaussian { .. } => continuous = true,
        }
    }
    if continuous {
        DomainClass::Continuous
    } else if countable {
        DomainClass::CountablyInfinite
    } else if per_world {
        DomainClass::FinitePerWorld
    } else {
        DomainClass::Finite(finite.into_iter().collect())
    }
}

fn find_self(m: &TypedModel, f: &FuncInfo) -> crate::value::FuncId {
    m.func_id_by_name(&f.name).expect("function is interned")
}

/// One inverse relation per origin binding of each number statement.
fn child_index_schema(m: &TypedModel) -> Vec<ChildIndexEntry> {
    let mut out = Vec::new();
    for s in &m.stmts {
        for o in &s.origins {
            let entry = ChildIndexEntry {
                origin: *o,
                group_type: m.func(*o).ret,
                indexed_type: s.ty,
            };
            if !out.contains(&entry) {
                out.push(entry);
            }
        }
    }
    out
}

/// Statically enumerable number-variable instances that every world must
/// carry because set evidence pins the total count of their generated type
/// (or of a type generated downstream of them).
fn anchored_instances(m: &TypedModel) -> Vec<(StmtId, Vec<Value>)> {
    let mut anchored_types: BTreeSet<TypeId> = BTreeSet::new();
    let mut frontier: Vec<TypeId> = m.set_evidence.iter().map(|se| se.ty).collect();
    while let Some(t) = frontier.pop() {
        if !anchored_types.insert(t) {
            continue;
        }
        for sid in &m.ty(t).stmts {
            for o in &m.stmt(*sid).origins {
                if let TypeRef::Decl(bt) = m.func(*o).ret {
                    if !m.ty(bt).stmts.is_empty() {
                        frontier.push(bt);
                    }
                }
            }
        }
    }
    let mut out = Vec::new();
    for t in anchored_types {
        for sid in &m.ty(t).stmts {
            if let Some(instances) = m.static_instances(*sid) {
                for b in instances {
                    out.push((*sid, b));
                }
            }
        }
    }
    out.sort();
    out
}
