//! Validated, lowered runtime form of a parsed program.
//!
//! [`TypedModel`] is what validation produces: interned names, executable
//! dependency trees and static analysis results. [`lower`](crate::dsl::lower)
//! adds the runtime classifications (domain classes, child-index schema,
//! anchored structure for set evidence) and yields [`Model`].

use std::collections::BTreeSet;
use std::ops::Deref;

use crate::value::{FuncId, GroundVar, ObjectId, StmtId, SymbolId, TypeId, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TypeRef {
    Boolean,
    Integer,
    Real,
    Decl(TypeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FuncKind {
    Random,
    Origin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Eq,
    Ne,
}

/// Executable expression; parameters index into the enclosing statement's
/// environment (dependency parameters or origin-binding values).
#[derive(Debug, Clone, PartialEq)]
pub enum RtExpr {
    Const(Value),
    Param(usize),
    Apply { func: FuncId, args: Vec<RtExpr> },
    Binary {
        op: BinOp,
        lhs: Box<RtExpr>,
        rhs: Box<RtExpr>,
    },
}

/// Executable dependency tree. Both branches are always present; a missing
/// else clause was normalized to [`RtLeaf::NullLeaf`].
#[derive(Debug, Clone, PartialEq)]
pub enum RtTree {
    Node {
        guard: RtExpr,
        then_branch: Box<RtTree>,
        else_branch: Box<RtTree>,
    },
    Leaf(RtLeaf),
}

impl RtTree {
    pub fn leaves(&self) -> Vec<&RtLeaf> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a RtLeaf>) {
        match self {
            RtTree::Leaf(l) => out.push(l),
            RtTree::Node {
                then_branch,
                else_branch,
                ..
            } => {
                then_branch.collect_leaves(out);
                else_branch.collect_leaves(out);
            }
        }
    }

    /// Walk every expression in the tree (guards and leaf parameters).
    pub fn visit_exprs<'a>(&'a self, f: &mut impl FnMut(&'a RtExpr, bool)) {
        match self {
            RtTree::Node {
                guard,
                then_branch,
                else_branch,
            } => {
                f(guard, true);
                then_branch.visit_exprs(f);
                else_branch.visit_exprs(f);
            }
            RtTree::Leaf(l) => {
                for e in l.exprs() {
                    f(e, false);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RtLeaf {
    Categorical {
        weights: Vec<RtExpr>,
        domain: Vec<Value>,
    },
    Bernoulli {
        p: RtExpr,
        int_valued: bool,
    },
    Poisson {
        rate: RtExpr,
    },
    Tabular {
        rows: Vec<Vec<f64>>,
        args: Vec<RtExpr>,
        /// Per-argument finite domains used to turn values into row indices
        /// (row-major over the argument tuple).
        arg_domains: Vec<Vec<Value>>,
        domain: Vec<Value>,
    },
    UniformChoice {
        ty: TypeId,
    },
    UniformReal {
        lo: f64,
        hi: f64,
    },
    Gaussian {
        variance: f64,
        mean: RtExpr,
    },
    /// Missing else clause: null with probability one.
    NullLeaf,
}

impl RtLeaf {
    pub fn exprs(&self) -> Vec<&RtExpr> {
        match self {
            RtLeaf::Categorical { weights, .. } => weights.iter().collect(),
            RtLeaf::Bernoulli { p, .. } => vec![p],
            RtLeaf::Poisson { rate } => vec![rate],
            RtLeaf::Tabular { args, .. } => args.iter().collect(),
            RtLeaf::Gaussian { mean, .. } => vec![mean],
            RtLeaf::UniformChoice { .. } | RtLeaf::UniformReal { .. } | RtLeaf::NullLeaf => {
                Vec::new()
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct TypeInfo {
    pub name: String,
    pub guaranteed: Vec<SymbolId>,
    /// Number statements generating this type.
    pub stmts: Vec<StmtId>,
    /// Index into `set_evidence` if this type is constrained by set evidence.
    pub set_evidence: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct FuncInfo {
    pub name: String,
    pub kind: FuncKind,
    pub ret: TypeRef,
    pub args: Vec<TypeRef>,
    /// Dependency tree; `None` for origin functions.
    pub tree: Option<RtTree>,
    /// True when some dependency tree references this function inside a
    /// guard, i.e. its instances can be switching parents at runtime.
    pub may_switch: bool,
    /// Functions whose dependency trees reference this one.
    pub static_children: BTreeSet<FuncId>,
}

#[derive(Debug, Clone)]
pub struct StmtInfo {
    pub ty: TypeId,
    pub origins: Vec<FuncId>,
    pub tree: RtTree,
}

#[derive(Debug, Clone)]
pub struct SetEvidence {
    pub ty: TypeId,
    pub symbols: Vec<SymbolId>,
}

#[derive(Debug, Clone)]
pub struct QueryInfo {
    pub text: String,
    pub term: RtExpr,
}

/// Output of validation: resolved, type-checked model core.
#[derive(Debug, Clone)]
pub struct TypedModel {
    pub types: Vec<TypeInfo>,
    pub funcs: Vec<FuncInfo>,
    pub stmts: Vec<StmtInfo>,
    pub set_evidence: Vec<SetEvidence>,
    pub evidence: Vec<(GroundVar, Value)>,
    pub queries: Vec<QueryInfo>,
    /// Interned symbol names (guaranteed objects and evidence symbols).
    pub symbols: Vec<String>,
}

/// How a function's value domain can be enumerated.
#[derive(Debug, Clone, PartialEq)]
pub enum DomainClass {
    /// Statically known finite domain.
    Finite(Vec<Value>),
    /// Finite in every world, but the support depends on the world (object
    /// valued functions).
    FinitePerWorld,
    CountablyInfinite,
    Continuous,
}

impl DomainClass {
    pub fn describe(&self) -> &'static str {
        match self {
            DomainClass::Finite(_) => "finite",
            DomainClass::FinitePerWorld => "finite-per-world",
            DomainClass::CountablyInfinite => "countably-infinite",
            DomainClass::Continuous => "continuous",
        }
    }
}

/// One inverse relation the runtime must maintain: for each object of
/// `group_type`, the set of `indexed_type` objects whose `origin` is that
/// object (or value).
#[derive(Debug, Clone, PartialEq)]
pub struct ChildIndexEntry {
    pub origin: FuncId,
    pub group_type: TypeRef,
    pub indexed_type: TypeId,
}

/// Fully lowered model, ready for the runtime.
#[derive(Debug, Clone)]
pub struct Model {
    pub typed: TypedModel,
    /// Per function, parallel to `typed.funcs`.
    pub domain_class: Vec<DomainClass>,
    pub child_index: Vec<ChildIndexEntry>,
    /// Statically enumerable number-variable instances that must always be
    /// instantiated because set evidence constrains their generated type
    /// (directly or through an origin chain).
    pub anchored: Vec<(StmtId, Vec<Value>)>,
    /// Some dependency tree has a uniform-choice leaf, so cached traces
    /// depend on the registry of referenced objects.
    pub has_uniform_choice: bool,
}

impl Deref for Model {
    type Target = TypedModel;
    fn deref(&self) -> &TypedModel {
        &self.typed
    }
}

impl TypedModel {
    pub fn func(&self, id: FuncId) -> &FuncInfo {
        &self.funcs[id.0 as usize]
    }

    pub fn ty(&self, id: TypeId) -> &TypeInfo {
        &self.types[id.0 as usize]
    }

    pub fn stmt(&self, id: StmtId) -> &StmtInfo {
        &self.stmts[id.0 as usize]
    }

    pub fn symbol_name(&self, id: SymbolId) -> &str {
        &self.symbols[id.0 as usize]
    }

    pub fn func_id_by_name(&self, name: &str) -> Option<FuncId> {
        self.funcs
            .iter()
            .position(|f| f.name == name)
            .map(|i| FuncId(i as u32))
    }

    pub fn type_id_by_name(&self, name: &str) -> Option<TypeId> {
        self.types
            .iter()
            .position(|t| t.name == name)
            .map(|i| TypeId(i as u32))
    }

    pub fn type_name(&self, t: TypeRef) -> String {
        match t {
            TypeRef::Boolean => "Boolean".to_string(),
            TypeRef::Integer => "Integer".to_string(),
            TypeRef::Real => "Real".to_string(),
            TypeRef::Decl(id) => self.ty(id).name.clone(),
        }
    }

    /// Origin-binding position of `func` in `stmt`, if bound there.
    pub fn binding_pos(&self, stmt: StmtId, func: FuncId) -> Option<usize> {
        self.stmt(stmt).origins.iter().position(|f| *f == func)
    }

    /// Statically enumerable binding tuples of a number statement, or
    /// `None` when some origin ranges over generated objects.
    pub fn static_instances(&self, stmt: StmtId) -> Option<Vec<Vec<Value>>> {
        let info = self.stmt(stmt);
        let mut domains: Vec<Vec<Value>> = Vec::new();
        for f in &info.origins {
            let ret = self.func(*f).ret;
            match ret {
                TypeRef::Boolean => {
                    domains.push(vec![Value::Bool(false), Value::Bool(true)])
                }
                TypeRef::Decl(tid) => {
                    let t = self.ty(tid);
                    if !t.stmts.is_empty() {
                        return None;
                    }
                    domains.push(
                        t.guaranteed
                            .iter()
                            .map(|s| {
                                Value::Obj(ObjectId::Guaranteed { ty: tid, sym: *s })
                            })
                            .collect(),
                    );
                }
                _ => return None,
            }
        }
        let mut out = vec![Vec::new()];
        for dom in domains {
            let mut next = Vec::new();
            for prefix in &out {
                for v in &dom {
                    let mut row = prefix.clone();
                    row.push(v.clone());
                    next.push(row);
                }
            }
            out = next;
        }
        Some(out)
    }

    pub fn display_value(&self, v: &Value) -> String {
        match v {
            Value::Null => "null".to_string(),
            Value::Bool(b) => b.to_string(),
            Value::Int(i) => i.to_string(),
            Value::Real(r) => format!("{r}"),
            Value::Obj(o) => self.display_object(o),
        }
    }

    pub fn display_object(&self, o: &ObjectId) -> String {
        match o {
            ObjectId::Guaranteed { sym, .. } | ObjectId::Evidence { sym, .. } => {
                self.symbol_name(*sym).to_string()
            }
            ObjectId::Generated {
                stmt,
                binding,
                index,
            } => {
                let info = self.stmt(*stmt);
                let tyname = &self.ty(info.ty).name;
                if binding.is_empty() {
                    format!("{tyname}#{index}")
                } else {
                    let bs: Vec<String> = info
                        .origins
                        .iter()
                        .zip(binding)
                        .map(|(f, v)| {
                            format!("{}={}", self.func(*f).name, self.display_value(v))
                        })
                        .collect();
                    format!("{tyname}({})#{index}", bs.join(", "))
                }
            }
        }
    }

    pub fn display_var(&self, var: &GroundVar) -> String {
        match var {
            GroundVar::App { func, args } => {
                let f = self.func(*func);
                if args.is_empty() {
                    f.name.clone()
                } else {
                    let a: Vec<String> =
                        args.iter().map(|v| self.display_value(v)).collect();
                    format!("{}({})", f.name, a.join(", "))
                }
            }
            GroundVar::Num { stmt, binding } => {
                let info = self.stmt(*stmt);
                let tyname = &self.ty(info.ty).name;
                if binding.is_empty() {
                    format!("#{tyname}")
                } else {
                    let bs: Vec<String> = info
                        .origins
                        .iter()
                        .zip(binding)
                        .map(|(f, v)| {
                            format!("{}={}", self.func(*f).name, self.display_value(v))
                        })
                        .collect();
                    format!("#{tyname}({})", bs.join(", "))
                }
            }
        }
    }
}

impl Model {
    pub fn func_domain_class(&self, id: FuncId) -> &DomainClass {
        &self.domain_class[id.0 as usize]
    }

    /// True when the model generates objects (has number statements for
    /// types that are not fully pinned by set evidence).
    pub fn has_number_statements(&self) -> bool {
        !self.typed.stmts.is_empty()
    }

    /// Number-statement instances eligible for birth/death moves: statically
    /// enumerable instances of statements whose generated type is not
    /// constrained by set evidence.
    pub fn birth_death_instances(&self) -> Vec<(StmtId, Vec<Value>)> {
        let mut out = Vec::new();
        for (i, s) in self.typed.stmts.iter().enumerate() {
            let sid = StmtId(i as u32);
            if self.typed.ty(s.ty).set_evidence.is_some() {
                continue;
            }
            if let Some(instances) = self.typed.static_instances(sid) {
                for b in instances {
                    out.push((sid, b));
                }
            }
        }
        out
    }
}
