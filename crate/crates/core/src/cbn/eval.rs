//! Deterministic decision-tree evaluation with reference tracing.
//!
//! Guards are evaluated top-down and every expression left-to-right; the
//! trace records each ground variable in order of first reference. The
//! first reference to an unassigned variable aborts evaluation with
//! `Unsupported`. These rules pin down "first reference", which the edge
//! contingency notion and the core computation depend on.

use std::collections::BTreeSet;

use crate::dist::Distribution;
use crate::model::{BinOp, FuncKind, Model, RtExpr, RtLeaf, RtTree};
use crate::value::{GroundVar, ObjectId, StmtId, Value};

use super::world::PartialWorld;

/// The evaluation record of one variable's decision tree in one world.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalTrace {
    /// Ground variables in order of first reference, no duplicates.
    pub refs: Vec<GroundVar>,
    /// The subset referenced by internal (guard) nodes.
    pub guard_refs: BTreeSet<GroundVar>,
    pub result: TraceResult,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceResult {
    Dist(Distribution),
    Unsupported(GroundVar),
}

impl EvalTrace {
    pub fn supported(&self) -> bool {
        matches!(self.result, TraceResult::Dist(_))
    }

    pub fn dist(&self) -> Option<&Distribution> {
        match &self.result {
            TraceResult::Dist(d) => Some(d),
            TraceResult::Unsupported(_) => None,
        }
    }

    pub fn references(&self, v: &GroundVar) -> bool {
        self.refs.contains(v)
    }

    /// Position of the first reference to `v`, if any.
    pub fn ref_pos(&self, v: &GroundVar) -> Option<usize> {
        self.refs.iter().position(|r| r == v)
    }
}

pub(crate) struct Evaluator<'a> {
    pub model: &'a Model,
    pub world: &'a PartialWorld,
    env: Vec<Value>,
    refs: Vec<GroundVar>,
    seen: BTreeSet<GroundVar>,
    guard_refs: BTreeSet<GroundVar>,
    in_guard: bool,
    /// When set, origin variables of generated objects are read from the
    /// object identity instead of the assignment and are not recorded as
    /// references. Used for residual structural factors only.
    pub identity_origins: bool,
}

pub(crate) type EvalResult<T> = Result<T, GroundVar>;

impl<'a> Evaluator<'a> {
    pub fn new(model: &'a Model, world: &'a PartialWorld) -> Self {
        Evaluator {
            model,
            world,
            env: Vec::new(),
            refs: Vec::new(),
            seen: BTreeSet::new(),
            guard_refs: BTreeSet::new(),
            in_guard: false,
            identity_origins: false,
        }
    }

    fn touch(&mut self, var: GroundVar) -> EvalResult<Value> {
        if self.seen.insert(var.clone()) {
            self.refs.push(var.clone());
        }
        if self.in_guard {
            self.guard_refs.insert(var.clone());
        }
        match self.world.value(&var) {
            Some(v) => Ok(v.clone()),
            None => Err(var),
        }
    }

    pub fn eval_expr(&mut self, e: &RtExpr) -> EvalResult<Value> {
        match e {
            RtExpr::Const(v) => Ok(v.clone()),
            RtExpr::Param(i) => Ok(self.env[*i].clone()),
            RtExpr::Apply { func, args } => {
                let mut vals = Vec::with_capacity(args.len());
                for a in args {
                    vals.push(self.eval_expr(a)?);
                }
                // null propagates through function application
                if vals.iter().any(|v| v.is_null()) {
                    return Ok(Value::Null);
                }
                let info = self.model.func(*func);
                if info.kind == FuncKind::Origin && self.identity_origins {
                    if let Some(Value::Obj(obj)) = vals.first().map(|v| v.clone()) {
                        if let ObjectId::Generated { stmt, binding, .. } = &obj {
                            return Ok(origin_from_identity(self.model, *stmt, binding, *func));
                        }
                    }
                }
                self.touch(GroundVar::app(*func, vals))
            }
            RtExpr::Binary { op, lhs, rhs } => {
                let l = self.eval_expr(lhs)?;
                let r = self.eval_expr(rhs)?;
                Ok(apply_binop(*op, &l, &r))
            }
        }
    }

    fn eval_guard(&mut self, e: &RtExpr) -> EvalResult<bool> {
        let was = self.in_guard;
        self.in_guard = true;
        let v = self.eval_expr(e);
        self.in_guard = was;
        // null is not true; a null-valued guard takes the else branch
        Ok(matches!(v?, Value::Bool(true)))
    }

    fn eval_tree(&mut self, t: &RtTree) -> EvalResult<Distribution> {
        match t {
            RtTree::Node {
                guard,
                then_branch,
                else_branch,
            } => {
                if self.eval_guard(guard)? {
                    self.eval_tree(then_branch)
                } else {
                    self.eval_tree(else_branch)
                }
            }
            RtTree::Leaf(leaf) => self.eval_leaf(leaf),
        }
    }

    fn numeric(&mut self, e: &RtExpr, what: &str) -> EvalResult<f64> {
        let v = self.eval_expr(e)?;
        Ok(v.as_real()
            .unwrap_or_else(|| panic!("{what} evaluated to a non-numeric value")))
    }

    fn eval_leaf(&mut self, leaf: &RtLeaf) -> EvalResult<Distribution> {
        match leaf {
            RtLeaf::Categorical { weights, domain } => {
                let mut items = Vec::with_capacity(weights.len());
                for (w, v) in weights.iter().zip(domain) {
                    items.push((v.clone(), self.numeric(w, "Categorical weight")?));
                }
                Ok(Distribution::Categorical(items))
            }
            RtLeaf::Bernoulli { p, int_valued } => Ok(Distribution::Bernoulli {
                p: self.numeric(p, "Bernoulli parameter")?,
                int_valued: *int_valued,
            }),
            RtLeaf::Poisson { rate } => Ok(Distribution::Poisson {
                rate: self.numeric(rate, "Poisson rate")?,
            }),
            RtLeaf::Tabular {
                rows,
                args,
                arg_domains,
                domain,
            } => {
                let mut index = 0usize;
                for (a, dom) in args.iter().zip(arg_domains) {
                    let v = self.eval_expr(a)?;
                    let pos = match dom.iter().position(|d| *d == v) {
                        Some(p) => p,
                        // an index outside its domain (e.g. a pinned null)
                        // makes every value impossible rather than erroring:
                        // such worlds simply have probability zero
                        None => return Ok(Distribution::Categorical(Vec::new())),
                    };
                    index = index * dom.len() + pos;
                }
                Ok(Distribution::Categorical(
                    domain
                        .iter()
                        .cloned()
                        .zip(rows[index].iter().copied())
                        .collect(),
                ))
            }
            RtLeaf::UniformChoice { ty } => self.alive_objects(*ty),
            RtLeaf::UniformReal { lo, hi } => Ok(Distribution::UniformReal { lo: *lo, hi: *hi }),
            RtLeaf::Gaussian { variance, mean } => Ok(Distribution::Gaussian {
                mean: self.numeric(mean, "UnivarGaussian mean")?,
                variance: *variance,
            }),
            RtLeaf::NullLeaf => Ok(Distribution::PointMass(Value::Null)),
        }
    }

    /// Resolve the currently alive object set of a type, recording the
    /// number variables this depends on.
    pub(crate) fn alive_objects(&mut self, ty: crate::value::TypeId) -> EvalResult<Distribution> {
        let info = self.model.ty(ty);
        if let Some(se_idx) = info.set_evidence {
            // alive objects of a set-evidence type are exactly the labeled
            // symbols
            let se = &self.model.set_evidence[se_idx];
            let items: Vec<ObjectId> = se
                .symbols
                .iter()
                .map(|s| ObjectId::Evidence { ty, sym: *s })
                .collect();
            return Ok(Distribution::UniformChoice {
                n_alive: items.len() as u64,
                referenced: items,
                fresh: Vec::new(),
            });
        }
        if !info.guaranteed.is_empty() {
            let items: Vec<ObjectId> = info
                .guaranteed
                .iter()
                .map(|s| ObjectId::Guaranteed { ty, sym: *s })
                .collect();
            return Ok(Distribution::UniformChoice {
                n_alive: items.len() as u64,
                referenced: items,
                fresh: Vec::new(),
            });
        }
        let mut n_alive = 0u64;
        let mut referenced = Vec::new();
        let mut fresh = Vec::new();
        for sid in info.stmts.clone() {
            let instances = self
                .model
                .static_instances(sid)
                .expect("uniform choice over object-bound number statements is not supported");
            for binding in instances {
                let nv = GroundVar::num(sid, binding.clone());
                let count = match self.touch(nv)? {
                    Value::Int(n) if n >= 0 => n as u64,
                    other => panic!("number variable holds {other:?}"),
                };
                n_alive += count;
                let refd = self.world.referenced_indices(sid, &binding);
                for idx in &refd {
                    referenced.push(ObjectId::Generated {
                        stmt: sid,
                        binding: binding.clone(),
                        index: *idx,
                    });
                }
                let spares = count.saturating_sub(refd.len() as u64);
                if spares > 0 {
                    fresh.push((
                        ObjectId::Generated {
                            stmt: sid,
                            binding: binding.clone(),
                            index: refd.len() as u32 + 1,
                        },
                        spares,
                    ));
                }
            }
        }
        Ok(Distribution::UniformChoice {
            n_alive,
            referenced,
            fresh,
        })
    }

    fn finish(self, result: EvalResult<Distribution>) -> EvalTrace {
        EvalTrace {
            refs: self.refs,
            guard_refs: self.guard_refs,
            result: match result {
                Ok(d) => TraceResult::Dist(d),
                Err(v) => TraceResult::Unsupported(v),
            },
        }
    }
}

/// Binding value of `func` for an object generated by `stmt`, or null when
/// the statement does not bind it.
pub fn origin_from_identity(
    model: &Model,
    stmt: StmtId,
    binding: &[Value],
    func: crate::value::FuncId,
) -> Value {
    match model.binding_pos(stmt, func) {
        Some(pos) => binding[pos].clone(),
        None => Value::Null,
    }
}

fn apply_binop(op: BinOp, l: &Value, r: &Value) -> Value {
    match op {
        BinOp::Add | BinOp::Sub | BinOp::Mul => match (l, r) {
            (Value::Int(a), Value::Int(b)) => Value::Int(match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                _ => a * b,
            }),
            _ => {
                let (a, b) = numeric_pair(l, r);
                Value::Real(match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    _ => a * b,
                })
            }
        },
        BinOp::Div => {
            let (a, b) = numeric_pair(l, r);
            Value::Real(a / b)
        }
        BinOp::Mod => match (l, r) {
            (Value::Int(a), Value::Int(b)) => Value::Int(a.rem_euclid(*b)),
            _ => panic!("`mod` on non-integer values"),
        },
        BinOp::Eq => Value::Bool(values_equal(l, r)),
        BinOp::Ne => Value::Bool(!values_equal(l, r)),
    }
}

fn numeric_pair(l: &Value, r: &Value) -> (f64, f64) {
    match (l.as_real(), r.as_real()) {
        (Some(a), Some(b)) => (a, b),
        _ => panic!("arithmetic on non-numeric values"),
    }
}

/// Equality as used by model expressions: numbers compare numerically,
/// everything else structurally; null equals only null.
pub fn values_equal(l: &Value, r: &Value) -> bool {
    match (l.as_real(), r.as_real()) {
        (Some(a), Some(b)) => a == b,
        _ => l == r,
    }
}

/// Evaluate the decision tree of `var` in `world` and return the trace.
pub fn eval_tree(model: &Model, world: &PartialWorld, var: &GroundVar) -> EvalTrace {
    let mut ev = Evaluator::new(model, world);
    match var {
        GroundVar::App { func, args } => {
            let info = model.func(*func);
            match info.kind {
                FuncKind::Random => {
                    ev.env = args.clone();
                    let tree = info.tree.as_ref().expect("random function has a tree");
                    let r = ev.eval_tree(tree);
                    ev.finish(r)
                }
                FuncKind::Origin => {
                    // origin variables have no tree; they are deterministic
                    // given the world structure, so their conditional is a
                    // point mass at the current value
                    let result = match world.value(var) {
                        Some(v) => Ok(Distribution::PointMass(v.clone())),
                        None => match args.first().and_then(|v| v.as_object()) {
                            Some(ObjectId::Generated { stmt, binding, .. }) => Ok(
                                Distribution::PointMass(origin_from_identity(
                                    model, *stmt, binding, *func,
                                )),
                            ),
                            _ => Err(var.clone()),
                        },
                    };
                    ev.finish(result)
                }
            }
        }
        GroundVar::Num { stmt, binding } => {
            ev.env = binding.clone();
            let tree = model.stmt(*stmt).tree.clone();
            let r = ev.eval_tree(&tree);
            ev.finish(r)
        }
    }
}

/// Evaluate a closed term (query or similar) in a world, collecting the
/// referenced variables.
pub fn eval_term(
    model: &Model,
    world: &PartialWorld,
    term: &RtExpr,
) -> (Result<Value, GroundVar>, Vec<GroundVar>) {
    let mut ev = Evaluator::new(model, world);
    let r = ev.eval_expr(term);
    (r, ev.refs)
}

/// Residual evaluation used by the structural density: origin values are
/// taken from object identity so that no assignment entries are required.
pub fn eval_stmt_pmf(model: &Model, world: &PartialWorld, stmt: StmtId, binding: &[Value]) -> Distribution {
    let mut ev = Evaluator::new(model, world);
    ev.identity_origins = true;
    ev.env = binding.to_vec();
    let tree = model.stmt(stmt).tree.clone();
    match ev.eval_tree(&tree) {
        Ok(d) => d,
        Err(v) => panic!(
            "number-statement tree for a residual group referenced an unassigned variable {v:?}"
        ),
    }
}
