//! Name resolution, type checking and static analysis.
//!
//! Validation reports every problem it can find, not just the first, and is
//! deterministic: the same source text yields the same `TypedModel` or the
//! same diagnostic list.

use std::collections::{BTreeMap, BTreeSet};

use crate::dsl::ast::{self, Decl, DistCall, FixedParams, Obs, Program};
use crate::dsl::diag::{Diagnostic, Loc};
use crate::dsl::printer::expr_str;
use crate::model::*;
use crate::value::{FuncId, GroundVar, ObjectId, StmtId, SymbolId, TypeId, Value};

const PROB_SUM_TOL: f64 = 1e-12;

pub fn validate(ast: &Program) -> Result<TypedModel, Vec<Diagnostic>> {
    let mut c = Checker::default();
    c.collect_types(ast);
    c.collect_symbols(ast);
    c.collect_funcs(ast);
    c.collect_number_stmts(ast);
    c.collect_dependencies(ast);
    c.analyze_switching();
    c.collect_obs_queries(ast);
    if c.diags.is_empty() {
        Ok(TypedModel {
            types: c.types,
            funcs: c.funcs,
            stmts: c.stmts,
            set_evidence: c.set_evidence,
            evidence: c.evidence,
            queries: c.queries,
            symbols: c.symbols,
        })
    } else {
        c.diags.sort_by_key(|d| (d.loc.line, d.loc.col));
        Err(c.diags)
    }
}

#[derive(Default)]
struct Checker {
    diags: Vec<Diagnostic>,
    types: Vec<TypeInfo>,
    type_ids: BTreeMap<String, TypeId>,
    funcs: Vec<FuncInfo>,
    func_locs: Vec<Loc>,
    func_ids: BTreeMap<String, FuncId>,
    symbols: Vec<String>,
    // name -> (symbol, owner type, introduced by set evidence)
    sym_ids: BTreeMap<String, (SymbolId, TypeId, bool)>,
    stmts: Vec<StmtInfo>,
    set_evidence: Vec<SetEvidence>,
    evidence: Vec<(GroundVar, Value)>,
    queries: Vec<QueryInfo>,
}

/// Inferred expression type; `None` is the polymorphic type of `null`.
type Ty = Option<TypeRef>;

impl Checker {
    fn err(&mut self, loc: Loc, msg: impl Into<String>) {
        self.diags.push(Diagnostic::error(loc, msg));
    }

    fn resolve_type(&mut self, name: &str, loc: Loc) -> Option<TypeRef> {
        match name {
            "Boolean" => Some(TypeRef::Boolean),
            "Integer" => Some(TypeRef::Integer),
            "Real" => Some(TypeRef::Real),
            _ => match self.type_ids.get(name) {
                Some(id) => Some(TypeRef::Decl(*id)),
                None => {
                    self.err(loc, format!("undeclared name `{name}` (expected a type)"));
                    None
                }
            },
        }
    }

    fn collect_types(&mut self, ast: &Program) {
        for d in &ast.decls {
            if let Decl::Type { name, loc } = d {
                if matches!(name.as_str(), "Boolean" | "Integer" | "Real") {
                    self.err(*loc, format!("`{name}` is a built-in type"));
                    continue;
                }
                if self.type_ids.contains_key(name) {
                    self.err(*loc, format!("duplicate type `{name}`"));
                    continue;
                }
                let id = TypeId(self.types.len() as u32);
                self.type_ids.insert(name.clone(), id);
                self.types.push(TypeInfo {
                    name: name.clone(),
                    guaranteed: Vec::new(),
                    stmts: Vec::new(),
                    set_evidence: None,
                });
            }
        }
    }

    fn add_symbol(&mut self, name: &str, ty: TypeId, evidence: bool, loc: Loc) {
        if self.sym_ids.contains_key(name) {
            self.err(loc, format!("duplicate symbol `{name}`"));
            return;
        }
        let id = SymbolId(self.symbols.len() as u32);
        self.symbols.push(name.to_string());
        self.sym_ids.insert(name.to_string(), (id, ty, evidence));
        if !evidence {
            self.types[ty.0 as usize].guaranteed.push(id);
        }
    }

    fn collect_symbols(&mut self, ast: &Program) {
        for d in &ast.decls {
            match d {
                Decl::Guaranteed { ty, symbols, loc } => {
                    let Some(tid) = self.type_ids.get(ty).copied() else {
                        self.err(*loc, format!("undeclared name `{ty}` (expected a type)"));
                        continue;
                    };
                    for name in symbols.names() {
                        self.add_symbol(&name, tid, false, *loc);
                    }
                }
                Decl::Obs(Obs::SetEvidence {
                    ty, symbols, loc, ..
                }) => {
                    let Some(tid) = self.type_ids.get(ty).copied() else {
                        self.err(*loc, format!("undeclared name `{ty}` (expected a type)"));
                        continue;
                    };
                    if self.types[tid.0 as usize].set_evidence.is_some() {
                        self.err(*loc, format!("type `{ty}` already has set evidence"));
                        continue;
                    }
                    let idx = self.set_evidence.len();
                    self.types[tid.0 as usize].set_evidence = Some(idx);
                    let mut ids = Vec::new();
                    for name in symbols {
                        self.add_symbol(name, tid, true, *loc);
                        if let Some((sid, _, _)) = self.sym_ids.get(name) {
                            ids.push(*sid);
                        }
                    }
                    self.set_evidence.push(SetEvidence {
                        ty: tid,
                        symbols: ids,
                    });
                }
                _ => {}
            }
        }
    }

    fn collect_funcs(&mut self, ast: &Program) {
        for d in &ast.decls {
            let (ret, name, args, kind, loc) = match d {
                Decl::OriginFunc {
                    ret,
                    name,
                    arg,
                    loc,
                } => (ret, name, vec![arg.clone()], FuncKind::Origin, *loc),
                Decl::RandomFunc {
                    ret,
                    name,
                    args,
                    loc,
                } => (ret, name, args.clone(), FuncKind::Random, *loc),
                _ => continue,
            };
            if self.func_ids.contains_key(name) {
                self.err(loc, format!("duplicate function `{name}`"));
                continue;
            }
            if self.sym_ids.contains_key(name) {
                self.err(loc, format!("`{name}` is already a symbol"));
                continue;
            }
            let ret_ty = self.resolve_type(ret, loc);
            let arg_tys: Vec<Option<TypeRef>> = args
                .iter()
                .map(|a| self.resolve_type(a, loc))
                .collect();
            let Some(ret_ty) = ret_ty else { continue };
            if arg_tys.iter().any(|a| a.is_none()) {
                continue;
            }
            let arg_tys: Vec<TypeRef> = arg_tys.into_iter().flatten().collect();
            if kind == FuncKind::Origin {
                if !matches!(arg_tys[0], TypeRef::Decl(_)) {
                    self.err(loc, "origin function argument must be a declared type");
                    continue;
                }
                if matches!(ret_ty, TypeRef::Integer | TypeRef::Real) {
                    self.err(
                        loc,
                        "origin function return type must have a finite domain",
                    );
                    continue;
                }
            }
            let id = FuncId(self.funcs.len() as u32);
            self.func_ids.insert(name.clone(), id);
            self.func_locs.push(loc);
            self.funcs.push(FuncInfo {
                name: name.clone(),
                kind,
                ret: ret_ty,
                args: arg_tys,
                tree: None,
                may_switch: false,
                static_children: BTreeSet::new(),
            });
        }
    }

    fn collect_number_stmts(&mut self, ast: &Program) {
        for d in &ast.decls {
            let Decl::Number {
                ty,
                bindings,
                tree,
                loc,
            } = d
            else {
                continue;
            };
            let Some(tid) = self.type_ids.get(ty).copied() else {
                self.err(*loc, format!("undeclared name `{ty}` (expected a type)"));
                continue;
            };
            let mut origin_ids = Vec::new();
            let mut env = Vec::new();
            let mut ok = true;
            for (fname, var) in bindings {
                let Some(fid) = self.func_ids.get(fname).copied() else {
                    self.err(*loc, format!("undeclared name `{fname}` (expected an origin function)"));
                    ok = false;
                    continue;
                };
                let f = &self.funcs[fid.0 as usize];
                if f.kind != FuncKind::Origin {
                    self.err(*loc, format!("`{fname}` is not an origin function"));
                    ok = false;
                    continue;
                }
                if f.args != vec![TypeRef::Decl(tid)] {
                    self.err(
                        *loc,
                        format!("origin function `{fname}` does not generate type `{ty}`"),
                    );
                    ok = false;
                    continue;
                }
                if env.iter().any(|(n, _)| n == var) {
                    self.err(*loc, format!("duplicate binding variable `{var}`"));
                    ok = false;
                    continue;
                }
                env.push((var.clone(), f.ret));
                origin_ids.push(fid);
            }
            if !ok {
                continue;
            }
            // number statements of the same type must be distinguishable by
            // their origin sets
            let origin_set: BTreeSet<FuncId> = origin_ids.iter().copied().collect();
            let clash = self.types[tid.0 as usize].stmts.iter().any(|s| {
                let other: BTreeSet<FuncId> =
                    self.stmts[s.0 as usize].origins.iter().copied().collect();
                other == origin_set
            });
            if clash {
                self.err(
                    *loc,
                    format!("type `{ty}` already has a number statement with these origins"),
                );
            }
            let rt = self.convert_tree(tree, &env, &LeafCtx::NumberCount, *loc);
            if let Some(rt) = rt {
                if tree_has_missing_else(&rt) {
                    self.err(*loc, "number statement tree must define a count on every path");
                }
                let sid = StmtId(self.stmts.len() as u32);
                self.types[tid.0 as usize].stmts.push(sid);
                self.stmts.push(StmtInfo {
                    ty: tid,
                    origins: origin_ids,
                    tree: rt,
                });
            }
        }
        let mixed: Vec<String> = self
            .types
            .iter()
            .filter(|t| !t.stmts.is_empty() && !t.guaranteed.is_empty())
            .map(|t| t.name.clone())
            .collect();
        for name in mixed {
            self.diags.push(Diagnostic::error(
                Loc::default(),
                format!("type `{name}` has both guaranteed objects and number statements"),
            ));
        }
    }

    fn collect_dependencies(&mut self, ast: &Program) {
        for d in &ast.decls {
            let Decl::Dependency {
                func,
                params,
                tree,
                loc,
            } = d
            else {
                continue;
            };
            let Some(fid) = self.func_ids.get(func).copied() else {
                self.err(*loc, format!("undeclared name `{func}` (expected a random function)"));
                continue;
            };
            let (kind, args, ret, has_tree) = {
                let f = &self.funcs[fid.0 as usize];
                (f.kind, f.args.clone(), f.ret, f.tree.is_some())
            };
            if kind != FuncKind::Random {
                self.err(
                    *loc,
                    format!("`{func}` is an origin function; its value comes from the generating number statement"),
                );
                continue;
            }
            if has_tree {
                self.err(*loc, format!("duplicate dependency statement for `{func}`"));
                continue;
            }
            if params.len() != args.len() {
                self.err(
                    *loc,
                    format!(
                        "`{func}` takes {} argument(s), dependency statement names {}",
                        args.len(),
                        params.len()
                    ),
                );
                continue;
            }
            let env: Vec<(String, TypeRef)> = params
                .iter()
                .cloned()
                .zip(args.iter().copied())
                .collect();
            if let Some(rt) = self.convert_tree(tree, &env, &LeafCtx::Return(ret), *loc) {
                if references_self(&rt, fid, params.len()) {
                    self.err(
                        *loc,
                        format!("dependency tree of `{func}` references `{func}` on the same arguments"),
                    );
                } else {
                    self.funcs[fid.0 as usize].tree = Some(rt);
                }
            }
        }
        // every random function needs a tree
        for i in 0..self.funcs.len() {
            if self.funcs[i].kind == FuncKind::Random && self.funcs[i].tree.is_none() {
                let name = self.funcs[i].name.clone();
                let loc = self.func_locs[i];
                self.err(loc, format!("random function `{name}` has no dependency statement"));
            }
        }
    }

    fn analyze_switching(&mut self) {
        let mut guard_refs: BTreeSet<FuncId> = BTreeSet::new();
        let mut child_edges: Vec<(FuncId, FuncId)> = Vec::new(); // (parent fn, child fn)
        for (i, f) in self.funcs.iter().enumerate() {
            let owner = FuncId(i as u32);
            if let Some(tree) = &f.tree {
                tree.visit_exprs(&mut |e, in_guard| {
                    collect_func_refs(e, in_guard, &mut guard_refs, &mut |g| {
                        child_edges.push((g, owner))
                    });
                });
            }
        }
        for s in &self.stmts {
            s.tree.visit_exprs(&mut |e, in_guard| {
                collect_func_refs(e, in_guard, &mut guard_refs, &mut |_| {});
            });
        }
        for g in guard_refs {
            self.funcs[g.0 as usize].may_switch = true;
        }
        for (parent, child) in child_edges {
            self.funcs[parent.0 as usize].static_children.insert(child);
        }
    }

    fn collect_obs_queries(&mut self, ast: &Program) {
        let env: Vec<(String, TypeRef)> = Vec::new();
        let mut seen: BTreeSet<GroundVar> = BTreeSet::new();
        for d in &ast.decls {
            match d {
                Decl::Obs(Obs::Scalar { term, value, loc }) => {
                    let Some((rt, t)) = self.convert_expr(term, &env) else {
                        continue;
                    };
                    let RtExpr::Apply { func, args } = rt else {
                        self.err(*loc, "only random function applications can be observed");
                        continue;
                    };
                    if self.funcs[func.0 as usize].kind != FuncKind::Random {
                        self.err(*loc, "only random function applications can be observed");
                        continue;
                    }
                    let mut arg_vals = Vec::new();
                    let mut const_ok = true;
                    for a in &args {
                        match a {
                            RtExpr::Const(v) => arg_vals.push(v.clone()),
                            _ => const_ok = false,
                        }
                    }
                    if !const_ok {
                        self.err(*loc, "observed term arguments must be constants");
                        continue;
                    }
                    let Some((vexpr, vty)) = self.convert_expr(value, &env) else {
                        continue;
                    };
                    let RtExpr::Const(mut val) = vexpr else {
                        self.err(*loc, "observed value must be a literal or a symbol");
                        continue;
                    };
                    // integer literals observe real-valued functions too
                    if t == Some(TypeRef::Real) {
                        if let Value::Int(i) = val {
                            val = Value::Real(i as f64);
                        }
                    } else if !self.compatible(t, vty) {
                        self.err(*loc, "type mismatch between observed term and value");
                        continue;
                    }
                    let var = GroundVar::app(func, arg_vals);
                    if !seen.insert(var.clone()) {
                        self.err(*loc, "duplicate observation");
                        continue;
                    }
                    self.evidence.push((var, val));
                }
                Decl::Obs(Obs::SetEvidence { ty, loc, .. }) => {
                    if let Some(tid) = self.type_ids.get(ty) {
                        if self.types[tid.0 as usize].stmts.is_empty() {
                            self.err(
                                *loc,
                                format!("set evidence on type `{ty}` which has no number statement"),
                            );
                        }
                    }
                }
                Decl::Query { term, loc: _ } => {
                    if let Some((rt, _)) = self.convert_expr(term, &env) {
                        self.queries.push(QueryInfo {
                            text: expr_str(term),
                            term: rt,
                        });
                    }
                }
                _ => {}
            }
        }
    }

    fn compatible(&self, a: Ty, b: Ty) -> bool {
        match (a, b) {
            (None, _) | (_, None) => true,
            (Some(x), Some(y)) => {
                x == y
                    || matches!(
                        (x, y),
                        (TypeRef::Integer, TypeRef::Real) | (TypeRef::Real, TypeRef::Integer)
                    )
            }
        }
    }

    fn is_numeric(&self, t: Ty) -> bool {
        matches!(t, Some(TypeRef::Integer) | Some(TypeRef::Real))
    }

    fn convert_expr(&mut self, e: &ast::Expr, env: &[(String, TypeRef)]) -> Option<(RtExpr, Ty)> {
        match e {
            ast::Expr::IntLit(v, _) => Some((RtExpr::Const(Value::Int(*v)), Some(TypeRef::Integer))),
            ast::Expr::RealLit(v, _) => Some((RtExpr::Const(Value::Real(*v)), Some(TypeRef::Real))),
            ast::Expr::BoolLit(b, _) => {
                Some((RtExpr::Const(Value::Bool(*b)), Some(TypeRef::Boolean)))
            }
            ast::Expr::Null(_) => Some((RtExpr::Const(Value::Null), None)),
            ast::Expr::Ident(name, loc) => {
                if let Some(pos) = env.iter().position(|(n, _)| n == name) {
                    return Some((RtExpr::Param(pos), Some(env[pos].1)));
                }
                if let Some((sid, tid, evidence)) = self.sym_ids.get(name).copied() {
                    let obj = if evidence {
                        ObjectId::Evidence { ty: tid, sym: sid }
                    } else {
                        ObjectId::Guaranteed { ty: tid, sym: sid }
                    };
                    return Some((RtExpr::Const(Value::Obj(obj)), Some(TypeRef::Decl(tid))));
                }
                if let Some(fid) = self.func_ids.get(name).copied() {
                    let f = &self.funcs[fid.0 as usize];
                    if !f.args.is_empty() {
                        self.err(
                            *loc,
                            format!("`{name}` takes {} argument(s)", f.args.len()),
                        );
                        return None;
                    }
                    return Some((
                        RtExpr::Apply {
                            func: fid,
                            args: vec![],
                        },
                        Some(f.ret),
                    ));
                }
                self.err(*loc, format!("undeclared name `{name}`"));
                None
            }
            ast::Expr::Call { name, args, loc } => {
                let Some(fid) = self.func_ids.get(name).copied() else {
                    self.err(*loc, format!("undeclared name `{name}`"));
                    return None;
                };
                let (want, ret) = {
                    let f = &self.funcs[fid.0 as usize];
                    (f.args.clone(), f.ret)
                };
                if want.len() != args.len() {
                    self.err(
                        *loc,
                        format!(
                            "`{name}` takes {} argument(s), found {}",
                            want.len(),
                            args.len()
                        ),
                    );
                    return None;
                }
                let mut rt_args = Vec::new();
                for (a, w) in args.iter().zip(&want) {
                    let (rt, t) = self.convert_expr(a, env)?;
                    if !self.compatible(t, Some(*w)) {
                        self.err(
                            a.loc(),
                            format!(
                                "argument of `{name}` has the wrong type (expected {})",
                                self.type_display(*w)
                            ),
                        );
                        return None;
                    }
                    rt_args.push(rt);
                }
                Some((
                    RtExpr::Apply {
                        func: fid,
                        args: rt_args,
                    },
                    Some(ret),
                ))
            }
            ast::Expr::Binary { op, lhs, rhs, loc } => {
                let (l, lt) = self.convert_expr(lhs, env)?;
                let (r, rt) = self.convert_expr(rhs, env)?;
                let (rop, ty) = match op {
                    ast::BinOp::Add | ast::BinOp::Sub | ast::BinOp::Mul => {
                        if !self.is_numeric(lt) || !self.is_numeric(rt) {
                            self.err(*loc, "arithmetic requires numeric operands");
                            return None;
                        }
                        let out = if lt == Some(TypeRef::Real) || rt == Some(TypeRef::Real) {
                            TypeRef::Real
                        } else {
                            TypeRef::Integer
                        };
                        (
                            match op {
                                ast::BinOp::Add => BinOp::Add,
                                ast::BinOp::Sub => BinOp::Sub,
                                _ => BinOp::Mul,
                            },
                            Some(out),
                        )
                    }
                    ast::BinOp::Div => {
                        if !self.is_numeric(lt) || !self.is_numeric(rt) {
                            self.err(*loc, "arithmetic requires numeric operands");
                            return None;
                        }
                        (BinOp::Div, Some(TypeRef::Real))
                    }
                    ast::BinOp::Mod => {
                        if lt != Some(TypeRef::Integer) || rt != Some(TypeRef::Integer) {
                            self.err(*loc, "`mod` requires integer operands");
                            return None;
                        }
                        (BinOp::Mod, Some(TypeRef::Integer))
                    }
                    ast::BinOp::Eq | ast::BinOp::Ne => {
                        let ok = self.compatible(lt, rt)
                            || (self.is_numeric(lt) && self.is_numeric(rt));
                        if !ok {
                            self.err(*loc, "type mismatch in comparison");
                            return None;
                        }
                        (
                            if *op == ast::BinOp::Eq {
                                BinOp::Eq
                            } else {
                                BinOp::Ne
                            },
                            Some(TypeRef::Boolean),
                        )
                    }
                };
                Some((
                    RtExpr::Binary {
                        op: rop,
                        lhs: Box::new(l),
                        rhs: Box::new(r),
                    },
                    ty,
                ))
            }
        }
    }

    fn type_display(&self, t: TypeRef) -> String {
        match t {
            TypeRef::Boolean => "Boolean".into(),
            TypeRef::Integer => "Integer".into(),
            TypeRef::Real => "Real".into(),
            TypeRef::Decl(id) => self.types[id.0 as usize].name.clone(),
        }
    }

    fn convert_tree(
        &mut self,
        t: &ast::Tree,
        env: &[(String, TypeRef)],
        ctx: &LeafCtx,
        loc: Loc,
    ) -> Option<RtTree> {
        match t {
            ast::Tree::Node {
                guard,
                then_branch,
                else_branch,
                loc: nloc,
            } => {
                let g = match self.convert_expr(guard, env) {
                    Some((g, ty)) => {
                        if ty != Some(TypeRef::Boolean) {
                            self.err(*nloc, "guard expression must be Boolean");
                        }
                        g
                    }
                    None => RtExpr::Const(Value::Bool(false)),
                };
                let then_rt = self.convert_tree(then_branch, env, ctx, *nloc)?;
                let else_rt = match else_branch {
                    Some(e) => self.convert_tree(e, env, ctx, *nloc)?,
                    None => RtTree::Leaf(RtLeaf::NullLeaf),
                };
                Some(RtTree::Node {
                    guard: g,
                    then_branch: Box::new(then_rt),
                    else_branch: Box::new(else_rt),
                })
            }
            ast::Tree::Leaf(call) => self.convert_leaf(call, env, ctx, loc).map(RtTree::Leaf),
        }
    }

    fn numeric_params(
        &mut self,
        call: &DistCall,
        env: &[(String, TypeRef)],
        n: usize,
    ) -> Option<Vec<RtExpr>> {
        // either n fixed constants or n runtime numeric arguments
        match (&call.fixed, call.args.len()) {
            (Some(FixedParams::Vector(v)), 0) if v.len() == n => {
                Some(v.iter().map(|x| RtExpr::Const(Value::Real(*x))).collect())
            }
            (None, k) if k == n => {
                let mut out = Vec::new();
                for a in &call.args {
                    let (rt, ty) = self.convert_expr(a, env)?;
                    if !self.is_numeric(ty) {
                        self.err(a.loc(), format!("`{}` parameter must be numeric", call.name));
                        return None;
                    }
                    out.push(rt);
                }
                Some(out)
            }
            _ => {
                self.err(
                    call.loc,
                    format!(
                        "`{}` takes {n} parameter(s), fixed `[..]` or runtime `(..)`",
                        call.name
                    ),
                );
                None
            }
        }
    }

    fn finite_domain_of(&mut self, t: TypeRef, loc: Loc) -> Option<Vec<Value>> {
        match t {
            TypeRef::Boolean => Some(vec![Value::Bool(false), Value::Bool(true)]),
            TypeRef::Decl(tid) => {
                let info = &self.types[tid.0 as usize];
                if !info.stmts.is_empty() || info.guaranteed.is_empty() {
                    self.err(
                        loc,
                        format!("type `{}` has no static finite domain", info.name),
                    );
                    return None;
                }
                Some(
                    info.guaranteed
                        .iter()
                        .map(|s| Value::Obj(ObjectId::Guaranteed { ty: tid, sym: *s }))
                        .collect(),
                )
            }
            _ => {
                self.err(loc, "expected a type with a static finite domain");
                None
            }
        }
    }

    fn convert_leaf(
        &mut self,
        call: &DistCall,
        env: &[(String, TypeRef)],
        ctx: &LeafCtx,
        _loc: Loc,
    ) -> Option<RtLeaf> {
        let ret = match ctx {
            LeafCtx::Return(t) => Some(*t),
            LeafCtx::NumberCount => None,
        };
        match call.name.as_str() {
            "Categorical" => {
                let ret = match ret {
                    Some(t) => t,
                    None => {
                        self.err(call.loc, "number statements use `Poisson`");
                        return None;
                    }
                };
                let (weights, k) = match (&call.fixed, call.args.len()) {
                    (Some(FixedParams::Vector(v)), 0) => {
                        if v.iter().any(|x| *x < 0.0) {
                            self.err(call.loc, "Categorical weights must be nonnegative");
                            return None;
                        }
                        let sum: f64 = v.iter().sum();
                        if (sum - 1.0).abs() > PROB_SUM_TOL {
                            self.err(
                                call.loc,
                                format!("Categorical weights must sum to 1 (got {sum})"),
                            );
                            return None;
                        }
                        (
                            v.iter().map(|x| RtExpr::Const(Value::Real(*x))).collect::<Vec<_>>(),
                            v.len(),
                        )
                    }
                    (None, k) if k > 0 => {
                        let mut out = Vec::new();
                        for a in &call.args {
                            let (rt, ty) = self.convert_expr(a, env)?;
                            if !self.is_numeric(ty) {
                                self.err(a.loc(), "Categorical weights must be numeric");
                                return None;
                            }
                            out.push(rt);
                        }
                        (out, k)
                    }
                    _ => {
                        self.err(call.loc, "Categorical takes a weight vector");
                        return None;
                    }
                };
                let domain = match ret {
                    TypeRef::Integer => (0..k as i64).map(Value::Int).collect(),
                    other => {
                        let dom = self.finite_domain_of(other, call.loc)?;
                        if dom.len() != k {
                            self.err(
                                call.loc,
                                format!(
                                    "Categorical has {k} weights but the return domain has {} values",
                                    dom.len()
                                ),
                            );
                            return None;
                        }
                        dom
                    }
                };
                Some(RtLeaf::Categorical { weights, domain })
            }
            "Bernoulli" => {
                let ret = match ret {
                    Some(t) => t,
                    None => {
                        self.err(call.loc, "number statements use `Poisson`");
                        return None;
                    }
                };
                let int_valued = match ret {
                    TypeRef::Boolean => false,
                    TypeRef::Integer => true,
                    _ => {
                        self.err(call.loc, "Bernoulli requires a Boolean or Integer function");
                        return None;
                    }
                };
                let p = self.numeric_params(call, env, 1)?.remove(0);
                if let RtExpr::Const(Value::Real(v)) = &p {
                    if !(0.0..=1.0).contains(v) {
                        self.err(call.loc, "Bernoulli parameter must lie in [0, 1]");
                        return None;
                    }
                }
                Some(RtLeaf::Bernoulli { p, int_valued })
            }
            "Poisson" => {
                if let LeafCtx::Return(t) = ctx {
                    if *t != TypeRef::Integer {
                        self.err(call.loc, "Poisson requires an Integer function");
                        return None;
                    }
                }
                let rate = self.numeric_params(call, env, 1)?.remove(0);
                if let RtExpr::Const(Value::Real(v)) = &rate {
                    if *v <= 0.0 {
                        self.err(call.loc, "Poisson rate must be positive");
                        return None;
                    }
                }
                Some(RtLeaf::Poisson { rate })
            }
            "TabularCPD" => {
                let ret = match ret {
                    Some(t) => t,
                    None => {
                        self.err(call.loc, "number statements use `Poisson`");
                        return None;
                    }
                };
                let rows = match &call.fixed {
                    Some(FixedParams::Matrix(rows)) => rows.clone(),
                    Some(FixedParams::Vector(v)) => vec![v.clone()],
                    None => {
                        self.err(call.loc, "TabularCPD requires a fixed probability table");
                        return None;
                    }
                };
                let domain = self.finite_domain_of(ret, call.loc)?;
                let mut args = Vec::new();
                let mut arg_domains = Vec::new();
                for a in &call.args {
                    let (rt, ty) = self.convert_expr(a, env)?;
                    let Some(t) = ty else {
                        self.err(a.loc(), "TabularCPD index argument cannot be null");
                        return None;
                    };
                    let dom = self.finite_domain_of(t, a.loc())?;
                    args.push(rt);
                    arg_domains.push(dom);
                }
                let expect_rows: usize = arg_domains.iter().map(|d| d.len()).product();
                if rows.len() != expect_rows {
                    self.err(
                        call.loc,
                        format!(
                            "TabularCPD has {} row(s) but the index arguments produce {expect_rows}",
                            rows.len()
                        ),
                    );
                    return None;
                }
                for row in &rows {
                    if row.len() != domain.len() {
                        self.err(
                            call.loc,
                            format!(
                                "TabularCPD row length {} does not match the return domain size {}",
                                row.len(),
                                domain.len()
                            ),
                        );
                        return None;
                    }
                    if row.iter().any(|x| *x < 0.0) {
                        self.err(call.loc, "TabularCPD rows must be nonnegative");
                        return None;
                    }
                    let sum: f64 = row.iter().sum();
                    if (sum - 1.0).abs() > PROB_SUM_TOL {
                        self.err(
                            call.loc,
                            format!("TabularCPD rows must sum to 1 (got {sum})"),
                        );
                        return None;
                    }
                }
                Some(RtLeaf::Tabular {
                    rows,
                    args,
                    arg_domains,
                    domain,
                })
            }
            "UniformChoice" => {
                let Some((ty_name, _)) = &call.set_arg else {
                    self.err(call.loc, "UniformChoice takes a set argument like `({Ball b})`");
                    return None;
                };
                let Some(tid) = self.type_ids.get(ty_name).copied() else {
                    self.err(
                        call.loc,
                        format!("undeclared name `{ty_name}` (expected a type)"),
                    );
                    return None;
                };
                if ret != Some(TypeRef::Decl(tid)) {
                    self.err(
                        call.loc,
                        format!("UniformChoice over `{ty_name}` requires a function returning `{ty_name}`"),
                    );
                    return None;
                }
                Some(RtLeaf::UniformChoice { ty: tid })
            }
            "UniformReal" => {
                if ret != Some(TypeRef::Real) {
                    self.err(call.loc, "UniformReal requires a Real function");
                    return None;
                }
                let Some(FixedParams::Vector(v)) = &call.fixed else {
                    self.err(call.loc, "UniformReal takes fixed bounds `[lo, hi]`");
                    return None;
                };
                if v.len() != 2 || v[0] >= v[1] {
                    self.err(call.loc, "UniformReal bounds must satisfy lo < hi");
                    return None;
                }
                Some(RtLeaf::UniformReal { lo: v[0], hi: v[1] })
            }
            "UnivarGaussian" => {
                if ret != Some(TypeRef::Real) {
                    self.err(call.loc, "UnivarGaussian requires a Real function");
                    return None;
                }
                let variance = match &call.fixed {
                    Some(FixedParams::Vector(v)) if v.len() == 1 && v[0] > 0.0 => v[0],
                    _ => {
                        self.err(
                            call.loc,
                            "UnivarGaussian takes a fixed positive variance `[v]`",
                        );
                        return None;
                    }
                };
                if call.args.len() != 1 {
                    self.err(call.loc, "UnivarGaussian takes one mean argument");
                    return None;
                }
                let (mean, ty) = self.convert_expr(&call.args[0], env)?;
                if !self.is_numeric(ty) {
                    self.err(call.loc, "UnivarGaussian mean must be numeric");
                    return None;
                }
                Some(RtLeaf::Gaussian { variance, mean })
            }
            other => {
                self.err(
                    call.loc,
                    format!(
                        "unknown distribution `{other}` (known: Categorical, Bernoulli, Poisson, \
                         TabularCPD, UniformChoice, UniformReal, UnivarGaussian)"
                    ),
                );
                None
            }
        }
    }
}

enum LeafCtx {
    Return(TypeRef),
    NumberCount,
}

fn tree_has_missing_else(t: &RtTree) -> bool {
    match t {
        RtTree::Leaf(RtLeaf::NullLeaf) => true,
        RtTree::Leaf(_) => false,
        RtTree::Node {
            then_branch,
            else_branch,
            ..
        } => tree_has_missing_else(then_branch) || tree_has_missing_else(else_branch),
    }
}

fn references_self(t: &RtTree, fid: FuncId, arity: usize) -> bool {
    let mut found = false;
    t.visit_exprs(&mut |e, _| {
        expr_walk(e, &mut |x| {
            if let RtExpr::Apply { func, args } = x {
                if *func == fid
                    && args.len() == arity
                    && args
                        .iter()
                        .enumerate()
                        .all(|(i, a)| matches!(a, RtExpr::Param(p) if *p == i))
                {
                    found = true;
                }
            }
        });
    });
    found
}

fn expr_walk<'a>(e: &'a RtExpr, f: &mut impl FnMut(&'a RtExpr)) {
    f(e);
    match e {
        RtExpr::Apply { args, .. } => {
            for a in args {
                expr_walk(a, f);
            }
        }
        RtExpr::Binary { lhs, rhs, .. } => {
            expr_walk(lhs, f);
            expr_walk(rhs, f);
        }
        _ => {}
    }
}

fn collect_func_refs(
    e: &RtExpr,
    in_guard: bool,
    guard_refs: &mut BTreeSet<FuncId>,
    on_ref: &mut impl FnMut(FuncId),
) {
    expr_walk(e, &mut |x| {
        if let RtExpr::Apply { func, .. } = x {
            if in_guard {
                guard_refs.insert(*func);
            }
            on_ref(*func);
        }
    });
}
