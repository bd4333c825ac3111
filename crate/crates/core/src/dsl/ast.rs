//! Surface syntax tree.
//!
//! Declarations are kept in source order and every node carries its
//! location. The tree is untyped; name resolution and type checking happen
//! in [`crate::dsl::check`].

use crate::dsl::diag::Loc;

#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub decls: Vec<Decl>,
}

impl Program {
    pub fn empty() -> Self {
        Program { decls: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decl {
    /// `type Aircraft;`
    Type { name: String, loc: Loc },
    /// `guaranteed Length Short, Long;` or `guaranteed Draw Draw[10];`
    Guaranteed {
        ty: String,
        symbols: GuaranteedSymbols,
        loc: Loc,
    },
    /// `origin AircraftType WingType(Aircraft);`
    OriginFunc {
        ret: String,
        name: String,
        arg: String,
        loc: Loc,
    },
    /// `random Boolean BladeFlash(Blip);` — the argument list may be empty.
    RandomFunc {
        ret: String,
        name: String,
        args: Vec<String>,
        loc: Loc,
    },
    /// `#Aircraft(WingType = w) <tree>;` or `#Blip ~ Poisson[2.0];`
    Number {
        ty: String,
        bindings: Vec<(String, String)>,
        tree: Tree,
        loc: Loc,
    },
    /// `RotorLength(a) { <tree> };` or `TrueWeight(b) ~ UniformReal[0.0, 100.0];`
    Dependency {
        func: String,
        params: Vec<String>,
        tree: Tree,
        loc: Loc,
    },
    Obs(Obs),
    /// `query WingType(Source(b1));`
    Query { term: Expr, loc: Loc },
}

#[derive(Debug, Clone, PartialEq)]
pub enum GuaranteedSymbols {
    List(Vec<String>),
    /// `Draw[10]` expands to `Draw1 .. Draw10`.
    Indexed { prefix: String, count: u32 },
}

impl GuaranteedSymbols {
    pub fn names(&self) -> Vec<String> {
        match self {
            GuaranteedSymbols::List(v) => v.clone(),
            GuaranteedSymbols::Indexed { prefix, count } => {
                (1..=*count).map(|i| format!("{prefix}{i}")).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Obs {
    /// `obs BladeFlash(b1) = true;`
    Scalar { term: Expr, value: Expr, loc: Loc },
    /// `obs {Blip b} = {b1, b2, b3};`
    SetEvidence {
        ty: String,
        var: String,
        symbols: Vec<String>,
        loc: Loc,
    },
}

/// A dependency tree: binary internal nodes with boolean guards, leaves
/// naming a distribution. A missing else branch stands for the value null
/// with probability one.
#[derive(Debug, Clone, PartialEq)]
pub enum Tree {
    Node {
        guard: Expr,
        then_branch: Box<Tree>,
        else_branch: Option<Box<Tree>>,
        loc: Loc,
    },
    Leaf(DistCall),
}

/// A distribution reference: fixed bracket parameters plus runtime
/// arguments, e.g. `TabularCPD[[.9,.1],[.6,.4]](RotorLength(Source(b)))`
/// or `UniformChoice({Ball b})`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistCall {
    pub name: String,
    pub fixed: Option<FixedParams>,
    pub args: Vec<Expr>,
    /// `{Ball b}` set argument of UniformChoice.
    pub set_arg: Option<(String, String)>,
    pub loc: Loc,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FixedParams {
    Vector(Vec<f64>),
    Matrix(Vec<Vec<f64>>),
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

impl BinOp {
    pub fn symbol(&self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Mod => "mod",
            BinOp::Eq => "=",
            BinOp::Ne => "!=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    IntLit(i64, Loc),
    RealLit(f64, Loc),
    BoolLit(bool, Loc),
    Null(Loc),
    /// A bound parameter, a guaranteed symbol, or a nullary function.
    Ident(String, Loc),
    Call {
        name: String,
        args: Vec<Expr>,
        loc: Loc,
    },
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
        loc: Loc,
    },
}

impl Expr {
    pub fn loc(&self) -> Loc {
        match self {
            Expr::IntLit(_, l)
            | Expr::RealLit(_, l)
            | Expr::BoolLit(_, l)
            | Expr::Null(l)
            | Expr::Ident(_, l) => *l,
            Expr::Call { loc, .. } | Expr::Binary { loc, .. } => *loc,
        }
    }
}
