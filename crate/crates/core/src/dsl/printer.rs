//! Pretty-printer. `parse(print(parse(s)))` is structurally equal to
//! `parse(s)` up to source locations; a test asserts that on the whole
//! model corpus.

use crate::dsl::ast::*;
use std::fmt::Write;

pub fn print_program(p: &Program) -> String {
    let mut out = String::new();
    for d in &p.decls {
        print_decl(&mut out, d);
    }
    out
}

fn print_decl(out: &mut String, d: &Decl) {
    match d {
        Decl::Type { name, .. } => {
            let _ = writeln!(out, "type {name};");
        }
        Decl::Guaranteed { ty, symbols, .. } => match symbols {
            GuaranteedSymbols::List(names) => {
                let _ = writeln!(out, "guaranteed {ty} {};", names.join(", "));
            }
            GuaranteedSymbols::Indexed { prefix, count } => {
                let _ = writeln!(out, "guaranteed {ty} {prefix}[{count}];");
            }
        },
        Decl::OriginFunc { ret, name, arg, .. } => {
            let _ = writeln!(out, "origin {ret} {name}({arg});");
        }
        Decl::RandomFunc {
            ret, name, args, ..
        } => {
            if args.is_empty() {
                let _ = writeln!(out, "random {ret} {name};");
            } else {
                let _ = writeln!(out, "random {ret} {name}({});", args.join(", "));
            }
        }
        Decl::Number {
            ty, bindings, tree, ..
        } => {
            let head = if bindings.is_empty() {
                format!("#{ty}")
            } else {
                let bs: Vec<String> = bindings
                    .iter()
                    .map(|(f, v)| format!("{f} = {v}"))
                    .collect();
                format!("#{ty}({})", bs.join(", "))
            };
            match tree {
                Tree::Leaf(d) => {
                    let _ = writeln!(out, "{head} {};", dist_str(d));
                }
                node => {
                    let _ = writeln!(out, "{head}\n{};", tree_str(node, 1));
                }
            }
        }
        Decl::Dependency {
            func, params, tree, ..
        } => {
            let head = if params.is_empty() {
                func.clone()
            } else {
                format!("{func}({})", params.join(", "))
            };
            match tree {
                Tree::Leaf(d) => {
                    let _ = writeln!(out, "{head} {};", dist_str(d));
                }
                node => {
                    let _ = writeln!(out, "{head} {{\n{}\n}};", tree_str(node, 1));
                }
            }
        }
        Decl::Obs(Obs::Scalar { term, value, .. }) => {
            let _ = writeln!(out, "obs {} = {};", expr_str(term), expr_str(value));
        }
        Decl::Obs(Obs::SetEvidence {
            ty, var, symbols, ..
        }) => {
            let _ = writeln!(out, "obs {{{ty} {var}}} = {{{}}};", symbols.join(", "));
        }
        Decl::Query { term, .. } => {
            let _ = writeln!(out, "query {};", expr_str(term));
        }
    }
}

fn tree_str(t: &Tree, indent: usize) -> String {
    let pad = "  ".repeat(indent);
    match t {
        Tree::Leaf(d) => format!("{pad}{}", dist_str(d)),
        Tree::Node {
            guard,
            then_branch,
            else_branch,
            ..
        } => {
            let mut s = format!("{pad}if {} then\n{}", expr_str(guard), tree_str(then_branch, indent + 1));
            let mut cur = else_branch;
            while let Some(e) = cur {
                match e.as_ref() {
                    Tree::Node {
                        guard,
                        then_branch,
                        else_branch,
                        ..
                    } => {
                        let _ = write!(
                            s,
                            "\n{pad}elseif {} then\n{}",
                            expr_str(guard),
                            tree_str(then_branch, indent + 1)
                        );
                        cur = else_branch;
                    }
                    leaf => {
                        let _ = write!(s, "\n{pad}else\n{}", tree_str(leaf, indent + 1));
                        break;
                    }
                }
            }
            s
        }
    }
}

fn dist_str(d: &DistCall) -> String {
    let mut s = format!("~{}", d.name);
    match &d.fixed {
        Some(FixedParams::Vector(v)) => {
            let _ = write!(s, "[{}]", nums(v));
        }
        Some(FixedParams::Matrix(rows)) => {
            let inner: Vec<String> = rows.iter().map(|r| format!("[{}]", nums(r))).collect();
            let _ = write!(s, "[{}]", inner.join(", "));
        }
        None => {}
    }
    if let Some((ty, var)) = &d.set_arg {
        let _ = write!(s, "({{{ty} {var}}})");
    } else if !d.args.is_empty() {
        let args: Vec<String> = d.args.iter().map(expr_str).collect();
        let _ = write!(s, "({})", args.join(", "));
    }
    s
}

fn nums(v: &[f64]) -> String {
    v.iter()
        .map(|x| {
            // keep reals recognizable as reals on reparse
            if x.fract() == 0.0 && x.abs() < 1e15 {
                format!("{:.1}", x)
            } else {
                format!("{}", x)
            }
        })
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn expr_str(e: &Expr) -> String {
    match e {
        Expr::IntLit(v, _) => format!("{v}"),
        Expr::RealLit(v, _) => {
            if v.fract() == 0.0 && v.abs() < 1e15 {
                format!("{:.1}", v)
            } else {
                format!("{v}")
            }
        }
        Expr::BoolLit(b, _) => format!("{b}"),
        Expr::Null(_) => "null".to_string(),
        Expr::Ident(s, _) => s.clone(),
        Expr::Call { name, args, .. } => {
            let a: Vec<String> = args.iter().map(expr_str).collect();
            format!("{name}({})", a.join(", "))
        }
        Expr::Binary { op, lhs, rhs, .. } => {
            let l = wrap(lhs);
            let r = wrap(rhs);
            format!("{l} {} {r}", op.symbol())
        }
    }
}

fn wrap(e: &Expr) -> String {
    match e {
        Expr::Binary { .. } => format!("({})", expr_str(e)),
        _ => expr_str(e),
    }
}
