//! Recursive descent parser.
//!
//! The grammar is documented in `docs/grammar.md`. Parsing stops at the
//! first syntax error; semantic validation afterwards reports all problems
//! at once.

use crate::dsl::ast::*;
use crate::dsl::diag::{Diagnostic, Loc};
use crate::dsl::lexer::{lex, Tok, Token};

pub fn parse(source: &str) -> Result<Program, Diagnostic> {
    let tokens = lex(source)?;
    let mut p = Parser { tokens, pos: 0 };
    p.program()
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn loc(&self) -> Loc {
        self.tokens[self.pos].loc
    }

    fn bump(&mut self) -> Tok {
        let t = self.tokens[self.pos].tok.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: Tok) -> Result<(), Diagnostic> {
        if self.peek() == &t {
            self.bump();
            Ok(())
        } else {
            Err(Diagnostic::error(
                self.loc(),
                format!("expected {}, found {}", t.describe(), self.peek().describe()),
            ))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, Diagnostic> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            other => Err(Diagnostic::error(
                self.loc(),
                format!("expected {what}, found {}", other.describe()),
            )),
        }
    }

    fn program(&mut self) -> Result<Program, Diagnostic> {
        let mut decls = Vec::new();
        while self.peek() != &Tok::Eof {
            decls.push(self.decl()?);
        }
        Ok(Program { decls })
    }

    fn decl(&mut self) -> Result<Decl, Diagnostic> {
        let loc = self.loc();
        match self.peek().clone() {
            Tok::Type => {
                self.bump();
                let name = self.ident("type name")?;
                self.expect(Tok::Semi)?;
                Ok(Decl::Type { name, loc })
            }
            Tok::Guaranteed => {
                self.bump();
                let ty = self.ident("type name")?;
                let first = self.ident("symbol name")?;
                let symbols = if self.eat(&Tok::LBracket) {
                    let count = match self.bump() {
                        Tok::Int(n) if n > 0 => n as u32,
                        other => {
                            return Err(Diagnostic::error(
                                self.loc(),
                                format!("expected positive count, found {}", other.describe()),
                            ))
                        }
                    };
                    self.expect(Tok::RBracket)?;
                    GuaranteedSymbols::Indexed {
                        prefix: first,
                        count,
                    }
                } else {
                    let mut names = vec![first];
                    while self.eat(&Tok::Comma) {
                        names.push(self.ident("symbol name")?);
                    }
                    GuaranteedSymbols::List(names)
                };
                self.expect(Tok::Semi)?;
                Ok(Decl::Guaranteed { ty, symbols, loc })
            }
            Tok::Origin => {
                self.bump();
                let ret = self.ident("return type")?;
                let name = self.ident("function name")?;
                self.expect(Tok::LParen)?;
                let arg = self.ident("argument type")?;
                self.expect(Tok::RParen)?;
                self.expect(Tok::Semi)?;
                Ok(Decl::OriginFunc {
                    ret,
                    name,
                    arg,
                    loc,
                })
            }
            Tok::Random => {
                self.bump();
                let ret = self.ident("return type")?;
                let name = self.ident("function name")?;
                let mut args = Vec::new();
                if self.eat(&Tok::LParen) {
                    if self.peek() != &Tok::RParen {
                        args.push(self.ident("argument type")?);
                        while self.eat(&Tok::Comma) {
                            args.push(self.ident("argument type")?);
                        }
                    }
                    self.expect(Tok::RParen)?;
                }
                self.expect(Tok::Semi)?;
                Ok(Decl::RandomFunc {
                    ret,
                    name,
                    args,
                    loc,
                })
            }
            Tok::Hash => {
                self.bump();
                let ty = self.ident("generated type")?;
                let mut bindings = Vec::new();
                if self.eat(&Tok::LParen) {
                    loop {
                        let func = self.ident("origin function")?;
                        self.expect(Tok::Eq)?;
                        let var = self.ident("binding variable")?;
                        bindings.push((func, var));
                        if !self.eat(&Tok::Comma) {
                            break;
                        }
                    }
                    self.expect(Tok::RParen)?;
                }
                let tree = self.tree_body()?;
                self.expect(Tok::Semi)?;
                Ok(Decl::Number {
                    ty,
                    bindings,
                    tree,
                    loc,
                })
            }
            Tok::Obs => {
                self.bump();
                if self.eat(&Tok::LBrace) {
                    let ty = self.ident("type name")?;
                    let var = self.ident("set variable")?;
                    self.expect(Tok::RBrace)?;
                    self.expect(Tok::Eq)?;
                    self.expect(Tok::LBrace)?;
                    let mut symbols = vec![self.ident("symbol")?];
                    while self.eat(&Tok::Comma) {
                        symbols.push(self.ident("symbol")?);
                    }
                    self.expect(Tok::RBrace)?;
                    self.expect(Tok::Semi)?;
                    Ok(Decl::Obs(Obs::SetEvidence {
                        ty,
                        var,
                        symbols,
                        loc,
                    }))
                } else {
                    // the `=` here binds the observation, not equality
                    let term = self.additive()?;
                    self.expect(Tok::Eq)?;
                    let value = self.additive()?;
                    self.expect(Tok::Semi)?;
                    Ok(Decl::Obs(Obs::Scalar { term, value, loc }))
                }
            }
            Tok::Query => {
                self.bump();
                let term = self.expr()?;
                self.expect(Tok::Semi)?;
                Ok(Decl::Query { term, loc })
            }
            Tok::Ident(func) => {
                self.bump();
                let mut params = Vec::new();
                if self.eat(&Tok::LParen) {
                    if self.peek() != &Tok::RParen {
                        params.push(self.ident("parameter")?);
                        while self.eat(&Tok::Comma) {
                            params.push(self.ident("parameter")?);
                        }
                    }
                    self.expect(Tok::RParen)?;
                }
                let tree = self.tree_body()?;
                self.expect(Tok::Semi)?;
                Ok(Decl::Dependency {
                    func,
                    params,
                    tree,
                    loc,
                })
            }
            other => Err(Diagnostic::error(
                loc,
                format!(
                    "expected a declaration (one of `type`, `guaranteed`, `origin`, `random`, \
                     `obs`, `query`, `#`, or a function name), found {}",
                    other.describe()
                ),
            )),
        }
    }

    /// Either `{ <tree> }` or a bare tree.
    fn tree_body(&mut self) -> Result<Tree, Diagnostic> {
        if self.eat(&Tok::LBrace) {
            let t = self.tree()?;
            self.expect(Tok::RBrace)?;
            Ok(t)
        } else {
            self.tree()
        }
    }

    fn tree(&mut self) -> Result<Tree, Diagnostic> {
        let loc = self.loc();
        if self.eat(&Tok::If) {
            let guard = self.expr()?;
            self.expect(Tok::Then)?;
            let then_branch = Box::new(self.tree()?);
            let else_branch = if self.peek() == &Tok::Elseif {
                self.bump();
                // rewrite `elseif g then t ...` as `else if g then t ...`
                let nested_loc = self.loc();
                let guard2 = self.expr()?;
                self.expect(Tok::Then)?;
                let then2 = Box::new(self.tree()?);
                let else2 = self.elseif_tail()?;
                Some(Box::new(Tree::Node {
                    guard: guard2,
                    then_branch: then2,
                    else_branch: else2,
                    loc: nested_loc,
                }))
            } else if self.eat(&Tok::Else) {
                Some(Box::new(self.tree()?))
            } else {
                None
            };
            Ok(Tree::Node {
                guard,
                then_branch,
                else_branch,
                loc,
            })
        } else if self.peek() == &Tok::Tilde {
            Ok(Tree::Leaf(self.dist_call()?))
        } else {
            Err(Diagnostic::error(
                loc,
                format!(
                    "expected `if` or `~`, found {}",
                    self.peek().describe()
                ),
            ))
        }
    }

    fn elseif_tail(&mut self) -> Result<Option<Box<Tree>>, Diagnostic> {
        if self.peek() == &Tok::Elseif {
            self.bump();
            let loc = self.loc();
            let guard = self.expr()?;
            self.expect(Tok::Then)?;
            let then_branch = Box::new(self.tree()?);
            let else_branch = self.elseif_tail()?;
            Ok(Some(Box::new(Tree::Node {
                guard,
                then_branch,
                else_branch,
                loc,
            })))
        } else if self.eat(&Tok::Else) {
            Ok(Some(Box::new(self.tree()?)))
        } else {
            Ok(None)
        }
    }

    fn dist_call(&mut self) -> Result<DistCall, Diagnostic> {
        let loc = self.loc();
        self.expect(Tok::Tilde)?;
        let name = self.ident("distribution name")?;
        let fixed = if self.eat(&Tok::LBracket) {
            let params = if self.peek() == &Tok::LBracket {
                let mut rows = Vec::new();
                loop {
                    self.expect(Tok::LBracket)?;
                    rows.push(self.number_list()?);
                    self.expect(Tok::RBracket)?;
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
                FixedParams::Matrix(rows)
            } else {
                FixedParams::Vector(self.number_list()?)
            };
            self.expect(Tok::RBracket)?;
            Some(params)
        } else {
            None
        };
        let mut args = Vec::new();
        let mut set_arg = None;
        if self.eat(&Tok::LParen) {
            if self.eat(&Tok::LBrace) {
                let ty = self.ident("type name")?;
                let var = self.ident("set variable")?;
                self.expect(Tok::RBrace)?;
                set_arg = Some((ty, var));
            } else if self.peek() != &Tok::RParen {
                args.push(self.expr()?);
                while self.eat(&Tok::Comma) {
                    args.push(self.expr()?);
                }
            }
            self.expect(Tok::RParen)?;
        }
        Ok(DistCall {
            name,
            fixed,
            args,
            set_arg,
            loc,
        })
    }

    fn number_list(&mut self) -> Result<Vec<f64>, Diagnostic> {
        let mut out = vec![self.number()?];
        while self.eat(&Tok::Comma) {
            out.push(self.number()?);
        }
        Ok(out)
    }

    fn number(&mut self) -> Result<f64, Diagnostic> {
        let neg = self.eat(&Tok::Minus);
        let v = match self.bump() {
            Tok::Int(i) => i as f64,
            Tok::Real(r) => r,
            other => {
                return Err(Diagnostic::error(
                    self.loc(),
                    format!("expected a number, found {}", other.describe()),
                ))
            }
        };
        Ok(if neg { -v } else { v })
    }

    fn expr(&mut self) -> Result<Expr, Diagnostic> {
        let lhs = self.additive()?;
        let loc = self.loc();
        let op = match self.peek() {
            Tok::Eq => Some(BinOp::Eq),
            Tok::Ne => Some(BinOp::Ne),
            _ => None,
        };
        if let Some(op) = op {
            self.bump();
            let rhs = self.additive()?;
            Ok(Expr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
                loc,
            })
        } else {
            Ok(lhs)
        }
    }

    fn additive(&mut self) -> Result<Expr, Diagnostic> {
        let mut lhs = self.multiplicative()?;
        loop {
            let loc = self.loc();
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => break,
            };
            self.bump();
            let rhs = self.multiplicative()?;
            lhs = Expr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
                loc,
            };
        }
        Ok(lhs)
    }

    fn multiplicative(&mut self) -> Result<Expr, Diagnostic> {
        let mut lhs = self.primary()?;
        loop {
            let loc = self.loc();
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                Tok::Mod => BinOp::Mod,
                _ => break,
            };
            self.bump();
            let rhs = self.primary()?;
            lhs = Expr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
                loc,
            };
        }
        Ok(lhs)
    }

    fn primary(&mut self) -> Result<Expr, Diagnostic> {
        let loc = self.loc();
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(Expr::IntLit(v, loc))
            }
            Tok::Real(v) => {
                self.bump();
                Ok(Expr::RealLit(v, loc))
            }
            Tok::Minus => {
                self.bump();
                match self.bump() {
                    Tok::Int(v) => Ok(Expr::IntLit(-v, loc)),
                    Tok::Real(v) => Ok(Expr::RealLit(-v, loc)),
                    other => Err(Diagnostic::error(
                        loc,
                        format!("expected a numeric literal after `-`, found {}", other.describe()),
                    )),
                }
            }
            Tok::True => {
                self.bump();
                Ok(Expr::BoolLit(true, loc))
            }
            Tok::False => {
                self.bump();
                Ok(Expr::BoolLit(false, loc))
            }
            Tok::Null => {
                self.bump();
                Ok(Expr::Null(loc))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                if self.eat(&Tok::LParen) {
                    let mut args = Vec::new();
                    if self.peek() != &Tok::RParen {
                        args.push(self.expr()?);
                        while self.eat(&Tok::Comma) {
                            args.push(self.expr()?);
                        }
                    }
                    self.expect(Tok::RParen)?;
                    Ok(Expr::Call { name, args, loc })
                } else {
                    Ok(Expr::Ident(name, loc))
                }
            }
            other => Err(Diagnostic::error(
                loc,
                format!(
                    "expected an expression (literal, `null`, identifier or `(`), found {}",
                    other.describe()
                ),
            )),
        }
    }
}
