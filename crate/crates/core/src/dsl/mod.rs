//! The modeling-language front end: lexer, parser, validator, lowering.

pub mod ast;
pub mod check;
pub mod diag;
pub mod lexer;
pub mod parser;
pub mod printer;

mod lower;

#[cfg(test)]
pub(crate) mod tests;

pub use check::validate;
pub use diag::{Diagnostic, Loc, Severity};
pub use lower::lower;
pub use parser::parse;
pub use printer::print_program;

use crate::model::Model;

/// Parse, validate and lower a model in one step.
pub fn load_model(source: &str) -> Result<Model, Vec<Diagnostic>> {
    let ast = parse(source).map_err(|d| vec![d])?;
    let typed = validate(&ast)?;
    Ok(lower(typed))
}
