//! Precondition language: parser, static typechecker and total evaluator.

mod ast;
mod eval;
pub mod lexer;
mod parser;
mod typecheck;

pub use ast::{AttrPath, CmpOp, Expr, Namespace};
pub use eval::{evaluate, EvalContext, Evaluation};
pub use lexer::{ParseError, Position};
pub(crate) use parser::{expect, expect_ident, ident};
pub use parser::{parse_embedded, parse_expr};
pub use typecheck::{typecheck, Schema, TypeError, TypeErrorCode, TypedExpr, TypedNode};
