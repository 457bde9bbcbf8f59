//! Recursive-descent parser. Precedence, loosest first: `||`, `&&`,
//! comparisons and `in set(..)` (non-associative), `!`.

use super::ast::{AttrPath, CmpOp, Expr, Namespace};
use super::lexer::{Lexer, ParseError, Token};
use crate::value::Scalar;

/// Parses a complete expression; trailing input is an error.
pub fn parse_expr(text: &str) -> Result<Expr, ParseError> {
    let mut lexer = Lexer::new(text);
    let expr = parse_embedded(&mut lexer)?;
    let next = lexer.next_token()?;
    if next.token != Token::Eof {
        return Err(ParseError::new(
            next.position,
            format!("unexpected {} after expression", next.token),
        ));
    }
    Ok(expr)
}

/// Parses one expression from a shared lexer, stopping at the first token
/// that cannot continue it. Used for `when:` clauses inside policy files.
pub fn parse_embedded(lexer: &mut Lexer<'_>) -> Result<Expr, ParseError> {
    parse_or(lexer)
}

fn parse_or(lexer: &mut Lexer<'_>) -> Result<Expr, ParseError> {
    let mut left = parse_and(lexer)?;
    while lexer.peek()?.token == Token::OrOr {
        lexer.next_token()?;
        let right = parse_and(lexer)?;
        left = Expr::Or(Box::new(left), Box::new(right));
    }
    Ok(left)
}

fn parse_and(lexer: &mut Lexer<'_>) -> Result<Expr, ParseError> {
    let mut left = parse_cmp(lexer)?;
    while lexer.peek()?.token == Token::AndAnd {
        lexer.next_token()?;
        let right = parse_cmp(lexer)?;
        left = Expr::And(Box::new(left), Box::new(right));
    }
    Ok(left)
}

fn cmp_op(token: &Token) -> Option<CmpOp> {
    Some(match token {
        Token::EqEq => CmpOp::Eq,
        Token::NotEq => CmpOp::Ne,
        Token::Lt => CmpOp::Lt,
        Token::Le => CmpOp::Le,
        Token::Gt => CmpOp::Gt,
        Token::Ge => CmpOp::Ge,
        _ => return None,
    })
}

fn parse_cmp(lexer: &mut Lexer<'_>) -> Result<Expr, ParseError> {
    let left = parse_unary(lexer)?;
    let next = lexer.peek()?;
    if let Some(op) = cmp_op(&next.token) {
        lexer.next_token()?;
        let right = parse_unary(lexer)?;
        return Ok(Expr::Cmp(op, Box::new(left), Box::new(right)));
    }
    if next.token == Token::Ident("in".into()) {
        lexer.next_token()?;
        expect_ident(lexer, "set")?;
        expect(lexer, Token::LParen)?;
        let name = ident(lexer)?;
        expect(lexer, Token::RParen)?;
        return Ok(Expr::InSet(Box::new(left), name));
    }
    Ok(left)
}

fn parse_unary(lexer: &mut Lexer<'_>) -> Result<Expr, ParseError> {
    if lexer.peek()?.token == Token::Bang {
        lexer.next_token()?;
        return Ok(Expr::Not(Box::new(parse_unary(lexer)?)));
    }
    parse_primary(lexer)
}

fn parse_primary(lexer: &mut Lexer<'_>) -> Result<Expr, ParseError> {
    let next = lexer.next_token()?;
    match next.token {
        Token::Int(i) => Ok(Expr::Lit(Scalar::Int(i))),
        Token::Dec(d) => Ok(Expr::Lit(Scalar::Dec(d))),
        Token::Str(s) => Ok(Expr::Lit(Scalar::Str(s))),
        Token::LParen => {
            let inner = parse_or(lexer)?;
            expect(lexer, Token::RParen)?;
            Ok(inner)
        }
        Token::Ident(word) => match word.as_str() {
            "true" => Ok(Expr::Lit(Scalar::Bool(true))),
            "false" => Ok(Expr::Lit(Scalar::Bool(false))),
            _ => {
                let Some(namespace) = Namespace::from_keyword(&word) else {
                    return Err(ParseError::new(
                        next.position,
                        format!("unknown namespace `{word}`; expected request, trajectory or env"),
                    ));
                };
                expect(lexer, Token::Dot)?;
                let name = ident(lexer)?;
                if lexer.peek()?.token == Token::Dot {
                    let pos = lexer.next_token()?.position;
                    return Err(ParseError::new(
                        pos,
                        "attribute paths have exactly two segments",
                    ));
                }
                Ok(Expr::Path(AttrPath::new(namespace, name)))
            }
        },
        other => Err(ParseError::new(
            next.position,
            format!("expected an operand, found {other}"),
        )),
    }
}

pub(crate) fn expect(lexer: &mut Lexer<'_>, want: Token) -> Result<(), ParseError> {
    let got = lexer.next_token()?;
    if got.token == want {
        Ok(())
    } else {
        Err(ParseError::new(
            got.position,
            format!("expected {want}, found {}", got.token),
        ))
    }
}

pub(crate) fn ident(lexer: &mut Lexer<'_>) -> Result<String, ParseError> {
    let got = lexer.next_token()?;
    match got.token {
        Token::Ident(name) => Ok(name),
        other => Err(ParseError::new(
            got.position,
            format!("expected a name, found {other}"),
        )),
    }
}

pub(crate) fn expect_ident(lexer: &mut Lexer<'_>, word: &str) -> Result<(), ParseError> {
    let got = lexer.next_token()?;
    match &got.token {
        Token::Ident(name) if name == word => Ok(()),
        other => Err(ParseError::new(
            got.position,
            format!("expected `{word}`, found {other}"),
        )),
    }
}
