//! Hand-written scanner shared by the expression and policy parsers.
//!
//! The scanner is pull-based so the policy parser can switch into raw
//! selector mode (`agent:*`) between ordinary tokens.

use std::fmt;

use crate::decimal::Decimal;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Token {
    Ident(String),
    Str(String),
    Int(i64),
    Dec(Decimal),
    EqEq,
    NotEq,
    Lt,
    Le,
    Gt,
    Ge,
    AndAnd,
    OrOr,
    Bang,
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Comma,
    Colon,
    Assign,
    Dot,
    Eof,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Ident(s) => write!(f, "`{s}`"),
            Token::Str(s) => write!(f, "string {s:?}"),
            Token::Int(i) => write!(f, "number {i}"),
            Token::Dec(d) => write!(f, "number {}", d.to_short_string()),
            Token::EqEq => f.write_str("`==`"),
            Token::NotEq => f.write_str("`!=`"),
            Token::Lt => f.write_str("`<`"),
            Token::Le => f.write_str("`<=`"),
            Token::Gt => f.write_str("`>`"),
            Token::Ge => f.write_str("`>=`"),
            Token::AndAnd => f.write_str("`&&`"),
            Token::OrOr => f.write_str("`||`"),
            Token::Bang => f.write_str("`!`"),
            Token::LParen => f.write_str("`(`"),
            Token::RParen => f.write_str("`)`"),
            Token::LBracket => f.write_str("`[`"),
            Token::RBracket => f.write_str("`]`"),
            Token::LBrace => f.write_str("`{`"),
            Token::RBrace => f.write_str("`}`"),
            Token::Comma => f.write_str("`,`"),
            Token::Colon => f.write_str("`:`"),
            Token::Assign => f.write_str("`=`"),
            Token::Dot => f.write_str("`.`"),
            Token::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize)]
pub struct Position {
    pub line: u32,
    pub column: u32,
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, serde::Serialize)]
#[error("{position}: {message}")]
pub struct ParseError {
    pub position: Position,
    pub message: String,
}

impl ParseError {
    pub fn new(position: Position, message: impl Into<String>) -> Self {
        Self {
            position,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Spanned {
    pub token: Token,
    pub position: Position,
}

/// Characters allowed in a raw selector glob.
pub fn is_glob_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | ':' | '.' | '*' | '/' | '@')
}

#[derive(Debug, Clone)]
pub struct Lexer<'a> {
    src: &'a str,
    offset: usize,
    line: u32,
    column: u32,
}

impl<'a> Lexer<'a> {
    pub fn new(src: &'a str) -> Self {
        Self {
            src,
            offset: 0,
            line: 1,
            column: 1,
        }
    }

    pub fn position(&self) -> Position {
        Position {
            line: self.line,
            column: self.column,
        }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.offset..]
    }

    fn peek_char(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek_char()?;
        self.offset += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    /// Skips whitespace and `#` line comments.
    pub fn skip_trivia(&mut self) {
        while let Some(c) = self.peek_char() {
            if c.is_whitespace() {
                self.bump();
            } else if c == '#' {
                while let Some(c) = self.bump() {
                    if c == '\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    pub fn peek(&self) -> Result<Spanned, ParseError> {
        self.clone().next_token()
    }

    pub fn next_token(&mut self) -> Result<Spanned, ParseError> {
        self.skip_trivia();
        let position = self.position();
        let Some(c) = self.peek_char() else {
            return Ok(Spanned {
                token: Token::Eof,
                position,
            });
        };
        let err = |msg: String| ParseError::new(position, msg);
        let token = match c {
            '"' => Token::Str(self.string_literal()?),
            c if c.is_ascii_digit() => self.number(false)?,
            '-' => {
                self.bump();
                if self.peek_char().is_some_and(|c| c.is_ascii_digit()) {
                    self.number(true)?
                } else {
                    return Err(err("expected digit after `-`".into()));
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = self.offset;
                while self
                    .peek_char()
                    .is_some_and(|c| c.is_ascii_alphanumeric() || c == '_')
                {
                    self.bump();
                }
                Token::Ident(self.src[start..self.offset].to_string())
            }
            _ => {
                self.bump();
                let next = self.peek_char();
                let two = |tok: Token, lexer: &mut Self| {
                    lexer.bump();
                    tok
                };
                match (c, next) {
                    ('=', Some('=')) => two(Token::EqEq, self),
                    ('!', Some('=')) => two(Token::NotEq, self),
                    ('<', Some('=')) => two(Token::Le, self),
                    ('>', Some('=')) => two(Token::Ge, self),
                    ('&', Some('&')) => two(Token::AndAnd, self),
                    ('|', Some('|')) => two(Token::OrOr, self),
                    ('=', _) => Token::Assign,
                    ('!', _) => Token::Bang,
                    ('<', _) => Token::Lt,
                    ('>', _) => Token::Gt,
                    ('(', _) => Token::LParen,
                    (')', _) => Token::RParen,
                    ('[', _) => Token::LBracket,
                    (']', _) => Token::RBracket,
                    ('{', _) => Token::LBrace,
                    ('}', _) => Token::RBrace,
                    (',', _) => Token::Comma,
                    (':', _) => Token::Colon,
                    ('.', _) => Token::Dot,
                    (c, _) => return Err(err(format!("unexpected character `{c}`"))),
                }
            }
        };
        Ok(Spanned { token, position })
    }

    fn number(&mut self, negative: bool) -> Result<Token, ParseError> {
        let position = self.position();
        let start = self.offset;
        while self.peek_char().is_some_and(|c| c.is_ascii_digit()) {
            self.bump();
        }
        let mut is_decimal = false;
        if self.peek_char() == Some('.')
            && self.rest()[1..].starts_with(|c: char| c.is_ascii_digit())
        {
            is_decimal = true;
            self.bump();
            while self.peek_char().is_some_and(|c| c.is_ascii_digit()) {
                self.bump();
            }
        }
        let digits = &self.src[start..self.offset];
        let text = if negative {
            format!("-{digits}")
        } else {
            digits.to_string()
        };
        if is_decimal {
            text.parse::<Decimal>()
                .map(Token::Dec)
                .map_err(|e| ParseError::new(position, e.to_string()))
        } else {
            text.parse::<i64>()
                .map(Token::Int)
                .map_err(|_| ParseError::new(position, format!("integer `{text}` out of range")))
        }
    }

    fn string_literal(&mut self) -> Result<String, ParseError> {
        let position = self.position();
        self.bump();
        let mut out = String::new();
        loop {
            match self.bump() {
                None | Some('\n') => return Err(ParseError::new(position, "unterminated string")),
                Some('"') => return Ok(out),
                Some('\\') => match self.bump() {
                    Some('"') => out.push('"'),
                    Some('\\') => out.push('\\'),
                    Some('n') => out.push('\n'),
                    Some('t') => out.push('\t'),
                    Some('r') => out.push('\r'),
                    other => {
                        return Err(ParseError::new(
                            self.position(),
                            format!(
                                "invalid escape `\\{}`",
                                other.map(String::from).unwrap_or_default()
                            ),
                        ))
                    }
                },
                Some(c) => out.push(c),
            }
        }
    }

    /// Reads a raw selector glob (e.g. `agent:*`).
    pub fn glob(&mut self) -> Result<(String, Position), ParseError> {
        self.skip_trivia();
        let position = self.position();
        let start = self.offset;
        while self.peek_char().is_some_and(is_glob_char) {
            self.bump();
        }
        if start == self.offset {
            return Err(ParseError::new(position, "expected a selector pattern"));
        }
        Ok((self.src[start..self.offset].to_string(), position))
    }
}
