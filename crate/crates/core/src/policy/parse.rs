//! Policy file parser. The grammar is published in `docs/policy-grammar.md`.

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use super::model::*;
use crate::condition::lexer::{Lexer, Position, Token};
use crate::condition::{self, expect, expect_ident, ident, Expr, ParseError};
use crate::rubric::RubricAnswers;
use crate::value::{Scalar, ScalarType};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PolicyError {
    pub line: u32,
    pub column: u32,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tuple_id: Option<String>,
}

impl PolicyError {
    fn at(position: Position, message: impl Into<String>, tuple_id: Option<&str>) -> Self {
        Self {
            line: position.line,
            column: position.column,
            message: message.into(),
            tuple_id: tuple_id.map(str::to_string),
        }
    }
}

impl From<ParseError> for PolicyError {
    fn from(e: ParseError) -> Self {
        PolicyError::at(e.position, e.message, None)
    }
}

impl fmt::Display for PolicyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: ", self.line, self.column)?;
        if let Some(id) = &self.tuple_id {
            write!(f, "control \"{id}\": ")?;
        }
        f.write_str(&self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n"))]
pub struct ParseErrorList(pub Vec<PolicyError>);

/// Parses a policy document. Syntax errors stop parsing; semantic errors
/// (duplicate ids, unknown sets, malformed decisions) are collected.
pub fn parse_policy_file(text: &str) -> Result<PolicySet, ParseErrorList> {
    let mut parser = Parser {
        lexer: Lexer::new(text),
        errors: Vec::new(),
        set_refs: Vec::new(),
        track_positions: Vec::new(),
    };
    let mut ps = PolicySet::default();
    if let Err(e) = parser.document(&mut ps) {
        parser.errors.push(e);
        return Err(ParseErrorList(parser.errors));
    }
    for (position, tuple_id, name) in std::mem::take(&mut parser.set_refs) {
        if !ps.sets.contains_key(&name) {
            parser.errors.push(PolicyError::at(
                position,
                format!("unknown set `{name}`"),
                Some(&tuple_id),
            ));
        }
    }
    for (acc, &position) in ps.accumulators.iter().zip(&parser.track_positions) {
        if let (AccumulatorKind::Sum, Some(field)) = (acc.kind, &acc.field) {
            match ps.fields.get(field) {
                Some(ty) if ty.is_numeric() => {}
                Some(ty) => parser.errors.push(PolicyError::at(
                    position,
                    format!(
                        "track `{}` sums field `{field}` of type {ty}; sums need a numeric field",
                        acc.name
                    ),
                    None,
                )),
                None => parser.errors.push(PolicyError::at(
                    position,
                    format!("track `{}` sums undeclared field `{field}`", acc.name),
                    None,
                )),
            }
        }
    }
    if parser.errors.is_empty() {
        Ok(ps)
    } else {
        parser.errors.sort_by_key(|e| (e.line, e.column));
        Err(ParseErrorList(parser.errors))
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    errors: Vec<PolicyError>,
    set_refs: Vec<(Position, String, String)>,
    track_positions: Vec<Position>,
}

type PResult<T> = Result<T, PolicyError>;

impl Parser<'_> {
    fn next(&mut self) -> PResult<(Token, Position)> {
        let s = self.lexer.next_token()?;
        Ok((s.token, s.position))
    }

    fn document(&mut self, ps: &mut PolicySet) -> PResult<()> {
        let mut track_names = BTreeSet::new();
        let mut tuple_ids = BTreeSet::new();
        loop {
            let (token, position) = self.next()?;
            let word = match token {
                Token::Eof => return Ok(()),
                Token::Ident(word) => word,
                other => {
                    return Err(PolicyError::at(
                        position,
                        format!("expected a statement, found {other}"),
                        None,
                    ))
                }
            };
            match word.as_str() {
                "set" => {
                    let name = ident(&mut self.lexer)?;
                    expect(&mut self.lexer, Token::Assign)?;
                    let members = self.set_literal()?;
                    if ps.sets.insert(name.clone(), members).is_some() {
                        self.errors.push(PolicyError::at(
                            position,
                            format!("set `{name}` declared twice"),
                            None,
                        ));
                    }
                }
                "field" => {
                    let name = ident(&mut self.lexer)?;
                    expect(&mut self.lexer, Token::Colon)?;
                    let (ty_word, ty_pos) = self.word()?;
                    let ty = ScalarType::from_keyword(&ty_word).ok_or_else(|| {
                        PolicyError::at(ty_pos, format!("unknown type `{ty_word}`"), None)
                    })?;
                    if BUILTIN_REQUEST_FIELDS.contains(&name.as_str()) {
                        self.errors.push(PolicyError::at(
                            position,
                            format!("`{name}` is a built-in request field"),
                            None,
                        ));
                    } else if ps.fields.insert(name.clone(), ty).is_some() {
                        self.errors.push(PolicyError::at(
                            position,
                            format!("field `{name}` declared twice"),
                            None,
                        ));
                    }
                }
                "guard" => {
                    let (pattern, _) = self.lexer.glob()?;
                    expect_ident(&mut self.lexer, "default")?;
                    let (d, d_pos) = self.word()?;
                    let default = match d.as_str() {
                        "allow" => GuardDefault::Allow,
                        "deny" => GuardDefault::Deny,
                        _ => {
                            return Err(PolicyError::at(
                                d_pos,
                                "guard default must be `allow` or `deny`",
                                None,
                            ))
                        }
                    };
                    ps.guards.push(Guard { pattern, default });
                }
                "track" => {
                    let decl = self.track()?;
                    if !track_names.insert(decl.name.clone()) {
                        self.errors.push(PolicyError::at(
                            position,
                            format!("track `{}` declared twice", decl.name),
                            None,
                        ));
                    }
                    ps.accumulators.push(decl);
                    self.track_positions.push(position);
                }
                "control" => {
                    let tuple = self.control()?;
                    if !tuple_ids.insert(tuple.id.clone()) {
                        self.errors.push(PolicyError::at(
                            position,
                            format!("duplicate control id `{}`", tuple.id),
                            Some(&tuple.id),
                        ));
                    }
                    ps.tuples.push(tuple);
                }
                other => return Err(PolicyError::at(
                    position,
                    format!(
                        "unknown statement `{other}`; expected set, field, guard, track or control"
                    ),
                    None,
                )),
            }
        }
    }

    fn word(&mut self) -> PResult<(String, Position)> {
        let (token, position) = self.next()?;
        match token {
            Token::Ident(w) => Ok((w, position)),
            other => Err(PolicyError::at(
                position,
                format!("expected a keyword, found {other}"),
                None,
            )),
        }
    }

    fn literal(&mut self) -> PResult<Scalar> {
        let (token, position) = self.next()?;
        Ok(match token {
            Token::Str(s) => Scalar::Str(s),
            Token::Int(i) => Scalar::Int(i),
            Token::Dec(d) => Scalar::Dec(d),
            Token::Ident(w) if w == "true" => Scalar::Bool(true),
            Token::Ident(w) if w == "false" => Scalar::Bool(false),
            other => {
                return Err(PolicyError::at(
                    position,
                    format!("expected a literal, found {other}"),
                    None,
                ))
            }
        })
    }

    fn set_literal(&mut self) -> PResult<Vec<Scalar>> {
        let start = self.lexer.position();
        expect(&mut self.lexer, Token::LBracket)?;
        let mut members: Vec<Scalar> = Vec::new();
        if self.lexer.peek()?.token == Token::RBracket {
            self.next()?;
            return Ok(members);
        }
        loop {
            let value = self.literal()?;
            if let Some(first) = members.first() {
                if !first.scalar_type().comparable_with(value.scalar_type()) {
                    return Err(PolicyError::at(
                        start,
                        "set members must all have the same type",
                        None,
                    ));
                }
            }
            members.push(value);
            match self.next()? {
                (Token::Comma, _) => {}
                (Token::RBracket, _) => return Ok(members),
                (other, position) => {
                    return Err(PolicyError::at(
                        position,
                        format!("expected `,` or `]`, found {other}"),
                        None,
                    ))
                }
            }
        }
    }

    fn track(&mut self) -> PResult<AccumulatorDecl> {
        let name = ident(&mut self.lexer)?;
        expect(&mut self.lexer, Token::Assign)?;
        let (kind_word, kind_pos) = self.word()?;
        let kind = match kind_word.as_str() {
            "sum" => AccumulatorKind::Sum,
            "count" => AccumulatorKind::Count,
            "distinct_count" => AccumulatorKind::DistinctCount,
            _ => {
                return Err(PolicyError::at(
                    kind_pos,
                    format!("unknown accumulator kind `{kind_word}`"),
                    None,
                ))
            }
        };
        expect(&mut self.lexer, Token::LParen)?;
        let (source, source_pos) = self.lexer.glob()?;
        expect(&mut self.lexer, Token::RParen)?;
        let (action_pattern, field) = match (kind, source.rsplit_once('.')) {
            (AccumulatorKind::Count, _) | (AccumulatorKind::DistinctCount, None) => (source, None),
            (_, Some((pattern, field))) if !pattern.is_empty() && is_ident(field) => {
                (pattern.to_string(), Some(field.to_string()))
            }
            _ => {
                return Err(PolicyError::at(
                    source_pos,
                    format!("`{kind_word}` source must be `action_pattern.field`"),
                    None,
                ))
            }
        };
        Ok(AccumulatorDecl {
            name,
            kind,
            action_pattern,
            field,
        })
    }

    fn control(&mut self) -> PResult<ControlTuple> {
        let (token, id_pos) = self.next()?;
        let id = match token {
            Token::Str(s) if !s.is_empty() => s,
            other => {
                return Err(PolicyError::at(
                    id_pos,
                    format!("expected a quoted control id, found {other}"),
                    None,
                ))
            }
        };
        expect(&mut self.lexer, Token::LBrace)?;
        let mut actor = None;
        let mut action = None;
        let mut resource = None;
        let mut when = None;
        let mut decision: Option<DecisionAction> = None;
        let mut reason = None;
        let mut evidence = None;
        let mut owner = None;
        let mut note = None;
        let mut rubric = None;
        let tid = Some(id.as_str());
        loop {
            let (token, position) = self.next()?;
            let key = match token {
                Token::RBrace => break,
                Token::Ident(k) => k,
                other => {
                    return Err(PolicyError::at(
                        position,
                        format!("expected a clause or `}}`, found {other}"),
                        tid,
                    ))
                }
            };
            expect(&mut self.lexer, Token::Colon)?;
            let duplicate = match key.as_str() {
                "actor" => actor.replace(self.lexer.glob()?.0).is_some(),
                "action" => action.replace(self.lexer.glob()?.0).is_some(),
                "resource" => resource.replace(self.lexer.glob()?.0).is_some(),
                "when" => {
                    let expr = condition::parse_embedded(&mut self.lexer)?;
                    for name in expr.set_refs() {
                        self.set_refs.push((position, id.clone(), name.to_string()));
                    }
                    when.replace(expr).is_some()
                }
                "decision" => match self.decision(&id)? {
                    Some(d) => decision.replace(d).is_some(),
                    None => {
                        // malformed decision already recorded; keep a placeholder
                        decision.replace(DecisionAction::Deny).is_some()
                    }
                },
                "reason" => reason.replace(self.string()?).is_some(),
                "evidence" => evidence.replace(self.evidence()?).is_some(),
                "owner" => {
                    let identity = self.string()?;
                    expect_ident(&mut self.lexer, "role")?;
                    let role = self.string()?;
                    owner.replace(OwnerRef { identity, role }).is_some()
                }
                "note" => note.replace(self.string()?).is_some(),
                "rubric" => rubric.replace(self.rubric(&id)?).is_some(),
                other => {
                    return Err(PolicyError::at(
                        position,
                        format!("unknown clause `{other}`"),
                        tid,
                    ))
                }
            };
            if duplicate {
                return Err(PolicyError::at(
                    position,
                    format!("clause `{key}` given twice"),
                    tid,
                ));
            }
        }
        let missing =
            |what: &str| PolicyError::at(id_pos, format!("missing `{what}:` clause"), Some(&id));
        Ok(ControlTuple {
            actor_selector: actor.ok_or_else(|| missing("actor"))?,
            action_selector: action.ok_or_else(|| missing("action"))?,
            resource_selector: resource.ok_or_else(|| missing("resource"))?,
            precondition: when.unwrap_or_else(Expr::always),
            decision: DecisionSpec {
                action: decision.ok_or_else(|| missing("decision"))?,
                reason: reason.unwrap_or_default(),
            },
            evidence,
            owner: owner.unwrap_or_default(),
            review_note: note.unwrap_or_default(),
            rubric_answers: rubric,
            id,
        })
    }

    fn string(&mut self) -> PResult<String> {
        match self.next()? {
            (Token::Str(s), _) => Ok(s),
            (other, position) => Err(PolicyError::at(
                position,
                format!("expected a string, found {other}"),
                None,
            )),
        }
    }

    /// Returns `None` (with the error recorded) for a syntactically complete
    /// but malformed decision clause.
    fn decision(&mut self, tuple_id: &str) -> PResult<Option<DecisionAction>> {
        let (kind, position) = self.word()?;
        let has_args = self.lexer.peek()?.token == Token::LParen;
        let malformed = |this: &mut Self, msg: String| {
            this.errors
                .push(PolicyError::at(position, msg, Some(tuple_id)));
            Ok(None)
        };
        match kind.as_str() {
            "allow" | "deny" | "log_only" if !has_args => Ok(Some(match kind.as_str() {
                "allow" => DecisionAction::Allow,
                "deny" => DecisionAction::Deny,
                _ => DecisionAction::LogOnly,
            })),
            "allow" | "deny" | "log_only" => Err(PolicyError::at(position, format!("`{kind}` takes no parameters"), Some(tuple_id))),
            "escalate" => {
                if !has_args {
                    return malformed(self, "escalate needs approver_role and timeout_seconds".into());
                }
                self.escalate_params(tuple_id, position).map(|p| p.map(DecisionAction::Escalate))
            }
            "rewrite" => {
                let ops = if has_args { self.rewrite_ops()? } else { Vec::new() };
                if ops.is_empty() {
                    return malformed(self, "rewrite needs at least one operation".into());
                }
                Ok(Some(DecisionAction::Rewrite(ops)))
            }
            other => Err(PolicyError::at(
                position,
                format!("unknown decision `{other}`; expected allow, deny, escalate, log_only or rewrite"),
                Some(tuple_id),
            )),
        }
    }

    fn escalate_params(
        &mut self,
        tuple_id: &str,
        position: Position,
    ) -> PResult<Option<EscalateParams>> {
        expect(&mut self.lexer, Token::LParen)?;
        let mut role = None;
        let mut timeout = None;
        let mut on_timeout = None;
        if self.lexer.peek()?.token != Token::RParen {
            loop {
                let (name, name_pos) = self.word()?;
                expect(&mut self.lexer, Token::Assign)?;
                match name.as_str() {
                    "approver_role" => role = Some(self.string()?),
                    "timeout_seconds" => match self.next()? {
                        (Token::Int(n), _) if n > 0 => timeout = Some(n as u64),
                        (_, p) => {
                            return Err(PolicyError::at(
                                p,
                                "timeout_seconds must be a positive integer",
                                Some(tuple_id),
                            ))
                        }
                    },
                    "on_timeout" => {
                        let (w, p) = self.word()?;
                        on_timeout = Some(match w.as_str() {
                            "deny" => TimeoutAction::Deny,
                            "allow" => TimeoutAction::Allow,
                            _ => {
                                return Err(PolicyError::at(
                                    p,
                                    "on_timeout must be `deny` or `allow`",
                                    Some(tuple_id),
                                ))
                            }
                        });
                    }
                    other => {
                        return Err(PolicyError::at(
                            name_pos,
                            format!("unknown escalate parameter `{other}`"),
                            Some(tuple_id),
                        ))
                    }
                }
                match self.next()? {
                    (Token::Comma, _) => {}
                    (Token::RParen, _) => break,
                    (other, p) => {
                        return Err(PolicyError::at(
                            p,
                            format!("expected `,` or `)`, found {other}"),
                            Some(tuple_id),
                        ))
                    }
                }
            }
        } else {
            self.next()?;
        }
        match (role, timeout) {
            (Some(approver_role), Some(timeout_seconds)) if !approver_role.is_empty() => {
                Ok(Some(EscalateParams {
                    approver_role,
                    timeout_seconds,
                    on_timeout: on_timeout.unwrap_or_default(),
                }))
            }
            _ => {
                self.errors.push(PolicyError::at(
                    position,
                    "escalate needs approver_role and timeout_seconds",
                    Some(tuple_id),
                ));
                Ok(None)
            }
        }
    }

    fn rewrite_ops(&mut self) -> PResult<Vec<RewriteOp>> {
        expect(&mut self.lexer, Token::LParen)?;
        let mut ops = Vec::new();
        if self.lexer.peek()?.token == Token::RParen {
            self.next()?;
            return Ok(ops);
        }
        loop {
            let (op, position) = self.word()?;
            expect(&mut self.lexer, Token::LParen)?;
            let field = ident(&mut self.lexer)?;
            let parsed = match op.as_str() {
                "set" => {
                    expect(&mut self.lexer, Token::Comma)?;
                    RewriteOp::Set {
                        field,
                        value: self.literal()?,
                    }
                }
                "clamp" => {
                    expect(&mut self.lexer, Token::Comma)?;
                    let min = self.literal()?;
                    expect(&mut self.lexer, Token::Comma)?;
                    let max = self.literal()?;
                    RewriteOp::Clamp { field, min, max }
                }
                "redact" => RewriteOp::Redact { field },
                other => {
                    return Err(PolicyError::at(
                        position,
                        format!("unknown rewrite operation `{other}`"),
                        None,
                    ))
                }
            };
            expect(&mut self.lexer, Token::RParen)?;
            ops.push(parsed);
            match self.next()? {
                (Token::Comma, _) => {}
                (Token::RParen, _) => return Ok(ops),
                (other, p) => {
                    return Err(PolicyError::at(
                        p,
                        format!("expected `,` or `)`, found {other}"),
                        None,
                    ))
                }
            }
        }
    }

    fn evidence(&mut self) -> PResult<EvidenceSpec> {
        expect(&mut self.lexer, Token::LBracket)?;
        let mut fields = Vec::new();
        if self.lexer.peek()?.token == Token::RBracket {
            self.next()?;
        } else {
            loop {
                let (word, position) = self.word()?;
                let field = EvidenceField::from_keyword(&word).ok_or_else(|| {
                    PolicyError::at(position, format!("unknown evidence field `{word}`"), None)
                })?;
                fields.push(field);
                match self.next()? {
                    (Token::Comma, _) => {}
                    (Token::RBracket, _) => break,
                    (other, p) => {
                        return Err(PolicyError::at(
                            p,
                            format!("expected `,` or `]`, found {other}"),
                            None,
                        ))
                    }
                }
            }
        }
        let attestation = if self.lexer.peek()?.token == Token::Ident("signed".into()) {
            self.next()?;
            Attestation::KeyedSignature
        } else {
            Attestation::HashChainOnly
        };
        Ok(EvidenceSpec::new(fields, attestation))
    }

    fn rubric(&mut self, tuple_id: &str) -> PResult<RubricAnswers> {
        let position = self.lexer.position();
        expect(&mut self.lexer, Token::LBracket)?;
        let mut scores = Vec::new();
        loop {
            match self.next()? {
                (Token::Int(n), _) => scores.push(n),
                (other, p) => {
                    return Err(PolicyError::at(
                        p,
                        format!("expected a score, found {other}"),
                        Some(tuple_id),
                    ))
                }
            }
            match self.next()? {
                (Token::Comma, _) => {}
                (Token::RBracket, _) => break,
                (other, p) => {
                    return Err(PolicyError::at(
                        p,
                        format!("expected `,` or `]`, found {other}"),
                        Some(tuple_id),
                    ))
                }
            }
        }
        let bytes: Option<Vec<u8>> = scores.iter().map(|&s| u8::try_from(s).ok()).collect();
        bytes
            .and_then(|b| <[u8; 6]>::try_from(b).ok())
            .and_then(|b| RubricAnswers::from_array(b).ok())
            .ok_or_else(|| {
                PolicyError::at(
                    position,
                    "rubric needs six scores, each 0, 1 or 2",
                    Some(tuple_id),
                )
            })
    }
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    chars
        .next()
        .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}
