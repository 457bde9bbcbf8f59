use std::fmt;

use serde::{Deserialize, Serialize};

use crate::value::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Namespace {
    Request,
    Trajectory,
    Env,
}

impl Namespace {
    pub fn keyword(self) -> &'static str {
        match self {
            Namespace::Request => "request",
            Namespace::Trajectory => "trajectory",
            Namespace::Env => "env",
        }
    }

    pub fn from_keyword(word: &str) -> Option<Self> {
        Some(match word {
            "request" => Namespace::Request,
            "trajectory" => Namespace::Trajectory,
            "env" => Namespace::Env,
            _ => return None,
        })
    }
}

/// `namespace.segment`; exactly two segments.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AttrPath {
    pub namespace: Namespace,
    pub name: String,
}

impl AttrPath {
    pub fn new(namespace: Namespace, name: impl Into<String>) -> Self {
        Self {
            namespace,
            name: name.into(),
        }
    }
}

impl fmt::Display for AttrPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.namespace.keyword(), self.name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub const ALL: [CmpOp; 6] = [
        CmpOp::Eq,
        CmpOp::Ne,
        CmpOp::Lt,
        CmpOp::Le,
        CmpOp::Gt,
        CmpOp::Ge,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn is_ordering(self) -> bool {
        !matches!(self, CmpOp::Eq | CmpOp::Ne)
    }

    pub fn holds(self, ordering: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CmpOp::Eq => ordering == Equal,
            CmpOp::Ne => ordering != Equal,
            CmpOp::Lt => ordering == Less,
            CmpOp::Le => ordering != Greater,
            CmpOp::Gt => ordering == Greater,
            CmpOp::Ge => ordering != Less,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Lit(Scalar),
    Path(AttrPath),
    Not(Box<Expr>),
    Cmp(CmpOp, Box<Expr>, Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    InSet(Box<Expr>, String),
}

impl Expr {
    pub fn always() -> Expr {
        Expr::Lit(Scalar::Bool(true))
    }

    pub fn is_always(&self) -> bool {
        matches!(self, Expr::Lit(Scalar::Bool(true)))
    }

    /// Set names referenced anywhere in the tree, in first-use order.
    pub fn set_refs(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.walk(&mut |e| {
            if let Expr::InSet(_, name) = e {
                if !out.contains(&name.as_str()) {
                    out.push(name.as_str());
                }
            }
        });
        out
    }

    pub fn paths(&self) -> Vec<&AttrPath> {
        let mut out = Vec::new();
        self.walk(&mut |e| {
            if let Expr::Path(p) = e {
                if !out.contains(&p) {
                    out.push(p);
                }
            }
        });
        out
    }

    fn walk<'a>(&'a self, visit: &mut impl FnMut(&'a Expr)) {
        visit(self);
        match self {
            Expr::Lit(_) | Expr::Path(_) => {}
            Expr::Not(e) | Expr::InSet(e, _) => e.walk(visit),
            Expr::Cmp(_, l, r) | Expr::And(l, r) | Expr::Or(l, r) => {
                l.walk(visit);
                r.walk(visit);
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Or(..) => 1,
            Expr::And(..) => 2,
            Expr::Cmp(..) | Expr::InSet(..) => 3,
            Expr::Not(_) => 4,
            Expr::Lit(_) | Expr::Path(_) => 5,
        }
    }

    fn write_at(&self, out: &mut String, min: u8) {
        let parens = self.precedence() < min;
        if parens {
            out.push('(');
        }
        match self {
            Expr::Lit(v) => out.push_str(&v.to_literal()),
            Expr::Path(p) => out.push_str(&p.to_string()),
            Expr::Not(e) => {
                out.push('!');
                e.write_at(out, 4);
            }
            Expr::Cmp(op, l, r) => {
                l.write_at(out, 4);
                out.push(' ');
                out.push_str(op.symbol());
                out.push(' ');
                r.write_at(out, 4);
            }
            Expr::InSet(e, name) => {
                e.write_at(out, 4);
                out.push_str(" in set(");
                out.push_str(name);
                out.push(')');
            }
            Expr::And(l, r) => {
                l.write_at(out, 2);
                out.push_str(" && ");
                r.write_at(out, 3);
            }
            Expr::Or(l, r) => {
                l.write_at(out, 1);
                out.push_str(" || ");
                r.write_at(out, 2);
            }
        }
        if parens {
            out.push(')');
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        self.write_at(&mut out, 0);
        f.write_str(&out)
    }
}
