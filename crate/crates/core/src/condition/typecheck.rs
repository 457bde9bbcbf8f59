use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use super::ast::{AttrPath, CmpOp, Expr, Namespace};
use crate::value::{Scalar, ScalarType};

/// Attribute paths reachable from a precondition, with their types, plus the
/// element types of the declared named sets (`None` for an empty set).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Schema {
    pub attributes: BTreeMap<AttrPath, ScalarType>,
    pub sets: BTreeMap<String, Option<ScalarType>>,
}

impl Schema {
    pub fn with_attr(mut self, namespace: Namespace, name: &str, ty: ScalarType) -> Self {
        self.attributes.insert(AttrPath::new(namespace, name), ty);
        self
    }

    pub fn with_set(mut self, name: &str, elem: Option<ScalarType>) -> Self {
        self.sets.insert(name.to_string(), elem);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TypeErrorCode {
    UnknownPath,
    TypeMismatch,
    UnknownSet,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TypeError {
    pub code: TypeErrorCode,
    pub message: String,
}

impl fmt::Display for TypeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.code, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TypedNode {
    Lit(Scalar),
    Path(AttrPath),
    Not(Box<TypedExpr>),
    Cmp(CmpOp, Box<TypedExpr>, Box<TypedExpr>),
    And(Box<TypedExpr>, Box<TypedExpr>),
    Or(Box<TypedExpr>, Box<TypedExpr>),
    InSet(Box<TypedExpr>, String),
}

/// An expression with every node annotated by its static type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypedExpr {
    pub node: TypedNode,
    pub ty: ScalarType,
}

/// Typechecks a precondition; the top-level type must be boolean.
pub fn typecheck(expr: &Expr, schema: &Schema) -> Result<TypedExpr, Vec<TypeError>> {
    let mut errors = Vec::new();
    let typed = check(expr, schema, &mut errors);
    if typed.ty != ScalarType::Boolean {
        errors.push(mismatch(format!(
            "precondition must be boolean, found {}",
            typed.ty
        )));
    }
    if errors.is_empty() {
        Ok(typed)
    } else {
        Err(errors)
    }
}

fn mismatch(message: String) -> TypeError {
    TypeError {
        code: TypeErrorCode::TypeMismatch,
        message,
    }
}

fn unresolved(e: &TypedExpr, schema: &Schema) -> bool {
    matches!(&e.node, TypedNode::Path(p) if !schema.attributes.contains_key(p))
}

fn require_bool(e: &TypedExpr, what: &str, errors: &mut Vec<TypeError>) {
    if e.ty != ScalarType::Boolean {
        errors.push(mismatch(format!(
            "operand of {what} must be boolean, found {}",
            e.ty
        )));
    }
}

fn check(expr: &Expr, schema: &Schema, errors: &mut Vec<TypeError>) -> TypedExpr {
    let bool_node = |node| TypedExpr {
        node,
        ty: ScalarType::Boolean,
    };
    match expr {
        Expr::Lit(v) => TypedExpr {
            node: TypedNode::Lit(v.clone()),
            ty: v.scalar_type(),
        },
        Expr::Path(p) => {
            let ty = match schema.attributes.get(p) {
                Some(ty) => *ty,
                None => {
                    errors.push(TypeError {
                        code: TypeErrorCode::UnknownPath,
                        message: format!("unknown attribute `{p}`"),
                    });
                    // keep going so later errors are still reported
                    ScalarType::Boolean
                }
            };
            TypedExpr {
                node: TypedNode::Path(p.clone()),
                ty,
            }
        }
        Expr::Not(e) => {
            let inner = check(e, schema, errors);
            require_bool(&inner, "`!`", errors);
            bool_node(TypedNode::Not(Box::new(inner)))
        }
        Expr::And(l, r) | Expr::Or(l, r) => {
            let (l, r) = (check(l, schema, errors), check(r, schema, errors));
            let is_and = matches!(expr, Expr::And(..));
            let what = if is_and { "`&&`" } else { "`||`" };
            require_bool(&l, what, errors);
            require_bool(&r, what, errors);
            let (l, r) = (Box::new(l), Box::new(r));
            bool_node(if is_and {
                TypedNode::And(l, r)
            } else {
                TypedNode::Or(l, r)
            })
        }
        Expr::Cmp(op, l, r) => {
            let (l, r) = (check(l, schema, errors), check(r, schema, errors));
            if unresolved(&l, schema) || unresolved(&r, schema) {
                // already reported as UNKNOWN_PATH
            } else if !l.ty.comparable_with(r.ty) {
                errors.push(mismatch(format!(
                    "cannot compare {} with {} using `{}`",
                    l.ty,
                    r.ty,
                    op.symbol()
                )));
            } else if op.is_ordering() && !l.ty.is_numeric() {
                errors.push(mismatch(format!(
                    "`{}` requires numeric operands, found {}",
                    op.symbol(),
                    l.ty
                )));
            }
            bool_node(TypedNode::Cmp(*op, Box::new(l), Box::new(r)))
        }
        Expr::InSet(e, name) => {
            let operand = check(e, schema, errors);
            match schema.sets.get(name) {
                None => errors.push(TypeError {
                    code: TypeErrorCode::UnknownSet,
                    message: format!("unknown set `{name}`"),
                }),
                Some(Some(elem))
                    if !unresolved(&operand, schema) && !operand.ty.comparable_with(*elem) =>
                {
                    errors.push(mismatch(format!(
                        "set `{name}` holds {elem} values but the operand is {}",
                        operand.ty
                    )))
                }
                Some(_) => {}
            }
            bool_node(TypedNode::InSet(Box::new(operand), name.clone()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::condition::parse_expr;

    fn schema() -> Schema {
        Schema::default()
            .with_attr(Namespace::Request, "amount", ScalarType::Decimal)
            .with_attr(Namespace::Request, "vendor_id", ScalarType::String)
            .with_attr(Namespace::Request, "urgent", ScalarType::Boolean)
            .with_attr(Namespace::Trajectory, "total_spend", ScalarType::Decimal)
            .with_set("approved_vendors", Some(ScalarType::String))
    }

    fn codes(src: &str) -> Vec<TypeErrorCode> {
        match typecheck(&parse_expr(src).unwrap(), &schema()) {
            Ok(_) => vec![],
            Err(errs) => errs.into_iter().map(|e| e.code).collect(),
        }
    }

    #[test]
    fn decimal_against_integer_literal() {
        let typed = typecheck(&parse_expr("request.amount > 5000").unwrap(), &schema()).unwrap();
        assert_eq!(typed.ty, ScalarType::Boolean);
        let TypedNode::Cmp(_, l, r) = typed.node else {
            panic!()
        };
        assert_eq!((l.ty, r.ty), (ScalarType::Decimal, ScalarType::Integer));
    }

    #[test]
    fn string_ordered_against_number_is_rejected() {
        assert_eq!(
            codes("request.vendor_id > 5"),
            vec![TypeErrorCode::TypeMismatch]
        );
    }

    #[test]
    fn ordering_on_strings_is_rejected() {
        assert_eq!(
            codes("request.vendor_id < \"V-5\""),
            vec![TypeErrorCode::TypeMismatch]
        );
        assert!(codes("request.vendor_id != \"V-5\"").is_empty());
    }

    #[test]
    fn unknown_paths_and_sets() {
        assert_eq!(codes("request.nope == 1"), vec![TypeErrorCode::UnknownPath]);
        assert_eq!(
            codes("request.vendor_id in set(blocked_vendors)"),
            vec![TypeErrorCode::UnknownSet]
        );
        assert_eq!(
            codes("request.amount in set(approved_vendors)"),
            vec![TypeErrorCode::TypeMismatch]
        );
    }

    #[test]
    fn boolean_structure() {
        assert!(codes("request.urgent && !(trajectory.total_spend > 5000)").is_empty());
        assert_eq!(codes("request.amount"), vec![TypeErrorCode::TypeMismatch]);
        assert_eq!(
            codes("!request.vendor_id"),
            vec![TypeErrorCode::TypeMismatch]
        );
    }
}
