use std::fmt;

use serde::{Deserialize, Serialize};

/// Which half of a transition a variable reads from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scope {
    /// `s.<name>`: state before the action.
    State,
    /// `a.<name>`: the action taken.
    Action,
    /// `sn.<name>`: state after the action.
    NextState,
}

impl Scope {
    pub fn prefix(self) -> &'static str {
        match self {
            Scope::State => "s",
            Scope::Action => "a",
            Scope::NextState => "sn",
        }
    }

    pub fn from_prefix(prefix: &str) -> Option<Self> {
        match prefix {
            "s" => Some(Scope::State),
            "a" => Some(Scope::Action),
            "sn" => Some(Scope::NextState),
            _ => None,
        }
    }
}

/// A qualified variable reference such as `s.pole_angle`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Var {
    pub scope: Scope,
    pub name: String,
}

impl Var {
    pub fn new(scope: Scope, name: impl Into<String>) -> Self {
        Self {
            scope,
            name: name.into(),
        }
    }

    pub fn state(name: impl Into<String>) -> Self {
        Self::new(Scope::State, name)
    }

    pub fn action(name: impl Into<String>) -> Self {
        Self::new(Scope::Action, name)
    }

    pub fn next_state(name: impl Into<String>) -> Self {
        Self::new(Scope::NextState, name)
    }

    /// Column-style name, e.g. `sn.cart_vel`.
    pub fn qualified(&self) -> String {
        format!("{}.{}", self.scope.prefix(), self.name)
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.scope.prefix(), self.name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "==",
        }
    }
}

/// Named functions callable with `name(args...)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Func {
    Abs,
    Exp,
    Tanh,
    Sqrt,
    Sign,
    Min,
    Max,
    Clip,
    If,
}

impl Func {
    pub const ALL: [Func; 9] = [
        Func::Abs,
        Func::Exp,
        Func::Tanh,
        Func::Sqrt,
        Func::Sign,
        Func::Min,
        Func::Max,
        Func::Clip,
        Func::If,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Abs => "abs",
            Func::Exp => "exp",
            Func::Tanh => "tanh",
            Func::Sqrt => "sqrt",
            Func::Sign => "sign",
            Func::Min => "min",
            Func::Max => "max",
            Func::Clip => "clip",
            Func::If => "if",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Abs | Func::Exp | Func::Tanh | Func::Sqrt | Func::Sign => 1,
            Func::Min | Func::Max => 2,
            Func::Clip | Func::If => 3,
        }
    }
}

/// Expression tree. `V` is the leaf reference type: [`Var`] for parsed
/// programs, a slot index once bound against a [`Schema`](super::Schema).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr<V = Var> {
    Const(f64),
    Ref(V),
    Neg(Box<Expr<V>>),
    Binary(BinOp, Box<Expr<V>>, Box<Expr<V>>),
    Compare(CmpOp, Box<Expr<V>>, Box<Expr<V>>),
    Call(Func, Vec<Expr<V>>),
}

impl<V> Expr<V> {
    pub fn binary(op: BinOp, lhs: Expr<V>, rhs: Expr<V>) -> Self {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn compare(op: CmpOp, lhs: Expr<V>, rhs: Expr<V>) -> Self {
        Expr::Compare(op, Box::new(lhs), Box::new(rhs))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn neg(inner: Expr<V>) -> Self {
        Expr::Neg(Box::new(inner))
    }

    /// Rebuild the tree with every leaf reference mapped through `f`.
    pub fn try_map_refs<W, E>(&self, f: &mut impl FnMut(&V) -> Result<W, E>) -> Result<Expr<W>, E> {
        Ok(match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Ref(v) => Expr::Ref(f(v)?),
            Expr::Neg(e) => Expr::Neg(Box::new(e.try_map_refs(f)?)),
            Expr::Binary(op, l, r) => {
                Expr::Binary(*op, Box::new(l.try_map_refs(f)?), Box::new(r.try_map_refs(f)?))
            }
            Expr::Compare(op, l, r) => {
                Expr::Compare(*op, Box::new(l.try_map_refs(f)?), Box::new(r.try_map_refs(f)?))
            }
            Expr::Call(func, args) => Expr::Call(
                *func,
                args.iter().map(|a| a.try_map_refs(f)).collect::<Result<_, _>>()?,
            ),
        })
    }

    /// Visit every node in pre-order.
    pub fn walk<'a>(&'a self, visit: &mut impl FnMut(&'a Expr<V>)) {
        visit(self);
        match self {
            Expr::Const(_) | Expr::Ref(_) => {}
            Expr::Neg(e) => e.walk(visit),
            Expr::Binary(_, l, r) | Expr::Compare(_, l, r) => {
                l.walk(visit);
                r.walk(visit);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.walk(visit)),
        }
    }

    pub fn node_count(&self) -> usize {
        let mut n = 0;
        self.walk(&mut |_| n += 1);
        n
    }
}

impl Expr<Var> {
    pub fn var(var: Var) -> Self {
        Expr::Ref(var)
    }

    /// All distinct variable references, in first-seen order.
    pub fn vars(&self) -> Vec<&Var> {
        let mut out: Vec<&Var> = Vec::new();
        self.walk(&mut |e| {
            if let Expr::Ref(v) = e {
                if !out.contains(&v) {
                    out.push(v);
                }
            }
        });
        out
    }
}

// Precedence levels used by the printer; higher binds tighter.
const PREC_CMP: u8 = 1;
const PREC_ADD: u8 = 2;
const PREC_MUL: u8 = 3;
const PREC_UNARY: u8 = 4;
const PREC_POW: u8 = 5;
const PREC_ATOM: u8 = 6;

fn precedence<V>(e: &Expr<V>) -> u8 {
    match e {
        Expr::Const(c) if c.is_sign_negative() => PREC_UNARY,
        Expr::Const(_) | Expr::Ref(_) | Expr::Call(..) => PREC_ATOM,
        Expr::Neg(_) => PREC_UNARY,
        Expr::Binary(BinOp::Pow, ..) => PREC_POW,
        Expr::Binary(BinOp::Mul | BinOp::Div, ..) => PREC_MUL,
        Expr::Binary(BinOp::Add | BinOp::Sub, ..) => PREC_ADD,
        Expr::Compare(..) => PREC_CMP,
    }
}

/// Shortest text that parses back to exactly `c`.
pub(crate) fn format_number(c: f64) -> String {
    if c.fract() == 0.0 && c.abs() < 1e15 {
        format!("{c}")
    } else {
        format!("{c:?}")
    }
}

fn write_expr(f: &mut fmt::Formatter<'_>, e: &Expr<Var>, min_prec: u8) -> fmt::Result {
    let paren = precedence(e) < min_prec;
    if paren {
        f.write_str("(")?;
    }
    match e {
        Expr::Const(c) => f.write_str(&format_number(*c))?,
        Expr::Ref(v) => write!(f, "{v}")?,
        Expr::Neg(inner) => {
            f.write_str("-")?;
            // A bare literal after unary minus would be folded into a
            // negative constant by the parser, so keep it parenthesised.
            if matches!(**inner, Expr::Const(_)) {
                f.write_str("(")?;
                write_expr(f, inner, 0)?;
                f.write_str(")")?;
            } else {
                write_expr(f, inner, PREC_UNARY)?;
            }
        }
        Expr::Binary(BinOp::Pow, base, exp) => {
            write_expr(f, base, PREC_ATOM)?;
            f.write_str("^")?;
            write_expr(f, exp, PREC_UNARY)?;
        }
        Expr::Binary(op, l, r) => {
            let p = precedence(e);
            write_expr(f, l, p)?;
            write!(f, " {} ", op.symbol())?;
            write_expr(f, r, p + 1)?;
        }
        Expr::Compare(op, l, r) => {
            write_expr(f, l, PREC_ADD)?;
            write!(f, " {} ", op.symbol())?;
            write_expr(f, r, PREC_ADD)?;
        }
        Expr::Call(func, args) => {
            write!(f, "{}(", func.name())?;
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write_expr(f, a, 0)?;
            }
            f.write_str(")")?;
        }
    }
    if paren {
        f.write_str(")")?;
    }
    Ok(())
}

/// Canonical pretty-printer. `parse(e.to_string()) == e` for every tree
/// with finite constants.
impl fmt::Display for Expr<Var> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(f, self, 0)
    }
}
