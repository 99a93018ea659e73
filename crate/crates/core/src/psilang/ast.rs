use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    /// x1..x3 (zero-based index)
    X(usize),
    Z,
    /// nu1..nu4 (zero-based index)
    Nu(usize),
    /// |x|
    R,
    /// √(1+|Du|²)
    W,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Log,
    Sqrt,
    Sin,
    Cos,
    Abs,
    Max,
    Min,
}

impl Func {
    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "abs" => Func::Abs,
            "max" => Func::Max,
            "min" => Func::Min,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Abs => "abs",
            Func::Max => "max",
            Func::Min => "min",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Max | Func::Min => 2,
            _ => 1,
        }
    }
}

/// Expression tree. Immutable after parsing.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

impl Expr {
    /// Visits every node, parents before children.
    pub fn walk(&self, visit: &mut impl FnMut(&Expr)) {
        visit(self);
        match self {
            Expr::Num(_) | Expr::Var(_) => {}
            Expr::Neg(e) => e.walk(visit),
            Expr::Bin(_, a, b) => {
                a.walk(visit);
                b.walk(visit);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.walk(visit)),
        }
    }

    pub fn uses(&self, pred: impl Fn(Var) -> bool) -> bool {
        let mut found = false;
        self.walk(&mut |e| {
            if let Expr::Var(v) = e {
                found |= pred(*v);
            }
        });
        found
    }

    pub fn uses_z(&self) -> bool {
        self.uses(|v| v == Var::Z)
    }

    /// True when the expression reads the normal or w (i.e. depends on Du).
    pub fn uses_gradient(&self) -> bool {
        self.uses(|v| matches!(v, Var::Nu(_) | Var::W))
    }

    /// Checks that every x_i has i ≤ n and every nu_i has i ≤ n+1.
    pub fn check_dim(&self, n: usize) -> Result<(), super::ExprError> {
        let mut bad = None;
        self.walk(&mut |e| match e {
            Expr::Var(Var::X(i)) if *i >= n && bad.is_none() => bad = Some(format!("x{}", i + 1)),
            Expr::Var(Var::Nu(i)) if *i > n && bad.is_none() => bad = Some(format!("nu{}", i + 1)),
            _ => {}
        });
        match bad {
            Some(name) => Err(super::ExprError::VariableOutOfRange { name, n }),
            None => Ok(()),
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::X(i) => write!(f, "x{}", i + 1),
            Var::Z => write!(f, "z"),
            Var::Nu(i) => write!(f, "nu{}", i + 1),
            Var::R => write!(f, "r"),
            Var::W => write!(f, "w"),
        }
    }
}

impl fmt::Display for BinOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        })
    }
}

/// Fully parenthesized printing; reparses to the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Bin(op, a, b) => write!(f, "({a} {op} {b})"),
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}
