//! Small arithmetic expression language for coefficient fields in model
//! config files.
//!
//! Grammar (whitespace is insignificant):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?            right associative
//! atom    := number | variable | func '(' expr (',' expr)* ')' | '(' expr ')'
//! func    := exp | sqrt | abs             one argument
//!          | min | max                    two arguments
//! variable:= x1 .. xd                     state components
//!          | k                            regime index, 0-based
//!          | xi                           first control component
//!          | xi1 .. xim                   control components, 1-based
//! number  := decimal literal with optional exponent, e.g. 0.1875, 2e-3
//! ```
//!
//! `-2^2` parses as `-(2^2)`.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("unexpected character '{ch}' at offset {pos}")]
    UnexpectedChar { ch: char, pos: usize },
    #[error("unexpected end of expression")]
    UnexpectedEnd,
    #[error("unexpected token at offset {pos}: {found}")]
    UnexpectedToken { pos: usize, found: String },
    #[error("unknown identifier '{0}'")]
    UnknownIdentifier(String),
    #[error("function '{name}' takes {expected} argument(s), got {got}")]
    Arity {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("variable '{name}' out of range (dimension {limit})")]
    VariableOutOfRange { name: String, limit: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Func {
    Exp,
    Sqrt,
    Abs,
    Min,
    Max,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    fn arity(self) -> usize {
        match self {
            Func::Exp | Func::Sqrt | Func::Abs => 1,
            Func::Min | Func::Max => 2,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Var {
    State(usize),
    Regime,
    Control(usize),
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(Var),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

/// Variable bindings for one evaluation.
#[derive(Debug, Clone, Copy)]
pub struct Bindings<'a> {
    pub x: &'a [f64],
    pub regime: usize,
    pub control: &'a [f64],
}

/// A parsed expression, cheap to evaluate repeatedly.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
    source: String,
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl Expr {
    pub fn parse(source: &str) -> Result<Self, ExprError> {
        let tokens = tokenize(source)?;
        let mut parser = Parser { tokens, pos: 0 };
        let root = parser.expr()?;
        if let Some((pos, tok)) = parser.peek_full() {
            return Err(ExprError::UnexpectedToken {
                pos,
                found: tok.describe(),
            });
        }
        Ok(Self {
            root,
            source: source.to_string(),
        })
    }

    /// Checks that every referenced variable exists for a model with state
    /// dimension `dim` and control points of length `control_dim`.
    pub fn check_variables(&self, dim: usize, control_dim: usize) -> Result<(), ExprError> {
        fn walk(node: &Node, dim: usize, cdim: usize) -> Result<(), ExprError> {
            match node {
                Node::Num(_) | Node::Var(Var::Regime) => Ok(()),
                Node::Var(Var::State(i)) if *i < dim => Ok(()),
                Node::Var(Var::State(i)) => Err(ExprError::VariableOutOfRange {
                    name: format!("x{}", i + 1),
                    limit: dim,
                }),
                Node::Var(Var::Control(i)) if *i < cdim => Ok(()),
                Node::Var(Var::Control(i)) => Err(ExprError::VariableOutOfRange {
                    name: format!("xi{}", i + 1),
                    limit: cdim,
                }),
                Node::Neg(a) => walk(a, dim, cdim),
                Node::Add(a, b)
                | Node::Sub(a, b)
                | Node::Mul(a, b)
                | Node::Div(a, b)
                | Node::Pow(a, b) => {
                    walk(a, dim, cdim)?;
                    walk(b, dim, cdim)
                }
                Node::Call(_, args) => args.iter().try_for_each(|a| walk(a, dim, cdim)),
            }
        }
        walk(&self.root, dim, control_dim)
    }

    pub fn eval(&self, env: &Bindings<'_>) -> f64 {
        eval_node(&self.root, env)
    }
}

fn eval_node(node: &Node, env: &Bindings<'_>) -> f64 {
    match node {
        Node::Num(v) => *v,
        Node::Var(Var::State(i)) => env.x[*i],
        Node::Var(Var::Regime) => env.regime as f64,
        Node::Var(Var::Control(i)) => env.control[*i],
        Node::Neg(a) => -eval_node(a, env),
        Node::Add(a, b) => eval_node(a, env) + eval_node(b, env),
        Node::Sub(a, b) => eval_node(a, env) - eval_node(b, env),
        Node::Mul(a, b) => eval_node(a, env) * eval_node(b, env),
        Node::Div(a, b) => eval_node(a, env) / eval_node(b, env),
        Node::Pow(a, b) => {
            let base = eval_node(a, env);
            let exp = eval_node(b, env);
            if exp.fract() == 0.0 && exp.abs() <= 64.0 {
                base.powi(exp as i32)
            } else {
                base.powf(exp)
            }
        }
        Node::Call(f, args) => {
            let a = eval_node(&args[0], env);
            match f {
                Func::Exp => a.exp(),
                Func::Sqrt => a.sqrt(),
                Func::Abs => a.abs(),
                Func::Min => a.min(eval_node(&args[1], env)),
                Func::Max => a.max(eval_node(&args[1], env)),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
}

impl Token {
    fn describe(&self) -> String {
        match self {
            Token::Num(v) => v.to_string(),
            Token::Ident(s) => s.clone(),
            Token::Plus => "+".into(),
            Token::Minus => "-".into(),
            Token::Star => "*".into(),
            Token::Slash => "/".into(),
            Token::Caret => "^".into(),
            Token::LParen => "(".into(),
            Token::RParen => ")".into(),
            Token::Comma => ",".into(),
        }
    }
}

fn tokenize(src: &str) -> Result<Vec<(usize, Token)>, ExprError> {
    let bytes: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            ' ' | '\t' | '\n' | '\r' => {
                i += 1;
                continue;
            }
            '+' => out.push((start, Token::Plus)),
            // U+2212 minus sign accepted alongside ASCII '-'
            '-' | '\u{2212}' => out.push((start, Token::Minus)),
            '*' => out.push((start, Token::Star)),
            '/' => out.push((start, Token::Slash)),
            '^' => out.push((start, Token::Caret)),
            '(' => out.push((start, Token::LParen)),
            ')' => out.push((start, Token::RParen)),
            ',' => out.push((start, Token::Comma)),
            c if c.is_ascii_digit() || c == '.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == '.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == 'e' || bytes[i] == 'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == '+' || bytes[j] == '-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text: String = bytes[start..i].iter().collect();
                let value = text
                    .parse::<f64>()
                    .map_err(|_| ExprError::UnexpectedChar { ch: c, pos: start })?;
                out.push((start, Token::Num(value)));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == '_') {
                    i += 1;
                }
                out.push((start, Token::Ident(bytes[start..i].iter().collect())));
                continue;
            }
            other => {
                return Err(ExprError::UnexpectedChar {
                    ch: other,
                    pos: start,
                })
            }
        }
        i += 1;
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn peek_full(&self) -> Option<(usize, Token)> {
        self.tokens.get(self.pos).cloned()
    }

    fn next(&mut self) -> Result<(usize, Token), ExprError> {
        let t = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or(ExprError::UnexpectedEnd)?;
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, want: Token) -> Result<(), ExprError> {
        let (pos, tok) = self.next()?;
        if tok == want {
            Ok(())
        } else {
            Err(ExprError::UnexpectedToken {
                pos,
                found: tok.describe(),
            })
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.pos += 1;
                    lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Token::Minus) => {
                    self.pos += 1;
                    lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Token::Star) => {
                    self.pos += 1;
                    lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(Token::Slash) => {
                    self.pos += 1;
                    lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if let Some(Token::Minus) = self.peek() {
            self.pos += 1;
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.atom()?;
        if let Some(Token::Caret) = self.peek() {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Node::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        let (pos, tok) = self.next()?;
        match tok {
            Token::Num(v) => Ok(Node::Num(v)),
            Token::LParen => {
                let inner = self.expr()?;
                self.expect(Token::RParen)?;
                Ok(inner)
            }
            Token::Ident(name) => {
                if let Some(func) = Func::from_name(&name) {
                    self.expect(Token::LParen)?;
                    let mut args = vec![self.expr()?];
                    while let Some(Token::Comma) = self.peek() {
                        self.pos += 1;
                        args.push(self.expr()?);
                    }
                    self.expect(Token::RParen)?;
                    if args.len() != func.arity() {
                        return Err(ExprError::Arity {
                            name: func.name().into(),
                            expected: func.arity(),
                            got: args.len(),
                        });
                    }
                    return Ok(Node::Call(func, args));
                }
                parse_variable(&name).map(Node::Var)
            }
            other => Err(ExprError::UnexpectedToken {
                pos,
                found: other.describe(),
            }),
        }
    }
}

fn parse_variable(name: &str) -> Result<Var, ExprError> {
    let unknown = || ExprError::UnknownIdentifier(name.to_string());
    match name {
        "k" => return Ok(Var::Regime),
        "xi" => return Ok(Var::Control(0)),
        _ => {}
    }
    let (prefix, digits) = if let Some(rest) = name.strip_prefix("xi") {
        ("xi", rest)
    } else if let Some(rest) = name.strip_prefix('x') {
        ("x", rest)
    } else {
        return Err(unknown());
    };
    let index: usize = digits.parse().map_err(|_| unknown())?;
    if index == 0 {
        return Err(unknown());
    }
    Ok(match prefix {
        "xi" => Var::Control(index - 1),
        _ => Var::State(index - 1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(src: &str, x: &[f64], k: usize, xi: &[f64]) -> f64 {
        Expr::parse(src).unwrap().eval(&Bindings {
            x,
            regime: k,
            control: xi,
        })
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(eval("1 + 2 * 3", &[], 0, &[]), 7.0);
        assert_eq!(eval("(1 + 2) * 3", &[], 0, &[]), 9.0);
        assert_eq!(eval("2 ^ 3 ^ 2", &[], 0, &[]), 512.0);
        assert_eq!(eval("-2 ^ 2", &[], 0, &[]), -4.0);
        assert_eq!(eval("8 / 4 / 2", &[], 0, &[]), 1.0);
        assert_eq!(eval("1 - 2 - 3", &[], 0, &[]), -4.0);
    }

    #[test]
    fn variables_and_functions() {
        let x = [3.0, -4.0];
        assert_eq!(eval("sqrt(x1^2 + x2^2)", &x, 0, &[]), 5.0);
        assert_eq!(eval("-xi * x1", &x, 0, &[2.0]), -6.0);
        assert_eq!(eval("xi2 + k", &x, 1, &[0.0, 0.5]), 1.5);
        assert_eq!(eval("min(abs(x2), max(1, 2))", &x, 0, &[]), 2.0);
        assert!((eval("exp(0.5)", &x, 0, &[]) - 0.5f64.exp()).abs() < 1e-15);
        assert_eq!(eval("0.1875*x1^2", &[2.0], 0, &[]), 0.75);
        assert_eq!(eval("1e-3 * 2E2", &[], 0, &[]), 0.2);
        assert_eq!(eval("3 \u{2212} 1", &[], 0, &[]), 2.0);
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(matches!(Expr::parse("1 +"), Err(ExprError::UnexpectedEnd)));
        assert!(matches!(
            Expr::parse("foo + 1"),
            Err(ExprError::UnknownIdentifier(_))
        ));
        assert!(matches!(
            Expr::parse("min(1)"),
            Err(ExprError::Arity { .. })
        ));
        assert!(matches!(
            Expr::parse("1 $ 2"),
            Err(ExprError::UnexpectedChar { ch: '$', .. })
        ));
        assert!(matches!(
            Expr::parse("(1 + 2"),
            Err(ExprError::UnexpectedEnd)
        ));
        assert!(matches!(
            Expr::parse("1 2"),
            Err(ExprError::UnexpectedToken { .. })
        ));
        assert!(Expr::parse("x0").is_err());
    }

    #[test]
    fn variable_range_check() {
        let e = Expr::parse("x1 + x2 + xi2").unwrap();
        assert!(e.check_variables(2, 2).is_ok());
        assert!(e.check_variables(1, 2).is_err());
        assert!(e.check_variables(2, 1).is_err());
    }
}
