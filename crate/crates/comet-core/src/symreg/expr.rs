//! Update-equation and update-condition ASTs over byte state cells and actions.
//!
//! Expressions evaluate in signed integers and reduce mod 256 into `[0, 255]`.
//! Both ASTs serialize to s-expression text (`(add (var s3) (var s5))`,
//! `(and (lt (var s3) (var s1)) (act 2))`) and parse back exactly.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

use super::SymregError;

/// One regression row: the full previous cell vector plus the taken action.
#[derive(Debug, Clone, Copy)]
pub struct Row<'a> {
    pub cells: &'a [u8],
    pub action: u8,
}

impl<'a> Row<'a> {
    pub fn new(cells: &'a [u8], action: u8) -> Self {
        Row { cells, action }
    }
}

/// An input read by an expression or predicate: a state cell or an action id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Input {
    Cell(usize),
    Action(u8),
}

/// Update-equation AST. `MulConst` carries a factor in `[-4, 4]` excluding 0;
/// plain constants come from the enumerated range or offset fitting.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Expression {
    Const(i16),
    Var(usize),
    Act(u8),
    Neg(Box<Expression>),
    Add(Box<Expression>, Box<Expression>),
    Sub(Box<Expression>, Box<Expression>),
    MulConst(i8, Box<Expression>),
}

impl Expression {
    pub fn add(l: Expression, r: Expression) -> Expression {
        Expression::Add(Box::new(l), Box::new(r))
    }
    pub fn sub(l: Expression, r: Expression) -> Expression {
        Expression::Sub(Box::new(l), Box::new(r))
    }
    pub fn neg(e: Expression) -> Expression {
        Expression::Neg(Box::new(e))
    }
    pub fn mul(c: i8, e: Expression) -> Expression {
        Expression::MulConst(c, Box::new(e))
    }

    fn eval_signed(&self, row: &Row) -> Result<i32, SymregError> {
        Ok(match self {
            Expression::Const(c) => *c as i32,
            Expression::Var(k) => {
                *row.cells.get(*k).ok_or(SymregError::UnboundVariable(*k))? as i32
            }
            Expression::Act(a) => (row.action == *a) as i32,
            Expression::Neg(e) => -e.eval_signed(row)?,
            Expression::Add(l, r) => l.eval_signed(row)? + r.eval_signed(row)?,
            Expression::Sub(l, r) => l.eval_signed(row)? - r.eval_signed(row)?,
            Expression::MulConst(c, e) => (*c as i32) * e.eval_signed(row)?,
        })
    }

    /// Total evaluation: signed arithmetic reduced mod 256 into a byte.
    pub fn eval(&self, row: &Row) -> Result<u8, SymregError> {
        Ok(self.eval_signed(row)?.rem_euclid(256) as u8)
    }

    /// Node cost: constants 1, variables and action indicators 2, operators 1.
    pub fn complexity(&self) -> u32 {
        match self {
            Expression::Const(_) => 1,
            Expression::Var(_) | Expression::Act(_) => 2,
            Expression::Neg(e) | Expression::MulConst(_, e) => 1 + e.complexity(),
            Expression::Add(l, r) | Expression::Sub(l, r) => 1 + l.complexity() + r.complexity(),
        }
    }

    /// Number of AST nodes.
    pub fn size(&self) -> u32 {
        match self {
            Expression::Const(_) | Expression::Var(_) | Expression::Act(_) => 1,
            Expression::Neg(e) | Expression::MulConst(_, e) => 1 + e.size(),
            Expression::Add(l, r) | Expression::Sub(l, r) => 1 + l.size() + r.size(),
        }
    }

    pub fn collect_inputs(&self, out: &mut BTreeSet<Input>) {
        match self {
            Expression::Const(_) => {}
            Expression::Var(k) => {
                out.insert(Input::Cell(*k));
            }
            Expression::Act(a) => {
                out.insert(Input::Action(*a));
            }
            Expression::Neg(e) | Expression::MulConst(_, e) => e.collect_inputs(out),
            Expression::Add(l, r) | Expression::Sub(l, r) => {
                l.collect_inputs(out);
                r.collect_inputs(out);
            }
        }
    }

    pub fn inputs(&self) -> BTreeSet<Input> {
        let mut s = BTreeSet::new();
        self.collect_inputs(&mut s);
        s
    }

    /// Plain-text equation rendering, e.g. `s3 + s5` or `s0 - 4*act1`.
    pub fn render_infix(&self) -> String {
        match self {
            Expression::Const(c) => format!("{c}"),
            Expression::Var(k) => format!("s{k}"),
            Expression::Act(a) => format!("act{a}"),
            Expression::Neg(e) => format!("-({})", e.render_infix()),
            Expression::Add(l, r) => format!("{} + {}", l.render_infix(), r.render_infix()),
            Expression::Sub(l, r) => match r.as_ref() {
                Expression::Const(_) | Expression::Var(_) | Expression::Act(_) => {
                    format!("{} - {}", l.render_infix(), r.render_infix())
                }
                _ => format!("{} - ({})", l.render_infix(), r.render_infix()),
            },
            Expression::MulConst(c, e) => match e.as_ref() {
                Expression::Const(_) | Expression::Var(_) | Expression::Act(_) => {
                    format!("{}*{}", c, e.render_infix())
                }
                _ => format!("{}*({})", c, e.render_infix()),
            },
        }
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expression::Const(c) => write!(f, "{c}"),
            Expression::Var(k) => write!(f, "(var s{k})"),
            Expression::Act(a) => write!(f, "(act {a})"),
            Expression::Neg(e) => write!(f, "(neg {e})"),
            Expression::Add(l, r) => write!(f, "(add {l} {r})"),
            Expression::Sub(l, r) => write!(f, "(sub {l} {r})"),
            Expression::MulConst(c, e) => write!(f, "(mul {c} {e})"),
        }
    }
}

/// Update-condition AST: literals plus a conjunction of at most two literals.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Predicate {
    Always,
    Never,
    VarEqConst(usize, u8),
    VarLtConst(usize, u8),
    VarLtVar(usize, usize),
    ActEq(u8),
    /// Collision-style proximity: `|cells[k] - cells[j]| < c`.
    AbsDiffLt(usize, usize, u8),
    And(Box<Predicate>, Box<Predicate>),
}

impl Predicate {
    pub fn and(l: Predicate, r: Predicate) -> Predicate {
        Predicate::And(Box::new(l), Box::new(r))
    }

    pub fn eval(&self, row: &Row) -> Result<bool, SymregError> {
        let cell = |k: usize| -> Result<u8, SymregError> {
            row.cells.get(k).copied().ok_or(SymregError::UnboundVariable(k))
        };
        Ok(match self {
            Predicate::Always => true,
            Predicate::Never => false,
            Predicate::VarEqConst(k, c) => cell(*k)? == *c,
            Predicate::VarLtConst(k, c) => cell(*k)? < *c,
            Predicate::VarLtVar(k, j) => cell(*k)? < cell(*j)?,
            Predicate::ActEq(a) => row.action == *a,
            Predicate::AbsDiffLt(k, j, c) => {
                (cell(*k)? as i32 - cell(*j)? as i32).abs() < *c as i32
            }
            Predicate::And(l, r) => l.eval(row)? && r.eval(row)?,
        })
    }

    pub fn complexity(&self) -> u32 {
        match self {
            Predicate::Always | Predicate::Never => 1,
            Predicate::VarEqConst(..) | Predicate::VarLtConst(..) => 1 + 2 + 1,
            Predicate::VarLtVar(..) => 1 + 2 + 2,
            Predicate::ActEq(_) => 1 + 2,
            Predicate::AbsDiffLt(..) => 1 + 2 + 2 + 1,
            Predicate::And(l, r) => 1 + l.complexity() + r.complexity(),
        }
    }

    pub fn collect_inputs(&self, out: &mut BTreeSet<Input>) {
        match self {
            Predicate::Always | Predicate::Never => {}
            Predicate::VarEqConst(k, _) | Predicate::VarLtConst(k, _) => {
                out.insert(Input::Cell(*k));
            }
            Predicate::VarLtVar(k, j) | Predicate::AbsDiffLt(k, j, _) => {
                out.insert(Input::Cell(*k));
                out.insert(Input::Cell(*j));
            }
            Predicate::ActEq(a) => {
                out.insert(Input::Action(*a));
            }
            Predicate::And(l, r) => {
                l.collect_inputs(out);
                r.collect_inputs(out);
            }
        }
    }

    pub fn render_infix(&self) -> String {
        match self {
            Predicate::Always => "always".into(),
            Predicate::Never => "never".into(),
            Predicate::VarEqConst(k, c) => format!("s{k} == {c}"),
            Predicate::VarLtConst(k, c) => format!("s{k} < {c}"),
            Predicate::VarLtVar(k, j) => format!("s{k} < s{j}"),
            Predicate::ActEq(a) => format!("action == {a}"),
            Predicate::AbsDiffLt(k, j, c) => format!("|s{k} - s{j}| < {c}"),
            Predicate::And(l, r) => format!("{} and {}", l.render_infix(), r.render_infix()),
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Predicate::Always => write!(f, "(always)"),
            Predicate::Never => write!(f, "(never)"),
            Predicate::VarEqConst(k, c) => write!(f, "(eq (var s{k}) {c})"),
            Predicate::VarLtConst(k, c) => write!(f, "(lt (var s{k}) {c})"),
            Predicate::VarLtVar(k, j) => write!(f, "(lt (var s{k}) (var s{j}))"),
            Predicate::ActEq(a) => write!(f, "(act {a})"),
            Predicate::AbsDiffLt(k, j, c) => write!(f, "(near (var s{k}) (var s{j}) {c})"),
            Predicate::And(l, r) => write!(f, "(and {l} {r})"),
        }
    }
}

// ---------------------------------------------------------------------------
// S-expression parsing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        match ch {
            '(' | ')' => {
                if !cur.is_empty() {
                    tokens.push(std::mem::take(&mut cur));
                }
                tokens.push(ch.to_string());
            }
            c if c.is_whitespace() => {
                if !cur.is_empty() {
                    tokens.push(std::mem::take(&mut cur));
                }
            }
            c => cur.push(c),
        }
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    tokens
}

fn parse_sexp(tokens: &[String], pos: &mut usize) -> Result<Sexp, SymregError> {
    let err = |m: &str| SymregError::Parse(m.to_string());
    let tok = tokens.get(*pos).ok_or_else(|| err("unexpected end of input"))?;
    if tok == "(" {
        *pos += 1;
        let mut items = Vec::new();
        loop {
            match tokens.get(*pos) {
                Some(t) if t == ")" => {
                    *pos += 1;
                    return Ok(Sexp::List(items));
                }
                Some(_) => items.push(parse_sexp(tokens, pos)?),
                None => return Err(err("unbalanced parenthesis")),
            }
        }
    } else if tok == ")" {
        Err(err("unexpected ')'"))
    } else {
        *pos += 1;
        Ok(Sexp::Atom(tok.clone()))
    }
}

fn read_sexp(text: &str) -> Result<Sexp, SymregError> {
    let tokens = tokenize(text);
    let mut pos = 0;
    let sexp = parse_sexp(&tokens, &mut pos)?;
    if pos != tokens.len() {
        return Err(SymregError::Parse(format!("trailing input after expression: {text:?}")));
    }
    Ok(sexp)
}

fn atom_int<T: std::str::FromStr>(s: &Sexp, what: &str) -> Result<T, SymregError> {
    match s {
        Sexp::Atom(a) => a
            .parse::<T>()
            .map_err(|_| SymregError::Parse(format!("bad {what}: {a:?}"))),
        Sexp::List(_) => Err(SymregError::Parse(format!("expected {what}, found list"))),
    }
}

fn var_index(s: &Sexp) -> Result<usize, SymregError> {
    if let Sexp::List(items) = s {
        if items.len() == 2 && items[0] == Sexp::Atom("var".into()) {
            if let Sexp::Atom(name) = &items[1] {
                if let Some(idx) = name.strip_prefix('s') {
                    return idx
                        .parse::<usize>()
                        .map_err(|_| SymregError::Parse(format!("bad cell name {name:?}")));
                }
            }
        }
    }
    Err(SymregError::Parse("expected (var sK)".into()))
}

fn expr_from_sexp(s: &Sexp) -> Result<Expression, SymregError> {
    let err = |m: String| SymregError::Parse(m);
    match s {
        Sexp::Atom(_) => Ok(Expression::Const(atom_int(s, "constant")?)),
        Sexp::List(items) => {
            let head = match items.first() {
                Some(Sexp::Atom(h)) => h.as_str(),
                _ => return Err(err("empty expression".into())),
            };
            match (head, items.len()) {
                ("var", 2) => Ok(Expression::Var(var_index(s)?)),
                ("act", 2) => Ok(Expression::Act(atom_int(&items[1], "action id")?)),
                ("neg", 2) => Ok(Expression::neg(expr_from_sexp(&items[1])?)),
                ("add", 3) => Ok(Expression::add(
                    expr_from_sexp(&items[1])?,
                    expr_from_sexp(&items[2])?,
                )),
                ("sub", 3) => Ok(Expression::sub(
                    expr_from_sexp(&items[1])?,
                    expr_from_sexp(&items[2])?,
                )),
                ("mul", 3) => Ok(Expression::mul(
                    atom_int(&items[1], "factor")?,
                    expr_from_sexp(&items[2])?,
                )),
                _ => Err(err(format!("unknown expression form {head:?}"))),
            }
        }
    }
}

fn pred_from_sexp(s: &Sexp) -> Result<Predicate, SymregError> {
    let err = |m: String| SymregError::Parse(m);
    let items = match s {
        Sexp::List(items) => items,
        Sexp::Atom(a) => return Err(err(format!("expected predicate, found atom {a:?}"))),
    };
    let head = match items.first() {
        Some(Sexp::Atom(h)) => h.as_str(),
        _ => return Err(err("empty predicate".into())),
    };
    match (head, items.len()) {
        ("always", 1) => Ok(Predicate::Always),
        ("never", 1) => Ok(Predicate::Never),
        ("eq", 3) => Ok(Predicate::VarEqConst(
            var_index(&items[1])?,
            atom_int(&items[2], "constant")?,
        )),
        ("lt", 3) => {
            let k = var_index(&items[1])?;
            if let Ok(j) = var_index(&items[2]) {
                Ok(Predicate::VarLtVar(k, j))
            } else {
                Ok(Predicate::VarLtConst(k, atom_int(&items[2], "constant")?))
            }
        }
        ("act", 2) => Ok(Predicate::ActEq(atom_int(&items[1], "action id")?)),
        ("near", 4) => Ok(Predicate::AbsDiffLt(
            var_index(&items[1])?,
            var_index(&items[2])?,
            atom_int(&items[3], "constant")?,
        )),
        ("and", 3) => Ok(Predicate::and(
            pred_from_sexp(&items[1])?,
            pred_from_sexp(&items[2])?,
        )),
        _ => Err(err(format!("unknown predicate form {head:?}"))),
    }
}

/// Parse an expression from its s-expression text.
pub fn parse_expression(text: &str) -> Result<Expression, SymregError> {
    expr_from_sexp(&read_sexp(text)?)
}

/// Parse a predicate from its s-expression text.
pub fn parse_predicate(text: &str) -> Result<Predicate, SymregError> {
    pred_from_sexp(&read_sexp(text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row<'a>(cells: &'a [u8], action: u8) -> Row<'a> {
        Row::new(cells, action)
    }

    #[test]
    fn eval_is_mod_256() {
        let mut cells = [0u8; 32];
        cells[3] = 100;
        cells[5] = 2;
        let e = Expression::add(Expression::Var(3), Expression::Var(5));
        assert_eq!(e.eval(&row(&cells, 0)).unwrap(), 102);
        cells[3] = 255;
        assert_eq!(e.eval(&row(&cells, 0)).unwrap(), 1);
        let neg = Expression::neg(Expression::Var(5));
        assert_eq!(neg.eval(&row(&cells, 0)).unwrap(), 254);
    }

    #[test]
    fn predicate_eval() {
        let mut cells = [0u8; 32];
        cells[18] = 2;
        let p = Predicate::VarEqConst(18, 2);
        assert!(p.eval(&row(&cells, 0)).unwrap());
        cells[18] = 1;
        assert!(!p.eval(&row(&cells, 0)).unwrap());
        let near = Predicate::AbsDiffLt(3, 1, 7);
        cells[3] = 50;
        cells[1] = 55;
        assert!(near.eval(&row(&cells, 0)).unwrap());
        cells[1] = 60;
        assert!(!near.eval(&row(&cells, 0)).unwrap());
    }

    #[test]
    fn complexity_matches_node_costs() {
        assert_eq!(Expression::Const(14).complexity(), 1);
        assert_eq!(
            Expression::add(Expression::Var(3), Expression::Var(5)).complexity(),
            5
        );
        assert_eq!(
            Expression::sub(Expression::Var(3), Expression::Const(14)).complexity(),
            4
        );
        assert_eq!(Predicate::VarEqConst(18, 2).complexity(), 4);
        assert_eq!(Predicate::ActEq(1).complexity(), 3);
        assert_eq!(
            Predicate::and(Predicate::VarLtVar(3, 1), Predicate::ActEq(2)).complexity(),
            9
        );
    }

    #[test]
    fn unbound_variable_is_an_error() {
        let e = Expression::Var(99);
        let cells = [0u8; 4];
        assert!(matches!(
            e.eval(&row(&cells, 0)),
            Err(SymregError::UnboundVariable(99))
        ));
    }

    #[test]
    fn sexp_round_trip_examples() {
        for text in [
            "(add (var s3) (var s5))",
            "(sub (var s0) 4)",
            "(mul -4 (act 1))",
            "(neg (var s5))",
            "255",
        ] {
            let e = parse_expression(text).unwrap();
            assert_eq!(e.to_string(), text);
        }
        for text in [
            "(eq (var s18) 2)",
            "(lt (var s3) 27)",
            "(lt (var s3) (var s1))",
            "(and (lt (var s3) (var s1)) (act 2))",
            "(near (var s3) (var s0) 7)",
            "(always)",
        ] {
            let p = parse_predicate(text).unwrap();
            assert_eq!(p.to_string(), text);
        }
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(parse_expression("(add (var s3)").is_err());
        assert!(parse_expression("(frob 1 2)").is_err());
        assert!(parse_predicate("(eq (var s18))").is_err());
        assert!(parse_predicate("(eq (var s18) 2) junk").is_err());
    }
}
