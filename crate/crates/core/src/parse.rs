//! Text form of exact polynomials.
//!
//! Grammar (whitespace insensitive):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := ('+' | '-')* power
//! power  := atom ('^' exponent)?
//! atom   := integer | name | '(' expr ')'
//! ```
//!
//! Integers are unsigned digit runs; rational constants are written as
//! divisions (`3/2`). A divisor must evaluate to a nonzero constant.
//! Exponents must be non-negative integers. Names resolve through a
//! [`SymbolTable`]; the printed form of a [`Poly`] parses back to itself.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::poly::{rat, Poly};

/// Maps variable names to variable indices. Several names may share an index
/// (aliases); the index order is the polynomial variable order.
#[derive(Clone, Debug)]
pub struct SymbolTable {
    nvars: usize,
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl SymbolTable {
    /// One name per variable, in variable order.
    pub fn new(names: &[&str]) -> Result<Self> {
        let mut index = HashMap::new();
        for (i, n) in names.iter().enumerate() {
            if index.insert(n.to_string(), i).is_some() {
                return Err(Error::DimensionMismatch(format!(
                    "duplicate symbol `{n}`"
                )));
            }
        }
        Ok(SymbolTable {
            nvars: names.len(),
            names: names.iter().map(|s| s.to_string()).collect(),
            index,
        })
    }

    /// Canonical table for `n` degrees of freedom: variables `q1..qn,p1..pn`,
    /// plus the aliases `q,p` for `n = 1` and `x,y,px,py` for `n = 2`.
    pub fn phase_space(n: usize) -> Self {
        let names: Vec<String> = (1..=n)
            .map(|i| format!("q{i}"))
            .chain((1..=n).map(|i| format!("p{i}")))
            .collect();
        let mut index: HashMap<String, usize> =
            names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        if n == 1 {
            index.insert("q".into(), 0);
            index.insert("p".into(), 1);
        }
        if n == 2 {
            index.insert("x".into(), 0);
            index.insert("y".into(), 1);
            index.insert("px".into(), 2);
            index.insert("py".into(), 3);
        }
        SymbolTable {
            nvars: 2 * n,
            names,
            index,
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    /// Primary display names in variable order.
    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn lookup(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
    table: &'a SymbolTable,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let b = self.peek()?;
        self.pos += 1;
        Some(b)
    }

    fn error(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            position: self.pos,
            message: message.into(),
        }
    }

    fn expr(&mut self) -> Result<Poly> {
        let mut acc = self.term()?;
        while let Some(op) = self.peek() {
            match op {
                b'+' => {
                    self.pos += 1;
                    acc = acc.checked_add(&self.term()?)?;
                }
                b'-' => {
                    self.pos += 1;
                    acc = acc.checked_sub(&self.term()?)?;
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<Poly> {
        let mut acc = self.unary()?;
        while let Some(op) = self.peek() {
            match op {
                b'*' => {
                    self.pos += 1;
                    acc = acc.checked_mul(&self.unary()?)?;
                }
                b'/' => {
                    let at = self.pos;
                    self.pos += 1;
                    let divisor = self.unary()?;
                    if !divisor.is_constant() || divisor.is_zero() {
                        return Err(Error::BadDivisor { position: at });
                    }
                    acc = acc.scale(&divisor.constant_term().recip());
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Poly> {
        let mut negate = false;
        while let Some(op) = self.peek() {
            match op {
                b'+' => self.pos += 1,
                b'-' => {
                    self.pos += 1;
                    negate = !negate;
                }
                _ => break,
            }
        }
        let p = self.power()?;
        Ok(if negate { p.neg() } else { p })
    }

    fn power(&mut self) -> Result<Poly> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let at = self.pos;
            if self.peek() == Some(b'-') {
                return Err(Error::NegativeExponent { position: at });
            }
            let e = self.integer()? as u32;
            return Ok(base.pow(e));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Poly> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.bump() != Some(b')') {
                    return Err(self.error("expected `)`"));
                }
                Ok(inner)
            }
            Some(b) if b.is_ascii_digit() => {
                let n = self.integer()?;
                Ok(Poly::constant(self.table.nvars(), rat(n)))
            }
            Some(b) if b.is_ascii_alphabetic() => {
                let at = self.pos;
                let name = self.identifier();
                let idx = self
                    .table
                    .lookup(&name)
                    .ok_or(Error::UnknownSymbol {
                        name,
                        position: at,
                    })?;
                Poly::var(self.table.nvars(), idx)
            }
            Some(_) => Err(self.error("expected a number, name, or `(`")),
            None => Err(self.error("unexpected end of input")),
        }
    }

    fn integer(&mut self) -> Result<i64> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error("expected an integer"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("digits are ascii")
            .parse()
            .map_err(|_| self.error("integer literal too large"))
    }

    fn identifier(&mut self) -> String {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.bytes.len()
            && (self.bytes[self.pos].is_ascii_alphanumeric() || self.bytes[self.pos] == b'_')
        {
            self.pos += 1;
        }
        String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned()
    }
}

/// Parse `input` into an exact polynomial over the table's variables.
pub fn parse_poly(input: &str, table: &SymbolTable) -> Result<Poly> {
    let mut parser = Parser {
        bytes: input.as_bytes(),
        pos: 0,
        table,
    };
    let p = parser.expr()?;
    parser.skip_ws();
    if parser.pos != parser.bytes.len() {
        return Err(parser.error("trailing input"));
    }
    Ok(p)
}
