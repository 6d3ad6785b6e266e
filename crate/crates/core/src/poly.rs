//! Exact multivariate polynomial arithmetic over arbitrary-precision rationals.
//!
//! Polynomials live in a fixed list of variables. For phase-space work the
//! convention is `2n` variables ordered `q1..qn, p1..pn`; the canonical Poisson
//! bracket then reads
//!
//! ```text
//! {f, g} = Σ_i  ∂f/∂q_i ∂g/∂p_i − ∂f/∂p_i ∂g/∂q_i
//! ```
//!
//! so that Hamilton's equations are `q̇_i = ∂h/∂p_i`, `ṗ_i = −∂h/∂q_i`.
//! Everything here is exact: coefficients are `BigRational`, no rounding ever
//! happens, and identity checks (`{σ,h} = 0`, bracket tables, Jacobi) are
//! decided by structural equality.
//!
//! Terms are kept in a map ordered by graded lexicographic monomial order
//! (total degree first, then dictionary order on the exponent tuple read from
//! the first variable), which fixes a canonical printed form.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};

/// Exact rational scalar: reduced form, positive denominator, canonical 0/1
/// are all maintained by the underlying implementation.
pub type Rational = num_rational::BigRational;

/// `n/1` as a [`Rational`].
pub fn rat(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// `n/d` as a [`Rational`]. Panics if `d == 0`.
pub fn ratio(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

/// The exact rational value of a finite `f64` (every finite float is one).
pub fn rational_from_f64(x: f64) -> Result<Rational> {
    Rational::from_float(x).ok_or_else(|| Error::NonFinite(format!("{x} is not a finite number")))
}

/// Exponent tuple of one term. Length equals the variable count of the
/// polynomial that owns it.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Monomial(pub Vec<u32>);

impl Monomial {
    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    fn one(nvars: usize) -> Self {
        Monomial(vec![0; nvars])
    }

    fn mul(&self, other: &Monomial) -> Monomial {
        Monomial(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }
}

/// Graded lexicographic order: total degree first, ties broken by dictionary
/// order on the exponent tuple (earlier variables more significant).
impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Sparse exact polynomial. Invariant: no stored coefficient is zero, and all
/// monomials have exactly `nvars` exponents.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Poly {
    nvars: usize,
    terms: BTreeMap<Monomial, Rational>,
}

impl Poly {
    pub fn zero(nvars: usize) -> Self {
        Poly {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: Rational) -> Self {
        let mut p = Poly::zero(nvars);
        if !c.is_zero() {
            p.terms.insert(Monomial::one(nvars), c);
        }
        p
    }

    pub fn one(nvars: usize) -> Self {
        Poly::constant(nvars, Rational::one())
    }

    /// The single variable `x_index`.
    pub fn var(nvars: usize, index: usize) -> Result<Self> {
        if index >= nvars {
            return Err(Error::DimensionMismatch(format!(
                "variable index {index} out of range for {nvars} variables"
            )));
        }
        let mut exps = vec![0; nvars];
        exps[index] = 1;
        let mut p = Poly::zero(nvars);
        p.terms.insert(Monomial(exps), Rational::one());
        Ok(p)
    }

    /// `c · Π x_i^{e_i}` from a sparse exponent list.
    pub fn term(nvars: usize, c: Rational, exps: &[(usize, u32)]) -> Result<Self> {
        let mut mono = vec![0u32; nvars];
        for &(i, e) in exps {
            if i >= nvars {
                return Err(Error::DimensionMismatch(format!(
                    "variable index {i} out of range for {nvars} variables"
                )));
            }
            mono[i] += e;
        }
        let mut p = Poly::zero(nvars);
        if !c.is_zero() {
            p.terms.insert(Monomial(mono), c);
        }
        Ok(p)
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    /// Degrees of freedom when the variables are a phase space `q1..qn,p1..pn`.
    pub fn n_dof(&self) -> Option<usize> {
        self.nvars.is_multiple_of(2).then_some(self.nvars / 2)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.keys().all(|m| m.degree() == 0)
    }

    /// The constant term (zero if absent).
    pub fn constant_term(&self) -> Rational {
        self.terms
            .get(&Monomial::one(self.nvars))
            .cloned()
            .unwrap_or_else(Rational::zero)
    }

    pub fn total_degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn coefficient(&self, mono: &Monomial) -> Rational {
        self.terms.get(mono).cloned().unwrap_or_else(Rational::zero)
    }

    /// Terms in ascending graded-lex order.
    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Rational)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    fn insert(&mut self, mono: Monomial, coeff: Rational) {
        if coeff.is_zero() {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(mono) {
            Entry::Vacant(e) => {
                e.insert(coeff);
            }
            Entry::Occupied(mut e) => {
                let sum = e.get() + coeff;
                if sum.is_zero() {
                    e.remove();
                } else {
                    *e.get_mut() = sum;
                }
            }
        }
    }

    fn check_same_vars(&self, other: &Poly) -> Result<()> {
        if self.nvars != other.nvars {
            return Err(Error::DimensionMismatch(format!(
                "polynomials over {} and {} variables",
                self.nvars, other.nvars
            )));
        }
        Ok(())
    }

    pub fn checked_add(&self, other: &Poly) -> Result<Poly> {
        self.check_same_vars(other)?;
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.insert(m.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn checked_sub(&self, other: &Poly) -> Result<Poly> {
        self.checked_add(&other.neg())
    }

    pub fn neg(&self) -> Poly {
        let mut out = Poly::zero(self.nvars);
        for (m, c) in &self.terms {
            out.terms.insert(m.clone(), -c.clone());
        }
        out
    }

    pub fn checked_mul(&self, other: &Poly) -> Result<Poly> {
        self.check_same_vars(other)?;
        let mut out = Poly::zero(self.nvars);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                out.insert(ma.mul(mb), ca * cb);
            }
        }
        Ok(out)
    }

    pub fn scale(&self, c: &Rational) -> Poly {
        if c.is_zero() {
            return Poly::zero(self.nvars);
        }
        let mut out = Poly::zero(self.nvars);
        for (m, k) in &self.terms {
            out.terms.insert(m.clone(), k * c);
        }
        out
    }

    pub fn pow(&self, e: u32) -> Poly {
        let mut out = Poly::one(self.nvars);
        for _ in 0..e {
            out = out.checked_mul(self).expect("same variable space");
        }
        out
    }

    /// Exact partial derivative with respect to variable `index`.
    pub fn partial(&self, index: usize) -> Result<Poly> {
        if index >= self.nvars {
            return Err(Error::DimensionMismatch(format!(
                "variable index {index} out of range for {} variables",
                self.nvars
            )));
        }
        let mut out = Poly::zero(self.nvars);
        for (m, c) in &self.terms {
            let e = m.0[index];
            if e == 0 {
                continue;
            }
            let mut exps = m.0.clone();
            exps[index] -= 1;
            out.insert(Monomial(exps), c * rat(e as i64));
        }
        Ok(out)
    }

    /// Exact evaluation at a rational point.
    pub fn eval_rational(&self, point: &[Rational]) -> Result<Rational> {
        if point.len() != self.nvars {
            return Err(Error::DimensionMismatch(format!(
                "point has {} coordinates, polynomial has {} variables",
                point.len(),
                self.nvars
            )));
        }
        let mut acc = Rational::zero();
        for (m, c) in &self.terms {
            let mut t = c.clone();
            for (x, &e) in point.iter().zip(&m.0) {
                for _ in 0..e {
                    t *= x;
                }
            }
            acc += t;
        }
        Ok(acc)
    }

    /// Floating-point evaluation (coefficients converted once per call; use
    /// [`Poly::compile`] inside hot loops).
    pub fn eval(&self, point: &[f64]) -> Result<f64> {
        if point.len() != self.nvars {
            return Err(Error::DimensionMismatch(format!(
                "point has {} coordinates, polynomial has {} variables",
                point.len(),
                self.nvars
            )));
        }
        Ok(self.compile().eval(point))
    }

    /// Substitute `images[i]` for variable `i`. All images must share one
    /// variable space; the result lives there.
    pub fn substitute(&self, images: &[Poly]) -> Result<Poly> {
        if images.len() != self.nvars {
            return Err(Error::DimensionMismatch(format!(
                "{} images for {} variables",
                images.len(),
                self.nvars
            )));
        }
        let target_vars = match images.first() {
            Some(p) => p.nvars,
            None => return Ok(Poly::constant(0, self.constant_term())),
        };
        for img in images {
            if img.nvars != target_vars {
                return Err(Error::DimensionMismatch(
                    "substitution images live in different variable spaces".into(),
                ));
            }
        }
        let mut acc = Poly::zero(target_vars);
        for (m, c) in &self.terms {
            let mut t = Poly::constant(target_vars, c.clone());
            for (img, &e) in images.iter().zip(&m.0) {
                if e > 0 {
                    t = t.checked_mul(&img.pow(e))?;
                }
            }
            acc = acc.checked_add(&t)?;
        }
        Ok(acc)
    }

    /// True when every term contains at least one of `vars` with a positive
    /// exponent, i.e. the polynomial lies in the monomial ideal they generate.
    pub fn in_ideal_of_vars(&self, vars: &[usize]) -> bool {
        self.terms
            .keys()
            .all(|m| vars.iter().any(|&v| v < self.nvars && m.0[v] > 0))
    }

    /// Compile to a float-coefficient form for fast repeated evaluation.
    pub fn compile(&self) -> CompiledPoly {
        CompiledPoly {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .map(|(m, c)| (m.0.clone(), rational_to_f64(c)))
                .collect(),
        }
    }

    /// Render with explicit variable names (`names.len() == nvars`).
    pub fn to_string_with(&self, names: &[&str]) -> String {
        assert_eq!(
            names.len(),
            self.nvars,
            "name list must match variable count"
        );
        if self.terms.is_empty() {
            return "0".to_string();
        }
        let mut out = String::new();
        // Leading term first: descending graded-lex.
        for (i, (m, c)) in self.terms.iter().rev().enumerate() {
            let neg = c.is_negative();
            let abs = c.abs();
            if i == 0 {
                if neg {
                    out.push('-');
                }
            } else {
                out.push_str(if neg { " - " } else { " + " });
            }
            let vars: Vec<String> = m
                .0
                .iter()
                .enumerate()
                .filter(|(_, &e)| e > 0)
                .map(|(v, &e)| {
                    if e == 1 {
                        names[v].to_string()
                    } else {
                        format!("{}^{}", names[v], e)
                    }
                })
                .collect();
            if vars.is_empty() {
                out.push_str(&abs.to_string());
            } else {
                if !abs.is_one() {
                    out.push_str(&abs.to_string());
                    out.push('*');
                }
                out.push_str(&vars.join("*"));
            }
        }
        out
    }

    /// Default display names: `q1..qn,p1..pn` when the variable count is even,
    /// `x1..xm` otherwise.
    pub fn default_names(nvars: usize) -> Vec<String> {
        if nvars.is_multiple_of(2) && nvars > 0 {
            let n = nvars / 2;
            (1..=n)
                .map(|i| format!("q{i}"))
                .chain((1..=n).map(|i| format!("p{i}")))
                .collect()
        } else {
            (1..=nvars).map(|i| format!("x{i}")).collect()
        }
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = Poly::default_names(self.nvars);
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        write!(f, "{}", self.to_string_with(&refs))
    }
}

macro_rules! arith_ops {
    ($trait:ident, $method:ident, $checked:ident) => {
        impl std::ops::$trait for &Poly {
            type Output = Poly;
            fn $method(self, rhs: &Poly) -> Poly {
                self.$checked(rhs).expect("polynomial variable spaces differ")
            }
        }
    };
}
arith_ops!(Add, add, checked_add);
arith_ops!(Sub, sub, checked_sub);
arith_ops!(Mul, mul, checked_mul);

fn rational_to_f64(r: &Rational) -> f64 {
    use num_traits::ToPrimitive;
    r.to_f64().unwrap_or(f64::NAN)
}

/// Float-coefficient copy of a [`Poly`] for hot-loop evaluation.
#[derive(Clone, Debug)]
pub struct CompiledPoly {
    nvars: usize,
    terms: Vec<(Vec<u32>, f64)>,
}

impl CompiledPoly {
    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        debug_assert_eq!(point.len(), self.nvars);
        let mut acc = 0.0;
        for (exps, c) in &self.terms {
            let mut t = *c;
            for (&x, &e) in point.iter().zip(exps) {
                if e > 0 {
                    t *= x.powi(e as i32);
                }
            }
            acc += t;
        }
        acc
    }
}

/// Canonical Poisson bracket of two polynomials on the same phase space.
///
/// Requires an even variable count `2n` with ordering `q1..qn,p1..pn`.
pub fn poisson_bracket(f: &Poly, g: &Poly) -> Result<Poly> {
    f.check_same_vars(g)?;
    let n = f.n_dof().ok_or_else(|| {
        Error::DimensionMismatch(format!(
            "Poisson bracket needs an even variable count, got {}",
            f.nvars
        ))
    })?;
    let mut acc = Poly::zero(f.nvars);
    for i in 0..n {
        let df_q = f.partial(i)?;
        let dg_p = g.partial(n + i)?;
        let df_p = f.partial(n + i)?;
        let dg_q = g.partial(i)?;
        acc = acc.checked_add(&df_q.checked_mul(&dg_p)?)?;
        acc = acc.checked_sub(&df_p.checked_mul(&dg_q)?)?;
    }
    Ok(acc)
}

/// `{f,{g,h}} + {g,{h,f}} + {h,{f,g}}` — identically zero; returned so tests
/// can assert exact vanishing on arbitrary inputs.
pub fn jacobi_identity_residual(f: &Poly, g: &Poly, h: &Poly) -> Result<Poly> {
    let a = poisson_bracket(f, &poisson_bracket(g, h)?)?;
    let b = poisson_bracket(g, &poisson_bracket(h, f)?)?;
    let c = poisson_bracket(h, &poisson_bracket(f, g)?)?;
    a.checked_add(&b)?.checked_add(&c)
}

/// All exponent tuples over `m` variables with total degree ≤ `max_degree`,
/// ascending graded-lex (constant first).
fn multi_indices(m: usize, max_degree: u32) -> Vec<Vec<u32>> {
    fn compositions(m: usize, d: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == m - 1 {
            prefix.push(d);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for e in 0..=d {
            prefix.push(e);
            compositions(m, d - e, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    let mut prefix = Vec::with_capacity(m);
    for d in 0..=max_degree {
        let start = out.len();
        compositions(m, d, &mut prefix, &mut out);
        out[start..].sort();
    }
    out
}

/// Solve `A x = b` exactly over the rationals; free variables are set to zero.
/// Returns `None` when the system is inconsistent.
fn solve_exact(mut a: Vec<Vec<Rational>>, mut b: Vec<Rational>) -> Option<Vec<Rational>> {
    let rows = a.len();
    let cols = if rows == 0 { 0 } else { a[0].len() };
    let mut pivot_cols = Vec::new();
    let mut row = 0;
    for col in 0..cols {
        let Some(p) = (row..rows).find(|&r| !a[r][col].is_zero()) else {
            continue;
        };
        a.swap(row, p);
        b.swap(row, p);
        let inv = a[row][col].recip();
        for c in col..cols {
            a[row][c] = &a[row][c] * &inv;
        }
        b[row] = &b[row] * &inv;
        for r in 0..rows {
            if r != row && !a[r][col].is_zero() {
                let factor = a[r][col].clone();
                for c in col..cols {
                    a[r][c] = &a[r][c] - &(&factor * &a[row][c]);
                }
                b[r] = &b[r] - &(&factor * &b[row]);
            }
        }
        pivot_cols.push((row, col));
        row += 1;
        if row == rows {
            break;
        }
    }
    // Rows below the pivot block must have zero right-hand side.
    if b.iter().skip(row).any(|v| !v.is_zero()) {
        return None;
    }
    let mut x = vec![Rational::zero(); cols];
    for &(r, c) in &pivot_cols {
        x[c] = b[r].clone();
    }
    Some(x)
}

/// Write `target` as a polynomial `F` in the given generators, exactly.
///
/// Enumerates generator monomials up to `max_degree`, expands each into the
/// base variables, and solves the resulting linear system over the rationals.
/// Returns `Ok(None)` when no representation exists at this degree cap —
/// absence is an answer, not an error. When a representation exists the
/// returned polynomial lives in `gens.len()` fresh variables (in generator
/// order) and substituting the generators back reproduces `target` exactly.
pub fn express_in_generators(
    target: &Poly,
    gens: &[Poly],
    max_degree: u32,
) -> Result<Option<Poly>> {
    if gens.is_empty() {
        return Err(Error::DimensionMismatch(
            "no generators supplied".into(),
        ));
    }
    for g in gens {
        target.check_same_vars(g)?;
    }
    let m = gens.len();
    let indices = multi_indices(m, max_degree);
    // Expand every candidate generator monomial into the base variables.
    let mut expansions = Vec::with_capacity(indices.len());
    for idx in &indices {
        let mut t = Poly::one(target.nvars);
        for (g, &e) in gens.iter().zip(idx) {
            if e > 0 {
                t = t.checked_mul(&g.pow(e))?;
            }
        }
        expansions.push(t);
    }
    // Row space: every base monomial appearing anywhere.
    let mut rows_set: std::collections::BTreeSet<Monomial> =
        target.terms.keys().cloned().collect();
    for e in &expansions {
        rows_set.extend(e.terms.keys().cloned());
    }
    let rows: Vec<Monomial> = rows_set.into_iter().collect();
    let a: Vec<Vec<Rational>> = rows
        .iter()
        .map(|mono| expansions.iter().map(|e| e.coefficient(mono)).collect())
        .collect();
    let b: Vec<Rational> = rows.iter().map(|mono| target.coefficient(mono)).collect();
    let Some(solution) = solve_exact(a, b) else {
        return Ok(None);
    };
    let mut f = Poly::zero(m);
    for (idx, c) in indices.into_iter().zip(solution) {
        f.insert(Monomial(idx), c);
    }
    Ok(Some(f))
}
