//! Polyhomogeneous index sets with exact rational exponents.
//!
//! Exponents are affine in two formal symbols: the dimension `n` and the
//! conic leading exponent `mu0`. They are compared after substituting a
//! [`Dims`] context.

use std::cmp::Ordering;
use std::fmt;

use num_rational::Rational64;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Exact rational scalar used for every exponent.
pub type Q = Rational64;

pub fn q(num: i64, den: i64) -> Q {
    Q::new(num, den)
}

pub fn qi(v: i64) -> Q {
    Q::from_integer(v)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhgError {
    #[error("empty index set: use the infinite-order sentinel instead")]
    EmptyIndexSet,
    #[error("cannot parse exponent `{input}`: {reason}")]
    Parse { input: String, reason: String },
    #[error("log power must be nonnegative, got {0}")]
    NegativeLogPower(i64),
    #[error("zero denominator in exponent")]
    ZeroDenominator,
}

/// Substitution context for the formal symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n: i64,
    pub mu0: Q,
}

impl Default for Dims {
    fn default() -> Self {
        Dims { n: 3, mu0: Q::zero() }
    }
}

impl Dims {
    pub fn new(n: i64) -> Self {
        Dims { n, mu0: Q::zero() }
    }
}

/// `c0 + cn*n + cmu*mu0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Exponent {
    pub c0: Q,
    pub cn: Q,
    pub cmu: Q,
}

impl Exponent {
    pub const fn zero() -> Self {
        Exponent {
            c0: Q::new_raw(0, 1),
            cn: Q::new_raw(0, 1),
            cmu: Q::new_raw(0, 1),
        }
    }

    pub fn constant(c: Q) -> Self {
        Exponent { c0: c, ..Self::zero() }
    }

    pub fn int(v: i64) -> Self {
        Self::constant(qi(v))
    }

    pub fn rat(num: i64, den: i64) -> Self {
        Self::constant(q(num, den))
    }

    /// `c0 + cn*n`
    pub fn affine_n(c0: Q, cn: Q) -> Self {
        Exponent { c0, cn, cmu: Q::zero() }
    }

    pub fn n() -> Self {
        Self::affine_n(Q::zero(), Q::one())
    }

    pub fn mu0() -> Self {
        Exponent { cmu: Q::one(), ..Self::zero() }
    }

    pub fn is_zero(&self) -> bool {
        self.c0.is_zero() && self.cn.is_zero() && self.cmu.is_zero()
    }

    pub fn is_constant(&self) -> bool {
        self.cn.is_zero() && self.cmu.is_zero()
    }

    pub fn eval(&self, d: &Dims) -> Q {
        self.c0 + self.cn * qi(d.n) + self.cmu * d.mu0
    }

    pub fn eval_f64(&self, d: &Dims) -> f64 {
        let v = self.eval(d);
        v.to_f64().unwrap_or(f64::NAN)
    }

    pub fn scale(&self, s: Q) -> Self {
        Exponent { c0: self.c0 * s, cn: self.cn * s, cmu: self.cmu * s }
    }

    /// Compare numerically under `d`, falling back to the symbolic key on ties.
    pub fn cmp_at(&self, other: &Self, d: &Dims) -> Ordering {
        self.eval(d).cmp(&other.eval(d)).then_with(|| self.cmp(other))
    }

    /// `other - self` is a nonnegative integer with identical symbolic parts.
    pub fn reaches(&self, other: &Self) -> bool {
        if self.cn != other.cn || self.cmu != other.cmu {
            return false;
        }
        let diff = other.c0 - self.c0;
        diff.is_integer() && !diff.is_negative()
    }

    pub fn parse(s: &str) -> Result<Self, PhgError> {
        Parser::new(s).parse()
    }
}

impl std::ops::Add for Exponent {
    type Output = Exponent;
    fn add(self, o: Exponent) -> Exponent {
        Exponent { c0: self.c0 + o.c0, cn: self.cn + o.cn, cmu: self.cmu + o.cmu }
    }
}

impl std::ops::Sub for Exponent {
    type Output = Exponent;
    fn sub(self, o: Exponent) -> Exponent {
        Exponent { c0: self.c0 - o.c0, cn: self.cn - o.cn, cmu: self.cmu - o.cmu }
    }
}

impl std::ops::Neg for Exponent {
    type Output = Exponent;
    fn neg(self) -> Exponent {
        self.scale(-Q::one())
    }
}

impl std::ops::AddAssign for Exponent {
    fn add_assign(&mut self, o: Exponent) {
        *self = *self + o;
    }
}

impl From<Q> for Exponent {
    fn from(c: Q) -> Self {
        Exponent::constant(c)
    }
}

impl From<i64> for Exponent {
    fn from(v: i64) -> Self {
        Exponent::int(v)
    }
}

fn fmt_coef(f: &mut fmt::Formatter<'_>, c: Q, sym: &str, first: bool) -> fmt::Result {
    if c.is_zero() {
        return Ok(());
    }
    let neg = c.is_negative();
    let a = c.abs();
    if first {
        if neg {
            write!(f, "-")?;
        }
    } else if neg {
        write!(f, "-")?;
    } else {
        write!(f, "+")?;
    }
    if a.is_one() {
        write!(f, "{sym}")
    } else if a.is_integer() {
        write!(f, "{}{sym}", a.numer())
    } else if a.numer().is_one() {
        write!(f, "{sym}/{}", a.denom())
    } else {
        write!(f, "{}{sym}/{}", a.numer(), a.denom())
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        if !self.cn.is_zero() {
            fmt_coef(f, self.cn, "n", true)?;
            first = false;
        }
        if !self.cmu.is_zero() {
            fmt_coef(f, self.cmu, "mu0", first)?;
            first = false;
        }
        if !self.c0.is_zero() || first {
            let c = self.c0;
            if !first && !c.is_negative() {
                write!(f, "+")?;
            }
            if c.is_integer() {
                write!(f, "{}", c.numer())?;
            } else {
                write!(f, "{}/{}", c.numer(), c.denom())?;
            }
        }
        Ok(())
    }
}

impl Serialize for Exponent {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        match v {
            serde_json::Value::String(s) => Exponent::parse(&s).map_err(serde::de::Error::custom),
            serde_json::Value::Number(n) => n
                .as_i64()
                .map(Exponent::int)
                .ok_or_else(|| serde::de::Error::custom("exponent must be an integer or a string")),
            _ => Err(serde::de::Error::custom("exponent must be an integer or a string")),
        }
    }
}

// Recursive-descent parser for affine expressions such as "-(n+3)/2+2".
struct Parser<'a> {
    src: &'a str,
    toks: Vec<Tok>,
    pos: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(i64),
    N,
    Mu,
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser { src, toks: Vec::new(), pos: 0 }
    }

    fn err(&self, reason: &str) -> PhgError {
        PhgError::Parse { input: self.src.to_string(), reason: reason.to_string() }
    }

    fn lex(&mut self) -> Result<(), PhgError> {
        let s = self.src.replace('\u{2212}', "-").replace("μ₀", "mu0").replace("μ0", "mu0");
        let chars: Vec<char> = s.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            match c {
                ' ' | '\t' => i += 1,
                '+' => {
                    self.toks.push(Tok::Plus);
                    i += 1
                }
                '-' => {
                    self.toks.push(Tok::Minus);
                    i += 1
                }
                '*' => {
                    self.toks.push(Tok::Star);
                    i += 1
                }
                '/' => {
                    self.toks.push(Tok::Slash);
                    i += 1
                }
                '(' => {
                    self.toks.push(Tok::LParen);
                    i += 1
                }
                ')' => {
                    self.toks.push(Tok::RParen);
                    i += 1
                }
                'n' => {
                    self.toks.push(Tok::N);
                    i += 1
                }
                'm' => {
                    let word: String = chars[i..].iter().take(3).collect();
                    if word == "mu0" {
                        self.toks.push(Tok::Mu);
                        i += 3;
                    } else {
                        return Err(self.err("unknown symbol"));
                    }
                }
                d if d.is_ascii_digit() => {
                    let mut v: i64 = 0;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        v = v
                            .checked_mul(10)
                            .and_then(|v| v.checked_add(chars[i] as i64 - '0' as i64))
                            .ok_or_else(|| self.err("integer overflow"))?;
                        i += 1;
                    }
                    // implicit product like "2n"
                    self.toks.push(Tok::Num(v));
                    if i < chars.len() && (chars[i] == 'n' || chars[i] == 'm' || chars[i] == '(') {
                        self.toks.push(Tok::Star);
                    }
                }
                _ => return Err(self.err("unexpected character")),
            }
        }
        Ok(())
    }

    fn parse(mut self) -> Result<Exponent, PhgError> {
        self.lex()?;
        if self.toks.is_empty() {
            return Err(self.err("empty expression"));
        }
        let e = self.expr()?;
        if self.pos != self.toks.len() {
            return Err(self.err("trailing input"));
        }
        Ok(e)
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn expr(&mut self) -> Result<Exponent, PhgError> {
        let mut acc = self.term()?;
        while let Some(t) = self.peek() {
            match t {
                Tok::Plus => {
                    self.pos += 1;
                    acc += self.term()?;
                }
                Tok::Minus => {
                    self.pos += 1;
                    acc = acc - self.term()?;
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<Exponent, PhgError> {
        let mut acc = self.factor()?;
        while let Some(t) = self.peek() {
            match t {
                Tok::Star => {
                    self.pos += 1;
                    let r = self.factor()?;
                    acc = if acc.is_constant() {
                        r.scale(acc.c0)
                    } else if r.is_constant() {
                        acc.scale(r.c0)
                    } else {
                        return Err(self.err("non-affine product"));
                    };
                }
                Tok::Slash => {
                    self.pos += 1;
                    let r = self.factor()?;
                    if !r.is_constant() {
                        return Err(self.err("division by a symbol"));
                    }
                    if r.c0.is_zero() {
                        return Err(PhgError::ZeroDenominator);
                    }
                    acc = acc.scale(r.c0.recip());
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<Exponent, PhgError> {
        let t = self.peek().cloned().ok_or_else(|| self.err("unexpected end"))?;
        self.pos += 1;
        match t {
            Tok::Num(v) => Ok(Exponent::int(v)),
            Tok::N => Ok(Exponent::n()),
            Tok::Mu => Ok(Exponent::mu0()),
            Tok::Minus => Ok(-self.factor()?),
            Tok::Plus => self.factor(),
            Tok::LParen => {
                let e = self.expr()?;
                if self.peek() != Some(&Tok::RParen) {
                    return Err(self.err("missing `)`"));
                }
                self.pos += 1;
                Ok(e)
            }
            _ => Err(self.err("unexpected token")),
        }
    }
}

/// One generator `(alpha, p)`: contributes `x^(alpha+k) (log x)^p`, k ≥ 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexTerm {
    pub alpha: Exponent,
    pub p: u32,
}

impl IndexTerm {
    pub fn new(alpha: impl Into<Exponent>, p: u32) -> Self {
        IndexTerm { alpha: alpha.into(), p }
    }

    pub fn rat(num: i64, den: i64, p: u32) -> Self {
        IndexTerm { alpha: Exponent::rat(num, den), p }
    }

    /// True when `other` is generated from `self` by integer steps.
    pub fn dominates(&self, other: &IndexTerm) -> bool {
        self.p == other.p && self.alpha.reaches(&other.alpha)
    }

    /// Leading-order comparison: smaller alpha first, then larger p.
    pub fn cmp_leading(&self, other: &IndexTerm, d: &Dims) -> Ordering {
        self.alpha
            .eval(d)
            .cmp(&other.alpha.eval(d))
            .then_with(|| other.p.cmp(&self.p))
            .then_with(|| self.alpha.cmp(&other.alpha))
    }
}

impl fmt::Display for IndexTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.alpha, self.p)
    }
}

// JSON: [num, den, p] for plain rationals, [expr, p] otherwise.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TermRepr {
    Rat(i64, i64, u32),
    Sym(String, u32),
}

impl Serialize for IndexTerm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let r = if self.alpha.is_constant() {
            TermRepr::Rat(*self.alpha.c0.numer(), *self.alpha.c0.denom(), self.p)
        } else {
            TermRepr::Sym(self.alpha.to_string(), self.p)
        };
        r.serialize(s)
    }
}

impl<'de> Deserialize<'de> for IndexTerm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match TermRepr::deserialize(d)? {
            TermRepr::Rat(nu, de, p) => {
                if de == 0 {
                    return Err(serde::de::Error::custom(PhgError::ZeroDenominator));
                }
                Ok(IndexTerm::rat(nu, de, p))
            }
            TermRepr::Sym(s, p) => {
                let a = Exponent::parse(&s).map_err(serde::de::Error::custom)?;
                Ok(IndexTerm { alpha: a, p })
            }
        }
    }
}

/// Finite set of generators with step 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct IndexSet {
    pub terms: Vec<IndexTerm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

impl IndexSet {
    pub fn new(terms: impl IntoIterator<Item = IndexTerm>) -> Self {
        let mut s = IndexSet { terms: terms.into_iter().collect(), name: None };
        s.canonicalize();
        s
    }

    pub fn empty() -> Self {
        IndexSet::default()
    }

    /// `{(alpha, 0)}`
    pub fn single(alpha: impl Into<Exponent>) -> Self {
        IndexSet::new([IndexTerm::new(alpha, 0)])
    }

    /// The additive identity `{(0,0)}`.
    pub fn unit() -> Self {
        IndexSet::single(0)
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = Some(name.to_string());
        self
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Drop duplicates and step-reachable generators, then sort.
    pub fn canonicalize(&mut self) {
        self.terms.sort();
        self.terms.dedup();
        let all = self.terms.clone();
        self.terms
            .retain(|t| !all.iter().any(|o| o != t && o.dominates(t)));
    }

    pub fn is_canonical(&self) -> bool {
        let mut c = self.clone();
        c.canonicalize();
        c.terms == self.terms
    }

    pub fn sum(&self, other: &IndexSet) -> IndexSet {
        let mut out = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                out.push(IndexTerm { alpha: a.alpha + b.alpha, p: a.p + b.p });
            }
        }
        IndexSet::new(out)
    }

    pub fn union(&self, other: &IndexSet) -> IndexSet {
        IndexSet::new(self.terms.iter().chain(other.terms.iter()).copied())
    }

    pub fn shift(&self, c: impl Into<Exponent>) -> IndexSet {
        let c = c.into();
        let mut s = IndexSet::new(self.terms.iter().map(|t| IndexTerm { alpha: t.alpha + c, p: t.p }));
        s.name = self.name.clone();
        s
    }

    pub fn leading_order(&self, d: &Dims) -> Result<IndexTerm, PhgError> {
        self.terms
            .iter()
            .min_by(|a, b| a.cmp_leading(b, d))
            .copied()
            .ok_or(PhgError::EmptyIndexSet)
    }

    /// Membership of `(alpha, p)` in the generated set.
    pub fn contains(&self, t: &IndexTerm) -> bool {
        self.terms.iter().any(|b| b.dominates(t))
    }

    /// Generated terms with numeric exponent `<= bound` under `d`.
    pub fn enumerate_below(&self, bound: Q, d: &Dims) -> Vec<IndexTerm> {
        let mut out = Vec::new();
        for b in &self.terms {
            let mut k = 0;
            loop {
                let a = b.alpha + Exponent::int(k);
                if a.eval(d) > bound {
                    break;
                }
                out.push(IndexTerm { alpha: a, p: b.p });
                k += 1;
            }
        }
        out.sort_by(|a, b| a.cmp_leading(b, d));
        out.dedup();
        out
    }
}

impl fmt::Display for IndexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{t}")?;
        }
        write!(f, "}}")
    }
}

/// An index set or the infinite-order sentinel.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Order {
    Finite(IndexSet),
    #[serde(with = "infinite_repr")]
    Infinite,
}

mod infinite_repr {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("inf")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let s = String::deserialize(d)?;
        match s.as_str() {
            "inf" | "infinity" | "∞" => Ok(()),
            _ => Err(serde::de::Error::custom("expected \"inf\"")),
        }
    }
}

impl Order {
    pub fn single(alpha: impl Into<Exponent>) -> Self {
        Order::Finite(IndexSet::single(alpha))
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Order::Infinite)
    }

    pub fn as_set(&self) -> Option<&IndexSet> {
        match self {
            Order::Finite(s) => Some(s),
            Order::Infinite => None,
        }
    }

    /// Infinite absorbs.
    pub fn sum(&self, other: &Order) -> Order {
        match (self, other) {
            (Order::Finite(a), Order::Finite(b)) => Order::Finite(a.sum(b)),
            _ => Order::Infinite,
        }
    }

    /// Infinite is the identity.
    pub fn union(&self, other: &Order) -> Order {
        match (self, other) {
            (Order::Finite(a), Order::Finite(b)) => Order::Finite(a.union(b)),
            (Order::Infinite, x) | (x, Order::Infinite) => x.clone(),
        }
    }

    pub fn shift(&self, c: impl Into<Exponent>) -> Order {
        match self {
            Order::Finite(a) => Order::Finite(a.shift(c)),
            Order::Infinite => Order::Infinite,
        }
    }

    /// `None` for the sentinel.
    pub fn leading(&self, d: &Dims) -> Result<Option<IndexTerm>, PhgError> {
        match self {
            Order::Finite(s) => s.leading_order(d).map(Some),
            Order::Infinite => Ok(None),
        }
    }

    /// Leading exponent, or `None` at infinity.
    pub fn leading_alpha(&self, d: &Dims) -> Option<Exponent> {
        self.leading(d).ok().flatten().map(|t| t.alpha)
    }
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Order::Finite(s) => write!(f, "{s}"),
            Order::Infinite => write!(f, "inf"),
        }
    }
}
