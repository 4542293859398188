//! Finite joint distributions with exact (rational) or 28-digit decimal
//! arithmetic.
//!
//! A [`DiscreteJoint`] is a dense table over named variables, each with an
//! ordered support. The first variable is the most significant digit of a
//! cell index, so iterating cells enumerates assignments in lexicographic
//! order of level indices.

use std::fmt;
use std::ops::{Add, Div, Mul, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rust_decimal::Decimal;
use serde_json::{json, Value};
use thiserror::Error;

/// Exact probability.
pub type Prob = BigRational;

/// Upper bound on the number of cells of a dense table.
pub const MAX_CELLS: usize = 1 << 24;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DistError {
    #[error("unknown variable {0}")]
    UnknownVariable(String),
    #[error("variable {0} listed twice")]
    DuplicateVariable(String),
    #[error("variable {0} has an empty support")]
    EmptySupport(String),
    #[error("level {level} out of range for {var}")]
    LevelOutOfRange { var: String, level: u32 },
    #[error("table would have {cells} cells, above the limit of {MAX_CELLS}")]
    SizeLimit { cells: u128 },
    #[error("table has {got} entries, expected {expected}")]
    TableSize { expected: usize, got: usize },
    #[error("negative probability {0}")]
    NegativeMass(String),
    #[error("total probability is {0}, expected 1")]
    MassNotOne(String),
    #[error("conditioning event {given} has zero probability")]
    ZeroConditioningMass { given: String },
    #[error("assignment {0} listed twice")]
    DuplicateRow(String),
    #[error("at {assignment}: {source}")]
    AtAssignment { assignment: String, source: Box<DistError> },
    #[error("{0}")]
    Parse(String),
}

/// Index into a variable's ordered support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Level(pub u32);

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backend {
    #[default]
    Rational,
    Decimal,
}

impl Backend {
    /// Reads `SWID_BACKEND` (`rational` or `decimal`); rational when unset.
    pub fn from_env() -> Result<Self, DistError> {
        match std::env::var("SWID_BACKEND") {
            Ok(v) => v.parse(),
            Err(_) => Ok(Self::Rational),
        }
    }
}

impl FromStr for Backend {
    type Err = DistError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rational" | "" => Ok(Self::Rational),
            "decimal" => Ok(Self::Decimal),
            other => Err(DistError::Parse(format!("unknown backend {other:?}"))),
        }
    }
}

/// Arithmetic a joint table can be evaluated in.
pub trait Scalar:
    Clone
    + fmt::Debug
    + PartialEq
    + PartialOrd
    + Send
    + Sync
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + 'static
{
    const BACKEND: Backend;
    fn from_prob(p: &Prob) -> Self;
    fn to_f64(&self) -> f64;
    fn render(&self) -> String;
    /// Whether a table total is close enough to one for this backend.
    fn is_unit_mass(&self) -> bool;

    fn abs_diff(&self, other: &Self) -> Self {
        if self >= other {
            self.clone() - other.clone()
        } else {
            other.clone() - self.clone()
        }
    }
}

impl Scalar for BigRational {
    const BACKEND: Backend = Backend::Rational;

    fn from_prob(p: &Prob) -> Self {
        p.clone()
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn render(&self) -> String {
        self.to_string()
    }

    fn is_unit_mass(&self) -> bool {
        self.is_one()
    }
}

impl Scalar for Decimal {
    const BACKEND: Backend = Backend::Decimal;

    fn from_prob(p: &Prob) -> Self {
        decimal_from_ratio(p)
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn render(&self) -> String {
        self.normalize().to_string()
    }

    fn is_unit_mass(&self) -> bool {
        (*self - Decimal::ONE).abs() < Decimal::new(1, 12)
    }
}

/// Rounds `p` to the nearest multiple of 10^-k, with k the largest scale that
/// keeps the mantissa within 96 bits.
fn decimal_from_ratio(p: &Prob) -> Decimal {
    let int_part = (p.numer() / p.denom()).abs();
    let digits = int_part.to_string().len() as u32;
    let scale = 28u32.saturating_sub(digits.saturating_sub(1)).min(28);
    let scaled = p * BigRational::from_integer(BigInt::from(10u8).pow(scale));
    let rounded = scaled.round().to_integer();
    match rounded.to_i128() {
        Some(m) if m.unsigned_abs() < (1u128 << 96) => Decimal::from_i128_with_scale(m, scale),
        _ => Decimal::from_f64_retain(ToPrimitive::to_f64(p).unwrap_or(0.0)).unwrap_or_default(),
    }
}

/// Parses `num/den`, an integer, or a decimal such as `0.05`, exactly.
pub fn parse_prob(s: &str) -> Result<Prob, DistError> {
    let bad = || DistError::Parse(format!("invalid probability {s:?}"));
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: BigInt = d.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(n, d));
    }
    if let Some((int, frac)) = s.split_once('.') {
        if frac.is_empty() || !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let int = if int.is_empty() { "0" } else { int };
        let whole: BigInt = format!("{int}{frac}").parse().map_err(|_| bad())?;
        let den = BigInt::from(10u8).pow(frac.len() as u32);
        return Ok(BigRational::new(whole, den));
    }
    let n: BigInt = s.parse().map_err(|_| bad())?;
    Ok(BigRational::from_integer(n))
}

pub fn ratio(num: i64, den: i64) -> Prob {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointVar {
    pub name: String,
    pub support: Vec<String>,
}

impl JointVar {
    pub fn new(name: impl Into<String>, support: &[&str]) -> Self {
        Self {
            name: name.into(),
            support: support.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn binary(name: impl Into<String>) -> Self {
        Self::new(name, &["0", "1"])
    }

    pub fn size(&self) -> usize {
        self.support.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Atom {
    Eq(Level),
    /// At or below the level in support order.
    Le(Level),
}

impl Atom {
    pub fn accepts(&self, level: u32) -> bool {
        match *self {
            Atom::Eq(l) => level == l.0,
            Atom::Le(l) => level <= l.0,
        }
    }

    fn intersect(self, other: Atom) -> Option<Atom> {
        use Atom::*;
        match (self, other) {
            (Eq(a), Eq(b)) => (a == b).then_some(Eq(a)),
            (Eq(a), Le(b)) | (Le(b), Eq(a)) => (a <= b).then_some(Eq(a)),
            (Le(a), Le(b)) => Some(Le(a.min(b))),
        }
    }
}

/// A conjunction of atoms, at most one per variable.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Event {
    atoms: Vec<(String, Atom)>,
    impossible: bool,
}

impl Event {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, var: impl Into<String>, atom: Atom) -> Self {
        self.add(var.into(), atom);
        self
    }

    pub fn with_eq(self, var: impl Into<String>, level: Level) -> Self {
        self.with(var, Atom::Eq(level))
    }

    pub fn with_le(self, var: impl Into<String>, level: Level) -> Self {
        self.with(var, Atom::Le(level))
    }

    fn add(&mut self, var: String, atom: Atom) {
        match self.atoms.iter_mut().find(|(v, _)| *v == var) {
            Some((_, existing)) => match existing.intersect(atom) {
                Some(a) => *existing = a,
                None => self.impossible = true,
            },
            None => self.atoms.push((var, atom)),
        }
    }

    pub fn and(&self, other: &Event) -> Event {
        let mut out = self.clone();
        out.impossible |= other.impossible;
        for (v, a) in &other.atoms {
            out.add(v.clone(), *a);
        }
        out
    }

    pub fn atoms(&self) -> &[(String, Atom)] {
        &self.atoms
    }

    pub fn is_impossible(&self) -> bool {
        self.impossible
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.impossible {
            return f.write_str("∅");
        }
        if self.atoms.is_empty() {
            return f.write_str("Ω");
        }
        let parts: Vec<String> = self
            .atoms
            .iter()
            .map(|(v, a)| match a {
                Atom::Eq(l) => format!("{v}={}", l.0),
                Atom::Le(l) => format!("{v}<={}", l.0),
            })
            .collect();
        f.write_str(&parts.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteJoint<T = Prob> {
    vars: Vec<JointVar>,
    strides: Vec<usize>,
    table: Vec<T>,
}

pub(crate) fn cell_count(vars: &[JointVar]) -> Result<usize, DistError> {
    let mut cells: u128 = 1;
    for v in vars {
        if v.support.is_empty() {
            return Err(DistError::EmptySupport(v.name.clone()));
        }
        cells = cells.saturating_mul(v.size() as u128);
    }
    if cells > MAX_CELLS as u128 {
        return Err(DistError::SizeLimit { cells });
    }
    Ok(cells as usize)
}

fn strides_of(vars: &[JointVar]) -> Vec<usize> {
    let mut strides = vec![1; vars.len()];
    for i in (0..vars.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * vars[i + 1].size();
    }
    strides
}

impl<T: Scalar> DiscreteJoint<T> {
    /// Validates a dense table laid out in cell order.
    pub fn new(vars: Vec<JointVar>, table: Vec<T>) -> Result<Self, DistError> {
        let cells = cell_count(&vars)?;
        for (i, v) in vars.iter().enumerate() {
            if vars[..i].iter().any(|w| w.name == v.name) {
                return Err(DistError::DuplicateVariable(v.name.clone()));
            }
        }
        if table.len() != cells {
            return Err(DistError::TableSize {
                expected: cells,
                got: table.len(),
            });
        }
        let mut total = T::zero();
        for p in &table {
            if *p < T::zero() {
                return Err(DistError::NegativeMass(p.render()));
            }
            total = total + p.clone();
        }
        if !total.is_unit_mass() {
            return Err(DistError::MassNotOne(total.render()));
        }
        let strides = strides_of(&vars);
        Ok(Self { vars, strides, table })
    }

    /// Builds a table from `(levels, mass)` rows; unlisted cells get zero.
    pub fn from_rows<I>(vars: Vec<JointVar>, rows: I) -> Result<Self, DistError>
    where
        I: IntoIterator<Item = (Vec<u32>, T)>,
    {
        let cells = cell_count(&vars)?;
        let strides = strides_of(&vars);
        let mut table = vec![T::zero(); cells];
        let mut seen = vec![false; cells];
        for (levels, p) in rows {
            if levels.len() != vars.len() {
                return Err(DistError::TableSize {
                    expected: vars.len(),
                    got: levels.len(),
                });
            }
            let mut cell = 0;
            for ((l, v), s) in levels.iter().zip(&vars).zip(&strides) {
                if *l as usize >= v.size() {
                    return Err(DistError::LevelOutOfRange {
                        var: v.name.clone(),
                        level: *l,
                    });
                }
                cell += *l as usize * s;
            }
            if seen[cell] {
                return Err(DistError::DuplicateRow(format!("{levels:?}")));
            }
            seen[cell] = true;
            table[cell] = p;
        }
        Self::new(vars, table)
    }

    /// Point mass on one assignment.
    pub fn point(vars: Vec<JointVar>, levels: Vec<u32>) -> Result<Self, DistError> {
        Self::from_rows(vars, [(levels, T::one())])
    }

    pub fn vars(&self) -> &[JointVar] {
        &self.vars
    }

    pub fn table(&self) -> &[T] {
        &self.table
    }

    pub fn var_index(&self, name: &str) -> Result<usize, DistError> {
        self.vars
            .iter()
            .position(|v| v.name == name)
            .ok_or_else(|| DistError::UnknownVariable(name.to_string()))
    }

    pub fn var(&self, name: &str) -> Result<&JointVar, DistError> {
        Ok(&self.vars[self.var_index(name)?])
    }

    pub fn cell_count(&self) -> usize {
        self.table.len()
    }

    #[inline]
    pub fn level_at(&self, cell: usize, var: usize) -> u32 {
        ((cell / self.strides[var]) % self.vars[var].size()) as u32
    }

    pub fn decode(&self, cell: usize) -> Vec<u32> {
        (0..self.vars.len()).map(|i| self.level_at(cell, i)).collect()
    }

    pub fn encode(&self, levels: &[u32]) -> usize {
        levels.iter().zip(&self.strides).map(|(l, s)| *l as usize * s).sum()
    }

    pub(crate) fn resolve(&self, event: &Event) -> Result<Vec<(usize, Atom)>, DistError> {
        event
            .atoms()
            .iter()
            .map(|(name, atom)| {
                let i = self.var_index(name)?;
                let l = match atom {
                    Atom::Eq(l) | Atom::Le(l) => l.0,
                };
                if l as usize >= self.vars[i].size() {
                    return Err(DistError::LevelOutOfRange {
                        var: name.clone(),
                        level: l,
                    });
                }
                Ok((i, *atom))
            })
            .collect()
    }

    pub(crate) fn mass_where(&self, atoms: &[(usize, Atom)]) -> T {
        let mut total = T::zero();
        for (cell, p) in self.table.iter().enumerate() {
            if p.is_zero() {
                continue;
            }
            if atoms.iter().all(|(i, a)| a.accepts(self.level_at(cell, *i))) {
                total = total + p.clone();
            }
        }
        total
    }

    pub fn prob(&self, event: &Event) -> Result<T, DistError> {
        let atoms = self.resolve(event)?;
        if event.is_impossible() {
            return Ok(T::zero());
        }
        Ok(self.mass_where(&atoms))
    }

    pub fn conditional(&self, event: &Event, given: &Event) -> Result<T, DistError> {
        let denom = self.prob(given)?;
        if denom.is_zero() {
            return Err(DistError::ZeroConditioningMass {
                given: given.to_string(),
            });
        }
        let num = self.prob(&event.and(given))?;
        Ok(num / denom)
    }

    /// `Pr[y_var ≤ y_level | given]`.
    pub fn cond_cdf(&self, y_var: &str, y_level: Level, given: &Event) -> Result<T, DistError> {
        self.conditional(&Event::new().with_le(y_var, y_level), given)
    }

    /// `Σ_x f(x) · inner(x)` over positive-mass assignments `x` of `outer`,
    /// with `inner` receiving the levels of `outer` in the order given.
    pub fn expect_over<F>(&self, outer: &[&str], mut inner: F) -> Result<T, DistError>
    where
        F: FnMut(&[Level]) -> Result<T, DistError>,
    {
        let marg = self.marginal(outer)?;
        let mut total = T::zero();
        for (cell, p) in marg.table.iter().enumerate() {
            if p.is_zero() {
                continue;
            }
            let levels: Vec<Level> = marg.decode(cell).into_iter().map(Level).collect();
            let value = inner(&levels).map_err(|e| DistError::AtAssignment {
                assignment: marg.describe(cell),
                source: Box::new(e),
            })?;
            total = total + p.clone() * value;
        }
        Ok(total)
    }

    /// `X=0, R=1` style rendering of a cell.
    pub fn describe(&self, cell: usize) -> String {
        self.vars
            .iter()
            .enumerate()
            .map(|(i, v)| format!("{}={}", v.name, v.support[self.level_at(cell, i) as usize]))
            .collect::<Vec<_>>()
            .join(", ")
    }

    /// Event fixing each named variable to the given level.
    pub fn assignment_event(names: &[&str], levels: &[Level]) -> Event {
        names
            .iter()
            .zip(levels)
            .fold(Event::new(), |e, (n, l)| e.with_eq(*n, *l))
    }

    pub fn marginal(&self, names: &[&str]) -> Result<DiscreteJoint<T>, DistError> {
        let idx: Vec<usize> = names.iter().map(|n| self.var_index(n)).collect::<Result<_, _>>()?;
        for (k, i) in idx.iter().enumerate() {
            if idx[..k].contains(i) {
                return Err(DistError::DuplicateVariable(names[k].to_string()));
            }
        }
        let vars: Vec<JointVar> = idx.iter().map(|&i| self.vars[i].clone()).collect();
        let strides = strides_of(&vars);
        let mut table = vec![T::zero(); cell_count(&vars)?];
        for (cell, p) in self.table.iter().enumerate() {
            if p.is_zero() {
                continue;
            }
            let target: usize = idx
                .iter()
                .zip(&strides)
                .map(|(&i, s)| self.level_at(cell, i) as usize * s)
                .sum();
            table[target] = table[target].clone() + p.clone();
        }
        Ok(DiscreteJoint { vars, strides, table })
    }

    /// Exact check of `a ⊥ b | given`: `p(a,b,c)·p(c) = p(a,c)·p(b,c)` on every cell.
    pub fn conditionally_independent(&self, a: &[&str], b: &[&str], given: &[&str]) -> Result<bool, DistError> {
        let all: Vec<&str> = a.iter().chain(b).chain(given).copied().collect();
        let abc = self.marginal(&all)?;
        let ac_names: Vec<&str> = a.iter().chain(given).copied().collect();
        let bc_names: Vec<&str> = b.iter().chain(given).copied().collect();
        let (ac, bc, c) = (abc.marginal(&ac_names)?, abc.marginal(&bc_names)?, abc.marginal(given)?);
        let (na, nb) = (a.len(), b.len());
        for cell in 0..abc.cell_count() {
            let lv = abc.decode(cell);
            let (la, rest) = lv.split_at(na);
            let (lb, lc) = rest.split_at(nb);
            let ac_cell = ac.encode(&[la, lc].concat());
            let bc_cell = bc.encode(&[lb, lc].concat());
            let c_cell = c.encode(lc);
            let lhs = abc.table[cell].clone() * c.table[c_cell].clone();
            let rhs = ac.table[ac_cell].clone() * bc.table[bc_cell].clone();
            if lhs != rhs {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Columnar CSV: one column per variable plus `prob`, every cell listed.
    pub fn to_csv(&self) -> String {
        let mut out = self.vars.iter().map(|v| v.name.as_str()).collect::<Vec<_>>().join(",");
        out.push_str(",prob\n");
        for (cell, p) in self.table.iter().enumerate() {
            for (i, v) in self.vars.iter().enumerate() {
                out.push_str(&v.support[self.level_at(cell, i) as usize]);
                out.push(',');
            }
            out.push_str(&p.render());
            out.push('\n');
        }
        out
    }

    /// Canonical JSON; only positive-mass rows are listed.
    pub fn to_json(&self) -> Value {
        let variables: Vec<Value> = self
            .vars
            .iter()
            .map(|v| json!({"name": v.name, "support": v.support}))
            .collect();
        let rows: Vec<Value> = self
            .table
            .iter()
            .enumerate()
            .filter(|(_, p)| !p.is_zero())
            .map(|(cell, p)| {
                let labels: Vec<&str> = (0..self.vars.len())
                    .map(|i| self.vars[i].support[self.level_at(cell, i) as usize].as_str())
                    .collect();
                json!({"levels": labels, "prob": p.render()})
            })
            .collect();
        json!({"variables": variables, "rows": rows})
    }
}

impl DiscreteJoint<Prob> {
    /// Same table in another arithmetic.
    pub fn to_backend<U: Scalar>(&self) -> DiscreteJoint<U> {
        DiscreteJoint {
            vars: self.vars.clone(),
            strides: self.strides.clone(),
            table: self.table.iter().map(U::from_prob).collect(),
        }
    }

    pub fn from_csv(text: &str) -> Result<Self, DistError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| DistError::Parse("empty CSV".into()))?;
        let mut cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.pop() != Some("prob") {
            return Err(DistError::Parse("last CSV column must be `prob`".into()));
        }
        let mut vars: Vec<JointVar> = cols.iter().map(|c| JointVar::new(*c, &[])).collect();
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != vars.len() + 1 {
                return Err(DistError::Parse(format!("CSV row {} has {} fields", n + 2, fields.len())));
            }
            let mut levels = Vec::with_capacity(vars.len());
            for (v, f) in vars.iter_mut().zip(&fields) {
                let l = match v.support.iter().position(|s| s == f) {
                    Some(l) => l,
                    None => {
                        v.support.push(f.to_string());
                        v.support.len() - 1
                    }
                };
                levels.push(l as u32);
            }
            rows.push((levels, parse_prob(fields[vars.len()])?));
        }
        Self::from_rows(vars, rows)
    }

    pub fn from_json(value: &Value) -> Result<Self, DistError> {
        let bad = |m: &str| DistError::Parse(format!("joint JSON: {m}"));
        let vars: Vec<JointVar> = value["variables"]
            .as_array()
            .ok_or_else(|| bad("missing variables"))?
            .iter()
            .map(|v| {
                let name = v["name"].as_str().ok_or_else(|| bad("variable without name"))?;
                let support = v["support"]
                    .as_array()
                    .ok_or_else(|| bad("variable without support"))?
                    .iter()
                    .map(|s| s.as_str().map(String::from).ok_or_else(|| bad("non-string level")))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(JointVar {
                    name: name.to_string(),
                    support,
                })
            })
            .collect::<Result<_, DistError>>()?;
        let mut rows = Vec::new();
        for r in value["rows"].as_array().ok_or_else(|| bad("missing rows"))? {
            let labels = r["levels"].as_array().ok_or_else(|| bad("row without levels"))?;
            if labels.len() != vars.len() {
                return Err(bad("row width"));
            }
            let levels = labels
                .iter()
                .zip(&vars)
                .map(|(l, v)| {
                    let l = l.as_str().ok_or_else(|| bad("non-string level"))?;
                    v.support
                        .iter()
                        .position(|s| s == l)
                        .map(|i| i as u32)
                        .ok_or_else(|| bad("level not in support"))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let p = parse_prob(r["prob"].as_str().ok_or_else(|| bad("prob must be a string"))?)?;
            rows.push((levels, p));
        }
        Self::from_rows(vars, rows)
    }
}
