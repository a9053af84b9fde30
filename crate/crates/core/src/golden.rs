//! Versioned reference tables shipped under `data/v1` and the checks that
//! compare the library against them. The tables are compiled in; setting
//! `ACCLAB_DATA_DIR` makes [`GoldenData::from_env`] read them from disk.

use crate::calculus_orders::{
    canonical_kernel_orders, compose, conic_violations, CalcError, Calculus, CalculusOrders, KernelKind,
};
use crate::corner_blowup::{
    build_space, lift_monomial, sc_triple_projection, tabulated_faces, BlowupError, Monomial, SpaceKind,
    TripleProjection,
};
use crate::phg_index::{q, qi, Dims, Exponent, IndexSet, IndexTerm, Order, PhgError, Q};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const DATA_VERSION: &str = "v1";
pub const DATA_DIR_ENV: &str = "ACCLAB_DATA_DIR";

const LIFT_TABLE: &str = include_str!("../data/v1/lift_table.json");
const FACES: &str = include_str!("../data/v1/faces.json");
const COMPOSE_RULES: &str = include_str!("../data/v1/compose_rules.json");
const KERNEL_ORDERS: &str = include_str!("../data/v1/kernel_orders.json");

#[derive(Debug, Error)]
pub enum GoldenError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed table {file}: {source}")]
    Parse { file: String, source: serde_json::Error },
    #[error("table {table}: {reason}")]
    Entry { table: String, reason: String },
    #[error(transparent)]
    Blowup(#[from] BlowupError),
    #[error(transparent)]
    Calc(#[from] CalcError),
    #[error(transparent)]
    Phg(#[from] PhgError),
}

pub type Result<T> = std::result::Result<T, GoldenError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftRow {
    pub map: String,
    pub function: String,
    pub lift: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub as_printed: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub erratum: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftTable {
    pub version: u32,
    pub source_space: String,
    pub target_space: String,
    pub rows: Vec<LiftRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceTable {
    pub kind: String,
    pub ordered: bool,
    pub faces: Vec<String>,
    pub corners: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub erratum: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceTables {
    pub version: u32,
    pub tables: Vec<FaceTable>,
}

/// One face of a composition rule: `offset + A_f + B_f`, `offset + A_f`,
/// `offset + B_f`, `offset − (k_a + k_b)` or `∞`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleFace {
    pub face: String,
    pub as_printed: String,
    #[serde(default)]
    pub offset: Option<String>,
    #[serde(default)]
    pub sum: Option<String>,
    #[serde(default)]
    pub left: Option<String>,
    #[serde(default)]
    pub right: Option<String>,
    #[serde(default)]
    pub minus_k: bool,
    #[serde(default)]
    pub infinite: bool,
}

/// `α_left + β_right > bound` on leading orders, or `−k > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub name: String,
    #[serde(default)]
    pub left: Option<String>,
    #[serde(default)]
    pub right: Option<String>,
    #[serde(default)]
    pub bound: Option<String>,
    #[serde(default)]
    pub k: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComposeRule {
    pub calculus: String,
    pub faces: Vec<RuleFace>,
    #[serde(default)]
    pub thresholds: Vec<Threshold>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComposeRules {
    pub version: u32,
    pub rules: Vec<ComposeRule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelFace {
    pub face: String,
    /// `index_set` (normalization removed) or `kernel_order`
    pub reading: String,
    pub order: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelTable {
    pub kind: String,
    pub faces: Vec<KernelFace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelOrders {
    pub version: u32,
    pub kernels: Vec<KernelTable>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoldenData {
    pub lift: LiftTable,
    pub faces: FaceTables,
    pub compose: ComposeRules,
    pub kernels: KernelOrders,
    /// `None` for the compiled-in copy
    pub origin: Option<PathBuf>,
}

fn parse<T: for<'de> Deserialize<'de>>(file: &str, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|source| GoldenError::Parse { file: file.to_string(), source })
}

impl GoldenData {
    pub fn embedded() -> Self {
        Self::from_texts(LIFT_TABLE, FACES, COMPOSE_RULES, KERNEL_ORDERS, None).expect("embedded tables parse")
    }

    fn from_texts(lift: &str, faces: &str, compose: &str, kernels: &str, origin: Option<PathBuf>) -> Result<Self> {
        Ok(GoldenData {
            lift: parse("lift_table.json", lift)?,
            faces: parse("faces.json", faces)?,
            compose: parse("compose_rules.json", compose)?,
            kernels: parse("kernel_orders.json", kernels)?,
            origin,
        })
    }

    /// Reads the tables from `dir/v1` (or `dir` itself when it holds the files).
    pub fn load(dir: &Path) -> Result<Self> {
        let versioned = dir.join(DATA_VERSION);
        let base = if versioned.is_dir() { versioned } else { dir.to_path_buf() };
        let read = |name: &str| {
            let path = base.join(name);
            std::fs::read_to_string(&path).map_err(|source| GoldenError::Io { path, source })
        };
        Self::from_texts(
            &read("lift_table.json")?,
            &read("faces.json")?,
            &read("compose_rules.json")?,
            &read("kernel_orders.json")?,
            Some(base),
        )
    }

    pub fn from_env() -> Result<Self> {
        match std::env::var_os(DATA_DIR_ENV) {
            Some(d) if !d.is_empty() => Self::load(Path::new(&d)),
            _ => Ok(Self::embedded()),
        }
    }

    pub fn lift_row(&self, map: &str, function: &Monomial) -> Option<&LiftRow> {
        self.lift
            .rows
            .iter()
            .find(|r| r.map == map && Monomial::parse(&r.function).ok().as_ref() == Some(function))
    }

    pub fn face_table(&self, kind: SpaceKind) -> Option<&FaceTable> {
        self.faces.tables.iter().find(|t| t.kind == kind.as_str())
    }
}

/// Outcome of checking one table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableReport {
    pub table: String,
    pub checked: usize,
    pub mismatches: Vec<String>,
}

impl TableReport {
    fn new(table: &str) -> Self {
        TableReport { table: table.to_string(), checked: 0, mismatches: Vec::new() }
    }

    pub fn ok(&self) -> bool {
        self.mismatches.is_empty() && self.checked > 0
    }

    fn expect<T: PartialEq + std::fmt::Display>(&mut self, what: String, want: &T, got: &T) {
        self.checked += 1;
        if want != got {
            self.mismatches.push(format!("{what}: expected {want}, got {got}"));
        }
    }
}

/// Every row of the defining-function lift table against the projections of
/// the sc triple heat space.
pub fn verify_lift_table(data: &GoldenData) -> Result<TableReport> {
    let mut rep = TableReport::new("lift_table");
    let triple = build_space(data.lift.source_space.parse()?);
    for row in &data.lift.rows {
        let p: TripleProjection = row.map.parse()?;
        let map = sc_triple_projection(&triple, p);
        let want = Monomial::parse(&row.lift)?;
        let got = lift_monomial(&map, &Monomial::parse(&row.function)?)?;
        rep.expect(format!("({})* {}", row.map, row.function), &want, &got);
    }
    Ok(rep)
}

fn join(v: &[String]) -> String {
    v.join(", ")
}

pub fn verify_face_table(data: &GoldenData, kind: SpaceKind) -> Result<TableReport> {
    let table = data.face_table(kind).ok_or_else(|| GoldenError::Entry {
        table: "faces".into(),
        reason: format!("no table for {kind}"),
    })?;
    let mut rep = TableReport::new(&format!("faces/{kind}"));
    let space = build_space(kind);
    let mut got = tabulated_faces(&space, kind);
    let mut want = table.faces.clone();
    let mut got_c: Vec<String> = space.corners.iter().map(|c| c.name.clone()).collect();
    let mut want_c = table.corners.clone();
    if !table.ordered {
        got.sort();
        want.sort();
        got_c.sort();
        want_c.sort();
    }
    rep.expect(format!("{kind} faces"), &join(&want), &join(&got));
    rep.expect(format!("{kind} corners"), &join(&want_c), &join(&got_c));
    Ok(rep)
}

pub fn verify_faces(data: &GoldenData) -> Result<Vec<TableReport>> {
    data.faces.tables.iter().map(|t| verify_face_table(data, t.kind.parse()?)).collect()
}

fn set(terms: &[(i64, i64, u32)]) -> Order {
    Order::Finite(IndexSet::new(terms.iter().map(|&(a, b, p)| IndexTerm::rat(a, b, p))))
}

/// Fixed sample of index sets used to instantiate the composition rules.
pub fn sample_index_sets() -> Vec<Order> {
    vec![
        set(&[(0, 1, 0)]),
        set(&[(1, 2, 0), (3, 2, 1)]),
        set(&[(1, 1, 0), (2, 1, 0), (3, 1, 2)]),
        set(&[(-1, 3, 0), (5, 3, 0)]),
        Order::Infinite,
        Order::single(Exponent::n()),
        Order::single(Exponent::affine_n(q(1, 2), q(1, 2))),
    ]
}

fn sample_pairs(calculus: Calculus) -> Vec<(CalculusOrders, CalculusOrders)> {
    let sets = sample_index_sets();
    let ks = [qi(-2), q(-1, 2), qi(-3)];
    let mut out = Vec::new();
    for (i, a) in sets.iter().enumerate() {
        let b = &sets[(3 * i + 1) % sets.len()];
        let c = &sets[(5 * i + 2) % sets.len()];
        let (ka, kb) = (ks[i % 3], ks[(i + 1) % 3]);
        let pair = match calculus {
            Calculus::B => (CalculusOrders::b(ka, a.clone()), CalculusOrders::b(kb, b.clone())),
            Calculus::Sc => (CalculusOrders::sc(ka, a.clone(), c.clone()), CalculusOrders::sc(kb, b.clone(), a.clone())),
            Calculus::Conic => {
                // leading orders kept positive so every precondition holds
                let pos = |o: &Order| o.shift(Exponent::int(2));
                (
                    CalculusOrders::conic(ka, pos(a), pos(b), pos(c)),
                    CalculusOrders::conic(kb, pos(c), pos(a), pos(b)),
                )
            }
            _ => continue,
        };
        out.push(pair);
    }
    out
}

fn expected_face(rule: &RuleFace, a: &CalculusOrders, b: &CalculusOrders) -> Result<Order> {
    if rule.infinite {
        return Ok(Order::Infinite);
    }
    let offset = Exponent::parse(rule.offset.as_deref().unwrap_or("0"))?;
    if rule.minus_k {
        return Ok(Order::single(offset - Exponent::constant(a.k + b.k)));
    }
    let base = match (&rule.sum, &rule.left, &rule.right) {
        (Some(f), _, _) => a.index_set(f)?.sum(&b.index_set(f)?),
        (_, Some(f), _) => a.index_set(f)?,
        (_, _, Some(f)) => b.index_set(f)?,
        _ => {
            return Err(GoldenError::Entry {
                table: "compose_rules".into(),
                reason: format!("face {} has no operands", rule.face),
            })
        }
    };
    Ok(base.shift(offset))
}

/// Composition rules on a fixed set of instances, plus the conic threshold flips.
pub fn verify_compose_rules(data: &GoldenData) -> Result<Vec<TableReport>> {
    let d = Dims::new(3);
    let mut out = Vec::new();
    for rule in &data.compose.rules {
        let calculus: Calculus = rule.calculus.parse()?;
        let mut rep = TableReport::new(&format!("compose/{}", rule.calculus));
        for (i, (a, b)) in sample_pairs(calculus).iter().enumerate() {
            let c = compose(a, b, &d)?;
            for f in &rule.faces {
                let want = expected_face(f, a, b)?;
                rep.expect(format!("sample {i} {}", f.face), &want, c.order(&f.face)?);
            }
        }
        for t in &rule.thresholds {
            check_threshold(&mut rep, t, &d)?;
        }
        out.push(rep);
    }
    Ok(out)
}

fn conic_base(k: Q) -> CalculusOrders {
    let five = Order::single(5);
    CalculusOrders::conic(k, five.clone(), five.clone(), five)
}

fn check_threshold(rep: &mut TableReport, t: &Threshold, d: &Dims) -> Result<()> {
    let named = |v: &[String]| v.iter().any(|s| s.starts_with(t.name.as_str()));
    if let Some(which) = &t.k {
        for (k, violated) in [(qi(0), true), (q(-1, 100), false)] {
            let (a, b) = if which == "a" { (conic_base(k), conic_base(qi(-2))) } else { (conic_base(qi(-2)), conic_base(k)) };
            let v = conic_violations(&a, &b, d)?;
            rep.expect(format!("{} at k = {k}", t.name), &violated, &named(&v));
        }
        return Ok(());
    }
    let (lf, rf) = match (&t.left, &t.right) {
        (Some(l), Some(r)) => (l, r),
        _ => {
            return Err(GoldenError::Entry { table: "compose_rules".into(), reason: format!("threshold {} incomplete", t.name) })
        }
    };
    let bound = Exponent::parse(t.bound.as_deref().unwrap_or("0"))?;
    let alpha = Exponent::rat(1, 3);
    for (eps, violated) in [(Exponent::int(0), true), (Exponent::rat(1, 100), false)] {
        let mut a = conic_base(qi(-2));
        let mut b = conic_base(qi(-2));
        a.face_orders.insert(lf.clone(), Order::single(alpha));
        b.face_orders.insert(rf.clone(), Order::single(bound - alpha + eps));
        let v = conic_violations(&a, &b, d)?;
        rep.expect(format!("{} at sum = bound + {eps}", t.name), &violated, &named(&v));
    }
    Ok(())
}

pub fn verify_kernel_orders(data: &GoldenData) -> Result<TableReport> {
    let mut rep = TableReport::new("kernel_orders");
    for table in &data.kernels.kernels {
        let kind: KernelKind = table.kind.parse()?;
        let c = canonical_kernel_orders(kind);
        for f in &table.faces {
            let want = match f.order.trim() {
                "inf" => Order::Infinite,
                s => Order::single(Exponent::parse(s)?),
            };
            let got = match f.reading.as_str() {
                "index_set" => c.index_set(&f.face)?,
                "kernel_order" => c.order(&f.face)?.clone(),
                other => {
                    return Err(GoldenError::Entry { table: "kernel_orders".into(), reason: format!("unknown reading {other}") })
                }
            };
            rep.expect(format!("{} {}", table.kind, f.face), &want, &got);
        }
    }
    Ok(rep)
}

/// Every shipped table; the CLI turns this into a single exit code.
pub fn verify_all(data: &GoldenData) -> Result<Vec<TableReport>> {
    let mut out = vec![verify_lift_table(data)?];
    out.extend(verify_faces(data)?);
    out.extend(verify_compose_rules(data)?);
    out.push(verify_kernel_orders(data)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedded_tables_verify() {
        let g = GoldenData::embedded();
        assert_eq!(g.lift.rows.len(), 18);
        for r in verify_all(&g).unwrap() {
            assert!(r.ok(), "{}: {:?}", r.table, r.mismatches);
        }
    }

    #[test]
    fn corrupted_row_is_reported() {
        let mut g = GoldenData::embedded();
        g.lift.rows[0].lift = "rho_10000".into();
        let r = verify_lift_table(&g).unwrap();
        assert_eq!(r.mismatches.len(), 1);
        assert_eq!(r.checked, 18);
    }

    #[test]
    fn errata_rows_keep_printed_text() {
        let g = GoldenData::embedded();
        let marked: Vec<_> = g.lift.rows.iter().filter(|r| r.erratum.is_some()).collect();
        assert_eq!(marked.len(), 2);
        assert!(marked.iter().all(|r| r.as_printed.is_some()));
        let row = g.lift_row("beta_R", &Monomial::parse("rho_d2").unwrap()).unwrap();
        assert_eq!(row.lift, "rho_d3 rho_d02");
    }

    #[test]
    fn load_from_directory() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
        let g = GoldenData::load(&dir).unwrap();
        assert_eq!(g.lift, GoldenData::embedded().lift);
        assert!(matches!(GoldenData::load(Path::new("/nonexistent")), Err(GoldenError::Io { .. })));
    }
}
