//! Heat-calculus elements as per-face order data, and their composition.
//!
//! `face_orders` always holds the order of the kernel itself at each face.
//! [`CalculusOrders::index_set`] strips the calculus normalization, giving
//! the index set the calculus is parametrized by (`E_110`, `E_220`, ...).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corner_blowup::{
    build_space, density_lift, is_b_fibration, sc_triple_projection, BMapSpec, BlowupError, CornerSpace,
    JacobianTable, Monomial, SpaceKind, TripleProjection,
};
use crate::phg_index::{q, qi, Dims, Exponent, IndexSet, IndexTerm, Order, PhgError, Q};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalcError {
    #[error("cannot compose {0} with {1}")]
    MixedCalculi(Calculus, Calculus),
    #[error("expected a {expected} element, got {got}")]
    WrongCalculus { expected: Calculus, got: Calculus },
    #[error("conic composition preconditions violated: {}", .0.join("; "))]
    ConicPrecondition(Vec<String>),
    #[error("missing order for face `{0}`")]
    MissingFace(String),
    #[error("pushforward map is not a b-fibration (column {column} in rows {row_a} and {row_b})")]
    NotBFibration { column: String, row_a: String, row_b: String },
    #[error("integrability fails at `{face}` (leading order {order} is not positive)")]
    Integrability { face: String, order: String },
    #[error("closed form and pushforward pipeline disagree at `{face}`: {closed} vs {pipeline}")]
    PipelineMismatch { face: String, closed: String, pipeline: String },
    #[error("acc element lacks its {0} coefficient")]
    MissingCoefficient(&'static str),
    #[error("unknown calculus `{0}`")]
    UnknownCalculus(String),
    #[error(transparent)]
    Phg(#[from] PhgError),
    #[error(transparent)]
    Blowup(#[from] BlowupError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Calculus {
    B,
    Conic,
    Sc,
    Acc,
    SmoothEps,
}

impl Calculus {
    pub fn as_str(&self) -> &'static str {
        match self {
            Calculus::B => "b",
            Calculus::Conic => "conic",
            Calculus::Sc => "sc",
            Calculus::Acc => "acc",
            Calculus::SmoothEps => "smooth_eps",
        }
    }

    /// Heat space the kernels live on.
    pub fn space_kind(&self) -> Option<SpaceKind> {
        match self {
            Calculus::B => Some(SpaceKind::BHeat),
            Calculus::Conic => Some(SpaceKind::ConicHeat),
            Calculus::Sc => Some(SpaceKind::ScHeat),
            Calculus::Acc => Some(SpaceKind::AccHeat),
            Calculus::SmoothEps => None,
        }
    }
}

impl fmt::Display for Calculus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Calculus {
    type Err = CalcError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "b" => Ok(Calculus::B),
            "conic" => Ok(Calculus::Conic),
            "sc" => Ok(Calculus::Sc),
            "acc" => Ok(Calculus::Acc),
            "smooth_eps" => Ok(Calculus::SmoothEps),
            _ => Err(CalcError::UnknownCalculus(s.to_string())),
        }
    }
}

/// Coefficient calculi of an acc element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccCoefficients {
    /// b-calculus coefficient at `F_1010`.
    pub b: CalculusOrders,
    /// Conic coefficient at `F_0101`.
    pub conic: CalculusOrders,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalculusOrders {
    pub calculus: Calculus,
    pub k: Q,
    pub face_orders: BTreeMap<String, Order>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<Box<AccCoefficients>>,
    #[serde(default)]
    pub conjectural: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// `-(n+3)/2`
pub fn diag_offset() -> Exponent {
    Exponent::affine_n(q(-3, 2), q(-1, 2))
}

/// `-(n+3)/2 - k`
pub fn diag_order(k: Q) -> Exponent {
    diag_offset() - Exponent::constant(k)
}

/// `-(n+2)/2`
pub fn sc_220_offset() -> Exponent {
    Exponent::affine_n(qi(-1), q(-1, 2))
}

pub fn half_offset() -> Exponent {
    Exponent::rat(-1, 2)
}

impl CalculusOrders {
    fn base(calculus: Calculus, k: Q) -> Self {
        CalculusOrders {
            calculus,
            k,
            face_orders: BTreeMap::new(),
            coefficients: None,
            conjectural: false,
            notes: Vec::new(),
        }
    }

    fn set(mut self, face: &str, o: Order) -> Self {
        self.face_orders.insert(face.to_string(), o);
        self
    }

    pub fn b(k: Q, e110: Order) -> Self {
        Self::base(Calculus::B, k)
            .set("F_110", e110.shift(half_offset()))
            .set("F_d2", Order::single(diag_order(k)))
            .set("F_100", Order::Infinite)
            .set("F_010", Order::Infinite)
            .set("F_001", Order::Infinite)
    }

    pub fn conic(k: Q, e112: Order, e100: Order, e010: Order) -> Self {
        Self::base(Calculus::Conic, k)
            .set("F_112", e112)
            .set("F_100", e100)
            .set("F_010", e010)
            .set("F_d2", Order::single(diag_order(k)))
            .set("F_001", Order::Infinite)
    }

    pub fn sc(k: Q, e110: Order, e220: Order) -> Self {
        Self::base(Calculus::Sc, k)
            .set("F_110", e110.shift(half_offset()))
            .set("F_220", e220.shift(sc_220_offset()))
            .set("F_d2", Order::single(diag_order(k)))
            .set("F_100", Order::Infinite)
            .set("F_010", Order::Infinite)
            .set("F_001", Order::Infinite)
    }

    /// ε-index sets at the four ε=0 faces plus the coefficient calculi.
    pub fn acc(k: Q, e1010: Order, e0101: Order, e1001: Order, e0110: Order, coef: AccCoefficients) -> Self {
        let mut s = Self::base(Calculus::Acc, k)
            .set("F_1010", e1010)
            .set("F_0101", e0101)
            .set("F_1001", e1001)
            .set("F_0110", e0110);
        s.coefficients = Some(Box::new(coef));
        s.conjectural = true;
        s
    }

    pub fn order(&self, face: &str) -> Result<&Order, CalcError> {
        self.face_orders.get(face).ok_or_else(|| CalcError::MissingFace(face.to_string()))
    }

    /// Normalization subtracted from the kernel order at a face.
    pub fn normalization(calculus: Calculus, face: &str, k: Q) -> Exponent {
        match (calculus, face) {
            (Calculus::B | Calculus::Sc, "F_110") => half_offset(),
            (Calculus::Sc, "F_220") => sc_220_offset(),
            (Calculus::B | Calculus::Sc | Calculus::Conic, "F_d2") => diag_order(k),
            _ => Exponent::zero(),
        }
    }

    /// The calculus index set at a face (kernel order minus normalization).
    pub fn index_set(&self, face: &str) -> Result<Order, CalcError> {
        let o = self.order(face)?;
        Ok(o.shift(-Self::normalization(self.calculus, face, self.k)))
    }

    pub fn check_invariants(&self) -> Result<(), CalcError> {
        if let Some(kind) = self.calculus.space_kind() {
            let space = build_space(kind);
            for f in space.face_names() {
                self.order(&f)?;
            }
        }
        if let Some(Order::Finite(s)) = self.face_orders.get("F_d2") {
            let d = Dims::default();
            let lead = s.leading_order(&d)?;
            if lead.alpha != diag_order(self.k) {
                return Err(CalcError::PipelineMismatch {
                    face: "F_d2".into(),
                    closed: diag_order(self.k).to_string(),
                    pipeline: lead.alpha.to_string(),
                });
            }
        }
        Ok(())
    }

    fn expect(&self, c: Calculus) -> Result<(), CalcError> {
        if self.calculus != c {
            return Err(CalcError::WrongCalculus { expected: c, got: self.calculus });
        }
        Ok(())
    }

    pub fn table(&self, d: &Dims) -> String {
        let mut out = format!("calculus {}  k = {}\n", self.calculus, fmt_q(self.k));
        for (f, o) in &self.face_orders {
            let lead = match o.leading(d) {
                Ok(Some(t)) => format!("{}", t.alpha),
                Ok(None) => "inf".to_string(),
                Err(_) => "-".to_string(),
            };
            out.push_str(&format!("{:<10} {:<24} {}\n", f, lead, o));
        }
        if self.conjectural {
            out.push_str("status: conjectural\n");
        }
        for n in &self.notes {
            out.push_str(&format!("note: {n}\n"));
        }
        out
    }
}

fn fmt_q(k: Q) -> String {
    if k.is_integer() {
        k.numer().to_string()
    } else {
        format!("{}/{}", k.numer(), k.denom())
    }
}

fn same_calculus(a: &CalculusOrders, b: &CalculusOrders, c: Calculus) -> Result<(), CalcError> {
    if a.calculus != b.calculus {
        return Err(CalcError::MixedCalculi(a.calculus, b.calculus));
    }
    a.expect(c)
}

pub fn b_compose(a: &CalculusOrders, b: &CalculusOrders) -> Result<CalculusOrders, CalcError> {
    same_calculus(a, b, Calculus::B)?;
    let e = a.index_set("F_110")?.sum(&b.index_set("F_110")?);
    Ok(CalculusOrders::b(a.k + b.k, e))
}

fn leader(o: &Order, d: &Dims) -> Result<Option<Q>, CalcError> {
    Ok(o.leading(d)?.map(|t| t.alpha.eval(d)))
}

/// Named preconditions of the conic composition that fail.
pub fn conic_violations(a: &CalculusOrders, b: &CalculusOrders, d: &Dims) -> Result<Vec<String>, CalcError> {
    let a112 = leader(a.order("F_112")?, d)?;
    let a010 = leader(a.order("F_010")?, d)?;
    let b112 = leader(b.order("F_112")?, d)?;
    let b100 = leader(b.order("F_100")?, d)?;
    // an infinite leader satisfies every lower bound
    let gt = |x: Option<Q>, y: Option<Q>, bound: Q| match (x, y) {
        (Some(x), Some(y)) => x + y > bound,
        _ => true,
    };
    let mut v = Vec::new();
    if !gt(b112, a010, Q::zero()) {
        v.push("β_112+α_010 > 0 violated".to_string());
    }
    if !gt(a112, b100, Q::zero()) {
        v.push("α_112+β_100 > 0 violated".to_string());
    }
    if !(-a.k > Q::zero()) {
        v.push("−k_a > 0 violated".to_string());
    }
    if !(-b.k > Q::zero()) {
        v.push("−k_b > 0 violated".to_string());
    }
    if !gt(b100, a010, qi(-1)) {
        v.push("β_100+α_010 > −1 violated".to_string());
    }
    Ok(v)
}

pub fn conic_compose(a: &CalculusOrders, b: &CalculusOrders, d: &Dims) -> Result<CalculusOrders, CalcError> {
    same_calculus(a, b, Calculus::Conic)?;
    let v = conic_violations(a, b, d)?;
    if !v.is_empty() {
        return Err(CalcError::ConicPrecondition(v));
    }
    Ok(CalculusOrders::conic(
        a.k + b.k,
        a.order("F_112")?.sum(b.order("F_112")?),
        a.order("F_100")?.clone(),
        b.order("F_010")?.clone(),
    ))
}

/// Closed-form sc composition.
pub fn sc_compose_closed(a: &CalculusOrders, b: &CalculusOrders) -> Result<CalculusOrders, CalcError> {
    same_calculus(a, b, Calculus::Sc)?;
    Ok(CalculusOrders::sc(
        a.k + b.k,
        a.index_set("F_110")?.sum(&b.index_set("F_110")?),
        a.index_set("F_220")?.sum(&b.index_set("F_220")?),
    ))
}

/// Source face pairs whose finite leading orders coincide under pushforward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coincidence {
    pub target: String,
    pub faces: Vec<String>,
    pub alpha: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PushforwardReport {
    pub orders: BTreeMap<String, Order>,
    pub coincidences: Vec<Coincidence>,
    /// Interior-mapped faces and their weighted orders.
    pub interior: BTreeMap<String, Order>,
}

/// Pull back kernel orders along a projection: a face lying over an
/// infinite-order face gets infinite order, otherwise the orders of the rows
/// containing it add (weighted by the lifting exponent).
pub fn pullback_orders(map: &BMapSpec, space3: &CornerSpace, orders: &BTreeMap<String, Order>) -> BTreeMap<String, Order> {
    let mut out = BTreeMap::new();
    for f in space3.face_names() {
        let over = map.lies_over(&f);
        if over.iter().any(|t| orders.get(t).is_some_and(Order::is_infinite)) {
            out.insert(f, Order::Infinite);
            continue;
        }
        let mut acc = Order::single(0);
        for (t, row) in &map.rows {
            if let Some(e) = row.get(&f) {
                let o = orders.get(t).cloned().unwrap_or(Order::single(0));
                let mut term = Order::single(0);
                for _ in 0..*e {
                    term = term.sum(&o);
                }
                acc = acc.sum(&term);
            }
        }
        out.insert(f, acc);
    }
    out
}

/// Push forward along a b-fibration: each target face gets the union of
/// the weighted orders of the faces mapped onto it; faces mapped to the
/// interior must be integrable.
pub fn pushforward_orders(
    space3: &CornerSpace,
    map_c: &BMapSpec,
    orders: &BTreeMap<String, Order>,
    bweight: &Monomial,
    d: &Dims,
) -> Result<PushforwardReport, CalcError> {
    if let (false, Some(w)) = is_b_fibration(map_c) {
        return Err(CalcError::NotBFibration { column: w.column, row_a: w.row_a, row_b: w.row_b });
    }
    let mut targets: BTreeMap<String, Order> = map_c.rows.keys().map(|t| (t.clone(), Order::Infinite)).collect();
    let mut contributors: BTreeMap<String, Vec<(String, IndexTerm)>> = BTreeMap::new();
    let mut interior = BTreeMap::new();
    for f in space3.face_names() {
        let o = orders.get(&f).cloned().unwrap_or(Order::single(0)).shift(bweight.exp(&f));
        match map_c.image_face(&f) {
            Some(t) => {
                if let Some(lead) = o.leading(d)? {
                    contributors.entry(t.clone()).or_default().push((f.clone(), lead));
                }
                let cur = targets.remove(&t).unwrap_or(Order::Infinite);
                targets.insert(t, cur.union(&o));
            }
            None => {
                if let Some(lead) = o.leading(d)? {
                    if lead.alpha.eval(d) <= Q::zero() {
                        return Err(CalcError::Integrability { face: f, order: lead.alpha.to_string() });
                    }
                }
                interior.insert(f, o);
            }
        }
    }
    let mut coincidences = Vec::new();
    for (t, list) in contributors {
        for i in 0..list.len() {
            for j in i + 1..list.len() {
                if list[i].1.alpha.eval(d) == list[j].1.alpha.eval(d) {
                    coincidences.push(Coincidence {
                        target: t.clone(),
                        faces: vec![list[i].0.clone(), list[j].0.clone()],
                        alpha: list[i].1.alpha.to_string(),
                    });
                }
            }
        }
    }
    Ok(PushforwardReport { orders: targets, coincidences, interior })
}

/// Exponent of the combined half-density and b-density factor at each face
/// of the sc triple heat space.
pub fn sc_density_factor(space3: &CornerSpace, maps: &[BMapSpec; 3]) -> Result<Monomial, CalcError> {
    let nu = Monomial::one()
        .with("F_110", Exponent::rat(-1, 2))
        .with("F_220", Exponent::n().scale(q(-1, 2)))
        .with("F_d2", Exponent::affine_n(q(-1, 2), q(-1, 2)));
    let mut w = density_lift(space3, &Monomial::one(), &JacobianTable::sc_triple())?;
    for m in maps {
        for (t, row) in &m.rows {
            let e = nu.exp(t);
            if e.is_zero() {
                continue;
            }
            for (s, k) in row {
                w.mul_face(s, e.scale(qi(*k as i64)));
            }
        }
    }
    let center = &maps[2];
    let in_center: BTreeSet<String> = center.source_faces();
    for f in space3.face_names() {
        if in_center.contains(&f) {
            w.mul_face(&f, Exponent::int(-1));
        }
        w.mul_face(&f, Exponent::int(1));
    }
    Ok(w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScPipeline {
    pub lifted_a: BTreeMap<String, Order>,
    pub lifted_b: BTreeMap<String, Order>,
    pub density: Monomial,
    pub product: BTreeMap<String, Order>,
    pub pushforward: PushforwardReport,
    pub result: CalculusOrders,
}

/// Full composition through the sc triple heat space. `A` is lifted by the
/// left projection and `B` by the right one.
pub fn sc_compose_pipeline(a: &CalculusOrders, b: &CalculusOrders, d: &Dims) -> Result<ScPipeline, CalcError> {
    same_calculus(a, b, Calculus::Sc)?;
    let space3 = build_space(SpaceKind::ScTripleHeat);
    let maps = TripleProjection::ALL.map(|p| sc_triple_projection(&space3, p));
    let lifted_a = pullback_orders(&maps[0], &space3, &a.face_orders);
    let lifted_b = pullback_orders(&maps[1], &space3, &b.face_orders);
    let density = sc_density_factor(&space3, &maps)?;
    let mut product = BTreeMap::new();
    for f in space3.face_names() {
        let o = lifted_a[&f].sum(&lifted_b[&f]);
        product.insert(f, o);
    }
    let push = pushforward_orders(&space3, &maps[2], &product, &density, d)?;
    let mut result = CalculusOrders::base(Calculus::Sc, a.k + b.k);
    result.face_orders = push.orders.clone();
    for c in &push.coincidences {
        result.notes.push(format!(
            "coincident leading order {} at {} from {}; log terms not synthesized",
            c.alpha,
            c.target,
            c.faces.join(", ")
        ));
    }
    Ok(ScPipeline { lifted_a, lifted_b, density, product, pushforward: push, result })
}

/// sc composition: runs the pipeline and checks it against the closed form.
pub fn sc_compose(a: &CalculusOrders, b: &CalculusOrders, d: &Dims) -> Result<CalculusOrders, CalcError> {
    let closed = sc_compose_closed(a, b)?;
    let pipe = sc_compose_pipeline(a, b, d)?;
    for (f, o) in &closed.face_orders {
        let p = pipe.result.order(f)?;
        if p != o {
            return Err(CalcError::PipelineMismatch { face: f.clone(), closed: o.to_string(), pipeline: p.to_string() });
        }
    }
    let mut out = closed;
    out.notes = pipe.result.notes;
    Ok(out)
}

pub fn acc_compose(a: &CalculusOrders, b: &CalculusOrders, d: &Dims) -> Result<CalculusOrders, CalcError> {
    same_calculus(a, b, Calculus::Acc)?;
    let ca = a.coefficients.as_ref().ok_or(CalcError::MissingCoefficient("acc"))?;
    let cb = b.coefficients.as_ref().ok_or(CalcError::MissingCoefficient("acc"))?;
    let coef = AccCoefficients { b: b_compose(&ca.b, &cb.b)?, conic: conic_compose(&ca.conic, &cb.conic, d)? };
    let mut faces = BTreeMap::new();
    for f in ["F_1010", "F_0101", "F_1001", "F_0110"] {
        faces.insert(f, a.order(f)?.sum(b.order(f)?));
    }
    let mut out = CalculusOrders::acc(
        a.k + b.k,
        faces["F_1010"].clone(),
        faces["F_0101"].clone(),
        faces["F_1001"].clone(),
        faces["F_0110"].clone(),
        coef,
    );
    out.notes.push("acc composition is stated as an expectation, not a theorem".into());
    Ok(out)
}

pub fn compose(a: &CalculusOrders, b: &CalculusOrders, d: &Dims) -> Result<CalculusOrders, CalcError> {
    match a.calculus {
        Calculus::B => b_compose(a, b),
        Calculus::Conic => conic_compose(a, b, d),
        Calculus::Sc => sc_compose(a, b, d),
        Calculus::Acc => acc_compose(a, b, d),
        Calculus::SmoothEps => Err(CalcError::UnknownCalculus("smooth_eps has no composition rule".into())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    BHeatKernel,
    ConicHeatKernel,
    ScHeatKernel,
    AccHeatKernel,
}

impl FromStr for KernelKind {
    type Err = CalcError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "b_heat_kernel" | "b" => Ok(KernelKind::BHeatKernel),
            "conic_heat_kernel" | "conic" => Ok(KernelKind::ConicHeatKernel),
            "sc_heat_kernel" | "sc" => Ok(KernelKind::ScHeatKernel),
            "acc_heat_kernel" | "acc" => Ok(KernelKind::AccHeatKernel),
            _ => Err(CalcError::UnknownCalculus(s.to_string())),
        }
    }
}

/// Leading-order data of the model heat kernels; `mu0` stays symbolic.
pub fn canonical_kernel_orders(kind: KernelKind) -> CalculusOrders {
    let k = qi(-2);
    match kind {
        KernelKind::BHeatKernel => CalculusOrders::b(k, Order::single(0)),
        KernelKind::ConicHeatKernel => {
            let side = Exponent::affine_n(q(-1, 2), q(-1, 2)) + Exponent::mu0();
            let front = Exponent::rat(-3, 2) + Exponent::affine_n(q(1, 2), qi(1)) + Exponent::mu0().scale(qi(2));
            CalculusOrders::conic(k, Order::single(front), Order::single(side), Order::single(side))
        }
        KernelKind::ScHeatKernel => CalculusOrders::sc(k, Order::Infinite, Order::single(0)),
        KernelKind::AccHeatKernel => {
            let coef = AccCoefficients {
                b: canonical_kernel_orders(KernelKind::BHeatKernel),
                conic: canonical_kernel_orders(KernelKind::ConicHeatKernel),
            };
            let mut s = CalculusOrders::acc(
                k,
                Order::single(2),
                Order::single(0),
                Order::single(2),
                Order::single(2),
                coef,
            );
            s.notes.push("F_1010 coefficient is the b-heat kernel in time tau = t/(rho_1001 rho_0110)^2".into());
            s.notes.push("F_0101 coefficient is the conic heat kernel in time t' = t/rho_1010^2".into());
            s
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelOperator {
    BLaplacianOnCylinder,
    ConicLaplacianOnCone,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RescaledTime {
    /// `tau = t/(rho_1001 rho_0110)^2`
    Tau,
    /// `t' = t/rho_1010^2`
    TPrime,
    None,
}

impl RescaledTime {
    /// `t` divided by this monomial.
    pub fn denominator(&self) -> Monomial {
        match self {
            RescaledTime::Tau => Monomial::one().with("F_1001", 2).with("F_0110", 2),
            RescaledTime::TPrime => Monomial::one().with("F_1010", 2),
            RescaledTime::None => Monomial::one(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftedOperatorFace {
    pub face: String,
    pub prefactor: Monomial,
    pub model_operator: ModelOperator,
    pub rescaled_time: RescaledTime,
}

pub fn lifted_heat_operator_table() -> Vec<LiftedOperatorFace> {
    vec![
        LiftedOperatorFace {
            face: "F_1010".into(),
            prefactor: Monomial::one().with("F_1010", -2),
            model_operator: ModelOperator::BLaplacianOnCylinder,
            rescaled_time: RescaledTime::Tau,
        },
        LiftedOperatorFace {
            face: "F_0101".into(),
            prefactor: Monomial::one(),
            model_operator: ModelOperator::ConicLaplacianOnCone,
            rescaled_time: RescaledTime::TPrime,
        },
        LiftedOperatorFace {
            face: "F_0110".into(),
            prefactor: Monomial::one().with("F_0110", -2),
            model_operator: ModelOperator::None,
            rescaled_time: RescaledTime::None,
        },
        LiftedOperatorFace {
            face: "F_1001".into(),
            prefactor: Monomial::one().with("F_1001", -2),
            model_operator: ModelOperator::None,
            rescaled_time: RescaledTime::None,
        },
    ]
}

/// Index set helper: `{(alpha, 0)}` from an expression string.
pub fn single_expr(s: &str) -> Result<Order, CalcError> {
    Ok(Order::single(Exponent::parse(s)?))
}

pub fn finite(terms: &[(i64, i64, u32)]) -> Order {
    Order::Finite(IndexSet::new(terms.iter().map(|&(a, b, p)| IndexTerm::rat(a, b, p))))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d3() -> Dims {
        Dims::new(3)
    }

    fn lead(o: &Order) -> Exponent {
        o.leading_alpha(&d3()).unwrap()
    }

    #[test]
    fn b_composition() {
        let a = CalculusOrders::b(qi(-2), Order::single(0));
        let c = b_compose(&a, &a).unwrap();
        assert_eq!(c.k, qi(-4));
        assert_eq!(c.index_set("F_110").unwrap(), Order::single(0));
        assert_eq!(lead(c.order("F_d2").unwrap()), diag_order(qi(-4)));
        assert!(c.order("F_100").unwrap().is_infinite());
        let id = CalculusOrders::b(qi(0), Order::single(0));
        assert_eq!(b_compose(&id, &a).unwrap(), a);
        let l = CalculusOrders::b(qi(-2), finite(&[(0, 1, 1)]));
        let c = b_compose(&l, &l).unwrap();
        assert_eq!(c.index_set("F_110").unwrap().leading(&d3()).unwrap().unwrap(), IndexTerm::rat(0, 1, 2));
    }

    #[test]
    fn mixed_calculi_rejected() {
        let a = CalculusOrders::b(qi(-2), Order::single(0));
        let c = canonical_kernel_orders(KernelKind::ConicHeatKernel);
        assert_eq!(b_compose(&a, &c).unwrap_err(), CalcError::MixedCalculi(Calculus::B, Calculus::Conic));
    }

    #[test]
    fn conic_composition() {
        let a = CalculusOrders::conic(qi(-2), Order::single(2), Order::single(1), Order::single(1));
        let c = conic_compose(&a, &a, &d3()).unwrap();
        assert_eq!(c.k, qi(-4));
        assert_eq!(lead(c.order("F_112").unwrap()), Exponent::int(4));
        assert_eq!(lead(c.order("F_100").unwrap()), Exponent::int(1));
        assert_eq!(lead(c.order("F_010").unwrap()), Exponent::int(1));
    }

    #[test]
    fn conic_asymmetry() {
        let a = CalculusOrders::conic(qi(-2), Order::single(2), Order::single(1), Order::single(3));
        let b = CalculusOrders::conic(qi(-2), Order::single(2), Order::single(5), Order::single(7));
        let c = conic_compose(&a, &b, &d3()).unwrap();
        assert_eq!(lead(c.order("F_100").unwrap()), Exponent::int(1));
        assert_eq!(lead(c.order("F_010").unwrap()), Exponent::int(7));
    }

    #[test]
    fn conic_named_errors() {
        let a = CalculusOrders::conic(qi(0), Order::single(2), Order::single(1), Order::single(1));
        let b = CalculusOrders::conic(qi(-2), Order::single(2), Order::single(1), Order::single(1));
        match conic_compose(&a, &b, &d3()) {
            Err(CalcError::ConicPrecondition(v)) => assert_eq!(v, vec!["−k_a > 0 violated"]),
            other => panic!("{other:?}"),
        }
        let b = CalculusOrders::conic(qi(-2), Order::single(-2), Order::single(1), Order::single(1));
        let a = CalculusOrders::conic(qi(-2), Order::single(2), Order::single(1), Order::single(1));
        match conic_compose(&a, &b, &d3()) {
            Err(CalcError::ConicPrecondition(v)) => assert!(v.contains(&"β_112+α_010 > 0 violated".to_string())),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sc_closed_form_and_pipeline_agree() {
        let a = CalculusOrders::sc(qi(-2), Order::single(0), Order::single(0));
        let c = sc_compose(&a, &a, &d3()).unwrap();
        assert_eq!(lead(c.order("F_110").unwrap()), Exponent::rat(-1, 2));
        assert_eq!(lead(c.order("F_220").unwrap()), sc_220_offset());
        assert_eq!(lead(c.order("F_d2").unwrap()), diag_offset() + Exponent::int(4));
        for f in ["F_100", "F_010", "F_001"] {
            assert!(c.order(f).unwrap().is_infinite());
        }
    }

    #[test]
    fn sc_pipeline_intermediate_tables() {
        let a = CalculusOrders::sc(qi(-2), Order::single(0), Order::single(0));
        let p = sc_compose_pipeline(&a, &a, &d3()).unwrap();
        // density factor exponents
        let n = Exponent::n();
        let h = |c: i64| Exponent::affine_n(q(c, 2), q(1, 2));
        let expect = [
            ("F_11100", Exponent::rat(1, 2)),
            ("F_11000", Exponent::rat(1, 2)),
            ("F_01100", Exponent::rat(1, 2)),
            ("F_10100", Exponent::rat(1, 2)),
            ("F_22200", h(2)),
            ("F_22000", h(2)),
            ("F_02200", h(2)),
            ("F_20200", n.scale(q(1, 2))),
            ("F_d3", h(3)),
            ("F_d20", h(3)),
            ("F_d02", h(3)),
            ("F_d22", h(1)),
            ("F_01000", Exponent::int(1)),
            ("F_00011", Exponent::int(1)),
            ("F_00010", Exponent::int(1)),
            ("F_00001", Exponent::int(1)),
            ("F_10000", Exponent::zero()),
            ("F_00100", Exponent::zero()),
            ("F_00022", Exponent::zero()),
        ];
        for (f, e) in expect {
            assert_eq!(p.density.exp(f), e, "{f}");
        }
        assert_eq!(lead(&p.lifted_a["F_11000"]), Exponent::rat(-1, 2));
        assert!(p.lifted_a["F_01100"].is_infinite());
        assert!(p.lifted_b["F_11000"].is_infinite());
        assert_eq!(lead(&p.lifted_b["F_d02"]), diag_order(qi(-2)));
    }

    #[test]
    fn sc_infinite_absorbs() {
        let a = CalculusOrders::sc(qi(-2), Order::Infinite, Order::single(0));
        let b = CalculusOrders::sc(qi(-2), Order::single(0), Order::single(0));
        let c = sc_compose(&a, &b, &d3()).unwrap();
        assert!(c.order("F_110").unwrap().is_infinite());
    }

    #[test]
    fn sc_nonnegative_k_is_not_integrable() {
        let a = CalculusOrders::sc(qi(0), Order::single(0), Order::single(0));
        let b = CalculusOrders::sc(qi(-2), Order::single(0), Order::single(0));
        match sc_compose(&a, &b, &d3()) {
            Err(CalcError::Integrability { face, .. }) => assert_eq!(face, "F_d20"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn acc_composition() {
        let h = canonical_kernel_orders(KernelKind::AccHeatKernel);
        let mut a = h.clone();
        // conic coefficient with orders that satisfy the preconditions
        let conic = CalculusOrders::conic(qi(-2), Order::single(2), Order::single(1), Order::single(1));
        a.coefficients.as_mut().unwrap().conic = conic;
        let c = acc_compose(&a, &a, &d3()).unwrap();
        assert_eq!(lead(c.order("F_1010").unwrap()), Exponent::int(4));
        assert_eq!(lead(c.order("F_1001").unwrap()), Exponent::int(4));
        assert_eq!(c.coefficients.as_ref().unwrap().b.k, qi(-4));
        assert!(c.conjectural);
    }

    #[test]
    fn canonical_tables() {
        let d = d3();
        let b = canonical_kernel_orders(KernelKind::BHeatKernel);
        assert_eq!(b.index_set("F_110").unwrap().leading_alpha(&d), Some(Exponent::zero()));
        assert_eq!(lead(b.order("F_d2").unwrap()), diag_offset() + Exponent::int(2));
        let c = canonical_kernel_orders(KernelKind::ConicHeatKernel);
        assert_eq!(lead(c.order("F_112").unwrap()).eval(&d), qi(2));
        assert_eq!(lead(c.order("F_100").unwrap()).eval(&d), qi(-2));
        let acc = canonical_kernel_orders(KernelKind::AccHeatKernel);
        let coef = acc.coefficients.as_ref().unwrap();
        assert_eq!(coef.b, b);
        assert_eq!(coef.conic, c);
        assert_eq!(lead(acc.order("F_1010").unwrap()), Exponent::int(2));
        assert_eq!(lead(acc.order("F_0101").unwrap()), Exponent::zero());
        for k in [KernelKind::BHeatKernel, KernelKind::ConicHeatKernel, KernelKind::ScHeatKernel, KernelKind::AccHeatKernel] {
            canonical_kernel_orders(k).check_invariants().unwrap();
        }
    }

    #[test]
    fn lifted_operator_rows() {
        let t = lifted_heat_operator_table();
        assert_eq!(t.len(), 4);
        assert_eq!(t[0].prefactor.exp("F_1010"), Exponent::int(-2));
        assert!(t[1].prefactor.is_one());
        let faces: Vec<_> = t[0].rescaled_time.denominator().faces().cloned().collect();
        assert_eq!(faces, ["F_0110", "F_1001"]);
    }

    #[test]
    fn json_round_trip() {
        let a = canonical_kernel_orders(KernelKind::AccHeatKernel);
        let s = serde_json::to_string(&a).unwrap();
        let b: CalculusOrders = serde_json::from_str(&s).unwrap();
        assert_eq!(a, b);
    }
}
