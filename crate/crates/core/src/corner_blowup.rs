//! Manifolds with corners as face inventories plus monomial lifts.
//!
//! A [`CornerSpace`] is a list of boundary hypersurfaces together with the
//! lift of every boundary defining function and every named scalar variable.
//! Spaces are only ever built by replaying a [`HistoryEntry`] list, so two
//! spaces with the same history are identical.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::phg_index::{q, Dims, Exponent};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BlowupError {
    #[error("unknown face `{0}`")]
    UnknownFace(String),
    #[error("face `{0}` already exists")]
    DuplicateFace(String),
    #[error("parabolic direction `{0}` is not a scalar variable")]
    UnknownParabolicVar(String),
    #[error("unknown scalar variable `{0}`")]
    UnknownVar(String),
    #[error("center for `{0}` has codimension below 2 and no diagonal tag")]
    DegenerateCenter(String),
    #[error("center for `{0}` is not contained in any face")]
    EmptyCenter(String),
    #[error("face `{face}` is not in the image of map `{map}`")]
    NotInImage { face: String, map: String },
    #[error("lift of `{0}` is not a monomial")]
    NonMonomial(String),
    #[error("no Jacobian exponent configured for face `{0}`")]
    UnconfiguredFace(String),
    #[error("unknown space kind `{0}`")]
    UnknownKind(String),
    #[error("unknown map `{0}`")]
    UnknownMap(String),
    #[error("cannot parse monomial `{input}`: {reason}")]
    MonomialParse { input: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaceOrigin {
    OriginalBoundary,
    RadialBlowup,
    ParabolicBlowup,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FaceId {
    pub name: String,
    pub origin: FaceOrigin,
    /// Inferred from other tables rather than listed directly.
    #[serde(default)]
    pub reconstructed: bool,
}

impl FaceId {
    pub fn original(name: &str) -> Self {
        FaceId { name: name.to_string(), origin: FaceOrigin::OriginalBoundary, reconstructed: false }
    }
}

/// `∏ ρ_F^{e_F}`, optionally times a smooth nonvanishing factor.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Monomial {
    pub exponents: BTreeMap<String, Exponent>,
    #[serde(default)]
    pub prefactor_smooth: bool,
}

impl Monomial {
    pub fn one() -> Self {
        Monomial::default()
    }

    pub fn face(name: &str) -> Self {
        Monomial::one().with(name, Exponent::int(1))
    }

    pub fn from_faces<'a>(names: impl IntoIterator<Item = &'a str>) -> Self {
        let mut m = Monomial::one();
        for n in names {
            m.mul_face(n, Exponent::int(1));
        }
        m
    }

    pub fn with(mut self, face: &str, e: impl Into<Exponent>) -> Self {
        self.mul_face(face, e.into());
        self
    }

    pub fn exp(&self, face: &str) -> Exponent {
        self.exponents.get(face).copied().unwrap_or_default()
    }

    pub fn mul_face(&mut self, face: &str, e: Exponent) {
        let v = self.exponents.entry(face.to_string()).or_default();
        *v += e;
        if v.is_zero() {
            self.exponents.remove(face);
        }
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut out = self.clone();
        for (f, e) in &other.exponents {
            out.mul_face(f, *e);
        }
        out.prefactor_smooth |= other.prefactor_smooth;
        out
    }

    pub fn pow(&self, s: crate::phg_index::Q) -> Monomial {
        let mut out = Monomial { prefactor_smooth: self.prefactor_smooth, ..Monomial::one() };
        for (f, e) in &self.exponents {
            out.mul_face(f, e.scale(s));
        }
        out
    }

    pub fn is_one(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn faces(&self) -> impl Iterator<Item = &String> {
        self.exponents.keys()
    }

    /// Parse `rho_a*rho_b^2`, `rho_a·rho_b`, `1`; `rho_` prefixes optional.
    pub fn parse(s: &str) -> Result<Monomial, BlowupError> {
        let err = |r: &str| BlowupError::MonomialParse { input: s.to_string(), reason: r.to_string() };
        let t = s.trim();
        if t.is_empty() {
            return Err(err("empty"));
        }
        if t == "1" {
            return Ok(Monomial::one());
        }
        let mut m = Monomial::one();
        for part in t.split(['*', '·', ' ']).filter(|p| !p.is_empty()) {
            let (base, e) = match part.split_once('^') {
                Some((b, e)) => {
                    let e = e.trim_matches(|c| c == '(' || c == ')' || c == '{' || c == '}');
                    (b, Exponent::parse(e).map_err(|_| err("bad exponent"))?)
                }
                None => (part, Exponent::int(1)),
            };
            let base = base.strip_prefix("rho_").or_else(|| base.strip_prefix("ρ_")).unwrap_or(base);
            if base.is_empty() || base == "1" {
                continue;
            }
            let name = if base.starts_with("F_") { base.to_string() } else { format!("F_{base}") };
            m.mul_face(&name, e);
        }
        Ok(m)
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exponents.is_empty() {
            return write!(f, "1");
        }
        let mut first = true;
        for (face, e) in &self.exponents {
            if !first {
                write!(f, "·")?;
            }
            first = false;
            let short = face.strip_prefix("F_").unwrap_or(face);
            if *e == Exponent::int(1) {
                write!(f, "rho_{short}")?;
            } else if e.is_constant() && e.c0.is_integer() {
                write!(f, "rho_{short}^{e}")?;
            } else {
                write!(f, "rho_{short}^({e})")?;
            }
        }
        Ok(())
    }
}

/// Submanifold to blow up, identified by the faces containing it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlowupCenter {
    pub contained_in: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagonal_tag: Option<String>,
    /// Scalar variables scaling quadratically; empty for a radial blowup.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parabolic: Vec<String>,
    pub codim: Exponent,
}

impl BlowupCenter {
    pub fn radial<'a>(faces: impl IntoIterator<Item = &'a str>, codim: impl Into<Exponent>) -> Self {
        BlowupCenter {
            contained_in: faces.into_iter().map(String::from).collect(),
            diagonal_tag: None,
            parabolic: Vec::new(),
            codim: codim.into(),
        }
    }

    pub fn diagonal(mut self, tag: &str) -> Self {
        self.diagonal_tag = Some(tag.to_string());
        self
    }

    pub fn parabolic_in(mut self, var: &str) -> Self {
        self.parabolic.push(var.to_string());
        self
    }

    pub fn is_parabolic(&self) -> bool {
        !self.parabolic.is_empty()
    }

    /// Default Jacobian exponent: `codim - 1` plus one per parabolic direction.
    pub fn default_jacobian(&self) -> Exponent {
        self.codim - Exponent::int(1) + Exponent::int(self.parabolic.len() as i64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corner {
    pub name: String,
    pub in_faces: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScalarVar {
    pub name: String,
    pub lift: Monomial,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum HistoryEntry {
    /// Original boundary face with its defining scalar variable.
    Base { face: String, var: Option<String> },
    Blowup { center: BlowupCenter, face: String },
    /// Face asserted from a table rather than produced by a blowup.
    Declare { face: FaceId },
    /// Scalar variable given directly by its lift.
    AddVar { name: String, lift: Monomial, defines: Option<String> },
    Corner { corner: Corner },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CornerSpace {
    pub name: String,
    pub faces: Vec<FaceId>,
    pub corners: Vec<Corner>,
    pub history: Vec<HistoryEntry>,
    pub vars: Vec<ScalarVar>,
    /// Lift of each face's defining function.
    pub face_lifts: BTreeMap<String, Monomial>,
    /// Scalar variable each face is the zero set of, if any.
    pub face_var: BTreeMap<String, String>,
    pub centers: BTreeMap<String, BlowupCenter>,
}

impl CornerSpace {
    pub fn empty(name: &str) -> Self {
        CornerSpace {
            name: name.to_string(),
            faces: Vec::new(),
            corners: Vec::new(),
            history: Vec::new(),
            vars: Vec::new(),
            face_lifts: BTreeMap::new(),
            face_var: BTreeMap::new(),
            centers: BTreeMap::new(),
        }
    }

    /// Product of boundary faces, each the zero set of the named variable.
    pub fn product(name: &str, faces: &[(&str, &str)]) -> Self {
        let mut s = CornerSpace::empty(name);
        for (f, v) in faces {
            s.apply(HistoryEntry::Base { face: f.to_string(), var: Some(v.to_string()) })
                .expect("fresh product");
        }
        s
    }

    pub fn replay(name: &str, history: &[HistoryEntry]) -> Result<Self, BlowupError> {
        let mut s = CornerSpace::empty(name);
        for h in history {
            s.apply(h.clone())?;
        }
        Ok(s)
    }

    pub fn has_face(&self, name: &str) -> bool {
        self.faces.iter().any(|f| f.name == name)
    }

    pub fn face(&self, name: &str) -> Option<&FaceId> {
        self.faces.iter().find(|f| f.name == name)
    }

    pub fn face_names(&self) -> Vec<String> {
        self.faces.iter().map(|f| f.name.clone()).collect()
    }

    pub fn var(&self, name: &str) -> Option<&ScalarVar> {
        self.vars.iter().find(|v| v.name == name)
    }

    pub fn lift_of_var(&self, name: &str) -> Result<&Monomial, BlowupError> {
        self.var(name).map(|v| &v.lift).ok_or_else(|| BlowupError::UnknownVar(name.to_string()))
    }

    /// Faces created by blowups, in order.
    pub fn blowup_faces(&self) -> Vec<String> {
        self.history
            .iter()
            .filter_map(|h| match h {
                HistoryEntry::Blowup { face, .. } => Some(face.clone()),
                _ => None,
            })
            .collect()
    }

    fn push_face(&mut self, face: FaceId) -> Result<(), BlowupError> {
        if self.has_face(&face.name) {
            return Err(BlowupError::DuplicateFace(face.name));
        }
        self.face_lifts.insert(face.name.clone(), Monomial::face(&face.name));
        self.faces.push(face);
        Ok(())
    }

    pub fn apply(&mut self, entry: HistoryEntry) -> Result<(), BlowupError> {
        match &entry {
            HistoryEntry::Base { face, var } => {
                self.push_face(FaceId::original(face))?;
                if let Some(v) = var {
                    self.face_var.insert(face.clone(), v.clone());
                    if self.var(v).is_none() {
                        self.vars.push(ScalarVar { name: v.clone(), lift: Monomial::face(face) });
                    }
                }
            }
            HistoryEntry::Blowup { center, face } => self.do_blowup(center, face)?,
            HistoryEntry::Declare { face } => self.push_face(face.clone())?,
            HistoryEntry::AddVar { name, lift, defines } => {
                for f in lift.faces() {
                    if !self.has_face(f) {
                        return Err(BlowupError::UnknownFace(f.clone()));
                    }
                }
                if let Some(f) = defines {
                    if !self.has_face(f) {
                        return Err(BlowupError::UnknownFace(f.clone()));
                    }
                    self.face_var.insert(f.clone(), name.clone());
                }
                self.vars.push(ScalarVar { name: name.clone(), lift: lift.clone() });
            }
            HistoryEntry::Corner { corner } => {
                for f in &corner.in_faces {
                    if !self.has_face(f) {
                        return Err(BlowupError::UnknownFace(f.clone()));
                    }
                }
                self.corners.push(corner.clone());
            }
        }
        self.history.push(entry);
        Ok(())
    }

    fn do_blowup(&mut self, center: &BlowupCenter, name: &str) -> Result<(), BlowupError> {
        if center.contained_in.is_empty() {
            return Err(BlowupError::EmptyCenter(name.to_string()));
        }
        for f in &center.contained_in {
            if !self.has_face(f) {
                return Err(BlowupError::UnknownFace(f.clone()));
            }
        }
        for p in &center.parabolic {
            if self.var(p).is_none() {
                return Err(BlowupError::UnknownParabolicVar(p.clone()));
            }
        }
        let codim_ok = center.codim.eval(&Dims::new(3)) >= crate::phg_index::qi(2);
        if !codim_ok && center.diagonal_tag.is_none() {
            return Err(BlowupError::DegenerateCenter(name.to_string()));
        }
        let weight = |f: &String| -> Exponent {
            match self.face_var.get(f) {
                Some(v) if center.parabolic.contains(v) => Exponent::int(2),
                _ => Exponent::int(1),
            }
        };
        let order_at_center = |m: &Monomial| -> Exponent {
            let mut e = Exponent::zero();
            for f in &center.contained_in {
                let w = weight(f);
                let a = m.exp(f);
                e += Exponent {
                    c0: a.c0 * w.c0,
                    cn: a.cn * w.c0,
                    cmu: a.cmu * w.c0,
                };
            }
            e
        };
        let mut new_vars = self.vars.clone();
        for v in &mut new_vars {
            let e = order_at_center(&v.lift);
            v.lift.mul_face(name, e);
        }
        let mut new_lifts = self.face_lifts.clone();
        for m in new_lifts.values_mut() {
            let e = order_at_center(m);
            m.mul_face(name, e);
        }
        let origin = if center.is_parabolic() { FaceOrigin::ParabolicBlowup } else { FaceOrigin::RadialBlowup };
        self.push_face(FaceId { name: name.to_string(), origin, reconstructed: false })?;
        self.vars = new_vars;
        for (k, v) in new_lifts {
            self.face_lifts.insert(k, v);
        }
        self.centers.insert(name.to_string(), center.clone());
        Ok(())
    }

    pub fn blow_up(&self, center: BlowupCenter, name: &str) -> Result<CornerSpace, BlowupError> {
        let mut s = self.clone();
        s.apply(HistoryEntry::Blowup { center, face: name.to_string() })?;
        Ok(s)
    }

    /// Lift a monomial in the defining functions of faces present before
    /// later blowups to the current space.
    pub fn lift_face_monomial(&self, m: &Monomial) -> Result<Monomial, BlowupError> {
        let mut out = Monomial { prefactor_smooth: m.prefactor_smooth, ..Monomial::one() };
        for (f, e) in &m.exponents {
            let l = self.face_lifts.get(f).ok_or_else(|| BlowupError::UnknownFace(f.clone()))?;
            out = out.mul(&l.pow_exp(*e));
        }
        Ok(out)
    }

    pub fn to_json_table(&self) -> serde_json::Value {
        let faces: Vec<_> = self
            .faces
            .iter()
            .map(|f| {
                serde_json::json!({
                    "name": f.name,
                    "origin": f.origin,
                    "reconstructed": f.reconstructed,
                    "codim_of_center": self.centers.get(&f.name).map(|c| c.codim.to_string()),
                })
            })
            .collect();
        let mut lifts = serde_json::Map::new();
        for v in &self.vars {
            let terms: Vec<_> = v
                .lift
                .exponents
                .iter()
                .map(|(f, e)| serde_json::json!([f, e.to_string()]))
                .collect();
            lifts.insert(v.name.clone(), serde_json::Value::Array(terms));
        }
        serde_json::json!({
            "space": self.name,
            "faces": faces,
            "corners": self.corners,
            "lifts": lifts,
        })
    }
}

impl Monomial {
    /// Raise to a symbolic power; only constant powers of symbolic
    /// exponents stay affine, so non-constant powers require integer bases.
    fn pow_exp(&self, e: Exponent) -> Monomial {
        if e.is_constant() {
            return self.pow(e.c0);
        }
        let mut out = Monomial { prefactor_smooth: self.prefactor_smooth, ..Monomial::one() };
        for (f, a) in &self.exponents {
            assert!(a.is_constant(), "non-affine exponent product");
            out.mul_face(f, e.scale(a.c0));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceKind {
    BHeat,
    ConicHeat,
    ScHeat,
    AccDouble,
    AccHeat,
    ScTripleHeat,
    AccTripleHeat,
}

impl SpaceKind {
    pub const ALL: [SpaceKind; 7] = [
        SpaceKind::BHeat,
        SpaceKind::ConicHeat,
        SpaceKind::ScHeat,
        SpaceKind::AccDouble,
        SpaceKind::AccHeat,
        SpaceKind::ScTripleHeat,
        SpaceKind::AccTripleHeat,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SpaceKind::BHeat => "b_heat",
            SpaceKind::ConicHeat => "conic_heat",
            SpaceKind::ScHeat => "sc_heat",
            SpaceKind::AccDouble => "acc_double",
            SpaceKind::AccHeat => "acc_heat",
            SpaceKind::ScTripleHeat => "sc_triple_heat",
            SpaceKind::AccTripleHeat => "acc_triple_heat",
        }
    }
}

impl fmt::Display for SpaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SpaceKind {
    type Err = BlowupError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SpaceKind::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| BlowupError::UnknownKind(s.to_string()))
    }
}

fn n_plus(c: i64) -> Exponent {
    Exponent::n() + Exponent::int(c)
}

fn two_n_plus(c: i64) -> Exponent {
    Exponent::n().scale(crate::phg_index::qi(2)) + Exponent::int(c)
}

fn history_b_heat() -> Vec<HistoryEntry> {
    vec![
        HistoryEntry::Base { face: "F_100".into(), var: Some("x".into()) },
        HistoryEntry::Base { face: "F_010".into(), var: Some("x'".into()) },
        HistoryEntry::Base { face: "F_001".into(), var: Some("t".into()) },
        HistoryEntry::Blowup { center: BlowupCenter::radial(["F_100", "F_010"], 2), face: "F_110".into() },
        HistoryEntry::Blowup {
            center: BlowupCenter::radial(["F_001"], n_plus(1)).diagonal("Delta(MxM)").parabolic_in("t"),
            face: "F_d2".into(),
        },
    ]
}

fn history_conic_heat() -> Vec<HistoryEntry> {
    vec![
        HistoryEntry::Base { face: "F_100".into(), var: Some("x".into()) },
        HistoryEntry::Base { face: "F_010".into(), var: Some("x'".into()) },
        HistoryEntry::Base { face: "F_001".into(), var: Some("t".into()) },
        HistoryEntry::Blowup {
            center: BlowupCenter::radial(["F_100", "F_010", "F_001"], 3).parabolic_in("t"),
            face: "F_112".into(),
        },
        HistoryEntry::Blowup {
            center: BlowupCenter::radial(["F_001"], n_plus(1)).diagonal("Delta(M0xM0)").parabolic_in("t"),
            face: "F_d2".into(),
        },
    ]
}

fn history_sc_heat() -> Vec<HistoryEntry> {
    vec![
        HistoryEntry::Base { face: "F_100".into(), var: Some("x".into()) },
        HistoryEntry::Base { face: "F_010".into(), var: Some("x'".into()) },
        HistoryEntry::Base { face: "F_001".into(), var: Some("t".into()) },
        HistoryEntry::Blowup { center: BlowupCenter::radial(["F_100", "F_010"], 2), face: "F_110".into() },
        HistoryEntry::Blowup {
            center: BlowupCenter::radial(["F_110"], n_plus(1)).diagonal("Delta(YxY)"),
            face: "F_220".into(),
        },
        HistoryEntry::Blowup {
            center: BlowupCenter::radial(["F_001"], n_plus(1)).diagonal("Delta(ZxZ)").parabolic_in("t"),
            face: "F_d2".into(),
        },
    ]
}

const ACC_EPS0: [&str; 4] = ["F_1010", "F_1001", "F_0110", "F_0101"];

fn acc_level_set(with_c1111: bool) -> Vec<HistoryEntry> {
    let mut h: Vec<HistoryEntry> = ACC_EPS0
        .iter()
        .map(|f| HistoryEntry::Declare { face: FaceId::original(f) })
        .collect();
    // digit order is (x, r, x', r')
    for (i, var) in ["x", "r", "x'", "r'"].iter().enumerate() {
        let faces = ACC_EPS0.iter().copied().filter(|f| f.as_bytes()[2 + i] == b'1');
        h.push(HistoryEntry::AddVar { name: var.to_string(), lift: Monomial::from_faces(faces), defines: None });
    }
    h.push(HistoryEntry::AddVar { name: "eps".into(), lift: Monomial::from_faces(ACC_EPS0), defines: None });
    let corners: &[(&str, &[&str])] = &[
        ("C_1110", &["F_1010", "F_0110"]),
        ("C_1101", &["F_1001", "F_0101"]),
        ("C_1011", &["F_1010", "F_1001"]),
        ("C_0111", &["F_0110", "F_0101"]),
    ];
    for (name, faces) in corners {
        h.push(HistoryEntry::Corner {
            corner: Corner { name: name.to_string(), in_faces: faces.iter().map(|s| s.to_string()).collect() },
        });
    }
    if with_c1111 {
        h.push(HistoryEntry::Corner {
            corner: Corner { name: "C_1111".into(), in_faces: ACC_EPS0.iter().map(|s| s.to_string()).collect() },
        });
    }
    h
}

fn history_sc_triple_heat() -> Vec<HistoryEntry> {
    let mut h = vec![
        HistoryEntry::Base { face: "F_10000".into(), var: Some("x".into()) },
        HistoryEntry::Base { face: "F_01000".into(), var: Some("x'".into()) },
        HistoryEntry::Base { face: "F_00100".into(), var: Some("x''".into()) },
        HistoryEntry::Base { face: "F_00010".into(), var: Some("t".into()) },
        HistoryEntry::Base { face: "F_00001".into(), var: Some("t'".into()) },
        HistoryEntry::Blowup {
            center: BlowupCenter::radial(["F_10000", "F_01000", "F_00100"], 3),
            face: "F_11100".into(),
        },
        HistoryEntry::Blowup { center: BlowupCenter::radial(["F_10000", "F_01000"], 2), face: "F_11000".into() },
        HistoryEntry::Blowup { center: BlowupCenter::radial(["F_01000", "F_00100"], 2), face: "F_01100".into() },
        HistoryEntry::Blowup { center: BlowupCenter::radial(["F_10000", "F_00100"], 2), face: "F_10100".into() },
        HistoryEntry::Blowup {
            center: BlowupCenter::radial(["F_11100"], two_n_plus(1)).diagonal("Delta3(Y)"),
            face: "F_22200".into(),
        },
        HistoryEntry::Blowup {
            center: BlowupCenter::radial(["F_11000"], n_plus(1)).diagonal("Delta(YxY')"),
            face: "F_22000".into(),
        },
        HistoryEntry::Blowup {
            center: BlowupCenter::radial(["F_01100"], n_plus(1)).diagonal("Delta(Y'xY'')"),
            face: "F_02200".into(),
        },
        HistoryEntry::Blowup {
            center: BlowupCenter::radial(["F_10100"], n_plus(1)).diagonal("Delta(YxY'')"),
            face: "F_20200".into(),
        },
        HistoryEntry::Blowup { center: BlowupCenter::radial(["F_00010", "F_00001"], 2), face: "F_00011".into() },
    ];
    h.push(HistoryEntry::AddVar {
        name: "t''".into(),
        lift: Monomial::face("F_00011"),
        defines: Some("F_00011".into()),
    });
    h.extend([
        HistoryEntry::Blowup {
            center: BlowupCenter::radial(["F_00011"], two_n_plus(3)).diagonal("Delta3(Z)").parabolic_in("t''"),
            face: "F_d3".into(),
        },
        HistoryEntry::Blowup {
            center: BlowupCenter::radial(["F_00010"], n_plus(1)).diagonal("Delta(ZxZ')").parabolic_in("t"),
            face: "F_d20".into(),
        },
        HistoryEntry::Blowup {
            center: BlowupCenter::radial(["F_00001"], n_plus(1)).diagonal("Delta(Z'xZ'')").parabolic_in("t'"),
            face: "F_d02".into(),
        },
        HistoryEntry::Blowup {
            center: BlowupCenter::radial(["F_00011"], n_plus(1)).diagonal("Delta(ZxZ'')").parabolic_in("t''"),
            face: "F_d22".into(),
        },
        HistoryEntry::Declare {
            face: FaceId { name: "F_00022".into(), origin: FaceOrigin::OriginalBoundary, reconstructed: true },
        },
    ]);
    h
}

fn history_acc_triple_heat() -> Vec<HistoryEntry> {
    let mut h = Vec::new();
    for (i, p) in ["", "'", "''"].iter().enumerate() {
        h.push(HistoryEntry::Base { face: format!("X{i}"), var: Some(format!("x{p}")) });
        h.push(HistoryEntry::Base { face: format!("R{i}"), var: Some(format!("r{p}")) });
    }
    h.push(HistoryEntry::Base { face: "T_t".into(), var: Some("t".into()) });
    h.push(HistoryEntry::Base { face: "T_s".into(), var: Some("s".into()) });
    let y = |i: usize| [format!("X{i}"), format!("R{i}")];
    let mk = |faces: Vec<String>, codim: Exponent, diag: Option<&str>, par: &[&str], name: &str| {
        HistoryEntry::Blowup {
            center: BlowupCenter {
                contained_in: faces.into_iter().collect(),
                diagonal_tag: diag.map(String::from),
                parabolic: par.iter().map(|s| s.to_string()).collect(),
                codim,
            },
            face: name.to_string(),
        }
    };
    let cat = |parts: &[&[String]], extra: &[&str]| -> Vec<String> {
        let mut v: Vec<String> = parts.iter().flat_map(|p| p.iter().cloned()).collect();
        v.extend(extra.iter().map(|s| s.to_string()));
        v
    };
    let (y0, y1, y2) = (y(0), y(1), y(2));
    h.push(mk(cat(&[&y0, &y1, &y2], &["T_t", "T_s"]), Exponent::int(8), None, &["t", "s"], "S_11122"));
    h.push(mk(cat(&[&y0, &y1], &["T_t"]), Exponent::int(5), None, &["t"], "S_11020"));
    h.push(mk(cat(&[&y1, &y2], &["T_s"]), Exponent::int(5), None, &["s"], "S_01102"));
    h.push(mk(cat(&[&y0, &y2], &["T_t", "T_s"]), Exponent::int(6), None, &["s", "t"], "S_10122"));
    h.push(mk(cat(&[&y0, &y1, &y2], &[]), Exponent::int(6), None, &[], "S_111"));
    h.push(mk(cat(&[&y0, &y1], &[]), Exponent::int(4), None, &[], "S_110"));
    h.push(mk(cat(&[&y1, &y2], &[]), Exponent::int(4), None, &[], "S_011"));
    h.push(mk(cat(&[&y0, &y2], &[]), Exponent::int(4), None, &[], "S_101"));
    h.push(mk(vec!["T_t".into(), "T_s".into()], two_n_plus(4), Some("tD"), &["s", "t"], "S_td"));
    h.push(mk(vec!["T_t".into()], n_plus(2), Some("D_110"), &["t"], "S_d20"));
    h.push(mk(vec!["T_s".into()], n_plus(2), Some("D_011"), &["s"], "S_d02"));
    h.push(mk(vec!["T_t".into(), "T_s".into()], n_plus(3), Some("D_101"), &["s", "t"], "S_d22"));
    h
}

pub fn space_history(kind: SpaceKind) -> Vec<HistoryEntry> {
    match kind {
        SpaceKind::BHeat => history_b_heat(),
        SpaceKind::ConicHeat => history_conic_heat(),
        SpaceKind::ScHeat => history_sc_heat(),
        SpaceKind::AccDouble => acc_level_set(true),
        SpaceKind::AccHeat => acc_level_set(false),
        SpaceKind::ScTripleHeat => history_sc_triple_heat(),
        SpaceKind::AccTripleHeat => history_acc_triple_heat(),
    }
}

pub fn build_space(kind: SpaceKind) -> CornerSpace {
    CornerSpace::replay(kind.as_str(), &space_history(kind)).expect("built-in histories are valid")
}

/// The faces a kind is tabulated with (the acc triple space reports its
/// twelve blowup faces; everything else its full face list).
pub fn tabulated_faces(space: &CornerSpace, kind: SpaceKind) -> Vec<String> {
    match kind {
        SpaceKind::AccTripleHeat => space.blowup_faces(),
        _ => space.face_names(),
    }
}

/// A b-map given by its lifting matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BMapSpec {
    pub name: String,
    pub source: String,
    pub target: String,
    /// target face -> (source face -> e(i,j))
    pub rows: BTreeMap<String, BTreeMap<String, u32>>,
    /// Rows built from local defining functions; ignored by the b-fibration test.
    #[serde(default)]
    pub local_rows: BTreeSet<String>,
    /// Source face -> target faces it lies over (used for infinite-order
    /// propagation); defaults to the faces of its rows.
    #[serde(default)]
    pub support: BTreeMap<String, BTreeSet<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FibrationWitness {
    pub column: String,
    pub row_a: String,
    pub row_b: String,
}

impl BMapSpec {
    pub fn identity(space: &CornerSpace) -> BMapSpec {
        let mut rows = BTreeMap::new();
        for f in &space.faces {
            rows.insert(f.name.clone(), BTreeMap::from([(f.name.clone(), 1)]));
        }
        BMapSpec {
            name: "id".into(),
            source: space.name.clone(),
            target: space.name.clone(),
            rows,
            local_rows: BTreeSet::new(),
            support: BTreeMap::new(),
        }
    }

    pub fn from_lifts(name: &str, source: &str, target: &str, lifts: &BTreeMap<String, Monomial>) -> Result<Self, BlowupError> {
        let mut rows = BTreeMap::new();
        for (t, m) in lifts {
            let mut r = BTreeMap::new();
            for (f, e) in &m.exponents {
                let ok = e.is_constant() && e.c0.is_integer() && e.c0 > num_rational::Rational64::zero();
                if !ok {
                    return Err(BlowupError::NonMonomial(t.clone()));
                }
                r.insert(f.clone(), *e.c0.numer() as u32);
            }
            rows.insert(t.clone(), r);
        }
        Ok(BMapSpec {
            name: name.to_string(),
            source: source.to_string(),
            target: target.to_string(),
            rows,
            local_rows: BTreeSet::new(),
            support: BTreeMap::new(),
        })
    }

    pub fn e(&self, target_face: &str, source_face: &str) -> u32 {
        self.rows.get(target_face).and_then(|r| r.get(source_face)).copied().unwrap_or(0)
    }

    pub fn row_monomial(&self, target_face: &str) -> Option<Monomial> {
        self.rows.get(target_face).map(|r| {
            let mut m = Monomial::one();
            for (f, e) in r {
                m.mul_face(f, Exponent::int(*e as i64));
            }
            m
        })
    }

    pub fn source_faces(&self) -> BTreeSet<String> {
        self.rows.values().flat_map(|r| r.keys().cloned()).collect()
    }

    /// Dense matrix `e(i,j)` with the given face orders.
    pub fn matrix(&self, targets: &[String], sources: &[String]) -> Vec<Vec<u32>> {
        targets.iter().map(|t| sources.iter().map(|s| self.e(t, s)).collect()).collect()
    }

    /// Target faces a source face lies over.
    pub fn lies_over(&self, source_face: &str) -> BTreeSet<String> {
        if let Some(s) = self.support.get(source_face) {
            return s.clone();
        }
        self.rows
            .iter()
            .filter(|(_, r)| r.contains_key(source_face))
            .map(|(t, _)| t.clone())
            .collect()
    }

    /// Target face a source face is mapped onto, or `None` for the interior.
    /// Non-local rows take precedence.
    pub fn image_face(&self, source_face: &str) -> Option<String> {
        let mut local = None;
        for (t, r) in &self.rows {
            if r.contains_key(source_face) {
                if self.local_rows.contains(t) {
                    local.get_or_insert_with(|| t.clone());
                } else {
                    return Some(t.clone());
                }
            }
        }
        local
    }
}

pub fn lift_monomial(map: &BMapSpec, m: &Monomial) -> Result<Monomial, BlowupError> {
    let mut out = Monomial { prefactor_smooth: m.prefactor_smooth, ..Monomial::one() };
    for (f, e) in &m.exponents {
        let row = map
            .rows
            .get(f)
            .ok_or_else(|| BlowupError::NotInImage { face: f.clone(), map: map.name.clone() })?;
        for (s, k) in row {
            out.mul_face(s, e.scale(crate::phg_index::qi(*k as i64)));
        }
    }
    Ok(out)
}

/// Lift through a chain applied right to left: `chain[0]` is the outermost.
pub fn lift_monomial_chain(chain: &[BMapSpec], m: &Monomial) -> Result<Monomial, BlowupError> {
    let mut cur = m.clone();
    for map in chain {
        cur = lift_monomial(map, &cur)?;
    }
    Ok(cur)
}

pub fn lifting_matrix(map: &BMapSpec) -> (Vec<String>, Vec<String>, Vec<Vec<u32>>) {
    let targets: Vec<String> = map.rows.keys().cloned().collect();
    let sources: Vec<String> = map.source_faces().into_iter().collect();
    let m = map.matrix(&targets, &sources);
    (targets, sources, m)
}

/// Column condition: each source face appears in at most one non-local row.
pub fn is_b_fibration(map: &BMapSpec) -> (bool, Option<FibrationWitness>) {
    let mut seen: BTreeMap<&str, &str> = BTreeMap::new();
    for (t, r) in &map.rows {
        if map.local_rows.contains(t) {
            continue;
        }
        for (s, e) in r {
            if *e == 0 {
                continue;
            }
            if let Some(prev) = seen.insert(s, t) {
                return (
                    false,
                    Some(FibrationWitness { column: s.clone(), row_a: prev.to_string(), row_b: t.clone() }),
                );
            }
        }
    }
    (true, None)
}

/// Jacobian exponents for [`density_lift`].
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct JacobianTable {
    pub overrides: BTreeMap<String, Exponent>,
}

impl JacobianTable {
    pub fn with(mut self, face: &str, e: Exponent) -> Self {
        self.overrides.insert(face.to_string(), e);
        self
    }

    /// Overrides used for the sc triple heat space.
    pub fn sc_triple() -> Self {
        JacobianTable::default()
            .with("F_22200", two_n_plus(1))
            .with("F_00022", Exponent::zero())
    }

    pub fn jacobian(&self, space: &CornerSpace, face: &str) -> Result<Exponent, BlowupError> {
        if let Some(e) = self.overrides.get(face) {
            return Ok(*e);
        }
        let f = space.face(face).ok_or_else(|| BlowupError::UnknownFace(face.to_string()))?;
        if f.reconstructed {
            return Err(BlowupError::UnconfiguredFace(face.to_string()));
        }
        match space.centers.get(face) {
            Some(c) => Ok(c.default_jacobian()),
            None => Ok(Exponent::zero()),
        }
    }
}

/// Lift a density weight (face monomial on the pre-blowup space times a
/// smooth density) to the current space.
pub fn density_lift(space: &CornerSpace, weight: &Monomial, table: &JacobianTable) -> Result<Monomial, BlowupError> {
    let mut out = space.lift_face_monomial(weight)?;
    for f in &space.faces {
        let j = table.jacobian(space, &f.name)?;
        out.mul_face(&f.name, j);
    }
    Ok(out)
}

/// Which pair of the three factors a projection keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TripleProjection {
    Left,
    Right,
    Center,
}

impl TripleProjection {
    pub const ALL: [TripleProjection; 3] = [TripleProjection::Left, TripleProjection::Right, TripleProjection::Center];

    pub fn map_name(&self) -> &'static str {
        match self {
            TripleProjection::Left => "beta_L",
            TripleProjection::Right => "beta_R",
            TripleProjection::Center => "beta_C",
        }
    }

    fn slots(&self) -> (usize, usize) {
        match self {
            TripleProjection::Left => (0, 1),
            TripleProjection::Right => (1, 2),
            TripleProjection::Center => (0, 2),
        }
    }

    /// Diagonal face of the triple space mapped onto `F_d2` besides `F_d3`.
    fn own_diagonal(&self) -> &'static str {
        match self {
            TripleProjection::Left => "F_d20",
            TripleProjection::Right => "F_d02",
            TripleProjection::Center => "F_d22",
        }
    }

    /// Whether a time face `F_000de` lies in the `rho_001` row.
    fn time_row(&self, d: u8, e: u8) -> bool {
        match self {
            TripleProjection::Left => d == 1,
            TripleProjection::Right => e == 1,
            TripleProjection::Center => d > 0 && e > 0,
        }
    }

    fn time_support(&self, d: u8, e: u8) -> bool {
        match self {
            TripleProjection::Left => d > 0,
            TripleProjection::Right => e > 0,
            TripleProjection::Center => d > 0 && e > 0,
        }
    }
}

impl FromStr for TripleProjection {
    type Err = BlowupError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "beta_L" | "L" | "left" => Ok(TripleProjection::Left),
            "beta_R" | "R" | "right" => Ok(TripleProjection::Right),
            "beta_C" | "C" | "center" => Ok(TripleProjection::Center),
            _ => Err(BlowupError::UnknownMap(s.to_string())),
        }
    }
}

fn spatial_row(a: u8, b: u8) -> Option<&'static str> {
    match (a, b) {
        (1, 0) => Some("F_100"),
        (0, 1) => Some("F_010"),
        (1, 1) => Some("F_110"),
        (2, 2) => Some("F_220"),
        _ => None,
    }
}

/// Projection of the sc triple heat space onto one copy of the sc heat
/// space, read off from the face labels.
pub fn sc_triple_projection(triple: &CornerSpace, p: TripleProjection) -> BMapSpec {
    let mut rows: BTreeMap<String, BTreeMap<String, u32>> = BTreeMap::new();
    let mut support: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let (i, j) = p.slots();
    for f in &triple.faces {
        let name = f.name.as_str();
        let mut over = BTreeSet::new();
        let mut add = |row: &str, over: &mut BTreeSet<String>| {
            rows.entry(row.to_string()).or_default().insert(name.to_string(), 1);
            over.insert(row.to_string());
        };
        if let Some(rest) = name.strip_prefix("F_d") {
            if name == "F_d3" || name == p.own_diagonal() {
                add("F_d2", &mut over);
            }
            // the third time variable vanishes on F_d22
            if rest == "22" {
                add("F_001", &mut over);
            }
        } else {
            let digits: Vec<u8> = name[2..].bytes().map(|c| c - b'0').collect();
            let (a, b) = (digits[i], digits[j]);
            let (d, e) = (digits[3], digits[4]);
            if let Some(r) = spatial_row(a, b) {
                add(r, &mut over);
            }
            if a > b {
                over.insert("F_100".into());
            } else if a < b {
                over.insert("F_010".into());
            }
            if p.time_row(d, e) {
                add("F_001", &mut over);
            }
            if p.time_support(d, e) {
                over.insert("F_001".into());
            }
        }
        support.insert(name.to_string(), over);
    }
    BMapSpec {
        name: p.map_name().to_string(),
        source: triple.name.clone(),
        target: SpaceKind::ScHeat.as_str().to_string(),
        rows,
        local_rows: BTreeSet::from(["F_001".to_string()]),
        support,
    }
}

/// Blow-down map of a space onto the product it was built from: rows are
/// the lifts of the original faces.
pub fn blowdown_map(space: &CornerSpace) -> Result<BMapSpec, BlowupError> {
    let mut lifts = BTreeMap::new();
    for h in &space.history {
        if let HistoryEntry::Base { face, .. } = h {
            lifts.insert(face.clone(), space.face_lifts[face].clone());
        }
    }
    BMapSpec::from_lifts("beta_h", &space.name, "base", &lifts)
}

/// `e` as a rational exponent for display of half-powers.
pub fn half(e: Exponent) -> Exponent {
    e.scale(q(1, 2))
}

pub fn is_unit_exponent(e: &Exponent) -> bool {
    e.is_constant() && e.c0.is_one()
}
