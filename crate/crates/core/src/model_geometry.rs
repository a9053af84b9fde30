//! Warped-product model families `dx² + f_ε(x)² h` with `h` a fixed round
//! sphere metric, their per-mode radial operators, indicial data and the
//! piecewise weight function used in the eigenvalue convergence argument.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("x = {x} lies outside the domain [{lo}, {hi}]")]
    OutsideDomain { x: f64, lo: f64, hi: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown {what} `{value}`")]
    UnknownVariant { what: &'static str, value: String },
}

pub type Result<T> = std::result::Result<T, GeometryError>;

/// One separated angular mode. `mu` is an eigenvalue of the unit round sphere
/// Laplacian; the cone slope enters through the warping factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub l: u32,
    pub mu: f64,
    pub multiplicity: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossSectionKind {
    RoundSphere { dim: u32 },
    ExplicitModes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossSection {
    pub kind: CrossSectionKind,
    pub modes: Vec<Mode>,
}

/// Dimension of the space of degree `l` spherical harmonics on `S^dim`.
pub fn harmonic_multiplicity(dim: u32, l: u32) -> u64 {
    if dim == 0 {
        return if l <= 1 { 1 } else { 0 };
    }
    let binom = |a: u64, b: u64| -> u64 {
        if b > a {
            return 0;
        }
        let mut r: u64 = 1;
        for i in 0..b {
            r = r * (a - i) / (i + 1);
        }
        r
    };
    let (d, l) = (dim as u64, l as u64);
    let top = binom(l + d, d);
    let low = if l >= 2 { binom(l + d - 2, d) } else { 0 };
    top - low
}

impl CrossSection {
    /// Unit sphere `S^dim` with modes `ℓ = 0..=l_max`.
    pub fn round_sphere(dim: u32, l_max: u32) -> Self {
        let modes = (0..=l_max)
            .map(|l| Mode {
                l,
                mu: (l as f64) * ((l + dim) as f64 - 1.0),
                multiplicity: harmonic_multiplicity(dim, l),
            })
            .collect();
        CrossSection { kind: CrossSectionKind::RoundSphere { dim }, modes }
    }

    pub fn explicit(modes: Vec<(f64, u64)>) -> Result<Self> {
        let mut out = Vec::with_capacity(modes.len());
        let mut prev = f64::NEG_INFINITY;
        for (i, (mu, m)) in modes.into_iter().enumerate() {
            if mu < 0.0 || mu < prev || m == 0 {
                return Err(GeometryError::InvalidParameter(format!(
                    "explicit mode {i}: μ must be nondecreasing and ≥ 0, multiplicity > 0"
                )));
            }
            prev = mu;
            out.push(Mode { l: i as u32, mu, multiplicity: m });
        }
        if out.first().map(|m| m.mu != 0.0).unwrap_or(true) {
            return Err(GeometryError::InvalidParameter("μ = 0 must be present".into()));
        }
        Ok(CrossSection { kind: CrossSectionKind::ExplicitModes, modes: out })
    }

    /// Total volume of the unit cross-section, needed for the angular addition
    /// formula when assembling full kernels.
    pub fn volume(&self) -> f64 {
        match self.kind {
            CrossSectionKind::RoundSphere { dim } => sphere_volume(dim),
            CrossSectionKind::ExplicitModes => 1.0,
        }
    }
}

/// Volume of the unit sphere `S^dim ⊂ R^{dim+1}`.
pub fn sphere_volume(dim: u32) -> f64 {
    let k = (dim as f64 + 1.0) / 2.0;
    2.0 * std::f64::consts::PI.powf(k) / puruspe::gamma(k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    Dirichlet,
    Neumann,
}

impl FromStr for BoundaryCondition {
    type Err = GeometryError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "dirichlet" => Ok(Self::Dirichlet),
            "neumann" => Ok(Self::Neumann),
            other => Err(GeometryError::UnknownVariant { what: "boundary condition", value: other.into() }),
        }
    }
}

/// Smooth cap: `F(ρ) = ρ` for `ρ ≤ ρ_b/4`, `F(ρ) = cρ + d` for `ρ ≥ ρ_b`,
/// quintic blend in between matching value, slope and curvature at both ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapProfile {
    pub c: f64,
    pub d: f64,
    pub rho_b: f64,
    blend: [f64; 6],
}

impl CapProfile {
    pub fn new(c: f64, d: f64, rho_b: f64) -> Result<Self> {
        if !(c > 0.0 && rho_b > 0.0) {
            return Err(GeometryError::InvalidParameter("cap needs c > 0, ρ_b > 0".into()));
        }
        let a = rho_b / 4.0;
        let blend = hermite_quintic(a, [a, 1.0, 0.0], rho_b, [c * rho_b + d, c, 0.0]);
        let cap = CapProfile { c, d, rho_b, blend };
        // positivity on the blend interval
        for i in 0..=200 {
            let r = a + (rho_b - a) * i as f64 / 200.0;
            if cap.eval(r).0 <= 0.0 {
                return Err(GeometryError::InvalidParameter(format!("cap not positive at ρ = {r}")));
            }
        }
        Ok(cap)
    }

    pub fn inner(&self) -> f64 {
        self.rho_b / 4.0
    }

    /// `(F, F', F'')` at `ρ ≥ 0`.
    pub fn eval(&self, rho: f64) -> (f64, f64, f64) {
        let a = self.inner();
        if rho <= a {
            (rho, 1.0, 0.0)
        } else if rho >= self.rho_b {
            (self.c * rho + self.d, self.c, 0.0)
        } else {
            let s = rho - a;
            let k = &self.blend;
            let v = k[0] + s * (k[1] + s * (k[2] + s * (k[3] + s * (k[4] + s * k[5]))));
            let d1 = k[1] + s * (2.0 * k[2] + s * (3.0 * k[3] + s * (4.0 * k[4] + s * 5.0 * k[5])));
            let d2 = 2.0 * k[2] + s * (6.0 * k[3] + s * (12.0 * k[4] + s * 20.0 * k[5]));
            (v, d1, d2)
        }
    }
}

/// Coefficients in powers of `(ρ − a)` of the quintic with prescribed
/// value/first/second derivative at `a` and `b`.
fn hermite_quintic(a: f64, fa: [f64; 3], b: f64, fb: [f64; 3]) -> [f64; 6] {
    let h = b - a;
    let (c0, c1, c2) = (fa[0], fa[1], fa[2] / 2.0);
    // remaining unknowns c3, c4, c5 from the conditions at b
    let r0 = fb[0] - (c0 + c1 * h + c2 * h * h);
    let r1 = fb[1] - (c1 + 2.0 * c2 * h);
    let r2 = fb[2] - 2.0 * c2;
    let (h2, h3) = (h * h, h * h * h);
    let c3 = (10.0 * r0 - 4.0 * r1 * h + 0.5 * r2 * h2) / h3;
    let c4 = (-15.0 * r0 + 7.0 * r1 * h - r2 * h2) / (h3 * h);
    let c5 = (6.0 * r0 - 3.0 * r1 * h + 0.5 * r2 * h2) / (h3 * h2);
    [c0, c1, c2, c3, c4, c5]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// `f_ε(x) = √(ε² + c²x²)` on `[−L, L]`; two cones meeting at the tip.
    Neck,
    /// `f_ε(x) = εF(x/ε)` on `[0, L]`.
    Capped(CapProfile),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    Neck,
    Capped,
}

impl FromStr for ProfileKind {
    type Err = GeometryError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "neck" => Ok(Self::Neck),
            "capped" => Ok(Self::Capped),
            other => Err(GeometryError::UnknownVariant { what: "profile", value: other.into() }),
        }
    }
}

impl fmt::Display for ProfileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Neck => "neck",
            Self::Capped => "capped",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpFamily {
    pub n: u32,
    pub cross_section: CrossSection,
    pub profile: Profile,
    pub c: f64,
    pub outer_bc: BoundaryCondition,
    /// Outer radius `L` of the domain; 1 unless a test needs a larger box.
    pub length: f64,
    /// Constant nonnegative potential standing in for the curvature term.
    pub potential: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricSample {
    pub g_xx: f64,
    pub angular: f64,
}

impl WarpFamily {
    pub fn capped(n: u32, c: f64, l_max: u32) -> Result<Self> {
        Self::capped_with(n, c, 0.0, 2.0, l_max)
    }

    pub fn capped_with(n: u32, c: f64, d: f64, rho_b: f64, l_max: u32) -> Result<Self> {
        check_n(n)?;
        Ok(WarpFamily {
            n,
            cross_section: CrossSection::round_sphere(n - 1, l_max),
            profile: Profile::Capped(CapProfile::new(c, d, rho_b)?),
            c,
            outer_bc: BoundaryCondition::Dirichlet,
            length: 1.0,
            potential: 0.0,
        })
    }

    pub fn neck(n: u32, c: f64, l_max: u32) -> Result<Self> {
        check_n(n)?;
        if c <= 0.0 {
            return Err(GeometryError::InvalidParameter("c must be positive".into()));
        }
        Ok(WarpFamily {
            n,
            cross_section: CrossSection::round_sphere(n - 1, l_max),
            profile: Profile::Neck,
            c,
            outer_bc: BoundaryCondition::Dirichlet,
            length: 1.0,
            potential: 0.0,
        })
    }

    pub fn with_length(mut self, length: f64) -> Self {
        self.length = length;
        self
    }

    pub fn kind(&self) -> ProfileKind {
        match self.profile {
            Profile::Neck => ProfileKind::Neck,
            Profile::Capped(_) => ProfileKind::Capped,
        }
    }

    pub fn domain(&self) -> (f64, f64) {
        match self.profile {
            Profile::Neck => (-self.length, self.length),
            Profile::Capped(_) => (0.0, self.length),
        }
    }

    fn check(&self, x: f64) -> Result<()> {
        let (lo, hi) = self.domain();
        if x < lo || x > hi || !x.is_finite() {
            return Err(GeometryError::OutsideDomain { x, lo, hi });
        }
        Ok(())
    }

    /// `(f, f')` at `x` for parameter `ε ≥ 0`; no domain check.
    pub fn warp(&self, x: f64, eps: f64) -> (f64, f64) {
        match &self.profile {
            Profile::Neck => {
                let f = (eps * eps + self.c * self.c * x * x).sqrt();
                let df = if f > 0.0 { self.c * self.c * x / f } else { self.c * x.signum() };
                (f, df)
            }
            Profile::Capped(cap) => {
                if eps == 0.0 {
                    (self.c * x, self.c)
                } else {
                    let (v, d1, _) = cap.eval(x / eps);
                    (eps * v, d1)
                }
            }
        }
    }

    /// Largest value of `f_ε` on the domain (the profiles are monotone in |x|).
    pub fn warp_max(&self, eps: f64) -> f64 {
        self.warp(self.length, eps).0
    }

    /// Radius beyond which the capped family is an exact cone.
    pub fn cone_radius(&self, eps: f64) -> f64 {
        match &self.profile {
            Profile::Capped(cap) => eps * cap.rho_b,
            Profile::Neck => 0.0,
        }
    }

    pub fn metric_eval(&self, x: f64, eps: f64) -> Result<MetricSample> {
        self.check(x)?;
        let f = self.warp(x, eps).0;
        Ok(MetricSample { g_xx: 1.0, angular: f * f })
    }

    /// Metric of the model space `Z` at radius `ρ`: `dρ² + F(ρ)² h`.
    pub fn metric_eval_z(&self, rho: f64) -> Result<MetricSample> {
        match &self.profile {
            Profile::Capped(cap) => {
                if rho < 0.0 {
                    return Err(GeometryError::OutsideDomain { x: rho, lo: 0.0, hi: f64::INFINITY });
                }
                let f = cap.eval(rho).0;
                Ok(MetricSample { g_xx: 1.0, angular: f * f })
            }
            Profile::Neck => {
                let f = (1.0 + self.c * self.c * rho * rho).sqrt();
                Ok(MetricSample { g_xx: 1.0, angular: f * f })
            }
        }
    }

    pub fn radial_operator(&self, mu: f64, eps: f64) -> Result<RadialOperator> {
        if mu < 0.0 || eps < 0.0 {
            return Err(GeometryError::InvalidParameter("μ and ε must be ≥ 0".into()));
        }
        if eps == 0.0 && matches!(self.profile, Profile::Neck) {
            return Err(GeometryError::InvalidParameter(
                "the neck at ε = 0 splits into two one-sided cones; solve the capped cone instead".into(),
            ));
        }
        let inner_bc = match (&self.profile, eps == 0.0) {
            (Profile::Capped(_), true) => InnerBc::FriedrichsCone,
            (Profile::Capped(_), false) => InnerBc::SmoothCap,
            (Profile::Neck, _) => InnerBc::None,
        };
        Ok(RadialOperator { family: self.clone(), mu, eps, inner_bc, outer_bc: self.outer_bc })
    }
}

fn check_n(n: u32) -> Result<()> {
    if n < 3 {
        return Err(GeometryError::InvalidParameter(format!("dimension n = {n} must be ≥ 3")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerBc {
    FriedrichsCone,
    SmoothCap,
    None,
}

/// `−(p u')' + q u = λ w u` with `p = w = f^{n−1}`, `q = (μ f^{−2} + V) f^{n−1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialOperator {
    pub family: WarpFamily,
    pub mu: f64,
    pub eps: f64,
    pub inner_bc: InnerBc,
    pub outer_bc: BoundaryCondition,
}

impl RadialOperator {
    pub fn n(&self) -> u32 {
        self.family.n
    }

    pub fn domain(&self) -> (f64, f64) {
        self.family.domain()
    }

    pub fn p(&self, x: f64) -> f64 {
        let f = self.family.warp(x, self.eps).0;
        f.powi(self.n() as i32 - 1)
    }

    pub fn w(&self, x: f64) -> f64 {
        self.p(x)
    }

    pub fn q(&self, x: f64) -> f64 {
        let f = self.family.warp(x, self.eps).0;
        let n = self.n() as i32;
        self.mu * f.powi(n - 3) + self.family.potential * f.powi(n - 1)
    }

    /// `f'/f`, the first-order coefficient of the operator divided by `n − 1`.
    pub fn log_derivative(&self, x: f64) -> f64 {
        let (f, df) = self.family.warp(x, self.eps);
        df / f
    }

    /// Slope of the profile at the tip, which fixes the indicial roots there.
    pub fn tip_slope(&self) -> f64 {
        match self.inner_bc {
            InnerBc::FriedrichsCone => self.family.c,
            InnerBc::SmoothCap => 1.0,
            InnerBc::None => 1.0,
        }
    }

    /// Exponent of the regular branch at the tip (0 for the neck).
    pub fn tip_exponent(&self) -> f64 {
        match self.inner_bc {
            InnerBc::None => 0.0,
            _ => indicial_roots(self.n(), self.mu, self.tip_slope()).gamma_plus,
        }
    }

    /// Applies the formal operator `(−(p u')' + q u)/w` to a function with
    /// known first and second derivatives.
    pub fn apply(&self, x: f64, u: f64, du: f64, d2u: f64) -> f64 {
        let n1 = self.n() as f64 - 1.0;
        -d2u - n1 * self.log_derivative(x) * du + self.q(x) / self.w(x) * u
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndicialData {
    pub gamma_plus: f64,
    pub gamma_minus: f64,
    pub nu: f64,
}

/// Roots of `γ² + (n−2)γ − μ/c² = 0`.
pub fn indicial_roots(n: u32, mu: f64, c: f64) -> IndicialData {
    let h = (n as f64 - 2.0) / 2.0;
    let nu = (h * h + mu / (c * c)).sqrt();
    IndicialData { gamma_plus: -h + nu, gamma_minus: -h - nu, nu }
}

/// True iff `x^γ` lies in the Friedrichs form domain, i.e. `γ > (2−n)/2`.
pub fn friedrichs_gate(n: u32, gamma: f64) -> bool {
    gamma > (2.0 - n as f64) / 2.0
}

/// `w_ε`: 1 outside the gluing region, `x` on the cone part, `ε` on the cap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightFunction {
    pub eps: f64,
    /// Outer edge of the gluing region; continuity forces it to equal δ = 1.
    pub delta: f64,
}

impl WeightFunction {
    pub fn new(eps: f64) -> Self {
        WeightFunction { eps, delta: 1.0 }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let r = x.abs();
        if r >= self.delta {
            1.0
        } else if r >= self.eps {
            r
        } else {
            self.eps
        }
    }
}

pub fn weight_eval(w: &WeightFunction, x: f64, eps: f64) -> f64 {
    WeightFunction { eps, ..*w }.eval(x)
}
