//! Model heat kernels (Euclidean, exact cone per mode, b-cylinder), heat
//! kernels of the model families from their eigen-expansion or by time
//! stepping, the two convergence probes, the fiber equation check for the
//! diagonal model `G₀`, the maximum-principle bound and Volterra series.
//!
//! Kernels are function kernels with respect to the Riemannian density.

use crate::model_geometry::{indicial_roots, GeometryError, ProfileKind, WarpFamily};
use crate::spectral::{bessel_j_zeros, solve_mode, Discretization, SLGrid, SpectralError};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HeatError {
    #[error("time must be positive, got {0}")]
    NonPositiveTime(f64),
    #[error("point {0} must be positive")]
    NonPositivePoint(f64),
    #[error("eigen-expansion tail too large at t = {t}: e^(-λ_max t) = {tail:e} with {count} eigenpairs")]
    TailUnreachable { t: f64, tail: f64, count: usize },
    #[error("quadrature error estimate {estimate:e} above tolerance {tolerance:e}")]
    Quadrature { estimate: f64, tolerance: f64 },
    #[error("kernel does not vanish at t = 0 (|K(0)| = {0:e})")]
    NotVolterra(f64),
    #[error("growth detected: sup-norm ratio {ratio:e} at j = {j}")]
    Growth { j: usize, ratio: f64 },
    #[error("truncation influence {influence:e} exceeds {tolerance:e}: probe too close to the artificial boundary")]
    TruncationInfluence { influence: f64, tolerance: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{0}")]
    Precondition(String),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub type Result<T> = std::result::Result<T, HeatError>;

fn check_t(t: f64) -> Result<()> {
    if !(t > 0.0) {
        return Err(HeatError::NonPositiveTime(t));
    }
    Ok(())
}

/// `e^{−z} I_ν(z)` for `z ≥ 0`: power series below `z = 10ν + 20`, Hankel
/// expansion above.
pub fn bessel_i_scaled(nu: f64, z: f64) -> f64 {
    if z == 0.0 {
        return if nu == 0.0 { 1.0 } else { 0.0 };
    }
    if z < 10.0 * nu + 20.0 {
        let lz = (z / 2.0).ln();
        let lg = if nu < 170.0 { puruspe::gamma(nu + 1.0).ln() } else { puruspe::ln_gamma(nu + 1.0) };
        let mut lt = nu * lz - lg - z;
        let mut sum = 0.0;
        let mut k = 0usize;
        loop {
            let term = lt.exp();
            sum += term;
            let kf = k as f64;
            if kf > z / 2.0 && term <= 1e-17 * sum {
                break;
            }
            k += 1;
            lt += 2.0 * lz - (k as f64).ln() - (k as f64 + nu).ln();
            if k > 100_000 {
                break;
            }
        }
        sum
    } else {
        let m = 4.0 * nu * nu;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..200 {
            let kf = k as f64;
            let next = -term * (m - (2.0 * kf - 1.0).powi(2)) / (8.0 * kf * z);
            if next.abs() > term.abs() {
                break;
            }
            term = next;
            sum += term;
            if term.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        sum / (2.0 * PI * z).sqrt()
    }
}

/// `(4πt)^{−n/2} exp(−|z − z'|²/(4t))`.
pub fn euclidean_kernel(n: usize, z: &[f64], zp: &[f64], t: f64) -> Result<f64> {
    check_t(t)?;
    if z.len() != n || zp.len() != n {
        return Err(HeatError::Dimension(format!("points must have {n} coordinates")));
    }
    let d2: f64 = z.iter().zip(zp).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((4.0 * PI * t).powf(-(n as f64) / 2.0) * (-d2 / (4.0 * t)).exp())
}

/// Exact-cone heat kernel of one angular mode, with respect to the measure
/// `c^{n−1} x^{n−1} dx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeModeKernel {
    pub nu: f64,
    pub n: u32,
    pub c: f64,
}

impl ConeModeKernel {
    pub fn new(nu: f64, n: u32) -> Self {
        ConeModeKernel { nu, n, c: 1.0 }
    }

    pub fn for_mode(n: u32, mu: f64, c: f64) -> Self {
        ConeModeKernel { nu: indicial_roots(n, mu, c).nu, n, c }
    }

    pub fn eval(&self, x: f64, xp: f64, t: f64) -> Result<f64> {
        check_t(t)?;
        if !(x > 0.0) {
            return Err(HeatError::NonPositivePoint(x));
        }
        if !(xp > 0.0) {
            return Err(HeatError::NonPositivePoint(xp));
        }
        let h = (self.n as f64 - 2.0) / 2.0;
        let z = x * xp / (2.0 * t);
        let gauss = (-(x - xp) * (x - xp) / (4.0 * t)).exp();
        Ok((x * xp).powf(-h) / (2.0 * t) * gauss * bessel_i_scaled(self.nu, z) / self.c.powi(self.n as i32 - 1))
    }
}

pub fn cone_mode_kernel(nu: f64, n: u32, x: f64, xp: f64, t: f64) -> Result<f64> {
    ConeModeKernel::new(nu, n).eval(x, xp, t)
}

/// Product kernel on the exact cylinder in `s = log σ`, one cross-section mode.
pub fn b_cylinder_kernel(s: f64, sp: f64, t: f64, mu: f64) -> Result<f64> {
    check_t(t)?;
    Ok((4.0 * PI * t).powf(-0.5) * (-(s - sp) * (s - sp) / (4.0 * t)).exp() * (-mu * t).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    #[serde(rename = "interior_F0101")]
    InteriorF0101,
    #[serde(rename = "scaled_F1010")]
    ScaledF1010,
    Side,
}

impl FromStr for Regime {
    type Err = HeatError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "interior_F0101" | "interior" => Ok(Self::InteriorF0101),
            "scaled_F1010" | "scaled" => Ok(Self::ScaledF1010),
            "side" => Ok(Self::Side),
            other => Err(HeatError::Precondition(format!("unknown regime `{other}`"))),
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::InteriorF0101 => "interior_F0101",
            Self::ScaledF1010 => "scaled_F1010",
            Self::Side => "side",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    FunctionKernel,
    Halfdensity,
}

/// Kernel values on a grid of point pairs and times.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelSample {
    pub points: Vec<(f64, f64)>,
    pub times: Vec<f64>,
    /// `values[p][t]`
    pub values: Vec<Vec<f64>>,
    pub regime: Regime,
    pub normalization: Normalization,
}

impl KernelSample {
    pub fn tabulate(
        points: &[(f64, f64)],
        times: &[f64],
        regime: Regime,
        f: impl Fn(f64, f64, f64) -> Result<f64>,
    ) -> Result<Self> {
        let values = points
            .iter()
            .map(|&(x, y)| times.iter().map(|&t| f(x, y, t)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Ok(KernelSample {
            points: points.to_vec(),
            times: times.to_vec(),
            values,
            regime,
            normalization: Normalization::FunctionKernel,
        })
    }

    /// Largest relative asymmetry over pairs present in both orders.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, &(x, y)) in self.points.iter().enumerate() {
            if let Some(j) = self.points.iter().position(|&(a, b)| a == y && b == x) {
                for (a, b) in self.values[i].iter().zip(&self.values[j]) {
                    worst = worst.max((a - b).abs() / a.abs().max(b.abs()).max(1e-300));
                }
            }
        }
        worst
    }

    pub fn is_positive(&self) -> bool {
        self.values.iter().flatten().all(|v| *v >= 0.0)
    }
}

/// Per-mode eigen-expansion `Σ_k e^{−λ_k t} u_k(x) u_k(x')` on one grid.
pub fn heat_from_modes(sol: &crate::spectral::ModeSolution, x: f64, xp: f64, t: f64, tail_tol: f64) -> Result<f64> {
    let last = *sol.values.last().unwrap_or(&0.0);
    let tail = (-last * t).exp();
    if tail > tail_tol {
        return Err(HeatError::TailUnreachable { t, tail, count: sol.values.len() });
    }
    Ok(sol.values.iter().enumerate().map(|(k, l)| (-l * t).exp() * sol.eval(k, x) * sol.eval(k, xp)).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionOptions {
    pub cells: usize,
    /// `e^{−λ_max t_min}` must fall below this
    pub tail_tol: f64,
}

impl Default for ExpansionOptions {
    fn default() -> Self {
        ExpansionOptions { cells: 2048, tail_tol: 1e-14 }
    }
}

/// Number of radial eigenpairs needed so the expansion tail is negligible at
/// `t_min`, estimated from the cone reference with slope `c`.
fn eigen_count(n: u32, mu: f64, slope: f64, length: f64, t_min: f64, tail_tol: f64) -> usize {
    let nu = indicial_roots(n, mu, slope).nu;
    let cut = -tail_tol.ln() + 4.0;
    let mut k = 0;
    let zeros = bessel_j_zeros(nu, 4096.min(((cut / t_min).sqrt() * length / PI) as usize + nu as usize + 8));
    for z in zeros {
        k += 1;
        if (z / length).powi(2) * t_min > cut {
            break;
        }
    }
    k + 2
}

/// Eigen-expansion of one radial mode of the family at `ε`, Richardson
/// extrapolated from grids with `N` and `2N` cells.
pub fn heat_from_spectrum(
    family: &WarpFamily,
    mu: f64,
    eps: f64,
    pairs: &[(f64, f64)],
    times: &[f64],
    opts: &ExpansionOptions,
) -> Result<Vec<Vec<f64>>> {
    for &t in times {
        check_t(t)?;
    }
    let t_min = times.iter().cloned().fold(f64::INFINITY, f64::min);
    let op = family.radial_operator(mu, eps)?;
    let slope = if eps == 0.0 { family.c } else { family.c.min(1.0) };
    let count = eigen_count(family.n, mu, slope, family.length, t_min, opts.tail_tol);
    let mut out = Vec::new();
    let sols = [opts.cells, 2 * opts.cells]
        .par_iter()
        .map(|&cells| {
            let grid = SLGrid::for_operator(&op, cells)?;
            let c = count.min(cells / 4);
            Ok(solve_mode(&op, &grid, c)?)
        })
        .collect::<Result<Vec<_>>>()?;
    for &(x, xp) in pairs {
        let mut row = Vec::new();
        for &t in times {
            let a = heat_from_modes(&sols[0], x, xp, t, opts.tail_tol)?;
            let b = heat_from_modes(&sols[1], x, xp, t, opts.tail_tol)?;
            row.push(b + (b - a) / 3.0);
        }
        out.push(row);
    }
    Ok(out)
}

/// `Σ_ℓ m_ℓ/|Y| · H_ℓ` over the cross-section modes. Per-mode kernels
/// decrease as `μ` grows, so the sum stops once a batch of modes adds less
/// than `tol` relative to the running total.
fn sum_modes(
    family: &WarpFamily,
    width: usize,
    tol: f64,
    f: impl Fn(&crate::model_geometry::Mode) -> Result<Vec<f64>> + Sync,
) -> Result<Vec<f64>> {
    let vol = family.cross_section.volume();
    let modes = &family.cross_section.modes;
    let batch = rayon::current_num_threads().clamp(2, 8);
    let mut total = vec![0.0; width];
    let mut start = 0;
    while start < modes.len() {
        let end = (start + batch).min(modes.len());
        let parts = modes[start..end]
            .par_iter()
            .map(|m| Ok(f(m)?.into_iter().map(|h| h * m.multiplicity as f64 / vol).collect::<Vec<_>>()))
            .collect::<Result<Vec<_>>>()?;
        let mut added = vec![0.0; width];
        for p in &parts {
            for (a, v) in added.iter_mut().zip(p) {
                *a += v;
            }
        }
        let last = parts.last().unwrap();
        for (t, a) in total.iter_mut().zip(&added) {
            *t += a;
        }
        let small = last.iter().zip(&total).all(|(l, t)| l.abs() <= tol * t.abs());
        if small {
            return Ok(total);
        }
        start = end;
    }
    Err(HeatError::Precondition(format!(
        "cross-section truncated at ℓ = {} is too low for this kernel evaluation",
        modes.len().saturating_sub(1)
    )))
}

/// Full kernel at coinciding angles: `Σ_ℓ m_ℓ/|Y| · H_ℓ(x, x', t)`.
pub fn full_kernel_eigen(
    family: &WarpFamily,
    eps: f64,
    x: f64,
    xp: f64,
    times: &[f64],
    opts: &ExpansionOptions,
) -> Result<Vec<f64>> {
    sum_modes(family, times.len(), 1e-13, |m| {
        Ok(heat_from_spectrum(family, m.mu, eps, &[(x, xp)], times, opts)?.remove(0))
    })
}

/// Exact-cone kernel on `[0, L]` with Dirichlet at `L`, from Bessel zeros.
pub fn cone_dirichlet_mode(n: u32, mu: f64, c: f64, length: f64, x: f64, xp: f64, t: f64, tail_tol: f64) -> Result<f64> {
    check_t(t)?;
    let nu = indicial_roots(n, mu, c).nu;
    let h = (n as f64 - 2.0) / 2.0;
    let count = eigen_count(n, mu, c, length, t, tail_tol);
    let mut s = 0.0;
    for z in bessel_j_zeros(nu, count) {
        let lambda = (z / length).powi(2);
        let jn1 = puruspe::besseljy(nu + 1.0, z).0;
        let norm2 = c.powi(n as i32 - 1) * length * length / 2.0 * jn1 * jn1 * length.powf(2.0 * h);
        let u = |y: f64| if y == 0.0 { 0.0 } else { (y / length).powf(-h) * puruspe::besseljy(nu, z * y / length).0 };
        s += (-lambda * t).exp() * u(x) * u(xp) / norm2;
    }
    Ok(s)
}

/// Full exact-cone kernel at coinciding angles, Dirichlet at `L`.
pub fn cone_dirichlet_full(family: &WarpFamily, x: f64, xp: f64, t: f64, tail_tol: f64) -> Result<f64> {
    let v = sum_modes(family, 1, 1e-13, |m| {
        Ok(vec![cone_dirichlet_mode(family.n, m.mu, family.c, family.length, x, xp, t, tail_tol)?])
    })?;
    Ok(v[0])
}

/// One-step time integrator for the semi-discrete heat equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stepper {
    /// Crank–Nicolson after four backward Euler half steps
    CrankNicolson,
    /// `2·BE(dt/2)² − BE(dt)`: second order and damps stiff modes to zero
    ExtrapolatedEuler,
}

/// Evolves `M v' = −A v` from `v` over `[0, t]` (values in the substituted
/// variable, free nodes only).
pub fn evolve(disc: &Discretization, mut v: Vec<f64>, t: f64, steps: usize, stepper: Stepper) -> Result<Vec<f64>> {
    check_t(t)?;
    if v.len() != disc.size() {
        return Err(HeatError::Dimension(format!("{} values for {} free nodes", v.len(), disc.size())));
    }
    let steps = steps.max(4);
    let dt = t / steps as f64;
    let m_times = |v: &[f64]| -> Vec<f64> { v.iter().enumerate().map(|(j, a)| disc.mass(j) * a).collect() };
    match stepper {
        Stepper::CrankNicolson => {
            for _ in 0..4 {
                v = disc.solve_mass_plus(dt / 2.0, &m_times(&v));
            }
            for _ in 2..steps {
                let av = disc.apply(&v);
                let rhs: Vec<f64> = m_times(&v).iter().zip(&av).map(|(m, a)| m - dt / 2.0 * a).collect();
                v = disc.solve_mass_plus(dt / 2.0, &rhs);
            }
        }
        Stepper::ExtrapolatedEuler => {
            for _ in 0..steps {
                let whole = disc.solve_mass_plus(dt, &m_times(&v));
                let half = disc.solve_mass_plus(dt / 2.0, &m_times(&v));
                let half = disc.solve_mass_plus(dt / 2.0, &m_times(&half));
                v = half.iter().zip(&whole).map(|(h, w)| 2.0 * h - w).collect();
            }
        }
    }
    Ok(v)
}

fn to_nodes(disc: &Discretization, v: &[f64]) -> Vec<f64> {
    let (f0, _) = disc.free();
    let g = disc.gamma();
    let xs = disc.nodes();
    let mut full = vec![0.0; xs.len()];
    for (j, a) in v.iter().enumerate() {
        full[f0 + j] = a * pow_g(xs[f0 + j], g);
    }
    full
}

fn pow_g(x: f64, g: f64) -> f64 {
    if g == 0.0 {
        1.0
    } else {
        x.abs().powf(g)
    }
}

/// Per-mode heat kernel `H(x_i, x', t)` at every node, evolved from a
/// discrete delta at `x'`.
pub fn mode_heat_timestep(disc: &Discretization, xp: f64, t: f64, steps: usize, stepper: Stepper) -> Result<Vec<f64>> {
    let mut v = vec![0.0; disc.size()];
    for (j, w) in disc.hat_weights(xp) {
        v[j] += w / disc.mass(j);
    }
    let v = evolve(disc, v, t, steps, stepper)?;
    Ok(to_nodes(disc, &v).into_iter().map(|a| a * pow_g(xp, disc.gamma())).collect())
}

/// Solution `u(x_i, t)` of the mode heat equation from `u(·, 0) = g` at every node.
pub fn mode_heat_solve(
    disc: &Discretization,
    g: impl Fn(f64) -> f64,
    t: f64,
    steps: usize,
    stepper: Stepper,
) -> Result<Vec<f64>> {
    let (f0, _) = disc.free();
    let xs = disc.nodes();
    let v: Vec<f64> = (0..disc.size())
        .map(|j| {
            let x = xs[f0 + j];
            let p = pow_g(x, disc.gamma());
            if p == 0.0 {
                0.0
            } else {
                g(x) / p
            }
        })
        .collect();
    let v = evolve(disc, v, t, steps, stepper)?;
    Ok(to_nodes(disc, &v))
}

fn interp(xs: &[f64], v: &[f64], x: f64) -> f64 {
    let i = match xs.binary_search_by(|p| p.partial_cmp(&x).unwrap()) {
        Ok(i) => return v[i],
        Err(0) => 0,
        Err(i) if i >= xs.len() => xs.len() - 2,
        Err(i) => i - 1,
    };
    let s = (x - xs[i]) / (xs[i + 1] - xs[i]);
    (1.0 - s) * v[i] + s * v[i + 1]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOptions {
    pub cells: usize,
    pub steps: usize,
    pub stepper: Stepper,
}

impl Default for StepOptions {
    fn default() -> Self {
        StepOptions { cells: 2048, steps: 400, stepper: Stepper::ExtrapolatedEuler }
    }
}

/// Full kernel at coinciding angles by per-mode time stepping, Richardson
/// extrapolated jointly in grid size and step (both second order).
pub fn full_kernel_timestep(family: &WarpFamily, eps: f64, x: f64, xp: f64, t: f64, opts: &StepOptions) -> Result<f64> {
    let v = sum_modes(family, 1, 1e-12, |m| {
        let op = family.radial_operator(m.mu, eps)?;
        let mut vals = [0.0; 2];
        for (i, scale) in [1usize, 2].into_iter().enumerate() {
            let disc = Discretization::new(&op, &SLGrid::for_operator(&op, opts.cells * scale)?)?;
            let u = mode_heat_timestep(&disc, xp, t, opts.steps * scale, opts.stepper)?;
            vals[i] = interp(disc.nodes(), &u, x);
        }
        Ok(vec![vals[1] + (vals[1] - vals[0]) / 3.0])
    })?;
    Ok(v[0])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub schedule: Vec<f64>,
    /// `(x, x')` for the interior regime, `(ρ, ρ')` for the scaled one
    pub point: (f64, f64),
    /// times `t` (interior) or rescaled times `τ` (scaled)
    pub times: Vec<f64>,
    pub expansion: ExpansionOptions,
    pub stepping: StepOptions,
}

impl ProbeSpec {
    pub fn interior_default() -> Self {
        ProbeSpec {
            schedule: crate::spectral::DEFAULT_SCHEDULE.to_vec(),
            point: (0.5, 0.5),
            times: (0..10).map(|i| 0.1 * 10f64.powf(i as f64 / 9.0)).collect(),
            expansion: ExpansionOptions::default(),
            stepping: StepOptions::default(),
        }
    }

    pub fn scaled_default() -> Self {
        ProbeSpec {
            schedule: crate::spectral::DEFAULT_SCHEDULE.to_vec(),
            point: (1.0, 1.0),
            times: vec![0.5],
            expansion: ExpansionOptions::default(),
            stepping: StepOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeRow {
    pub eps: f64,
    pub t_or_tau: f64,
    pub x: f64,
    pub xprime: f64,
    pub value_model: f64,
    pub value_eps: f64,
    pub abs_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayTable {
    pub regime: Regime,
    pub rows: Vec<ProbeRow>,
    /// `d(ε)`: largest error over the sampled times, per schedule point
    pub decay: Vec<f64>,
    /// largest `|error| / |model|` at the final ε
    pub final_relative: f64,
    pub strictly_decreasing: bool,
    /// change of the model value when the truncation radius doubles
    pub truncation_influence: f64,
}

/// Convergence probes of the family's heat kernel: against the exact cone
/// in the interior, and against the model space `Z` after rescaling.
pub fn theorem2_probe(family: &WarpFamily, regime: Regime, spec: &ProbeSpec) -> Result<DecayTable> {
    if family.kind() != ProfileKind::Capped {
        return Err(HeatError::Precondition("the probes need the capped profile".into()));
    }
    let n = family.n as i32;
    let (x, xp) = spec.point;
    let mut rows = Vec::new();
    let mut decay = Vec::new();
    let mut influence = 0.0;
    match regime {
        Regime::InteriorF0101 => {
            let model: Vec<f64> = spec
                .times
                .iter()
                .map(|&t| cone_dirichlet_full(family, x, xp, t, spec.expansion.tail_tol))
                .collect::<Result<_>>()?;
            for &e in &spec.schedule {
                let vals = full_kernel_eigen(family, e, x, xp, &spec.times, &spec.expansion)?;
                let mut d: f64 = 0.0;
                for ((&t, m), v) in spec.times.iter().zip(&model).zip(&vals) {
                    d = d.max((v - m).abs());
                    rows.push(ProbeRow {
                        eps: e,
                        t_or_tau: t,
                        x,
                        xprime: xp,
                        value_model: *m,
                        value_eps: *v,
                        abs_err: (v - m).abs(),
                    });
                }
                decay.push(d);
            }
        }
        Regime::ScaledF1010 => {
            let tau_max = spec.times.iter().cloned().fold(0.0, f64::max);
            let r0 = (4.0 * tau_max.sqrt() + x.max(xp)).max(4.0);
            let z = |r: f64| -> Result<Vec<f64>> {
                let zf = family.clone().with_length(r);
                spec.times.iter().map(|&tau| full_kernel_timestep(&zf, 1.0, x, xp, tau, &spec.stepping)).collect()
            };
            let model = z(2.0 * r0)?;
            let coarse = z(r0)?;
            influence = model
                .iter()
                .zip(&coarse)
                .map(|(a, b)| (a - b).abs() / a.abs().max(1e-300))
                .fold(0.0, f64::max);
            if influence > 1e-6 {
                return Err(HeatError::TruncationInfluence { influence, tolerance: 1e-6 });
            }
            for &e in &spec.schedule {
                let mut d: f64 = 0.0;
                for (&tau, m) in spec.times.iter().zip(&model) {
                    let h = full_kernel_timestep(family, e, e * x, e * xp, e * e * tau, &spec.stepping)?;
                    let v = e.powi(n) * h;
                    d = d.max((v - m).abs());
                    rows.push(ProbeRow {
                        eps: e,
                        t_or_tau: tau,
                        x,
                        xprime: xp,
                        value_model: *m,
                        value_eps: v,
                        abs_err: (v - m).abs(),
                    });
                }
                decay.push(d);
            }
        }
        Regime::Side => {
            return Err(HeatError::Precondition("the side regime has no convergence probe".into()));
        }
    }
    let last = *spec.schedule.last().unwrap_or(&0.0);
    let final_relative = rows
        .iter()
        .filter(|r| r.eps == last)
        .map(|r| r.abs_err / r.value_model.abs().max(1e-300))
        .fold(0.0, f64::max);
    let strictly_decreasing = decay.windows(2).all(|w| w[1] < w[0]);
    Ok(DecayTable { regime, rows, decay, final_relative, strictly_decreasing, truncation_influence: influence })
}

/// `H_{ε²g}(εx, εx', ε²t)` against `ε^{−n} H_g(x, x', t)` on the flat ball
/// with exactly rescaled grids; returns the largest relative deviation.
pub fn scaling_identity_check(n: u32, scales: &[f64], x: f64, xp: f64, t: f64, opts: &ExpansionOptions) -> Result<f64> {
    let base = WarpFamily::capped(n, 1.0, 60)?;
    let h1 = full_kernel_eigen(&base, 0.0, x, xp, &[t], opts)?[0];
    let mut worst: f64 = 0.0;
    for &e in scales {
        let fam = base.clone().with_length(e);
        let he = full_kernel_eigen(&fam, 0.0, e * x, e * xp, &[e * e * t], opts)?[0];
        let rhs = e.powi(-(n as i32)) * h1;
        worst = worst.max((he - rhs).abs() / rhs.abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FiberCheck {
    pub h: f64,
    pub fiber_residual: f64,
    pub transform_residual: f64,
    /// `∫ N(G₀)` over the fiber, i.e. `û(0)`
    pub normalization: f64,
    pub symmetry: f64,
}

/// `(4π)^{−n/2} exp(−|X|²/4)`.
pub fn g0(x: &[f64]) -> f64 {
    let r2: f64 = x.iter().map(|v| v * v).sum();
    (4.0 * PI).powf(-(x.len() as f64) / 2.0) * (-r2 / 4.0).exp()
}

/// Residuals of the fiber equation `[Σ D_i² − ½(R + n)] G₀ = 0` (with
/// `D_i² = −∂_i²`) and of `(ξ∂_ξ + 2|ξ|²) û = 0` for `û = e^{−|ξ|²}`, by
/// central differences of step `h` on sample points in `[−3, 3]^n`.
pub fn g0_fiber_check(n: usize, h: f64) -> FiberCheck {
    let samples = fiber_samples(n);
    let uhat = |x: &[f64]| (-x.iter().map(|v| v * v).sum::<f64>()).exp();
    let mut fiber: f64 = 0.0;
    let mut transform: f64 = 0.0;
    let mut sym: f64 = 0.0;
    for p in &samples {
        let g = g0(p);
        let (mut lap, mut radial, mut radial_hat) = (0.0, 0.0, 0.0);
        let mut q = p.clone();
        for i in 0..n {
            q[i] = p[i] + h;
            let (gp, up) = (g0(&q), uhat(&q));
            q[i] = p[i] - h;
            let (gm, um) = (g0(&q), uhat(&q));
            q[i] = p[i];
            lap += (gp - 2.0 * g + gm) / (h * h);
            radial += p[i] * (gp - gm) / (2.0 * h);
            radial_hat += p[i] * (up - um) / (2.0 * h);
        }
        let r2: f64 = p.iter().map(|v| v * v).sum();
        fiber = fiber.max((-lap - 0.5 * (radial + n as f64 * g)).abs());
        transform = transform.max((radial_hat + 2.0 * r2 * uhat(p)).abs());
        let neg: Vec<f64> = p.iter().map(|v| -v).collect();
        sym = sym.max((g0(&neg) - g).abs());
    }
    FiberCheck { h, fiber_residual: fiber, transform_residual: transform, normalization: fiber_integral(n), symmetry: sym }
}

fn fiber_samples(n: usize) -> Vec<Vec<f64>> {
    let line: Vec<f64> = (0..13).map(|i| -3.0 + 0.5 * i as f64).collect();
    let mut out = vec![vec![]];
    for _ in 0..n.min(3) {
        out = out
            .into_iter()
            .flat_map(|p| {
                line.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push(*v);
                    q
                })
            })
            .collect();
    }
    for p in out.iter_mut() {
        while p.len() < n {
            p.push(0.3);
        }
    }
    out
}

/// `∫_{R^n} G₀` by the trapezoid rule on `[−20, 20]` per axis (separable).
fn fiber_integral(n: usize) -> f64 {
    let m = 4000;
    let h = 40.0 / m as f64;
    let one: f64 = (0..=m)
        .map(|i| {
            let x = -20.0 + h * i as f64;
            let w = if i == 0 || i == m { 0.5 } else { 1.0 };
            w * (4.0 * PI).powf(-0.5) * (-x * x / 4.0).exp()
        })
        .sum::<f64>()
        * h;
    one.powi(n as i32)
}

/// `∫ G(z, z', t) dz'` for the Euclidean kernel by a product trapezoid rule.
pub fn euclidean_mass(n: usize, t: f64) -> Result<f64> {
    check_t(t)?;
    let half = 12.0 * t.sqrt() + 1.0;
    let m = 2000;
    let h = 2.0 * half / m as f64;
    let mut one = 0.0;
    for i in 0..=m {
        let x = -half + h * i as f64;
        let w = if i == 0 || i == m { 0.5 } else { 1.0 };
        one += w * euclidean_kernel(1, &[0.0], &[x], t)?;
    }
    Ok((one * h).powi(n as i32))
}

/// Sum of monomials `Σ c_i t^{p_i}` in the time variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarKernel {
    pub terms: Vec<(f64, f64)>,
}

impl ScalarKernel {
    pub fn monomial(c: f64, p: f64) -> Self {
        ScalarKernel { terms: vec![(c, p)] }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.terms.iter().map(|(c, p)| c * t.powf(*p)).sum()
    }

    /// `∫₀ᵗ A(t−s) B(s) ds` exactly: `t^a ★ t^b = Γ(a+1)Γ(b+1)/Γ(a+b+2) t^{a+b+1}`.
    pub fn convolve(&self, other: &ScalarKernel) -> ScalarKernel {
        let mut terms: Vec<(f64, f64)> = Vec::new();
        for (ca, a) in &self.terms {
            for (cb, b) in &other.terms {
                let lb = if a + b + 2.0 < 170.0 {
                    (puruspe::gamma(a + 1.0) * puruspe::gamma(b + 1.0) / puruspe::gamma(a + b + 2.0)).ln()
                } else {
                    puruspe::ln_gamma(a + 1.0) + puruspe::ln_gamma(b + 1.0) - puruspe::ln_gamma(a + b + 2.0)
                };
                let p = a + b + 1.0;
                match terms.iter_mut().find(|(_, q)| *q == p) {
                    Some(t) => t.0 += ca * cb * lb.exp(),
                    None => terms.push((ca * cb * lb.exp(), p)),
                }
            }
        }
        terms.sort_by(|x, y| x.1.total_cmp(&y.1));
        ScalarKernel { terms }
    }

    pub fn power(&self, j: usize) -> ScalarKernel {
        let mut k = self.clone();
        for _ in 1..j {
            k = k.convolve(self);
        }
        k
    }

    /// Sup over `[0, T]` by dense sampling.
    pub fn sup(&self, t_max: f64) -> f64 {
        (0..=1000).map(|i| self.eval(t_max * i as f64 / 1000.0).abs()).fold(0.0, f64::max)
    }
}

/// Kernel `K(z, z', t)` sampled on spatial nodes with quadrature weights and
/// a uniform time grid starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct GridKernel {
    pub weights: Vec<f64>,
    pub dt: f64,
    pub values: Vec<DMatrix<f64>>,
}

impl GridKernel {
    pub fn from_fn(nodes: &[f64], weights: &[f64], dt: f64, steps: usize, f: impl Fn(f64, f64, f64) -> f64) -> Self {
        let m = nodes.len();
        let values = (0..=steps)
            .map(|i| {
                let t = dt * i as f64;
                DMatrix::from_fn(m, m, |a, b| f(nodes[a], nodes[b], t))
            })
            .collect();
        GridKernel { weights: weights.to_vec(), dt, values }
    }

    pub fn t_max(&self) -> f64 {
        self.dt * (self.values.len() - 1) as f64
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|m| m.amax()).fold(0.0, f64::max)
    }

    fn convolve_raw(&self, other: &GridKernel, stride: usize) -> Vec<DMatrix<f64>> {
        let w = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(self.weights.clone()));
        let idx: Vec<usize> = (0..self.values.len()).step_by(stride).collect();
        let dt = self.dt * stride as f64;
        let m = self.weights.len();
        idx.par_iter()
            .enumerate()
            .map(|(i, _)| {
                let mut acc = DMatrix::<f64>::zeros(m, m);
                for j in 0..=i {
                    let wt = if j == 0 || j == i { 0.5 } else { 1.0 } * dt;
                    if i == 0 {
                        break;
                    }
                    acc += (&self.values[idx[i - j]] * &w * &other.values[idx[j]]) * wt;
                }
                acc
            })
            .collect()
    }
}

/// `(A★B)(t) = ∫₀ᵗ ∫ A(·, w, t−s) B(w, ·, s) dw ds` by the trapezoid rule in
/// time and the given spatial weights; the error estimate compares with the
/// rule on every other time point.
pub fn t_convolve(a: &GridKernel, b: &GridKernel, tolerance: f64) -> Result<GridKernel> {
    if a.values.len() != b.values.len() || a.weights.len() != b.weights.len() || a.dt != b.dt {
        return Err(HeatError::Dimension("kernels must share spatial and time grids".into()));
    }
    let fine = a.convolve_raw(b, 1);
    if a.values.len() >= 5 {
        let coarse = a.convolve_raw(b, 2);
        let scale = fine.iter().map(|m| m.amax()).fold(0.0, f64::max).max(1e-300);
        let est = coarse
            .iter()
            .enumerate()
            .map(|(i, c)| (c - &fine[2 * i]).amax() / 3.0)
            .fold(0.0, f64::max);
        if est > tolerance * scale {
            return Err(HeatError::Quadrature { estimate: est / scale, tolerance });
        }
    }
    Ok(GridKernel { weights: a.weights.clone(), dt: a.dt, values: fine })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VolterraReport {
    pub t_max: f64,
    /// `sup_{[0,T]} |K^{★j}|` for `j = 1..=j_max`
    pub sup_norms: Vec<f64>,
    pub ratios: Vec<f64>,
    /// `s_j (j+1)!/T^j`
    pub constants: Vec<f64>,
    /// smallest `Ĉ` with `s_j ≤ Ĉ^j T^j/(j+1)!` for all sampled `j`
    pub c_hat: f64,
    /// every ratio `s_{j+1}/s_j` stays within the envelope `T/j`
    pub ratio_test: bool,
}

fn report(t_max: f64, sup: Vec<f64>) -> Result<VolterraReport> {
    let mut fact = 1.0;
    let mut constants = Vec::new();
    let mut c_hat: f64 = 0.0;
    for (i, s) in sup.iter().enumerate() {
        let j = i + 1;
        fact *= (j + 1) as f64;
        let cj = s * fact / t_max.powi(j as i32);
        c_hat = c_hat.max(cj.powf(1.0 / j as f64));
        constants.push(cj);
    }
    let ratios: Vec<f64> = sup.windows(2).map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 }).collect();
    let ratio_test = ratios.iter().enumerate().all(|(i, r)| *r <= t_max / (i + 1) as f64 * (1.0 + 1e-9));
    if let Some((i, r)) = ratios.iter().enumerate().skip(1).find(|(i, r)| **r >= 1.0 && **r > ratios[*i - 1]) {
        return Err(HeatError::Growth { j: i + 1, ratio: *r });
    }
    Ok(VolterraReport { t_max, sup_norms: sup, ratios, constants, c_hat, ratio_test })
}

pub fn volterra_neumann_scalar(k: &ScalarKernel, t_max: f64, j_max: usize) -> Result<VolterraReport> {
    let sup = (1..=j_max).map(|j| k.power(j).sup(t_max)).collect();
    report(t_max, sup)
}

pub fn volterra_neumann(k: &GridKernel, j_max: usize, tolerance: f64) -> Result<VolterraReport> {
    let k0 = k.values[0].amax();
    if k0 > 0.0 {
        return Err(HeatError::NotVolterra(k0));
    }
    let mut sup = vec![k.sup_norm()];
    let mut p = k.clone();
    for _ in 1..j_max {
        p = t_convolve(&p, k, tolerance)?;
        sup.push(p.sup_norm());
    }
    report(k.t_max(), sup)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSample {
    pub eps: f64,
    pub t: f64,
    pub e: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Violation {
    pub sample: ErrorSample,
    pub bound: f64,
}

/// Checks `|E|² ≤ e^T C ε² t^{2N}` on every sample with `t ≤ T`.
pub fn max_principle_check(samples: &[ErrorSample], c: f64, n: i32, t_max: f64) -> std::result::Result<(), Violation> {
    for s in samples.iter().filter(|s| s.t <= t_max) {
        let bound = t_max.exp() * c * s.eps * s.eps * s.t.powi(2 * n);
        if s.e * s.e > bound * (1.0 + 1e-12) {
            return Err(Violation { sample: *s, bound });
        }
    }
    Ok(())
}

/// Smallest `C` for which [`max_principle_check`] passes.
pub fn fit_max_principle_constant(samples: &[ErrorSample], n: i32, t_max: f64) -> f64 {
    samples
        .iter()
        .filter(|s| s.t <= t_max && s.t > 0.0)
        .map(|s| s.e * s.e / (t_max.exp() * s.eps * s.eps * s.t.powi(2 * n)))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaled_bessel_matches_reference() {
        for nu in [0.0, 0.5, 1.5, 2.3, 7.0] {
            for z in [0.01, 0.7, 3.0, 15.0, 40.0, 95.0] {
                let (i, _) = puruspe::Inu_Knu(nu, z);
                let want = i * (-z).exp();
                let got = bessel_i_scaled(nu, z);
                assert!((got - want).abs() <= 1e-11 * want.abs().max(1e-290), "ν={nu} z={z}: {got} {want}");
            }
        }
        // half-integer closed form, both branches
        for z in [0.3, 5.0, 60.0, 400.0] {
            let want = (2.0 / (PI * z)).sqrt() * (1.0 - (-2.0 * z).exp()) / 2.0;
            assert!((bessel_i_scaled(0.5, z) - want).abs() < 1e-13 * want);
        }
    }

    #[test]
    fn euclidean_examples() {
        let g = euclidean_kernel(3, &[0.1, 0.2, 0.3], &[0.1, 0.2, 0.3], 0.5).unwrap();
        assert!((g - (2.0 * PI).powf(-1.5)).abs() < 1e-15);
        assert!((euclidean_mass(2, 0.3).unwrap() - 1.0).abs() < 1e-10);
        assert!(matches!(euclidean_kernel(1, &[0.0], &[0.0], 0.0), Err(HeatError::NonPositiveTime(_))));
        // heat equation residual, second order
        let res = |h: f64| {
            let (x, t) = (0.4, 0.3);
            let g = |x: f64, t: f64| euclidean_kernel(1, &[x], &[0.0], t).unwrap();
            let gt = (g(x, t + h) - g(x, t - h)) / (2.0 * h);
            let gxx = (g(x + h, t) - 2.0 * g(x, t) + g(x - h, t)) / (h * h);
            (gt - gxx).abs()
        };
        let r = res(1e-2) / res(5e-3);
        assert!((3.5..4.5).contains(&r), "{r}");
    }

    #[test]
    fn half_integer_cone_is_image_kernel() {
        for (x, y, t) in [(0.3, 0.5, 0.1), (1.0, 1.2, 2.0), (0.05, 0.07, 0.001)] {
            let k = cone_mode_kernel(0.5, 3, x, y, t).unwrap();
            let images = (4.0 * PI * t).powf(-0.5)
                * ((-(x - y) * (x - y) / (4.0 * t)).exp() - (-(x + y) * (x + y) / (4.0 * t)).exp())
                / (x * y);
            assert!((k - images).abs() < 1e-12 * images, "{k} {images}");
        }
        assert!(cone_mode_kernel(0.5, 3, 0.2, 0.8, 1e-4).unwrap() < 1e-100);
    }

    #[test]
    fn cone_kernel_solves_mode_equation() {
        let k = ConeModeKernel::for_mode(3, 2.0, 0.7);
        let op_res = |h: f64| {
            let (x, y, t) = (0.6, 0.5, 0.2);
            let f = |x: f64, t: f64| k.eval(x, y, t).unwrap();
            let ft = (f(x, t + h) - f(x, t - h)) / (2.0 * h);
            let fx = (f(x + h, t) - f(x - h, t)) / (2.0 * h);
            let fxx = (f(x + h, t) - 2.0 * f(x, t) + f(x - h, t)) / (h * h);
            (ft - fxx - 2.0 / x * fx + 2.0 / (0.49 * x * x) * f(x, t)).abs()
        };
        let r = op_res(1e-2) / op_res(5e-3);
        assert!((3.5..4.5).contains(&r), "{r}");
        // x^{γ+} behavior at the tip
        let g = indicial_roots(3, 2.0, 0.7).gamma_plus;
        let a = k.eval(1e-4, 0.5, 0.2).unwrap() / 1e-4f64.powf(g);
        let b = k.eval(2e-4, 0.5, 0.2).unwrap() / 2e-4f64.powf(g);
        assert!((a / b - 1.0).abs() < 1e-6);
    }

    #[test]
    fn cylinder_kernel() {
        let a = b_cylinder_kernel(0.3, -0.2, 0.4, 0.0).unwrap();
        assert!((a - b_cylinder_kernel(-0.2, 0.3, 0.4, 0.0).unwrap()).abs() < 1e-16);
        let res = |h: f64| {
            let f = |s: f64, t: f64| b_cylinder_kernel(s, 0.1, t, 2.0).unwrap();
            let (s, t) = (0.5, 0.3);
            let ft = (f(s, t + h) - f(s, t - h)) / (2.0 * h);
            let fss = (f(s + h, t) - 2.0 * f(s, t) + f(s - h, t)) / (h * h);
            (ft - fss + 2.0 * f(s, t)).abs()
        };
        let r = res(1e-2) / res(5e-3);
        assert!((3.5..4.5).contains(&r), "{r}");
    }

    #[test]
    fn fiber_check_small_residual() {
        let c = g0_fiber_check(1, 1e-3);
        assert!(c.fiber_residual < 1e-5 && c.transform_residual < 1e-5);
        assert!((c.normalization - 1.0).abs() < 1e-12);
        assert_eq!(c.symmetry, 0.0);
        let r = g0_fiber_check(2, 0.02).fiber_residual / g0_fiber_check(2, 0.01).fiber_residual;
        assert!((3.5..4.5).contains(&r));
    }

    #[test]
    fn scalar_volterra_closed_forms() {
        let one = ScalarKernel::monomial(1.0, 0.0);
        let sq = one.convolve(&one).terms;
        assert!(sq.len() == 1 && (sq[0].0 - 1.0).abs() < 1e-13 && sq[0].1 == 1.0);
        let three = one.power(3);
        assert!((three.terms[0].0 - 0.5).abs() < 1e-14 && three.terms[0].1 == 2.0);
        let mut fact = 1.0;
        for j in 1..8 {
            let p = one.power(j);
            assert!((p.terms[0].0 - 1.0 / fact).abs() < 1e-13 / fact);
            fact *= j as f64;
        }
        let t = ScalarKernel::monomial(1.0, 1.0);
        let r = volterra_neumann_scalar(&t, 1.0, 6).unwrap();
        assert!(r.ratio_test);
        assert!(r.ratios.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn grid_volterra() {
        let nodes: Vec<f64> = (0..8).map(|i| (i as f64 + 0.5) / 8.0).collect();
        let weights = vec![1.0 / 8.0; 8];
        let k = GridKernel::from_fn(&nodes, &weights, 1.0 / 64.0, 64, |x, y, t| t * t * (-(x - y).abs()).exp());
        let norm = k.sup_norm();
        let k = GridKernel { values: k.values.iter().map(|m| m / norm).collect(), ..k };
        let r = volterra_neumann(&k, 6, 1e-2).unwrap();
        assert!(r.ratio_test, "{:?}", r.ratios);
        assert!(r.sup_norms[3] < 1e-6);
        // the point manifold reproduces the scalar rule
        let one = GridKernel::from_fn(&[0.0], &[1.0], 0.01, 100, |_, _, _| 1.0);
        let c = t_convolve(&one, &one, 1e-8).unwrap();
        assert!((c.values[100][(0, 0)] - 1.0).abs() < 1e-12);
        assert!(matches!(volterra_neumann(&one, 3, 1e-3), Err(HeatError::NotVolterra(_))));
    }

    #[test]
    fn max_principle() {
        let zero: Vec<ErrorSample> = (1..10).map(|i| ErrorSample { eps: 0.1, t: 0.1 * i as f64, e: 0.0 }).collect();
        assert!(max_principle_check(&zero, 1e-30, 3, 1.0).is_ok());
        let (c, n, tm) = (2.0, 2, 1.0);
        let bad: Vec<ErrorSample> = (1..10)
            .map(|i| {
                let t = 0.1 * i as f64;
                let env = 2.0 * f64::exp(tm) * c * 0.01 * t.powi(2 * n);
                ErrorSample { eps: 0.1, t, e: env.sqrt() }
            })
            .collect();
        let v = max_principle_check(&bad, c, n, tm).unwrap_err();
        assert!(v.sample.e * v.sample.e > v.bound);
        let fitted = fit_max_principle_constant(&bad, n, tm);
        assert!(max_principle_check(&bad, fitted, n, tm).is_ok());
    }

    #[test]
    fn bessel_series_matches_open_cone_before_boundary() {
        let k = ConeModeKernel::for_mode(3, 2.0, 0.5);
        for t in [0.01, 0.05, 0.2] {
            let want = k.eval(0.3, 0.4, t).unwrap();
            let got = cone_dirichlet_mode(3, 2.0, 0.5, 3.0, 0.3, 0.4, t, 1e-15).unwrap();
            assert!((got - want).abs() < 1e-8 * want, "t={t}: {got} {want}");
        }
    }

    #[test]
    fn eigen_expansion_reproduces_cone() {
        let fam = WarpFamily::capped(3, 1.0, 1).unwrap().with_length(3.0);
        let times = [0.01, 0.05, 0.2];
        let v = heat_from_spectrum(&fam, 2.0, 0.0, &[(0.3, 0.3)], &times, &ExpansionOptions { cells: 2048, tail_tol: 1e-14 })
            .unwrap();
        let k = ConeModeKernel::for_mode(3, 2.0, 1.0);
        for (t, h) in times.iter().zip(&v[0]) {
            let want = k.eval(0.3, 0.3, *t).unwrap();
            assert!((h - want).abs() < 1e-4 * want, "t={t}: {h} {want}");
        }
    }

    #[test]
    fn timestep_matches_expansion() {
        let fam = WarpFamily::capped(3, 0.5, 2).unwrap();
        let op = fam.radial_operator(0.0, 0.1).unwrap();
        let grid = SLGrid::for_operator(&op, 256).unwrap();
        let disc = Discretization::new(&op, &grid).unwrap();
        let sol = solve_mode(&op, &grid, 64).unwrap();
        let t = 0.05;
        let u = mode_heat_timestep(&disc, 0.5, t, 2000, Stepper::CrankNicolson).unwrap();
        let e = mode_heat_timestep(&disc, 0.5, t, 2000, Stepper::ExtrapolatedEuler).unwrap();
        let x = 0.45;
        let want: f64 = sol.values.iter().enumerate().map(|(k, l)| (-l * t).exp() * sol.eval(k, x) * sol.eval(k, 0.5)).sum();
        assert!((interp(disc.nodes(), &u, x) - want).abs() < 1e-3 * want.abs());
        assert!((interp(disc.nodes(), &e, x) - want).abs() < 1e-3 * want.abs());
    }

    #[test]
    fn kernel_sample_checks() {
        let k = ConeModeKernel::for_mode(3, 6.0, 0.8);
        let pts = [(0.2, 0.4), (0.4, 0.2), (0.3, 0.3)];
        let s = KernelSample::tabulate(&pts, &[0.01, 0.1, 1.0], Regime::Side, |x, y, t| k.eval(x, y, t)).unwrap();
        assert!(s.asymmetry() < 1e-14);
        assert!(s.is_positive());
    }

    fn interior_solution() -> crate::spectral::ModeSolution {
        let fam = WarpFamily::capped(3, 0.5, 2).unwrap();
        let op = fam.radial_operator(0.0, 0.1).unwrap();
        solve_mode(&op, &SLGrid::for_operator(&op, 512).unwrap(), 120).unwrap()
    }

    #[test]
    fn expansion_identities() {
        let sol = interior_solution();
        let h = |x: f64, y: f64, t: f64| heat_from_modes(&sol, x, y, t, 1e-12).unwrap();
        assert!(h(0.4, 0.6, 50.0) < 1e-12);
        assert!(matches!(heat_from_modes(&sol, 0.4, 0.6, 1e-6, 1e-12), Err(HeatError::TailUnreachable { .. })));
        let g = sol.gamma;
        let ys: Vec<(f64, f64)> =
            sol.nodes.iter().zip(&sol.mass).filter(|(_, m)| **m > 0.0).map(|(y, m)| (*y, *m)).collect();
        // reproducing property
        let (x, t) = (0.45, 0.1);
        let lhs: f64 = ys.iter().map(|&(y, m)| m * h(x, y, t) * sol.eval(0, y) / y.powf(2.0 * g)).sum();
        let rhs = (-sol.values[0] * t).exp() * sol.eval(0, x);
        assert!((lhs - rhs).abs() < 1e-10 * rhs.abs());
        // semigroup
        let (t1, t2, xp) = (0.04, 0.07, 0.7);
        let lhs: f64 = ys.iter().map(|&(y, m)| m * h(x, y, t1) * h(y, xp, t2) / y.powf(2.0 * g)).sum();
        let rhs = h(x, xp, t1 + t2);
        assert!((lhs - rhs).abs() < 1e-6 * rhs.abs());
        // sub-Markov mass for the Dirichlet model
        let mass: f64 = ys.iter().map(|&(y, m)| m * h(x, y, 0.05) / y.powf(g)).sum();
        assert!(mass <= 1.0 + 1e-9 && mass > 0.5);
    }

    #[test]
    fn expansion_matches_time_stepping_from_gaussian() {
        let fam = WarpFamily::capped(3, 0.5, 2).unwrap();
        let op = fam.radial_operator(0.0, 0.1).unwrap();
        let grid = SLGrid::for_operator(&op, 512).unwrap();
        let sol = solve_mode(&op, &grid, 120).unwrap();
        let disc = Discretization::new(&op, &grid).unwrap();
        let g0 = |x: f64| (-(x - 0.5f64).powi(2) / (2.0 * 0.05 * 0.05)).exp();
        let t = 0.05;
        let coef: Vec<f64> = (0..sol.values.len())
            .map(|k| {
                sol.nodes
                    .iter()
                    .zip(&sol.mass)
                    .zip(&sol.vectors[k])
                    .map(|((y, m), v)| m * v * g0(*y) / pow_g(*y, sol.gamma))
                    .sum()
            })
            .collect();
        let x = 0.5;
        let want: f64 = coef.iter().enumerate().map(|(k, c)| (-sol.values[k] * t).exp() * c * sol.eval(k, x)).sum();
        let u = mode_heat_solve(&disc, g0, t, 400, Stepper::CrankNicolson).unwrap();
        let got = interp(disc.nodes(), &u, x);
        assert!((got - want).abs() < 1e-3 * want.abs(), "{got} {want}");
    }

    #[test]
    fn neck_conserves_mass_at_short_times() {
        let fam = WarpFamily::neck(3, 1.0, 2).unwrap();
        let op = fam.radial_operator(0.0, 0.2).unwrap();
        let sol = solve_mode(&op, &SLGrid::for_operator(&op, 1024).unwrap(), 256).unwrap();
        let mass: f64 = sol
            .nodes
            .iter()
            .zip(&sol.mass)
            .map(|(y, m)| m * heat_from_modes(&sol, 0.0, *y, 0.01, 1e-10).unwrap())
            .sum();
        assert!((mass - 1.0).abs() < 1e-3, "{mass}");
    }
}
