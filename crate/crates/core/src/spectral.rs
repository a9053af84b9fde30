//! Per-mode Sturm–Liouville eigensolver for the warped-product families,
//! Bessel-zero reference spectra of the exact cone, and the small-ε spectral
//! flow with cluster/multiplicity matching.
//!
//! Discretization: piecewise-linear elements with exact-by-Gauss cell
//! stiffness and lumped mass, after the substitution `u = x^γ v` where `γ`
//! is the regular indicial exponent at the tip. The substitution turns the
//! singular endpoint into a natural boundary and the scheme stays second
//! order on a grid graded like `(i/N)²`.

use crate::model_geometry::{
    indicial_roots, BoundaryCondition, GeometryError, InnerBc, Mode, ProfileKind, RadialOperator,
    WarpFamily,
};
use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("grid too coarse: eigenvalue {index} has Richardson estimate {estimate:e} above tolerance {tolerance:e}")]
    TooCoarse { index: usize, estimate: f64, tolerance: f64 },
    #[error("nonpositive weight {value:e} at node {node}")]
    NonPositiveWeight { node: usize, value: f64 },
    #[error("requested {count} eigenpairs but the grid has {nodes} nodes (limit N/4)")]
    CountTooLarge { count: usize, nodes: usize },
    #[error("mode truncation insufficient: tail bound {tail:.6} below requested level {needed:.6}")]
    Truncation { tail: f64, needed: f64 },
    #[error("grid needs at least 16 nodes, got {0}")]
    GridTooSmall(usize),
    #[error("ε schedule must be strictly decreasing with at least {min} points")]
    Schedule { min: usize },
    #[error("Gram matrix numerically singular (pivot {0:e})")]
    SingularGram(f64),
    #[error("accumulation point {center:.8} (multiplicity {multiplicity}) has no matching reference level")]
    Unmatched { center: f64, multiplicity: u64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub type Result<T> = std::result::Result<T, SpectralError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Uniform,
    /// `x_i = lo + (hi − lo)(i/N)^s`
    Graded { power: f64 },
    /// Symmetric about 0, fine near 0: `x = L sinh(A s)/sinh(A)`.
    Sinh { a: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SLGrid {
    pub spacing: Spacing,
    pub interval: (f64, f64),
    pub nodes: Vec<f64>,
}

impl SLGrid {
    pub fn new(interval: (f64, f64), cells: usize, spacing: Spacing) -> Result<Self> {
        if cells < 16 {
            return Err(SpectralError::GridTooSmall(cells));
        }
        let (lo, hi) = interval;
        let nodes = (0..=cells)
            .map(|i| {
                let s = i as f64 / cells as f64;
                match spacing {
                    Spacing::Uniform => lo + (hi - lo) * s,
                    Spacing::Graded { power } => lo + (hi - lo) * s.powf(power),
                    Spacing::Sinh { a } => {
                        let (mid, half) = ((lo + hi) / 2.0, (hi - lo) / 2.0);
                        let t = 2.0 * s - 1.0;
                        mid + half * (a * t).sinh() / a.sinh()
                    }
                }
            })
            .map(|x| x.clamp(lo, hi))
            .collect::<Vec<_>>();
        for w in nodes.windows(2) {
            if w[1] <= w[0] {
                return Err(SpectralError::GridTooSmall(cells));
            }
        }
        Ok(SLGrid { spacing, interval, nodes })
    }

    /// Default grid for a radial operator: graded toward the tip for the
    /// capped family, sinh-clustered at the neck.
    pub fn for_operator(op: &RadialOperator, cells: usize) -> Result<Self> {
        let spacing = match op.family.kind() {
            ProfileKind::Capped => Spacing::Graded { power: 2.0 },
            ProfileKind::Neck => {
                let r = op.family.c * op.family.length / op.eps;
                Spacing::Sinh { a: (0.5 * r.asinh()).max(1e-3) }
            }
        };
        SLGrid::new(op.domain(), cells, spacing)
    }

    pub fn cells(&self) -> usize {
        self.nodes.len() - 1
    }
}

const GAUSS4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_86),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_86),
];

/// Assembled tridiagonal pencil `(A, M)` on the free nodes.
#[derive(Debug, Clone)]
struct Pencil {
    nodes: Vec<f64>,
    gamma: f64,
    /// first and one-past-last free node
    free: (usize, usize),
    stiff: Vec<f64>,
    pot: Vec<f64>,
    mass: Vec<f64>,
}

impl Pencil {
    fn assemble(op: &RadialOperator, grid: &SLGrid) -> Result<Self> {
        let x = &grid.nodes;
        let nc = x.len() - 1;
        let gamma = op.tip_exponent();
        let n1 = op.n() as f64 - 1.0;
        let weight = |t: f64| if gamma == 0.0 { 1.0 } else { t.powf(2.0 * gamma) };
        let big_p = |t: f64| op.p(t) * weight(t);
        let big_q = |t: f64| {
            if gamma == 0.0 {
                return op.q(t);
            }
            let (f, df) = op.family.warp(t, op.eps);
            let p = op.p(t);
            weight(t) * (op.q(t) - n1 * gamma * p * df / (f * t) - gamma * (gamma - 1.0) * p / (t * t))
        };
        let mut stiff = vec![0.0; nc];
        let mut pot = vec![0.0; nc + 1];
        let mut mass = vec![0.0; nc + 1];
        for c in 0..nc {
            let (a, b) = (x[c], x[c + 1]);
            let h = b - a;
            let mut sp = 0.0;
            for &(g, wg) in &GAUSS4 {
                let t = 0.5 * (a + b) + 0.5 * h * g;
                let wq = 0.5 * h * wg;
                let (pl, pr) = ((b - t) / h, (t - a) / h);
                sp += wq * big_p(t);
                let wv = op.w(t) * weight(t);
                let qv = big_q(t);
                mass[c] += wq * wv * pl;
                mass[c + 1] += wq * wv * pr;
                pot[c] += wq * qv * pl;
                pot[c + 1] += wq * qv * pr;
            }
            stiff[c] = sp / (h * h);
        }
        let mut lo_free = match (op.inner_bc, op.outer_bc) {
            (InnerBc::None, BoundaryCondition::Dirichlet) => 1,
            _ => 0,
        };
        // x^{2γ} underflows near the tip for high modes; u is negligible there
        if gamma > 0.0 {
            while lo_free < nc && mass[lo_free] < 1e-250 {
                lo_free += 1;
            }
        }
        let hi_free = match op.outer_bc {
            BoundaryCondition::Dirichlet => nc,
            BoundaryCondition::Neumann => nc + 1,
        };
        if op.outer_bc == BoundaryCondition::Neumann && gamma != 0.0 {
            let l = x[nc];
            pot[nc] += gamma * op.p(l) * l.powf(2.0 * gamma - 1.0);
        }
        for (i, &m) in mass.iter().enumerate().take(hi_free).skip(lo_free) {
            if !(m > 0.0) {
                return Err(SpectralError::NonPositiveWeight { node: i, value: m });
            }
        }
        Ok(Pencil { nodes: x.clone(), gamma, free: (lo_free, hi_free), stiff, pot, mass })
    }

    fn size(&self) -> usize {
        self.free.1 - self.free.0
    }

    /// Diagonal and off-diagonal of `A` on the free nodes.
    fn a_diag(&self, j: usize) -> f64 {
        let i = self.free.0 + j;
        let left = if i > 0 { self.stiff[i - 1] } else { 0.0 };
        let right = if i < self.stiff.len() { self.stiff[i] } else { 0.0 };
        left + right + self.pot[i]
    }

    fn a_off(&self, j: usize) -> f64 {
        -self.stiff[self.free.0 + j]
    }

    fn m(&self, j: usize) -> f64 {
        self.mass[self.free.0 + j]
    }

    /// Number of eigenvalues of the pencil below `lambda` (Sturm count on the
    /// symmetrically scaled tridiagonal).
    fn count_below(&self, lambda: f64) -> usize {
        let n = self.size();
        let mut count = 0;
        let mut d = 1.0;
        for j in 0..n {
            let diag = self.a_diag(j) / self.m(j) - lambda;
            let e2 = if j > 0 {
                let e = self.a_off(j - 1) / (self.m(j - 1).sqrt() * self.m(j).sqrt());
                e * e
            } else {
                0.0
            };
            d = diag - if j > 0 { e2 / d } else { 0.0 };
            if d == 0.0 {
                d = -f64::EPSILON * (diag.abs() + e2.sqrt()).max(f64::MIN_POSITIVE);
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn gershgorin(&self) -> (f64, f64) {
        let n = self.size();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for j in 0..n {
            let mut r = 0.0;
            if j > 0 {
                r += self.a_off(j - 1).abs() / (self.m(j - 1).sqrt() * self.m(j).sqrt());
            }
            if j + 1 < n {
                r += self.a_off(j).abs() / (self.m(j).sqrt() * self.m(j + 1).sqrt());
            }
            let d = self.a_diag(j) / self.m(j);
            lo = lo.min(d - r);
            hi = hi.max(d + r);
        }
        (lo, hi)
    }

    fn bisect(&self, k: usize, bounds: (f64, f64)) -> f64 {
        let (mut lo, mut hi) = bounds;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// `vᵀAv`, summed as a nonnegative energy plus potential term.
    fn energy(&self, v: &[f64]) -> f64 {
        let (f0, f1) = self.free;
        let mut s = 0.0;
        for c in 0..self.stiff.len() {
            let a = if c >= f0 && c < f1 { v[c - f0] } else { 0.0 };
            let b = if c + 1 >= f0 && c + 1 < f1 { v[c + 1 - f0] } else { 0.0 };
            s += self.stiff[c] * (b - a) * (b - a);
        }
        for (j, vj) in v.iter().enumerate() {
            s += self.pot[f0 + j] * vj * vj;
        }
        s
    }

    fn mass_dot(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).enumerate().map(|(j, (x, y))| self.m(j) * x * y).sum()
    }

    /// Solves `(T − σ) y = r` for the scaled matrix `T = M^{-1/2} A M^{-1/2}`
    /// by Gaussian elimination with partial pivoting.
    fn shifted_solve(&self, sigma: f64, r: &[f64]) -> Vec<f64> {
        let n = self.size();
        let mut dl: Vec<f64> =
            (0..n.saturating_sub(1)).map(|j| self.a_off(j) / (self.m(j).sqrt() * self.m(j + 1).sqrt())).collect();
        let mut d: Vec<f64> = (0..n).map(|j| self.a_diag(j) / self.m(j) - sigma).collect();
        let mut du = dl.clone();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut b = r.to_vec();
        let tiny = f64::EPSILON * d.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    d[i] = tiny;
                }
                let f = dl[i] / d[i];
                d[i + 1] -= f * du[i];
                b[i + 1] -= f * b[i];
                dl[i] = 0.0;
            } else {
                let f = d[i] / dl[i];
                d[i] = dl[i];
                let t = d[i + 1];
                d[i + 1] = du[i] - f * t;
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] = -f * du2[i];
                }
                du[i] = t;
                b.swap(i, i + 1);
                b[i + 1] -= f * b[i];
            }
        }
        if d[n - 1] == 0.0 {
            d[n - 1] = tiny;
        }
        let mut y = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = b[i];
            if i + 1 < n {
                s -= du[i] * y[i + 1];
            }
            if i + 2 < n {
                s -= du2[i] * y[i + 2];
            }
            y[i] = s / d[i];
        }
        y
    }

    fn eigenpairs(&self, count: usize) -> Vec<(f64, Vec<f64>)> {
        let n = self.size();
        let bounds = self.gershgorin();
        let mut out: Vec<(f64, Vec<f64>)> = Vec::with_capacity(count);
        for k in 0..count {
            let guess = self.bisect(k, bounds);
            // inverse iteration from a deterministic start, then Rayleigh refinement
            // inverse iteration on z = M^{1/2} v, then Rayleigh refinement
            let mut z: Vec<f64> = (0..n).map(|j| 1.0 + ((j * 7 + k * 13) % 17) as f64 / 17.0).collect();
            let mut sigma = guess;
            let mut lambda = guess;
            let mut v = vec![0.0; n];
            for it in 0..40 {
                let mut y = self.shifted_solve(sigma, &z);
                for (_, prev) in out.iter() {
                    // previous vectors are stored as v; their scaled form is M^{1/2} v
                    let c: f64 = y.iter().zip(prev).enumerate().map(|(j, (a, b))| a * b * self.m(j).sqrt()).sum();
                    for (j, (a, b)) in y.iter_mut().zip(prev).enumerate() {
                        *a -= c * b * self.m(j).sqrt();
                    }
                }
                let norm = y.iter().map(|a| a * a).sum::<f64>().sqrt();
                for a in y.iter_mut() {
                    *a /= norm;
                }
                for (j, a) in y.iter().enumerate() {
                    v[j] = a / self.m(j).sqrt();
                }
                let rq = self.energy(&v) / self.mass_dot(&v, &v);
                let done = it > 2 && (rq - lambda).abs() <= 1e-15 * rq.abs().max(1.0);
                lambda = rq;
                z = y;
                if done {
                    break;
                }
                if it >= 3 {
                    sigma = rq;
                }
            }
            // deterministic sign: largest component positive
            let imax = v
                .iter()
                .enumerate()
                .fold((0, 0.0f64), |(bi, bv), (i, x)| if x.abs() > bv { (i, x.abs()) } else { (bi, bv) })
                .0;
            if v[imax] < 0.0 {
                for a in v.iter_mut() {
                    *a = -*a;
                }
            }
            out.push((lambda, v));
        }
        out
    }
}

/// Assembled discrete operator `M⁻¹A` of one mode for time stepping. Values
/// are in the substituted variable `v = x^{−γ} u`.
#[derive(Debug, Clone)]
pub struct Discretization {
    pencil: Pencil,
}

impl Discretization {
    pub fn new(op: &RadialOperator, grid: &SLGrid) -> Result<Self> {
        Ok(Discretization { pencil: Pencil::assemble(op, grid)? })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.pencil.nodes
    }

    pub fn gamma(&self) -> f64 {
        self.pencil.gamma
    }

    /// Free node range `[first, last)`; other nodes carry Dirichlet zeros.
    pub fn free(&self) -> (usize, usize) {
        self.pencil.free
    }

    /// Lumped mass of free node `j` (free-range index).
    pub fn mass(&self, j: usize) -> f64 {
        self.pencil.m(j)
    }

    pub fn size(&self) -> usize {
        self.pencil.size()
    }

    /// `A v` on the free nodes.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let p = &self.pencil;
        let n = p.size();
        (0..n)
            .map(|j| {
                let mut s = p.a_diag(j) * v[j];
                if j > 0 {
                    s += p.a_off(j - 1) * v[j - 1];
                }
                if j + 1 < n {
                    s += p.a_off(j) * v[j + 1];
                }
                s
            })
            .collect()
    }

    /// Solves `(M + a A) y = r` (symmetric positive definite for `a ≥ 0`).
    pub fn solve_mass_plus(&self, a: f64, r: &[f64]) -> Vec<f64> {
        let p = &self.pencil;
        let n = p.size();
        let mut diag: Vec<f64> = (0..n).map(|j| p.m(j) + a * p.a_diag(j)).collect();
        let off: Vec<f64> = (0..n.saturating_sub(1)).map(|j| a * p.a_off(j)).collect();
        let mut y = r.to_vec();
        for j in 1..n {
            let f = off[j - 1] / diag[j - 1];
            diag[j] -= f * off[j - 1];
            y[j] -= f * y[j - 1];
        }
        y[n - 1] /= diag[n - 1];
        for j in (0..n - 1).rev() {
            y[j] = (y[j] - off[j] * y[j + 1]) / diag[j];
        }
        y
    }

    /// Linear-interpolation weights of the point `x` over free nodes.
    pub fn hat_weights(&self, x: f64) -> Vec<(usize, f64)> {
        let xs = &self.pencil.nodes;
        let (f0, f1) = self.pencil.free;
        let i = match xs.binary_search_by(|p| p.partial_cmp(&x).unwrap()) {
            Ok(i) => return if i >= f0 && i < f1 { vec![(i - f0, 1.0)] } else { vec![] },
            Err(0) => 0,
            Err(i) if i >= xs.len() => xs.len() - 2,
            Err(i) => i - 1,
        };
        let s = (x - xs[i]) / (xs[i + 1] - xs[i]);
        [(i, 1.0 - s), (i + 1, s)]
            .into_iter()
            .filter(|(k, w)| *k >= f0 && *k < f1 && *w != 0.0)
            .map(|(k, w)| (k - f0, w))
            .collect()
    }
}

/// Eigenpairs of one radial mode. Vectors hold `v` at every grid node
/// (zeros at Dirichlet nodes) with `u = x^γ v` normalized in `L²(w dx)`.
#[derive(Debug, Clone, Serialize)]
pub struct ModeSolution {
    pub mu: f64,
    pub eps: f64,
    pub gamma: f64,
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
    #[serde(skip)]
    pub vectors: Vec<Vec<f64>>,
    /// lumped `w x^{2γ}` weights per node
    #[serde(skip)]
    pub mass: Vec<f64>,
}

impl ModeSolution {
    /// `u_k(x)` by linear interpolation of `v`.
    pub fn eval(&self, k: usize, x: f64) -> f64 {
        let xs = &self.nodes;
        let v = &self.vectors[k];
        let i = match xs.binary_search_by(|p| p.partial_cmp(&x).unwrap()) {
            Ok(i) => return v[i] * pow_gamma(x, self.gamma),
            Err(0) => 0,
            Err(i) if i >= xs.len() => xs.len() - 2,
            Err(i) => i - 1,
        };
        let s = (x - xs[i]) / (xs[i + 1] - xs[i]);
        ((1.0 - s) * v[i] + s * v[i + 1]) * pow_gamma(x, self.gamma)
    }

    /// Discrete `w`-inner product of two eigenvectors.
    pub fn gram(&self, a: usize, b: usize) -> f64 {
        self.vectors[a].iter().zip(&self.vectors[b]).zip(&self.mass).map(|((x, y), m)| x * y * m).sum()
    }
}

fn pow_gamma(x: f64, g: f64) -> f64 {
    if g == 0.0 {
        1.0
    } else {
        x.abs().powf(g)
    }
}

/// Lowest `count` eigenpairs of the discretized operator on `grid`.
pub fn solve_mode(op: &RadialOperator, grid: &SLGrid, count: usize) -> Result<ModeSolution> {
    if count > grid.cells() / 4 {
        return Err(SpectralError::CountTooLarge { count, nodes: grid.cells() });
    }
    let pencil = Pencil::assemble(op, grid)?;
    let pairs = pencil.eigenpairs(count);
    let (f0, f1) = pencil.free;
    let nn = pencil.nodes.len();
    let mut values = Vec::with_capacity(count);
    let mut vectors = Vec::with_capacity(count);
    for (l, v) in pairs {
        let mut full = vec![0.0; nn];
        full[f0..f1].copy_from_slice(&v);
        values.push(l);
        vectors.push(full);
    }
    let mut mass = pencil.mass.clone();
    for (i, m) in mass.iter_mut().enumerate() {
        if i < f0 || i >= f1 {
            *m = 0.0;
        }
    }
    Ok(ModeSolution { mu: op.mu, eps: op.eps, gamma: pencil.gamma, nodes: pencil.nodes, values, vectors, mass })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// cell count of the coarse grid of the Richardson pair
    pub cells: usize,
    /// relative tolerance on the Richardson estimate
    pub tolerance: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { cells: 2048, tolerance: 1e-3 }
    }
}

/// Richardson-extrapolated eigenvalues of one mode from the pair `(N, 2N)`.
#[derive(Debug, Clone, Serialize)]
pub struct ModeEigenvalues {
    pub mu: f64,
    pub values: Vec<f64>,
    pub err_est: Vec<f64>,
}

pub fn solve_mode_richardson(op: &RadialOperator, count: usize, opts: &SolverOptions) -> Result<ModeEigenvalues> {
    let coarse = solve_mode(op, &SLGrid::for_operator(op, opts.cells)?, count)?;
    let fine = solve_mode(op, &SLGrid::for_operator(op, 2 * opts.cells)?, count)?;
    let mut values = Vec::with_capacity(count);
    let mut err_est = Vec::with_capacity(count);
    for (k, (a, b)) in coarse.values.iter().zip(&fine.values).enumerate() {
        let est = (b - a).abs() / 3.0;
        if est > opts.tolerance * b.abs().max(1.0) {
            return Err(SpectralError::TooCoarse { index: k, estimate: est, tolerance: opts.tolerance });
        }
        values.push(b + (b - a) / 3.0);
        err_est.push(est);
    }
    Ok(ModeEigenvalues { mu: op.mu, values, err_est })
}

/// Zeros of `J_ν` on `(0, ∞)`, bracketed by a fixed scan and bisected.
pub fn bessel_j_zeros(nu: f64, count: usize) -> Vec<f64> {
    let j = |z: f64| puruspe::besseljy(nu, z).0;
    let mut out = Vec::with_capacity(count);
    let step = 0.25;
    let mut a = nu.max(0.0) + 1e-3;
    let mut fa = j(a);
    while out.len() < count {
        let b = a + step;
        let fb = j(b);
        if fa == 0.0 {
            out.push(a);
        } else if fa * fb < 0.0 {
            let (mut lo, mut hi, mut flo) = (a, b, fa);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let fm = j(mid);
                if fm * flo <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                    flo = fm;
                }
            }
            out.push(0.5 * (lo + hi));
        }
        a = b;
        fa = fb;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenEntry {
    pub lambda: f64,
    pub l: u32,
    pub mu: f64,
    pub multiplicity: u64,
    pub k: usize,
    pub err_est: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenResult {
    pub eps: f64,
    pub entries: Vec<EigenEntry>,
    /// lower bound for every eigenvalue of the truncated modes
    pub tail_bound: f64,
}

impl EigenResult {
    fn from_modes(eps: f64, mut entries: Vec<EigenEntry>, tail_bound: f64) -> Self {
        entries.sort_by(|a, b| a.lambda.total_cmp(&b.lambda).then(a.l.cmp(&b.l)).then(a.k.cmp(&b.k)));
        EigenResult { eps, entries, tail_bound }
    }

    /// Eigenvalues with multiplicity, ascending.
    pub fn expanded(&self) -> Vec<f64> {
        self.entries.iter().flat_map(|e| std::iter::repeat_n(e.lambda, e.multiplicity as usize)).collect()
    }
}

/// Lowest eigenvalue any mode with unit-sphere eigenvalue `mu` can have:
/// the angular term alone is `μ/f²`.
fn mode_floor(family: &WarpFamily, eps: f64, mu: f64) -> f64 {
    let f = family.warp_max(eps);
    mu / (f * f)
}

fn tail_bound(family: &WarpFamily, eps: f64) -> f64 {
    match family.cross_section.modes.last() {
        Some(m) => {
            let dim = family.n as f64 - 1.0;
            let l = m.l as f64 + 1.0;
            mode_floor(family, eps, l * (l + dim - 1.0))
        }
        None => 0.0,
    }
}

/// Exact-cone spectrum: `(j_{ν,k}/L)²` per mode; the neck doubles every
/// multiplicity (two cones decouple at the tip).
pub fn conic_reference_spectrum(family: &WarpFamily, count_per_mode: usize) -> EigenResult {
    let factor = match family.kind() {
        ProfileKind::Neck => 2,
        ProfileKind::Capped => 1,
    };
    let mut entries = Vec::new();
    for m in &family.cross_section.modes {
        let nu = indicial_roots(family.n, m.mu, family.c).nu;
        for (k, z) in bessel_j_zeros(nu, count_per_mode).into_iter().enumerate() {
            let lambda = (z / family.length).powi(2);
            entries.push(EigenEntry { lambda, l: m.l, mu: m.mu, multiplicity: m.multiplicity * factor, k, err_est: 0.0 });
        }
    }
    EigenResult::from_modes(0.0, entries, tail_bound(family, 0.0))
}

/// Per-mode Richardson solves merged into one spectrum.
pub fn assemble_spectrum(
    family: &WarpFamily,
    eps: f64,
    counts: &[usize],
    opts: &SolverOptions,
    require_complete: bool,
) -> Result<EigenResult> {
    let modes: Vec<(Mode, usize)> =
        family.cross_section.modes.iter().copied().zip(counts.iter().copied()).filter(|(_, c)| *c > 0).collect();
    let solved: Vec<Result<(Mode, ModeEigenvalues)>> = modes
        .par_iter()
        .map(|(m, c)| {
            let op = family.radial_operator(m.mu, eps)?;
            Ok((*m, solve_mode_richardson(&op, *c, opts)?))
        })
        .collect();
    let mut entries = Vec::new();
    for r in solved {
        let (m, ev) = r?;
        for (k, (l, e)) in ev.values.iter().zip(&ev.err_est).enumerate() {
            entries.push(EigenEntry { lambda: *l, l: m.l, mu: m.mu, multiplicity: m.multiplicity, k, err_est: *e });
        }
    }
    let res = EigenResult::from_modes(eps, entries, tail_bound(family, eps));
    if require_complete {
        if let Some(top) = res.entries.last() {
            if top.lambda > res.tail_bound {
                return Err(SpectralError::Truncation { tail: res.tail_bound, needed: top.lambda });
            }
        }
    }
    Ok(res)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cluster {
    pub center: f64,
    pub multiplicity: u64,
    pub window: f64,
    pub matched_reference: Option<f64>,
    pub reference_multiplicity: u64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowCurve {
    pub l: u32,
    pub k: usize,
    pub multiplicity: u64,
    pub values: Vec<f64>,
    pub err_est: Vec<f64>,
    pub limit: f64,
    pub extrapolation_err: f64,
    /// empirical order from the last three schedule points
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralFlow {
    pub schedule: Vec<f64>,
    pub curves: Vec<FlowCurve>,
    pub clusters: Vec<Cluster>,
    pub reference: Vec<(f64, u64)>,
    pub both_inclusions: bool,
    pub multiplicities_match: bool,
    /// max relative excess `(λ_l(ε) − λ̄_l)/λ̄_l` over the compared levels
    pub upper_excess: Vec<f64>,
    /// excess nonincreasing along the schedule after its first step
    pub upper_bound_ok: bool,
}

impl SpectralFlow {
    pub fn verdict(&self) -> &'static str {
        match (self.both_inclusions, self.multiplicities_match) {
            (true, true) => "both inclusions hold, multiplicities match",
            (true, false) => "both inclusions hold, multiplicities differ",
            _ => "inclusion failed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowOptions {
    pub solver: SolverOptions,
    /// number of lowest reference levels compared
    pub levels: usize,
    pub rel_window: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions { solver: SolverOptions::default(), levels: 10, rel_window: 1e-3 }
    }
}

pub const DEFAULT_SCHEDULE: [f64; 5] = [0.2, 0.1, 0.05, 0.025, 0.0125];

/// Polynomial extrapolation in ε to ε = 0 through the last (up to three)
/// schedule points, with the change from dropping the oldest point as the
/// error estimate and an empirical order from the last three values.
fn accumulation(eps: &[f64], v: &[f64]) -> (f64, f64, Option<f64>) {
    let n = v.len();
    let m = n.min(3);
    let neville = |k: usize| -> f64 {
        let xs = &eps[n - k..];
        let mut p: Vec<f64> = v[n - k..].to_vec();
        for lvl in 1..k {
            for i in 0..k - lvl {
                p[i] = (xs[i] * p[i + 1] - xs[i + lvl] * p[i]) / (xs[i] - xs[i + lvl]);
            }
        }
        p[0]
    };
    let limit = neville(m);
    let err = if m >= 2 { (limit - neville(m - 1)).abs() } else { f64::INFINITY };
    let rate = if n >= 3 {
        let (d1, d2) = (v[n - 2] - v[n - 3], v[n - 1] - v[n - 2]);
        let r = d2 / d1;
        let q = eps[n - 2] / eps[n - 1];
        (d1 != 0.0 && r > 0.0 && d2.abs() > 1e-13 * v[n - 1].abs().max(1.0)).then(|| -(r.ln()) / q.ln())
    } else {
        None
    };
    (limit, err, rate)
}

fn group(values: &[(f64, u64, f64)]) -> Vec<(f64, u64, f64)> {
    // (value, multiplicity, window) sorted ascending
    let mut out: Vec<(f64, u64, f64, f64)> = Vec::new(); // weighted sum, mult, window, last
    for &(v, m, w) in values {
        match out.last_mut() {
            Some(g) if v - g.3 <= g.2.max(w) => {
                g.0 += v * m as f64;
                g.1 += m;
                g.2 = g.2.max(w);
                g.3 = v;
            }
            _ => out.push((v * m as f64, m, w, v)),
        }
    }
    out.into_iter().map(|(s, m, w, _)| (s / m as f64, m, w)).collect()
}

/// Eigenvalue curves along a decreasing ε schedule, their accumulation
/// points, and the cluster-by-cluster comparison with the exact cone.
pub fn spectral_flow(family: &WarpFamily, schedule: &[f64], opts: &FlowOptions) -> Result<SpectralFlow> {
    if schedule.len() < 4 || schedule.windows(2).any(|w| w[1] >= w[0]) || schedule.iter().any(|e| *e <= 0.0) {
        return Err(SpectralError::Schedule { min: 4 });
    }
    let factor = if family.kind() == ProfileKind::Neck { 2 } else { 1 };
    // reference levels and how many radial eigenvalues each mode needs
    let nmodes = family.cross_section.modes.len();
    let reference_all = conic_reference_spectrum(family, opts.levels + 1);
    let mut reference: Vec<(f64, u64)> = Vec::new();
    for e in &reference_all.entries {
        match reference.last_mut() {
            Some(r) if (e.lambda - r.0).abs() <= 1e-9 * e.lambda => r.1 += e.multiplicity,
            _ => reference.push((e.lambda, e.multiplicity)),
        }
    }
    reference.truncate(opts.levels);
    let top = reference.last().map(|r| r.0).unwrap_or(0.0);
    let mut counts = vec![0usize; nmodes];
    for e in &reference_all.entries {
        if e.lambda <= top * (1.0 + 1e-9) {
            counts[e.l as usize] += 1;
        }
    }
    // one spare eigenvalue per mode so the top cluster is fully resolved
    let counts: Vec<usize> = counts.iter().map(|c| factor * (c + 1)).collect();

    let spectra: Vec<Result<EigenResult>> =
        schedule.par_iter().map(|&e| assemble_spectrum(family, e, &counts, &opts.solver, false)).collect();
    let spectra = spectra.into_iter().collect::<Result<Vec<_>>>()?;

    let mut curves = Vec::new();
    for m in &family.cross_section.modes {
        for k in 0..counts[m.l as usize] {
            let mut values = Vec::new();
            let mut errs = Vec::new();
            for s in &spectra {
                let e = s.entries.iter().find(|e| e.l == m.l && e.k == k).expect("mode solved");
                values.push(e.lambda);
                errs.push(e.err_est);
            }
            let (limit, extrapolation_err, rate) = accumulation(schedule, &values);
            curves.push(FlowCurve {
                l: m.l,
                k,
                multiplicity: m.multiplicity,
                values,
                err_est: errs,
                limit,
                extrapolation_err,
                rate,
            });
        }
    }

    let mut pts: Vec<(f64, u64, f64)> = curves
        .iter()
        .map(|c| {
            // grid Richardson error plus the error of the ε-extrapolation
            let rich = c.err_est.iter().cloned().fold(0.0, f64::max) + c.extrapolation_err;
            (c.limit, c.multiplicity, (opts.rel_window * c.limit).max(3.0 * rich))
        })
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let grouped = group(&pts);

    // compare the clusters below the last reference level plus its window
    let mut clusters = Vec::new();
    let mut both = true;
    let mut mult_ok = true;
    for (center, mult, window) in grouped {
        let window = window.max(opts.rel_window * center);
        if center > top + window {
            break;
        }
        let hit = reference.iter().find(|r| (r.0 - center).abs() <= window);
        if hit.is_none() {
            both = false;
        }
        if hit.map(|r| r.1 != mult).unwrap_or(true) {
            mult_ok = false;
        }
        clusters.push(Cluster {
            center,
            multiplicity: mult,
            window,
            matched_reference: hit.map(|r| r.0),
            reference_multiplicity: hit.map(|r| r.1).unwrap_or(0),
            gap: hit.map(|r| (r.0 - center).abs()).unwrap_or(f64::NAN),
        });
    }
    for r in &reference {
        if !clusters.iter().any(|c| c.matched_reference == Some(r.0)) {
            both = false;
        }
    }
    // upper minimax direction: relative excess of the ordered spectrum over
    // the ordered reference, per schedule point
    let want: usize = reference.iter().map(|r| r.1 as usize).sum();
    let reference_expanded: Vec<f64> =
        reference.iter().flat_map(|r| std::iter::repeat_n(r.0, r.1 as usize)).collect();
    let upper_excess: Vec<f64> = (0..schedule.len())
        .map(|j| {
            let mut vals: Vec<f64> = curves
                .iter()
                .flat_map(|c| std::iter::repeat_n(c.values[j], c.multiplicity as usize))
                .collect();
            vals.sort_by(f64::total_cmp);
            vals.iter()
                .zip(&reference_expanded)
                .take(want)
                .map(|(l, r)| ((l - r) / r).max(0.0))
                .fold(0.0, f64::max)
        })
        .collect();
    let upper_bound_ok = upper_excess.windows(2).skip(1).all(|w| w[1] <= w[0] * (1.0 + 1e-9));
    Ok(SpectralFlow {
        schedule: schedule.to_vec(),
        curves,
        clusters,
        reference,
        both_inclusions: both,
        multiplicities_match: mult_ok,
        upper_excess,
        upper_bound_ok,
    })
}

/// Galerkin (Rayleigh–Ritz) eigenvalues of the discrete form over a trial
/// space of functions `u`; each is an upper bound for the corresponding
/// eigenvalue of the same discretization.
pub fn rayleigh_minimax_bound(
    op: &RadialOperator,
    grid: &SLGrid,
    trial: &[&dyn Fn(f64) -> f64],
) -> Result<Vec<f64>> {
    let pencil = Pencil::assemble(op, grid)?;
    let (f0, f1) = pencil.free;
    let g = pencil.gamma;
    let x = &pencil.nodes;
    let vecs: Vec<Vec<f64>> = trial
        .iter()
        .map(|u| {
            let mut v: Vec<f64> = (f0..f1).map(|i| if x[i] == 0.0 { f64::NAN } else { u(x[i]) / pow_gamma(x[i], g) }).collect();
            if v[0].is_nan() {
                v[0] = if g == 0.0 { u(0.0) } else { 2.0 * v[1] - v[2] };
            }
            v
        })
        .collect();
    let d = vecs.len();
    let mut a = DMatrix::<f64>::zeros(d, d);
    let mut m = DMatrix::<f64>::zeros(d, d);
    for i in 0..d {
        for j in 0..=i {
            let s: Vec<f64> = vecs[i].iter().zip(&vecs[j]).map(|(p, q)| p + q).collect();
            let dif: Vec<f64> = vecs[i].iter().zip(&vecs[j]).map(|(p, q)| p - q).collect();
            let aij = 0.25 * (pencil.energy(&s) - pencil.energy(&dif));
            let mij = pencil.mass_dot(&vecs[i], &vecs[j]);
            a[(i, j)] = aij;
            a[(j, i)] = aij;
            m[(i, j)] = mij;
            m[(j, i)] = mij;
        }
    }
    let chol = m.clone().cholesky().ok_or(SpectralError::SingularGram(0.0))?;
    let l = chol.l();
    let min_piv = (0..d).map(|i| l[(i, i)]).fold(f64::INFINITY, f64::min);
    let max_piv = (0..d).map(|i| l[(i, i)]).fold(0.0, f64::max);
    if min_piv <= 1e-7 * max_piv {
        return Err(SpectralError::SingularGram(min_piv));
    }
    let linv = l.clone().try_inverse().ok_or(SpectralError::SingularGram(min_piv))?;
    let c = &linv * a * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(c).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}
