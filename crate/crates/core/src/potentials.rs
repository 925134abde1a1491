//! Nearest-neighbour multi-body site potentials `V(g_1, …, g_6)` and the
//! Cauchy–Born density `W(F) = V(Fa)/Ω0`.

use std::fmt;

use crate::lattice::{deformed_vectors, lattice_vectors, Dir, OMEGA0};
use crate::{Bonds, Error, Mat2, Result, Vec2};

/// `∂_{ij}V(g)` as a 6×6 grid of 2×2 blocks, `H[i][j][(a, b)] = ∂²V / ∂g_i^a ∂g_j^b`.
pub type Hessian = [[Mat2; 6]; 6];

/// Step used by finite-difference derivatives.
pub const FD_STEP: f64 = 1e-5;

/// Smallest bond length accepted by the bond-angle potential.
pub const MIN_BOND: f64 = 1e-8;

/// How first and second derivatives are computed.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq)]
pub enum DerivativeMode {
    #[default]
    Analytic,
    /// Central differences with step [`FD_STEP`].
    FiniteDifference,
    /// Central differences with one Richardson extrapolation step.
    Richardson,
}

/// A site potential on the six nearest-neighbour finite differences.
pub trait SitePotential: Send + Sync {
    fn eval(&self, g: &Bonds) -> Result<f64>;

    /// `(∂_1V(g), …, ∂_6V(g))`.
    fn d1(&self, g: &Bonds) -> Result<Bonds> {
        fd_gradient(|h| self.eval(h), g, DerivativeMode::FiniteDifference)
    }

    /// `∂_{ij}V(g)`.
    fn d2(&self, g: &Bonds) -> Result<Hessian> {
        fd_hessian(|h| self.d1(h), g, DerivativeMode::FiniteDifference)
    }

    /// Whether `V((−g_{j+3})_j) = V(g)` holds by construction.
    fn point_symmetric(&self) -> bool;

    fn name(&self) -> String;
}

impl<P: SitePotential + ?Sized> SitePotential for &P {
    fn eval(&self, g: &Bonds) -> Result<f64> {
        (**self).eval(g)
    }
    fn d1(&self, g: &Bonds) -> Result<Bonds> {
        (**self).d1(g)
    }
    fn d2(&self, g: &Bonds) -> Result<Hessian> {
        (**self).d2(g)
    }
    fn point_symmetric(&self) -> bool {
        (**self).point_symmetric()
    }
    fn name(&self) -> String {
        (**self).name()
    }
}

impl<P: SitePotential + ?Sized> SitePotential for Box<P> {
    fn eval(&self, g: &Bonds) -> Result<f64> {
        (**self).eval(g)
    }
    fn d1(&self, g: &Bonds) -> Result<Bonds> {
        (**self).d1(g)
    }
    fn d2(&self, g: &Bonds) -> Result<Hessian> {
        (**self).d2(g)
    }
    fn point_symmetric(&self) -> bool {
        (**self).point_symmetric()
    }
    fn name(&self) -> String {
        (**self).name()
    }
}

fn perturbed(g: &Bonds, j: usize, c: usize, h: f64) -> Bonds {
    let mut out = *g;
    out[j][c] += h;
    out
}

fn central<T, F>(f: &F, g: &Bonds, j: usize, c: usize, h: f64) -> Result<T>
where
    T: std::ops::Sub<Output = T> + std::ops::Mul<f64, Output = T>,
    F: Fn(&Bonds) -> Result<T>,
{
    let p = f(&perturbed(g, j, c, h))?;
    let m = f(&perturbed(g, j, c, -h))?;
    Ok((p - m) * (0.5 / h))
}

fn directional<T, F>(f: &F, g: &Bonds, j: usize, c: usize, mode: DerivativeMode) -> Result<T>
where
    T: std::ops::Sub<Output = T> + std::ops::Mul<f64, Output = T> + Copy,
    F: Fn(&Bonds) -> Result<T>,
{
    let d = central(f, g, j, c, FD_STEP)?;
    if mode == DerivativeMode::Richardson {
        let d2 = central(f, g, j, c, 0.5 * FD_STEP)?;
        Ok(d2 * (4.0 / 3.0) - d * (1.0 / 3.0))
    } else {
        Ok(d)
    }
}

/// Gradient of a scalar function of six bonds by central differences.
pub fn fd_gradient(f: impl Fn(&Bonds) -> Result<f64>, g: &Bonds, mode: DerivativeMode) -> Result<Bonds> {
    let mut out = [Vec2::zeros(); 6];
    for j in 0..6 {
        for c in 0..2 {
            out[j][c] = directional(&f, g, j, c, mode)?;
        }
    }
    Ok(out)
}

/// Jacobian of a bond-valued gradient by central differences.
pub fn fd_hessian(d1: impl Fn(&Bonds) -> Result<Bonds>, g: &Bonds, mode: DerivativeMode) -> Result<Hessian> {
    let mut out = [[Mat2::zeros(); 6]; 6];
    let f = |h: &Bonds| d1(h).map(BondVec);
    for j in 0..6 {
        for b in 0..2 {
            let col: BondVec = directional(&f, g, j, b, mode)?;
            for i in 0..6 {
                for a in 0..2 {
                    out[i][j][(a, b)] = col.0[i][a];
                }
            }
        }
    }
    Ok(out)
}

#[derive(Copy, Clone)]
struct BondVec(Bonds);

impl std::ops::Sub for BondVec {
    type Output = BondVec;
    fn sub(self, rhs: BondVec) -> BondVec {
        BondVec(std::array::from_fn(|j| self.0[j] - rhs.0[j]))
    }
}

impl std::ops::Mul<f64> for BondVec {
    type Output = BondVec;
    fn mul(self, s: f64) -> BondVec {
        BondVec(self.0.map(|v| v * s))
    }
}

/// `V(g) = ½ Σ_j κ_j |g_j − a_j|²`.
#[derive(Clone, Debug, PartialEq)]
pub struct Quadratic {
    pub kappa: [f64; 6],
}

pub fn make_quadratic(kappa: [f64; 6]) -> Result<Quadratic> {
    for j in 0..3 {
        if kappa[j] != kappa[j + 3] {
            return Err(Error::SymmetryViolation(j + 1, j + 4));
        }
    }
    if let Some(k) = kappa.iter().find(|k| !(k.is_finite() && **k >= 0.0)) {
        return Err(Error::InvalidParameter(format!("quadratic stiffness {k} must be finite and non-negative")));
    }
    Ok(Quadratic { kappa })
}

impl SitePotential for Quadratic {
    fn eval(&self, g: &Bonds) -> Result<f64> {
        let a = lattice_vectors();
        Ok(0.5 * (0..6).map(|j| self.kappa[j] * (g[j] - a[j]).norm_squared()).sum::<f64>())
    }

    fn d1(&self, g: &Bonds) -> Result<Bonds> {
        let a = lattice_vectors();
        Ok(std::array::from_fn(|j| (g[j] - a[j]) * self.kappa[j]))
    }

    fn d2(&self, _g: &Bonds) -> Result<Hessian> {
        let mut h = [[Mat2::zeros(); 6]; 6];
        for j in 0..6 {
            h[j][j] = Mat2::identity() * self.kappa[j];
        }
        Ok(h)
    }

    fn point_symmetric(&self) -> bool {
        true
    }

    fn name(&self) -> String {
        format!("quadratic(kappa={:?})", self.kappa)
    }
}

/// Morse pair interaction `V(g) = ½ Σ_j φ(|g_j|) − 3φ(1)`,
/// `φ(r) = D (e^{−2α(r−r0)} − 2 e^{−α(r−r0)})`.
#[derive(Clone, Debug, PartialEq)]
pub struct MorsePair {
    pub depth: f64,
    pub alpha: f64,
    pub r0: f64,
    pub mode: DerivativeMode,
}

pub fn make_morse_pair(depth: f64, alpha: f64, r0: f64) -> Result<MorsePair> {
    for (name, v) in [("depth", depth), ("alpha", alpha), ("r0", r0)] {
        if !v.is_finite() {
            return Err(Error::InvalidParameter(format!("morse {name} = {v} is not finite")));
        }
    }
    if !(0.5..=1.5).contains(&r0) {
        return Err(Error::InvalidParameter(format!("morse r0 = {r0} is not near the lattice spacing")));
    }
    Ok(MorsePair { depth, alpha, r0, mode: DerivativeMode::Analytic })
}

impl MorsePair {
    pub fn with_mode(mut self, mode: DerivativeMode) -> Self {
        self.mode = mode;
        self
    }

    fn phi(&self, r: f64) -> f64 {
        let e = (-self.alpha * (r - self.r0)).exp();
        self.depth * (e * e - 2.0 * e)
    }

    fn dphi(&self, r: f64) -> f64 {
        let e = (-self.alpha * (r - self.r0)).exp();
        2.0 * self.alpha * self.depth * (e - e * e)
    }

    fn ddphi(&self, r: f64) -> f64 {
        let e = (-self.alpha * (r - self.r0)).exp();
        2.0 * self.alpha * self.alpha * self.depth * (2.0 * e * e - e)
    }
}

impl SitePotential for MorsePair {
    fn eval(&self, g: &Bonds) -> Result<f64> {
        Ok(0.5 * g.iter().map(|v| self.phi(v.norm())).sum::<f64>() - 3.0 * self.phi(1.0))
    }

    fn d1(&self, g: &Bonds) -> Result<Bonds> {
        if self.mode != DerivativeMode::Analytic {
            return fd_gradient(|h| self.eval(h), g, self.mode);
        }
        let mut out = [Vec2::zeros(); 6];
        for j in 0..6 {
            let r = g[j].norm();
            if r < MIN_BOND {
                return Err(Error::DegenerateBond(r));
            }
            out[j] = g[j] * (0.5 * self.dphi(r) / r);
        }
        Ok(out)
    }

    fn d2(&self, g: &Bonds) -> Result<Hessian> {
        if self.mode != DerivativeMode::Analytic {
            return fd_hessian(|h| self.d1(h), g, self.mode);
        }
        let mut h = [[Mat2::zeros(); 6]; 6];
        for j in 0..6 {
            let r = g[j].norm();
            if r < MIN_BOND {
                return Err(Error::DegenerateBond(r));
            }
            let n = g[j] / r;
            let nn = n * n.transpose();
            h[j][j] = (nn * self.ddphi(r) + (Mat2::identity() - nn) * (self.dphi(r) / r)) * 0.5;
        }
        Ok(h)
    }

    fn point_symmetric(&self) -> bool {
        true
    }

    fn name(&self) -> String {
        format!("morse(D={}, alpha={}, r0={})", self.depth, self.alpha, self.r0)
    }
}

/// Three-body bond-angle potential `V(g) = κθ Σ_j (cos θ_j − cos θ⁰)²`, `θ_j = ∠(g_j, g_{j+s})`.
///
/// With span `s = 1` this is the nearest-angle potential (`θ⁰ = π/3`); span `s = 2` couples
/// bonds `120°` apart (`θ⁰ = 2π/3`).
#[derive(Clone, Debug, PartialEq)]
pub struct BondAngle {
    pub kappa: f64,
    pub mode: DerivativeMode,
    pub span: usize,
}

pub fn make_bond_angle(kappa: f64) -> Result<BondAngle> {
    if !kappa.is_finite() {
        return Err(Error::InvalidParameter(format!("bond-angle stiffness {kappa} is not finite")));
    }
    Ok(BondAngle { kappa, mode: DerivativeMode::Analytic, span: 1 })
}

/// The bond-angle potential on pairs of bonds `120°` apart.
pub fn make_wide_angle(kappa: f64) -> Result<BondAngle> {
    Ok(BondAngle { span: 2, ..make_bond_angle(kappa)? })
}

impl BondAngle {
    pub fn with_mode(mut self, mode: DerivativeMode) -> Self {
        self.mode = mode;
        self
    }

    fn reference_cosine(&self) -> f64 {
        if self.span == 1 {
            0.5
        } else {
            -0.5
        }
    }
}

fn checked_norm(v: Vec2) -> Result<f64> {
    let r = v.norm();
    if r < MIN_BOND {
        Err(Error::DegenerateBond(r))
    } else {
        Ok(r)
    }
}

impl SitePotential for BondAngle {
    fn eval(&self, g: &Bonds) -> Result<f64> {
        let c0 = self.reference_cosine();
        let mut s = 0.0;
        for j in 0..6 {
            let (u, v) = (g[j], g[(j + self.span) % 6]);
            let c = u.dot(&v) / (checked_norm(u)? * checked_norm(v)?);
            s += (c - c0) * (c - c0);
        }
        Ok(self.kappa * s)
    }

    fn d1(&self, g: &Bonds) -> Result<Bonds> {
        if self.mode != DerivativeMode::Analytic {
            return fd_gradient(|h| self.eval(h), g, self.mode);
        }
        let c0 = self.reference_cosine();
        let mut out = [Vec2::zeros(); 6];
        for j in 0..6 {
            let k = (j + self.span) % 6;
            let (u, v) = (g[j], g[k]);
            let (ru, rv) = (checked_norm(u)?, checked_norm(v)?);
            let c = u.dot(&v) / (ru * rv);
            let w = 2.0 * self.kappa * (c - c0);
            out[j] += (v / (ru * rv) - u * (c / (ru * ru))) * w;
            out[k] += (u / (ru * rv) - v * (c / (rv * rv))) * w;
        }
        Ok(out)
    }

    fn d2(&self, g: &Bonds) -> Result<Hessian> {
        let mode = match self.mode {
            DerivativeMode::Analytic => DerivativeMode::FiniteDifference,
            m => m,
        };
        fd_hessian(|h| self.d1(h), g, mode)
    }

    fn point_symmetric(&self) -> bool {
        true
    }

    fn name(&self) -> String {
        if self.span == 1 {
            format!("bond-angle(kappa={})", self.kappa)
        } else {
            format!("wide-angle(kappa={})", self.kappa)
        }
    }
}

/// Sum of site potentials.
pub struct Sum<P, Q>(pub P, pub Q);

impl<P: SitePotential, Q: SitePotential> SitePotential for Sum<P, Q> {
    fn eval(&self, g: &Bonds) -> Result<f64> {
        Ok(self.0.eval(g)? + self.1.eval(g)?)
    }
    fn d1(&self, g: &Bonds) -> Result<Bonds> {
        let (a, b) = (self.0.d1(g)?, self.1.d1(g)?);
        Ok(std::array::from_fn(|j| a[j] + b[j]))
    }
    fn d2(&self, g: &Bonds) -> Result<Hessian> {
        let (a, b) = (self.0.d2(g)?, self.1.d2(g)?);
        Ok(std::array::from_fn(|i| std::array::from_fn(|j| a[i][j] + b[i][j])))
    }
    fn point_symmetric(&self) -> bool {
        self.0.point_symmetric() && self.1.point_symmetric()
    }
    fn name(&self) -> String {
        format!("{} + {}", self.0.name(), self.1.name())
    }
}

/// `W(F) = V(Fa) / Ω0`.
pub fn cb_density<P: SitePotential + ?Sized>(v: &P, f: &Mat2) -> Result<f64> {
    Ok(v.eval(&deformed_vectors(f))? / OMEGA0)
}

/// `∂W(F) = (1/Ω0) Σ_j ∂_jV(Fa) ⊗ a_j`.
pub fn cb_stress<P: SitePotential + ?Sized>(v: &P, f: &Mat2) -> Result<Mat2> {
    let d = v.d1(&deformed_vectors(f))?;
    Ok(bond_stress(&d))
}

/// `(1/Ω0) Σ_j s_j ⊗ a_j`.
pub fn bond_stress(s: &Bonds) -> Mat2 {
    let mut m = Mat2::zeros();
    for j in Dir::ALL {
        m += s[j.slot()] * j.vector().transpose();
    }
    m / OMEGA0
}

/// `[a_j a_{j+1}]^{-1}` for the triangle `T_{x,j}`.
fn edge_frame_inverse(j: Dir) -> Mat2 {
    Mat2::from_columns(&[j.vector(), j.next().vector()])
        .try_inverse()
        .expect("consecutive lattice directions are independent")
}

/// The gradient of the triangle `T_{x,j}` spanned by the bonds `g_j, g_{j+1}`.
pub fn triangle_gradient(g: &Bonds, j: Dir) -> Mat2 {
    Mat2::from_columns(&[g[j.slot()], g[j.next().slot()]]) * edge_frame_inverse(j)
}

/// The Cauchy–Born site potential `V^c(g) = (1/6) Σ_j V(G_j a)` with `G_j` the gradient on `T_{x,j}`.
pub struct ContinuumSite<P>(pub P);

impl<P: SitePotential> SitePotential for ContinuumSite<P> {
    fn eval(&self, g: &Bonds) -> Result<f64> {
        let mut s = 0.0;
        for j in Dir::ALL {
            s += self.0.eval(&deformed_vectors(&triangle_gradient(g, j)))?;
        }
        Ok(s / 6.0)
    }

    fn d1(&self, g: &Bonds) -> Result<Bonds> {
        let mut out = [Vec2::zeros(); 6];
        for j in Dir::ALL {
            let s = cb_stress(&self.0, &triangle_gradient(g, j))? * (OMEGA0 / 6.0);
            let m = s * edge_frame_inverse(j).transpose();
            out[j.slot()] += m.column(0);
            out[j.next().slot()] += m.column(1);
        }
        Ok(out)
    }

    fn point_symmetric(&self) -> bool {
        self.0.point_symmetric()
    }

    fn name(&self) -> String {
        format!("continuum({})", self.0.name())
    }
}

/// Reduced reconstruction coefficients `(C_{x,1}, …, C_{x,6})` of one site.
pub type SiteCoefficients = [f64; 6];

/// `(R_x g)_j = C_j g_j + (1 − C_j)(g_{j−1} + g_{j+1})`.
pub fn reconstruct_bonds(c: &SiteCoefficients, g: &Bonds) -> Bonds {
    std::array::from_fn(|j| {
        let (prev, next) = ((j + 5) % 6, (j + 1) % 6);
        g[j] * c[j] + (g[prev] + g[next]) * (1.0 - c[j])
    })
}

/// Pulls a gradient at `R_x g` back to `g`: `(R^T s)_i = C_i s_i + (1−C_{i−1}) s_{i−1} + (1−C_{i+1}) s_{i+1}`.
pub fn reconstruct_adjoint(c: &SiteCoefficients, s: &Bonds) -> Bonds {
    std::array::from_fn(|i| {
        let (prev, next) = ((i + 5) % 6, (i + 1) % 6);
        s[i] * c[i] + s[prev] * (1.0 - c[prev]) + s[next] * (1.0 - c[next])
    })
}

/// The interface site potential `V^i_x(g) = V(R_x g)`.
pub struct Reconstructed<P> {
    pub inner: P,
    pub coefficients: SiteCoefficients,
}

impl<P: SitePotential> SitePotential for Reconstructed<P> {
    fn eval(&self, g: &Bonds) -> Result<f64> {
        self.inner.eval(&reconstruct_bonds(&self.coefficients, g))
    }

    fn d1(&self, g: &Bonds) -> Result<Bonds> {
        let s = self.inner.d1(&reconstruct_bonds(&self.coefficients, g))?;
        Ok(reconstruct_adjoint(&self.coefficients, &s))
    }

    fn point_symmetric(&self) -> bool {
        false
    }

    fn name(&self) -> String {
        format!("reconstructed({})", self.inner.name())
    }
}

/// Sampled estimates of the global derivative bounds `M2`, `M3`.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialBounds {
    pub m2_est: f64,
    pub m3_est: f64,
    pub sample_set: String,
}

impl fmt::Display for PotentialBounds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "M2 >= {:.6e}, M3 >= {:.6e} over {}", self.m2_est, self.m3_est, self.sample_set)
    }
}

const ANGLES: usize = 48;

fn unit(k: usize) -> Vec2 {
    let t = std::f64::consts::PI * k as f64 / ANGLES as f64;
    Vec2::new(t.cos(), t.sin())
}

/// `sup_{|h1|=|h2|=|h3|=1} T[h1,h2,h3]` for a trilinear form given by slices `T[·][a] = m_a`.
fn trilinear_norm(slices: [Mat2; 2]) -> f64 {
    (0..ANGLES)
        .map(|k| {
            let h = unit(k);
            (slices[0] * h.x + slices[1] * h.y).norm_operator_2()
        })
        .fold(0.0, f64::max)
}

trait OperatorNorm {
    fn norm_operator_2(&self) -> f64;
}

impl OperatorNorm for Mat2 {
    fn norm_operator_2(&self) -> f64 {
        let m = self.transpose() * self;
        let (a, b, d) = (m[(0, 0)], m[(0, 1)], m[(1, 1)]);
        let tr = 0.5 * (a + d);
        let disc = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        (tr + disc).max(0.0).sqrt()
    }
}

/// Maxima over `probes` of the sums defining `M2` and `M3`; third derivatives by differences of `d2`.
pub fn estimate_bounds<P: SitePotential + ?Sized>(v: &P, probes: &[Bonds], description: &str) -> Result<PotentialBounds> {
    assert!(!probes.is_empty(), "estimate_bounds needs at least one probe state");
    let mut m2 = [[0.0f64; 6]; 6];
    let mut m3 = vec![0.0f64; 216];
    for g in probes {
        let h = v.d2(g)?;
        for i in 0..6 {
            for j in 0..6 {
                m2[i][j] = m2[i][j].max(h[i][j].norm_operator_2());
            }
        }
        for k in 0..6 {
            let mut slices = [[[Mat2::zeros(); 2]; 6]; 6];
            for c in 0..2 {
                let hp = v.d2(&perturbed(g, k, c, FD_STEP))?;
                let hm = v.d2(&perturbed(g, k, c, -FD_STEP))?;
                for i in 0..6 {
                    for j in 0..6 {
                        slices[i][j][c] = (hp[i][j] - hm[i][j]) * (0.5 / FD_STEP);
                    }
                }
            }
            for i in 0..6 {
                for j in 0..6 {
                    let idx = 36 * i + 6 * j + k;
                    m3[idx] = m3[idx].max(trilinear_norm(slices[i][j]));
                }
            }
        }
    }
    Ok(PotentialBounds {
        m2_est: m2.iter().flatten().sum(),
        m3_est: m3.iter().sum(),
        sample_set: format!("{} probe states ({description})", probes.len()),
    })
}

/// Probe states `Fa` for a grid of gradients within `radius` of the identity.
pub fn homogeneous_probes(radius: f64, steps: usize) -> Vec<Bonds> {
    let mut out = Vec::new();
    let n = steps.max(1) as i64;
    let grid = |k: i64| radius * k as f64 / n as f64;
    for i in -n..=n {
        for j in -n..=n {
            for k in [-n, 0, n] {
                let f = Mat2::new(1.0 + grid(i), grid(k), grid(-k), 1.0 + grid(j));
                out.push(deformed_vectors(&f));
            }
        }
    }
    out
}

/// `(−g_{j+3})_j`.
pub fn point_reflect(g: &Bonds) -> Bonds {
    std::array::from_fn(|j| -g[(j + 3) % 6])
}

/// Largest deviation from `V((−g_{j+3})_j) = V(g)` over the given states.
pub fn symmetry_defect<P: SitePotential + ?Sized>(v: &P, states: &[Bonds]) -> Result<f64> {
    let mut m = 0.0f64;
    for g in states {
        m = m.max((v.eval(&point_reflect(g))? - v.eval(g)?).abs());
    }
    Ok(m)
}

/// Largest violation of `Σ_i |∂_iV(g) − ∂_iV(h)| ≤ M2 max_j |g_j − h_j|` over pairs, as a ratio.
pub fn lipschitz_ratio<P: SitePotential + ?Sized>(v: &P, pairs: &[(Bonds, Bonds)], m2: f64) -> Result<f64> {
    let mut worst = 0.0f64;
    for (g, h) in pairs {
        let (dg, dh) = (v.d1(g)?, v.d1(h)?);
        let lhs: f64 = (0..6).map(|i| (dg[i] - dh[i]).norm()).sum();
        let dist = (0..6).map(|j| (g[j] - h[j]).norm()).fold(0.0, f64::max);
        if dist > 0.0 {
            worst = worst.max(lhs / (m2 * dist));
        }
    }
    Ok(worst)
}
