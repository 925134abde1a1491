//! Lattice deformations, finite differences, P1 gradients and discrete norms.

use std::fmt::Write as _;
use std::path::Path;

use crate::lattice::{lattice_matrix, Dir, IndexBox, Site, Triangle};
use crate::{Bonds, Error, Mat2, Result, Vec2};

/// Minimum number of hops between the support of a field and the outside of its window.
pub const SUPPORT_MARGIN: i64 = 3;

/// A deformation `y` of the lattice, evaluated through its finite differences.
pub trait Deformation: Sync {
    /// Window on which the deformation is represented.
    fn window(&self) -> IndexBox;

    /// `D_j y(x)`.
    fn fdiff(&self, x: Site, j: Dir) -> Result<Vec2>;

    /// `Dy(x) = (D_1 y(x), …, D_6 y(x))`.
    fn bonds(&self, x: Site) -> Result<Bonds> {
        let mut out = [Vec2::zeros(); 6];
        for j in Dir::ALL {
            out[j.slot()] = self.fdiff(x, j)?;
        }
        Ok(out)
    }

    /// The constant gradient of the P1 interpolant on `T`.
    fn gradient(&self, t: Triangle) -> Result<Mat2> {
        let [j, k] = [Dir::new(1), Dir::new(2)];
        let d1 = self.fdiff(t.edge_site(j), j)?;
        let d2 = self.fdiff(t.edge_site(k), k)?;
        Ok(Mat2::from_columns(&[d1, d2]) * lattice_inverse())
    }

    /// The homogeneous gradient, if the deformation is `y_F`.
    fn homogeneous(&self) -> Option<Mat2> {
        None
    }

    /// Sites on which the site energy is evaluated: those whose full stencil lies in the window.
    fn energy_box(&self) -> IndexBox {
        self.window().shrink(1)
    }
}

fn lattice_inverse() -> Mat2 {
    // A = [a1 a2] has determinant Ω0 ≠ 0
    lattice_matrix().try_inverse().expect("lattice matrix is invertible")
}

/// `y(x) = x + u(x)` with `u` compactly supported in a window.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeField {
    window: IndexBox,
    values: Vec<Vec2>,
}

impl LatticeField {
    pub fn zeros(window: IndexBox) -> Self {
        LatticeField { values: vec![Vec2::zeros(); window.len()], window }
    }

    /// Field with `u(x) = f(x)` on sites at least [`SUPPORT_MARGIN`] hops inside the window.
    pub fn from_fn(window: IndexBox, mut f: impl FnMut(Site) -> Vec2) -> Self {
        let mut out = LatticeField::zeros(window);
        let inner = window.shrink(SUPPORT_MARGIN);
        for x in inner.sites() {
            let i = window.index(x).expect("inner site lies in window");
            out.values[i] = f(x);
        }
        out
    }

    /// Builds a field from explicit values, rejecting support too close to the boundary.
    pub fn from_values(window: IndexBox, values: impl IntoIterator<Item = (Site, Vec2)>) -> Result<Self> {
        let mut out = LatticeField::zeros(window);
        for (x, v) in values {
            out.set(x, v)?;
        }
        Ok(out)
    }

    pub fn window(&self) -> IndexBox {
        self.window
    }

    /// `u(x)`; zero outside the window.
    pub fn get(&self, x: Site) -> Vec2 {
        self.window.index(x).map_or_else(Vec2::zeros, |i| self.values[i])
    }

    pub fn set(&mut self, x: Site, v: Vec2) -> Result<()> {
        if v != Vec2::zeros() && self.window.depth(x) < SUPPORT_MARGIN {
            return Err(Error::SupportTooCloseToBoundary(x, SUPPORT_MARGIN));
        }
        let i = self.window.index(x).ok_or(Error::OutOfWindow(x))?;
        self.values[i] = v;
        Ok(())
    }

    /// Sites with `u(x) ≠ 0`, in window order.
    pub fn support(&self) -> impl Iterator<Item = Site> + '_ {
        self.window
            .sites()
            .zip(&self.values)
            .filter(|(_, v)| **v != Vec2::zeros())
            .map(|(x, _)| x)
    }

    /// `(x, u(x))` for every site of the window.
    pub fn iter(&self) -> impl Iterator<Item = (Site, Vec2)> + '_ {
        self.window.sites().zip(self.values.iter().copied())
    }

    /// Checks that the support keeps [`SUPPORT_MARGIN`] hops from the boundary.
    pub fn validate(&self) -> Result<()> {
        match self.support().find(|&x| self.window.depth(x) < SUPPORT_MARGIN) {
            Some(x) => Err(Error::SupportTooCloseToBoundary(x, SUPPORT_MARGIN)),
            None => Ok(()),
        }
    }

    pub fn scaled(&self, s: f64) -> LatticeField {
        LatticeField { window: self.window, values: self.values.iter().map(|v| v * s).collect() }
    }

    /// `self + s·other`, on the same window.
    pub fn axpy(&self, s: f64, other: &LatticeField) -> LatticeField {
        assert_eq!(self.window, other.window, "fields live on different windows");
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b * s).collect();
        LatticeField { window: self.window, values }
    }

    /// Same values on a larger window.
    pub fn extended(&self, window: IndexBox) -> Result<LatticeField> {
        LatticeField::from_values(window, self.support().map(|x| (x, self.get(x))))
    }

    /// `n1,n2,u1,u2` rows for every site of the window.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n1,n2,u1,u2\n");
        for (x, u) in self.iter() {
            let _ = writeln!(s, "{},{},{},{}", x.n1, x.n2, u.x, u.y);
        }
        s
    }

    /// Parses the table written by [`LatticeField::to_csv`].
    pub fn from_csv(window: IndexBox, text: &str) -> Result<Self> {
        let mut out = LatticeField::zeros(window);
        for (lineno, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = || Error::Parse(format!("line {}: expected n1,n2,u1,u2", lineno + 1));
            if cols.len() != 4 {
                return Err(bad());
            }
            let n1 = cols[0].parse::<i64>().map_err(|_| bad())?;
            let n2 = cols[1].parse::<i64>().map_err(|_| bad())?;
            let u1 = cols[2].parse::<f64>().map_err(|_| bad())?;
            let u2 = cols[3].parse::<f64>().map_err(|_| bad())?;
            out.set(Site::new(n1, n2), Vec2::new(u1, u2))?;
        }
        Ok(out)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

impl Deformation for LatticeField {
    fn window(&self) -> IndexBox {
        self.window
    }

    fn fdiff(&self, x: Site, j: Dir) -> Result<Vec2> {
        let z = x.step(j);
        let (ix, iz) = match (self.window.index(x), self.window.index(z)) {
            (Some(ix), Some(iz)) => (ix, iz),
            _ => return Err(Error::OutOfWindow(x)),
        };
        Ok(j.vector() + self.values[iz] - self.values[ix])
    }
}

/// The homogeneous deformation `y_F(x) = F x`, enumerated over a window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HomogeneousState {
    pub f: Mat2,
    pub window: IndexBox,
}

impl HomogeneousState {
    pub fn new(f: Mat2, window: IndexBox) -> Self {
        HomogeneousState { f, window }
    }

    pub fn position(&self, x: Site) -> Vec2 {
        self.f * x.position()
    }
}

impl Deformation for HomogeneousState {
    fn window(&self) -> IndexBox {
        self.window
    }

    fn fdiff(&self, _x: Site, j: Dir) -> Result<Vec2> {
        Ok(self.f * j.vector())
    }

    fn bonds(&self, _x: Site) -> Result<Bonds> {
        Ok(Dir::ALL.map(|j| self.f * j.vector()))
    }

    fn gradient(&self, _t: Triangle) -> Result<Mat2> {
        Ok(self.f)
    }

    fn homogeneous(&self) -> Option<Mat2> {
        Some(self.f)
    }

    fn energy_box(&self) -> IndexBox {
        self.window
    }
}

/// `D_j y(x)`.
pub fn fdiff<Y: Deformation + ?Sized>(y: &Y, x: Site, j: Dir) -> Result<Vec2> {
    y.fdiff(x, j)
}

/// `D_i D_j y(x) = D_j y(x + a_i) − D_j y(x)`.
pub fn fdiff2<Y: Deformation + ?Sized>(y: &Y, x: Site, i: Dir, j: Dir) -> Result<Vec2> {
    Ok(y.fdiff(x.step(i), j)? - y.fdiff(x, j)?)
}

/// `D_i D_j D_k y(x)`.
pub fn fdiff3<Y: Deformation + ?Sized>(y: &Y, x: Site, i: Dir, j: Dir, k: Dir) -> Result<Vec2> {
    Ok(fdiff2(y, x.step(i), j, k)? - fdiff2(y, x, j, k)?)
}

/// `|D²y(x)| = max_{i,j} |D_i D_j y(x)|`.
pub fn d2_magnitude<Y: Deformation + ?Sized>(y: &Y, x: Site) -> Result<f64> {
    let mut m = 0.0f64;
    for i in Dir::ALL {
        for j in Dir::ALL {
            m = m.max(fdiff2(y, x, i, j)?.norm());
        }
    }
    Ok(m)
}

/// `|D³y(x)| = max_{i,j,k} |D_i D_j D_k y(x)|`.
pub fn d3_magnitude<Y: Deformation + ?Sized>(y: &Y, x: Site) -> Result<f64> {
    let mut m = 0.0f64;
    for i in Dir::ALL {
        for j in Dir::ALL {
            for k in Dir::ALL {
                m = m.max(fdiff3(y, x, i, j, k)?.norm());
            }
        }
    }
    Ok(m)
}

/// Discrete `ℓ^p` norm; `p = f64::INFINITY` gives the maximum.
pub fn lp_norm(values: impl IntoIterator<Item = f64>, p: f64) -> f64 {
    assert!(p >= 1.0, "lp_norm requires p >= 1, got {p}");
    if p.is_infinite() {
        values.into_iter().fold(0.0, |m, v| m.max(v.abs()))
    } else {
        values.into_iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

/// `ℓ^p` norm of `|D²y|` over a set of sites.
pub fn d2_lp_norm<Y: Deformation + ?Sized>(y: &Y, sites: impl IntoIterator<Item = Site>, p: f64) -> Result<f64> {
    let vals = sites.into_iter().map(|x| d2_magnitude(y, x)).collect::<Result<Vec<_>>>()?;
    Ok(lp_norm(vals, p))
}

/// `ℓ^p` norm of `|D³y|` over a set of sites.
pub fn d3_lp_norm<Y: Deformation + ?Sized>(y: &Y, sites: impl IntoIterator<Item = Site>, p: f64) -> Result<f64> {
    let vals = sites.into_iter().map(|x| d3_magnitude(y, x)).collect::<Result<Vec<_>>>()?;
    Ok(lp_norm(vals, p))
}

/// `∇_T y`.
pub fn p1_gradient<Y: Deformation + ?Sized>(y: &Y, t: Triangle) -> Result<Mat2> {
    y.gradient(t)
}

/// `∇_T u` for a displacement field (the gradient of `y` minus the identity).
pub fn displacement_gradient(u: &LatticeField, t: Triangle) -> Result<Mat2> {
    Ok(u.gradient(t)? - Mat2::identity())
}

/// `Σ_T |T| |∇_T u|²` over every triangle of the window.
pub fn dirichlet_energy(u: &LatticeField) -> Result<f64> {
    let w = u.window();
    let mut s = 0.0;
    for t in w.triangles().filter(|&t| w.contains_triangle(t)) {
        s += crate::lattice::TRIANGLE_AREA * displacement_gradient(u, t)?.norm_squared();
    }
    Ok(s)
}

/// A per-site vector functional `ℓ` on a window, paired as `⟨ℓ, u⟩ = Σ_x ℓ(x)·u(x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SiteFunctional {
    pub window: IndexBox,
    pub values: Vec<Vec2>,
}

impl SiteFunctional {
    pub fn zeros(window: IndexBox) -> Self {
        SiteFunctional { values: vec![Vec2::zeros(); window.len()], window }
    }

    pub fn get(&self, x: Site) -> Vec2 {
        self.window.index(x).map_or_else(Vec2::zeros, |i| self.values[i])
    }

    pub fn pair(&self, u: &LatticeField) -> f64 {
        u.support().map(|x| self.get(x).dot(&u.get(x))).sum()
    }
}

/// Stiffness of the P1 Dirichlet form on the equilateral triangulation:
/// `(Ku)(x) = (1/√3) Σ_j (u(x) − u(x+a_j))`, with `u` vanishing off the interior.
fn apply_stiffness(interior: &IndexBox, u: &[f64], out: &mut [f64]) {
    let s = 1.0 / crate::lattice::SQRT_3;
    for (i, x) in interior.sites().enumerate() {
        let mut acc = 6.0 * u[i];
        for z in x.neighbours() {
            if let Some(k) = interior.index(z) {
                acc -= u[k];
            }
        }
        out[i] = s * acc;
    }
}

/// Solves `K v = b` by conjugate gradients to relative residual `tol`.
fn conjugate_gradient(interior: &IndexBox, b: &[f64], tol: f64) -> Result<Vec<f64>> {
    let n = b.len();
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut kp = vec![0.0; n];
    let mut rr = bnorm * bnorm;
    let max_iter = 10 * n + 100;
    for it in 0..max_iter {
        if rr.sqrt() <= tol * bnorm {
            return Ok(x);
        }
        apply_stiffness(interior, &p, &mut kp);
        let pkp: f64 = p.iter().zip(&kp).map(|(a, b)| a * b).sum();
        let alpha = rr / pkp;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * kp[i];
        }
        let rr_new: f64 = r.iter().map(|v| v * v).sum();
        if !rr_new.is_finite() {
            return Err(Error::SolverFailure { residual: f64::NAN, iterations: it });
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    let residual = rr.sqrt() / bnorm;
    if residual <= tol {
        Ok(x)
    } else {
        Err(Error::SolverFailure { residual, iterations: max_iter })
    }
}

/// Relative residual at which [`dual_norm_2`] accepts the conjugate-gradient solve.
pub const DUAL_NORM_TOL: f64 = 1e-10;

/// `‖ℓ‖_{U^{-1,2}} = sup ⟨ℓ,u⟩ / ‖∇u‖_{L²}` over fields vanishing on the window boundary.
pub fn dual_norm_2(l: &SiteFunctional) -> Result<f64> {
    let interior = l.window.shrink(1);
    if let Some(x) = l
        .window
        .sites()
        .zip(&l.values)
        .find(|(x, v)| **v != Vec2::zeros() && !interior.contains(*x))
        .map(|(x, _)| x)
    {
        return Err(Error::OutOfWindow(x));
    }
    let mut total = 0.0;
    for c in 0..2 {
        let b: Vec<f64> = interior.sites().map(|x| l.get(x)[c]).collect();
        let v = conjugate_gradient(&interior, &b, DUAL_NORM_TOL)?;
        total += b.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
    }
    Ok(total.max(0.0).sqrt())
}

/// `K w` for a displacement field `w`, as a site functional; `⟨Kw, w⟩ = ‖∇w‖²_{L²}`.
pub fn stiffness_functional(w: &LatticeField) -> SiteFunctional {
    let window = w.window();
    let interior = window.shrink(1);
    let mut out = SiteFunctional::zeros(window);
    for c in 0..2 {
        let u: Vec<f64> = interior.sites().map(|x| w.get(x)[c]).collect();
        let mut ku = vec![0.0; u.len()];
        apply_stiffness(&interior, &u, &mut ku);
        for (i, x) in interior.sites().enumerate() {
            let k = window.index(x).expect("interior site lies in window");
            out.values[k][c] = ku[i];
        }
    }
    out
}
