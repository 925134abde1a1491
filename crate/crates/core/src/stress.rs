//! Piecewise-constant stress tensors, Crouzeix–Raviart correctors and consistency diagnostics.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::energy::EnergyKind;
use crate::fields::{d2_magnitude, displacement_gradient, lp_norm, Deformation, LatticeField};
use crate::lattice::{deformed_vectors, Dir, Edge, IndexBox, Orientation, Site, Triangle, OMEGA0, TRIANGLE_AREA};
use crate::partition::{RegionPartition, SiteClass};
use crate::potentials::{bond_stress, cb_stress, SitePotential};
use crate::reconstruction::ReconstructionParams;
use crate::{Bonds, Error, Mat2, Result, Vec2};

/// Tolerance of the elementwise corrector identity `Σ_c³ − Σ_c² = ∂ψ²³J`.
pub const CORRECTOR_TOL: f64 = 1e-12;
/// Largest accepted least-squares residual of the `ψ^ac` solve.
pub const NO_CORRECTOR_TOL: f64 = 1e-10;

/// A piecewise-constant tensor on the triangles based in a box.
#[derive(Clone, Debug, PartialEq)]
pub struct StressField {
    bases: IndexBox,
    values: Vec<Mat2>,
}

impl StressField {
    pub fn zeros(bases: IndexBox) -> Self {
        StressField { values: vec![Mat2::zeros(); 2 * bases.len()], bases }
    }

    pub fn from_fn(bases: IndexBox, f: impl FnMut(Triangle) -> Result<Mat2>) -> Result<Self> {
        let values = bases.triangles().map(f).collect::<Result<_>>()?;
        Ok(StressField { bases, values })
    }

    /// Box of triangle bases on which the field is defined.
    pub fn bases(&self) -> IndexBox {
        self.bases
    }

    pub fn get(&self, t: Triangle) -> Option<Mat2> {
        self.bases.triangle_index(t).map(|k| self.values[k])
    }

    pub fn set(&mut self, t: Triangle, m: Mat2) -> Result<()> {
        let k = self.bases.triangle_index(t).ok_or(Error::OutOfWindow(t.base))?;
        self.values[k] = m;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (Triangle, Mat2)> + '_ {
        self.bases.triangles().zip(self.values.iter().copied())
    }

    /// `σ − τ` on the common box of the two fields.
    pub fn sub(&self, other: &StressField) -> StressField {
        let values = self
            .iter()
            .map(|(t, m)| m - other.get(t).unwrap_or_else(Mat2::zeros))
            .collect();
        StressField { bases: self.bases, values }
    }

    pub fn max_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, s| m.max(s.norm()))
    }

    /// Largest Frobenius distance over the triangles of both fields.
    pub fn max_distance(&self, other: &StressField) -> f64 {
        self.iter()
            .filter_map(|(t, m)| other.get(t).map(|n| (m - n).norm()))
            .fold(0.0, f64::max)
    }

    /// `Σ_T |T| σ(T) : ∇_T u`.
    pub fn pairing(&self, u: &LatticeField) -> Result<f64> {
        let mut s = 0.0;
        for (t, m) in self.iter() {
            if t.vertices().iter().any(|&x| u.get(x) != Vec2::zeros()) {
                s += TRIANGLE_AREA * m.dot(&displacement_gradient(u, t)?);
            }
        }
        Ok(s)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("n1,n2,orient,s11,s12,s21,s22\n");
        for (t, m) in self.iter() {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                t.base.n1,
                t.base.n2,
                orient_label(t.orient),
                m[(0, 0)],
                m[(0, 1)],
                m[(1, 0)],
                m[(1, 1)]
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

fn orient_label(o: Orientation) -> &'static str {
    match o {
        Orientation::Up => "up",
        Orientation::Down => "down",
    }
}

/// Default box of triangle bases for stresses of `y`: every vertex has a complete stencil.
pub fn stress_box<Y: Deformation + ?Sized>(y: &Y) -> IndexBox {
    y.window().shrink(2)
}

/// `V_{T,j} = ∂_jV(∇_T y a)` on triangles based in `window.shrink(1)`.
struct ElementGradients {
    bases: IndexBox,
    values: Vec<Bonds>,
}

impl ElementGradients {
    fn new<P: SitePotential + ?Sized, Y: Deformation + ?Sized>(v: &P, y: &Y) -> Result<Self> {
        let bases = y.window().shrink(1);
        let values = bases
            .triangles()
            .map(|t| v.d1(&deformed_vectors(&y.gradient(t)?)))
            .collect::<Result<_>>()?;
        Ok(ElementGradients { bases, values })
    }

    fn get(&self, t: Triangle, j: Dir) -> Result<Vec2> {
        let k = self.bases.triangle_index(t).ok_or(Error::OutOfWindow(t.base))?;
        Ok(self.values[k][j.slot()])
    }
}

/// `∂_jV^•_x(Dy(x))` on the sites of `window.shrink(1)`.
struct SiteGradients {
    sites: IndexBox,
    values: Vec<Bonds>,
}

impl SiteGradients {
    fn new<P: SitePotential + ?Sized, Y: Deformation + ?Sized>(kind: &EnergyKind, v: &P, y: &Y) -> Result<Self> {
        let sites = y.window().shrink(1);
        let values = sites
            .sites()
            .map(|x| kind.site_gradient(v, x, &y.bonds(x)?))
            .collect::<Result<_>>()?;
        Ok(SiteGradients { sites, values })
    }

    fn get(&self, x: Site, j: Dir) -> Result<Vec2> {
        let k = self.sites.index(x).ok_or(Error::OutOfWindow(x))?;
        Ok(self.values[k][j.slot()])
    }
}

/// `(1/Ω0) Σ_j ∂_jV^•_{x_{T,j}}(Dy(x_{T,j})) ⊗ a_j` with the site potentials of `kind`.
pub fn sigma_sites<P: SitePotential + ?Sized, Y: Deformation + ?Sized>(kind: &EnergyKind, v: &P, y: &Y) -> Result<StressField> {
    let g = SiteGradients::new(kind, v, y)?;
    StressField::from_fn(stress_box(y), |t| {
        let mut s = [Vec2::zeros(); 6];
        for j in Dir::ALL {
            s[j.slot()] = g.get(t.edge_site(j), j)?;
        }
        Ok(bond_stress(&s))
    })
}

/// `Σ_a(y;T) = (1/Ω0) Σ_j V_{x_{T,j},j} ⊗ a_j`.
pub fn sigma_a<P: SitePotential + ?Sized, Y: Deformation + ?Sized>(v: &P, y: &Y) -> Result<StressField> {
    sigma_sites(&EnergyKind::Atomistic, v, y)
}

/// `Σ_c¹(y;T) = ∂W(∇_T y)`.
pub fn sigma_c1<P: SitePotential + ?Sized, Y: Deformation + ?Sized>(v: &P, y: &Y) -> Result<StressField> {
    StressField::from_fn(stress_box(y), |t| cb_stress(v, &y.gradient(t)?))
}

/// `Σ_c²(y;T) = (1/Ω0) Σ_j ½(V_{T,j} + V_{T_j,j}) ⊗ a_j`.
pub fn sigma_c2<P: SitePotential + ?Sized, Y: Deformation + ?Sized>(v: &P, y: &Y) -> Result<StressField> {
    let g = ElementGradients::new(v, y)?;
    StressField::from_fn(stress_box(y), |t| {
        let mut s = [Vec2::zeros(); 6];
        for j in Dir::ALL {
            s[j.slot()] = 0.5 * (g.get(t, j)? + g.get(t.neighbour(j), j)?);
        }
        Ok(bond_stress(&s))
    })
}

/// `Σ_c³(y;T) = (1/Ω0) Σ_j V^c_{x_{T,j},j} ⊗ a_j`.
pub fn sigma_c3<P: SitePotential + ?Sized, Y: Deformation + ?Sized>(v: &P, y: &Y) -> Result<StressField> {
    sigma_sites(&EnergyKind::Continuum, v, y)
}

/// `Σ_ac(y;T) = (1/Ω0) Σ_j V^ac_{x_{T,j},j} ⊗ a_j`.
pub fn sigma_ac<P: SitePotential + ?Sized, Y: Deformation + ?Sized>(
    v: &P,
    r: &ReconstructionParams,
    p: &RegionPartition,
    y: &Y,
) -> Result<StressField> {
    sigma_sites(&EnergyKind::coupled(p, r), v, y)
}

/// A Crouzeix–Raviart vector field, given by its values at edge midpoints.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CRField {
    values: BTreeMap<Edge, Vec2>,
}

impl CRField {
    pub fn new() -> Self {
        Self::default()
    }

    /// The nodal basis function `ζ_f` times a constant vector.
    pub fn nodal(f: Edge, value: Vec2) -> Self {
        let mut out = CRField::new();
        out.insert(f, value);
        out
    }

    pub fn insert(&mut self, f: Edge, value: Vec2) {
        self.values.insert(f, value);
    }

    /// `ψ(m_f)`, zero off the stored edges.
    pub fn get(&self, f: Edge) -> Vec2 {
        self.values.get(&f).copied().unwrap_or_else(Vec2::zeros)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Edge, Vec2)> + '_ {
        self.values.iter().map(|(&f, &v)| (f, v))
    }

    pub fn max_norm(&self) -> f64 {
        self.values.values().fold(0.0, |m, v| m.max(v.norm()))
    }

    /// `∂ψ|_T J = Σ_{f⊂T} ψ(m_f) ⊗ (∂ζ_f|_T J)`.
    pub fn rotated_gradient(&self, t: Triangle) -> Mat2 {
        let mut m = Mat2::zeros();
        for j in t.anticlockwise_dirs() {
            let v = self.get(t.edge(j));
            if v != Vec2::zeros() {
                m += v * rotated_basis_gradient(t, j);
            }
        }
        m
    }

    /// `∂ψJ` as a stress field on `bases`.
    pub fn curl(&self, bases: IndexBox) -> StressField {
        let values = bases.triangles().map(|t| self.rotated_gradient(t)).collect();
        StressField { bases, values }
    }
}

/// `∂ζ_f|_T J = −(2/Ω0) a_jᵀ` where `a_j` is the anticlockwise direction of `f` in `T`.
pub fn rotated_basis_gradient(_t: Triangle, j: Dir) -> nalgebra::RowVector2<f64> {
    -(2.0 / OMEGA0) * j.vector().transpose()
}

/// `J`, the anticlockwise rotation by `π/2`.
pub fn rotation_j() -> Mat2 {
    Mat2::new(0.0, -1.0, 1.0, 0.0)
}

/// `ψ²³(m_f) = (1/6) Σ_{k∈{j,j+2,j+4}} (V_{T_j,k} − V_{T,k})`, where `f` has anticlockwise direction `a_j`
/// in the up triangle `T` containing it.
pub fn psi23<P: SitePotential + ?Sized, Y: Deformation + ?Sized>(v: &P, y: &Y) -> Result<CRField> {
    let g = ElementGradients::new(v, y)?;
    let mut out = CRField::new();
    for b in stress_box(y).grow(1).sites() {
        let t = Triangle::up(b);
        for j in t.anticlockwise_dirs() {
            let tn = t.neighbour(j);
            let mut value = Vec2::zeros();
            let mut complete = true;
            for k in [j, j.shift(2), j.shift(4)] {
                match (g.get(t, k), g.get(tn, k)) {
                    (Ok(vt), Ok(vn)) => value += vn - vt,
                    _ => complete = false,
                }
            }
            if complete {
                out.insert(t.edge(j), value / 6.0);
            }
        }
    }
    Ok(out)
}

/// Checks `Σ_c³ − Σ_c² = ∂ψ²³J` on every triangle; returns the largest defect.
pub fn check_psi23<P: SitePotential + ?Sized, Y: Deformation + ?Sized>(v: &P, y: &Y) -> Result<f64> {
    let diff = sigma_c3(v, y)?.sub(&sigma_c2(v, y)?);
    let psi = psi23(v, y)?;
    let defect = diff.max_distance(&psi.curl(diff.bases()));
    let scale = 1.0 + diff.max_norm();
    if defect > CORRECTOR_TOL * scale {
        return Err(Error::CorrectorMismatch(defect));
    }
    Ok(defect)
}

/// `Σ_ac(y_F;T) − Σ_a(y_F;T) = (1/Ω0) Σ_{k=1}^3 V_{F,k} ⊗ L_k(T)`: returns `(L_1, L_2, L_3)`.
pub fn stress_difference_coefficients(r: &ReconstructionParams, p: &RegionPartition, t: Triangle) -> Result<[Vec2; 3]> {
    let mut l = [Vec2::zeros(); 3];
    let mut add = |j: Dir, coeff: f64, a: Vec2| {
        // V_{j+3} = −V_j
        let (k, s) = if j.get() <= 3 { (j.slot(), 1.0) } else { (j.opposite().slot(), -1.0) };
        l[k] += a * (s * coeff);
    };
    for i in Dir::ALL {
        let c = r.site(p, t.edge_site(i))?;
        let a = i.vector();
        add(i, c[i.slot()] - 1.0, a);
        add(i.prev(), 1.0 - c[i.prev().slot()], a);
        add(i.next(), 1.0 - c[i.next().slot()], a);
    }
    Ok(l)
}

/// Solution `λ_{f,k}` of `∂ψ^acJ = Σ_ac(y_F) − Σ_a(y_F)` with `ψ^ac(F;m_f) = Σ_k λ_{f,k} ∂_kV(Fa)`.
#[derive(Clone, Debug)]
pub struct PsiAcCoefficients {
    /// `λ_{f,1..6}` on the interface edges; `λ_{f,4..6} = 0`.
    pub coefficients: BTreeMap<Edge, [f64; 6]>,
    pub residual: f64,
    /// Triangles whose equations were imposed.
    pub triangles: usize,
}

impl PsiAcCoefficients {
    pub fn get(&self, f: Edge) -> [f64; 6] {
        self.coefficients.get(&f).copied().unwrap_or([0.0; 6])
    }

    /// `ψ^ac(F;m_f)` given `∂V(Fa)`.
    pub fn value(&self, f: Edge, dv: &Bonds) -> Vec2 {
        let l = self.get(f);
        (0..3).map(|k| dv[k] * l[k]).sum()
    }

    /// `ψ^ac(F;•)` as a CR field.
    pub fn field(&self, dv: &Bonds) -> CRField {
        let mut out = CRField::new();
        for &f in self.coefficients.keys() {
            out.insert(f, self.value(f, dv));
        }
        out
    }
}

/// Solves for `λ_{f,k}` on `F_I`, with `ψ^ac = 0` on `F_A ∪ F_C`, over the triangles based in `bases`.
///
/// On each triangle `−2 Σ_{f⊂T} λ_{f,k} a_{j_f} = L_k(T)`; since the three anticlockwise directions sum
/// to zero, one known edge value fixes the other two. Values are propagated from the edges off `F_I`,
/// and a dense least-squares solve handles whatever the propagation cannot reach.
pub fn psi_ac_coefficients_on(r: &ReconstructionParams, p: &RegionPartition, bases: IndexBox) -> Result<PsiAcCoefficients> {
    let mut loads: Vec<(Triangle, [Vec2; 3])> = Vec::new();
    let mut edges: BTreeSet<Edge> = BTreeSet::new();
    for t in bases.triangles() {
        let interface_edges: Vec<Edge> =
            t.edges().into_iter().filter(|&f| p.edge_class(f) == SiteClass::Interface).collect();
        let l = stress_difference_coefficients(r, p, t)?;
        if interface_edges.is_empty() && l.iter().all(|v| *v == Vec2::zeros()) {
            continue;
        }
        edges.extend(interface_edges);
        loads.push((t, l));
    }
    let mut known: HashMap<Edge, [f64; 3]> = HashMap::new();
    let mut incident: HashMap<Edge, Vec<usize>> = HashMap::new();
    for (k, (t, _)) in loads.iter().enumerate() {
        for f in t.edges() {
            incident.entry(f).or_default().push(k);
        }
    }
    let value = |known: &HashMap<Edge, [f64; 3]>, f: Edge| -> Option<[f64; 3]> {
        if edges.contains(&f) {
            known.get(&f).copied()
        } else {
            Some([0.0; 3])
        }
    };
    let mut solved = vec![false; loads.len()];
    let mut queue: std::collections::VecDeque<usize> = (0..loads.len()).collect();
    while let Some(k) = queue.pop_front() {
        if solved[k] {
            continue;
        }
        let (t, l) = &loads[k];
        let dirs = t.anticlockwise_dirs();
        let vals: Vec<Option<[f64; 3]>> = dirs.iter().map(|&j| value(&known, t.edge(j))).collect();
        let Some(anchor) = vals.iter().position(Option::is_some) else { continue };
        solved[k] = true;
        let unknown: Vec<usize> = (0..3).filter(|&i| vals[i].is_none()).collect();
        if unknown.is_empty() {
            continue;
        }
        // with the anchor known, the remaining two edges solve a 2×2 system per load
        let others: Vec<usize> = (0..3).filter(|&i| i != anchor).collect();
        let m = Mat2::from_columns(&[dirs[others[0]].vector(), dirs[others[1]].vector()]) * -2.0;
        let inv = m.try_inverse().expect("two bond directions are independent");
        let lam0 = vals[anchor].expect("anchor is known");
        let mut sol = [[0.0; 3]; 2];
        for c in 0..3 {
            let rhs = l[c] + 2.0 * lam0[c] * dirs[anchor].vector();
            let x = inv * rhs;
            sol[0][c] = x[0];
            sol[1][c] = x[1];
        }
        for (slot, &i) in others.iter().enumerate() {
            if vals[i].is_none() {
                let f = t.edge(dirs[i]);
                known.insert(f, sol[slot]);
                for &n in incident.get(&f).into_iter().flatten() {
                    if !solved[n] {
                        queue.push_back(n);
                    }
                }
            }
        }
    }
    let unresolved: Vec<Edge> = edges.iter().copied().filter(|f| !known.contains_key(f)).collect();
    if !unresolved.is_empty() {
        least_squares_fill(&loads, &edges, &unresolved, &mut known)?;
    }
    let mut residual = 0.0f64;
    for (t, l) in &loads {
        for c in 0..3 {
            let mut lhs = Vec2::zeros();
            for j in t.anticlockwise_dirs() {
                lhs -= 2.0 * value(&known, t.edge(j)).unwrap_or([0.0; 3])[c] * j.vector();
            }
            residual = residual.max((lhs - l[c]).amax());
        }
    }
    if residual > NO_CORRECTOR_TOL {
        return Err(Error::NoCorrector(residual));
    }
    let coefficients = edges
        .iter()
        .map(|&f| {
            let v = known.get(&f).copied().unwrap_or([0.0; 3]);
            (f, [v[0], v[1], v[2], 0.0, 0.0, 0.0])
        })
        .collect();
    Ok(PsiAcCoefficients { coefficients, residual, triangles: loads.len() })
}

/// Least-squares values for the edges the propagation could not reach, with all other edges fixed.
fn least_squares_fill(
    loads: &[(Triangle, [Vec2; 3])],
    edges: &BTreeSet<Edge>,
    unresolved: &[Edge],
    known: &mut HashMap<Edge, [f64; 3]>,
) -> Result<()> {
    let index: HashMap<Edge, usize> = unresolved.iter().enumerate().map(|(k, &f)| (f, k)).collect();
    let rows: Vec<&(Triangle, [Vec2; 3])> =
        loads.iter().filter(|(t, _)| t.edges().iter().any(|f| index.contains_key(f))).collect();
    let (m, n) = (2 * rows.len(), unresolved.len());
    let mut a = DMatrix::zeros(m.max(n), n);
    let mut b = DMatrix::zeros(m.max(n), 3);
    for (row, (t, l)) in rows.iter().enumerate() {
        for c in 0..3 {
            b[(2 * row, c)] = l[c][0];
            b[(2 * row + 1, c)] = l[c][1];
        }
        for j in t.anticlockwise_dirs() {
            let f = t.edge(j);
            let a_j = j.vector();
            if let Some(&col) = index.get(&f) {
                a[(2 * row, col)] = -2.0 * a_j[0];
                a[(2 * row + 1, col)] = -2.0 * a_j[1];
            } else if edges.contains(&f) {
                let v = known[&f];
                for c in 0..3 {
                    b[(2 * row, c)] += 2.0 * v[c] * a_j[0];
                    b[(2 * row + 1, c)] += 2.0 * v[c] * a_j[1];
                }
            }
        }
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let x = svd.solve(&b, 1e-12 * smax.max(1.0)).map_err(|e| Error::SolverFailure {
        residual: f64::NAN,
        iterations: e.len(),
    })?;
    for (k, &f) in unresolved.iter().enumerate() {
        known.insert(f, [x[(k, 0)], x[(k, 1)], x[(k, 2)]]);
    }
    Ok(())
}

/// [`psi_ac_coefficients_on`] over the stress box of the partition window.
pub fn psi_ac_coefficients(r: &ReconstructionParams, p: &RegionPartition) -> Result<PsiAcCoefficients> {
    psi_ac_coefficients_on(r, p, p.window().shrink(2))
}

/// Whether some interface parameters satisfying the patch-test constraints make `Σ_ac(y_F) = Σ_a(y_F)` for all `F`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObstructionReport {
    pub free_parameters: usize,
    pub conditions: usize,
    pub rank: usize,
    pub augmented_rank: usize,
    /// Least-squares residual of the conditions over the admissible parameters.
    pub residual: f64,
}

impl ObstructionReport {
    /// No admissible parameter choice removes the stress difference.
    pub fn obstructed(&self) -> bool {
        self.augmented_rank > self.rank
    }
}

/// Rank test of the conditions `L_k(T) = 0` over the solution space of the patch-test constraints.
pub fn corrector_obstruction(p: &RegionPartition) -> Result<ObstructionReport> {
    use crate::reconstruction::{assemble_patch_constraints, solve_constraints};
    let s = assemble_patch_constraints(p)?;
    let sol = solve_constraints(&s)?;
    let bases = p.window().shrink(2);
    let triangles: Vec<Triangle> = bases
        .triangles()
        .filter(|&t| t.vertices().iter().any(|&x| p.is_interface(x)))
        .collect();
    let eval = |c: &DVector<f64>| -> Result<Vec<f64>> {
        let r = s.params_of(c);
        let mut out = Vec::with_capacity(6 * triangles.len());
        for &t in &triangles {
            for l in stress_difference_coefficients(&r, p, t)? {
                out.extend([l[0], l[1]]);
            }
        }
        Ok(out)
    };
    // the conditions are affine in the parameters: L(c0 + N z) = L(c0) + Σ_i z_i (L(c0 + n_i) − L(c0))
    let base = eval(&sol.particular)?;
    let rows = base.len();
    let mut a = DMatrix::zeros(rows, sol.dimension);
    for i in 0..sol.dimension {
        let li = eval(&(&sol.particular + sol.nullspace.column(i)))?;
        for r in 0..rows {
            a[(r, i)] = li[r] - base[r];
        }
    }
    let b = DVector::from_iterator(rows, base.iter().map(|v| -v));
    let rank = if sol.dimension == 0 { 0 } else { a.rank(1e-9) };
    let mut aug = DMatrix::zeros(rows, sol.dimension + 1);
    aug.view_mut((0, 0), (rows, sol.dimension)).copy_from(&a);
    aug.set_column(sol.dimension, &b);
    let augmented_rank = aug.rank(1e-9);
    let residual = if sol.dimension == 0 {
        b.amax()
    } else {
        let svd = a.clone().svd(true, true);
        let z = svd.solve(&b, 1e-9).map_err(|e| Error::SolverFailure { residual: f64::NAN, iterations: e.len() })?;
        (&a * z - &b).amax()
    };
    Ok(ObstructionReport { free_parameters: sol.dimension, conditions: rows, rank, augmented_rank, residual })
}

/// `F_f(y) = ½(∇_{T+}y + ∇_{T−}y)` for the two triangles sharing `f`.
pub fn edge_gradient<Y: Deformation + ?Sized>(y: &Y, f: Edge) -> Result<Mat2> {
    let [t1, t2] = f.triangles();
    Ok(0.5 * (y.gradient(t1)? + y.gradient(t2)?))
}

/// `ψ̂^ac(y)`: `Σ_k λ_{f,k} ∂_kV(F_f a)` on `F_I`, `ψ²³(y)` on `F_C`, zero on `F_A`.
pub fn psi_ac_hat<P: SitePotential + ?Sized, Y: Deformation + ?Sized>(
    v: &P,
    psi: &PsiAcCoefficients,
    p: &RegionPartition,
    y: &Y,
) -> Result<CRField> {
    let mut out = CRField::new();
    for (f, value) in psi23(v, y)?.iter() {
        if p.edge_class(f) == SiteClass::Continuum {
            out.insert(f, value);
        }
    }
    for &f in psi.coefficients.keys() {
        let dv = v.d1(&deformed_vectors(&edge_gradient(y, f)?))?;
        out.insert(f, psi.value(f, &dv));
    }
    Ok(out)
}

/// `Σ̂_ac = Σ_ac − ∂ψ̂^acJ`.
pub fn sigma_ac_hat<P: SitePotential + ?Sized, Y: Deformation + ?Sized>(
    v: &P,
    r: &ReconstructionParams,
    p: &RegionPartition,
    psi: &PsiAcCoefficients,
    y: &Y,
) -> Result<StressField> {
    let sac = sigma_ac(v, r, p, y)?;
    let corr = psi_ac_hat(v, psi, p, y)?.curl(sac.bases());
    Ok(sac.sub(&corr))
}

/// Gradients of the three barycentric coordinates of a triangle, in vertex order.
fn barycentric_gradients(t: Triangle) -> [Vec2; 3] {
    let [p0, p1, p2] = t.vertices().map(Site::position);
    let m = Mat2::from_columns(&[p1 - p0, p2 - p0]);
    let inv = m.try_inverse().expect("lattice triangles are non-degenerate");
    let g1 = inv.row(0).transpose();
    let g2 = inv.row(1).transpose();
    [-(g1 + g2), g1, g2]
}

/// The six triangles around a vertex.
pub fn vertex_star(x: Site) -> [Triangle; 6] {
    Dir::ALL.map(|j| Triangle::incident(x, j))
}

/// `max_x |Σ_T |T| σ(T) ∇φ_x|` over vertices whose whole star lies in the field's box.
pub fn divergence_residual(sigma: &StressField) -> f64 {
    let bases = sigma.bases();
    let mut worst = 0.0f64;
    for x in bases.grow(1).sites() {
        let star = vertex_star(x);
        if !star.iter().all(|&t| bases.contains_triangle(t)) {
            continue;
        }
        let mut r = Vec2::zeros();
        for t in star {
            let k = t.vertices().iter().position(|&z| z == x).expect("x is a vertex of its star");
            let grad = barycentric_gradients(t)[k];
            r += TRIANGLE_AREA * (sigma.get(t).expect("star lies in box") * grad);
        }
        worst = worst.max(r.norm());
    }
    worst
}

/// `δ_j(x) = V_{x,j} − V_{x+a_j,j+3} − V_{T_{x,j},j} − V_{T_{x,j−1},j}` for `j = 1,2,3`.
pub fn edge_residuals<P: SitePotential + ?Sized, Y: Deformation + ?Sized>(v: &P, y: &Y, sites: IndexBox) -> Result<Vec<(Site, Dir, Vec2)>> {
    let g = ElementGradients::new(v, y)?;
    let s = SiteGradients::new(&EnergyKind::Atomistic, v, y)?;
    let mut out = Vec::new();
    for x in sites.sites() {
        for j in Dir::CANONICAL {
            let d = s.get(x, j)? - s.get(x.step(j), j.opposite())?
                - g.get(Triangle::incident(x, j), j)?
                - g.get(Triangle::incident(x, j.prev()), j)?;
            out.push((x, j, d));
        }
    }
    Ok(out)
}

/// Per-element stress errors and their aggregates over `T_I` and `T_C`.
#[derive(Clone, Debug)]
pub struct ConsistencyReport {
    pub p: f64,
    /// `e(T) = |Σ̂_ac(y;T) − Σ_a(y;T)|`.
    pub errors: Vec<(Triangle, f64)>,
    pub err_i_max: f64,
    pub err_i_lp: f64,
    pub err_c_max: f64,
    pub err_c_lp: f64,
    /// The same aggregates on `T_C` with `Σ_c¹` in place of `Σ_c²`.
    pub err_c1_max: f64,
    pub err_c1_lp: f64,
    pub err_a_max: f64,
    /// `max |δ_j(x)|` over the sites with complete stencils.
    pub edge_residual_max: f64,
    /// `‖δE_a(y) − δE_ac(y)‖_{U^{-1,2}}`, computed when `p = 2`.
    pub dual2: Option<f64>,
}

impl ConsistencyReport {
    pub fn errors_csv(&self) -> String {
        let mut s = String::from("n1,n2,orient,e\n");
        for (t, e) in &self.errors {
            let _ = writeln!(s, "{},{},{},{}", t.base.n1, t.base.n2, orient_label(t.orient), e);
        }
        s
    }
}

/// Stress consistency errors of the modified a/c stress against the atomistic stress.
pub fn consistency_report<P: SitePotential + ?Sized>(
    v: &P,
    r: &ReconstructionParams,
    p: &RegionPartition,
    psi: &PsiAcCoefficients,
    y: &LatticeField,
    exponent: f64,
) -> Result<ConsistencyReport> {
    let sa = sigma_a(v, y)?;
    let shat = sigma_ac_hat(v, r, p, psi, y)?;
    let sc1 = sigma_c1(v, y)?;
    let mut errors = Vec::new();
    let (mut ei, mut ec, mut ec1) = (Vec::new(), Vec::new(), Vec::new());
    let mut err_a_max = 0.0f64;
    for (t, a) in sa.iter() {
        let e = (shat.get(t).expect("same box") - a).norm();
        errors.push((t, e));
        match p.triangle_class(t) {
            SiteClass::Atomistic => err_a_max = err_a_max.max(e),
            SiteClass::Interface => ei.push(e),
            SiteClass::Continuum => {
                ec.push(e);
                ec1.push((sc1.get(t).expect("same box") - a).norm());
            }
        }
    }
    let weighted = |v: &[f64]| lp_norm(v.iter().map(|e| e * TRIANGLE_AREA.powf(1.0 / exponent)), exponent);
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    let edge_residual_max = edge_residuals(v, y, y.window().shrink(2))?
        .iter()
        .fold(0.0f64, |m, (_, _, d)| m.max(d.norm()));
    let dual2 = if exponent == 2.0 {
        let fa = EnergyKind::Atomistic.forces(v, y)?;
        let fac = EnergyKind::coupled(p, r).forces(v, y)?;
        Some(crate::fields::dual_norm_2(&fa.difference(&fac).variation(y.window()))?)
    } else {
        None
    };
    Ok(ConsistencyReport {
        p: exponent,
        err_i_max: max(&ei),
        err_i_lp: weighted(&ei),
        err_c_max: max(&ec),
        err_c_lp: weighted(&ec),
        err_c1_max: max(&ec1),
        err_c1_lp: weighted(&ec1),
        err_a_max,
        edge_residual_max,
        dual2,
        errors,
    })
}

/// `max_f |ψ²³(m_f)| / ((1/6) M_2 max_{x∈f} |D²y(x)|)` over edges where the denominator is positive.
pub fn psi23_bound_ratio<P: SitePotential + ?Sized>(v: &P, y: &LatticeField, m2: f64) -> Result<f64> {
    let psi = psi23(v, y)?;
    let inner = y.window().shrink(2);
    let mut worst = 0.0f64;
    for (f, value) in psi.iter() {
        let [x, z] = f.endpoints();
        if !(inner.contains(x) && inner.contains(z)) {
            continue;
        }
        let d2 = d2_magnitude(y, x)?.max(d2_magnitude(y, z)?);
        if d2 > 0.0 {
            worst = worst.max(value.norm() / (m2 * d2 / 6.0));
        }
    }
    Ok(worst)
}

/// `max_f |ψ^ac(F;m_f) − ψ^ac(G;m_f)| / (M_2 |F − G|)`.
pub fn psi_ac_lipschitz_ratio<P: SitePotential + ?Sized>(v: &P, psi: &PsiAcCoefficients, f: &Mat2, g: &Mat2, m2: f64) -> Result<f64> {
    let df = v.d1(&deformed_vectors(f))?;
    let dg = v.d1(&deformed_vectors(g))?;
    let mut worst = 0.0f64;
    for &e in psi.coefficients.keys() {
        worst = worst.max((psi.value(e, &df) - psi.value(e, &dg)).norm());
    }
    Ok(worst / (m2 * (f - g).norm()))
}

/// Vertex, edge, triangle and interior-vertex counts of a union of triangles.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MeshCounts {
    pub vertices: usize,
    pub edges: usize,
    pub triangles: usize,
    pub interior_vertices: usize,
}

impl MeshCounts {
    /// `#V − #E + #T = 1`.
    pub fn euler_holds(&self) -> bool {
        self.vertices + self.triangles == self.edges + 1
    }

    /// `3#T = 2#E − #V + #V_I`.
    pub fn edge_identity_holds(&self) -> bool {
        3 * self.triangles + self.vertices == 2 * self.edges + self.interior_vertices
    }
}

pub fn mesh_counts(triangles: &[Triangle]) -> MeshCounts {
    let set: BTreeSet<Triangle> = triangles.iter().copied().collect();
    let mut vertices = BTreeSet::new();
    let mut edges = BTreeSet::new();
    for t in &set {
        vertices.extend(t.vertices());
        edges.extend(t.edges());
    }
    let interior_vertices = vertices
        .iter()
        .filter(|&&x| vertex_star(x).iter().all(|t| set.contains(t)))
        .count();
    MeshCounts { vertices: vertices.len(), edges: edges.len(), triangles: set.len(), interior_vertices }
}
