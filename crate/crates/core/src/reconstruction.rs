//! Reconstruction coefficients `C_{x,j,i}` and the patch-test constraint system.
//!
//! Under one-sidedness and energy consistency the full tensor is determined by the
//! reduced coefficients `C_{x,j}`: `C_{x,j,j} = C_{x,j}`, `C_{x,j,j±1} = 1 − C_{x,j}`,
//! and zero otherwise. Atomistic sites carry `C_{x,j} = 1`, continuum sites `2/3`.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::lattice::{Dir, Edge, IndexBox, Site};
use crate::partition::{check_admissible, is_planar, planar_direction, RegionPartition, SiteClass};
use crate::potentials::{reconstruct_bonds, SiteCoefficients};
use crate::{Bonds, Error, Result};

pub const ATOMISTIC_VALUE: f64 = 1.0;
pub const CONTINUUM_VALUE: f64 = 2.0 / 3.0;

/// Singular values below this (relative to the largest) count as zero.
pub const RANK_TOL: f64 = 1e-10;
/// Largest accepted residual of a constraint solution.
pub const FEASIBILITY_TOL: f64 = 1e-12;

/// Full coefficient tensor `C[j][i] = C_{x,j,i}` of one site.
pub type FullCoefficients = [[f64; 6]; 6];

/// Reduced coefficients on the interface sites of a window.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReconstructionParams {
    values: BTreeMap<Site, SiteCoefficients>,
}

impl ReconstructionParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, x: Site, c: SiteCoefficients) {
        self.values.insert(x, c);
    }

    /// Overrides a single reduced coefficient of an interface site.
    pub fn set(&mut self, x: Site, j: Dir, value: f64) -> Result<()> {
        let c = self.values.get_mut(&x).ok_or(Error::OutOfWindow(x))?;
        c[j.slot()] = value;
        Ok(())
    }

    pub fn interface_values(&self) -> &BTreeMap<Site, SiteCoefficients> {
        &self.values
    }

    /// `(C_{x,1}, …, C_{x,6})` for any site of the window.
    pub fn site(&self, p: &RegionPartition, x: Site) -> Result<SiteCoefficients> {
        match p.class(x) {
            SiteClass::Atomistic => Ok([ATOMISTIC_VALUE; 6]),
            SiteClass::Continuum => Ok([CONTINUUM_VALUE; 6]),
            SiteClass::Interface => self.values.get(&x).copied().ok_or(Error::OutOfWindow(x)),
        }
    }

    /// `C_{x,j}`.
    pub fn reduced(&self, p: &RegionPartition, x: Site, j: Dir) -> Result<f64> {
        Ok(self.site(p, x)?[j.slot()])
    }

    /// The full tensor `C_{x,j,i}` derived from the reduced coefficients.
    pub fn full(&self, p: &RegionPartition, x: Site) -> Result<FullCoefficients> {
        Ok(full_from_reduced(&self.site(p, x)?))
    }

    /// `C̄ = max |C_{x,j,i}|` over the interface.
    pub fn c_bar(&self) -> f64 {
        self.values
            .values()
            .flat_map(|c| full_from_reduced(c).into_iter().flatten())
            .fold(ATOMISTIC_VALUE, |m, v| m.max(v.abs()))
    }

    /// `n1,n2,j,value` rows for every interface site.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n1,n2,j,value\n");
        for (x, c) in &self.values {
            for j in Dir::ALL {
                let _ = writeln!(s, "{},{},{},{}", x.n1, x.n2, j.get(), c[j.slot()]);
            }
        }
        s
    }

    /// Reads a table written by [`ReconstructionParams::to_csv`]; sites must be interface sites of `p`.
    pub fn from_csv(p: &RegionPartition, text: &str) -> Result<Self> {
        let mut out = ReconstructionParams::new();
        let mut seen: HashMap<Site, [bool; 6]> = HashMap::new();
        for (lineno, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let bad = || Error::Parse(format!("line {}: expected n1,n2,j,value", lineno + 1));
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 4 {
                return Err(bad());
            }
            let x = Site::new(cols[0].parse().map_err(|_| bad())?, cols[1].parse().map_err(|_| bad())?);
            let j: i64 = cols[2].parse().map_err(|_| bad())?;
            let v: f64 = cols[3].parse().map_err(|_| bad())?;
            if !(1..=6).contains(&j) {
                return Err(bad());
            }
            if !p.is_interface(x) {
                return Err(Error::Parse(format!("line {}: site {x} is not an interface site", lineno + 1)));
            }
            out.values.entry(x).or_insert([CONTINUUM_VALUE; 6])[(j - 1) as usize] = v;
            seen.entry(x).or_default()[(j - 1) as usize] = true;
        }
        for x in p.interface() {
            if !seen.get(&x).is_some_and(|s| s.iter().all(|&b| b)) {
                return Err(Error::Parse(format!("missing coefficients for interface site {x}")));
            }
        }
        Ok(out)
    }
}

/// `C_{x,j,j} = C_j`, `C_{x,j,j±1} = 1 − C_j`.
pub fn full_from_reduced(c: &SiteCoefficients) -> FullCoefficients {
    let mut out = [[0.0; 6]; 6];
    for j in 0..6 {
        out[j][j] = c[j];
        out[j][(j + 1) % 6] = 1.0 - c[j];
        out[j][(j + 5) % 6] = 1.0 - c[j];
    }
    out
}

/// `(R_x D_j y)_j = Σ_i C_{x,j,i} D_i y(x)` for an arbitrary full tensor.
pub fn reconstruct_full(c: &FullCoefficients, dy: &Bonds) -> Bonds {
    std::array::from_fn(|j| (0..6).map(|i| dy[i] * c[j][i]).sum())
}

/// `R_x Dy(x)` with the reduced coefficients of `x`.
pub fn reconstruct(r: &ReconstructionParams, p: &RegionPartition, x: Site, dy: &Bonds) -> Result<Bonds> {
    Ok(reconstruct_bonds(&r.site(p, x)?, dy))
}

/// Which reduced coefficient of an interface bond is shared with its partner.
fn bond_value(p: &RegionPartition, x: Site, j: Dir, free: &BTreeMap<Edge, f64>, default_free: f64) -> f64 {
    match p.class(x.step(j)) {
        SiteClass::Atomistic => ATOMISTIC_VALUE,
        SiteClass::Continuum => CONTINUUM_VALUE,
        SiteClass::Interface => free.get(&Edge::new(x, j)).copied().unwrap_or(default_free),
    }
}

/// Coefficients `1` on bonds into `A`, `2/3` on bonds into `C`, and one shared free value per interface bond.
pub fn assign_general(p: &RegionPartition, free: &BTreeMap<Edge, f64>, default_free: f64) -> Result<ReconstructionParams> {
    let report = check_admissible(p);
    if !report.passed() {
        return Err(Error::InadmissiblePartition(report.violations.len()));
    }
    let mut out = ReconstructionParams::new();
    for x in p.interface() {
        out.insert(x, Dir::ALL.map(|j| bond_value(p, x, j, free, default_free)));
    }
    Ok(out)
}

/// Flat-interface parameters: `c = (c2, c3, c5, c6)` constant along the interface and one value per in-line bond.
///
/// Directions are relative to the interface: `a_1` runs along it with `a_2, a_3` pointing into `C`.
pub fn assign_flat(p: &RegionPartition, c: [f64; 4], d: &BTreeMap<Edge, f64>, d_default: f64) -> Result<ReconstructionParams> {
    if !is_planar(p) {
        return Err(Error::NotPlanar);
    }
    let k = planar_direction(p).ok_or(Error::NotPlanar)?;
    let mut out = ReconstructionParams::new();
    for x in p.interface() {
        let base = if p.is_continuum(x.step(k.next())) { k } else { k.opposite() };
        let mut v = [0.0; 6];
        for (m, cm) in [(1, c[0]), (2, c[1]), (4, c[2]), (5, c[3])] {
            v[base.shift(m).slot()] = cm;
        }
        for j in [base, base.opposite()] {
            v[j.slot()] = d.get(&Edge::new(x, j)).copied().unwrap_or(d_default);
        }
        out.insert(x, v);
    }
    Ok(out)
}

/// The quasicontinuum energy: `C_{x,j} = 1` on the interface, i.e. `V^i_x = V`.
pub fn qce(p: &RegionPartition) -> ReconstructionParams {
    let mut out = ReconstructionParams::new();
    for x in p.interface() {
        out.insert(x, [ATOMISTIC_VALUE; 6]);
    }
    out
}

/// An affine expression `constant + Σ coeff · unknown`.
#[derive(Clone, Debug, Default)]
struct Affine {
    constant: f64,
    terms: Vec<(usize, f64)>,
}

impl Affine {
    fn add(&mut self, other: &Affine, s: f64) {
        self.constant += s * other.constant;
        self.terms.extend(other.terms.iter().map(|&(k, c)| (k, s * c)));
    }
}

/// The linear system whose solutions are exactly the force-consistent interface coefficients.
#[derive(Clone, Debug)]
pub struct PatchConstraintSystem {
    /// Unknown `k` is `C_{x,j}` for `unknowns[k] = (x, j)`.
    pub unknowns: Vec<(Site, Dir)>,
    /// Row `r` is the force-consistency condition at `rows[r] = (z, j)`, `j ∈ {1,2,3}`.
    pub rows: Vec<(Site, Dir)>,
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

/// Rank-revealing solution of a [`PatchConstraintSystem`].
#[derive(Clone, Debug)]
pub struct ConstraintSolution {
    pub particular: DVector<f64>,
    /// Columns span the nullspace.
    pub nullspace: DMatrix<f64>,
    pub rank: usize,
    pub dimension: usize,
    pub max_residual: f64,
}

/// Assembles `Σ_i (C_{z−a_i,j,i} − C_{z−a_i,j+3,i} − C_{z,j,i} + C_{z,j+3,i}) = 0` for `j = 1,2,3`
/// at every site `z` of `window.shrink(1)` that involves an interface unknown.
pub fn assemble_patch_constraints(p: &RegionPartition) -> Result<PatchConstraintSystem> {
    let report = check_admissible(p);
    if !report.passed() {
        return Err(Error::InadmissiblePartition(report.violations.len()));
    }
    let window = p.window();
    let interface = p.interface();
    let mut unknowns = Vec::new();
    let mut index: HashMap<(Site, Dir), usize> = HashMap::new();
    for &x in &interface {
        for j in Dir::ALL {
            index.insert((x, j), unknowns.len());
            unknowns.push((x, j));
        }
    }
    // C_{y,k,i} as an affine expression in the unknowns
    let full = |y: Site, k: Dir, i: Dir| -> Affine {
        let weight = if i == k {
            (1.0, 0.0)
        } else if i == k.next() || i == k.prev() {
            (-1.0, 1.0)
        } else {
            return Affine::default();
        };
        match index.get(&(y, k)) {
            Some(&u) => Affine { constant: weight.1, terms: vec![(u, weight.0)] },
            None => {
                let c = match p.class(y) {
                    SiteClass::Atomistic => ATOMISTIC_VALUE,
                    _ => CONTINUUM_VALUE,
                };
                Affine { constant: weight.0 * c + weight.1, terms: vec![] }
            }
        }
    };
    let near_interface = |z: Site| -> bool { p.is_interface(z) || z.neighbours().iter().any(|&y| p.is_interface(y)) };
    let mut rows = Vec::new();
    let mut exprs: Vec<Affine> = Vec::new();
    for z in window.shrink(1).sites().filter(|&z| near_interface(z)) {
        for j in Dir::CANONICAL {
            let mut e = Affine::default();
            for i in Dir::ALL {
                let y = z.step(i.opposite());
                e.add(&full(y, j, i), 1.0);
                e.add(&full(y, j.opposite(), i), -1.0);
                e.add(&full(z, j, i), -1.0);
                e.add(&full(z, j.opposite(), i), 1.0);
            }
            if e.terms.iter().any(|&(_, c)| c != 0.0) || e.constant.abs() > 1e-15 {
                rows.push((z, j));
                exprs.push(e);
            }
        }
    }
    let mut matrix = DMatrix::zeros(rows.len(), unknowns.len());
    let mut rhs = DVector::zeros(rows.len());
    for (r, e) in exprs.iter().enumerate() {
        for &(k, c) in &e.terms {
            matrix[(r, k)] += c;
        }
        rhs[r] = -e.constant;
    }
    Ok(PatchConstraintSystem { unknowns, rows, matrix, rhs })
}

impl PatchConstraintSystem {
    /// The vector of unknowns taken from a parameter set.
    pub fn vector_of(&self, r: &ReconstructionParams, p: &RegionPartition) -> Result<DVector<f64>> {
        let mut v = DVector::zeros(self.unknowns.len());
        for (k, &(x, j)) in self.unknowns.iter().enumerate() {
            v[k] = r.reduced(p, x, j)?;
        }
        Ok(v)
    }

    /// A parameter set from a vector of unknowns.
    pub fn params_of(&self, v: &DVector<f64>) -> ReconstructionParams {
        let mut out = ReconstructionParams::new();
        for (k, &(x, j)) in self.unknowns.iter().enumerate() {
            out.values.entry(x).or_insert([CONTINUUM_VALUE; 6])[j.slot()] = v[k];
        }
        out
    }

    /// `max_r |(M c − b)_r|`.
    pub fn residual(&self, v: &DVector<f64>) -> f64 {
        (&self.matrix * v - &self.rhs).amax()
    }

    /// Rows violated by more than `tol`, with their residuals.
    pub fn violated_rows(&self, v: &DVector<f64>, tol: f64) -> Vec<((Site, Dir), f64)> {
        let r = &self.matrix * v - &self.rhs;
        self.rows.iter().zip(r.iter()).filter(|(_, e)| e.abs() > tol).map(|(&row, &e)| (row, e)).collect()
    }
}

impl ConstraintSolution {
    /// Dimension of the solution space restricted to the unknowns of the selected sites.
    pub fn restricted_dimension(&self, s: &PatchConstraintSystem, keep: impl Fn(Site) -> bool) -> usize {
        let idx: Vec<usize> = s.unknowns.iter().enumerate().filter(|(_, (x, _))| keep(*x)).map(|(k, _)| k).collect();
        if idx.is_empty() || self.nullspace.ncols() == 0 {
            return 0;
        }
        self.nullspace.select_rows(idx.iter()).rank(1e-8)
    }
}

/// SVD-based solve: minimum-norm particular solution, nullspace basis and its dimension.
pub fn solve_constraints(s: &PatchConstraintSystem) -> Result<ConstraintSolution> {
    let n = s.unknowns.len();
    let m = s.rows.len();
    // pad with zero rows so the SVD exposes all n right singular vectors
    let rows = m.max(n);
    let mut a = DMatrix::zeros(rows, n);
    a.view_mut((0, 0), (m, n)).copy_from(&s.matrix);
    let mut b = DVector::zeros(rows);
    b.rows_mut(0, m).copy_from(&s.rhs);
    let svd = a.clone().svd(true, true);
    let (u, vt) = (svd.u.as_ref().expect("u requested"), svd.v_t.as_ref().expect("v_t requested"));
    let sigma = &svd.singular_values;
    let smax = sigma.iter().fold(0.0f64, |a, &b| a.max(b));
    let cutoff = RANK_TOL * smax.max(1.0);
    let range: Vec<usize> = (0..sigma.len()).filter(|&k| sigma[k] > cutoff).collect();
    let rank = range.len();
    let null_cols: Vec<DVector<f64>> =
        (0..sigma.len()).filter(|&k| sigma[k] <= cutoff).map(|k| vt.row(k).transpose()).collect();
    let pinv = |rhs: &DVector<f64>| {
        let mut x = DVector::zeros(n);
        for &k in &range {
            x += vt.row(k).transpose() * (u.column(k).dot(rhs) / sigma[k]);
        }
        x
    };
    let mut particular = pinv(&b);
    // the SVD of a large rank-deficient system is only accurate to a few ulps of its largest entries
    for _ in 0..3 {
        let r = &b - &a * &particular;
        particular += pinv(&r);
    }
    let nullspace = if null_cols.is_empty() { DMatrix::zeros(n, 0) } else { DMatrix::from_columns(&null_cols) };
    let max_residual = s.residual(&particular);
    if max_residual > FEASIBILITY_TOL {
        return Err(Error::Infeasible { max_residual, rows: s.violated_rows(&particular, FEASIBILITY_TOL).len() });
    }
    Ok(ConstraintSolution { particular, dimension: n - rank, nullspace, rank, max_residual })
}

/// Free-parameter count of the flat-interface parametrisation on the interface sites at depth
/// at least one in the window: four constants plus one value per in-line bond touching such a site.
pub fn flat_parameter_count(p: &RegionPartition) -> Option<usize> {
    let k = planar_direction(p)?;
    let window = p.window();
    let mut bonds = std::collections::BTreeSet::new();
    for x in p.interface().into_iter().filter(|&x| window.depth(x) >= 1) {
        bonds.insert(Edge::new(x, k));
        bonds.insert(Edge::new(x, k.opposite()));
    }
    Some(4 + bonds.len())
}

/// Number of interface-interface bonds touching an interface site of the window.
pub fn interface_bond_count(p: &RegionPartition) -> usize {
    let mut bonds = std::collections::BTreeSet::new();
    for x in p.interface() {
        for j in Dir::ALL {
            if p.is_interface(x.step(j)) {
                bonds.insert(Edge::new(x, j));
            }
        }
    }
    bonds.len()
}

/// Number of interface-interface bonds touching an interface site at window depth at least one.
pub fn interior_interface_bond_count(p: &RegionPartition) -> usize {
    let window = p.window();
    let mut bonds = std::collections::BTreeSet::new();
    for x in p.interface().into_iter().filter(|&x| window.depth(x) >= 1) {
        for j in Dir::ALL {
            if p.is_interface(x.step(j)) {
                bonds.insert(Edge::new(x, j));
            }
        }
    }
    bonds.len()
}

/// Interface bonds `(x, x+a_j)` with both endpoints interface sites, in canonical form.
pub fn interface_edges(p: &RegionPartition, window: IndexBox) -> Vec<Edge> {
    let mut out: Vec<Edge> = window
        .edges()
        .filter(|e| e.endpoints().iter().all(|&x| p.is_interface(x)))
        .collect();
    out.sort();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{deformed_vectors, lattice_vectors};
    use crate::partition::{build_partition, Geometry};
    use crate::potentials::{make_morse_pair, SitePotential};
    use crate::Mat2;

    #[test]
    fn reconstruct_examples() {
        let w = IndexBox::centered(8);
        let p = build_partition(&Geometry::hexagon(2), w).unwrap();
        let g: Bonds = std::array::from_fn(|j| lattice_vectors()[j] * (1.0 + 0.1 * j as f64));
        let mut r = ReconstructionParams::new();
        let x = p.interface()[0];
        r.insert(x, [1.0; 6]);
        assert_eq!(reconstruct(&r, &p, x, &g).unwrap(), g);

        r.insert(x, [0.0, 0.4, 0.9, 0.7, 0.5, 1.3]);
        let f = Mat2::new(1.1, 0.2, -0.1, 0.95);
        let fa = deformed_vectors(&f);
        let rf = reconstruct(&r, &p, x, &fa).unwrap();
        for j in 0..6 {
            assert!((rf[j] - fa[j]).norm() < 1e-15);
        }
        let out = reconstruct(&r, &p, x, &g).unwrap();
        assert_eq!(out[0], g[5] + g[1]);
    }

    #[test]
    fn full_tensor_is_one_sided() {
        let c = [0.3, 0.5, 0.7, 0.9, 1.1, 1.3];
        let full = full_from_reduced(&c);
        for j in 0..6 {
            for i in 0..6 {
                let d = (i as i64 - j as i64).rem_euclid(6);
                if d > 1 && d < 5 {
                    assert_eq!(full[j][i], 0.0);
                }
            }
            assert_eq!(full[j][(j + 1) % 6], 1.0 - full[j][j]);
            assert_eq!(full[j][(j + 5) % 6], 1.0 - full[j][j]);
        }
    }

    #[test]
    fn breaking_energy_consistency_is_detected() {
        let v = make_morse_pair(1.0, 4.0, 1.0).unwrap();
        let f = Mat2::new(1.0, 0.1, 0.0, 1.0);
        let fa = deformed_vectors(&f);
        let mut full = full_from_reduced(&[0.8; 6]);
        let base = v.eval(&fa).unwrap();
        assert!((v.eval(&reconstruct_full(&full, &fa)).unwrap() - base).abs() < 1e-15);
        full[0][1] += 0.05;
        assert!((v.eval(&reconstruct_full(&full, &fa)).unwrap() - base).abs() > 1e-6);
    }

    #[test]
    fn general_assignment_values() {
        let w = IndexBox::centered(10);
        let p = build_partition(&Geometry::hexagon(3), w).unwrap();
        let r = assign_general(&p, &BTreeMap::new(), 0.9).unwrap();
        for x in p.interface() {
            for j in Dir::ALL {
                let expected = match p.class(x.step(j)) {
                    SiteClass::Atomistic => 1.0,
                    SiteClass::Continuum => 2.0 / 3.0,
                    SiteClass::Interface => 0.9,
                };
                assert_eq!(r.reduced(&p, x, j).unwrap(), expected);
                if p.is_interface(x.step(j)) {
                    assert_eq!(r.reduced(&p, x.step(j), j.opposite()).unwrap(), expected);
                }
            }
        }
        let bad = build_partition(&Geometry::sites([Site::ORIGIN, Site::new(3, 0)]), w).unwrap();
        assert!(matches!(assign_general(&bad, &BTreeMap::new(), 0.5), Err(Error::InadmissiblePartition(_))));
    }

    #[test]
    fn general_assignment_satisfies_constraints() {
        let w = IndexBox::centered(10);
        let p = build_partition(&Geometry::hexagon(3), w).unwrap();
        let s = assemble_patch_constraints(&p).unwrap();
        for default in [2.0 / 3.0, 0.9] {
            let r = assign_general(&p, &BTreeMap::new(), default).unwrap();
            assert!(s.residual(&s.vector_of(&r, &p).unwrap()) < 1e-13);
        }
        assert!(s.residual(&s.vector_of(&qce(&p), &p).unwrap()) > 1e-3);
    }

    #[test]
    fn hexagon_solution_space_is_one_value_per_interface_bond() {
        let w = IndexBox::centered(10);
        let p = build_partition(&Geometry::hexagon(3), w).unwrap();
        let s = assemble_patch_constraints(&p).unwrap();
        let sol = solve_constraints(&s).unwrap();
        assert_eq!(interface_bond_count(&p), 24);
        assert_eq!(sol.dimension, 24);
        assert!(sol.max_residual <= FEASIBILITY_TOL);
        for k in 0..sol.dimension {
            let v = &sol.particular + sol.nullspace.column(k) * 0.3;
            assert!(s.residual(&v) < 1e-12);
        }
    }

    #[test]
    fn flat_solution_space_matches_parameter_count() {
        let w = IndexBox::centered(6);
        let p = build_partition(&Geometry::flat(), w).unwrap();
        let s = assemble_patch_constraints(&p).unwrap();
        let sol = solve_constraints(&s).unwrap();
        let inner = sol.restricted_dimension(&s, |x| w.depth(x) >= 1);
        assert_eq!(Some(inner), flat_parameter_count(&p));
        assert_eq!(inner, 4 + 12);
        // each end site of the truncated interface carries two extra degrees of freedom
        assert_eq!(sol.dimension, inner + 4);
    }

    #[test]
    fn flat_assignment_satisfies_constraints() {
        let w = IndexBox::centered(8);
        let p = build_partition(&Geometry::flat(), w).unwrap();
        let s = assemble_patch_constraints(&p).unwrap();
        let r = assign_flat(&p, [0.8, 0.7, 0.6, 0.9], &BTreeMap::new(), 0.75).unwrap();
        assert!(s.residual(&s.vector_of(&r, &p).unwrap()) < 1e-13);
        let x = Site::new(0, 0);
        assert_eq!(r.reduced(&p, x, Dir::new(2)).unwrap(), 0.8);
        assert_eq!(r.reduced(&p, x, Dir::new(6)).unwrap(), 0.9);
        assert_eq!(r.reduced(&p, x, Dir::new(4)).unwrap(), 0.75);

        let mut broken = r.clone();
        broken.set(x, Dir::new(2), 0.5).unwrap();
        assert!(s.residual(&s.vector_of(&broken, &p).unwrap()) > 1e-3);

        let hex = build_partition(&Geometry::hexagon(3), IndexBox::centered(10)).unwrap();
        assert_eq!(assign_flat(&hex, [0.7; 4], &BTreeMap::new(), 0.7).unwrap_err(), Error::NotPlanar);
    }

    #[test]
    fn csv_round_trip() {
        let w = IndexBox::centered(10);
        let p = build_partition(&Geometry::hexagon(3), w).unwrap();
        let r = assign_general(&p, &BTreeMap::new(), 0.71).unwrap();
        assert_eq!(ReconstructionParams::from_csv(&p, &r.to_csv()).unwrap(), r);
    }
}
