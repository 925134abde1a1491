//! The atomistic, Cauchy–Born and coupled energies, their first variations, and the patch test.

use std::fmt::Write as _;
use std::path::Path;

use crate::fields::{displacement_gradient, Deformation, LatticeField, SiteFunctional};
use crate::lattice::{lattice_vectors, Dir, IndexBox, Site, Triangle, TRIANGLE_AREA};
use crate::partition::{RegionPartition, SiteClass};
use crate::potentials::{cb_density, cb_stress, reconstruct_adjoint, reconstruct_bonds, ContinuumSite, SitePotential};
use crate::reconstruction::ReconstructionParams;
use crate::{Bonds, Error, Mat2, Result, Vec2};

/// Relative tolerance for the agreement of the element and site forms of `E_c`.
pub const FORM_TOL: f64 = 1e-12;
/// Relative ghost-force threshold, scaled by `1 + max_j |∂_jV(Fa)|`.
pub const GHOST_FORCE_TOL: f64 = 1e-12;
/// Relative threshold on `|V^i_x(Fa) − V(Fa)|`.
pub const ENERGY_CONSISTENCY_TOL: f64 = 1e-13;

/// Which energy is evaluated.
#[derive(Clone, Copy)]
pub enum EnergyKind<'a> {
    Atomistic,
    Continuum,
    Coupled { partition: &'a RegionPartition, params: &'a ReconstructionParams },
}

impl<'a> EnergyKind<'a> {
    pub fn coupled(partition: &'a RegionPartition, params: &'a ReconstructionParams) -> Self {
        EnergyKind::Coupled { partition, params }
    }

    fn class(&self, x: Site) -> SiteClass {
        match self {
            EnergyKind::Atomistic => SiteClass::Atomistic,
            EnergyKind::Continuum => SiteClass::Continuum,
            EnergyKind::Coupled { partition, .. } => partition.class(x),
        }
    }

    /// `V^•_x(g)`.
    pub fn site_energy<P: SitePotential + ?Sized>(&self, v: &P, x: Site, g: &Bonds) -> Result<f64> {
        match (self, self.class(x)) {
            (_, SiteClass::Atomistic) => v.eval(g),
            (_, SiteClass::Continuum) => ContinuumSite(v).eval(g),
            (EnergyKind::Coupled { partition, params }, SiteClass::Interface) => {
                v.eval(&reconstruct_bonds(&params.site(partition, x)?, g))
            }
            _ => unreachable!("interface sites only occur in coupled energies"),
        }
    }

    /// `(∂_1V^•_x(g), …, ∂_6V^•_x(g))`.
    pub fn site_gradient<P: SitePotential + ?Sized>(&self, v: &P, x: Site, g: &Bonds) -> Result<Bonds> {
        match (self, self.class(x)) {
            (_, SiteClass::Atomistic) => v.d1(g),
            (_, SiteClass::Continuum) => ContinuumSite(v).d1(g),
            (EnergyKind::Coupled { partition, params }, SiteClass::Interface) => {
                let c = params.site(partition, x)?;
                Ok(reconstruct_adjoint(&c, &v.d1(&reconstruct_bonds(&c, g))?))
            }
            _ => unreachable!("interface sites only occur in coupled energies"),
        }
    }

    /// `E(y) = Σ_x V^•_x(Dy(x))` over the energy box of `y`.
    pub fn energy<P: SitePotential + ?Sized, Y: Deformation + ?Sized>(&self, v: &P, y: &Y) -> Result<f64> {
        let mut s = 0.0;
        for x in y.energy_box().sites() {
            s += self.site_energy(v, x, &y.bonds(x)?)?;
        }
        Ok(s)
    }

    /// `f = −∂E/∂y`.
    pub fn forces<P: SitePotential + ?Sized, Y: Deformation + ?Sized>(&self, v: &P, y: &Y) -> Result<ForceField> {
        let energy_box = y.energy_box();
        let grads: Vec<Bonds> = energy_box
            .sites()
            .map(|x| self.site_gradient(v, x, &y.bonds(x)?))
            .collect::<Result<_>>()?;
        // for homogeneous states only sites with a complete stencil carry a meaningful force
        let bbox = if y.homogeneous().is_some() { energy_box.shrink(1) } else { y.window() };
        let mut values = Vec::with_capacity(bbox.len());
        for x in bbox.sites() {
            let mut f = Vec2::zeros();
            if let Some(k) = energy_box.index(x) {
                f += grads[k].iter().sum::<Vec2>();
            }
            for i in Dir::ALL {
                if let Some(k) = energy_box.index(x.step(i.opposite())) {
                    f -= grads[k][i.slot()];
                }
            }
            values.push(f);
        }
        Ok(ForceField { bbox, values })
    }
}

/// `E_a(y) = Σ_x V(Dy(x))`.
pub fn energy_a<P: SitePotential + ?Sized, Y: Deformation + ?Sized>(v: &P, y: &Y) -> Result<f64> {
    EnergyKind::Atomistic.energy(v, y)
}

/// `E_c(y) = Σ_T |T| W(∇_T y)` over triangles based in the energy box.
pub fn energy_c_elements<P: SitePotential + ?Sized, Y: Deformation + ?Sized>(v: &P, y: &Y) -> Result<f64> {
    let mut s = 0.0;
    for t in y.energy_box().triangles() {
        s += TRIANGLE_AREA * cb_density(v, &y.gradient(t)?)?;
    }
    Ok(s)
}

/// `E_c(y) = Σ_x V^c(Dy(x))`.
pub fn energy_c_sites<P: SitePotential + ?Sized, Y: Deformation + ?Sized>(v: &P, y: &Y) -> Result<f64> {
    EnergyKind::Continuum.energy(v, y)
}

/// `E_c(y)`, computed in element and site form; fails if the two disagree.
pub fn energy_c<P: SitePotential + ?Sized, Y: Deformation + ?Sized>(v: &P, y: &Y) -> Result<f64> {
    let element = energy_c_elements(v, y)?;
    let site = energy_c_sites(v, y)?;
    if (element - site).abs() > FORM_TOL * element.abs().max(site.abs()) {
        return Err(Error::FormMismatch { element, site });
    }
    Ok(element)
}

/// `E_ac(y) = Σ_A V + Σ_I V∘R_x + Σ_C V^c`.
pub fn energy_ac<P: SitePotential + ?Sized, Y: Deformation + ?Sized>(
    v: &P,
    r: &ReconstructionParams,
    p: &RegionPartition,
    y: &Y,
) -> Result<f64> {
    EnergyKind::coupled(p, r).energy(v, y)
}

/// Per-site forces `f(x) = −∂E/∂y(x)` on a box.
#[derive(Clone, Debug, PartialEq)]
pub struct ForceField {
    bbox: IndexBox,
    values: Vec<Vec2>,
}

impl ForceField {
    pub fn bbox(&self) -> IndexBox {
        self.bbox
    }

    pub fn get(&self, x: Site) -> Vec2 {
        self.bbox.index(x).map_or_else(Vec2::zeros, |k| self.values[k])
    }

    pub fn iter(&self) -> impl Iterator<Item = (Site, Vec2)> + '_ {
        self.bbox.sites().zip(self.values.iter().copied())
    }

    pub fn sum(&self) -> Vec2 {
        self.values.iter().sum()
    }

    pub fn max_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, f| m.max(f.norm()))
    }

    /// The largest force and where it occurs.
    pub fn argmax(&self) -> Option<(Site, f64)> {
        self.iter().map(|(x, f)| (x, f.norm())).max_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// `f − g` on the box of `f`.
    pub fn difference(&self, other: &ForceField) -> ForceField {
        let values = self.iter().map(|(x, f)| f - other.get(x)).collect();
        ForceField { bbox: self.bbox, values }
    }

    /// `δE = −f` as a functional on `window`, dropping the boundary layer where test fields vanish.
    pub fn variation(&self, window: IndexBox) -> SiteFunctional {
        let interior = window.shrink(1);
        let mut out = SiteFunctional::zeros(window);
        for (k, x) in window.sites().enumerate() {
            if interior.contains(x) {
                out.values[k] = -self.get(x);
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("n1,n2,f1,f2\n");
        for (x, f) in self.iter() {
            let _ = writeln!(s, "{},{},{},{}", x.n1, x.n2, f[0], f[1]);
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// `⟨δE(y), u⟩ = −Σ_x f(x)·u(x)`.
pub fn variation_pairing(f: &ForceField, u: &LatticeField) -> f64 {
    -u.iter().map(|(x, ux)| f.get(x).dot(&ux)).sum::<f64>()
}

/// `(E(y+tu) − E(y−tu)) / 2t`.
pub fn central_difference<P: SitePotential + ?Sized>(
    kind: &EnergyKind,
    v: &P,
    y: &LatticeField,
    u: &LatticeField,
    t: f64,
) -> Result<f64> {
    let plus = kind.energy(v, &y.axpy(t, u))?;
    let minus = kind.energy(v, &y.axpy(-t, u))?;
    Ok((plus - minus) / (2.0 * t))
}

/// `Σ_x Σ_{j=1}^3 (V_{x,j} − V_{x+a_j,j+3})·D_j u(x)`.
pub fn delta_ea_edge_pairing<P: SitePotential + ?Sized>(v: &P, y: &LatticeField, u: &LatticeField) -> Result<f64> {
    let b = y.energy_box();
    let grads: Vec<Bonds> = b.sites().map(|x| v.d1(&y.bonds(x)?)).collect::<Result<_>>()?;
    let g = |x: Site, j: Dir| b.index(x).map_or_else(Vec2::zeros, |k| grads[k][j.slot()]);
    let mut s = 0.0;
    for x in y.window().sites() {
        for j in Dir::CANONICAL {
            let z = x.step(j);
            if !b.contains(x) && !b.contains(z) {
                continue;
            }
            s += (g(x, j) - g(z, j.opposite())).dot(&(u.get(z) - u.get(x)));
        }
    }
    Ok(s)
}

/// `Σ_T |T| ∂W(∇_T y) : ∇_T u` over triangles based in the energy box.
pub fn delta_ec_volume_pairing<P: SitePotential + ?Sized>(v: &P, y: &LatticeField, u: &LatticeField) -> Result<f64> {
    let mut s = 0.0;
    for t in y.energy_box().triangles() {
        s += TRIANGLE_AREA * cb_stress(v, &y.gradient(t)?)?.dot(&displacement_gradient(u, t)?);
    }
    Ok(s)
}

/// `Σ_x Σ_{j=1}^3 (V_{T_{x,j},j} + V_{T_{x,j−1},j})·D_j u(x)` with `V_{T,j} = ∂_jV(∇_T y a)`.
pub fn delta_ec_edge_pairing<P: SitePotential + ?Sized>(v: &P, y: &LatticeField, u: &LatticeField) -> Result<f64> {
    let b = y.energy_box();
    let grads: Vec<Bonds> = b
        .triangles()
        .map(|t| v.d1(&crate::lattice::deformed_vectors(&y.gradient(t)?)))
        .collect::<Result<_>>()?;
    let vt = |t: Triangle, j: Dir| b.triangle_index(t).map_or_else(Vec2::zeros, |k| grads[k][j.slot()]);
    let mut s = 0.0;
    for x in y.window().sites() {
        for j in Dir::CANONICAL {
            let w = vt(Triangle::incident(x, j), j) + vt(Triangle::incident(x, j.prev()), j);
            if w != Vec2::zeros() {
                s += w.dot(&(u.get(x.step(j)) - u.get(x)));
            }
        }
    }
    Ok(s)
}

/// Outcome of the patch test at one homogeneous gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchTestSample {
    pub f: Mat2,
    pub max_ghost_force: f64,
    pub ghost_site: Option<Site>,
    /// `1e−12 · (1 + max_j |∂_jV(Fa)|)`.
    pub ghost_threshold: f64,
    /// `max_{x∈I} |V^i_x(Fa) − V(Fa)| / |V(Fa)|` (absolute when `V(Fa) = 0`).
    pub energy_residual: f64,
}

impl PatchTestSample {
    pub fn ghost_force_passed(&self) -> bool {
        self.max_ghost_force <= self.ghost_threshold
    }

    pub fn energy_consistency_passed(&self) -> bool {
        self.energy_residual <= ENERGY_CONSISTENCY_TOL
    }

    pub fn passed(&self) -> bool {
        self.ghost_force_passed() && self.energy_consistency_passed()
    }
}

/// Evaluates ghost forces and energy consistency of `E_ac` at `y_F` on the partition window.
pub fn patch_test<P: SitePotential + ?Sized>(
    v: &P,
    r: &ReconstructionParams,
    p: &RegionPartition,
    f: Mat2,
) -> Result<PatchTestSample> {
    let y = crate::fields::HomogeneousState::new(f, p.window());
    let kind = EnergyKind::coupled(p, r);
    let forces = kind.forces(v, &y)?;
    let fa = crate::lattice::deformed_vectors(&f);
    let scale = v.d1(&fa)?.iter().fold(0.0f64, |m, s| m.max(s.norm()));
    let reference = v.eval(&fa)?;
    let mut energy_residual = 0.0f64;
    for x in p.interface() {
        let e = (kind.site_energy(v, x, &fa)? - reference).abs();
        energy_residual = energy_residual.max(if reference == 0.0 { e } else { e / reference.abs() });
    }
    let argmax = forces.argmax();
    Ok(PatchTestSample {
        f,
        max_ghost_force: argmax.map_or(0.0, |a| a.1),
        ghost_site: argmax.map(|a| a.0),
        ghost_threshold: GHOST_FORCE_TOL * (1.0 + scale),
        energy_residual,
    })
}

/// `F` with `|F − I| ≤ radius` in the Frobenius norm, drawn from `rng`.
pub fn random_gradient(rng: &mut impl rand::Rng, radius: f64) -> Mat2 {
    loop {
        let h = Mat2::from_fn(|_, _| rng.random_range(-radius..radius));
        if h.norm() <= radius {
            return Mat2::identity() + h;
        }
    }
}

/// `Fa` for the reference lattice vectors, as a convenience for tests.
pub fn homogeneous_bonds(f: &Mat2) -> Bonds {
    lattice_vectors().map(|a| f * a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::HomogeneousState;
    use crate::lattice::OMEGA0;
    use crate::partition::{build_partition, Geometry};
    use crate::potentials::{make_bond_angle, make_morse_pair, make_quadratic, Sum};
    use crate::reconstruction::{assign_general, qce};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn random_field(window: IndexBox, radius: i64, amp: f64, seed: u64) -> LatticeField {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        LatticeField::from_fn(window, |x| {
            if x.hops(Site::ORIGIN) <= radius {
                Vec2::new(rng.random_range(-amp..amp), rng.random_range(-amp..amp))
            } else {
                Vec2::zeros()
            }
        })
    }

    fn potential() -> Sum<crate::potentials::MorsePair, crate::potentials::BondAngle> {
        Sum(make_morse_pair(1.0, 4.0, 1.0).unwrap(), make_bond_angle(0.3).unwrap())
    }

    #[test]
    fn reference_has_zero_energy() {
        let v = potential();
        let y = LatticeField::zeros(IndexBox::centered(6));
        assert!(energy_a(&v, &y).unwrap().abs() < 1e-25);
        assert!(energy_c(&v, &y).unwrap().abs() < 1e-25);
    }

    #[test]
    fn quadratic_homogeneous_energy_per_site() {
        let v = make_quadratic([1.0; 6]).unwrap();
        let f = Mat2::new(1.05, 0.02, -0.01, 0.97);
        let w = IndexBox::centered(4);
        let y = HomogeneousState::new(f, w);
        let per_site: f64 = lattice_vectors().iter().map(|a| 0.5 * ((f - Mat2::identity()) * a).norm_squared()).sum();
        assert!((energy_a(&v, &y).unwrap() - w.len() as f64 * per_site).abs() < 1e-13);
        let element = 2.0 * w.len() as f64 * TRIANGLE_AREA * cb_density(&v, &f).unwrap();
        assert!((energy_c(&v, &y).unwrap() - element).abs() < 1e-13);
    }

    #[test]
    fn single_site_displacement_brute_force() {
        let v = make_quadratic([1.0; 6]).unwrap();
        let w = IndexBox::centered(6);
        let eps = 0.01;
        let mut u = LatticeField::zeros(w);
        u.set(Site::ORIGIN, Vec2::new(eps, 0.0)).unwrap();
        // each of the 6 bonds at the origin changes by −ε e1, each reversed bond at a neighbour by +ε e1
        let brute = 12.0 * 0.5 * eps * eps;
        assert!((energy_a(&v, &u).unwrap() - brute).abs() < 1e-15);
    }

    #[test]
    fn continuum_forms_agree() {
        let v = potential();
        let y = random_field(IndexBox::centered(8), 4, 0.1, 3);
        let e = energy_c_elements(&v, &y).unwrap();
        let s = energy_c_sites(&v, &y).unwrap();
        assert!((e - s).abs() <= 1e-12 * e.abs());
    }

    #[test]
    fn degenerate_partitions() {
        let v = potential();
        let w = IndexBox::centered(8);
        let y = random_field(w, 3, 0.1, 5);
        let all_a = build_partition(&Geometry::half_plane(0, 1, 100), w).unwrap();
        let all_c = build_partition(&Geometry::half_plane(0, 1, -100), w).unwrap();
        let r = ReconstructionParams::new();
        assert_eq!(energy_ac(&v, &r, &all_a, &y).unwrap(), energy_a(&v, &y).unwrap());
        assert_eq!(energy_ac(&v, &r, &all_c, &y).unwrap(), energy_c_sites(&v, &y).unwrap());
    }

    #[test]
    fn homogeneous_energies_agree() {
        let v = potential();
        let w = IndexBox::centered(10);
        let p = build_partition(&Geometry::hexagon(3), w).unwrap();
        let r = assign_general(&p, &BTreeMap::new(), 2.0 / 3.0).unwrap();
        let y = HomogeneousState::new(Mat2::new(1.1, 0.05, 0.02, 0.93), w);
        let ea = energy_a(&v, &y).unwrap();
        assert!((energy_ac(&v, &r, &p, &y).unwrap() - ea).abs() < 1e-12 * ea.abs());
        assert!((energy_c(&v, &y).unwrap() - ea).abs() < 1e-12 * ea.abs());
    }

    #[test]
    fn forces_match_finite_differences() {
        let v = potential();
        let w = IndexBox::centered(10);
        let p = build_partition(&Geometry::hexagon(3), w).unwrap();
        let r = assign_general(&p, &BTreeMap::new(), 0.8).unwrap();
        let y = random_field(w, 6, 0.05, 11);
        let u = random_field(w, 6, 1.0, 12);
        for kind in [EnergyKind::Atomistic, EnergyKind::Continuum, EnergyKind::coupled(&p, &r)] {
            let f = kind.forces(&v, &y).unwrap();
            assert!(f.sum().norm() < 1e-11);
            let pairing = variation_pairing(&f, &u);
            let fd = central_difference(&kind, &v, &y, &u, 1e-6).unwrap();
            assert!((pairing - fd).abs() <= 1e-6 * pairing.abs());
        }
    }

    #[test]
    fn edge_representations() {
        let v = potential();
        let w = IndexBox::centered(9);
        let y = random_field(w, 5, 0.05, 21);
        let u = random_field(w, 5, 1.0, 22);
        let fa = EnergyKind::Atomistic.forces(&v, &y).unwrap();
        let a = variation_pairing(&fa, &u);
        let ea = delta_ea_edge_pairing(&v, &y, &u).unwrap();
        assert!((ea - a).abs() <= 1e-12 * a.abs(), "{ea} {a}");
        let fc = EnergyKind::Continuum.forces(&v, &y).unwrap();
        let c = variation_pairing(&fc, &u);
        let vol = delta_ec_volume_pairing(&v, &y, &u).unwrap();
        assert!((vol - c).abs() <= 1e-12 * c.abs(), "{vol} {c}");
        let edge = delta_ec_edge_pairing(&v, &y, &u).unwrap();
        assert!((edge - c).abs() <= 1e-12 * c.abs(), "{edge} {c}");
    }

    #[test]
    fn patch_test_and_qce_control() {
        let v = make_quadratic([1.0; 6]).unwrap();
        let w = IndexBox::centered(12);
        let p = build_partition(&Geometry::hexagon(6), w).unwrap();
        let r = assign_general(&p, &BTreeMap::new(), 2.0 / 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5 {
            let s = patch_test(&v, &r, &p, random_gradient(&mut rng, 0.2)).unwrap();
            assert!(s.passed(), "{s:?}");
        }
        let f = Mat2::new(1.1, 0.0, 0.0, 1.0);
        // uniform stiffness is a pure nearest-neighbour pair energy and has no QCE ghost forces
        assert!(patch_test(&v, &qce(&p), &p, f).unwrap().max_ghost_force < 1e-14);
        let v = make_quadratic([1.0, 2.0, 3.0, 1.0, 2.0, 3.0]).unwrap();
        let s = patch_test(&v, &qce(&p), &p, f).unwrap();
        assert!(s.max_ghost_force > 1e-3, "{s:?}");
        let x = s.ghost_site.unwrap();
        assert!(p.is_interface(x) || x.neighbours().iter().any(|&z| p.is_interface(z)));
        assert!(s.energy_consistency_passed());
    }

    #[test]
    fn atomistic_forces_vanish_for_homogeneous_states() {
        let v = potential();
        let y = HomogeneousState::new(Mat2::new(1.1, 0.1, -0.05, 0.9), IndexBox::centered(4));
        assert!(EnergyKind::Atomistic.forces(&v, &y).unwrap().max_norm() < 1e-13);
        assert!(EnergyKind::Continuum.forces(&v, &y).unwrap().max_norm() < 1e-13);
        assert!(OMEGA0 > 0.0);
    }
}
