//! Atomistic / interface / continuum decomposition of the lattice.

use std::collections::{BTreeSet, HashSet};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::lattice::{Dir, Edge, IndexBox, Site, Triangle};
use crate::{Error, Result, Vec2};

/// Minimum number of hops between a bounded atomistic region and the outside of the window.
pub const REGION_MARGIN: i64 = 3;

/// A description of the atomistic region `A` as a predicate on the infinite lattice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Geometry {
    /// An explicit finite list of sites `[[n1, n2], …]`.
    Sites { sites: Vec<[i64; 2]> },
    /// `{ p·n1 + q·n2 < offset }`; the default `(0, 1, 0)` is `{x2 < 0}`.
    HalfPlane {
        #[serde(default)]
        p: i64,
        #[serde(default = "one")]
        q: i64,
        #[serde(default)]
        offset: i64,
    },
    /// Sites within `radius` hops of `center`.
    Hexagon {
        radius: i64,
        #[serde(default)]
        center: [i64; 2],
    },
    /// Sites inside or on a closed polygon given by Cartesian vertices.
    Polygon { vertices: Vec<[f64; 2]> },
    Intersection { parts: Vec<Geometry> },
    Union { parts: Vec<Geometry> },
    Complement { inner: Box<Geometry> },
}

fn one() -> i64 {
    1
}

impl Geometry {
    pub fn half_plane(p: i64, q: i64, offset: i64) -> Self {
        Geometry::HalfPlane { p, q, offset }
    }

    /// `A = {x2 < 0}`.
    pub fn flat() -> Self {
        Geometry::half_plane(0, 1, 0)
    }

    pub fn hexagon(radius: i64) -> Self {
        Geometry::Hexagon { radius, center: [0, 0] }
    }

    pub fn sites(sites: impl IntoIterator<Item = Site>) -> Self {
        Geometry::Sites { sites: sites.into_iter().map(|x| [x.n1, x.n2]).collect() }
    }

    pub fn intersection(parts: Vec<Geometry>) -> Self {
        Geometry::Intersection { parts }
    }

    pub fn complement(inner: Geometry) -> Self {
        Geometry::Complement { inner: Box::new(inner) }
    }

    pub fn contains(&self, x: Site) -> bool {
        match self {
            Geometry::Sites { sites } => sites.iter().any(|s| s[0] == x.n1 && s[1] == x.n2),
            Geometry::HalfPlane { p, q, offset } => p * x.n1 + q * x.n2 < *offset,
            Geometry::Hexagon { radius, center } => x.hops(Site::new(center[0], center[1])) <= *radius,
            Geometry::Polygon { vertices } => in_polygon(vertices, x.position()),
            Geometry::Intersection { parts } => parts.iter().all(|g| g.contains(x)),
            Geometry::Union { parts } => parts.iter().any(|g| g.contains(x)),
            Geometry::Complement { inner } => !inner.contains(x),
        }
    }

    /// Whether the region is known to be finite.
    pub fn is_bounded(&self) -> bool {
        match self {
            Geometry::Sites { .. } | Geometry::Hexagon { .. } | Geometry::Polygon { .. } => true,
            Geometry::HalfPlane { .. } | Geometry::Complement { .. } => false,
            Geometry::Intersection { parts } => parts.iter().any(Geometry::is_bounded),
            Geometry::Union { parts } => parts.iter().all(Geometry::is_bounded),
        }
    }

    /// The same region moved by `shift`.
    pub fn translated(&self, shift: Site) -> Geometry {
        match self {
            Geometry::Sites { sites } => Geometry::Sites {
                sites: sites.iter().map(|s| [s[0] + shift.n1, s[1] + shift.n2]).collect(),
            },
            Geometry::HalfPlane { p, q, offset } => Geometry::HalfPlane {
                p: *p,
                q: *q,
                offset: offset + p * shift.n1 + q * shift.n2,
            },
            Geometry::Hexagon { radius, center } => Geometry::Hexagon {
                radius: *radius,
                center: [center[0] + shift.n1, center[1] + shift.n2],
            },
            Geometry::Polygon { vertices } => {
                let d = shift.position();
                Geometry::Polygon { vertices: vertices.iter().map(|v| [v[0] + d.x, v[1] + d.y]).collect() }
            }
            Geometry::Intersection { parts } => {
                Geometry::Intersection { parts: parts.iter().map(|g| g.translated(shift)).collect() }
            }
            Geometry::Union { parts } => Geometry::Union { parts: parts.iter().map(|g| g.translated(shift)).collect() },
            Geometry::Complement { inner } => Geometry::complement(inner.translated(shift)),
        }
    }
}

/// Closed point-in-polygon test with a small tolerance for points on edges.
fn in_polygon(vertices: &[[f64; 2]], p: Vec2) -> bool {
    let n = vertices.len();
    if n < 3 {
        return false;
    }
    let tol = 1e-9;
    let mut inside = false;
    for k in 0..n {
        let a = Vec2::new(vertices[k][0], vertices[k][1]);
        let b = Vec2::new(vertices[(k + 1) % n][0], vertices[(k + 1) % n][1]);
        let ab = b - a;
        let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
        if (a + ab * t - p).norm() <= tol {
            return true;
        }
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SiteClass {
    Atomistic,
    Interface,
    Continuum,
}

impl SiteClass {
    pub fn label(self) -> &'static str {
        match self {
            SiteClass::Atomistic => "A",
            SiteClass::Interface => "I",
            SiteClass::Continuum => "C",
        }
    }
}

impl fmt::Display for SiteClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Classifies a finite set of sites: `A` if every one is atomistic, `C` if every one is continuum.
fn combine(classes: impl IntoIterator<Item = SiteClass>) -> SiteClass {
    let mut all_a = true;
    let mut all_c = true;
    for c in classes {
        all_a &= c == SiteClass::Atomistic;
        all_c &= c == SiteClass::Continuum;
    }
    match (all_a, all_c) {
        (true, _) => SiteClass::Atomistic,
        (_, true) => SiteClass::Continuum,
        _ => SiteClass::Interface,
    }
}

/// The decomposition `L = A ∪ I ∪ C` restricted to a window.
#[derive(Clone, Debug)]
pub struct RegionPartition {
    window: IndexBox,
    geometry: Geometry,
    /// Classes on `window.grow(2)`.
    cache_box: IndexBox,
    classes: Vec<SiteClass>,
}

/// Builds the partition induced by `geometry` on `window`.
pub fn build_partition(geometry: &Geometry, window: IndexBox) -> Result<RegionPartition> {
    let cache_box = window.grow(2);
    let classes = cache_box.sites().map(|x| classify(geometry, x)).collect();
    let p = RegionPartition { window, geometry: geometry.clone(), cache_box, classes };
    if geometry.is_bounded() {
        let inner = window.shrink(REGION_MARGIN);
        if let Some(x) = p.window.grow(2).sites().find(|&x| geometry.contains(x) && !inner.contains(x)) {
            return Err(Error::TooCloseToBoundary(x));
        }
    }
    Ok(p)
}

fn classify(geometry: &Geometry, x: Site) -> SiteClass {
    if geometry.contains(x) {
        SiteClass::Atomistic
    } else if x.neighbours().iter().any(|&z| geometry.contains(z)) {
        SiteClass::Interface
    } else {
        SiteClass::Continuum
    }
}

impl RegionPartition {
    pub fn window(&self) -> IndexBox {
        self.window
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn class(&self, x: Site) -> SiteClass {
        match self.cache_box.index(x) {
            Some(i) => self.classes[i],
            None => classify(&self.geometry, x),
        }
    }

    pub fn is_atomistic(&self, x: Site) -> bool {
        self.class(x) == SiteClass::Atomistic
    }

    pub fn is_interface(&self, x: Site) -> bool {
        self.class(x) == SiteClass::Interface
    }

    pub fn is_continuum(&self, x: Site) -> bool {
        self.class(x) == SiteClass::Continuum
    }

    pub fn triangle_class(&self, t: Triangle) -> SiteClass {
        combine(t.vertices().map(|x| self.class(x)))
    }

    pub fn edge_class(&self, e: Edge) -> SiteClass {
        combine(e.endpoints().map(|x| self.class(x)))
    }

    /// Sites of the window in a given class.
    pub fn sites_in(&self, class: SiteClass) -> Vec<Site> {
        self.window.sites().filter(|&x| self.class(x) == class).collect()
    }

    pub fn atomistic(&self) -> Vec<Site> {
        self.sites_in(SiteClass::Atomistic)
    }

    pub fn interface(&self) -> Vec<Site> {
        self.sites_in(SiteClass::Interface)
    }

    /// Triangles with base in `bases` in a given class.
    pub fn triangles_in(&self, bases: IndexBox, class: SiteClass) -> Vec<Triangle> {
        bases.triangles().filter(|&t| self.triangle_class(t) == class).collect()
    }

    /// Canonical edges with both endpoints in the window in a given class.
    pub fn edges_in(&self, class: SiteClass) -> Vec<Edge> {
        self.window.edges().filter(|&e| self.edge_class(e) == class).collect()
    }

    /// `I^ext`: sites of the window within one hop of `I`.
    pub fn interface_ext(&self) -> Vec<Site> {
        self.window
            .sites()
            .filter(|&x| self.is_interface(x) || x.neighbours().iter().any(|&z| self.is_interface(z)))
            .collect()
    }

    /// Directions `j` with `x + a_j ∈ I`.
    pub fn interface_neighbours(&self, x: Site) -> Vec<Dir> {
        Dir::ALL.into_iter().filter(|&j| self.is_interface(x.step(j))).collect()
    }

    /// Interface sites whose two interface neighbours are not collinear with them.
    pub fn corner_sites(&self) -> Vec<Site> {
        self.interface()
            .into_iter()
            .filter(|&x| {
                let n = self.interface_neighbours(x);
                n.len() == 2 && n[1] != n[0].opposite()
            })
            .collect()
    }

    /// `n1,n2,class` rows for every site of the window.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n1,n2,class\n");
        for x in self.window.sites() {
            let _ = writeln!(s, "{},{},{}", x.n1, x.n2, self.class(x));
        }
        s
    }
}

/// Outcome of [`check_admissible`].
#[derive(Clone, Debug, PartialEq)]
pub struct AdmissibilityReport {
    pub checked: usize,
    /// Interface sites without exactly two interface neighbours and a continuum neighbour.
    pub violations: Vec<Site>,
    /// Pairs of adjacent corner sites (accepted, but flagged).
    pub adjacent_corners: Vec<(Site, Site)>,
}

impl AdmissibilityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for AdmissibilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passed() {
            write!(f, "PASS: {} interface sites admissible", self.checked)?;
        } else {
            write!(f, "FAIL: {} of {} interface sites violate the interface assumption:", self.violations.len(), self.checked)?;
            for x in &self.violations {
                write!(f, " {x}")?;
            }
        }
        if !self.adjacent_corners.is_empty() {
            write!(f, " (warning: {} adjacent corner pairs)", self.adjacent_corners.len())?;
        }
        Ok(())
    }
}

/// Every interface site must have exactly two interface neighbours and at least one continuum neighbour.
pub fn check_admissible(p: &RegionPartition) -> AdmissibilityReport {
    let interface = p.interface();
    let violations = interface
        .iter()
        .copied()
        .filter(|&x| {
            let n = x.neighbours();
            let i = n.iter().filter(|&&z| p.is_interface(z)).count();
            let c = n.iter().filter(|&&z| p.is_continuum(z)).count();
            i != 2 || c == 0
        })
        .collect();
    let corners: BTreeSet<Site> = p.corner_sites().into_iter().collect();
    let mut adjacent_corners = Vec::new();
    for &x in &corners {
        for z in x.neighbours() {
            if x < z && corners.contains(&z) {
                adjacent_corners.push((x, z));
            }
        }
    }
    AdmissibilityReport { checked: interface.len(), violations, adjacent_corners }
}

/// Whether all interface sites of the window lie on a single lattice line.
pub fn is_planar(p: &RegionPartition) -> bool {
    let interface = p.interface();
    let Some(first) = interface.first() else {
        return false;
    };
    let keys: [fn(Site) -> i64; 3] = [|x| x.n2, |x| x.n1, |x| x.n1 + x.n2];
    keys.iter().any(|k| interface.iter().all(|&x| k(x) == k(*first)))
}

/// The in-line direction `k ∈ {1,2,3}` of a planar interface.
pub fn planar_direction(p: &RegionPartition) -> Option<Dir> {
    let interface = p.interface();
    let set: HashSet<Site> = interface.iter().copied().collect();
    if !is_planar(p) {
        return None;
    }
    Dir::CANONICAL
        .into_iter()
        .find(|&j| interface.iter().any(|x| set.contains(&x.step(j))))
}

/// Named local interface configurations.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CornerCase {
    /// Straight interface.
    Flat,
    /// A single 60° turn, concave seen from `A` (`A` is a 120° wedge).
    Concave,
    /// A single 60° turn, convex seen from `A` (`A` is the complement of a 120° wedge).
    Convex,
    /// Two adjacent turns enclosing a 60° atomistic tip.
    AtomisticTip,
    /// A 60° continuum wedge with its tip cut off.
    BluntContinuumTip,
    /// Two opposite turns forming a step.
    Step,
}

impl CornerCase {
    pub const ALL: [CornerCase; 6] = [
        CornerCase::Flat,
        CornerCase::Concave,
        CornerCase::Convex,
        CornerCase::AtomisticTip,
        CornerCase::BluntContinuumTip,
        CornerCase::Step,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CornerCase::Flat => "flat",
            CornerCase::Concave => "concave",
            CornerCase::Convex => "convex",
            CornerCase::AtomisticTip => "atomistic-tip",
            CornerCase::BluntContinuumTip => "blunt-continuum-tip",
            CornerCase::Step => "step",
        }
    }

    pub fn parse(s: &str) -> Option<CornerCase> {
        CornerCase::ALL.into_iter().find(|c| c.name() == s)
    }

    /// The geometry, with its corner close to the origin.
    pub fn geometry(self) -> Geometry {
        let hp = Geometry::half_plane;
        match self {
            CornerCase::Flat => Geometry::flat(),
            CornerCase::Concave => Geometry::intersection(vec![hp(0, 1, 1), hp(1, 1, 1)]),
            CornerCase::Convex => Geometry::complement(Geometry::intersection(vec![hp(0, 1, 1), hp(1, 1, 1)])),
            CornerCase::AtomisticTip => Geometry::intersection(vec![hp(-1, 0, 1), hp(0, -1, 1)]),
            CornerCase::BluntContinuumTip => {
                Geometry::complement(Geometry::intersection(vec![hp(-1, 0, 1), hp(0, -1, 1), hp(-1, -1, 0)]))
            }
            CornerCase::Step => Geometry::Union {
                parts: vec![hp(0, 1, 0), Geometry::intersection(vec![hp(0, 1, 3), hp(1, 1, 0)])],
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring(radius: i64) -> usize {
        if radius == 0 {
            1
        } else {
            6 * radius as usize
        }
    }

    #[test]
    fn single_site_interface_is_its_neighbourhood() {
        let p = build_partition(&Geometry::sites([Site::ORIGIN]), IndexBox::centered(6)).unwrap();
        let i: HashSet<Site> = p.interface().into_iter().collect();
        let expect: HashSet<Site> = Site::ORIGIN.neighbours().into_iter().collect();
        assert_eq!(i, expect);
        // the six-site ring around a single atom is itself admissible
        assert!(check_admissible(&p).passed());
    }

    #[test]
    fn half_plane_interface() {
        let w = IndexBox::centered(8);
        let p = build_partition(&Geometry::flat(), w).unwrap();
        for x in w.sites() {
            let expected = match x.n2 {
                n if n < 0 => SiteClass::Atomistic,
                0 => SiteClass::Interface,
                _ => SiteClass::Continuum,
            };
            assert_eq!(p.class(x), expected);
        }
        assert!(check_admissible(&p).passed());
        assert!(is_planar(&p));
        assert_eq!(planar_direction(&p), Some(Dir::new(1)));
    }

    #[test]
    fn hexagon_interface_is_the_next_ring() {
        let p = build_partition(&Geometry::hexagon(3), IndexBox::centered(10)).unwrap();
        assert_eq!(p.interface().len(), ring(4));
        assert_eq!(p.interface().len(), 24);
        assert!(p.interface().iter().all(|x| x.hops(Site::ORIGIN) == 4));
        assert!(check_admissible(&p).passed());
        assert!(!is_planar(&p));
        assert_eq!(p.corner_sites().len(), 6);
    }

    #[test]
    fn overlapping_rings_are_inadmissible() {
        let p = build_partition(&Geometry::sites([Site::ORIGIN, Site::new(3, 0)]), IndexBox::centered(9)).unwrap();
        let r = check_admissible(&p);
        assert!(!r.passed());
        assert!(!r.violations.is_empty());
    }

    #[test]
    fn classes_partition_triangles_and_edges() {
        let w = IndexBox::centered(9);
        let p = build_partition(&Geometry::hexagon(3), w).unwrap();
        let bases = w.shrink(1);
        let total: usize = [SiteClass::Atomistic, SiteClass::Interface, SiteClass::Continuum]
            .iter()
            .map(|&c| p.triangles_in(bases, c).len())
            .sum();
        assert_eq!(total, 2 * bases.len());
        for t in bases.triangles() {
            let touches_i = t.vertices().iter().any(|&x| p.is_interface(x));
            if touches_i {
                assert_eq!(p.triangle_class(t), SiteClass::Interface);
            }
        }
        let ext: HashSet<Site> = p.interface_ext().into_iter().collect();
        for t in p.triangles_in(bases, SiteClass::Interface) {
            assert!(t.vertices().iter().all(|x| ext.contains(x)));
        }
    }

    #[test]
    fn bounded_regions_must_keep_away_from_the_boundary() {
        let err = build_partition(&Geometry::hexagon(5), IndexBox::centered(7)).unwrap_err();
        assert!(matches!(err, Error::TooCloseToBoundary(_)));
        assert!(build_partition(&Geometry::hexagon(4), IndexBox::centered(7)).is_ok());
    }

    #[test]
    fn corner_catalog_is_admissible_and_non_planar() {
        let w = IndexBox::centered(12);
        for case in CornerCase::ALL {
            let p = build_partition(&case.geometry(), w).unwrap();
            assert!(check_admissible(&p).passed(), "{}: {}", case.name(), check_admissible(&p));
            assert_eq!(is_planar(&p), case == CornerCase::Flat, "{}", case.name());
        }
    }

    #[test]
    fn sharp_continuum_wedge_is_inadmissible() {
        let hp = Geometry::half_plane;
        let g = Geometry::complement(Geometry::intersection(vec![hp(-1, 0, 1), hp(0, -1, 1)]));
        let p = build_partition(&g, IndexBox::centered(8)).unwrap();
        assert!(!check_admissible(&p).passed());
    }

    #[test]
    fn polygon_rasterisation() {
        let tri = Geometry::Polygon { vertices: vec![[-3.0, -2.0], [3.0, -2.0], [0.0, 3.0]] };
        assert!(tri.contains(Site::ORIGIN));
        assert!(!tri.contains(Site::new(5, 0)));
        assert!(tri.contains(Site::new(-2, 0)) == in_polygon(&[[-3.0, -2.0], [3.0, -2.0], [0.0, 3.0]], Site::new(-2, 0).position()));
    }

    #[test]
    fn csv_lists_every_window_site() {
        let w = IndexBox::centered(5);
        let p = build_partition(&Geometry::hexagon(1), w).unwrap();
        let csv = p.to_csv();
        assert_eq!(csv.lines().count(), 1 + w.len());
        assert!(csv.contains("0,0,A"));
        assert!(csv.contains("2,0,I"));
        assert!(csv.contains("3,0,C"));
    }
}
