//! Integer geometry of the triangular lattice `L = A Z²` with `a1 = (1, 0)`,
//! `a2 = (1/2, √3/2)`, its six nearest-neighbour directions and the
//! canonical triangulation.
//!
//! All adjacency is exact integer arithmetic on lattice coordinates
//! `(n1, n2)`; real positions are only derived on demand.

use std::fmt;
use std::ops::{Add, Sub};

use crate::{Mat2, Vec2};

pub const SQRT_3: f64 = 1.732_050_807_568_877_2;
/// Volume of the primitive cell.
pub const OMEGA0: f64 = SQRT_3 / 2.0;
/// Area of every triangle of the canonical triangulation.
pub const TRIANGLE_AREA: f64 = OMEGA0 / 2.0;

/// Lattice coordinates of `a_1, …, a_6`.
const OFFSETS: [(i64, i64); 6] = [(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)];

/// A lattice site `x = n1·a1 + n2·a2`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Site {
    pub n1: i64,
    pub n2: i64,
}

impl Site {
    pub const ORIGIN: Site = Site { n1: 0, n2: 0 };

    pub const fn new(n1: i64, n2: i64) -> Self {
        Site { n1, n2 }
    }

    /// Cartesian position in lattice units.
    pub fn position(self) -> Vec2 {
        Vec2::new(self.n1 as f64 + 0.5 * self.n2 as f64, OMEGA0 * self.n2 as f64)
    }

    /// `x + a_j`.
    pub fn step(self, j: Dir) -> Site {
        let (d1, d2) = j.offset();
        Site::new(self.n1 + d1, self.n2 + d2)
    }

    pub fn neighbours(self) -> [Site; 6] {
        Dir::ALL.map(|j| self.step(j))
    }

    /// Graph distance on the triangular lattice.
    pub fn hops(self, other: Site) -> i64 {
        let d1 = other.n1 - self.n1;
        let d2 = other.n2 - self.n2;
        (d1.abs() + d2.abs() + (d1 + d2).abs()) / 2
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.n1, self.n2)
    }
}

impl Add for Site {
    type Output = Site;
    fn add(self, rhs: Site) -> Site {
        Site::new(self.n1 + rhs.n1, self.n2 + rhs.n2)
    }
}

impl Sub for Site {
    type Output = Site;
    fn sub(self, rhs: Site) -> Site {
        Site::new(self.n1 - rhs.n1, self.n2 - rhs.n2)
    }
}

/// Direction index `j`, taken modulo 6 and stored in `{1, …, 6}`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Dir(u8);

impl Dir {
    pub const ALL: [Dir; 6] = [Dir(1), Dir(2), Dir(3), Dir(4), Dir(5), Dir(6)];
    /// The three canonical bond directions `a1, a2, a3`.
    pub const CANONICAL: [Dir; 3] = [Dir(1), Dir(2), Dir(3)];

    pub fn new(j: i64) -> Self {
        Dir(((j - 1).rem_euclid(6) + 1) as u8)
    }

    /// The index `j ∈ {1, …, 6}`.
    pub fn get(self) -> usize {
        self.0 as usize
    }

    /// Zero-based slot `j − 1`, for indexing six-tuples.
    pub fn slot(self) -> usize {
        self.0 as usize - 1
    }

    pub fn from_slot(slot: usize) -> Self {
        Dir::new(slot as i64 + 1)
    }

    pub fn shift(self, k: i64) -> Self {
        Dir::new(self.0 as i64 + k)
    }

    pub fn next(self) -> Self {
        self.shift(1)
    }

    pub fn prev(self) -> Self {
        self.shift(-1)
    }

    pub fn opposite(self) -> Self {
        self.shift(3)
    }

    pub fn offset(self) -> (i64, i64) {
        OFFSETS[self.slot()]
    }

    pub fn vector(self) -> Vec2 {
        let (d1, d2) = self.offset();
        Site::new(d1, d2).position()
    }

    /// Direction whose lattice offset is `(d1, d2)`, if it is a nearest-neighbour bond.
    pub fn from_offset(d1: i64, d2: i64) -> Option<Dir> {
        OFFSETS
            .iter()
            .position(|&o| o == (d1, d2))
            .map(Dir::from_slot)
    }
}

impl fmt::Display for Dir {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}", self.0)
    }
}

/// `a_j` as a Cartesian vector.
pub fn dir(j: i64) -> Vec2 {
    Dir::new(j).vector()
}

/// The six lattice vectors `a = (a_1, …, a_6)`.
pub fn lattice_vectors() -> [Vec2; 6] {
    Dir::ALL.map(Dir::vector)
}

/// `F a = (F a_1, …, F a_6)`.
pub fn deformed_vectors(f: &Mat2) -> [Vec2; 6] {
    Dir::ALL.map(|j| f * j.vector())
}

/// `A = (a1, a2)` as a matrix with the lattice vectors in its columns.
pub fn lattice_matrix() -> Mat2 {
    Mat2::from_columns(&[dir(1), dir(2)])
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Orientation {
    /// `T_{x,1} = conv{x, x+a1, x+a2}`.
    Up,
    /// `T_{x,2} = conv{x, x+a2, x+a3}`.
    Down,
}

/// A triangle of the canonical triangulation, identified by its base vertex
/// and orientation.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triangle {
    pub base: Site,
    pub orient: Orientation,
}

impl Triangle {
    pub const fn up(base: Site) -> Self {
        Triangle { base, orient: Orientation::Up }
    }

    pub const fn down(base: Site) -> Self {
        Triangle { base, orient: Orientation::Down }
    }

    /// `T_{x,j} = conv{x, x+a_j, x+a_{j+1}}`.
    pub fn incident(x: Site, j: Dir) -> Triangle {
        match j.get() {
            1 => Triangle::up(x),
            2 => Triangle::down(x),
            3 => Triangle::up(x.step(Dir(4))),
            4 => Triangle::down(x.step(Dir(5))),
            5 => Triangle::up(x.step(Dir(5))),
            _ => Triangle::down(x.step(Dir(6))),
        }
    }

    /// Vertices in anticlockwise order, starting from the base.
    pub fn vertices(self) -> [Site; 3] {
        let b = self.base;
        match self.orient {
            Orientation::Up => [b, b.step(Dir(1)), b.step(Dir(2))],
            Orientation::Down => [b, b.step(Dir(2)), b.step(Dir(3))],
        }
    }

    /// The three edge directions, anticlockwise with respect to the triangle.
    pub fn anticlockwise_dirs(self) -> [Dir; 3] {
        match self.orient {
            Orientation::Up => [Dir(1), Dir(3), Dir(5)],
            Orientation::Down => [Dir(2), Dir(4), Dir(6)],
        }
    }

    /// `x_{T,j}`: the vertex with `x_{T,j}, x_{T,j} + a_j ∈ T`.
    pub fn edge_site(self, j: Dir) -> Site {
        let b = self.base;
        match (self.orient, j.get()) {
            (Orientation::Up, 1 | 2) => b,
            (Orientation::Up, 3 | 4) => b.step(Dir(1)),
            (Orientation::Up, _) => b.step(Dir(2)),
            (Orientation::Down, 1 | 6) => b.step(Dir(3)),
            (Orientation::Down, 2 | 3) => b,
            (Orientation::Down, _) => b.step(Dir(2)),
        }
    }

    /// The edge of this triangle parallel to `±a_j`.
    pub fn edge(self, j: Dir) -> Edge {
        Edge::new(self.edge_site(j), j)
    }

    pub fn edges(self) -> [Edge; 3] {
        self.anticlockwise_dirs().map(|j| self.edge(j))
    }

    /// `T_j`: the triangle sharing the edge with direction `±a_j`.
    ///
    /// Every triangle has an edge parallel to each of the three bond
    /// directions, so `T_j = T_{j+3}` is defined for all `j`.
    pub fn neighbour(self, j: Dir) -> Triangle {
        let b = self.base;
        let canonical = if j.get() > 3 { j.opposite() } else { j };
        match (self.orient, canonical.get()) {
            (Orientation::Up, 1) => Triangle::down(b.step(Dir(6))),
            (Orientation::Up, 2) => Triangle::down(b),
            (Orientation::Up, _) => Triangle::down(b.step(Dir(1))),
            (Orientation::Down, 1) => Triangle::up(b.step(Dir(3))),
            (Orientation::Down, 2) => Triangle::up(b),
            (Orientation::Down, _) => Triangle::up(b.step(Dir(4))),
        }
    }

    pub fn centroid(self) -> Vec2 {
        let [p, q, r] = self.vertices().map(Site::position);
        (p + q + r) / 3.0
    }
}

impl fmt::Display for Triangle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let o = match self.orient {
            Orientation::Up => "up",
            Orientation::Down => "down",
        };
        write!(f, "{}@{}", o, self.base)
    }
}

/// An undirected bond, stored canonically as `(tail, j)` with `j ∈ {1, 2, 3}`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    tail: Site,
    dir: Dir,
}

impl Edge {
    /// The bond `(x, x + a_j)` in canonical form.
    pub fn new(x: Site, j: Dir) -> Self {
        if j.get() <= 3 {
            Edge { tail: x, dir: j }
        } else {
            Edge { tail: x.step(j), dir: j.opposite() }
        }
    }

    /// Canonical edge joining two neighbouring sites.
    pub fn between(x: Site, y: Site) -> Option<Self> {
        Dir::from_offset(y.n1 - x.n1, y.n2 - x.n2).map(|j| Edge::new(x, j))
    }

    pub fn tail(self) -> Site {
        self.tail
    }

    pub fn dir(self) -> Dir {
        self.dir
    }

    pub fn head(self) -> Site {
        self.tail.step(self.dir)
    }

    pub fn endpoints(self) -> [Site; 2] {
        [self.tail, self.head()]
    }

    /// `m_f`.
    pub fn midpoint(self) -> Vec2 {
        self.tail.position() + 0.5 * self.dir.vector()
    }

    /// The two triangles sharing this edge, `T_{x,j}` and `T_{x,j-1}`.
    pub fn triangles(self) -> [Triangle; 2] {
        [
            Triangle::incident(self.tail, self.dir),
            Triangle::incident(self.tail, self.dir.prev()),
        ]
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}+{}", self.tail, self.dir)
    }
}

/// A rhombic window `n1_min ≤ n1 ≤ n1_max`, `n2_min ≤ n2 ≤ n2_max` of the lattice.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub struct IndexBox {
    pub n1_min: i64,
    pub n1_max: i64,
    pub n2_min: i64,
    pub n2_max: i64,
}

impl IndexBox {
    pub fn new(n1_min: i64, n1_max: i64, n2_min: i64, n2_max: i64) -> Self {
        IndexBox { n1_min, n1_max, n2_min, n2_max }
    }

    /// `|n1|, |n2| ≤ radius`.
    pub fn centered(radius: i64) -> Self {
        IndexBox::new(-radius, radius, -radius, radius)
    }

    /// Smallest centred window containing the Euclidean disc of the given radius
    /// plus `margin` additional hops.
    pub fn covering_disc(radius: f64, margin: i64) -> Self {
        // |x| ≤ r implies |n2| ≤ 2r/√3 and |n1| ≤ r + |n2|/2.
        let n2 = (2.0 * radius / SQRT_3).ceil() as i64;
        let n1 = (radius + 0.5 * n2 as f64).ceil() as i64;
        let r = n1.max(n2) + margin;
        IndexBox::centered(r)
    }

    pub fn is_empty(&self) -> bool {
        self.n1_min > self.n1_max || self.n2_min > self.n2_max
    }

    pub fn width(&self) -> usize {
        (self.n1_max - self.n1_min + 1).max(0) as usize
    }

    pub fn height(&self) -> usize {
        (self.n2_max - self.n2_min + 1).max(0) as usize
    }

    pub fn len(&self) -> usize {
        self.width() * self.height()
    }

    pub fn contains(&self, x: Site) -> bool {
        (self.n1_min..=self.n1_max).contains(&x.n1) && (self.n2_min..=self.n2_max).contains(&x.n2)
    }

    /// Sites at least `k` hops from the outside of the box.
    pub fn shrink(&self, k: i64) -> IndexBox {
        IndexBox::new(self.n1_min + k, self.n1_max - k, self.n2_min + k, self.n2_max - k)
    }

    pub fn grow(&self, k: i64) -> IndexBox {
        self.shrink(-k)
    }

    /// Dense row-major index of a site.
    pub fn index(&self, x: Site) -> Option<usize> {
        if !self.contains(x) {
            return None;
        }
        let i = (x.n1 - self.n1_min) as usize;
        let j = (x.n2 - self.n2_min) as usize;
        Some(j * self.width() + i)
    }

    pub fn site_at(&self, index: usize) -> Site {
        let w = self.width();
        Site::new(self.n1_min + (index % w) as i64, self.n2_min + (index / w) as i64)
    }

    /// Sites in index order.
    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        let b = *self;
        (b.n2_min..=b.n2_max).flat_map(move |n2| (b.n1_min..=b.n1_max).map(move |n1| Site::new(n1, n2)))
    }

    /// Triangles whose base lies in the box.
    pub fn triangles(&self) -> impl Iterator<Item = Triangle> + '_ {
        self.sites().flat_map(|b| [Triangle::up(b), Triangle::down(b)])
    }

    /// Dense index of a triangle whose base lies in the box.
    pub fn triangle_index(&self, t: Triangle) -> Option<usize> {
        self.index(t.base).map(|i| {
            2 * i
                + match t.orient {
                    Orientation::Up => 0,
                    Orientation::Down => 1,
                }
        })
    }

    pub fn triangle_at(&self, index: usize) -> Triangle {
        let b = self.site_at(index / 2);
        if index % 2 == 0 {
            Triangle::up(b)
        } else {
            Triangle::down(b)
        }
    }

    /// Whether all three vertices of `t` lie in the box.
    pub fn contains_triangle(&self, t: Triangle) -> bool {
        t.vertices().iter().all(|&v| self.contains(v))
    }

    /// Canonical edges with both endpoints in the box.
    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        let b = *self;
        self.sites().flat_map(move |x| {
            Dir::CANONICAL
                .into_iter()
                .map(move |j| Edge::new(x, j))
                .filter(move |e| b.contains(e.head()))
        })
    }

    /// Number of hops from `x` to the nearest site outside the box, minus one;
    /// negative outside.
    pub fn depth(&self, x: Site) -> i64 {
        (x.n1 - self.n1_min)
            .min(self.n1_max - x.n1)
            .min(x.n2 - self.n2_min)
            .min(self.n2_max - x.n2)
    }
}

impl fmt::Display for IndexBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}..={}]x[{}..={}]",
            self.n1_min, self.n1_max, self.n2_min, self.n2_max
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::collections::{HashMap, HashSet};

    #[test]
    fn direction_relations() {
        assert_abs_diff_eq!(dir(1), Vec2::new(1.0, 0.0));
        assert_abs_diff_eq!(dir(4), Vec2::new(-1.0, 0.0));
        assert_abs_diff_eq!(dir(2) + dir(6), dir(1), epsilon = 1e-15);
        for j in -6..12 {
            assert_eq!(dir(j + 6), dir(j));
            assert_abs_diff_eq!(dir(j + 3), -dir(j), epsilon = 1e-15);
            assert_abs_diff_eq!(dir(j - 1) + dir(j + 1), dir(j), epsilon = 1e-15);
            assert_abs_diff_eq!(dir(j).norm(), 1.0, epsilon = 1e-15);
        }
        assert_eq!(Dir::new(0), Dir::new(6));
        assert_eq!(Dir::new(-5), Dir::new(1));
    }

    #[test]
    fn incident_triangles_contain_their_defining_vertices() {
        let x = Site::new(2, -3);
        for j in Dir::ALL {
            let t = Triangle::incident(x, j);
            let v: HashSet<Site> = t.vertices().into_iter().collect();
            assert!(v.contains(&x) && v.contains(&x.step(j)) && v.contains(&x.step(j.next())));
        }
        assert_eq!(Triangle::incident(Site::ORIGIN, Dir::new(1)), Triangle::up(Site::ORIGIN));
        assert_eq!(Triangle::incident(Site::ORIGIN, Dir::new(3)), Triangle::up(Site::new(-1, 0)));
    }

    #[test]
    fn six_incident_triangles_are_distinct_and_tile_the_hexagon() {
        let x = Site::new(1, 1);
        let ts: HashSet<Triangle> = Dir::ALL.iter().map(|&j| Triangle::incident(x, j)).collect();
        assert_eq!(ts.len(), 6);
        let area: f64 = ts.len() as f64 * TRIANGLE_AREA;
        // regular hexagon of unit side
        assert_abs_diff_eq!(area, 3.0 * SQRT_3 / 2.0, epsilon = 1e-14);
    }

    #[test]
    fn triangle_area_and_orientation() {
        for t in [Triangle::up(Site::new(3, 1)), Triangle::down(Site::new(-2, 5))] {
            let [p, q, r] = t.vertices().map(Site::position);
            let e1 = q - p;
            let e2 = r - p;
            let signed = 0.5 * (e1.x * e2.y - e1.y * e2.x);
            assert_abs_diff_eq!(signed, TRIANGLE_AREA, epsilon = 1e-15);
            // anticlockwise edge directions match consecutive vertex differences
            let dirs = t.anticlockwise_dirs();
            let verts = t.vertices();
            for k in 0..3 {
                let d = verts[(k + 1) % 3].position() - verts[k].position();
                assert_abs_diff_eq!(d, dirs[k].vector(), epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn edge_sites() {
        let t = Triangle::up(Site::ORIGIN);
        assert_eq!(t.edge_site(Dir::new(1)), Site::ORIGIN);
        assert_eq!(t.edge_site(Dir::new(4)), Site::new(1, 0));
        for t in [Triangle::up(Site::new(4, -1)), Triangle::down(Site::new(-3, 2))] {
            let verts: HashSet<Site> = t.vertices().into_iter().collect();
            for j in Dir::ALL {
                let x = t.edge_site(j);
                assert!(verts.contains(&x) && verts.contains(&x.step(j)));
                assert_eq!(x.step(j), t.edge_site(j.opposite()));
            }
        }
    }

    #[test]
    fn neighbour_triangles() {
        let t = Triangle::up(Site::ORIGIN);
        assert_eq!(t.neighbour(Dir::new(1)), Triangle::down(Site::new(1, -1)));
        for t in [Triangle::up(Site::new(2, 2)), Triangle::down(Site::new(-1, 3))] {
            for j in Dir::ALL {
                let n = t.neighbour(j);
                assert_ne!(n, t);
                assert_eq!(n.neighbour(j), t);
                assert_eq!(t.neighbour(j), t.neighbour(j.opposite()));
                // the shared edge is the a_j edge of both
                assert_eq!(t.edge(j), n.edge(j));
            }
        }
    }

    #[test]
    fn every_edge_is_shared_by_its_two_incident_triangles() {
        let x = Site::new(-2, 1);
        for j in Dir::ALL {
            let e = Edge::new(x, j);
            let [t1, t2] = e.triangles();
            for t in [Triangle::incident(x, j), Triangle::incident(x, j.prev())] {
                assert!(t.edges().contains(&e));
            }
            let expect: HashSet<Triangle> = [Triangle::incident(x, j), Triangle::incident(x, j.prev())].into();
            assert_eq!(expect, [t1, t2].into());
            assert_ne!(t1, t2);
        }
    }

    #[test]
    fn box_enumeration_counts() {
        let b = IndexBox::new(-3, 4, -2, 2);
        let tris: Vec<Triangle> = b.triangles().collect();
        assert_eq!(tris.len(), 2 * b.len());
        let unique: HashSet<Triangle> = tris.iter().copied().collect();
        assert_eq!(unique.len(), tris.len());
        // each canonical edge counted once; edges appear in exactly two triangles
        let mut count: HashMap<Edge, usize> = HashMap::new();
        for t in b.grow(2).triangles() {
            for e in t.edges() {
                *count.entry(e).or_default() += 1;
            }
        }
        for e in b.edges() {
            assert_eq!(count[&e], 2);
        }
        for (i, x) in b.sites().enumerate() {
            assert_eq!(b.index(x), Some(i));
            assert_eq!(b.site_at(i), x);
        }
        for (i, t) in tris.iter().enumerate() {
            assert_eq!(b.triangle_index(*t), Some(i));
            assert_eq!(b.triangle_at(i), *t);
        }
    }

    #[test]
    fn hop_distance() {
        let o = Site::ORIGIN;
        for j in Dir::ALL {
            assert_eq!(o.hops(o.step(j)), 1);
        }
        assert_eq!(o.hops(Site::new(1, 1)), 2);
        assert_eq!(o.hops(Site::new(3, -3)), 3);
    }
}
