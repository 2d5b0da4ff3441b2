//! Node sets, nearest-neighbour search and the distance measures that drive
//! degree adaptivity (fill distance, separation distance, mesh ratio).

mod generate;
mod io;
mod kdtree;

pub use generate::{
    generate_nodes, sine_squash, GeneratorKind, GeneratorSpec, PeakParams, PeakSampler,
};
pub use io::{read_nodes_csv, write_nodes_csv};
pub use kdtree::KdTree;

use crate::error::{Error, Result};

/// A point in the plane.
pub type Point = [f64; 2];

/// Boundary-tag tolerance: a boundary node must sit this close to its edge.
pub const BOUNDARY_TOL: f64 = 1e-12;

#[inline]
pub fn dist2(a: &Point, b: &Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

#[inline]
pub fn dist(a: &Point, b: &Point) -> f64 {
    dist2(a, b).sqrt()
}

/// Axis-aligned rectangle `[x_min, x_max] × [y_min, y_max]`.
///
/// Edges are numbered counter-clockwise starting at the bottom:
/// 0 is `y = y_min`, 1 is `x = x_max`, 2 is `y = y_max`, 3 is `x = x_min`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        if !(x_min < x_max && y_min < y_max) || ![x_min, x_max, y_min, y_max].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "degenerate rectangle [{x_min}, {x_max}] x [{y_min}, {y_max}]"
            )));
        }
        Ok(Self { x_min, x_max, y_min, y_max })
    }

    pub fn unit_square() -> Self {
        Self { x_min: 0.0, x_max: 1.0, y_min: 0.0, y_max: 1.0 }
    }

    /// `(-1, 1)²`
    pub fn bi_unit_square() -> Self {
        Self { x_min: -1.0, x_max: 1.0, y_min: -1.0, y_max: 1.0 }
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: &Point) -> bool {
        p[0] >= self.x_min && p[0] <= self.x_max && p[1] >= self.y_min && p[1] <= self.y_max
    }

    /// Distance from an interior point to the nearest edge.
    pub fn distance_to_boundary(&self, p: &Point) -> f64 {
        (p[0] - self.x_min)
            .min(self.x_max - p[0])
            .min(p[1] - self.y_min)
            .min(self.y_max - p[1])
    }

    /// Edges the point lies on (within [`BOUNDARY_TOL`]). Corners lie on two.
    pub fn edges_containing(&self, p: &Point) -> Vec<u8> {
        let mut edges = Vec::with_capacity(2);
        if (p[1] - self.y_min).abs() <= BOUNDARY_TOL {
            edges.push(0);
        }
        if (p[0] - self.x_max).abs() <= BOUNDARY_TOL {
            edges.push(1);
        }
        if (p[1] - self.y_max).abs() <= BOUNDARY_TOL {
            edges.push(2);
        }
        if (p[0] - self.x_min).abs() <= BOUNDARY_TOL {
            edges.push(3);
        }
        edges
    }

    pub fn outward_normal(edge: u8) -> Point {
        match edge {
            0 => [0.0, -1.0],
            1 => [1.0, 0.0],
            2 => [0.0, 1.0],
            _ => [-1.0, 0.0],
        }
    }
}

/// Interior / boundary classification of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Interior,
    /// Edge id as numbered by [`Rect`].
    Boundary(u8),
}

impl Role {
    pub fn is_boundary(&self) -> bool {
        matches!(self, Role::Boundary(_))
    }

    /// `-1` for interior nodes, the edge id otherwise.
    pub fn segment(&self) -> i32 {
        match self {
            Role::Interior => -1,
            Role::Boundary(s) => i32::from(*s),
        }
    }
}

/// Ordered scattered nodes with their roles and the enclosing rectangle.
#[derive(Debug, Clone)]
pub struct NodeSet {
    points: Vec<Point>,
    roles: Vec<Role>,
    domain: Rect,
}

impl NodeSet {
    /// Validates the node-set invariants: every point inside the closed
    /// domain, no coincident points, boundary nodes on their tagged edge.
    pub fn new(points: Vec<Point>, roles: Vec<Role>, domain: Rect) -> Result<Self> {
        if points.len() != roles.len() {
            return Err(Error::InvalidInput(format!(
                "{} points but {} roles",
                points.len(),
                roles.len()
            )));
        }
        for (i, (p, role)) in points.iter().zip(&roles).enumerate() {
            if !p[0].is_finite() || !p[1].is_finite() || !domain.contains(p) {
                return Err(Error::InvalidInput(format!("node {i} at {p:?} lies outside the domain")));
            }
            if let Role::Boundary(seg) = role {
                if *seg > 3 || !domain.edges_containing(p).contains(seg) {
                    return Err(Error::InvalidInput(format!(
                        "node {i} at {p:?} is not on boundary segment {seg}"
                    )));
                }
            }
        }
        let set = Self { points, roles, domain };
        if set.len() >= 2 {
            let tree = KdTree::new(&set.points);
            for (i, p) in set.points.iter().enumerate() {
                let nn = tree.knn(p, 2)?;
                let other = if nn[0].0 == i { nn[1] } else { nn[0] };
                if other.1 == 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "nodes {i} and {} coincide at {p:?}",
                        other.0
                    )));
                }
            }
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn roles(&self) -> &[Role] {
        &self.roles
    }

    pub fn point(&self, i: usize) -> Point {
        self.points[i]
    }

    pub fn role(&self, i: usize) -> Role {
        self.roles[i]
    }

    pub fn domain(&self) -> &Rect {
        &self.domain
    }

    pub fn interior_count(&self) -> usize {
        self.roles.iter().filter(|r| !r.is_boundary()).count()
    }

    pub fn boundary_count(&self) -> usize {
        self.len() - self.interior_count()
    }

    /// Nodes reordered by `perm` (new node `i` is old node `perm[i]`).
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.len()];
        if perm.len() != self.len() || perm.iter().any(|&j| j >= self.len() || std::mem::replace(&mut seen[j], true)) {
            return Err(Error::InvalidInput("not a permutation of the node indices".into()));
        }
        Ok(Self {
            points: perm.iter().map(|&j| self.points[j]).collect(),
            roles: perm.iter().map(|&j| self.roles[j]).collect(),
            domain: self.domain,
        })
    }

    /// Effective fill distance `(area / N)^{1/2}` of this set.
    pub fn effective_fill_distance(&self) -> Result<f64> {
        effective_fill_distance(self.domain.area(), self.len(), 2)
    }

    /// Reference spacing `area / √N` used by the degree rule.
    pub fn degree_reference_spacing(&self) -> Result<f64> {
        degree_reference_spacing(self.domain.area(), self.len())
    }
}

/// Largest distance from a point of a `resolution × resolution` grid over the
/// domain to its nearest node, together with the maximizing grid point.
pub fn fill_distance_argmax(nodes: &NodeSet, resolution: usize) -> Result<(f64, Point)> {
    if nodes.is_empty() {
        return Err(Error::EmptyNodeSet);
    }
    if resolution < 2 {
        return Err(Error::InvalidInput("fill-distance resolution must be at least 2".into()));
    }
    let tree = KdTree::new(nodes.points());
    let d = nodes.domain();
    let step = |lo: f64, hi: f64, i: usize| {
        if i == resolution - 1 {
            hi
        } else {
            lo + (hi - lo) * i as f64 / (resolution - 1) as f64
        }
    };
    let mut best = (f64::NEG_INFINITY, [0.0, 0.0]);
    for j in 0..resolution {
        let y = step(d.y_min, d.y_max, j);
        for i in 0..resolution {
            let q = [step(d.x_min, d.x_max, i), y];
            let (_, dq) = tree.nearest(&q);
            if dq > best.0 {
                best = (dq, q);
            }
        }
    }
    Ok(best)
}

/// Fill distance `sup_{x∈Ω} min_j ‖x − x_j‖`, with the supremum taken over a
/// `resolution × resolution` evaluation grid.
pub fn fill_distance(nodes: &NodeSet, resolution: usize) -> Result<f64> {
    fill_distance_argmax(nodes, resolution).map(|(h, _)| h)
}

/// Half the minimum pairwise node distance.
pub fn separation_distance(nodes: &NodeSet) -> Result<f64> {
    separation_of_points(nodes.points())
}

pub(crate) fn separation_of_points(points: &[Point]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::TooFewNodes { needed: 2, got: points.len() });
    }
    let tree = KdTree::new(points);
    let mut min_d2 = f64::INFINITY;
    for (i, p) in points.iter().enumerate() {
        for (j, _) in tree.knn(p, 2)? {
            if j != i {
                min_d2 = min_d2.min(dist2(p, &points[j]));
            }
        }
    }
    Ok(0.5 * min_d2.sqrt())
}

/// `fill_distance / separation_distance`.
pub fn mesh_ratio(nodes: &NodeSet, resolution: usize) -> Result<f64> {
    let q = separation_distance(nodes)?;
    let h = fill_distance(nodes, resolution)?;
    Ok(h / q)
}

/// `(volume / n)^{1/d}`: the spacing an `n`-point uniform set would have.
pub fn effective_fill_distance(volume: f64, n: usize, d: u32) -> Result<f64> {
    if !(volume > 0.0) || !volume.is_finite() {
        return Err(Error::InvalidInput(format!("volume must be positive, got {volume}")));
    }
    if n == 0 {
        return Err(Error::InvalidInput("node count must be positive".into()));
    }
    if !(1..=3).contains(&d) {
        return Err(Error::InvalidInput(format!("dimension must be 1, 2 or 3, got {d}")));
    }
    Ok((volume / n as f64).powf(1.0 / f64::from(d)))
}

/// `volume / √n`, the spacing the adaptive degree rule compares against. Equal
/// to the effective fill distance on a unit-area domain.
pub fn degree_reference_spacing(volume: f64, n: usize) -> Result<f64> {
    let h = effective_fill_distance(volume, n, 2)?;
    Ok(h * volume.sqrt())
}

/// Local fill-distance estimate of a stencil: the largest distance from any
/// member to its nearest other member.
pub fn local_fill_distance(stencil: &[Point]) -> Result<f64> {
    if stencil.len() < 2 {
        return Err(Error::TooFewNodes { needed: 2, got: stencil.len() });
    }
    let mut worst = 0.0_f64;
    for (i, p) in stencil.iter().enumerate() {
        let nearest = stencil
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, q)| dist2(p, q))
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(nearest);
    }
    Ok(worst.sqrt())
}
