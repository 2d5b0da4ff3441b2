//! Node generators: tensor lattices, Halton sets, the sine-squash transform
//! and variable-density Poisson-disk sampling around a peak.

use std::f64::consts::FRAC_PI_2;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{dist, KdTree, NodeSet, Point, Rect, Role};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    TensorGrid,
    Halton,
    SineSquash,
    PeakAdapted,
}

impl FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tensor-grid" => Ok(Self::TensorGrid),
            "halton" => Ok(Self::Halton),
            "sine-squash" => Ok(Self::SineSquash),
            "peak-adapted" => Ok(Self::PeakAdapted),
            other => Err(Error::InvalidInput(format!("unknown generator kind '{other}'"))),
        }
    }
}

/// Spacing function `r(x) = r_min + (r_max − r_min)·min(1, ‖x − x_peak‖ / R)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakParams {
    pub x_peak: Point,
    pub r_min: f64,
    pub r_max: f64,
    #[serde(rename = "R")]
    pub falloff: f64,
}

impl PeakParams {
    fn validate(&self) -> Result<()> {
        if !(self.r_min > 0.0 && self.r_max >= self.r_min && self.falloff > 0.0) {
            return Err(Error::InvalidInput(format!(
                "peak params need 0 < r_min <= r_max and R > 0, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn spacing(&self, p: &Point) -> f64 {
        let t = (dist(p, &self.x_peak) / self.falloff).min(1.0);
        self.r_min + (self.r_max - self.r_min) * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<PeakParams>,
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind) -> Self {
        Self { kind, params: None }
    }

    pub fn peak(params: PeakParams) -> Self {
        Self { kind: GeneratorKind::PeakAdapted, params: Some(params) }
    }
}

/// Generates a node set of (about) `n_target` nodes. Lattices hit the target
/// exactly when it factors into a lattice matching the domain's aspect ratio;
/// Halton and peak-adapted sets always hit it exactly.
pub fn generate_nodes(spec: &GeneratorSpec, n_target: usize, domain: Rect, seed: u64) -> Result<NodeSet> {
    if n_target < 9 {
        return Err(Error::InvalidInput(format!("n_target must be at least 9, got {n_target}")));
    }
    match spec.kind {
        GeneratorKind::TensorGrid => tensor_grid(n_target, domain),
        GeneratorKind::SineSquash => {
            let grid = tensor_grid(n_target, domain)?;
            squash_set(&grid)
        }
        GeneratorKind::Halton => halton_set(n_target, domain),
        GeneratorKind::PeakAdapted => {
            let params = spec
                .params
                .ok_or_else(|| Error::InvalidInput("peak-adapted generator needs params".into()))?;
            PeakSampler::fit(params, domain, n_target, seed).map(|(nodes, _)| nodes)
        }
    }
}

/// Counter-clockwise edge ownership: each corner belongs to the edge it starts.
fn edge_tag(r: &Rect, p: &Point) -> Option<u8> {
    if p[1] == r.y_min && p[0] < r.x_max {
        Some(0)
    } else if p[0] == r.x_max && p[1] < r.y_max {
        Some(1)
    } else if p[1] == r.y_max && p[0] > r.x_min {
        Some(2)
    } else if p[0] == r.x_min && p[1] > r.y_min {
        Some(3)
    } else {
        None
    }
}

fn role_of(r: &Rect, p: &Point) -> Role {
    edge_tag(r, p).map_or(Role::Interior, Role::Boundary)
}

fn lattice_coord(lo: f64, hi: f64, i: usize, n: usize) -> f64 {
    if i + 1 == n {
        hi
    } else {
        lo + (hi - lo) * i as f64 / (n - 1) as f64
    }
}

fn lattice_shape(n_target: usize, domain: &Rect) -> (usize, usize) {
    let aspect = domain.width() / domain.height();
    let nx = ((n_target as f64 * aspect).sqrt().round() as usize).max(2);
    let ny = ((n_target as f64 / nx as f64).round() as usize).max(2);
    (nx, ny)
}

fn tensor_grid(n_target: usize, domain: Rect) -> Result<NodeSet> {
    let (nx, ny) = lattice_shape(n_target, &domain);
    let mut points = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        let y = lattice_coord(domain.y_min, domain.y_max, j, ny);
        for i in 0..nx {
            points.push([lattice_coord(domain.x_min, domain.x_max, i, nx), y]);
        }
    }
    let roles = points.iter().map(|p| role_of(&domain, p)).collect();
    NodeSet::new(points, roles, domain)
}

/// `z ↦ sin(πz/2)` on `[-1, 1]`; clusters points towards ±1.
pub fn sine_squash(z: f64) -> f64 {
    (FRAC_PI_2 * z).sin()
}

fn squash_coord(v: f64, lo: f64, hi: f64) -> f64 {
    if v == lo || v == hi {
        return v;
    }
    let z = 2.0 * (v - lo) / (hi - lo) - 1.0;
    lo + 0.5 * (sine_squash(z) + 1.0) * (hi - lo)
}

fn squash_set(grid: &NodeSet) -> Result<NodeSet> {
    let d = *grid.domain();
    let points = grid
        .points()
        .iter()
        .map(|p| [squash_coord(p[0], d.x_min, d.x_max), squash_coord(p[1], d.y_min, d.y_max)])
        .collect();
    NodeSet::new(points, grid.roles().to_vec(), d)
}

/// Boundary nodes on all four edges, equally spaced in the metric `ds / r(s)`
/// so the local gap follows the spacing function. Corners appear once.
fn boundary_nodes(domain: &Rect, spacing: &dyn Fn(&Point) -> f64) -> Vec<Point> {
    const PIECES: usize = 2000;
    let corners = [
        [domain.x_min, domain.y_min],
        [domain.x_max, domain.y_min],
        [domain.x_max, domain.y_max],
        [domain.x_min, domain.y_max],
    ];
    let mut out = Vec::new();
    for e in 0..4 {
        let (a, b) = (corners[e], corners[(e + 1) % 4]);
        let at = |t: f64| -> Point {
            if t >= 1.0 {
                b
            } else {
                [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t]
            }
        };
        let len = dist(&a, &b);
        // cumulative ∫ ds / r by the trapezoid rule
        let mut cum = vec![0.0; PIECES + 1];
        let mut prev = 1.0 / spacing(&a);
        for k in 1..=PIECES {
            let cur = 1.0 / spacing(&at(k as f64 / PIECES as f64));
            cum[k] = cum[k - 1] + 0.5 * (prev + cur) * len / PIECES as f64;
            prev = cur;
        }
        let total = cum[PIECES];
        let segments = (total.round() as usize).max(1);
        out.push(a);
        let mut piece = 0;
        for k in 1..segments {
            let goal = total * k as f64 / segments as f64;
            while cum[piece + 1] < goal {
                piece += 1;
            }
            let frac = (goal - cum[piece]) / (cum[piece + 1] - cum[piece]);
            let mut p = at((piece as f64 + frac) / PIECES as f64);
            // snap the fixed coordinate exactly onto the edge
            if e % 2 == 0 {
                p[1] = a[1];
            } else {
                p[0] = a[0];
            }
            out.push(p);
        }
    }
    out
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

fn halton_set(n_target: usize, domain: Rect) -> Result<NodeSet> {
    let h = (domain.area() / n_target as f64).sqrt();
    let mut points = boundary_nodes(&domain, &|_| h);
    if points.len() >= n_target {
        return Err(Error::InvalidInput(format!(
            "n_target {n_target} too small for a Halton set (boundary alone needs {})",
            points.len()
        )));
    }
    let mut index = 1u64;
    while points.len() < n_target {
        let p = [
            domain.x_min + domain.width() * radical_inverse(index, 2),
            domain.y_min + domain.height() * radical_inverse(index, 3),
        ];
        index += 1;
        if domain.distance_to_boundary(&p) >= 0.5 * h {
            points.push(p);
        }
    }
    let roles = points.iter().map(|p| role_of(&domain, p)).collect();
    NodeSet::new(points, roles, domain)
}

/// Variable-radius Poisson-disk sampler. The spacing function of
/// [`PeakParams`] is multiplied by a global `scale`, fitted so the output has
/// exactly the requested number of nodes.
#[derive(Debug, Clone, Copy)]
pub struct PeakSampler {
    pub params: PeakParams,
    pub domain: Rect,
    pub scale: f64,
}

const CANDIDATES: usize = 30;

impl PeakSampler {
    /// Local target spacing (already scaled).
    pub fn radius_at(&self, p: &Point) -> f64 {
        self.scale * self.params.spacing(p)
    }

    pub fn fit(params: PeakParams, domain: Rect, n_target: usize, seed: u64) -> Result<(NodeSet, Self)> {
        params.validate()?;
        // ∫ r^{-2} dA by the midpoint rule gives the initial scale guess
        let m = 200;
        let cell = domain.area() / (m * m) as f64;
        let mut integral = 0.0;
        for j in 0..m {
            for i in 0..m {
                let p = [
                    domain.x_min + domain.width() * (i as f64 + 0.5) / m as f64,
                    domain.y_min + domain.height() * (j as f64 + 0.5) / m as f64,
                ];
                integral += cell / params.spacing(&p).powi(2);
            }
        }
        let mut sampler = Self { params, domain, scale: (0.7 * integral / n_target as f64).sqrt() };
        let aim = n_target as f64 * 1.01;
        let mut best: Option<(Vec<Point>, usize, f64)> = None;
        for _ in 0..40 {
            let (points, n_boundary) = sampler.sample(seed);
            let count = points.len();
            if count >= n_target && best.as_ref().is_none_or(|b| count < b.0.len()) {
                best = Some((points, n_boundary, sampler.scale));
            }
            if count >= n_target && (count as f64) <= n_target as f64 * 1.03 {
                break;
            }
            let ratio = (count as f64 / aim).sqrt().clamp(0.8, 1.25);
            sampler.scale *= if count < n_target { ratio.min(0.995) } else { ratio };
        }
        let (mut points, n_boundary, scale) = best.ok_or_else(|| {
            Error::InvalidInput(format!("could not fit a peak-adapted set of {n_target} nodes"))
        })?;
        sampler.scale = scale;
        if n_boundary >= n_target {
            return Err(Error::InvalidInput(format!(
                "n_target {n_target} too small: boundary alone needs {n_boundary} nodes"
            )));
        }
        sampler.trim(&mut points, n_boundary, n_target);
        let roles = points.iter().map(|p| role_of(&domain, p)).collect();
        Ok((NodeSet::new(points, roles, domain)?, sampler))
    }

    /// Boundary nodes first, then dart-thrown interior nodes.
    fn sample(&self, seed: u64) -> (Vec<Point>, usize) {
        let d = self.domain;
        let r = |p: &Point| self.radius_at(p);
        let mut points = boundary_nodes(&d, &r);
        let n_boundary = points.len();

        let cell = self.scale * self.params.r_max.max(self.params.r_min);
        let nx = ((d.width() / cell).ceil() as usize).max(1);
        let ny = ((d.height() / cell).ceil() as usize).max(1);
        let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); nx * ny];
        let bucket_of = |p: &Point| {
            let i = (((p[0] - d.x_min) / cell) as usize).min(nx - 1);
            let j = (((p[1] - d.y_min) / cell) as usize).min(ny - 1);
            (i, j)
        };
        for (k, p) in points.iter().enumerate() {
            let (i, j) = bucket_of(p);
            buckets[j * nx + i].push(k);
        }
        let fits = |c: &Point, points: &[Point], buckets: &[Vec<usize>]| {
            let rc = r(c);
            if !d.contains(c) || d.distance_to_boundary(c) < 0.5 * rc {
                return false;
            }
            let (ci, cj) = bucket_of(c);
            for j in cj.saturating_sub(1)..=(cj + 1).min(ny - 1) {
                for i in ci.saturating_sub(1)..=(ci + 1).min(nx - 1) {
                    for &k in &buckets[j * nx + i] {
                        let q = &points[k];
                        if dist(c, q) < 0.5 * (rc + r(q)) {
                            return false;
                        }
                    }
                }
            }
            true
        };

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut active: Vec<usize> = (0..n_boundary).collect();
        for _ in 0..1000 {
            let c = [
                rng.gen_range(d.x_min..d.x_max),
                rng.gen_range(d.y_min..d.y_max),
            ];
            if fits(&c, &points, &buckets) {
                let (i, j) = bucket_of(&c);
                buckets[j * nx + i].push(points.len());
                active.push(points.len());
                points.push(c);
                break;
            }
        }
        while !active.is_empty() {
            let slot = rng.gen_range(0..active.len());
            let a = points[active[slot]];
            let ra = r(&a);
            let mut placed = false;
            for _ in 0..CANDIDATES {
                let rho = ra * (1.0 + rng.gen::<f64>());
                let theta = std::f64::consts::TAU * rng.gen::<f64>();
                let c = [a[0] + rho * theta.cos(), a[1] + rho * theta.sin()];
                if fits(&c, &points, &buckets) {
                    let (i, j) = bucket_of(&c);
                    buckets[j * nx + i].push(points.len());
                    active.push(points.len());
                    points.push(c);
                    placed = true;
                    break;
                }
            }
            if !placed {
                active.swap_remove(slot);
            }
        }
        (points, n_boundary)
    }

    /// Drops the most crowded interior nodes until `n_target` remain.
    fn trim(&self, points: &mut Vec<Point>, n_boundary: usize, n_target: usize) {
        while points.len() > n_target {
            let tree = KdTree::new(points);
            let crowding = |k: usize| {
                let p = &points[k];
                tree.knn(p, 2)
                    .expect("at least two points")
                    .iter()
                    .filter(|(j, _)| *j != k)
                    .map(|&(j, d)| d / (0.5 * (self.radius_at(p) + self.radius_at(&points[j]))))
                    .fold(f64::INFINITY, f64::min)
            };
            let worst = (n_boundary..points.len())
                .min_by(|&a, &b| crowding(a).total_cmp(&crowding(b)).then(a.cmp(&b)))
                .expect("interior nodes to trim");
            points.remove(worst);
        }
    }
}
