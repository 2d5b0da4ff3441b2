//! RBF-FD stencil weights from the PHS + polynomial saddle-point system, with
//! the per-node polynomial degree chosen from the local node spacing.
//!
//! For a center `x_c` and stencil `x_1..x_n` the weights `w` solve
//!
//! ```text
//! [ A   P ] [ w   ]   [ Lφ(‖x − x_i‖)|x_c ]
//! [ Pᵀ  0 ] [ w_e ] = [ L p_j(x)|x_c      ]
//! ```
//!
//! with `A_ij = φ(‖x_i − x_j‖)` and `P_ij = p_j(x_i)` for the monomials of
//! total degree `≤ p`. The system is assembled in local coordinates
//! `(x − x_c) / s`, `s` being the stencil radius, and the weights of an order-`k`
//! operator are scaled back by `s^{−k}`.

use crate::error::{Error, Result};
use crate::geometry::{dist2, local_fill_distance, KdTree, NodeSet, Point};
use crate::kernels::{basis_count, monomial_apply, phs_apply, MonomialBasis, OperatorSpec, PhsKernel};
use crate::linalg::{norm_inf, DenseMatrix, LuFactors};

/// Relative pivot threshold of the saddle-point factorization.
pub const PIVOT_RTOL: f64 = 1e-14;
/// Polynomial columns whose Gram-Schmidt remainder falls below this fraction
/// of their norm are treated as dependent on the stencil.
const RANK_RTOL: f64 = 1e-9;
/// Bound on `‖Pᵀw − Lp‖_∞ / (1 + ‖w‖_∞)` in local coordinates.
pub const CONSTRAINT_RTOL: f64 = 1e-9;

/// Weights approximating `L u(x_c) ≈ Σ_k w_k u(x_k)` for one center.
#[derive(Debug, Clone, PartialEq)]
pub struct StencilWeights {
    pub center_index: usize,
    pub stencil_indices: Vec<usize>,
    pub weights: Vec<f64>,
    /// Polynomial degree `p_i` used for this center.
    pub degree: u32,
    /// Constraint multipliers `w_e`, one per monomial (local coordinates).
    /// Monomials that vanish identically on the stencil carry a zero.
    pub multipliers: Vec<f64>,
}

impl StencilWeights {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Local spacing measure fed to the degree rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpacingEstimator {
    /// Distance from the center to its nearest other node.
    #[default]
    NearestNeighbour,
    /// Largest nearest-neighbour gap within the `n_m` neighbourhood.
    NeighbourhoodGap,
}

/// Controls how the polynomial degree is chosen per node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptivityConfig {
    /// Requested global convergence order `g`.
    pub global_order: u32,
    /// Order `k` of the PDE operator; drives the degree rule.
    pub operator_order: u32,
    pub p_min: u32,
    pub p_max: u32,
    /// Neighbourhood size `n_m` fetched per node.
    pub max_stencil: usize,
    /// `false` forces `p = g + k − 1` at every node.
    pub adaptive: bool,
    pub estimator: SpacingEstimator,
}

impl AdaptivityConfig {
    pub fn new(global_order: u32, operator_order: u32) -> Self {
        let p_max = 10;
        Self {
            global_order,
            operator_order,
            p_min: 2,
            p_max,
            max_stencil: stencil_size(p_max, 2),
            adaptive: true,
            estimator: SpacingEstimator::default(),
        }
    }

    pub fn fixed(global_order: u32, operator_order: u32) -> Self {
        Self { adaptive: false, ..Self::new(global_order, operator_order) }
    }

    /// Degree used everywhere by the non-adaptive baseline.
    pub fn base_degree(&self) -> u32 {
        self.global_order + self.operator_order - 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.global_order == 0 {
            return Err(Error::InvalidInput("global order must be positive".into()));
        }
        if self.p_min < self.operator_order {
            return Err(Error::InvalidInput(format!(
                "p_min {} below operator order {}",
                self.p_min, self.operator_order
            )));
        }
        if self.p_max < self.p_min {
            return Err(Error::InvalidInput(format!("p_max {} < p_min {}", self.p_max, self.p_min)));
        }
        let top = if self.adaptive { self.p_max } else { self.p_max.max(self.base_degree()) };
        if self.max_stencil < stencil_size(top, 2) {
            return Err(Error::InvalidInput(format!(
                "max stencil {} cannot hold a degree-{top} stencil of {}",
                self.max_stencil,
                stencil_size(top, 2)
            )));
        }
        Ok(())
    }
}

/// Local degree `round(g + k − 1 + log10(h_local / h_e))` clamped to
/// `[p_min, p_max]`; rounding is half away from zero.
pub fn select_degree(h_local: f64, h_e: f64, cfg: &AdaptivityConfig) -> Result<u32> {
    if !(h_local > 0.0 && h_e > 0.0) {
        return Err(Error::InvalidInput(format!(
            "distances must be positive (h_local = {h_local}, h_e = {h_e})"
        )));
    }
    let raw = f64::from(cfg.global_order + cfg.operator_order) - 1.0 + (h_local / h_e).log10();
    let p = raw.round().clamp(f64::from(cfg.p_min), f64::from(cfg.p_max));
    Ok(p as u32)
}

/// `2·C(p + d, d) + 1`: just enough points to support the degree-`p` polynomial.
pub fn stencil_size(p: u32, d: u32) -> usize {
    2 * basis_count(p, d) + 1
}

/// Solves the augmented system for one stencil. `center` is the evaluation
/// point (normally also the first stencil point). Returned stencil indices are
/// positions in `stencil`.
pub fn compute_weights(
    center: &Point,
    stencil: &[Point],
    op: &OperatorSpec,
    p: u32,
    kernel: &PhsKernel,
) -> Result<StencilWeights> {
    let n = stencil.len();
    if n == 0 {
        return Err(Error::SingularStencil);
    }
    let radius = stencil.iter().map(|x| dist2(x, center)).fold(0.0, f64::max).sqrt();
    if !(radius > 0.0) {
        return Err(Error::SingularStencil);
    }
    let local: Vec<Point> = stencil
        .iter()
        .map(|x| [(x[0] - center[0]) / radius, (x[1] - center[1]) / radius])
        .collect();
    let m = kernel.exponent();
    let mut a = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let d2 = dist2(&local[i], &local[j]);
            if d2 <= 1e-24 {
                return Err(Error::SingularStencil);
            }
            let v = kernel.eval(d2.sqrt());
            a.set(i, j, v);
            a.set(j, i, v);
        }
    }

    let basis = MonomialBasis::new(p, 2);
    let exps: Vec<[u32; 2]> = basis.exponents().iter().map(|e| [e[0], e[1]]).collect();
    let columns: Vec<Vec<f64>> = exps
        .iter()
        .map(|&e| local.iter().map(|x| monomial_apply(&OperatorSpec::Identity, e, x)).collect())
        .collect();
    let kept = independent_columns(&columns);
    let n_poly = kept.len();

    let size = n + n_poly;
    let mut system = DenseMatrix::zeros(size, size);
    let mut rhs = vec![0.0; size];
    let origin = [0.0, 0.0];
    for i in 0..n {
        for j in 0..n {
            system.set(i, j, a.get(i, j));
        }
        for (c, &col) in kept.iter().enumerate() {
            system.set(i, n + c, columns[col][i]);
            system.set(n + c, i, columns[col][i]);
        }
        rhs[i] = phs_apply(op, &origin, &local[i], m)?;
    }
    for (c, &col) in kept.iter().enumerate() {
        rhs[n + c] = monomial_apply(op, exps[col], &origin);
    }

    let min_pivot = PIVOT_RTOL * system.norm_inf();
    let lu = LuFactors::new(system, min_pivot).map_err(|_| Error::IllConditionedStencil)?;
    let solution = lu.solve(&rhs);
    let w_local = &solution[..n];

    // every monomial, kept or not, must be reproduced by the local weights
    let w_norm = norm_inf(w_local);
    for (col, e) in columns.iter().zip(&exps) {
        let applied: f64 = col.iter().zip(w_local).map(|(q, w)| q * w).sum();
        let residual = (applied - monomial_apply(op, *e, &origin)).abs();
        if !(residual <= CONSTRAINT_RTOL * (1.0 + w_norm)) {
            return Err(Error::IllConditionedStencil);
        }
    }

    let mut multipliers = vec![0.0; exps.len()];
    for (c, &col) in kept.iter().enumerate() {
        multipliers[col] = solution[n + c];
    }
    let scale = radius.powi(-(op.order() as i32));
    Ok(StencilWeights {
        center_index: 0,
        stencil_indices: (0..n).collect(),
        weights: w_local.iter().map(|w| w * scale).collect(),
        degree: p,
        multipliers,
    })
}

/// Indices of a maximal linearly independent subset of `columns`, scanned in
/// order (modified Gram-Schmidt with one re-orthogonalization pass).
fn independent_columns(columns: &[Vec<f64>]) -> Vec<usize> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut kept = Vec::new();
    for (j, col) in columns.iter().enumerate() {
        let norm0 = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm0 == 0.0 {
            continue;
        }
        let mut v = col.clone();
        for _ in 0..2 {
            for q in &basis {
                let dot: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= dot * qi;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > RANK_RTOL * norm0 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
            kept.push(j);
        }
    }
    kept
}

/// Weights for one node: fetch `n_m` neighbours, estimate the local spacing,
/// pick the degree against the reference spacing `h_e`, truncate to `2·n_p + 1` nearest neighbours and
/// solve. An ill-conditioned stencil is retried with `⌈n_p/2⌉` more points at a
/// time, up to `max(n_m, 2·n_s)` points.
pub fn weights_for_node(
    node_index: usize,
    nodes: &NodeSet,
    tree: &KdTree,
    op: &OperatorSpec,
    cfg: &AdaptivityConfig,
    h_e: f64,
    kernel: &PhsKernel,
) -> Result<StencilWeights> {
    let center = nodes.point(node_index);
    let n_m = cfg.max_stencil.min(nodes.len());
    let neighbours = tree.knn(&center, n_m)?;
    let degree = if cfg.adaptive {
        let h_local = match cfg.estimator {
            SpacingEstimator::NearestNeighbour => neighbours
                .iter()
                .map(|&(_, d)| d)
                .find(|&d| d > 0.0)
                .ok_or(Error::TooFewNodes { needed: 2, got: neighbours.len() })?,
            SpacingEstimator::NeighbourhoodGap => {
                let pts: Vec<Point> = neighbours.iter().map(|&(j, _)| nodes.point(j)).collect();
                local_fill_distance(&pts)?
            }
        };
        select_degree(h_local, h_e, cfg)?
    } else {
        cfg.base_degree()
    };
    let n_p = basis_count(degree, 2);
    let n_s = stencil_size(degree, 2);
    if n_s > nodes.len() {
        return Err(Error::StencilTooLarge { requested: n_s, available: nodes.len() });
    }

    let solve = |ids: &[usize]| {
        let pts: Vec<Point> = ids.iter().map(|&j| nodes.point(j)).collect();
        compute_weights(&center, &pts, op, degree, kernel).map(|mut w| {
            w.center_index = node_index;
            w.stencil_indices = ids.to_vec();
            w
        })
    };
    let limit = n_m.max(2 * n_s).min(nodes.len());
    let mut size = n_s;
    loop {
        let ids: Vec<usize> = if size <= neighbours.len() {
            neighbours.iter().take(size).map(|&(j, _)| j).collect()
        } else {
            tree.knn(&center, size)?.into_iter().map(|(j, _)| j).collect()
        };
        match solve(&ids) {
            Err(Error::IllConditionedStencil) if size < limit => size = (size + n_p.div_ceil(2)).min(limit),
            other => return other,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate_nodes, GeneratorKind, GeneratorSpec, Rect};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cross(h: f64) -> Vec<Point> {
        vec![[0.0, 0.0], [h, 0.0], [-h, 0.0], [0.0, h], [0.0, -h]]
    }

    /// Weights of the classical formulas, solved independently of the saddle
    /// system: the 5 moment conditions on the cross determine them uniquely.
    fn moment_oracle(h: f64, op: &OperatorSpec) -> Vec<f64> {
        let pts = cross(h);
        let basis = [[0, 0], [1, 0], [0, 1], [2, 0], [0, 2]];
        let mut m = DenseMatrix::zeros(5, 5);
        let mut rhs = vec![0.0; 5];
        for (r, e) in basis.iter().enumerate() {
            for (c, x) in pts.iter().enumerate() {
                m.set(r, c, monomial_apply(&OperatorSpec::Identity, *e, x));
            }
            rhs[r] = monomial_apply(op, *e, &[0.0, 0.0]);
        }
        LuFactors::new(m, 0.0).unwrap().solve(&rhs)
    }

    fn assert_rel(got: &[f64], want: &[f64], rtol: f64) {
        let scale = norm_inf(want);
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() <= rtol * scale, "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn five_point_laplacian() {
        for h in [0.1, 0.01] {
            let w = compute_weights(&[0.0, 0.0], &cross(h), &OperatorSpec::Laplacian, 2, &PhsKernel::default())
                .unwrap();
            let want: Vec<f64> = [-4.0, 1.0, 1.0, 1.0, 1.0].iter().map(|v| v / (h * h)).collect();
            assert_rel(&w.weights, &want, 1e-9);
            assert_rel(&moment_oracle(h, &OperatorSpec::Laplacian), &want, 1e-12);
            assert_eq!(w.multipliers.len(), 6);
            // xy vanishes on the cross and carries no multiplier
            assert_eq!(w.multipliers[4], 0.0);
        }
    }

    #[test]
    fn five_point_central_difference() {
        let h = 0.1;
        let w = compute_weights(&[0.0, 0.0], &cross(h), &OperatorSpec::Dx, 2, &PhsKernel::default()).unwrap();
        let want = [0.0, 1.0 / (2.0 * h), -1.0 / (2.0 * h), 0.0, 0.0];
        assert_rel(&w.weights, &want, 1e-9);
        assert_rel(&moment_oracle(h, &OperatorSpec::Dx), &want, 1e-12);
    }

    #[test]
    fn identity_operator_gives_cardinal_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for p in 0..=3 {
            let n = stencil_size(p, 2);
            let mut pts = vec![[0.3, 0.4]];
            pts.extend((1..n).map(|_| [rng.gen::<f64>(), rng.gen::<f64>()]));
            let w = compute_weights(&pts[0], &pts, &OperatorSpec::Identity, p, &PhsKernel::default()).unwrap();
            assert!((w.weights[0] - 1.0).abs() < 1e-10);
            assert!(w.weights[1..].iter().all(|v| v.abs() < 1e-10));
        }
    }

    #[test]
    fn coincident_points_are_singular() {
        let pts = [[0.0, 0.0], [0.1, 0.0], [0.1, 0.0], [0.0, 0.1]];
        let err = compute_weights(&pts[0], &pts, &OperatorSpec::Laplacian, 1, &PhsKernel::default()).unwrap_err();
        assert_eq!(err.to_string(), "singular stencil");
    }

    #[test]
    fn unreproducible_polynomial_is_rejected() {
        // collinear points cannot see y, but dy of y is 1
        let pts: Vec<Point> = (0..7).map(|i| [i as f64 * 0.1, 0.0]).collect();
        let err = compute_weights(&pts[0], &pts, &OperatorSpec::Dy, 1, &PhsKernel::default()).unwrap_err();
        assert_eq!(err.to_string(), "ill-conditioned stencil");
    }

    #[test]
    fn degree_rule_examples() {
        let cfg = AdaptivityConfig::new(4, 2);
        let he = 0.037;
        assert_eq!(select_degree(he, he, &cfg).unwrap(), 5);
        assert_eq!(select_degree(10.0 * he, he, &cfg).unwrap(), 6);
        assert_eq!(select_degree(0.1 * he, he, &cfg).unwrap(), 4);
        assert_eq!(select_degree(1e-9, he, &cfg).unwrap(), 2);
        assert_eq!(select_degree(1e9, he, &cfg).unwrap(), 10);
        assert!(select_degree(0.0, he, &cfg).is_err());
        assert!(select_degree(he, -1.0, &cfg).is_err());
    }

    #[test]
    fn stencil_sizes() {
        assert_eq!(stencil_size(2, 2), 13);
        assert_eq!(stencil_size(4, 2), 31);
        assert_eq!(stencil_size(0, 2), 3);
        assert_eq!(stencil_size(10, 2), 133);
    }

    #[test]
    fn config_validation() {
        assert!(AdaptivityConfig::new(4, 2).validate().is_ok());
        let mut cfg = AdaptivityConfig::new(4, 2);
        cfg.p_min = 1;
        assert!(cfg.validate().is_err());
        let mut cfg = AdaptivityConfig::new(4, 2);
        cfg.max_stencil = 100;
        assert!(cfg.validate().is_err());
        let mut cfg = AdaptivityConfig::new(4, 2);
        cfg.p_max = 1;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn uniform_grid_uses_base_degree() {
        let nodes = generate_nodes(&GeneratorSpec::new(GeneratorKind::TensorGrid), 400, Rect::bi_unit_square(), 0)
            .unwrap();
        let tree = KdTree::new(nodes.points());
        let h_e = nodes.degree_reference_spacing().unwrap();
        let cfg = AdaptivityConfig::new(4, 2);
        for i in (0..nodes.len()).filter(|&i| !nodes.role(i).is_boundary()) {
            let w = weights_for_node(i, &nodes, &tree, &OperatorSpec::Laplacian, &cfg, h_e, &PhsKernel::default())
                .unwrap();
            assert_eq!(w.degree, 5);
            assert_eq!(w.len(), 43);
            assert_eq!(w.stencil_indices[0], i);
        }
    }

    #[test]
    fn matching_spacing_reduces_to_fixed_degree() {
        let nodes = generate_nodes(&GeneratorSpec::new(GeneratorKind::TensorGrid), 225, Rect::bi_unit_square(), 0)
            .unwrap();
        let tree = KdTree::new(nodes.points());
        let i = 7 * 15 + 7;
        // feed the nearest-neighbour distance as h_e so the log term vanishes
        let h_e = tree.knn(&nodes.point(i), 2).unwrap()[1].1;
        let op = OperatorSpec::Laplacian;
        let adaptive = weights_for_node(i, &nodes, &tree, &op, &AdaptivityConfig::new(3, 2), h_e, &PhsKernel::default())
            .unwrap();
        let fixed = weights_for_node(i, &nodes, &tree, &op, &AdaptivityConfig::fixed(3, 2), h_e, &PhsKernel::default())
            .unwrap();
        assert_eq!(adaptive, fixed);
    }
}
