//! Polyharmonic splines, monomial bases and the action of the supported
//! linear differential operators on both.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;

/// Polyharmonic spline `φ(r) = r^m` with odd `m ≥ 3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhsKernel {
    exponent: u32,
}

impl Default for PhsKernel {
    fn default() -> Self {
        Self { exponent: 3 }
    }
}

impl PhsKernel {
    pub fn new(exponent: u32) -> Result<Self> {
        if exponent < 3 || exponent.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!(
                "PHS exponent must be odd and >= 3, got {exponent}"
            )));
        }
        Ok(Self { exponent })
    }

    pub fn exponent(&self) -> u32 {
        self.exponent
    }

    pub fn eval(&self, r: f64) -> f64 {
        phs_eval(r, self.exponent)
    }

    /// `L φ(‖x − node‖)` evaluated at `x = center`.
    pub fn apply(&self, op: &OperatorSpec, center: &Point, node: &Point) -> Result<f64> {
        phs_apply(op, center, node, self.exponent)
    }
}

pub fn phs_eval(r: f64, m: u32) -> f64 {
    r.powi(m as i32)
}

/// Linear differential operator approximated by a stencil.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OperatorSpec {
    Identity,
    Dx,
    Dy,
    Laplacian,
    /// Derivative along a unit vector.
    Directional(Point),
}

impl OperatorSpec {
    pub fn directional(v: Point) -> Result<Self> {
        let norm = (v[0] * v[0] + v[1] * v[1]).sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("direction {v:?} is not a unit vector")));
        }
        Ok(Self::Directional(v))
    }

    /// Differential order `k`.
    pub fn order(&self) -> u32 {
        match self {
            Self::Identity => 0,
            Self::Dx | Self::Dy | Self::Directional(_) => 1,
            Self::Laplacian => 2,
        }
    }
}

/// `L φ(‖x − node‖)|_{x = center}` for `φ = r^m` in two dimensions.
pub fn phs_apply(op: &OperatorSpec, center: &Point, node: &Point, m: u32) -> Result<f64> {
    let dx = center[0] - node[0];
    let dy = center[1] - node[1];
    let r = (dx * dx + dy * dy).sqrt();
    let mf = f64::from(m);
    if op.order() >= 1 && m < 2 || op.order() == 2 && m < 3 {
        return Err(Error::KernelTooRough { exponent: m });
    }
    // r^{m-2}, with the removable singularity at r = 0 for m >= 3
    let rm2 = || if r == 0.0 { 0.0 } else { r.powi(m as i32 - 2) };
    Ok(match op {
        OperatorSpec::Identity => phs_eval(r, m),
        OperatorSpec::Dx => mf * dx * rm2(),
        OperatorSpec::Dy => mf * dy * rm2(),
        OperatorSpec::Directional(n) => mf * (n[0] * dx + n[1] * dy) * rm2(),
        OperatorSpec::Laplacian => mf * mf * rm2(),
    })
}

/// `C(p + d, d)`: number of monomials of total degree `≤ p` in `d` variables.
pub fn basis_count(p: u32, d: u32) -> usize {
    let (p, d) = (u64::from(p), u64::from(d));
    let mut c: u64 = 1;
    for i in 1..=d {
        c = c * (p + i) / i;
    }
    c as usize
}

/// Monomials of total degree `≤ p` in graded lexicographic order: by total
/// degree, then by descending power of the first variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonomialBasis {
    degree: u32,
    dim: u32,
    exponents: Vec<Vec<u32>>,
}

impl MonomialBasis {
    pub fn new(degree: u32, dim: u32) -> Self {
        let mut exponents = Vec::with_capacity(basis_count(degree, dim));
        for total in 0..=degree {
            push_graded(&mut exponents, &mut Vec::with_capacity(dim as usize), total, dim);
        }
        Self { degree, dim, exponents }
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }
}

fn push_graded(out: &mut Vec<Vec<u32>>, prefix: &mut Vec<u32>, remaining: u32, dim: u32) {
    if prefix.len() + 1 == dim as usize {
        prefix.push(remaining);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for e in (0..=remaining).rev() {
        prefix.push(e);
        push_graded(out, prefix, remaining - e, dim);
        prefix.pop();
    }
}

#[inline]
fn pow(v: f64, e: u32) -> f64 {
    v.powi(e as i32)
}

/// `∂^j/∂v^j v^e` as a coefficient and remaining power.
#[inline]
fn derivative(v: f64, e: u32, j: u32) -> f64 {
    if j > e {
        return 0.0;
    }
    let coeff: f64 = (0..j).map(|i| f64::from(e - i)).product();
    coeff * pow(v, e - j)
}

/// Exact `L (x^a y^b)` at `point`.
pub fn monomial_apply(op: &OperatorSpec, exponents: [u32; 2], point: &Point) -> f64 {
    let [a, b] = exponents;
    let [x, y] = *point;
    match op {
        OperatorSpec::Identity => pow(x, a) * pow(y, b),
        OperatorSpec::Dx => derivative(x, a, 1) * pow(y, b),
        OperatorSpec::Dy => pow(x, a) * derivative(y, b, 1),
        OperatorSpec::Directional(n) => {
            n[0] * derivative(x, a, 1) * pow(y, b) + n[1] * pow(x, a) * derivative(y, b, 1)
        }
        OperatorSpec::Laplacian => derivative(x, a, 2) * pow(y, b) + pow(x, a) * derivative(y, b, 2),
    }
}

/// Serializable operator name used in configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorName {
    Identity,
    Dx,
    Dy,
    Laplacian,
}

impl From<OperatorName> for OperatorSpec {
    fn from(n: OperatorName) -> Self {
        match n {
            OperatorName::Identity => Self::Identity,
            OperatorName::Dx => Self::Dx,
            OperatorName::Dy => Self::Dy,
            OperatorName::Laplacian => Self::Laplacian,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn phs_eval_examples() {
        assert_eq!(phs_eval(2.0, 3), 8.0);
        assert_eq!(phs_eval(0.0, 7), 0.0);
        assert_eq!(phs_eval(1.5, 5), 7.59375);
    }

    #[test]
    fn phs_apply_examples() {
        let lap = phs_apply(&OperatorSpec::Laplacian, &[2.0, 0.0], &[0.0, 0.0], 3).unwrap();
        assert!((lap - 18.0).abs() < 1e-14);
        let dx = phs_apply(&OperatorSpec::Dx, &[1.0, 0.0], &[0.0, 0.0], 3).unwrap();
        assert_eq!(dx, 3.0);
        for op in [OperatorSpec::Dx, OperatorSpec::Dy, OperatorSpec::Laplacian, OperatorSpec::Directional([0.6, 0.8])] {
            assert_eq!(phs_apply(&op, &[0.3, 0.3], &[0.3, 0.3], 5).unwrap(), 0.0);
        }
        let err = phs_apply(&OperatorSpec::Laplacian, &[1.0, 0.0], &[0.0, 0.0], 1).unwrap_err();
        assert_eq!(err.to_string().split(" (").next().unwrap(), "kernel too rough for operator");
    }

    #[test]
    fn kernel_exponent_validation() {
        assert!(PhsKernel::new(3).is_ok());
        assert!(PhsKernel::new(4).is_err());
        assert!(PhsKernel::new(1).is_err());
        assert_eq!(PhsKernel::default().exponent(), 3);
    }

    #[test]
    fn operator_orders_and_direction_check() {
        assert_eq!(OperatorSpec::Identity.order(), 0);
        assert_eq!(OperatorSpec::Dy.order(), 1);
        assert_eq!(OperatorSpec::Laplacian.order(), 2);
        assert!(OperatorSpec::directional([1.0, 1.0]).is_err());
        assert_eq!(OperatorSpec::directional([0.0, 1.0]).unwrap().order(), 1);
    }

    #[test]
    fn basis_counts_match_table() {
        let expected = [1, 3, 6, 10, 15, 21];
        for (p, &n) in expected.iter().enumerate() {
            assert_eq!(basis_count(p as u32, 2), n);
        }
        assert_eq!(basis_count(2, 3), 10);
        for p in 0..=12 {
            assert_eq!(MonomialBasis::new(p, 2).len(), basis_count(p, 2));
            assert_eq!(MonomialBasis::new(p, 3).len(), basis_count(p, 3));
        }
    }

    #[test]
    fn basis_is_graded_and_starts_with_constant() {
        let b = MonomialBasis::new(2, 2);
        let want: Vec<Vec<u32>> = vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]];
        assert_eq!(b.exponents(), &want[..]);
    }

    #[test]
    fn monomial_apply_examples() {
        assert_eq!(monomial_apply(&OperatorSpec::Laplacian, [2, 0], &[0.3, -0.7]), 2.0);
        assert_eq!(monomial_apply(&OperatorSpec::Dx, [1, 1], &[2.0, 3.0]), 3.0);
        assert_eq!(monomial_apply(&OperatorSpec::Laplacian, [0, 0], &[0.3, 0.1]), 0.0);
        assert_eq!(monomial_apply(&OperatorSpec::Identity, [2, 3], &[2.0, 0.5]), 0.5);
    }

    fn fd_phs(op: &OperatorSpec, c: &Point, node: &Point, m: u32, h: f64) -> f64 {
        let f = |x: f64, y: f64| phs_eval(((x - node[0]).powi(2) + (y - node[1]).powi(2)).sqrt(), m);
        let (x, y) = (c[0], c[1]);
        let fx = (f(x + h, y) - f(x - h, y)) / (2.0 * h);
        let fy = (f(x, y + h) - f(x, y - h)) / (2.0 * h);
        match op {
            OperatorSpec::Identity => f(x, y),
            OperatorSpec::Dx => fx,
            OperatorSpec::Dy => fy,
            OperatorSpec::Directional(n) => n[0] * fx + n[1] * fy,
            OperatorSpec::Laplacian => {
                // fourth order with a wider step to limit cancellation
                let h = 100.0 * h;
                let d2 = |g: &dyn Fn(f64) -> f64| {
                    (-g(2.0 * h) + 16.0 * g(h) - 30.0 * g(0.0) + 16.0 * g(-h) - g(-2.0 * h)) / (12.0 * h * h)
                };
                d2(&|t| f(x + t, y)) + d2(&|t| f(x, y + t))
            }
        }
    }

    proptest! {
        #[test]
        fn phs_apply_matches_finite_differences(
            r in 0.1..10.0f64,
            theta in 0.0..std::f64::consts::TAU,
            phi in 0.0..std::f64::consts::TAU,
            m in prop::sample::select(vec![3u32, 5, 7]),
        ) {
            let node = [0.25, -0.5];
            let c = [node[0] + r * theta.cos(), node[1] + r * theta.sin()];
            let ops = [
                OperatorSpec::Identity,
                OperatorSpec::Dx,
                OperatorSpec::Dy,
                OperatorSpec::Laplacian,
                OperatorSpec::Directional([phi.cos(), phi.sin()]),
            ];
            for op in &ops {
                let exact = phs_apply(op, &c, &node, m).unwrap();
                let fd = fd_phs(op, &c, &node, m, 1e-5 * r);
                // relative to the operator's natural magnitude m² r^{m−k}
                let mag = f64::from(m * m) * phs_eval(r, m) / r.powi(op.order() as i32);
                prop_assert!((exact - fd).abs() <= 1e-6 * mag, "{op:?} r={r} m={m}: {exact} vs {fd}");
            }
        }

        #[test]
        fn monomial_laplacian_matches_finite_differences(
            a in 0u32..=8, b in 0u32..=8,
            x in -1.0..1.0f64, y in -1.0..1.0f64,
        ) {
            prop_assume!(a + b <= 8);
            let f = |x: f64, y: f64| x.powi(a as i32) * y.powi(b as i32);
            let h = 1e-3;
            // fourth-order second differences
            let d2 = |g: &dyn Fn(f64) -> f64, t: f64| {
                (-g(t + 2.0 * h) + 16.0 * g(t + h) - 30.0 * g(t) + 16.0 * g(t - h) - g(t - 2.0 * h)) / (12.0 * h * h)
            };
            let fd = d2(&|t| f(t, y), x) + d2(&|t| f(x, t), y);
            let exact = monomial_apply(&OperatorSpec::Laplacian, [a, b], &[x, y]);
            prop_assert!((exact - fd).abs() <= 1e-6 * exact.abs().max(1.0),
                "x^{a} y^{b} at ({x},{y}): {exact} vs {fd}");
        }
    }
}
