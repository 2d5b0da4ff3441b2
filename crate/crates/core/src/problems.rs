//! Benchmark boundary-value problems for `Δu = f` with manufactured solutions.

use std::fmt;
use std::sync::Arc;

use crate::geometry::{Point, Rect};

pub type ScalarField = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;

/// Condition on one rectangle edge. Neumann data is the derivative along the
/// edge's outward normal.
#[derive(Clone)]
pub enum BoundaryCondition {
    Dirichlet(ScalarField),
    Neumann(ScalarField),
}

impl fmt::Debug for BoundaryCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Dirichlet(_) => f.write_str("Dirichlet"),
            Self::Neumann(_) => f.write_str("Neumann"),
        }
    }
}

/// A Poisson problem `Δu = f` on a rectangle with a known exact solution.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub domain: Rect,
    exact: ScalarField,
    rhs: ScalarField,
    conditions: [Option<BoundaryCondition>; 4],
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("conditions", &self.conditions)
            .finish()
    }
}

impl ProblemSpec {
    pub fn new(name: impl Into<String>, domain: Rect, exact: ScalarField, rhs: ScalarField) -> Self {
        Self { name: name.into(), domain, exact, rhs, conditions: [None, None, None, None] }
    }

    pub fn with_condition(mut self, edge: u8, bc: BoundaryCondition) -> Self {
        self.conditions[usize::from(edge)] = Some(bc);
        self
    }

    pub fn clear_condition(&mut self, edge: u8) {
        self.conditions[usize::from(edge)] = None;
    }

    pub fn condition(&self, edge: u8) -> Option<&BoundaryCondition> {
        self.conditions.get(usize::from(edge)).and_then(Option::as_ref)
    }

    pub fn exact(&self, p: &Point) -> f64 {
        (self.exact)(p)
    }

    pub fn rhs(&self, p: &Point) -> f64 {
        (self.rhs)(p)
    }

    /// Dirichlet datum at a boundary point, taken from the first Dirichlet
    /// edge the point lies on.
    pub fn boundary_value(&self, domain: &Rect, p: &Point) -> Option<f64> {
        domain.edges_containing(p).into_iter().find_map(|e| match self.condition(e) {
            Some(BoundaryCondition::Dirichlet(g)) => Some(g(p)),
            _ => None,
        })
    }
}

/// `u = sin(x² + y)` on `(−1, 1)²`: Dirichlet on three edges, Neumann
/// `∂u/∂n = cos(x² + y)` on the top edge `y = 1`.
pub fn problem_section4() -> ProblemSpec {
    let u: ScalarField = Arc::new(|p: &Point| (p[0] * p[0] + p[1]).sin());
    let f: ScalarField = Arc::new(|p: &Point| {
        let s = p[0] * p[0] + p[1];
        2.0 * s.cos() - (4.0 * p[0] * p[0] + 1.0) * s.sin()
    });
    let flux: ScalarField = Arc::new(|p: &Point| (p[0] * p[0] + p[1]).cos());
    ProblemSpec::new("section4", Rect::bi_unit_square(), u.clone(), f)
        .with_condition(0, BoundaryCondition::Dirichlet(u.clone()))
        .with_condition(1, BoundaryCondition::Dirichlet(u.clone()))
        .with_condition(2, BoundaryCondition::Neumann(flux))
        .with_condition(3, BoundaryCondition::Dirichlet(u))
}

/// Sign convention for the exponential-peak right-hand side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PeakSign {
    /// `f = Δu`, consistent with the exact solution.
    #[default]
    Consistent,
    /// `f = −Δu`, the sign as the PDE is usually written; only for sensitivity checks.
    Flipped,
}

/// Exponential peak `u = exp(−α((x−x_c)² + (y−y_c)²))` on `(0, 1)²` with
/// Dirichlet data from `u` on all edges and
/// `f = 4 e^{−α r²}(α²(x−x_c)² + α²(y−y_c)² − α)`.
pub fn problem_nist_peak(alpha: f64, center: Point) -> ProblemSpec {
    problem_nist_peak_signed(alpha, center, PeakSign::Consistent)
}

pub fn problem_nist_peak_signed(alpha: f64, center: Point, sign: PeakSign) -> ProblemSpec {
    assert!(alpha > 0.0, "alpha must be positive");
    let [xc, yc] = center;
    let u: ScalarField = Arc::new(move |p: &Point| {
        let (dx, dy) = (p[0] - xc, p[1] - yc);
        (-alpha * (dx * dx + dy * dy)).exp()
    });
    let s = if sign == PeakSign::Consistent { 1.0 } else { -1.0 };
    let f: ScalarField = Arc::new(move |p: &Point| {
        let (dx, dy) = (p[0] - xc, p[1] - yc);
        let e = (-alpha * (dx * dx + dy * dy)).exp();
        s * 4.0 * e * (alpha * alpha * dx * dx + alpha * alpha * dy * dy - alpha)
    });
    let mut spec = ProblemSpec::new("nist-peak", Rect::unit_square(), u.clone(), f);
    for e in 0..4 {
        spec = spec.with_condition(e, BoundaryCondition::Dirichlet(u.clone()));
    }
    spec
}
