//! Solution of the assembled sparse system and error measurement.

use crate::assembly::{Csr, SparseMatrix};
use crate::error::{Error, Result};
use crate::linalg::{norm2, LuFactors};

/// Systems up to this size are factored densely.
pub const DENSE_LIMIT: usize = 4000;
pub const ITERATIVE_TOL: f64 = 1e-12;
/// Success contract on `‖Au − b‖₂ / ‖b‖₂`.
pub const RESIDUAL_TOL: f64 = 1e-10;
/// BiCGSTAB gives up after this many restarts without progress.
const MAX_STALLED_RESTARTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    DenseDirect,
    Iterative,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solution: Vec<f64>,
    pub method: SolveMethod,
    /// Krylov iterations (refinement steps for the direct path).
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

impl SolveReport {
    /// Turns a flagged failure into [`Error::NotConverged`].
    pub fn into_result(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NotConverged { iterations: self.iterations, residual: self.relative_residual })
        }
    }
}

/// Dense LU for `N ≤ 4000`, ILU(0)-preconditioned BiCGSTAB above.
pub fn solve(matrix: &SparseMatrix, rhs: &[f64]) -> Result<SolveReport> {
    let method = if matrix.n_rows() <= DENSE_LIMIT { SolveMethod::DenseDirect } else { SolveMethod::Iterative };
    solve_with(matrix, rhs, method)
}

pub fn solve_with(matrix: &SparseMatrix, rhs: &[f64], method: SolveMethod) -> Result<SolveReport> {
    if matrix.n_rows() != matrix.n_cols() {
        return Err(Error::InvalidInput(format!(
            "matrix is {}x{}, not square",
            matrix.n_rows(),
            matrix.n_cols()
        )));
    }
    if rhs.len() != matrix.n_rows() {
        return Err(Error::InvalidInput(format!(
            "rhs has length {} for a system of size {}",
            rhs.len(),
            matrix.n_rows()
        )));
    }
    match method {
        SolveMethod::DenseDirect => dense_solve(matrix, rhs),
        SolveMethod::Iterative => {
            // ILU(0) is unstable on scattered node orderings; a bandwidth-reducing
            // order keeps its factors bounded
            let order = cuthill_mckee_order(matrix);
            let mut position = vec![0; order.len()];
            for (new, &old) in order.iter().enumerate() {
                position[old] = new;
            }
            let permuted = SparseMatrix::from_triplets(
                matrix.n_rows(),
                matrix.n_cols(),
                matrix.triplets().iter().map(|&(i, j, v)| (position[i], position[j], v)).collect(),
            );
            let b: Vec<f64> = order.iter().map(|&i| rhs[i]).collect();
            let mut report = bicgstab(&permuted, &b, ITERATIVE_TOL, 10 * matrix.n_rows())?;
            let mut x = vec![0.0; order.len()];
            for (new, &old) in order.iter().enumerate() {
                x[old] = report.solution[new];
            }
            report.solution = x;
            Ok(report)
        }
    }
}

/// Cuthill-McKee order of the symmetrized sparsity pattern: breadth-first from
/// a minimum-degree node, neighbours by ascending degree. Not reversed, which
/// works better with ILU(0) on these matrices.
pub fn cuthill_mckee_order(matrix: &SparseMatrix) -> Vec<usize> {
    let n = matrix.n_rows();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(i, j, _) in matrix.triplets() {
        if i != j {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    for a in &mut adj {
        a.sort_unstable();
        a.dedup();
    }
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (adj[i].len(), i));
    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let start = order.len();
        visited[seed] = true;
        order.push(seed);
        let mut head = start;
        while head < order.len() {
            let u = order[head];
            head += 1;
            let mut next: Vec<usize> = adj[u].iter().copied().filter(|&v| !visited[v]).collect();
            next.sort_by_key(|&v| (adj[v].len(), v));
            for v in next {
                visited[v] = true;
                order.push(v);
            }
        }
    }
    order
}

fn relative_residual(matrix: &SparseMatrix, x: &[f64], b: &[f64], b_norm: f64) -> (Vec<f64>, f64) {
    let r: Vec<f64> = matrix.matvec(x).iter().zip(b).map(|(ax, bi)| bi - ax).collect();
    let rel = norm2(&r) / if b_norm > 0.0 { b_norm } else { 1.0 };
    (r, rel)
}

fn dense_solve(matrix: &SparseMatrix, b: &[f64]) -> Result<SolveReport> {
    let n = matrix.n_rows();
    let dense = matrix.to_dense();
    let min_pivot = n as f64 * f64::EPSILON * dense.norm_inf();
    let lu = LuFactors::new(dense, min_pivot)
        .map_err(|p| Error::SingularMatrix { column: p.column, pivot: p.pivot })?;
    let b_norm = norm2(b);
    let mut x = lu.solve(b);
    let (mut r, mut rel) = relative_residual(matrix, &x, b, b_norm);
    // a few steps of iterative refinement
    let mut steps = 0;
    while rel > 0.01 * RESIDUAL_TOL && steps < 3 {
        let dx = lu.solve(&r);
        let candidate: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + d).collect();
        let (r_new, rel_new) = relative_residual(matrix, &candidate, b, b_norm);
        steps += 1;
        if rel_new >= rel {
            break;
        }
        (x, r, rel) = (candidate, r_new, rel_new);
    }
    Ok(SolveReport {
        solution: x,
        method: SolveMethod::DenseDirect,
        iterations: 0,
        relative_residual: rel,
        converged: rel <= RESIDUAL_TOL,
    })
}

/// Zero-fill incomplete LU on the matrix's own pattern.
struct Ilu0 {
    csr: Csr,
    diag: Vec<usize>,
}

impl Ilu0 {
    fn new(matrix: &SparseMatrix) -> Result<Self> {
        let mut csr = matrix.csr().clone();
        let n = matrix.n_rows();
        let mut diag = vec![usize::MAX; n];
        for i in 0..n {
            for k in csr.row_offsets[i]..csr.row_offsets[i + 1] {
                if csr.col_indices[k] == i {
                    diag[i] = k;
                }
            }
            if diag[i] == usize::MAX {
                return Err(Error::SingularMatrix { column: i, pivot: 0.0 });
            }
        }
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            let (start, end) = (csr.row_offsets[i], csr.row_offsets[i + 1]);
            for k in start..end {
                pos[csr.col_indices[k]] = k;
            }
            for k in start..end {
                let col = csr.col_indices[k];
                if col >= i {
                    break;
                }
                let pivot = csr.values[diag[col]];
                let l = csr.values[k] / pivot;
                csr.values[k] = l;
                for kk in diag[col] + 1..csr.row_offsets[col + 1] {
                    let j = csr.col_indices[kk];
                    if pos[j] != usize::MAX {
                        csr.values[pos[j]] -= l * csr.values[kk];
                    }
                }
            }
            for k in start..end {
                pos[csr.col_indices[k]] = usize::MAX;
            }
            let d = csr.values[diag[i]];
            if d == 0.0 || !d.is_finite() {
                return Err(Error::SingularMatrix { column: i, pivot: d.abs() });
            }
        }
        Ok(Self { csr, diag })
    }

    /// `z = (LU)^{-1} r`.
    fn apply(&self, r: &[f64]) -> Vec<f64> {
        let c = &self.csr;
        let n = r.len();
        let mut z = r.to_vec();
        for i in 0..n {
            let mut s = z[i];
            for k in c.row_offsets[i]..self.diag[i] {
                s -= c.values[k] * z[c.col_indices[k]];
            }
            z[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in self.diag[i] + 1..c.row_offsets[i + 1] {
                s -= c.values[k] * z[c.col_indices[k]];
            }
            z[i] = s / c.values[self.diag[i]];
        }
        z
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Right-preconditioned BiCGSTAB from a zero initial guess. Returns the best
/// iterate seen, flagged unconverged if the tolerance was not reached.
fn bicgstab(matrix: &SparseMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<SolveReport> {
    let n = b.len();
    let precond = Ilu0::new(matrix)?;
    let b_norm = norm2(b);
    let report = |x: Vec<f64>, iterations: usize, rel: f64| SolveReport {
        solution: x,
        method: SolveMethod::Iterative,
        iterations,
        relative_residual: rel,
        converged: rel <= tol.max(RESIDUAL_TOL),
    };
    if b_norm == 0.0 {
        return Ok(report(vec![0.0; n], 0, 0.0));
    }

    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut best = (x.clone(), 1.0);
    // restarts in a row that failed to halve the best true residual
    let mut stalled = 0;
    // recomputes the true residual and starts a fresh Krylov space from x
    let restart = |x: &[f64], r: &mut Vec<f64>, r_hat: &mut Vec<f64>, p: &mut Vec<f64>, v: &mut Vec<f64>| {
        *r = matrix.matvec(x).iter().zip(b).map(|(ax, bi)| bi - ax).collect();
        *r_hat = r.clone();
        p.iter_mut().for_each(|e| *e = 0.0);
        v.iter_mut().for_each(|e| *e = 0.0);
    };

    for it in 1..=max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new.abs() < 1e-300 {
            restart(&x, &mut r, &mut r_hat, &mut p, &mut v);
            (rho, alpha, omega) = (1.0, 1.0, 1.0);
            continue;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        let p_hat = precond.apply(&p);
        v = matrix.matvec(&p_hat);
        alpha = rho / dot(&r_hat, &v);
        let s: Vec<f64> = r.iter().zip(&v).map(|(ri, vi)| ri - alpha * vi).collect();
        let (s_hat, t, omega_new) = if norm2(&s) / b_norm <= tol {
            (vec![0.0; n], vec![0.0; n], 0.0)
        } else {
            let s_hat = precond.apply(&s);
            let t = matrix.matvec(&s_hat);
            let tt = dot(&t, &t);
            let om = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
            (s_hat, t, om)
        };
        omega = omega_new;
        for i in 0..n {
            x[i] += alpha * p_hat[i] + omega * s_hat[i];
            r[i] = s[i] - omega * t[i];
        }
        let rel = norm2(&r) / b_norm;
        if rel <= tol || omega == 0.0 || !rel.is_finite() {
            let (_, true_rel) = relative_residual(matrix, &x, b, b_norm);
            stalled = if true_rel < 0.5 * best.1 { 0 } else { stalled + 1 };
            if true_rel < best.1 {
                best = (x.clone(), true_rel);
            }
            if true_rel <= tol {
                return Ok(report(x, it, true_rel));
            }
            if !true_rel.is_finite() || stalled >= MAX_STALLED_RESTARTS {
                let (x, rel) = best;
                return Ok(report(x, it, rel));
            }
            x = best.0.clone();
            restart(&x, &mut r, &mut r_hat, &mut p, &mut v);
            (rho, alpha, omega) = (1.0, 1.0, 1.0);
        }
    }
    let (_, rel) = relative_residual(matrix, &x, b, b_norm);
    let (x, rel) = if rel.is_finite() && rel < best.1 { (x, rel) } else { best };
    Ok(report(x, max_iter, rel))
}

/// Max-abs and relative-l2 error between a numerical and an exact solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorNorms {
    pub max_abs: f64,
    pub rel_l2: f64,
    /// Set when the exact solution is zero and `rel_l2` holds the absolute l2 error.
    pub rel_l2_is_absolute: bool,
}

pub fn error_norms(numeric: &[f64], exact: &[f64]) -> Result<ErrorNorms> {
    if numeric.len() != exact.len() {
        return Err(Error::InvalidInput(format!(
            "length mismatch: {} numeric vs {} exact values",
            numeric.len(),
            exact.len()
        )));
    }
    let diff: Vec<f64> = numeric.iter().zip(exact).map(|(a, b)| a - b).collect();
    let max_abs = diff.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
    let l2 = norm2(&diff);
    let exact_norm = norm2(exact);
    Ok(if exact_norm > 0.0 {
        ErrorNorms { max_abs, rel_l2: l2 / exact_norm, rel_l2_is_absolute: false }
    } else {
        ErrorNorms { max_abs, rel_l2: l2, rel_l2_is_absolute: true }
    })
}
