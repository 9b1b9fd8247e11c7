//! Small dense linear programs over H-representations, backed by `minilp`.

use minilp::{ComparisonOp, OptimizationDirection, Problem};

use crate::linalg::{Mat, Vector};

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { value: f64, point: Vector },
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn value(&self) -> Option<f64> {
        match self {
            LpOutcome::Optimal { value, .. } => Some(*value),
            _ => None,
        }
    }
}

/// `max c·x  s.t.  a x ≤ b`, with `x` free.
pub fn maximize(c: &[f64], a: &Mat, b: &Vector) -> LpOutcome {
    maximize_skipping(c, a, b, None)
}

/// Same as [`maximize`] but ignoring row `skip` of the constraint matrix.
pub fn maximize_skipping(c: &[f64], a: &Mat, b: &Vector, skip: Option<usize>) -> LpOutcome {
    let n = a.ncols();
    debug_assert_eq!(c.len(), n);
    let mut problem = Problem::new(OptimizationDirection::Maximize);
    let vars: Vec<_> = c
        .iter()
        .map(|&ci| problem.add_var(ci, (f64::NEG_INFINITY, f64::INFINITY)))
        .collect();
    for i in (0..a.nrows()).filter(|&i| Some(i) != skip) {
        let terms: Vec<_> = (0..n)
            .filter(|&j| a[(i, j)] != 0.0)
            .map(|j| (vars[j], a[(i, j)]))
            .collect();
        if terms.is_empty() {
            if b[i] < -1e-9 {
                return LpOutcome::Infeasible;
            }
            continue;
        }
        problem.add_constraint(terms.as_slice(), ComparisonOp::Le, b[i]);
    }
    match problem.solve() {
        Ok(sol) => {
            let point = Vector::from_iterator(n, vars.iter().map(|&v| sol[v]));
            // free variables can come back as an infinite "optimum"
            if !sol.objective().is_finite() || point.iter().any(|v| !v.is_finite()) {
                return LpOutcome::Unbounded;
            }
            LpOutcome::Optimal {
                value: sol.objective(),
                point,
            }
        }
        Err(minilp::Error::Infeasible) => LpOutcome::Infeasible,
        Err(minilp::Error::Unbounded) => LpOutcome::Unbounded,
    }
}

/// Center and radius of the largest Euclidean ball inside `{x : a x ≤ b}`.
///
/// The radius is capped at `radius_cap` so that unbounded sets still yield a
/// finite answer. The radius is free, so an empty set shows up as a
/// negative radius; `None` signals a solver failure.
pub fn chebyshev_center(a: &Mat, b: &Vector, radius_cap: f64) -> Option<(Vector, f64)> {
    let n = a.ncols();
    let mut problem = Problem::new(OptimizationDirection::Maximize);
    let vars: Vec<_> = (0..n)
        .map(|_| problem.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY)))
        .collect();
    let r = problem.add_var(1.0, (f64::NEG_INFINITY, radius_cap));
    for i in 0..a.nrows() {
        let norm = a.row(i).norm();
        let mut terms: Vec<_> = (0..n)
            .filter(|&j| a[(i, j)] != 0.0)
            .map(|j| (vars[j], a[(i, j)]))
            .collect();
        terms.push((r, norm));
        problem.add_constraint(terms.as_slice(), ComparisonOp::Le, b[i]);
    }
    match problem.solve() {
        Ok(sol) => {
            let center = Vector::from_iterator(n, vars.iter().map(|&v| sol[v]));
            (sol[r].is_finite() && center.iter().all(|v| v.is_finite())).then_some((center, sol[r]))
        }
        Err(_) => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box() -> (Mat, Vector) {
        let a = Mat::from_row_slice(4, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]);
        (a, Vector::from_element(4, 1.0))
    }

    #[test]
    fn box_lp_optimum() {
        let (a, b) = unit_box();
        let out = maximize(&[1.0, 2.0], &a, &b);
        assert!((out.value().unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn skipping_a_row_makes_it_unbounded() {
        let (a, b) = unit_box();
        assert_eq!(maximize_skipping(&[1.0, 0.0], &a, &b, Some(0)), LpOutcome::Unbounded);
    }

    #[test]
    fn infeasible_system() {
        let a = Mat::from_row_slice(2, 1, &[1.0, -1.0]);
        let b = Vector::from_vec(vec![-1.0, -1.0]);
        assert_eq!(maximize(&[1.0], &a, &b), LpOutcome::Infeasible);
        let (_, r) = chebyshev_center(&a, &b, 1e6).unwrap();
        assert!((r + 1.0).abs() < 1e-9);
    }

    #[test]
    fn chebyshev_of_box() {
        let (a, b) = unit_box();
        let (c, r) = chebyshev_center(&a, &b, 1e6).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        assert!(c.norm() < 1e-12);
    }
}
