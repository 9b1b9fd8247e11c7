//! Log-det barrier method for small max-det problems
//!
//! ```text
//! maximize   Σ_g log det G_g(x)
//! subject to F_k(x) ⪰ 0
//! ```
//!
//! with every `G_g`, `F_k` affine and symmetric in `x`. Each outer iteration
//! minimizes `−t Σ log det G_g − Σ log det F_k` by damped Newton steps from a
//! strictly feasible start, then grows `t` until the duality-gap bound
//! `Σ dim F_k / t` is below the requested tolerance.

use crate::linalg::{Mat, Vector};
use crate::{Error, Result};

/// `base + Σ x_a · coeff_a` with symmetric matrices.
#[derive(Debug, Clone)]
pub struct AffineSym {
    pub base: Mat,
    pub terms: Vec<(usize, Mat)>,
}

impl AffineSym {
    pub fn eval(&self, x: &Vector) -> Mat {
        let mut m = self.base.clone();
        for (a, c) in &self.terms {
            m += c * x[*a];
        }
        m
    }

    fn size(&self) -> usize {
        self.base.nrows()
    }
}

#[derive(Debug, Clone)]
pub struct MaxDetProblem {
    pub num_vars: usize,
    pub objective: Vec<AffineSym>,
    pub constraints: Vec<AffineSym>,
}

#[derive(Debug, Clone, Copy)]
pub struct MaxDetOptions {
    pub gap_tol: f64,
    pub t0: f64,
    pub mu: f64,
    pub max_newton: usize,
}

impl Default for MaxDetOptions {
    fn default() -> Self {
        MaxDetOptions {
            gap_tol: 1e-8,
            t0: 1.0,
            mu: 8.0,
            max_newton: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MaxDetSolution {
    pub x: Vector,
    /// `Σ log det G_g(x)` at the returned point.
    pub objective: f64,
    pub newton_steps: usize,
}

struct Factored {
    inv: Mat,
    log_det: f64,
}

fn factor(m: &Mat) -> Option<Factored> {
    let chol = m.clone().cholesky()?;
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    if !log_det.is_finite() {
        return None;
    }
    Some(Factored {
        inv: chol.inverse(),
        log_det,
    })
}

impl MaxDetProblem {
    fn barrier(&self, x: &Vector, t: f64) -> Option<f64> {
        let mut v = 0.0;
        for g in &self.objective {
            v -= t * factor(&g.eval(x))?.log_det;
        }
        for f in &self.constraints {
            v -= factor(&f.eval(x))?.log_det;
        }
        Some(v)
    }

    fn objective_value(&self, x: &Vector) -> Option<f64> {
        self.objective
            .iter()
            .map(|g| factor(&g.eval(x)).map(|f| f.log_det))
            .sum()
    }

    /// Gradient and Hessian of the barrier at a strictly feasible `x`.
    fn derivatives(&self, x: &Vector, t: f64) -> Option<(Vector, Mat)> {
        let n = self.num_vars;
        let mut grad = Vector::zeros(n);
        let mut hess = Mat::zeros(n, n);
        let blocks = self
            .objective
            .iter()
            .map(|g| (g, t))
            .chain(self.constraints.iter().map(|f| (f, 1.0)));
        for (block, weight) in blocks {
            let inv = factor(&block.eval(x))?.inv;
            let scaled: Vec<(usize, Mat)> = block.terms.iter().map(|(a, c)| (*a, &inv * c)).collect();
            for (a, sa) in &scaled {
                grad[*a] -= weight * sa.trace();
                for (b, sb) in &scaled {
                    // tr(S_a S_b)
                    hess[(*a, *b)] += weight * sa.component_mul(&sb.transpose()).sum();
                }
            }
        }
        Some((grad, hess))
    }

    fn is_strictly_feasible(&self, x: &Vector) -> bool {
        self.objective
            .iter()
            .chain(self.constraints.iter())
            .all(|m| factor(&m.eval(x)).is_some())
    }
}

/// Solves `problem` starting from the strictly feasible point `x0`.
pub fn solve(problem: &MaxDetProblem, x0: &Vector, opts: &MaxDetOptions) -> Result<MaxDetSolution> {
    if x0.len() != problem.num_vars {
        return Err(Error::invalid("starting point has the wrong dimension"));
    }
    if !problem.is_strictly_feasible(x0) {
        return Err(Error::invalid("starting point is not strictly feasible"));
    }
    let barrier_dim: usize = problem.constraints.iter().map(AffineSym::size).sum();
    let mut x = x0.clone();
    let mut t = opts.t0;
    let mut steps = 0;
    loop {
        // centering
        for _ in 0..opts.max_newton {
            let (g, h) = problem
                .derivatives(&x, t)
                .ok_or_else(|| Error::Numerical("lost strict feasibility".into()))?;
            let Some(chol) = h.clone().cholesky() else {
                return Err(Error::Numerical("barrier Hessian is not positive definite".into()));
            };
            let dx = -chol.solve(&g);
            let decrement_sq = -g.dot(&dx);
            steps += 1;
            if decrement_sq / 2.0 < 1e-12 {
                break;
            }
            let f0 = problem.barrier(&x, t).unwrap_or(f64::INFINITY);
            let mut s = 1.0;
            loop {
                let cand = &x + &dx * s;
                if let Some(f) = problem.barrier(&cand, t) {
                    if f <= f0 - 0.25 * s * decrement_sq {
                        x = cand;
                        break;
                    }
                }
                s *= 0.5;
                if s < 1e-14 {
                    break;
                }
            }
            if s < 1e-14 {
                break;
            }
        }
        if barrier_dim as f64 / t < opts.gap_tol {
            break;
        }
        t *= opts.mu;
    }
    let objective = problem
        .objective_value(&x)
        .ok_or_else(|| Error::Numerical("objective undefined at solution".into()))?;
    Ok(MaxDetSolution {
        x,
        objective,
        newton_steps: steps,
    })
}
