//! Periodic quadratic terminal costs `F_j(z) = zᵀ P_j z` satisfying
//! `Ā_jᵀ P_{j+1 mod p} Ā_j − P_j + Q ⪯ 0` along the cycle input law.

use serde::{Deserialize, Serialize};

use crate::cycle::{period_map, LimitCycle};
use crate::linalg::{max_sym_eigenvalue, min_sym_eigenvalue, serde_mat, serde_mat_list, spectral_radius, symmetrize, Mat, Vector};
use crate::model::SwitchedAffineSystem;
use crate::{Error, Result};

/// Default acceptance threshold for the decrease residuals.
pub const RESIDUAL_TOL: f64 = 1e-7;

/// Quadratic stage cost weights `‖x − x̄‖²_Q + ‖u − ū‖²_R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StageCostRepr", into = "StageCostRepr")]
pub struct StageCost {
    q: Mat,
    r: Mat,
}

#[derive(Serialize, Deserialize)]
struct StageCostRepr {
    #[serde(rename = "Q", with = "serde_mat")]
    q: Mat,
    #[serde(rename = "R", with = "serde_mat")]
    r: Mat,
}

impl TryFrom<StageCostRepr> for StageCost {
    type Error = Error;
    fn try_from(r: StageCostRepr) -> Result<Self> {
        StageCost::new(r.q, r.r)
    }
}

impl From<StageCost> for StageCostRepr {
    fn from(s: StageCost) -> Self {
        StageCostRepr { q: s.q, r: s.r }
    }
}

fn check_pd(name: &str, m: &Mat) -> Result<()> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::invalid(format!("{name} must be square")));
    }
    if (m - m.transpose()).abs().max() > 1e-10 * (1.0 + m.abs().max()) {
        return Err(Error::invalid(format!("{name} must be symmetric")));
    }
    if min_sym_eigenvalue(m) <= 0.0 {
        return Err(Error::invalid(format!("{name} must be positive definite")));
    }
    Ok(())
}

impl StageCost {
    pub fn new(q: Mat, r: Mat) -> Result<Self> {
        check_pd("Q", &q)?;
        check_pd("R", &r)?;
        Ok(StageCost {
            q: symmetrize(&q),
            r: symmetrize(&r),
        })
    }

    pub fn q(&self) -> &Mat {
        &self.q
    }

    pub fn r(&self) -> &Mat {
        &self.r
    }

    pub fn eval(&self, x_err: &Vector, u_err: &Vector) -> f64 {
        x_err.dot(&(&self.q * x_err)) + u_err.dot(&(&self.r * u_err))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicTerminalCost {
    #[serde(rename = "P", with = "serde_mat_list")]
    pub p: Vec<Mat>,
    /// Smallest eigenvalue of `P_j − Ā_jᵀ P_{j+1} Ā_j − Q` for each phase.
    pub residuals: Vec<f64>,
}

impl PeriodicTerminalCost {
    pub fn period(&self) -> usize {
        self.p.len()
    }

    /// `Λ_max = max_j λ_max(P_j)`.
    pub fn lambda_max(&self) -> f64 {
        self.p.iter().map(max_sym_eigenvalue).fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminalCostReport {
    pub min_eig_p: Vec<f64>,
    pub min_eig_decrease: Vec<f64>,
    pub passed: bool,
}

impl TerminalCostReport {
    pub fn worst_decrease(&self) -> f64 {
        self.min_eig_decrease.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.min_eig_p.iter().all(|&e| e > 1e-9) && self.worst_decrease() >= -tol
    }
}

fn cycle_matrices(sys: &SwitchedAffineSystem, cycle: &LimitCycle) -> Result<Vec<Mat>> {
    cycle
        .input_indices
        .iter()
        .map(|&i| {
            sys.check_index(i)?;
            Ok(sys.mode(i).a.clone())
        })
        .collect()
}

/// Solves the periodic Lyapunov equalities `P_j = Ā_jᵀ P_{j+1 mod p} Ā_j + Q`.
///
/// Backward substitution over one period turns the phase-0 equation into
/// the lifted equation `P_0 = Ψᵀ P_0 Ψ + Q̃`, which is solved through its
/// Kronecker-vectorized linear system; the other phases follow backward.
pub fn solve_periodic_lyapunov(
    sys: &SwitchedAffineSystem,
    cycle: &LimitCycle,
    q: &Mat,
) -> Result<PeriodicTerminalCost> {
    let n = sys.n_x();
    if q.shape() != (n, n) {
        return Err(Error::invalid("Q dimension differs from n_x"));
    }
    let a = cycle_matrices(sys, cycle)?;
    let p = a.len();
    let (psi, _) = period_map(sys, &cycle.input_indices)?;
    let radius = spectral_radius(&psi);
    if radius >= 1.0 - 1e-9 {
        return Err(Error::NotStabilizing { radius });
    }

    // P_0 = Σ_j Φ_jᵀ Q Φ_j + Ψᵀ P_0 Ψ with Φ_j = A_{j−1} ⋯ A_0.
    let mut phi = Mat::identity(n, n);
    let mut q_lift = Mat::zeros(n, n);
    for aj in &a {
        q_lift += phi.transpose() * q * &phi;
        phi = aj * phi;
    }
    let pt = psi.transpose();
    let lhs = Mat::identity(n * n, n * n) - pt.kronecker(&pt);
    let rhs = Vector::from_column_slice(q_lift.as_slice());
    let vec_p = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("lifted Lyapunov system is singular".into()))?;
    let p0 = symmetrize(&Mat::from_column_slice(n, n, vec_p.as_slice()));

    let mut mats = vec![Mat::zeros(n, n); p];
    mats[0] = p0;
    for j in (1..p).rev() {
        let next = &mats[(j + 1) % p];
        mats[j] = symmetrize(&(a[j].transpose() * next * &a[j] + q));
    }
    let report = verify_terminal_cost(sys, cycle, q, &mats)?;
    let cost = PeriodicTerminalCost {
        p: mats,
        residuals: report.min_eig_decrease,
    };
    if report.min_eig_p.iter().any(|&e| e <= 1e-9) {
        return Err(Error::Numerical("periodic Lyapunov solution is not positive definite".into()));
    }
    Ok(cost)
}

/// Eigenvalue check of `P_j ≻ 0` and `P_j − Ā_jᵀ P_{j+1 mod p} Ā_j − Q ⪰ 0`.
pub fn verify_terminal_cost(
    sys: &SwitchedAffineSystem,
    cycle: &LimitCycle,
    q: &Mat,
    p_list: &[Mat],
) -> Result<TerminalCostReport> {
    let a = cycle_matrices(sys, cycle)?;
    let p = a.len();
    if p_list.len() != p {
        return Err(Error::invalid(format!(
            "{} terminal matrices for a cycle of period {p}",
            p_list.len()
        )));
    }
    let n = sys.n_x();
    if p_list.iter().any(|m| m.shape() != (n, n)) || q.shape() != (n, n) {
        return Err(Error::invalid("terminal matrix dimension differs from n_x"));
    }
    let min_eig_p: Vec<f64> = p_list.iter().map(min_sym_eigenvalue).collect();
    let min_eig_decrease: Vec<f64> = (0..p)
        .map(|j| {
            let next = &p_list[(j + 1) % p];
            min_sym_eigenvalue(&(&p_list[j] - a[j].transpose() * next * &a[j] - q))
        })
        .collect();
    let mut report = TerminalCostReport {
        min_eig_p,
        min_eig_decrease,
        passed: false,
    };
    report.passed = report.passes(RESIDUAL_TOL);
    Ok(report)
}

/// `x_errᵀ P_{(k+N) mod p} x_err`; `k_plus_n` is the absolute time `k + N`.
pub fn terminal_cost_value(p_list: &[Mat], k_plus_n: usize, x_err: &Vector) -> f64 {
    let pj = &p_list[k_plus_n % p_list.len()];
    x_err.dot(&(pj * x_err))
}
