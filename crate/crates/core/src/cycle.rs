//! Periodic steady states (limit cycles) generated by periodic input
//! sequences, and exhaustive synthesis of the cycle whose mean output best
//! matches a reference.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{distance_to_unit_eigenvalue, serde_vec_list, Mat, Vector};
use crate::model::SwitchedAffineSystem;
use crate::{Error, Result};

/// Largest `N_s^p` accepted by [`synthesize_optimal_cycle`].
pub const ENUMERATION_BUDGET: u128 = 10_000_000;
/// Eigenvalues closer than this to 1 break cycle uniqueness.
pub const UNIT_EIGENVALUE_TOL: f64 = 1e-9;
/// Condition number of the stacked cycle matrix above which a warning is kept.
pub const ILL_CONDITIONED: f64 = 1e12;
/// Closed membership slack for the state constraint check.
pub const STATE_CONSTRAINT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitCycle {
    pub input_indices: Vec<usize>,
    #[serde(with = "serde_vec_list")]
    pub states: Vec<Vector>,
    #[serde(with = "serde_vec_list")]
    pub outputs: Vec<Vector>,
    pub closure_residual: f64,
    /// Condition number of `M_p` when it exceeded [`ILL_CONDITIONED`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition_warning: Option<f64>,
}

impl LimitCycle {
    pub fn period(&self) -> usize {
        self.input_indices.len()
    }

    pub fn state(&self, j: usize) -> &Vector {
        &self.states[j % self.period()]
    }

    pub fn input_index(&self, j: usize) -> usize {
        self.input_indices[j % self.period()]
    }

    fn scale(&self) -> f64 {
        1.0 + self.states.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    /// Largest defect of `x_{j+1} = A_j x_j + b_j` over the period (closing
    /// step included), relative to the cycle magnitude.
    pub fn dynamics_defect(&self, sys: &SwitchedAffineSystem) -> f64 {
        let p = self.period();
        (0..p)
            .map(|j| {
                let m = sys.mode(self.input_indices[j]);
                (&m.a * &self.states[j] + &m.b - &self.states[(j + 1) % p]).norm()
            })
            .fold(0.0, f64::max)
            / self.scale()
    }

    /// Checks the stored invariants against `sys`.
    pub fn validate(&self, sys: &SwitchedAffineSystem) -> Result<()> {
        let p = self.period();
        if p == 0 || self.states.len() != p || self.outputs.len() != p {
            return Err(Error::invalid("limit cycle sequences have inconsistent lengths"));
        }
        for &i in &self.input_indices {
            sys.check_index(i)?;
        }
        if self.states.iter().any(|x| x.len() != sys.n_x()) {
            return Err(Error::invalid("limit cycle state dimension differs from n_x"));
        }
        let defect = self.dynamics_defect(sys);
        if defect > 1e-9 {
            return Err(Error::invalid(format!("limit cycle violates the dynamics (defect {defect:e})")));
        }
        for j in 0..p {
            let y = sys.output(&self.states[j], self.input_indices[j]);
            if (&y - &self.outputs[j]).norm() > 1e-9 * (1.0 + y.norm()) {
                return Err(Error::invalid(format!("limit cycle output {j} is inconsistent")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CycleNorm {
    #[serde(rename = "1")]
    L1,
    #[serde(rename = "2")]
    L2,
    #[serde(rename = "inf")]
    Inf,
}

/// Cost of a cycle: a norm of the mean output error over one period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleCostSpec {
    pub norm: CycleNorm,
    /// Constant (length 1) or periodic output reference.
    #[serde(with = "serde_vec_list")]
    pub reference: Vec<Vector>,
}

impl CycleCostSpec {
    pub fn constant(norm: CycleNorm, reference: Vector) -> Self {
        CycleCostSpec {
            norm,
            reference: vec![reference],
        }
    }

    fn reference_at(&self, j: usize) -> &Vector {
        &self.reference[j % self.reference.len()]
    }

    fn check(&self, p: usize, n_y: usize) -> Result<()> {
        let len = self.reference.len();
        if len == 0 || p % len != 0 {
            return Err(Error::invalid(format!(
                "reference length {len} does not divide the period {p}"
            )));
        }
        if self.reference.iter().any(|r| r.len() != n_y) {
            return Err(Error::invalid("reference dimension differs from n_y"));
        }
        Ok(())
    }
}

/// Monodromy matrix `A_0 A_1 ⋯ A_{p−1}` (written order).
pub fn monodromy(sys: &SwitchedAffineSystem, input_indices: &[usize]) -> Result<Mat> {
    let n = sys.n_x();
    let mut m = Mat::identity(n, n);
    for &i in input_indices {
        sys.check_index(i)?;
        m *= &sys.mode(i).a;
    }
    Ok(m)
}

/// Affine map over one period, `x_p = Ψ x_0 + c` with `Ψ = A_{p−1} ⋯ A_0`.
pub fn period_map(sys: &SwitchedAffineSystem, input_indices: &[usize]) -> Result<(Mat, Vector)> {
    let n = sys.n_x();
    let mut psi = Mat::identity(n, n);
    let mut c = Vector::zeros(n);
    for &i in input_indices {
        sys.check_index(i)?;
        let m = sys.mode(i);
        psi = &m.a * psi;
        c = &m.a * c + &m.b;
    }
    Ok((psi, c))
}

/// Solves `M_p X_p = 𝐛_p` for the unique cycle generated by `input_indices`.
pub fn solve_cycle(sys: &SwitchedAffineSystem, input_indices: &[usize]) -> Result<LimitCycle> {
    let p = input_indices.len();
    if p == 0 {
        return Err(Error::invalid("cycle period must be at least 1"));
    }
    let (psi, _) = period_map(sys, input_indices)?;
    let (dist, re) = distance_to_unit_eigenvalue(&psi);
    if dist < UNIT_EIGENVALUE_TOL {
        return Err(Error::NoUniqueCycle {
            indices: input_indices.to_vec(),
            eigenvalue: re,
        });
    }

    let n = sys.n_x();
    let dim = n * p;
    let mut m = Mat::zeros(dim, dim);
    let mut rhs = Vector::zeros(dim);
    for (j, &i) in input_indices.iter().enumerate() {
        let mode = sys.mode(i);
        let next = (j + 1) % p;
        m.view_mut((j * n, j * n), (n, n)).copy_from(&mode.a);
        let mut off = m.view_mut((j * n, next * n), (n, n));
        for k in 0..n {
            off[(k, k)] -= 1.0;
        }
        rhs.rows_mut(j * n, n).copy_from(&(-&mode.b));
    }
    // p = 1 puts A_0 − I on the diagonal, matching the single equation x = A x + b.
    let lu = m.clone().lu();
    let xp = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("cycle matrix is singular".into()))?;
    let sv = m.singular_values();
    let cond = sv.max() / sv.min();

    let states: Vec<Vector> = (0..p).map(|j| xp.rows(j * n, n).into_owned()).collect();
    let outputs = states
        .iter()
        .zip(input_indices)
        .map(|(x, &i)| sys.output(x, i))
        .collect();
    let last = sys.mode(input_indices[p - 1]);
    let closure_residual = (&last.a * &states[p - 1] + &last.b - &states[0]).norm();
    Ok(LimitCycle {
        input_indices: input_indices.to_vec(),
        states,
        outputs,
        closure_residual,
        condition_warning: (cond > ILL_CONDITIONED || !cond.is_finite()).then_some(cond),
    })
}

/// Chosen norm of `(1/p) Σ_j (y_lc(j) − ȳ(j))`.
pub fn cycle_cost(cycle: &LimitCycle, spec: &CycleCostSpec) -> Result<f64> {
    let p = cycle.period();
    let n_y = cycle.outputs[0].len();
    spec.check(p, n_y)?;
    let mut mean = Vector::zeros(n_y);
    for j in 0..p {
        mean += &cycle.outputs[j] - spec.reference_at(j);
    }
    mean /= p as f64;
    Ok(match spec.norm {
        CycleNorm::L1 => mean.iter().map(|v| v.abs()).sum(),
        CycleNorm::L2 => mean.norm(),
        CycleNorm::Inf => mean.amax(),
    })
}

/// Lexicographically smallest cyclic rotation.
pub fn canonical_rotation(seq: &[usize]) -> Vec<usize> {
    (0..seq.len().max(1))
        .map(|r| seq.iter().cycle().skip(r).take(seq.len()).copied().collect::<Vec<_>>())
        .min()
        .unwrap_or_default()
}

fn decode(mut code: u128, base: usize, p: usize) -> Vec<usize> {
    let mut seq = vec![0; p];
    for slot in seq.iter_mut().rev() {
        *slot = (code % base as u128) as usize;
        code /= base as u128;
    }
    seq
}

/// Exact minimizer of [`cycle_cost`] over all `N_s^p` periodic input
/// sequences, one representative per rotation class.
///
/// Sequences without a unique cycle are skipped; with `constraints_on`, so are
/// cycles leaving the state constraint set. Ties go to the lexicographically
/// smallest canonical sequence.
pub fn synthesize_optimal_cycle(
    sys: &SwitchedAffineSystem,
    p: usize,
    spec: &CycleCostSpec,
    constraints_on: bool,
) -> Result<(LimitCycle, f64)> {
    if p == 0 {
        return Err(Error::invalid("cycle period must be at least 1"));
    }
    spec.check(p, sys.n_y())?;
    let base = sys.num_inputs();
    let total = (base as u128)
        .checked_pow(p as u32)
        .filter(|&t| t <= ENUMERATION_BUDGET)
        .ok_or(Error::BudgetExceeded {
            required: (base as f64).powi(p as i32) as u128,
            budget: ENUMERATION_BUDGET,
        })?;
    let periodic_reference = spec.reference.len() > 1;
    let xset = sys.state_constraints();

    let best = (0..total as u64)
        .into_par_iter()
        .filter_map(|code| {
            let seq = decode(code as u128, base, p);
            // A periodic reference is phase-locked, so rotations are distinct
            // candidates there.
            if !periodic_reference && canonical_rotation(&seq) != seq {
                return None;
            }
            let cycle = solve_cycle(sys, &seq).ok()?;
            if constraints_on
                && !cycle
                    .states
                    .iter()
                    .all(|x| xset.contains_point(x, STATE_CONSTRAINT_TOL))
            {
                return None;
            }
            let cost = cycle_cost(&cycle, spec).ok()?;
            Some((cost, cycle))
        })
        .reduce_with(|a, b| match a.0.total_cmp(&b.0) {
            std::cmp::Ordering::Less => a,
            std::cmp::Ordering::Greater => b,
            std::cmp::Ordering::Equal => {
                if a.1.input_indices <= b.1.input_indices {
                    a
                } else {
                    b
                }
            }
        });
    best.map(|(c, cyc)| (cyc, c))
        .ok_or(Error::NoFeasibleCycle { period: p })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Polytope;
    use crate::model::{FiniteInputSet, Mode};

    fn scalar_system(modes: &[(f64, f64)]) -> SwitchedAffineSystem {
        let modes = modes
            .iter()
            .map(|&(a, b)| Mode {
                a: Mat::from_element(1, 1, a),
                b: Vector::from_element(1, b),
                c: Mat::from_element(1, 1, 1.0),
                d: Vector::zeros(1),
            })
            .collect::<Vec<_>>();
        let inputs = FiniteInputSet::scalars(&(0..modes.len()).map(|i| i as f64).collect::<Vec<_>>()).unwrap();
        SwitchedAffineSystem::new(modes, inputs, Polytope::from_box(&[-100.0], &[100.0]).unwrap()).unwrap()
    }

    #[test]
    fn monodromy_trivial_cases() {
        let sys = scalar_system(&[(0.0, 1.0)]);
        assert_eq!(monodromy(&sys, &[0]).unwrap()[(0, 0)], 0.0);
        let id = scalar_system(&[(1.0, 0.0)]);
        assert_eq!(monodromy(&id, &[0, 0]).unwrap()[(0, 0)], 1.0);
    }

    #[test]
    fn fixed_point_of_constant_map() {
        let sys = scalar_system(&[(0.0, 1.0)]);
        let c = solve_cycle(&sys, &[0]).unwrap();
        assert_eq!(c.states[0][0], 1.0);
        assert_eq!(c.closure_residual, 0.0);
    }

    #[test]
    fn identity_has_no_unique_cycle() {
        let sys = scalar_system(&[(1.0, 0.0)]);
        assert!(matches!(solve_cycle(&sys, &[0]), Err(Error::NoUniqueCycle { .. })));
    }

    #[test]
    fn mean_error_cancels() {
        let cycle = LimitCycle {
            input_indices: vec![0, 1],
            states: vec![Vector::from_element(1, 1.0), Vector::from_element(1, -1.0)],
            outputs: vec![Vector::from_element(1, 1.0), Vector::from_element(1, -1.0)],
            closure_residual: 0.0,
            condition_warning: None,
        };
        let spec = CycleCostSpec::constant(CycleNorm::L1, Vector::zeros(1));
        assert_eq!(cycle_cost(&cycle, &spec).unwrap(), 0.0);
        let on_ref = CycleCostSpec {
            norm: CycleNorm::Inf,
            reference: cycle.outputs.clone(),
        };
        assert_eq!(cycle_cost(&cycle, &on_ref).unwrap(), 0.0);
    }

    #[test]
    fn reference_length_must_divide_period() {
        let sys = scalar_system(&[(0.5, 1.0), (0.5, -1.0)]);
        let spec = CycleCostSpec {
            norm: CycleNorm::L1,
            reference: vec![Vector::zeros(1), Vector::zeros(1)],
        };
        assert!(synthesize_optimal_cycle(&sys, 3, &spec, true).is_err());
        assert!(synthesize_optimal_cycle(&sys, 4, &spec, true).is_ok());
    }

    #[test]
    fn exact_fixed_point_mode_wins_at_period_one() {
        // mode 1 has fixed point 2 = reference
        let sys = scalar_system(&[(0.5, 3.0), (0.5, 1.0)]);
        let spec = CycleCostSpec::constant(CycleNorm::L1, Vector::from_element(1, 2.0));
        let (cycle, cost) = synthesize_optimal_cycle(&sys, 1, &spec, true).unwrap();
        assert_eq!(cycle.input_indices, vec![1]);
        assert!(cost.abs() < 1e-15);
    }

    #[test]
    fn budget_guard() {
        let sys = scalar_system(&[(0.5, 3.0), (0.5, 1.0), (0.2, 0.0), (0.1, 0.0)]);
        let spec = CycleCostSpec::constant(CycleNorm::L1, Vector::zeros(1));
        assert!(matches!(
            synthesize_optimal_cycle(&sys, 12, &spec, true),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn infeasible_constraints_violate_assumption() {
        let sys = scalar_system(&[(0.5, 300.0)]);
        let spec = CycleCostSpec::constant(CycleNorm::L1, Vector::zeros(1));
        assert!(matches!(
            synthesize_optimal_cycle(&sys, 2, &spec, true),
            Err(Error::NoFeasibleCycle { period: 2 })
        ));
        assert!(synthesize_optimal_cycle(&sys, 2, &spec, false).is_ok());
    }

    #[test]
    fn canonical_rotation_examples() {
        assert_eq!(canonical_rotation(&[2, 0, 1]), vec![0, 1, 2]);
        assert_eq!(canonical_rotation(&[1, 0, 0]), vec![0, 0, 1]);
        assert_eq!(canonical_rotation(&[0, 0, 1, 1, 3, 2]), vec![0, 0, 1, 1, 3, 2]);
    }
}
