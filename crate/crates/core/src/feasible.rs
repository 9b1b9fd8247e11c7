//! N-step feasible sets: the exact union of polytopes obtained by backward
//! one-step controllable sets, and its planar convex outer approximation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{convex_hull_union_2d, Polytope, FEAS_TOL};
use crate::linalg::Vector;
use crate::model::SwitchedAffineSystem;
use crate::{Error, Result};

/// Largest number of pieces the exact union may hold.
pub const PIECE_BUDGET: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeasibleKind {
    ExactUnion,
    OuterHull,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibleSetResult {
    pub kind: FeasibleKind,
    pub horizon: usize,
    /// `per_step[i]` represents the i-step set: a union of pieces, or a
    /// single hull (empty list when the hull is empty).
    pub per_step: Vec<Vec<Polytope>>,
}

impl FeasibleSetResult {
    /// Membership of `x` in the `i`-step set, scanning its pieces.
    pub fn contains(&self, i: usize, x: &Vector) -> bool {
        self.per_step
            .get(i)
            .is_some_and(|pieces| pieces.iter().any(|p| p.contains_point(x, FEAS_TOL)))
    }

    /// The `N`-step set.
    pub fn last(&self) -> &[Polytope] {
        self.per_step.last().map_or(&[], Vec::as_slice)
    }
}

/// `{x ∈ 𝕏 : A_u x + b_u ∈ target}`; `None` when it has no interior.
pub fn one_step_controllable(
    sys: &SwitchedAffineSystem,
    target: &Polytope,
    input_index: usize,
) -> Result<Option<Polytope>> {
    sys.check_index(input_index)?;
    let mode = sys.mode(input_index);
    let x_set = sys.state_constraints();
    let set = match target.translate(&(-&mode.b))?.preimage(&mode.a) {
        Ok(pre) => pre.intersect(x_set)?,
        Err(Error::Unbounded) => {
            // constant map: either everything or nothing reaches the target
            if target.contains_point(&mode.b, FEAS_TOL) {
                x_set.remove_redundancy()?
            } else {
                return Ok(None);
            }
        }
        Err(e) => return Err(e),
    };
    Ok(set.has_interior().then_some(set))
}

fn dedup_push(pieces: &mut Vec<Polytope>, piece: Polytope) -> Result<()> {
    for q in pieces.iter() {
        if q.set_eq(&piece)? {
            return Ok(());
        }
    }
    pieces.push(piece);
    Ok(())
}

/// Exact `𝕏_f(N)` starting from `𝕏_f(0) = ⋃ terminal_sets`.
pub fn exact_feasible_union(
    sys: &SwitchedAffineSystem,
    terminal_sets: &[Polytope],
    horizon: usize,
) -> Result<FeasibleSetResult> {
    let mut current = Vec::new();
    for t in terminal_sets {
        if t.has_interior() {
            dedup_push(&mut current, t.remove_redundancy()?)?;
        }
    }
    let mut per_step = vec![current.clone()];
    for _ in 0..horizon {
        let candidates = current.len() * sys.num_inputs();
        if candidates > PIECE_BUDGET {
            return Err(Error::BudgetExceeded {
                required: candidates as u128,
                budget: PIECE_BUDGET as u128,
            });
        }
        let mapped: Vec<Vec<Option<Polytope>>> = (0..sys.num_inputs())
            .into_par_iter()
            .map(|u| {
                current
                    .iter()
                    .map(|piece| one_step_controllable(sys, piece, u))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let mut next = Vec::new();
        for piece in mapped.into_iter().flatten().flatten() {
            dedup_push(&mut next, piece)?;
        }
        per_step.push(next.clone());
        current = next;
    }
    Ok(FeasibleSetResult {
        kind: FeasibleKind::ExactUnion,
        horizon,
        per_step,
    })
}

fn hull_of(sets: &[Polytope]) -> Result<Option<Polytope>> {
    if sets.is_empty() {
        return Ok(None);
    }
    Ok(Some(convex_hull_union_2d(sets)?))
}

/// Convex outer approximation: hull of the terminal sets, then `N` rounds of
/// per-input one-step sets followed by the hull of their union.
pub fn outer_hull_feasible(
    sys: &SwitchedAffineSystem,
    terminal_sets: &[Polytope],
    horizon: usize,
) -> Result<FeasibleSetResult> {
    if sys.n_x() != 2 {
        return Err(Error::UnsupportedDimension(sys.n_x()));
    }
    let nonempty: Vec<Polytope> = terminal_sets.iter().filter(|t| t.has_interior()).cloned().collect();
    let mut current = hull_of(&nonempty)?;
    let mut per_step = vec![current.iter().cloned().collect::<Vec<_>>()];
    for _ in 0..horizon {
        let next = match &current {
            None => None,
            Some(hull) => {
                let pieces: Vec<Polytope> = (0..sys.num_inputs())
                    .into_par_iter()
                    .map(|u| one_step_controllable(sys, hull, u))
                    .collect::<Result<Vec<_>>>()?
                    .into_iter()
                    .flatten()
                    .collect();
                hull_of(&pieces)?
            }
        };
        per_step.push(next.iter().cloned().collect());
        current = next;
    }
    Ok(FeasibleSetResult {
        kind: FeasibleKind::OuterHull,
        horizon,
        per_step,
    })
}

/// Fraction of grid points inside `hull` that no piece of `union` contains.
/// A diagnostic for how much the convex relaxation adds.
pub fn hull_gap_estimate(hull: &Polytope, union: &[Polytope], resolution: usize) -> Result<f64> {
    if hull.dim() != 2 {
        return Err(Error::UnsupportedDimension(hull.dim()));
    }
    let verts = hull.vertices_2d()?;
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for v in &verts {
        for k in 0..2 {
            lo[k] = lo[k].min(v[k]);
            hi[k] = hi[k].max(v[k]);
        }
    }
    let res = resolution.max(2);
    let (mut inside, mut missed) = (0usize, 0usize);
    for i in 0..res {
        for j in 0..res {
            let x = Vector::from_vec(vec![
                lo[0] + (hi[0] - lo[0]) * (i as f64 + 0.5) / res as f64,
                lo[1] + (hi[1] - lo[1]) * (j as f64 + 0.5) / res as f64,
            ]);
            if hull.contains_point(&x, 0.0) {
                inside += 1;
                if !union.iter().any(|p| p.contains_point(&x, FEAS_TOL)) {
                    missed += 1;
                }
            }
        }
    }
    Ok(if inside == 0 { 0.0 } else { missed as f64 / inside as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;
    use crate::model::{FiniteInputSet, Mode};

    fn scalar_system(modes: &[(f64, f64)], bound: f64) -> SwitchedAffineSystem {
        let modes = modes
            .iter()
            .map(|&(a, b)| Mode {
                a: Mat::from_element(1, 1, a),
                b: Vector::from_element(1, b),
                c: Mat::identity(1, 1),
                d: Vector::zeros(1),
            })
            .collect::<Vec<_>>();
        let inputs: Vec<f64> = (0..modes.len()).map(|i| i as f64).collect();
        SwitchedAffineSystem::new(
            modes,
            FiniteInputSet::scalars(&inputs).unwrap(),
            Polytope::from_box(&[-bound], &[bound]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn identity_keeps_target() {
        let sys = scalar_system(&[(1.0, 0.0)], 10.0);
        let set = one_step_controllable(&sys, sys.state_constraints(), 0).unwrap().unwrap();
        assert!(set.set_eq(sys.state_constraints()).unwrap());
    }

    #[test]
    fn expanding_map_shrinks() {
        let sys = scalar_system(&[(2.0, 0.0)], 10.0);
        let target = Polytope::from_box(&[-1.0], &[1.0]).unwrap();
        let set = one_step_controllable(&sys, &target, 0).unwrap().unwrap();
        assert!(set.set_eq(&Polytope::from_box(&[-0.5], &[0.5]).unwrap()).unwrap());
    }

    #[test]
    fn zero_horizon_returns_terminal_sets() {
        let sys = scalar_system(&[(0.5, 0.0), (0.5, 1.0)], 10.0);
        let t = Polytope::from_box(&[-1.0], &[1.0]).unwrap();
        let r = exact_feasible_union(&sys, &[t.clone(), t.clone()], 0).unwrap();
        assert_eq!(r.per_step.len(), 1);
        assert_eq!(r.per_step[0].len(), 1);
    }

    #[test]
    fn constant_map_reaches_everything_or_nothing() {
        let sys = scalar_system(&[(0.0, 0.5), (0.0, 5.0)], 10.0);
        let target = Polytope::from_box(&[-1.0], &[1.0]).unwrap();
        assert!(one_step_controllable(&sys, &target, 0).unwrap().is_some());
        assert!(one_step_controllable(&sys, &target, 1).unwrap().is_none());
    }
}
