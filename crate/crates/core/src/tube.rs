//! Periodic invariant tubes for the error dynamics `z(j+1) = Ā_j z(j)` and
//! their lift to state-space terminal sets around the limit cycle.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cycle::{period_map, LimitCycle};
use crate::geometry::{Ellipsoid, Polytope, CONTAIN_TOL, INTERIOR_TOL};
use crate::linalg::{min_sym_eigenvalue, spectral_radius, symmetrize, Mat, Vector};
use crate::lp::LpOutcome;
use crate::lyap::PeriodicTerminalCost;
use crate::maxdet::{self, AffineSym, MaxDetOptions, MaxDetProblem};
use crate::model::SwitchedAffineSystem;
use crate::{Error, Result};

pub const DEFAULT_N_MAX: usize = 500;
/// Margin below which a verification check fails.
pub const VERIFY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TubeKind {
    Ellipsoidal,
    Polytopic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EllipsoidBackend {
    /// Volume maximization by the built-in log-det barrier solver.
    MaxDet,
    /// Common level set of the periodic Lyapunov matrices.
    #[default]
    LevelSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "sets", rename_all = "lowercase")]
pub enum TubeSets {
    Ellipsoidal(Vec<Ellipsoid>),
    Polytopic(Vec<Polytope>),
}

impl TubeSets {
    pub fn kind(&self) -> TubeKind {
        match self {
            TubeSets::Ellipsoidal(_) => TubeKind::Ellipsoidal,
            TubeSets::Polytopic(_) => TubeKind::Polytopic,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TubeSets::Ellipsoidal(v) => v.len(),
            TubeSets::Polytopic(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Membership of `x` in set `j mod p`, with `tol` on the normalized
    /// constraint (polytopes) or on the level (ellipsoids).
    pub fn contains(&self, j: usize, x: &Vector, tol: f64) -> bool {
        match self {
            TubeSets::Ellipsoidal(v) => v[j % v.len()].contains_point(x, tol),
            TubeSets::Polytopic(v) => v[j % v.len()].max_violation(x) <= tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTube {
    #[serde(flatten)]
    pub sets: TubeSets,
    /// `ℤ_j = 𝕏 ⊖ x̄(j)` with unit-norm rows.
    pub constraint_sets: Vec<Polytope>,
    /// Sweeps performed by the polytopic recursion.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
}

impl ErrorTube {
    pub fn kind(&self) -> TubeKind {
        self.sets.kind()
    }

    pub fn period(&self) -> usize {
        self.sets.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateTube {
    #[serde(flatten)]
    pub sets: TubeSets,
}

impl StateTube {
    pub fn period(&self) -> usize {
        self.sets.len()
    }

    pub fn contains(&self, j: usize, x: &Vector, tol: f64) -> bool {
        self.sets.contains(j, x, tol)
    }
}

/// Worst margins of the tube checks, one entry per phase. Negative values
/// are violations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeReport {
    pub invariance: Vec<f64>,
    pub containment: Vec<f64>,
    pub interior: Vec<f64>,
    pub passed: bool,
}

impl TubeReport {
    fn finish(invariance: Vec<f64>, containment: Vec<f64>, interior: Vec<f64>) -> Self {
        let passed = invariance.iter().chain(&containment).all(|&m| m >= -VERIFY_TOL)
            && interior.iter().all(|&m| m > 0.0);
        TubeReport {
            invariance,
            containment,
            interior,
            passed,
        }
    }

    pub fn worst(&self) -> f64 {
        self.invariance
            .iter()
            .chain(&self.containment)
            .copied()
            .fold(f64::INFINITY, f64::min)
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

/// `ℤ_j = 𝕏 ⊖ x̄(j)` with unit-norm rows; fails unless each contains the
/// origin in its interior.
pub fn error_constraint_sets(sys: &SwitchedAffineSystem, cycle: &LimitCycle) -> Result<Vec<Polytope>> {
    (0..cycle.period())
        .map(|j| {
            let z = sys
                .state_constraints()
                .pontryagin_diff_point(cycle.state(j))?
                .normalized();
            if let Some(i) = z.b().iter().position(|&h| h <= 0.0) {
                return Err(Error::NoTube(format!(
                    "origin is not interior to the error constraint set of phase {j} (row {i})"
                )));
            }
            Ok(z)
        })
        .collect()
}

fn check_stable(sys: &SwitchedAffineSystem, cycle: &LimitCycle) -> Result<()> {
    let (psi, _) = period_map(sys, &cycle.input_indices)?;
    let radius = spectral_radius(&psi);
    if radius >= 1.0 {
        return Err(Error::NotStabilizing { radius });
    }
    Ok(())
}

/// Ellipsoidal tube `{z : zᵀ Z_j z ≤ 1}`.
///
/// The level-set backend scales the Lyapunov matrices `P_j` by the largest
/// common level that fits every `ℤ_j`; the max-det backend starts from that
/// certificate and maximizes `Σ log det Z_j⁻¹` subject to the Schur-complement
/// invariance and facet constraints.
pub fn ellipsoidal_tube(
    sys: &SwitchedAffineSystem,
    cycle: &LimitCycle,
    terminal: &PeriodicTerminalCost,
    backend: EllipsoidBackend,
) -> Result<ErrorTube> {
    check_stable(sys, cycle)?;
    let p = cycle.period();
    if terminal.period() != p {
        return Err(Error::invalid("terminal cost period differs from the cycle period"));
    }
    let constraint_sets = error_constraint_sets(sys, cycle)?;
    let p_inv: Vec<Mat> = terminal
        .p
        .iter()
        .map(|m| {
            m.clone()
                .cholesky()
                .map(|c| c.inverse())
                .ok_or_else(|| Error::Numerical("terminal matrix is not positive definite".into()))
        })
        .collect::<Result<_>>()?;

    let mut level = f64::INFINITY;
    for (z, pi) in constraint_sets.iter().zip(&p_inv) {
        for i in 0..z.num_constraints() {
            let row = z.a().row(i).transpose();
            level = level.min(z.b()[i].powi(2) / row.dot(&(pi * &row)));
        }
    }
    if !(level.is_finite() && level > 0.0) {
        return Err(Error::NoTube("no positive common Lyapunov level".into()));
    }
    let mut shapes: Vec<Mat> = terminal.p.iter().map(|m| m / level).collect();

    if backend == EllipsoidBackend::MaxDet {
        let a = cycle_matrices(sys, cycle)?;
        let start: Vec<Mat> = p_inv.iter().map(|m| m * (0.99 * level)).collect();
        let solved = max_volume(&a, &constraint_sets, &start)?;
        shapes = solved
            .into_iter()
            .map(|o| {
                o.cholesky()
                    .map(|c| symmetrize(&c.inverse()))
                    .ok_or_else(|| Error::Numerical("max-det solution is not positive definite".into()))
            })
            .collect::<Result<_>>()?;
    }

    let sets = shapes
        .into_iter()
        .map(Ellipsoid::centered)
        .collect::<Result<Vec<_>>>()?;
    let tube = ErrorTube {
        sets: TubeSets::Ellipsoidal(sets),
        constraint_sets,
        iterations: None,
    };
    let report = verify_tube(sys, cycle, &tube)?;
    if !report.passed {
        return Err(Error::NoTube(format!(
            "ellipsoidal tube failed verification (worst margin {:.3e})",
            report.worst()
        )));
    }
    Ok(tube)
}

fn sym_basis(n: usize) -> Vec<Mat> {
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for r in 0..n {
        for c in r..n {
            let mut e = Mat::zeros(n, n);
            e[(r, c)] = 1.0;
            e[(c, r)] = 1.0;
            out.push(e);
        }
    }
    out
}

fn sym_coords(m: &Mat) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for r in 0..n {
        for c in r..n {
            out.push(if r == c { m[(r, c)] } else { 0.5 * (m[(r, c)] + m[(c, r)]) });
        }
    }
    out
}

/// Maximizes `Σ log det O_j` over the invariance and facet constraints.
fn max_volume(a: &[Mat], constraint_sets: &[Polytope], start: &[Mat]) -> Result<Vec<Mat>> {
    let p = a.len();
    let n = a[0].nrows();
    let basis = sym_basis(n);
    let m = basis.len();
    let var = |j: usize, k: usize| j * m + k;

    let objective = (0..p)
        .map(|j| AffineSym {
            base: Mat::zeros(n, n),
            terms: basis.iter().enumerate().map(|(k, e)| (var(j, k), e.clone())).collect(),
        })
        .collect();

    let mut constraints = Vec::new();
    for j in 0..p {
        let next = (j + 1) % p;
        let mut terms = Vec::new();
        for (k, e) in basis.iter().enumerate() {
            let mut blk = Mat::zeros(2 * n, 2 * n);
            let ea = e * a[j].transpose();
            blk.view_mut((0, 0), (n, n)).copy_from(e);
            blk.view_mut((0, n), (n, n)).copy_from(&ea);
            blk.view_mut((n, 0), (n, n)).copy_from(&ea.transpose());
            terms.push((var(j, k), blk));
            let mut blk = Mat::zeros(2 * n, 2 * n);
            blk.view_mut((n, n), (n, n)).copy_from(e);
            terms.push((var(next, k), blk));
        }
        constraints.push(AffineSym {
            base: Mat::zeros(2 * n, 2 * n),
            terms,
        });
        let z = &constraint_sets[j];
        for i in 0..z.num_constraints() {
            let row = z.a().row(i).transpose() / z.b()[i];
            let terms = basis
                .iter()
                .enumerate()
                .map(|(k, e)| (var(j, k), Mat::from_element(1, 1, -row.dot(&(e * &row)))))
                .collect();
            constraints.push(AffineSym {
                base: Mat::from_element(1, 1, 1.0),
                terms,
            });
        }
    }

    let problem = MaxDetProblem {
        num_vars: p * m,
        objective,
        constraints,
    };
    let x0 = Vector::from_iterator(p * m, start.iter().flat_map(sym_coords));
    let sol = maxdet::solve(&problem, &x0, &MaxDetOptions::default())?;
    Ok((0..p)
        .map(|j| {
            let mut o = Mat::zeros(n, n);
            for (k, e) in basis.iter().enumerate() {
                let v = sol.x[var(j, k)];
                for r in 0..n {
                    for c in 0..n {
                        if e[(r, c)] != 0.0 {
                            o[(r, c)] = v;
                        }
                    }
                }
            }
            o
        })
        .collect())
}

/// Polytopic tube by the backward set recursion, starting from `ℤ_j` and
/// stopping once a sweep leaves every set unchanged.
pub fn polytopic_tube(sys: &SwitchedAffineSystem, cycle: &LimitCycle, n_max: usize) -> Result<ErrorTube> {
    polytopic_tube_observed(sys, cycle, n_max, |_, _| {})
}

/// [`polytopic_tube`] calling `observe(n, sets)` after every sweep.
pub fn polytopic_tube_observed(
    sys: &SwitchedAffineSystem,
    cycle: &LimitCycle,
    n_max: usize,
    mut observe: impl FnMut(usize, &[Polytope]),
) -> Result<ErrorTube> {
    if n_max == 0 {
        return Err(Error::invalid("n_max must be at least 1"));
    }
    let a = cycle_matrices(sys, cycle)?;
    let p = a.len();
    let n = sys.n_x();
    let constraint_sets = error_constraint_sets(sys, cycle)?;
    let mut prev: Vec<Polytope> = constraint_sets
        .iter()
        .map(Polytope::remove_redundancy)
        .collect::<Result<_>>()?;
    let origin = Vector::zeros(n);

    for iter in 1..=n_max {
        let mut cur: Vec<Option<Polytope>> = vec![None; p];
        for j in (0..p).rev() {
            let target = if j == p - 1 {
                &prev[0]
            } else {
                cur[j + 1].as_ref().expect("later phase computed first")
            };
            let set = match target.preimage(&a[j]) {
                Ok(pre) => pre.intersect(&prev[j])?,
                Err(Error::Unbounded) => prev[j].clone(),
                Err(e) => return Err(e),
            };
            if !set.has_interior() {
                return Err(Error::NoTube(format!(
                    "phase {j} set lost its interior at iteration {iter}"
                )));
            }
            if set.max_violation(&origin) >= -INTERIOR_TOL {
                return Err(Error::NoTube(format!(
                    "origin left the interior of phase {j} at iteration {iter}"
                )));
            }
            if !prev[j].contains_polytope(&set)? {
                return Err(Error::Numerical(format!(
                    "set recursion is not monotone at phase {j}, iteration {iter}"
                )));
            }
            cur[j] = Some(set);
        }
        let cur: Vec<Polytope> = cur.into_iter().map(|s| s.expect("every phase computed")).collect();
        observe(iter, &cur);
        let mut converged = true;
        for (c, q) in cur.iter().zip(&prev) {
            if !c.contains_polytope(q)? {
                converged = false;
                break;
            }
        }
        if converged {
            let tube = ErrorTube {
                sets: TubeSets::Polytopic(cur),
                constraint_sets,
                iterations: Some(iter),
            };
            let report = verify_tube(sys, cycle, &tube)?;
            if !report.passed {
                return Err(Error::NoTube(format!(
                    "converged polytopic tube failed verification (worst margin {:.3e})",
                    report.worst()
                )));
            }
            return Ok(tube);
        }
        prev = cur;
    }
    Err(Error::NotConverged {
        iterations: n_max,
        last: Box::new(ErrorTube {
            sets: TubeSets::Polytopic(prev),
            constraint_sets,
            iterations: Some(n_max),
        }),
    })
}

/// `𝒳_j = 𝒵_j ⊕ x̄(j)`.
pub fn lift_to_state(tube: &ErrorTube, cycle: &LimitCycle) -> Result<StateTube> {
    if tube.period() != cycle.period() {
        return Err(Error::invalid("tube period differs from the cycle period"));
    }
    let sets = match &tube.sets {
        TubeSets::Ellipsoidal(v) => TubeSets::Ellipsoidal(
            v.iter().enumerate().map(|(j, e)| e.translate(cycle.state(j))).collect(),
        ),
        TubeSets::Polytopic(v) => TubeSets::Polytopic(
            v.iter()
                .enumerate()
                .map(|(j, z)| z.translate(cycle.state(j)))
                .collect::<Result<_>>()?,
        ),
    };
    Ok(StateTube { sets })
}

/// Margin of `{x : M x + c ∈ target}` containing `source`.
fn image_margin(source: &Polytope, m: &Mat, c: &Vector, target: &Polytope) -> Result<f64> {
    if source.dim() == 2 {
        let verts = source.vertices_2d()?;
        return Ok(verts
            .iter()
            .map(|v| -target.max_violation(&(m * Vector::from_column_slice(v) + c)))
            .fold(f64::INFINITY, f64::min));
    }
    match target.translate(&(-c))?.preimage(m) {
        Ok(pre) => pre.containment_margin_lp(source),
        Err(Error::Unbounded) => Ok(-target.max_violation(c)),
        Err(e) => Err(e),
    }
}

/// Invariance, containment and interior checks of an error tube.
pub fn verify_tube(sys: &SwitchedAffineSystem, cycle: &LimitCycle, tube: &ErrorTube) -> Result<TubeReport> {
    let a = cycle_matrices(sys, cycle)?;
    let p = a.len();
    if tube.period() != p || tube.constraint_sets.len() != p {
        return Err(Error::invalid("tube period differs from the cycle period"));
    }
    let n = sys.n_x();
    let origin = Vector::zeros(n);
    let mut invariance = Vec::with_capacity(p);
    let mut containment = Vec::with_capacity(p);
    let mut interior = Vec::with_capacity(p);
    match &tube.sets {
        TubeSets::Polytopic(sets) => {
            for j in 0..p {
                invariance.push(image_margin(&sets[j], &a[j], &origin, &sets[(j + 1) % p])?);
                containment.push(tube.constraint_sets[j].containment_margin(&sets[j])?);
                interior.push(-sets[j].max_violation(&origin));
            }
        }
        TubeSets::Ellipsoidal(sets) => {
            for j in 0..p {
                let next = sets[(j + 1) % p].shape();
                invariance.push(min_sym_eigenvalue(
                    &(sets[j].shape() - a[j].transpose() * next * &a[j]),
                ));
                containment.push(sets[j].polytope_margin(&tube.constraint_sets[j]));
                interior.push(1.0 - sets[j].level(&origin));
            }
        }
    }
    Ok(TubeReport::finish(invariance, containment, interior))
}

/// Checks `x̄(j) ∈ int 𝒳_j`, `𝒳_j ⊆ 𝕏` and `A_j 𝒳_j ⊕ b_j ⊆ 𝒳_{j+1}`.
pub fn verify_state_tube(
    sys: &SwitchedAffineSystem,
    cycle: &LimitCycle,
    tube: &StateTube,
) -> Result<TubeReport> {
    let p = cycle.period();
    if tube.period() != p {
        return Err(Error::invalid("tube period differs from the cycle period"));
    }
    let x_set = sys.state_constraints();
    let mut invariance = Vec::with_capacity(p);
    let mut containment = Vec::with_capacity(p);
    let mut interior = Vec::with_capacity(p);
    for j in 0..p {
        let mode = sys.mode(cycle.input_index(j));
        let xbar = cycle.state(j);
        match &tube.sets {
            TubeSets::Polytopic(sets) => {
                invariance.push(image_margin(&sets[j], &mode.a, &mode.b, &sets[(j + 1) % p])?);
                containment.push(x_set.containment_margin(&sets[j])?);
                interior.push(-sets[j].max_violation(xbar));
            }
            TubeSets::Ellipsoidal(sets) => {
                let next = &sets[(j + 1) % p];
                let shape_margin = min_sym_eigenvalue(&(sets[j].shape() - mode.a.transpose() * next.shape() * &mode.a));
                // the center must map onto the next center
                let drift = (&mode.a * sets[j].center() + &mode.b - next.center()).norm();
                invariance.push(if drift > CONTAIN_TOL * (1.0 + next.center().norm()) {
                    shape_margin.min(-drift)
                } else {
                    shape_margin
                });
                containment.push(sets[j].polytope_margin(x_set));
                interior.push(1.0 - sets[j].level(xbar));
            }
        }
    }
    Ok(TubeReport::finish(invariance, containment, interior))
}

/// Draws up to `samples` points from each set `j` and returns the worst
/// margin of their images `Ā_j z` in set `j+1`; negative values are
/// violations.
pub fn sampled_invariance<R: Rng>(
    sys: &SwitchedAffineSystem,
    cycle: &LimitCycle,
    tube: &ErrorTube,
    samples: usize,
    rng: &mut R,
) -> Result<f64> {
    let a = cycle_matrices(sys, cycle)?;
    let p = a.len();
    if tube.period() != p {
        return Err(Error::invalid("tube period differs from the cycle period"));
    }
    let n = sys.n_x();
    let mut worst = f64::INFINITY;
    for j in 0..p {
        for z in sample_set(&tube.sets, j, n, samples, rng)? {
            let w = &a[j] * z;
            let margin = match &tube.sets {
                TubeSets::Polytopic(v) => -v[(j + 1) % p].max_violation(&w),
                TubeSets::Ellipsoidal(v) => 1.0 - v[(j + 1) % p].level(&w),
            };
            worst = worst.min(margin);
        }
    }
    Ok(worst)
}

fn sample_set<R: Rng>(sets: &TubeSets, j: usize, n: usize, samples: usize, rng: &mut R) -> Result<Vec<Vector>> {
    let unit_ball = |rng: &mut R| loop {
        let u = Vector::from_fn(n, |_, _| rng.gen_range(-1.0..=1.0));
        if u.norm() <= 1.0 {
            return u;
        }
    };
    match sets {
        TubeSets::Ellipsoidal(v) => {
            let e = &v[j % v.len()];
            // zᵀZz = |u|² for z = L⁻ᵀu with Z = LLᵀ
            let l_inv_t = e
                .shape()
                .clone()
                .cholesky()
                .ok_or_else(|| Error::Numerical("ellipsoid shape is not positive definite".into()))?
                .l()
                .transpose()
                .try_inverse()
                .ok_or_else(|| Error::Numerical("singular ellipsoid factor".into()))?;
            Ok((0..samples).map(|_| e.center() + &l_inv_t * unit_ball(rng)).collect())
        }
        TubeSets::Polytopic(v) => {
            let poly = &v[j % v.len()];
            let mut lo = vec![0.0; n];
            let mut hi = vec![0.0; n];
            for k in 0..n {
                let mut d = vec![0.0; n];
                d[k] = 1.0;
                hi[k] = support_value(poly, &d)?;
                d[k] = -1.0;
                lo[k] = -support_value(poly, &d)?;
            }
            let mut out = Vec::with_capacity(samples);
            for _ in 0..samples.saturating_mul(50) {
                if out.len() == samples {
                    break;
                }
                let x = Vector::from_fn(n, |k, _| {
                    if hi[k] > lo[k] {
                        rng.gen_range(lo[k]..=hi[k])
                    } else {
                        lo[k]
                    }
                });
                if poly.max_violation(&x) <= 0.0 {
                    out.push(x);
                }
            }
            Ok(out)
        }
    }
}

fn support_value(poly: &Polytope, d: &[f64]) -> Result<f64> {
    match poly.support(d) {
        LpOutcome::Optimal { value, .. } => Ok(value),
        LpOutcome::Unbounded => Err(Error::Unbounded),
        LpOutcome::Infeasible => Err(Error::NoTube("empty tube set".into())),
    }
}
