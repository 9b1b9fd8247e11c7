//! H-representation polytopes and centered ellipsoids.
//!
//! Every emptiness, containment and redundancy query reduces either to a
//! linear program (any dimension) or, for planar sets with nonempty interior,
//! to a convex hull of the polar dual points taken around an interior point.
//! Rows are normalized to unit Euclidean norm before any tolerance is applied.

use serde::{Deserialize, Serialize};

use crate::linalg::{serde_mat, serde_vec, Mat, Vector};
use crate::lp::{self, LpOutcome};
use crate::{Error, Result};

/// Primal feasibility tolerance on unit-norm rows.
pub const FEAS_TOL: f64 = 1e-9;
/// Containment tolerance on unit-norm rows.
pub const CONTAIN_TOL: f64 = 1e-8;
/// Chebyshev radius below which a set is treated as lower dimensional.
pub const INTERIOR_TOL: f64 = 1e-9;

const RADIUS_CAP: f64 = 1e9;
const ZERO_ROW: f64 = 1e-13;
const HULL_SINE_TOL: f64 = 1e-10;

pub type Point2 = [f64; 2];

/// The set `{x : H x ≤ h}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolytopeRepr", into = "PolytopeRepr")]
pub struct Polytope {
    a: Mat,
    b: Vector,
}

#[derive(Serialize, Deserialize)]
struct PolytopeRepr {
    #[serde(rename = "H", with = "serde_mat")]
    a: Mat,
    #[serde(rename = "h", with = "serde_vec")]
    b: Vector,
}

impl TryFrom<PolytopeRepr> for Polytope {
    type Error = Error;

    fn try_from(r: PolytopeRepr) -> Result<Self> {
        Polytope::new(r.a, r.b)
    }
}

impl From<Polytope> for PolytopeRepr {
    fn from(p: Polytope) -> Self {
        PolytopeRepr { a: p.a, b: p.b }
    }
}

impl Polytope {
    pub fn new(a: Mat, b: Vector) -> Result<Self> {
        if a.nrows() != b.len() {
            return Err(Error::invalid(format!(
                "H has {} rows but h has {} entries",
                a.nrows(),
                b.len()
            )));
        }
        if a.ncols() == 0 {
            return Err(Error::invalid("polytope dimension must be positive"));
        }
        if let Some(i) = (0..a.nrows()).find(|&i| a.row(i).norm() <= ZERO_ROW) {
            return Err(Error::invalid(format!("row {i} of H is zero")));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite polytope data"));
        }
        Ok(Polytope { a, b })
    }

    /// Axis-aligned box `lo ≤ x ≤ hi`.
    pub fn from_box(lo: &[f64], hi: &[f64]) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::invalid("box bounds differ in length"));
        }
        let n = lo.len();
        let mut a = Mat::zeros(2 * n, n);
        let mut b = Vector::zeros(2 * n);
        for k in 0..n {
            a[(2 * k, k)] = 1.0;
            b[2 * k] = hi[k];
            a[(2 * k + 1, k)] = -1.0;
            b[2 * k + 1] = -lo[k];
        }
        Polytope::new(a, b)
    }

    /// A canonical empty set in dimension `n`.
    pub fn empty(n: usize) -> Self {
        let mut a = Mat::zeros(2, n);
        a[(0, 0)] = 1.0;
        a[(1, 0)] = -1.0;
        Polytope {
            a,
            b: Vector::from_element(2, -1.0),
        }
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn num_constraints(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    pub fn b(&self) -> &Vector {
        &self.b
    }

    /// Each row scaled to unit norm (same set).
    pub fn normalized(&self) -> Polytope {
        let mut a = self.a.clone();
        let mut b = self.b.clone();
        for i in 0..a.nrows() {
            let norm = a.row(i).norm();
            a.row_mut(i).unscale_mut(norm);
            b[i] /= norm;
        }
        Polytope { a, b }
    }

    /// Minkowski sum with the point `v`: `{x : Hx ≤ h + Hv}`.
    pub fn translate(&self, v: &Vector) -> Result<Polytope> {
        self.check_dim(v.len())?;
        Ok(Polytope {
            a: self.a.clone(),
            b: &self.b + &self.a * v,
        })
    }

    /// Pontryagin difference with the singleton `{v}`.
    pub fn pontryagin_diff_point(&self, v: &Vector) -> Result<Polytope> {
        self.translate(&(-v))
    }

    /// `{z : M z ∈ P}` for a square (possibly singular) `M`.
    pub fn preimage(&self, m: &Mat) -> Result<Polytope> {
        if m.nrows() != self.dim() || m.ncols() != self.dim() {
            return Err(Error::invalid(format!(
                "preimage map is {}x{}, polytope dimension {}",
                m.nrows(),
                m.ncols(),
                self.dim()
            )));
        }
        let am = &self.a * m;
        let scale = self.a.row_iter().map(|r| r.norm()).fold(0.0, f64::max);
        let mut rows = Vec::new();
        for i in 0..am.nrows() {
            let norm = am.row(i).norm();
            if norm <= ZERO_ROW * scale.max(1.0) * (1.0 + m.norm()) {
                // 0 ≤ h_i: trivially satisfied or infeasible.
                if self.b[i] < -FEAS_TOL * self.a.row(i).norm() {
                    return Ok(Polytope::empty(self.dim()));
                }
                continue;
            }
            rows.push(i);
        }
        if rows.is_empty() {
            return Err(Error::Unbounded);
        }
        let a = Mat::from_fn(rows.len(), self.dim(), |r, j| am[(rows[r], j)]);
        let b = Vector::from_iterator(rows.len(), rows.iter().map(|&i| self.b[i]));
        Ok(Polytope { a, b })
    }

    /// Scales the set about the origin: `{x : Hx ≤ s·h}`.
    pub fn scaled(&self, s: f64) -> Polytope {
        Polytope {
            a: self.a.clone(),
            b: &self.b * s,
        }
    }

    /// Row concatenation followed by redundancy removal. An empty result is
    /// returned as [`Polytope::empty`].
    pub fn intersect(&self, other: &Polytope) -> Result<Polytope> {
        let joined = self.stack(other)?;
        if joined.is_empty() {
            return Ok(Polytope::empty(self.dim()));
        }
        joined.remove_redundancy()
    }

    /// Row concatenation without any simplification.
    pub fn stack(&self, other: &Polytope) -> Result<Polytope> {
        self.check_dim(other.dim())?;
        let m1 = self.num_constraints();
        let m = m1 + other.num_constraints();
        let n = self.dim();
        let mut a = Mat::zeros(m, n);
        a.rows_mut(0, m1).copy_from(&self.a);
        a.rows_mut(m1, m - m1).copy_from(&other.a);
        let mut b = Vector::zeros(m);
        b.rows_mut(0, m1).copy_from(&self.b);
        b.rows_mut(m1, m - m1).copy_from(&other.b);
        Ok(Polytope { a, b }.normalized())
    }

    pub fn contains_point(&self, x: &Vector, tol: f64) -> bool {
        (0..self.num_constraints())
            .all(|i| self.a.row(i).transpose().dot(x) - self.b[i] <= tol * self.a.row(i).norm())
    }

    /// Largest normalized constraint violation at `x` (negative inside).
    pub fn max_violation(&self, x: &Vector) -> f64 {
        (0..self.num_constraints())
            .map(|i| (self.a.row(i).transpose().dot(x) - self.b[i]) / self.a.row(i).norm())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Chebyshev center and signed depth `max_x min_i (h_i − H_i x)/‖H_i‖`.
    /// A negative depth means the set is empty.
    pub fn chebyshev(&self) -> (Vector, f64) {
        let p = self.normalized();
        let mut problem_a = p.a.clone();
        let mut problem_b = p.b.clone();
        if problem_a.nrows() == 0 {
            problem_a = Mat::zeros(1, self.dim());
            problem_a[(0, 0)] = 1.0;
            problem_b = Vector::from_element(1, RADIUS_CAP);
        }
        lp::chebyshev_center(&problem_a, &problem_b, RADIUS_CAP)
            .unwrap_or_else(|| (Vector::zeros(self.dim()), f64::NEG_INFINITY))
    }

    pub fn is_empty(&self) -> bool {
        self.chebyshev().1 < -FEAS_TOL
    }

    pub fn has_interior(&self) -> bool {
        self.chebyshev().1 > INTERIOR_TOL
    }

    pub fn is_bounded(&self) -> bool {
        let n = self.dim();
        (0..n).all(|k| {
            [1.0, -1.0].iter().all(|&s| {
                let mut c = vec![0.0; n];
                c[k] = s;
                !matches!(lp::maximize(&c, &self.a, &self.b), LpOutcome::Unbounded)
            })
        })
    }

    /// Support function `max_{x∈P} d·x`.
    pub fn support(&self, d: &[f64]) -> LpOutcome {
        lp::maximize(d, &self.a, &self.b)
    }

    /// Minimal H-representation with unit-norm rows.
    ///
    /// A row is dropped when relaxing it grows the set by at most
    /// [`CONTAIN_TOL`]. Empty input yields [`Polytope::empty`]; an unbounded
    /// input is an error.
    pub fn remove_redundancy(&self) -> Result<Polytope> {
        if self.dim() == 2 {
            let (center, depth) = self.chebyshev();
            if depth < -FEAS_TOL {
                return Ok(Polytope::empty(2));
            }
            if depth >= RADIUS_CAP * 0.5 {
                return Err(Error::Unbounded);
            }
            if depth > INTERIOR_TOL {
                return Ok(planar_dual_hull(&self.normalized(), &center)?.0);
            }
        }
        self.remove_redundancy_lp()
    }

    /// LP-based redundancy removal, valid in any dimension.
    pub fn remove_redundancy_lp(&self) -> Result<Polytope> {
        let p = self.normalized();
        if p.is_empty() {
            return Ok(Polytope::empty(self.dim()));
        }
        if !p.is_bounded() {
            return Err(Error::Unbounded);
        }
        let m = p.num_constraints();
        let mut keep = vec![true; m];
        for i in 0..m {
            let rows: Vec<usize> = (0..m).filter(|&j| j != i && keep[j]).collect();
            if rows.is_empty() {
                continue;
            }
            let sub = p.select_rows(&rows);
            let c: Vec<f64> = p.a.row(i).iter().copied().collect();
            match lp::maximize(&c, &sub.a, &sub.b) {
                LpOutcome::Optimal { value, .. } if value <= p.b[i] + CONTAIN_TOL => keep[i] = false,
                _ => {}
            }
        }
        let rows: Vec<usize> = (0..m).filter(|&i| keep[i]).collect();
        Ok(p.select_rows(&rows))
    }

    fn select_rows(&self, rows: &[usize]) -> Polytope {
        Polytope {
            a: Mat::from_fn(rows.len(), self.dim(), |r, j| self.a[(rows[r], j)]),
            b: Vector::from_iterator(rows.len(), rows.iter().map(|&i| self.b[i])),
        }
    }

    /// `self ⊇ inner`, up to [`CONTAIN_TOL`] on unit-norm rows.
    pub fn contains_polytope(&self, inner: &Polytope) -> Result<bool> {
        Ok(self.containment_margin(inner)? >= -CONTAIN_TOL)
    }

    /// `min_i (h_i − max_{x∈inner} H_i x)` over unit-norm rows of `self`.
    /// Negative values measure how far `inner` leaks out.
    pub fn containment_margin(&self, inner: &Polytope) -> Result<f64> {
        self.check_dim(inner.dim())?;
        if inner.dim() == 2 {
            let (center, depth) = inner.chebyshev();
            if depth > INTERIOR_TOL && depth < RADIUS_CAP * 0.5 {
                let (_, verts) = planar_dual_hull(&inner.normalized(), &center)?;
                return Ok(self.vertex_margin(&verts));
            }
        }
        self.containment_margin_lp(inner)
    }

    /// LP-only variant of [`Polytope::containment_margin`].
    pub fn containment_margin_lp(&self, inner: &Polytope) -> Result<f64> {
        self.check_dim(inner.dim())?;
        let outer = self.normalized();
        let mut margin = f64::INFINITY;
        for i in 0..outer.num_constraints() {
            let c: Vec<f64> = outer.a.row(i).iter().copied().collect();
            match lp::maximize(&c, &inner.a, &inner.b) {
                LpOutcome::Optimal { value, .. } => margin = margin.min(outer.b[i] - value),
                LpOutcome::Unbounded => return Ok(f64::NEG_INFINITY),
                LpOutcome::Infeasible => return Ok(f64::INFINITY),
            }
        }
        Ok(margin)
    }

    fn vertex_margin(&self, verts: &[Point2]) -> f64 {
        let outer = self.normalized();
        verts
            .iter()
            .map(|v| -outer.max_violation(&Vector::from_column_slice(v)))
            .fold(f64::INFINITY, f64::min)
    }

    /// Set equality by mutual containment.
    pub fn set_eq(&self, other: &Polytope) -> Result<bool> {
        Ok(self.contains_polytope(other)? && other.contains_polytope(self)?)
    }

    /// Counterclockwise vertex cycle of a bounded, nonempty planar polytope.
    pub fn vertices_2d(&self) -> Result<Vec<Point2>> {
        if self.dim() != 2 {
            return Err(Error::UnsupportedDimension(self.dim()));
        }
        let p = self.normalized();
        let (center, depth) = p.chebyshev();
        if depth < -FEAS_TOL {
            return Err(Error::invalid("vertices of an empty polytope"));
        }
        if depth >= RADIUS_CAP * 0.5 {
            return Err(Error::Unbounded);
        }
        if depth > INTERIOR_TOL {
            return Ok(planar_dual_hull(&p, &center)?.1);
        }
        if !p.is_bounded() {
            return Err(Error::Unbounded);
        }
        Ok(degenerate_vertices(&p))
    }

    /// H-representation of the convex hull of planar points.
    pub fn from_points_2d(points: &[Point2]) -> Result<Polytope> {
        if points.is_empty() {
            return Err(Error::invalid("convex hull of no points"));
        }
        let hull = convex_hull_2d(points);
        let mut rows: Vec<([f64; 2], f64)> = Vec::new();
        match hull.len() {
            1 => {
                let [x, y] = hull[0];
                rows.extend([([1.0, 0.0], x), ([-1.0, 0.0], -x), ([0.0, 1.0], y), ([0.0, -1.0], -y)]);
            }
            2 => {
                let (p, q) = (hull[0], hull[1]);
                let d = [q[0] - p[0], q[1] - p[1]];
                let len = d[0].hypot(d[1]);
                let t = [d[0] / len, d[1] / len];
                let nrm = [t[1], -t[0]];
                let on = nrm[0] * p[0] + nrm[1] * p[1];
                rows.push((nrm, on));
                rows.push(([-nrm[0], -nrm[1]], -on));
                rows.push((t, t[0] * q[0] + t[1] * q[1]));
                rows.push(([-t[0], -t[1]], -(t[0] * p[0] + t[1] * p[1])));
            }
            k => {
                for i in 0..k {
                    let (p, q) = (hull[i], hull[(i + 1) % k]);
                    let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
                    let len = dx.hypot(dy);
                    let nrm = [dy / len, -dx / len];
                    rows.push((nrm, nrm[0] * p[0] + nrm[1] * p[1]));
                }
            }
        }
        let a = Mat::from_fn(rows.len(), 2, |i, j| rows[i].0[j]);
        let b = Vector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
        Polytope::new(a, b)
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if n != self.dim() {
            return Err(Error::invalid(format!(
                "dimension mismatch: expected {}, got {n}",
                self.dim()
            )));
        }
        Ok(())
    }
}

/// Convex hull of the union of planar polytopes.
pub fn convex_hull_union_2d(sets: &[Polytope]) -> Result<Polytope> {
    let mut points = Vec::new();
    for p in sets {
        points.extend(p.vertices_2d()?);
    }
    Polytope::from_points_2d(&points)
}

/// Strictly convex counterclockwise hull (Andrew's monotone chain). Collinear
/// and duplicate points are dropped.
pub fn convex_hull_2d(points: &[Point2]) -> Vec<Point2> {
    let mut pts = points.to_vec();
    pts.sort_by(|p, q| p[0].total_cmp(&q[0]).then(p[1].total_cmp(&q[1])));
    pts.dedup();
    if pts.len() <= 2 {
        return pts;
    }
    let idx: Vec<usize> = (0..pts.len()).collect();
    monotone_chain(&idx, |i| pts[i]).into_iter().map(|i| pts[i]).collect()
}

fn cross(o: Point2, a: Point2, b: Point2) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn left_turn(o: Point2, a: Point2, b: Point2) -> bool {
    let la = (a[0] - o[0]).hypot(a[1] - o[1]);
    let lb = (b[0] - o[0]).hypot(b[1] - o[1]);
    cross(o, a, b) > HULL_SINE_TOL * la * lb
}

/// Monotone chain over pre-sorted, deduplicated items; returns CCW indices.
fn monotone_chain(sorted: &[usize], at: impl Fn(usize) -> Point2) -> Vec<usize> {
    let mut lower: Vec<usize> = Vec::new();
    for &i in sorted {
        while lower.len() >= 2 && !left_turn(at(lower[lower.len() - 2]), at(lower[lower.len() - 1]), at(i)) {
            lower.pop();
        }
        lower.push(i);
    }
    let mut upper: Vec<usize> = Vec::new();
    for &i in sorted.iter().rev() {
        while upper.len() >= 2 && !left_turn(at(upper[upper.len() - 2]), at(upper[upper.len() - 1]), at(i)) {
            upper.pop();
        }
        upper.push(i);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Facet and vertex enumeration of a full-dimensional planar polytope with
/// unit-norm rows, via the hull of the polar dual points around `center`.
fn planar_dual_hull(p: &Polytope, center: &Vector) -> Result<(Polytope, Vec<Point2>)> {
    let m = p.num_constraints();
    let slack: Vec<f64> = (0..m)
        .map(|i| p.b[i] - p.a.row(i).transpose().dot(center))
        .collect();
    let dual: Vec<Point2> = (0..m)
        .map(|i| [p.a[(i, 0)] / slack[i], p.a[(i, 1)] / slack[i]])
        .collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| {
        dual[i][0]
            .total_cmp(&dual[j][0])
            .then(dual[i][1].total_cmp(&dual[j][1]))
            .then(i.cmp(&j))
    });
    order.dedup_by(|i, j| dual[*i] == dual[*j]);
    if order.len() < 3 {
        return Err(Error::Unbounded);
    }
    let hull = monotone_chain(&order, |i| dual[i]);
    let k = hull.len();
    if k < 3 {
        return Err(Error::Unbounded);
    }
    let origin = [0.0, 0.0];
    for e in 0..k {
        let (qa, qb) = (dual[hull[e]], dual[hull[(e + 1) % k]]);
        if !left_turn(qa, qb, origin) {
            return Err(Error::Unbounded);
        }
    }
    let mut verts = Vec::with_capacity(k);
    for e in 0..k {
        let (i, j) = (hull[e], hull[(e + 1) % k]);
        let (a11, a12, a21, a22) = (p.a[(i, 0)], p.a[(i, 1)], p.a[(j, 0)], p.a[(j, 1)]);
        let det = a11 * a22 - a12 * a21;
        let y0 = (slack[i] * a22 - a12 * slack[j]) / det;
        let y1 = (a11 * slack[j] - slack[i] * a21) / det;
        verts.push([center[0] + y0, center[1] + y1]);
    }
    // vertex e lies on facets hull[e] and hull[e + 1]
    let reduced = p.select_rows(&hull);
    Ok((reduced, verts))
}

/// Vertices of a lower-dimensional bounded planar set (segment or point) by
/// pairwise line intersection.
fn degenerate_vertices(p: &Polytope) -> Vec<Point2> {
    let m = p.num_constraints();
    let mut pts: Vec<Point2> = Vec::new();
    for i in 0..m {
        for j in (i + 1)..m {
            let det = p.a[(i, 0)] * p.a[(j, 1)] - p.a[(i, 1)] * p.a[(j, 0)];
            if det.abs() < 1e-12 {
                continue;
            }
            let x = (p.b[i] * p.a[(j, 1)] - p.a[(i, 1)] * p.b[j]) / det;
            let y = (p.a[(i, 0)] * p.b[j] - p.b[i] * p.a[(j, 0)]) / det;
            let v = Vector::from_column_slice(&[x, y]);
            if p.max_violation(&v) <= 1e-7 && !pts.iter().any(|q| (q[0] - x).hypot(q[1] - y) < 1e-7) {
                pts.push([x, y]);
            }
        }
    }
    let hull = convex_hull_2d(&pts);
    if hull.is_empty() {
        pts
    } else {
        hull
    }
}

/// The set `{x : (x − c)ᵀ Z (x − c) ≤ 1}` with `Z ≻ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EllipsoidRepr", into = "EllipsoidRepr")]
pub struct Ellipsoid {
    shape: Mat,
    center: Vector,
}

#[derive(Serialize, Deserialize)]
struct EllipsoidRepr {
    #[serde(rename = "Z", with = "serde_mat")]
    shape: Mat,
    #[serde(with = "serde_vec")]
    center: Vector,
}

impl TryFrom<EllipsoidRepr> for Ellipsoid {
    type Error = Error;

    fn try_from(r: EllipsoidRepr) -> Result<Self> {
        Ellipsoid::new(r.shape, r.center)
    }
}

impl From<Ellipsoid> for EllipsoidRepr {
    fn from(e: Ellipsoid) -> Self {
        EllipsoidRepr {
            shape: e.shape,
            center: e.center,
        }
    }
}

impl Ellipsoid {
    pub fn new(shape: Mat, center: Vector) -> Result<Self> {
        let n = center.len();
        if shape.nrows() != n || shape.ncols() != n {
            return Err(Error::invalid("ellipsoid shape/center dimension mismatch"));
        }
        let asym = (&shape - shape.transpose()).abs().max();
        if asym > 1e-10 * (1.0 + shape.abs().max()) {
            return Err(Error::invalid("ellipsoid shape matrix is not symmetric"));
        }
        let shape = crate::linalg::symmetrize(&shape);
        if shape.clone().symmetric_eigenvalues().min() <= 0.0 {
            return Err(Error::invalid("ellipsoid shape matrix is not positive definite"));
        }
        Ok(Ellipsoid { shape, center })
    }

    pub fn centered(shape: Mat) -> Result<Self> {
        let n = shape.nrows();
        Ellipsoid::new(shape, Vector::zeros(n))
    }

    pub fn shape(&self) -> &Mat {
        &self.shape
    }

    pub fn center(&self) -> &Vector {
        &self.center
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// `Z⁻¹`, the matrix whose quadratic form gives squared support values.
    pub fn inverse_shape(&self) -> Mat {
        self.shape
            .clone()
            .cholesky()
            .map(|c| c.inverse())
            .unwrap_or_else(|| self.shape.clone().try_inverse().unwrap_or_else(|| self.shape.clone()))
    }

    pub fn level(&self, x: &Vector) -> f64 {
        let d = x - &self.center;
        d.dot(&(&self.shape * &d))
    }

    pub fn contains_point(&self, x: &Vector, tol: f64) -> bool {
        self.level(x) <= 1.0 + tol
    }

    pub fn translate(&self, v: &Vector) -> Ellipsoid {
        Ellipsoid {
            shape: self.shape.clone(),
            center: &self.center + v,
        }
    }

    /// `log det Z⁻¹`, proportional to twice the log-volume.
    pub fn log_det_inverse(&self) -> f64 {
        -self.shape.clone().determinant().ln()
    }

    /// Support function `max_{x∈E} d·x = d·c + sqrt(dᵀ Z⁻¹ d)`.
    pub fn support(&self, d: &Vector) -> f64 {
        d.dot(&self.center) + d.dot(&(self.inverse_shape() * d)).max(0.0).sqrt()
    }

    /// `min_i (h_i − H_i c − sqrt(H_i Z⁻¹ H_iᵀ))` over unit-norm rows of `p`.
    pub fn polytope_margin(&self, p: &Polytope) -> f64 {
        let p = p.normalized();
        let inv = self.inverse_shape();
        (0..p.num_constraints())
            .map(|i| {
                let row = p.a().row(i).transpose();
                p.b()[i] - row.dot(&self.center) - row.dot(&(&inv * &row)).max(0.0).sqrt()
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Support-function containment test `E ⊆ P`.
pub fn ellipsoid_in_polytope(e: &Ellipsoid, p: &Polytope) -> bool {
    e.dim() == p.dim() && e.polytope_margin(p) >= -CONTAIN_TOL
}
