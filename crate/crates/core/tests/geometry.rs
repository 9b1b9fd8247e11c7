use approx::assert_relative_eq;
use proptest::prelude::*;

use lcmpc::config::parse_json;
use lcmpc::geometry::{convex_hull_union_2d, ellipsoid_in_polytope, Ellipsoid, Point2, Polytope};
use lcmpc::io::to_canonical_json;
use lcmpc::linalg::{Mat, Vector};

fn point() -> impl Strategy<Value = Point2> {
    (-5.0..5.0f64, -5.0..5.0f64).prop_map(|(x, y)| [x, y])
}

fn hull_polytope() -> impl Strategy<Value = Polytope> {
    prop::collection::vec(point(), 4..10)
        .prop_filter_map("degenerate hull", |pts| Polytope::from_points_2d(&pts).ok().filter(|p| p.has_interior()))
}

/// Vertices by brute force: intersect every pair of boundary lines and keep
/// the feasible intersection points.
fn vertices_all_pairs(p: &Polytope) -> Vec<Point2> {
    let (a, b) = (p.a(), p.b());
    let m = p.num_constraints();
    let mut out: Vec<Point2> = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            let det = a[(i, 0)] * a[(j, 1)] - a[(i, 1)] * a[(j, 0)];
            if det.abs() < 1e-12 {
                continue;
            }
            let x = (b[i] * a[(j, 1)] - a[(i, 1)] * b[j]) / det;
            let y = (a[(i, 0)] * b[j] - b[i] * a[(j, 0)]) / det;
            if p.max_violation(&Vector::from_vec(vec![x, y])) <= 1e-7
                && !out.iter().any(|q| (q[0] - x).abs() < 1e-6 && (q[1] - y).abs() < 1e-6)
            {
                out.push([x, y]);
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalized_rows_have_unit_norm(p in hull_polytope()) {
        let n = p.normalized();
        for i in 0..n.num_constraints() {
            prop_assert!((n.a().row(i).norm() - 1.0).abs() < 1e-12);
        }
        prop_assert!(n.set_eq(&p).unwrap());
    }

    #[test]
    fn vertices_match_all_pairs_oracle(p in hull_polytope()) {
        let fast = p.vertices_2d().unwrap();
        let slow = vertices_all_pairs(&p);
        prop_assert_eq!(fast.len(), slow.len());
        for v in &fast {
            prop_assert!(slow.iter().any(|q| (q[0] - v[0]).abs() < 1e-6 && (q[1] - v[1]).abs() < 1e-6));
        }
    }

    #[test]
    fn redundancy_removal_keeps_the_set(p in hull_polytope(), extra in prop::collection::vec((point(), 0.5..3.0f64), 1..5)) {
        // pad with constraints that are implied by the hull
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for (d, slack) in &extra {
            let d = Vector::from_vec(d.to_vec());
            if d.norm() < 1e-3 {
                continue;
            }
            let s = p.support(d.as_slice()).value().unwrap();
            rows.push(d.transpose());
            rhs.push(s + slack);
        }
        prop_assume!(!rows.is_empty());
        let padded = p.stack(&Polytope::new(Mat::from_rows(&rows), Vector::from_vec(rhs)).unwrap()).unwrap();
        let reduced = padded.remove_redundancy().unwrap();
        prop_assert!(reduced.num_constraints() <= p.num_constraints());
        prop_assert!(reduced.set_eq(&p).unwrap());
    }

    #[test]
    fn preimage_membership(p in hull_polytope(), m in prop::array::uniform4(-2.0..2.0f64), x in point()) {
        let m = Mat::from_row_slice(2, 2, &m);
        prop_assume!(m.determinant().abs() > 1e-3);
        let pre = p.preimage(&m).unwrap();
        let x = Vector::from_vec(x.to_vec());
        let img = &m * &x;
        let margin = p.max_violation(&img);
        prop_assume!(margin.abs() > 1e-6);
        prop_assert_eq!(pre.max_violation(&x) <= 0.0, margin <= 0.0);
    }

    #[test]
    fn translation_moves_membership(p in hull_polytope(), v in point(), x in point()) {
        let v = Vector::from_vec(v.to_vec());
        let x = Vector::from_vec(x.to_vec());
        let t = p.translate(&v).unwrap();
        prop_assert!((t.max_violation(&(&x + &v)) - p.max_violation(&x)).abs() < 1e-9);
    }

    #[test]
    fn hull_of_union_contains_every_set(a in hull_polytope(), b in hull_polytope()) {
        let hull = convex_hull_union_2d(&[a.clone(), b.clone()]).unwrap();
        prop_assert!(hull.contains_polytope(&a).unwrap());
        prop_assert!(hull.contains_polytope(&b).unwrap());
        for v in hull.vertices_2d().unwrap() {
            let v = Vector::from_vec(v.to_vec());
            prop_assert!(a.max_violation(&v) <= 1e-7 || b.max_violation(&v) <= 1e-7);
        }
    }

    #[test]
    fn polytope_json_round_trip(p in hull_polytope()) {
        let text = to_canonical_json(&p).unwrap();
        let back: Polytope = parse_json(&text).unwrap();
        prop_assert_eq!(&back, &p);
        prop_assert_eq!(to_canonical_json(&back).unwrap(), text);
    }

    #[test]
    fn ellipsoid_support_bounds_boundary_points(
        l in prop::array::uniform3(0.2..3.0f64),
        c in point(),
        angles in prop::collection::vec(0.0..std::f64::consts::TAU, 1..20),
        d in point(),
    ) {
        // Z = L Lᵀ with L lower triangular
        let lo = Mat::from_row_slice(2, 2, &[l[0], 0.0, l[1] - 1.5, l[2]]);
        let e = Ellipsoid::new(&lo * lo.transpose(), Vector::from_vec(c.to_vec())).unwrap();
        let d = Vector::from_vec(d.to_vec());
        prop_assume!(d.norm() > 1e-3);
        let h = e.support(&d);
        let inv_t = lo.transpose().try_inverse().unwrap();
        for t in angles {
            let x = e.center() + &inv_t * Vector::from_vec(vec![t.cos(), t.sin()]);
            prop_assert!((e.level(&x) - 1.0).abs() < 1e-9);
            prop_assert!(d.dot(&x) <= h + 1e-9);
        }
    }
}

#[test]
fn ellipsoid_inside_box() {
    let b = Polytope::from_box(&[-2.0, -1.0], &[2.0, 1.0]).unwrap();
    let inside = Ellipsoid::centered(Mat::from_diagonal(&Vector::from_vec(vec![0.25, 1.0]))).unwrap();
    assert!(ellipsoid_in_polytope(&inside, &b));
    assert_relative_eq!(inside.polytope_margin(&b), 0.0, epsilon = 1e-12);
    let outside = Ellipsoid::centered(Mat::from_diagonal(&Vector::from_vec(vec![0.2, 1.0]))).unwrap();
    assert!(!ellipsoid_in_polytope(&outside, &b));
}

#[test]
fn empty_and_unbounded_sets() {
    let empty = Polytope::from_box(&[1.0], &[0.0]).unwrap();
    assert!(empty.is_empty());
    let half = Polytope::new(Mat::from_row_slice(1, 2, &[1.0, 0.0]), Vector::from_vec(vec![1.0])).unwrap();
    assert!(!half.is_bounded());
    assert!(Polytope::from_box(&[0.0, 0.0], &[1.0, 1.0]).unwrap().is_bounded());
}
