mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lcmpc::feasible::{exact_feasible_union, hull_gap_estimate, one_step_controllable, outer_hull_feasible};
use lcmpc::linalg::vector;

use common::*;

#[test]
fn exact_union_matches_enumeration_at_random_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut checked = 0;
    while checked < 10 {
        let ns = rng.gen_range(2..=3);
        let sys = random_system(&mut rng, 2, ns, 1.0);
        let p = rng.gen_range(1..=3);
        let Some(cycle) = random_cycle(&mut rng, &sys, p) else { continue };
        let Some(sets) = polytopic_state_tube(&sys, &cycle) else { continue };
        let horizon = rng.gen_range(0..=3);
        let union = exact_feasible_union(&sys, &sets, horizon).unwrap();
        let hull = outer_hull_feasible(&sys, &sets, horizon).unwrap();
        for _ in 0..2000 {
            let x = vector(&[rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
            let inside = union.contains(horizon, &x);
            let exact = feasible_by_enumeration(&sys, &sets, &x, horizon);
            let margin = union.last().iter().map(|p| p.max_violation(&x).abs()).fold(f64::INFINITY, f64::min);
            assert!(inside == exact || margin < 1e-6, "{x} union {inside} enumeration {exact}");
            if inside {
                assert!(hull.contains(horizon, &x));
            }
        }
        let gap = hull_gap_estimate(&hull.last()[0], union.last(), 200).unwrap();
        assert!((0.0..=1.0).contains(&gap));
        checked += 1;
    }
}

#[test]
fn one_step_set_is_the_preimage() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sys = random_system(&mut rng, 2, 3, 1.0);
    let target = lcmpc::geometry::Polytope::from_box(&[-0.3, -0.3], &[0.3, 0.3]).unwrap();
    for u in 0..3 {
        let set = one_step_controllable(&sys, &target, u).unwrap();
        for _ in 0..500 {
            let x = vector(&[rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
            let next = sys.step(&x, u).unwrap().0;
            let reach = target.max_violation(&next);
            if reach.abs() < 1e-9 {
                continue;
            }
            let member = set.as_ref().is_some_and(|s| s.max_violation(&x) <= 0.0);
            assert_eq!(member, reach < 0.0);
        }
    }
    assert!(one_step_controllable(&sys, &target, 3).is_err());
}

#[test]
fn example_sets_contain_the_initial_states() {
    let pipeline = example("example1");
    let cycle = pipeline.cycle().unwrap().cycle;
    let terminal = pipeline.terminal_cost(&cycle).unwrap().terminal;
    let tube = pipeline.tube(&cycle, &terminal, lcmpc::tube::TubeKind::Polytopic).unwrap();
    let exact = pipeline.feasible(&tube.state_tube, lcmpc::config::FeasibleMode::Exact, None).unwrap();
    assert_eq!(exact.horizon, 4);
    assert_eq!(exact.per_step.len(), 5);
    assert!(exact.contains(4, &vector(&[-10.0, 7.0])));
    let hull = pipeline.feasible(&tube.state_tube, lcmpc::config::FeasibleMode::Hull, None).unwrap();
    for piece in exact.last() {
        assert!(hull.last()[0].contains_polytope(piece).unwrap());
    }
}
