mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lcmpc::tube::TubeKind;

use common::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn branch_and_bound_matches_enumeration(seed in 0u64..1_000_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..=3);
        let ns = rng.gen_range(2..=4);
        let horizon = rng.gen_range(1..=5);
        let inst = random_instance(&mut rng, n, ns, horizon);
        prop_assume!(inst.is_some());
        let inst = inst.unwrap();
        let k = rng.gen_range(0..6);
        if let Err(e) = matches_naive(&inst.controller, &inst.x0, k) {
            return Err(TestCaseError::fail(e));
        }
        let exhaustive = inst.controller.solve_naive(&inst.x0, k).unwrap();
        let bnb = inst.controller.solve(&inst.x0, k).unwrap();
        prop_assert_eq!(bnb.feasible, exhaustive.feasible);
        if bnb.feasible {
            prop_assert!((bnb.value - exhaustive.value).abs() <= 1e-10 * (1.0 + exhaustive.value.abs()));
        }
    }

    #[test]
    fn thread_count_does_not_change_the_search(seed in 0u64..1_000_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng, 2, 4, 5);
        prop_assume!(inst.is_some());
        let inst = inst.unwrap();
        let one = inst.controller.clone().with_threads(1).unwrap().solve(&inst.x0, 1).unwrap();
        let three = inst.controller.clone().with_threads(3).unwrap().solve(&inst.x0, 1).unwrap();
        prop_assert_eq!(one, three);
    }
}

#[test]
fn starting_on_the_cycle_costs_nothing() {
    let pipeline = example("example1");
    let cycle = pipeline.cycle().unwrap().cycle;
    let terminal = pipeline.terminal_cost(&cycle).unwrap().terminal;
    let tube = pipeline.tube(&cycle, &terminal, TubeKind::Polytopic).unwrap();
    let controller = pipeline.controller(&cycle, &terminal, &tube.state_tube).unwrap();
    for k in 0..cycle.period() {
        let sol = controller.solve(cycle.state(k), k).unwrap();
        assert!(sol.feasible);
        assert!(sol.value.abs() < 1e-20, "{}", sol.value);
        assert_eq!(Some(sol.input_indices), controller.cycle_sequence(k));
    }
}

#[test]
fn warm_start_keeps_the_argmin() {
    let pipeline = example("example1");
    let cycle = pipeline.cycle().unwrap().cycle;
    let terminal = pipeline.terminal_cost(&cycle).unwrap().terminal;
    let tube = pipeline.tube(&cycle, &terminal, TubeKind::Polytopic).unwrap();
    let mut cold = pipeline.controller(&cycle, &terminal, &tube.state_tube).unwrap();
    let mut config = cold.config().clone();
    config.warm_start = false;
    cold = lcmpc::mpc::Controller::new(pipeline.system.clone(), config.clone()).unwrap();
    config.warm_start = true;
    let warm = lcmpc::mpc::Controller::new(pipeline.system.clone(), config).unwrap();

    let mut x = lcmpc::linalg::vector(&[-10.0, 7.0]);
    let mut previous: Option<Vec<usize>> = None;
    for k in 0..12 {
        let a = cold.solve(&x, k).unwrap();
        let b = warm.solve_warm(&x, k, previous.as_deref()).unwrap();
        assert_eq!(a.input_indices, b.input_indices);
        assert_eq!(a.value, b.value);
        assert!(b.nodes_expanded <= a.nodes_expanded);
        x = pipeline.system.step(&x, a.input_indices[0]).unwrap().0;
        previous = Some(a.input_indices);
    }
}

#[test]
fn infeasible_state_is_reported() {
    let pipeline = example("example1");
    let cycle = pipeline.cycle().unwrap().cycle;
    let terminal = pipeline.terminal_cost(&cycle).unwrap().terminal;
    let tube = pipeline.tube(&cycle, &terminal, TubeKind::Polytopic).unwrap();
    let controller = pipeline.controller(&cycle, &terminal, &tube.state_tube).unwrap();
    let sol = controller.solve(&lcmpc::linalg::vector(&[-14.9, 14.9]), 0).unwrap();
    if !sol.feasible {
        assert!(sol.value.is_infinite());
        assert!(controller.receding_horizon_law(&lcmpc::linalg::vector(&[-14.9, 14.9]), 0).is_err());
    }
    assert!(controller.solve(&lcmpc::linalg::vector(&[1.0]), 0).is_err());
}
