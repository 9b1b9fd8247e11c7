#![allow(dead_code)]

use std::path::PathBuf;

use lcmpc::config::ExperimentConfig;
use lcmpc::cycle::{solve_cycle, LimitCycle};
use lcmpc::geometry::Polytope;
use lcmpc::linalg::{mat_from_rows, Mat, Vector};
use lcmpc::lyap::{solve_periodic_lyapunov, PeriodicTerminalCost, StageCost};
use lcmpc::model::{FiniteInputSet, Mode, SwitchedAffineSystem};
use lcmpc::mpc::{Controller, MpcConfig};
use lcmpc::pipeline::Pipeline;
use lcmpc::tube::{lift_to_state, StateTube, TubeSets};
use lcmpc::geometry::Ellipsoid;
use rand::Rng;

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(format!("{name}.json"))
}

pub fn example(name: &str) -> Pipeline {
    Pipeline::new(ExperimentConfig::from_path(config_path(name)).unwrap()).unwrap()
}

pub fn rows(r: &[&[f64]]) -> Mat {
    mat_from_rows(&r.iter().map(|x| x.to_vec()).collect::<Vec<_>>()).unwrap()
}

pub fn reference_p_example1() -> Vec<Mat> {
    vec![
        rows(&[&[8.3687, -6.1328], &[-6.1328, 16.2102]]),
        rows(&[&[8.8767, -2.9657], &[-2.9657, 12.1265]]),
        rows(&[&[14.2377, 0.3486], &[0.3486, 5.6049]]),
    ]
}

pub fn reference_p_example2() -> Vec<Mat> {
    [
        [0.4290, 0.0935, 1.8432],
        [0.4266, 0.0947, 1.8539],
        [0.4243, 0.0959, 1.8648],
        [0.4267, 0.0951, 1.8540],
        [0.4291, 0.0939, 1.8433],
        [0.4314, 0.0922, 1.8326],
    ]
    .iter()
    .map(|&[a, b, c]| rows(&[&[a, b], &[b, c]]) * 1e3)
    .collect()
}

pub fn example1_cycle() -> [[f64; 2]; 3] {
    [[0.0763, 0.2475], [0.3674, -0.5657], [0.9950, -1.1970]]
}

pub fn example2_cycle() -> [[f64; 2]; 6] {
    [
        [18.3900, 4.6343],
        [18.1627, 4.6112],
        [17.9355, 4.5882],
        [18.2027, 4.1146],
        [18.4159, 3.6374],
        [18.6173, 3.9056],
    ]
}

/// Random matrix with induced 2-norm at most `radius`, so products of such
/// matrices stay contractive too.
pub fn random_stable<R: Rng>(rng: &mut R, n: usize, radius: f64) -> Mat {
    let m = Mat::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let r = m.clone().svd(false, false).singular_values.max().max(1e-3);
    m * (radius * rng.gen_range(0.3..1.0) / r)
}

/// Switched affine system with stable modes, `C = I` and a box of
/// half-width `bound`.
pub fn random_system<R: Rng>(rng: &mut R, n: usize, ns: usize, bound: f64) -> SwitchedAffineSystem {
    let modes = (0..ns)
        .map(|_| Mode {
            a: random_stable(rng, n, 0.95),
            b: Vector::from_fn(n, |_, _| rng.gen_range(-0.3..0.3) * bound),
            c: Mat::identity(n, n),
            d: Vector::zeros(n),
        })
        .collect();
    let inputs = FiniteInputSet::scalars(&(0..ns).map(|i| i as f64).collect::<Vec<_>>()).unwrap();
    SwitchedAffineSystem::new(modes, inputs, Polytope::from_box(&vec![-bound; n], &vec![bound; n]).unwrap()).unwrap()
}

/// Random cycle of period `p` whose states lie inside the constraints.
pub fn random_cycle<R: Rng>(rng: &mut R, sys: &SwitchedAffineSystem, p: usize) -> Option<LimitCycle> {
    for _ in 0..20 {
        let seq: Vec<usize> = (0..p).map(|_| rng.gen_range(0..sys.num_inputs())).collect();
        if let Ok(c) = solve_cycle(sys, &seq) {
            if c.states.iter().all(|x| sys.state_constraints().max_violation(x) < -1e-6) {
                return Some(c);
            }
        }
    }
    None
}

/// Ellipsoidal state tube `{x : (x − x̄_j)ᵀ P_j (x − x̄_j) ≤ level}` used as
/// an arbitrary terminal set for solver tests.
pub fn level_tube(cycle: &LimitCycle, terminal: &PeriodicTerminalCost, level: f64) -> StateTube {
    let sets = terminal
        .p
        .iter()
        .zip(&cycle.states)
        .map(|(p, x)| Ellipsoid::new(p / level, x.clone()).unwrap())
        .collect();
    StateTube {
        sets: TubeSets::Ellipsoidal(sets),
    }
}

pub struct RandomInstance {
    pub sys: SwitchedAffineSystem,
    pub controller: Controller,
    pub x0: Vector,
}

/// Random tracking problem; `None` when the drawn system has no admissible
/// cycle.
pub fn random_instance<R: Rng>(rng: &mut R, n: usize, ns: usize, horizon: usize) -> Option<RandomInstance> {
    let sys = random_system(rng, n, ns, 5.0);
    let p = rng.gen_range(1..=3);
    let cycle = random_cycle(rng, &sys, p)?;
    let q = Mat::identity(n, n);
    let terminal = solve_periodic_lyapunov(&sys, &cycle, &q).ok()?;
    let tube = level_tube(&cycle, &terminal, rng.gen_range(0.5..50.0));
    let config = MpcConfig {
        horizon,
        stage: StageCost::new(q, Mat::identity(1, 1) * 0.01).unwrap(),
        terminal,
        terminal_tube: tube,
        cycle,
        state_constraints: true,
        warm_start: rng.gen_bool(0.5),
    };
    let controller = Controller::new(sys.clone(), config).ok()?;
    let x0 = Vector::from_fn(n, |_, _| rng.gen_range(-4.5..4.5));
    Some(RandomInstance { sys, controller, x0 })
}

/// State tube lifted from the polytopic error tube, if it exists.
pub fn polytopic_state_tube(sys: &SwitchedAffineSystem, cycle: &LimitCycle) -> Option<Vec<Polytope>> {
    let tube = lcmpc::tube::polytopic_tube(sys, cycle, 200).ok()?;
    match lift_to_state(&tube, cycle).ok()?.sets {
        TubeSets::Polytopic(v) => Some(v),
        TubeSets::Ellipsoidal(_) => None,
    }
}

/// Brute-force membership in the `N`-step feasible set: some input sequence
/// keeps `x_0 … x_{N−1}` in the constraints and ends in a terminal set.
pub fn feasible_by_enumeration(sys: &SwitchedAffineSystem, terminal: &[Polytope], x: &Vector, horizon: usize) -> bool {
    fn go(sys: &SwitchedAffineSystem, terminal: &[Polytope], x: &Vector, left: usize) -> bool {
        if left == 0 {
            return terminal.iter().any(|t| t.max_violation(x) <= 1e-9);
        }
        if sys.state_constraints().max_violation(x) > 1e-9 {
            return false;
        }
        (0..sys.num_inputs()).any(|u| {
            let m = sys.mode(u);
            go(sys, terminal, &(&m.a * x + &m.b), left - 1)
        })
    }
    go(sys, terminal, x, horizon)
}

/// Independent reference for the tracking problem: every sequence is rolled
/// out with the public model API and the lexicographically first minimizer
/// is kept.
pub fn naive_tracking(controller: &Controller, x0: &Vector, k: usize) -> Option<(f64, Vec<usize>)> {
    let sys = controller.system();
    let cfg = controller.config();
    let (n_s, horizon) = (sys.num_inputs(), cfg.horizon);
    let inputs = sys.inputs().elements();
    let j_term = (k + horizon) % cfg.cycle.period();
    let mut best: Option<(f64, Vec<usize>)> = None;
    let total = n_s.pow(horizon as u32);
    'seq: for code in 0..total {
        let mut seq = vec![0; horizon];
        let mut c = code;
        for i in (0..horizon).rev() {
            seq[i] = c % n_s;
            c /= n_s;
        }
        let mut x = x0.clone();
        let mut cost = 0.0;
        for (i, &u) in seq.iter().enumerate() {
            let ubar = &inputs[cfg.cycle.input_index(k + i)];
            cost += cfg.stage.eval(&(&x - cfg.cycle.state(k + i)), &(&inputs[u] - ubar));
            x = sys.step(&x, u).unwrap().0;
            if cfg.state_constraints && i + 1 < horizon && !sys.state_constraints().contains_point(&x, 1e-9) {
                continue 'seq;
            }
        }
        if !cfg.terminal_tube.contains(j_term, &x, 1e-9) {
            continue;
        }
        let z = &x - cfg.cycle.state(k + horizon);
        cost += z.dot(&(&cfg.terminal.p[j_term] * &z));
        if best.as_ref().is_none_or(|(b, _)| cost < *b) {
            best = Some((cost, seq));
        }
    }
    best
}

/// Agreement of the controller with [`naive_tracking`]: same feasibility,
/// same value up to summation order, and the same argmin unless the two
/// candidates tie to rounding.
pub fn matches_naive(controller: &Controller, x0: &Vector, k: usize) -> Result<(), String> {
    let sol = controller.solve(x0, k).map_err(|e| e.to_string())?;
    let oracle = naive_tracking(controller, x0, k);
    match (&oracle, sol.feasible) {
        (None, false) => Ok(()),
        (Some((v, seq)), true) => {
            let tol = 1e-10 * (1.0 + v.abs());
            if (sol.value - v).abs() > tol {
                return Err(format!("value {} vs oracle {v}", sol.value));
            }
            if &sol.input_indices != seq {
                let alt = controller
                    .sequence_cost(x0, k, seq)
                    .map_err(|e| e.to_string())?
                    .unwrap_or(f64::INFINITY);
                if (alt - sol.value).abs() > tol {
                    return Err(format!("argmin {:?} vs oracle {seq:?}", sol.input_indices));
                }
            }
            Ok(())
        }
        _ => Err(format!("feasibility {} vs oracle {}", sol.feasible, oracle.is_some())),
    }
}
