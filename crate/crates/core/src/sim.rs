//! Closed-loop simulation, the output-tracking FCS-MPC baseline, and
//! steady-state metrics.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::linalg::{lcm, Mat, Vector};
use crate::model::SwitchedAffineSystem;
use crate::mpc::{self, Controller, FlatSystem, SearchCost, SearchSpec};
use crate::{Error, Result};

/// Slack on the per-step value decrease `V(k+1) − V(k) ≤ −l(k)`.
pub const DECREASE_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ClosedLoopTrace {
    pub k0: usize,
    /// `steps + 1` plant states (fewer if the run halted).
    #[serde(with = "crate::linalg::serde_vec_list")]
    pub states: Vec<Vector>,
    pub input_indices: Vec<usize>,
    #[serde(with = "crate::linalg::serde_vec_list")]
    pub inputs: Vec<Vector>,
    /// `y(k) = C(u(k)) x(k) + d(u(k))`.
    #[serde(with = "crate::linalg::serde_vec_list")]
    pub outputs: Vec<Vector>,
    pub value_function: Vec<f64>,
    /// `‖x(k) − x̄(k)‖` for the tracking controller, `‖y(k) − ȳ‖` for the
    /// baseline.
    pub tracking_error: Vec<f64>,
    pub nodes_expanded: Vec<u64>,
    pub nodes_pruned: Vec<u64>,
    pub feasible: Vec<bool>,
    /// Whether the shifted previous solution was feasible (from the second
    /// step on; `true` at the first step).
    pub shifted_feasible: Vec<bool>,
    /// `−l(k) − (V(k+1) − V(k))`, one entry per consecutive feasible pair.
    pub decrease_margin: Vec<f64>,
}

impl ClosedLoopTrace {
    pub fn steps(&self) -> usize {
        self.input_indices.len()
    }

    pub fn all_feasible(&self) -> bool {
        self.feasible.iter().all(|&f| f)
    }

    /// Recomputes the trajectory from `states[0]` and the applied inputs and
    /// reports whether it reproduces the recorded states bit for bit.
    pub fn replays_exactly(&self, sys: &SwitchedAffineSystem) -> Result<bool> {
        let Some(mut x) = self.states.first().cloned() else {
            return Ok(true);
        };
        for (k, &u) in self.input_indices.iter().enumerate() {
            x = sys.step(&x, u)?.0;
            if self.states.get(k + 1) != Some(&x) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// One row per step: `k, x…, u_index, u…, y…, V, error, feasible`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let n_x = self.states.first().map_or(0, |x| x.len());
        let n_u = self.inputs.first().map_or(0, |u| u.len());
        let n_y = self.outputs.first().map_or(0, |y| y.len());
        let mut header = vec!["k".to_string()];
        header.extend((0..n_x).map(|i| format!("x{i}")));
        header.push("u_index".into());
        header.extend((0..n_u).map(|i| format!("u{i}")));
        header.extend((0..n_y).map(|i| format!("y{i}")));
        header.extend(["V", "error", "feasible"].map(String::from));
        out.write_record(&header)?;
        for (k, x) in self.states.iter().enumerate() {
            let mut row = vec![(self.k0 + k).to_string()];
            row.extend(x.iter().map(|v| format!("{v:.16e}")));
            match self.input_indices.get(k) {
                Some(&u) => {
                    row.push(u.to_string());
                    row.extend(self.inputs[k].iter().map(|v| format!("{v:.16e}")));
                    row.extend(self.outputs[k].iter().map(|v| format!("{v:.16e}")));
                }
                None => row.extend(std::iter::repeat(String::new()).take(1 + n_u + n_y)),
            }
            let opt = |v: Option<&f64>| v.map_or(String::new(), |v| format!("{v:.16e}"));
            row.push(opt(self.value_function.get(k)));
            row.push(opt(self.tracking_error.get(k)));
            row.push(self.feasible.get(k).map_or(String::new(), |f| f.to_string()));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Runs the tracking controller from `x0` at time `k0` for `steps` steps,
/// halting at the first infeasible problem.
pub fn run_closed_loop(controller: &Controller, x0: &Vector, k0: usize, steps: usize) -> Result<ClosedLoopTrace> {
    let sys = controller.system();
    let cycle = &controller.config().cycle;
    let mut trace = ClosedLoopTrace {
        k0,
        states: vec![x0.clone()],
        ..Default::default()
    };
    let mut previous: Option<(Vec<usize>, f64, f64)> = None;
    let mut x = x0.clone();
    for step in 0..steps {
        let k = k0 + step;
        let warm = previous.as_ref().map(|(seq, _, _)| seq.as_slice());
        let sol = controller.solve_warm(&x, k, warm)?;
        trace.feasible.push(sol.feasible);
        trace.tracking_error.push((&x - cycle.state(k)).norm());
        let shifted_ok = match &previous {
            Some((seq, _, _)) => match controller.shifted(seq, k) {
                Some(s) => controller.sequence_cost(&x, k, &s)?.is_some(),
                None => false,
            },
            None => true,
        };
        trace.shifted_feasible.push(shifted_ok);
        if !sol.feasible {
            break;
        }
        if let Some((_, v_prev, l_prev)) = &previous {
            trace.decrease_margin.push(-l_prev - (sol.value - v_prev));
        }
        let u = sol.input_indices[0];
        let l = controller.stage_cost(&x, k, u);
        trace.value_function.push(sol.value);
        trace.nodes_expanded.push(sol.nodes_expanded);
        trace.nodes_pruned.push(sol.nodes_pruned);
        trace.input_indices.push(u);
        trace.inputs.push(sys.inputs().elements()[u].clone());
        let (next, y) = sys.step(&x, u)?;
        trace.outputs.push(y);
        trace.states.push(next.clone());
        previous = Some((sol.input_indices, sol.value, l));
        x = next;
    }
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineMpcConfig {
    pub horizon: usize,
    #[serde(with = "crate::linalg::serde_vec")]
    pub reference: Vector,
    #[serde(default = "one")]
    pub output_weight: f64,
    #[serde(default = "rate")]
    pub input_rate_weight: f64,
    #[serde(default = "terminal")]
    pub terminal_weight: f64,
    #[serde(default = "yes")]
    pub state_constraints: bool,
}

fn one() -> f64 {
    1.0
}
fn rate() -> f64 {
    0.01
}
fn terminal() -> f64 {
    100.0
}
fn yes() -> bool {
    true
}

impl BaselineMpcConfig {
    pub fn new(horizon: usize, reference: Vector) -> Self {
        BaselineMpcConfig {
            horizon,
            reference,
            output_weight: one(),
            input_rate_weight: rate(),
            terminal_weight: terminal(),
            state_constraints: true,
        }
    }

    fn validate(&self, sys: &SwitchedAffineSystem) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::invalid("baseline horizon must be at least 1"));
        }
        if self.reference.len() != sys.n_y() {
            return Err(Error::invalid("baseline reference dimension differs from n_y"));
        }
        let w = [self.output_weight, self.input_rate_weight, self.terminal_weight];
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("baseline weights must be nonnegative"));
        }
        Ok(())
    }
}

struct OutputCost {
    c: Vec<Mat>,
    d: Vec<Vector>,
    inputs: Vec<Vector>,
    reference: Vector,
    w_out: f64,
    w_rate: f64,
    w_term: f64,
}

impl OutputCost {
    fn output_error(&self, x: &[f64], u: usize) -> f64 {
        let (c, d) = (&self.c[u], &self.d[u]);
        let mut s = 0.0;
        for r in 0..c.nrows() {
            let mut y = d[r];
            for j in 0..c.ncols() {
                y += c[(r, j)] * x[j];
            }
            let e = y - self.reference[r];
            s += e * e;
        }
        s
    }
}

impl SearchCost for OutputCost {
    fn stage(&self, _i: usize, x: &[f64], u: usize, prev: usize) -> f64 {
        let du = (&self.inputs[u] - &self.inputs[prev]).norm_squared();
        self.w_out * self.output_error(x, u) + self.w_rate * du
    }

    fn terminal(&self, x: &[f64], last: usize) -> Option<f64> {
        Some(self.w_term * self.output_error(x, last))
    }
}

/// Standard FCS-MPC minimizing output error and input changes, with
/// `u_{−1|k}` equal to the input applied at `k − 1` (index 0 at the start).
pub fn run_baseline(
    sys: &SwitchedAffineSystem,
    baseline: &BaselineMpcConfig,
    x0: &Vector,
    steps: usize,
    threads: Option<usize>,
) -> Result<ClosedLoopTrace> {
    baseline.validate(sys)?;
    if x0.len() != sys.n_x() {
        return Err(Error::invalid("initial state dimension differs from n_x"));
    }
    let flat = FlatSystem::new(sys);
    let cost = OutputCost {
        c: sys.modes().iter().map(|m| m.c.clone()).collect(),
        d: sys.modes().iter().map(|m| m.d.clone()).collect(),
        inputs: sys.inputs().elements().to_vec(),
        reference: baseline.reference.clone(),
        w_out: baseline.output_weight,
        w_rate: baseline.input_rate_weight,
        w_term: baseline.terminal_weight,
    };
    let pool = threads
        .map(|t| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map(Arc::new)
                .map_err(|e| Error::invalid(format!("thread pool: {e}")))
        })
        .transpose()?;
    let mut trace = ClosedLoopTrace {
        k0: 0,
        states: vec![x0.clone()],
        ..Default::default()
    };
    let mut x = x0.clone();
    let mut prev_input = 0;
    let mut previous: Option<Vec<usize>> = None;
    for _ in 0..steps {
        let spec = SearchSpec {
            sys: &flat,
            cost: &cost,
            horizon: baseline.horizon,
            x0: x.as_slice(),
            prev_input,
            constrain_states: baseline.state_constraints,
        };
        let mut bound = f64::INFINITY;
        if let Some(prev) = &previous {
            let mut seq = prev[1..].to_vec();
            seq.push(*prev.last().expect("horizon ≥ 1"));
            if let Some(v) = mpc::sequence_cost(&spec, &seq) {
                bound = v;
            }
        }
        let outcome = match &pool {
            Some(p) => p.install(|| mpc::branch_and_bound(&spec, bound)),
            None => mpc::branch_and_bound(&spec, bound),
        };
        let feasible = outcome.best.is_some();
        trace.feasible.push(feasible);
        trace.shifted_feasible.push(true);
        let Some((value, seq)) = outcome.best else {
            break;
        };
        let u = seq[0];
        trace.value_function.push(value);
        trace.nodes_expanded.push(outcome.expanded);
        trace.nodes_pruned.push(outcome.pruned);
        trace.input_indices.push(u);
        trace.inputs.push(sys.inputs().elements()[u].clone());
        let (next, y) = sys.step(&x, u)?;
        trace.tracking_error.push((&y - &baseline.reference).norm());
        trace.outputs.push(y);
        trace.states.push(next.clone());
        prev_input = u;
        previous = Some(seq);
        x = next;
    }
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateMetrics {
    pub burn_in: usize,
    pub window: usize,
    /// Mean `|y_r − ȳ_r|` over the window, per output.
    pub mean_abs_output_error: Vec<f64>,
    /// Mean signed `y_r − ȳ_r` over the window, per output.
    pub mean_output_error: Vec<f64>,
    pub mean_state: Vec<f64>,
    /// Smallest input period dividing the window, if any.
    pub period: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<Vec<usize>>,
}

/// Default burn-in (70% of the run) and a window that is a multiple of
/// `period` filling the rest.
pub fn default_window(steps: usize, period: usize) -> (usize, usize) {
    let burn_in = steps * 7 / 10;
    let rest = steps - burn_in;
    let period = period.max(1);
    let window = if rest >= period { rest / period * period } else { rest };
    (steps - window, window)
}

pub fn steady_state_metrics(
    trace: &ClosedLoopTrace,
    reference: &Vector,
    burn_in: usize,
    window: usize,
) -> Result<SteadyStateMetrics> {
    let steps = trace.steps();
    if window == 0 || burn_in + window > steps {
        return Err(Error::invalid(format!(
            "window {window} after burn-in {burn_in} exceeds the {steps} recorded steps"
        )));
    }
    let range = burn_in..burn_in + window;
    let n_y = reference.len();
    let mut abs_err = vec![0.0; n_y];
    let mut err = vec![0.0; n_y];
    for y in &trace.outputs[range.clone()] {
        if y.len() != n_y {
            return Err(Error::invalid("reference dimension differs from the outputs"));
        }
        for r in 0..n_y {
            abs_err[r] += (y[r] - reference[r]).abs();
            err[r] += y[r] - reference[r];
        }
    }
    let n_x = trace.states[0].len();
    let mut mean_state = vec![0.0; n_x];
    for x in &trace.states[range.clone()] {
        for i in 0..n_x {
            mean_state[i] += x[i];
        }
    }
    let w = window as f64;
    let inputs = &trace.input_indices[range];
    let period = (1..=window / 2)
        .filter(|q| window % q == 0)
        .find(|&q| (q..window).all(|i| inputs[i] == inputs[i - q]));
    Ok(SteadyStateMetrics {
        burn_in,
        window,
        mean_abs_output_error: abs_err.iter().map(|v| v / w).collect(),
        mean_output_error: err.iter().map(|v| v / w).collect(),
        mean_state: mean_state.iter().map(|v| v / w).collect(),
        pattern: period.map(|q| inputs[..q].to_vec()),
        period,
    })
}

/// Whether `pattern` is a cyclic rotation of `target`.
pub fn is_rotation(pattern: &[usize], target: &[usize]) -> bool {
    pattern.len() == target.len()
        && (0..target.len().max(1)).any(|s| (0..target.len()).all(|i| pattern[i] == target[(i + s) % target.len()]))
}

/// Length of the ingredient cycle `lcm(p, N)` after which the
/// time-varying problem data repeat.
pub fn ingredient_period(p: usize, horizon: usize) -> usize {
    lcm(p, horizon)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace_with_inputs(inputs: &[usize], outputs: &[f64]) -> ClosedLoopTrace {
        ClosedLoopTrace {
            states: (0..=inputs.len()).map(|_| Vector::zeros(1)).collect(),
            input_indices: inputs.to_vec(),
            outputs: outputs.iter().map(|&v| Vector::from_element(1, v)).collect(),
            ..Default::default()
        }
    }

    #[test]
    fn constant_trace_has_period_one() {
        let t = trace_with_inputs(&[2; 10], &[1.5; 10]);
        let m = steady_state_metrics(&t, &Vector::from_element(1, 1.0), 0, 10).unwrap();
        assert_eq!(m.period, Some(1));
        assert!((m.mean_abs_output_error[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cyclic_trace_period() {
        let inputs: Vec<usize> = (0..12).map(|k| [0, 0, 1][k % 3]).collect();
        let t = trace_with_inputs(&inputs, &[0.0; 12]);
        let m = steady_state_metrics(&t, &Vector::zeros(1), 0, 12).unwrap();
        assert_eq!(m.period, Some(3));
        assert!(is_rotation(m.pattern.as_ref().unwrap(), &[0, 1, 0]));
    }

    #[test]
    fn aperiodic_trace() {
        let t = trace_with_inputs(&[0, 1, 1, 0, 1, 0], &[0.0; 6]);
        let m = steady_state_metrics(&t, &Vector::zeros(1), 0, 6).unwrap();
        assert_eq!(m.period, None);
    }

    #[test]
    fn window_is_period_aligned() {
        assert_eq!(default_window(2000, 6), (1400, 600));
        assert_eq!(default_window(60, 3), (42, 18));
    }
}
