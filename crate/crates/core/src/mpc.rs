//! Finite-control-set MPC tracking a limit cycle, solved exactly by
//! depth-first branch and bound over the input tree.
//!
//! The search works on flat row-major copies of the mode data. Children are
//! visited in ascending input index and the incumbent is only replaced on a
//! strict improvement, so the returned sequence is the lexicographically
//! smallest minimizer. The tree is split at a fixed depth into independent
//! subtrees that share nothing but the optional warm-start bound; solutions
//! and node counters are therefore identical for every worker count.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cycle::LimitCycle;
use crate::geometry::{Polytope, FEAS_TOL};
use crate::linalg::{CompensatedSum, Mat, Vector};
use crate::lyap::{PeriodicTerminalCost, StageCost};
use crate::model::SwitchedAffineSystem;
use crate::tube::{StateTube, TubeSets};
use crate::{Error, Result};

/// Slack on terminal-set membership.
pub const TERMINAL_TOL: f64 = 1e-9;
const SPLIT_DEPTH: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcConfig {
    pub horizon: usize,
    pub stage: StageCost,
    pub terminal: PeriodicTerminalCost,
    pub terminal_tube: StateTube,
    pub cycle: LimitCycle,
    /// Enforce `x_{i|k} ∈ 𝕏` for `i = 1..N−1`.
    #[serde(default = "yes")]
    pub state_constraints: bool,
    /// Seed the bound with the shifted previous solution.
    #[serde(default)]
    pub warm_start: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcSolution {
    pub input_indices: Vec<usize>,
    #[serde(with = "crate::linalg::serde_vec_list")]
    pub predicted_states: Vec<Vector>,
    pub value: f64,
    pub nodes_expanded: u64,
    pub nodes_pruned: u64,
    pub feasible: bool,
}

/// `(x̄_lc((k+i) mod p), ū index at (k+i) mod p)`.
pub fn reference_at(cycle: &LimitCycle, k: usize, i: usize) -> (&Vector, usize) {
    (cycle.state(k + i), cycle.input_index(k + i))
}

/// Index of the terminal set `𝒳_{(k+N) mod p}`.
pub fn terminal_phase(tube: &StateTube, k: usize, horizon: usize) -> usize {
    (k + horizon) % tube.period()
}

/// `𝕏_T(k) = 𝒳_{(k+N) mod p}` as a stand-alone tube with one set.
pub fn terminal_set_at(tube: &StateTube, k: usize, horizon: usize) -> TubeSets {
    let j = terminal_phase(tube, k, horizon);
    match &tube.sets {
        TubeSets::Ellipsoidal(v) => TubeSets::Ellipsoidal(vec![v[j].clone()]),
        TubeSets::Polytopic(v) => TubeSets::Polytopic(vec![v[j].clone()]),
    }
}

// ---------------------------------------------------------------------------
// flat search engine

fn flat(m: &Mat) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.push(m[(r, c)]);
        }
    }
    out
}

#[inline]
fn quad(m: &[f64], z: &[f64]) -> f64 {
    let n = z.len();
    let mut s = 0.0;
    for r in 0..n {
        let mut row = 0.0;
        for c in 0..n {
            row += m[r * n + c] * z[c];
        }
        s += z[r] * row;
    }
    s
}

#[derive(Debug, Clone)]
pub(crate) struct FlatSystem {
    n: usize,
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    h_rows: Vec<f64>,
    h_rhs: Vec<f64>,
}

impl FlatSystem {
    pub(crate) fn new(sys: &SwitchedAffineSystem) -> Self {
        let x = sys.state_constraints().normalized();
        FlatSystem {
            n: sys.n_x(),
            a: sys.modes().iter().map(|m| flat(&m.a)).collect(),
            b: sys.modes().iter().map(|m| m.b.as_slice().to_vec()).collect(),
            h_rows: flat(x.a()),
            h_rhs: x.b().as_slice().to_vec(),
        }
    }

    fn num_inputs(&self) -> usize {
        self.a.len()
    }

    #[inline]
    fn step(&self, x: &[f64], u: usize, out: &mut [f64]) {
        let n = self.n;
        let (a, b) = (&self.a[u], &self.b[u]);
        for r in 0..n {
            let mut s = b[r];
            for c in 0..n {
                s += a[r * n + c] * x[c];
            }
            out[r] = s;
        }
    }

    #[inline]
    fn admissible(&self, x: &[f64]) -> bool {
        let n = self.n;
        self.h_rhs.iter().enumerate().all(|(i, &h)| {
            let row = &self.h_rows[i * n..(i + 1) * n];
            row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() - h <= FEAS_TOL
        })
    }
}

/// Cost model plugged into the search.
pub(crate) trait SearchCost: Sync {
    /// Stage `i` cost of input `u` at state `x`; `prev` is the input applied
    /// one step earlier.
    fn stage(&self, i: usize, x: &[f64], u: usize, prev: usize) -> f64;
    /// Terminal cost, or `None` when `x` violates the terminal constraint.
    fn terminal(&self, x: &[f64], last: usize) -> Option<f64>;
}

pub(crate) struct SearchSpec<'a, C: SearchCost> {
    pub sys: &'a FlatSystem,
    pub cost: &'a C,
    pub horizon: usize,
    pub x0: &'a [f64],
    pub prev_input: usize,
    pub constrain_states: bool,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct SearchOutcome {
    pub best: Option<(f64, Vec<usize>)>,
    pub expanded: u64,
    pub pruned: u64,
}

struct Dfs<'a, C: SearchCost> {
    spec: &'a SearchSpec<'a, C>,
    prefix: &'a [usize],
    prune: bool,
    bound: f64,
    states: Vec<f64>,
    seq: Vec<usize>,
    partial: Vec<CompensatedSum>,
    best: f64,
    best_seq: Option<Vec<usize>>,
    expanded: u64,
    pruned: u64,
}

impl<'a, C: SearchCost> Dfs<'a, C> {
    fn new(spec: &'a SearchSpec<'a, C>, prefix: &'a [usize], prune: bool, bound: f64) -> Self {
        let n = spec.sys.n;
        let mut states = vec![0.0; (spec.horizon + 1) * n];
        states[..n].copy_from_slice(spec.x0);
        Dfs {
            spec,
            prefix,
            prune,
            bound,
            states,
            seq: vec![0; spec.horizon],
            partial: vec![CompensatedSum::default(); spec.horizon + 1],
            best: f64::INFINITY,
            best_seq: None,
            expanded: 0,
            pruned: 0,
        }
    }

    fn descend(&mut self, depth: usize) {
        let spec = self.spec;
        let (n, horizon) = (spec.sys.n, spec.horizon);
        if depth == horizon {
            let x = &self.states[horizon * n..];
            if let Some(t) = spec.cost.terminal(x, self.seq[horizon - 1]) {
                let total = self.partial[horizon].add(t).value();
                if total < self.best {
                    self.best = total;
                    self.best_seq = Some(self.seq.clone());
                }
            }
            return;
        }
        let choices = match self.prefix.get(depth) {
            Some(&u) => u..u + 1,
            None => 0..spec.sys.num_inputs(),
        };
        for u in choices {
            self.expanded += 1;
            let prev = if depth == 0 { spec.prev_input } else { self.seq[depth - 1] };
            let (head, tail) = self.states.split_at_mut((depth + 1) * n);
            let x = &head[depth * n..];
            let sum = self.partial[depth].add(spec.cost.stage(depth, x, u, prev));
            let v = sum.value();
            if self.prune && (v >= self.best || v > self.bound) {
                self.pruned += 1;
                continue;
            }
            let next = &mut tail[..n];
            spec.sys.step(x, u, next);
            if spec.constrain_states && depth + 1 < horizon && !spec.sys.admissible(next) {
                self.pruned += 1;
                continue;
            }
            self.seq[depth] = u;
            self.partial[depth + 1] = sum;
            self.descend(depth + 1);
        }
    }
}

fn prefixes(num_inputs: usize, depth: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..depth {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..num_inputs).map(move |u| {
                    let mut q = p.clone();
                    q.push(u);
                    q
                })
            })
            .collect();
    }
    out
}

fn merge(parts: Vec<SearchOutcome>) -> SearchOutcome {
    let mut out = SearchOutcome::default();
    for part in parts {
        out.expanded += part.expanded;
        out.pruned += part.pruned;
        if let Some((v, seq)) = part.best {
            let better = match &out.best {
                None => true,
                Some((bv, bseq)) => v < *bv || (v == *bv && seq < *bseq),
            };
            if better {
                out.best = Some((v, seq));
            }
        }
    }
    out
}

/// Branch and bound; `bound` is the cost of a known feasible sequence (or
/// infinity) and only prunes partial costs strictly above it.
pub(crate) fn branch_and_bound<C: SearchCost>(spec: &SearchSpec<'_, C>, bound: f64) -> SearchOutcome {
    let depth = SPLIT_DEPTH.min(spec.horizon);
    let parts: Vec<SearchOutcome> = prefixes(spec.sys.num_inputs(), depth)
        .par_iter()
        .map(|prefix| {
            let mut dfs = Dfs::new(spec, prefix, true, bound);
            dfs.descend(0);
            SearchOutcome {
                best: dfs.best_seq.map(|s| (dfs.best, s)),
                expanded: dfs.expanded,
                pruned: dfs.pruned,
            }
        })
        .collect();
    merge(parts)
}

/// Full enumeration without pruning (reference implementation).
pub(crate) fn enumerate_all<C: SearchCost>(spec: &SearchSpec<'_, C>) -> SearchOutcome {
    let mut dfs = Dfs::new(spec, &[], false, f64::INFINITY);
    dfs.descend(0);
    SearchOutcome {
        best: dfs.best_seq.map(|s| (dfs.best, s)),
        expanded: dfs.expanded,
        pruned: dfs.pruned,
    }
}

/// Cost of one fixed sequence, with the same arithmetic as the search.
pub(crate) fn sequence_cost<C: SearchCost>(spec: &SearchSpec<'_, C>, seq: &[usize]) -> Option<f64> {
    if seq.len() != spec.horizon || seq.iter().any(|&u| u >= spec.sys.num_inputs()) {
        return None;
    }
    let n = spec.sys.n;
    let mut x = spec.x0.to_vec();
    let mut next = vec![0.0; n];
    let mut sum = CompensatedSum::default();
    for (i, &u) in seq.iter().enumerate() {
        let prev = if i == 0 { spec.prev_input } else { seq[i - 1] };
        sum = sum.add(spec.cost.stage(i, &x, u, prev));
        spec.sys.step(&x, u, &mut next);
        if spec.constrain_states && i + 1 < spec.horizon && !spec.sys.admissible(&next) {
            return None;
        }
        std::mem::swap(&mut x, &mut next);
    }
    let t = spec.cost.terminal(&x, seq[spec.horizon - 1])?;
    Some(sum.add(t).value())
}

pub(crate) fn rollout(sys: &FlatSystem, x0: &[f64], seq: &[usize]) -> Vec<Vector> {
    let mut out = vec![Vector::from_column_slice(x0)];
    let mut next = vec![0.0; sys.n];
    for &u in seq {
        sys.step(out.last().expect("nonempty").as_slice(), u, &mut next);
        out.push(Vector::from_column_slice(&next));
    }
    out
}

// ---------------------------------------------------------------------------
// limit-cycle tracking cost

#[derive(Debug, Clone)]
enum FlatSet {
    Polytope { rows: Vec<f64>, rhs: Vec<f64> },
    Ellipsoid { shape: Vec<f64>, center: Vec<f64> },
}

impl FlatSet {
    fn new(sets: &TubeSets, j: usize) -> Self {
        match sets {
            TubeSets::Polytopic(v) => {
                let p: Polytope = v[j].normalized();
                FlatSet::Polytope {
                    rows: flat(p.a()),
                    rhs: p.b().as_slice().to_vec(),
                }
            }
            TubeSets::Ellipsoidal(v) => FlatSet::Ellipsoid {
                shape: flat(v[j].shape()),
                center: v[j].center().as_slice().to_vec(),
            },
        }
    }

    fn contains(&self, x: &[f64]) -> bool {
        let n = x.len();
        match self {
            FlatSet::Polytope { rows, rhs } => rhs.iter().enumerate().all(|(i, &h)| {
                rows[i * n..(i + 1) * n].iter().zip(x).map(|(a, v)| a * v).sum::<f64>() - h <= TERMINAL_TOL
            }),
            FlatSet::Ellipsoid { shape, center } => {
                let d: Vec<f64> = x.iter().zip(center).map(|(a, c)| a - c).collect();
                quad(shape, &d) <= 1.0 + TERMINAL_TOL
            }
        }
    }
}

struct TrackingCost<'a> {
    k: usize,
    q: &'a [f64],
    xbar: &'a [Vec<f64>],
    /// `‖u − ū_j‖²_R` indexed `[phase][input]`.
    input_cost: &'a [Vec<f64>],
    terminal_p: &'a [f64],
    terminal_center: &'a [f64],
    terminal_set: &'a FlatSet,
}

impl SearchCost for TrackingCost<'_> {
    #[inline]
    fn stage(&self, i: usize, x: &[f64], u: usize, _prev: usize) -> f64 {
        let p = self.xbar.len();
        let j = (self.k + i) % p;
        let mut z = [0.0; 8];
        let n = x.len();
        let cost = if n <= z.len() {
            for r in 0..n {
                z[r] = x[r] - self.xbar[j][r];
            }
            quad(self.q, &z[..n])
        } else {
            let z: Vec<f64> = x.iter().zip(&self.xbar[j]).map(|(a, b)| a - b).collect();
            quad(self.q, &z)
        };
        cost + self.input_cost[j][u]
    }

    fn terminal(&self, x: &[f64], _last: usize) -> Option<f64> {
        if !self.terminal_set.contains(x) {
            return None;
        }
        let z: Vec<f64> = x.iter().zip(self.terminal_center).map(|(a, b)| a - b).collect();
        Some(quad(self.terminal_p, &z))
    }
}

/// Online limit-cycle tracking controller.
#[derive(Debug, Clone)]
pub struct Controller {
    sys: SwitchedAffineSystem,
    config: MpcConfig,
    flat: FlatSystem,
    q: Vec<f64>,
    xbar: Vec<Vec<f64>>,
    input_cost: Vec<Vec<f64>>,
    terminal_p: Vec<Vec<f64>>,
    terminal_sets: Vec<FlatSet>,
    pool: Option<Arc<rayon::ThreadPool>>,
}

impl Controller {
    pub fn new(sys: SwitchedAffineSystem, config: MpcConfig) -> Result<Self> {
        let p = config.cycle.period();
        let n = sys.n_x();
        if config.horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        if config.terminal.period() != p || config.terminal_tube.period() != p {
            return Err(Error::invalid("terminal ingredients and cycle have different periods"));
        }
        config.cycle.validate(&sys)?;
        if config.stage.q().shape() != (n, n) || config.stage.r().shape() != (sys.n_u(), sys.n_u()) {
            return Err(Error::invalid("stage weights have the wrong dimensions"));
        }
        if config.terminal.p.iter().any(|m| m.shape() != (n, n)) {
            return Err(Error::invalid("terminal matrices have the wrong dimensions"));
        }
        let tube_dim_ok = match &config.terminal_tube.sets {
            TubeSets::Polytopic(v) => v.iter().all(|s| s.dim() == n),
            TubeSets::Ellipsoidal(v) => v.iter().all(|s| s.dim() == n),
        };
        if !tube_dim_ok {
            return Err(Error::invalid("terminal sets have the wrong dimension"));
        }
        let r = config.stage.r();
        let input_cost = (0..p)
            .map(|j| {
                let ubar = &sys.inputs().elements()[config.cycle.input_index(j)];
                sys.inputs()
                    .elements()
                    .iter()
                    .map(|u| {
                        let e = u - ubar;
                        e.dot(&(r * &e))
                    })
                    .collect()
            })
            .collect();
        Ok(Controller {
            flat: FlatSystem::new(&sys),
            q: flat(config.stage.q()),
            xbar: config.cycle.states.iter().map(|x| x.as_slice().to_vec()).collect(),
            input_cost,
            terminal_p: config.terminal.p.iter().map(flat).collect(),
            terminal_sets: (0..p).map(|j| FlatSet::new(&config.terminal_tube.sets, j)).collect(),
            sys,
            config,
            pool: None,
        })
    }

    /// Runs the search on a dedicated pool of `threads` workers.
    pub fn with_threads(mut self, threads: usize) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
        self.pool = Some(Arc::new(pool));
        Ok(self)
    }

    pub fn system(&self) -> &SwitchedAffineSystem {
        &self.sys
    }

    pub fn config(&self) -> &MpcConfig {
        &self.config
    }

    fn cost(&self, k: usize) -> TrackingCost<'_> {
        let p = self.config.cycle.period();
        let j = (k + self.config.horizon) % p;
        TrackingCost {
            k,
            q: &self.q,
            xbar: &self.xbar,
            input_cost: &self.input_cost,
            terminal_p: &self.terminal_p[j],
            terminal_center: &self.xbar[j],
            terminal_set: &self.terminal_sets[j],
        }
    }

    fn check_state(&self, x: &Vector) -> Result<()> {
        if x.len() != self.sys.n_x() {
            return Err(Error::invalid("state dimension differs from n_x"));
        }
        Ok(())
    }

    fn spec<'a>(&'a self, cost: &'a TrackingCost<'a>, x: &'a Vector) -> SearchSpec<'a, TrackingCost<'a>> {
        SearchSpec {
            sys: &self.flat,
            cost,
            horizon: self.config.horizon,
            x0: x.as_slice(),
            prev_input: 0,
            constrain_states: self.config.state_constraints,
        }
    }

    fn finish(&self, x: &Vector, outcome: SearchOutcome) -> MpcSolution {
        match outcome.best {
            Some((value, seq)) => MpcSolution {
                predicted_states: rollout(&self.flat, x.as_slice(), &seq),
                input_indices: seq,
                value,
                nodes_expanded: outcome.expanded,
                nodes_pruned: outcome.pruned,
                feasible: true,
            },
            None => MpcSolution {
                input_indices: Vec::new(),
                predicted_states: Vec::new(),
                value: f64::INFINITY,
                nodes_expanded: outcome.expanded,
                nodes_pruned: outcome.pruned,
                feasible: false,
            },
        }
    }

    /// Exact minimizer at state `x` and time `k`.
    pub fn solve(&self, x: &Vector, k: usize) -> Result<MpcSolution> {
        self.solve_warm(x, k, None)
    }

    /// [`Controller::solve`] with the shifted previous solution `previous`
    /// (computed at `k − 1`) as an initial bound. The argmin is unchanged.
    pub fn solve_warm(&self, x: &Vector, k: usize, previous: Option<&[usize]>) -> Result<MpcSolution> {
        self.check_state(x)?;
        let cost = self.cost(k);
        let spec = self.spec(&cost, x);
        let mut bound = f64::INFINITY;
        if self.config.warm_start {
            let mut candidates = vec![self.cycle_sequence(k)];
            if let Some(prev) = previous {
                candidates.push(self.shifted(prev, k));
            }
            for c in candidates.iter().flatten() {
                if let Some(v) = sequence_cost(&spec, c) {
                    bound = bound.min(v);
                }
            }
        }
        let outcome = match &self.pool {
            Some(pool) => pool.install(|| branch_and_bound(&spec, bound)),
            None => branch_and_bound(&spec, bound),
        };
        Ok(self.finish(x, outcome))
    }

    /// Reference solver: every sequence enumerated, nothing pruned.
    pub fn solve_naive(&self, x: &Vector, k: usize) -> Result<MpcSolution> {
        self.check_state(x)?;
        let cost = self.cost(k);
        let spec = self.spec(&cost, x);
        Ok(self.finish(x, enumerate_all(&spec)))
    }

    /// Cost of `seq` at `(x, k)`, or `None` if it violates a constraint.
    pub fn sequence_cost(&self, x: &Vector, k: usize, seq: &[usize]) -> Result<Option<f64>> {
        self.check_state(x)?;
        let cost = self.cost(k);
        Ok(sequence_cost(&self.spec(&cost, x), seq))
    }

    /// The cycle input law over the horizon starting at `k`.
    pub fn cycle_sequence(&self, k: usize) -> Option<Vec<usize>> {
        Some(
            (0..self.config.horizon)
                .map(|i| self.config.cycle.input_index(k + i))
                .collect(),
        )
    }

    /// `{u*_{1|k−1}, …, u*_{N−1|k−1}, ū(k−1+N)}` for use at time `k ≥ 1`.
    pub fn shifted(&self, previous: &[usize], k: usize) -> Option<Vec<usize>> {
        if previous.len() != self.config.horizon || k == 0 {
            return None;
        }
        let mut seq = previous[1..].to_vec();
        seq.push(self.config.cycle.input_index(k - 1 + self.config.horizon));
        Some(seq)
    }

    /// `u(k) = u*_{0|k}`.
    pub fn receding_horizon_law(&self, x: &Vector, k: usize) -> Result<Vector> {
        let sol = self.solve(x, k)?;
        if !sol.feasible {
            return Err(Error::Infeasible { k });
        }
        Ok(self.sys.inputs().elements()[sol.input_indices[0]].clone())
    }

    /// `l(z, u − ū)` at time `k` for input index `u`.
    pub fn stage_cost(&self, x: &Vector, k: usize, u: usize) -> f64 {
        self.cost(k).stage(0, x.as_slice(), u, 0)
    }
}
