//! Offline design and experiment runs driven by an [`ExperimentConfig`].

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, FeasibleMode};
use crate::cycle::{cycle_cost, solve_cycle, synthesize_optimal_cycle, LimitCycle};
use crate::feasible::{exact_feasible_union, outer_hull_feasible, FeasibleSetResult};
use crate::lyap::{solve_periodic_lyapunov, verify_terminal_cost, PeriodicTerminalCost, StageCost, TerminalCostReport};
use crate::model::SwitchedAffineSystem;
use crate::mpc::{Controller, MpcConfig};
use crate::sim::{
    default_window, run_baseline, run_closed_loop, steady_state_metrics, BaselineMpcConfig, ClosedLoopTrace,
    SteadyStateMetrics,
};
use crate::tube::{
    ellipsoidal_tube, lift_to_state, polytopic_tube, verify_state_tube, verify_tube, ErrorTube, StateTube, TubeKind,
    TubeReport, TubeSets,
};
use crate::linalg::{vector, Mat};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleArtifact {
    pub cycle: LimitCycle,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminalCostArtifact {
    /// Stage weight the certificate was checked against.
    #[serde(rename = "Q", with = "crate::linalg::serde_mat")]
    pub q: Mat,
    pub terminal: PeriodicTerminalCost,
    pub report: TerminalCostReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeArtifact {
    pub error_tube: ErrorTube,
    pub state_tube: StateTube,
    pub report: TubeReport,
    pub state_report: TubeReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationArtifact {
    pub trace: ClosedLoopTrace,
    pub metrics: Option<SteadyStateMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<ClosedLoopTrace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_metrics: Option<SteadyStateMetrics>,
}

pub struct Pipeline {
    pub config: ExperimentConfig,
    pub system: SwitchedAffineSystem,
    pub threads: Option<usize>,
}

impl Pipeline {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let system = config.build_system()?;
        Ok(Pipeline {
            config,
            system,
            threads: None,
        })
    }

    pub fn with_threads(mut self, threads: Option<usize>) -> Self {
        self.threads = threads;
        self
    }

    pub fn stage_cost(&self) -> Result<StageCost> {
        StageCost::new(self.config.q()?, self.config.r()?)
    }

    /// The fixed cycle from the configuration, or the synthesized optimum.
    pub fn cycle(&self) -> Result<CycleArtifact> {
        let spec = self.config.cycle_cost_spec();
        let (cycle, cost) = match self.config.fixed_cycle() {
            Some(indices) => {
                let cycle = solve_cycle(&self.system, &indices)?;
                let cost = spec.map(|s| cycle_cost(&cycle, &s)).transpose()?;
                (cycle, cost)
            }
            None => {
                let p = self.config.cycle.period.expect("validated");
                let spec = spec.expect("validated");
                let (cycle, cost) =
                    synthesize_optimal_cycle(&self.system, p, &spec, self.config.cycle.state_constraints)?;
                (cycle, Some(cost))
            }
        };
        if let Some(c) = cycle.condition_warning {
            log::warn!("cycle matrix is ill-conditioned (condition number {c:.3e})");
        }
        Ok(CycleArtifact { cycle, cost })
    }

    pub fn terminal_cost(&self, cycle: &LimitCycle) -> Result<TerminalCostArtifact> {
        let q = self.config.q()?;
        let terminal = solve_periodic_lyapunov(&self.system, cycle, &q)?;
        let report = verify_terminal_cost(&self.system, cycle, &q, &terminal.p)?;
        Ok(TerminalCostArtifact { q, terminal, report })
    }

    pub fn tube(&self, cycle: &LimitCycle, terminal: &PeriodicTerminalCost, kind: TubeKind) -> Result<TubeArtifact> {
        let error_tube = match kind {
            TubeKind::Polytopic => polytopic_tube(&self.system, cycle, self.config.mpc.n_max)?,
            TubeKind::Ellipsoidal => {
                ellipsoidal_tube(&self.system, cycle, terminal, self.config.mpc.ellipsoid_backend)?
            }
        };
        let state_tube = lift_to_state(&error_tube, cycle)?;
        let report = verify_tube(&self.system, cycle, &error_tube)?;
        let state_report = verify_state_tube(&self.system, cycle, &state_tube)?;
        Ok(TubeArtifact {
            error_tube,
            state_tube,
            report,
            state_report,
        })
    }

    pub fn feasible(&self, state_tube: &StateTube, mode: FeasibleMode, horizon: Option<usize>) -> Result<FeasibleSetResult> {
        let TubeSets::Polytopic(sets) = &state_tube.sets else {
            return Err(Error::invalid("feasible sets need a polytopic terminal tube"));
        };
        let horizon = horizon
            .or(self.config.feasible.as_ref().and_then(|f| f.horizon))
            .unwrap_or(self.config.mpc.horizon);
        match mode {
            FeasibleMode::Exact => exact_feasible_union(&self.system, sets, horizon),
            FeasibleMode::Hull => outer_hull_feasible(&self.system, sets, horizon),
        }
    }

    pub fn controller(&self, cycle: &LimitCycle, terminal: &PeriodicTerminalCost, tube: &StateTube) -> Result<Controller> {
        let config = MpcConfig {
            horizon: self.config.mpc.horizon,
            stage: self.stage_cost()?,
            terminal: terminal.clone(),
            terminal_tube: tube.clone(),
            cycle: cycle.clone(),
            state_constraints: self.config.mpc.state_constraints,
            warm_start: self.config.mpc.warm_start,
        };
        let controller = Controller::new(self.system.clone(), config)?;
        match self.threads {
            Some(t) => controller.with_threads(t),
            None => Ok(controller),
        }
    }

    /// Designs every ingredient and runs the closed loop (and the baseline
    /// when `baseline` is set and configured).
    pub fn simulate(&self, baseline: bool) -> Result<SimulationArtifact> {
        let sim = self
            .config
            .simulation
            .as_ref()
            .ok_or_else(|| Error::Schema {
                pointer: "/simulation".into(),
                message: "missing simulation block".into(),
            })?;
        let cycle = self.cycle()?.cycle;
        let terminal = self.terminal_cost(&cycle)?.terminal;
        let tube = self.tube(&cycle, &terminal, self.config.mpc.tube)?;
        let controller = self.controller(&cycle, &terminal, &tube.state_tube)?;
        let x0 = vector(&sim.x0);
        let trace = run_closed_loop(&controller, &x0, sim.k0, sim.steps)?;
        let window = |steps: usize, period: usize| match sim.burn_in {
            Some(b) if b < steps => (b, steps - b),
            _ => default_window(steps, period),
        };
        let reference = self.output_reference(sim)?;
        let metrics = match &reference {
            Some(r) if trace.steps() == sim.steps && sim.steps > 0 => {
                let (burn, win) = window(trace.steps(), cycle.period());
                Some(steady_state_metrics(&trace, r, burn, win)?)
            }
            _ => None,
        };
        let mut artifact = SimulationArtifact {
            trace,
            metrics,
            baseline: None,
            baseline_metrics: None,
        };
        if baseline {
            let block = sim.baseline.as_ref().ok_or_else(|| Error::Schema {
                pointer: "/simulation/baseline".into(),
                message: "missing baseline block".into(),
            })?;
            let cfg = BaselineMpcConfig {
                horizon: block.horizon.unwrap_or(self.config.mpc.horizon),
                reference: vector(&block.reference),
                output_weight: block.output_weight,
                input_rate_weight: block.input_rate_weight,
                terminal_weight: block.terminal_weight,
                state_constraints: self.config.mpc.state_constraints,
            };
            let trace = run_baseline(&self.system, &cfg, &x0, sim.steps, self.threads)?;
            if trace.steps() == sim.steps && sim.steps > 0 {
                let (burn, win) = window(trace.steps(), cycle.period());
                artifact.baseline_metrics = Some(steady_state_metrics(&trace, &cfg.reference, burn, win)?);
            }
            artifact.baseline = Some(trace);
        }
        Ok(artifact)
    }

    /// Constant output reference used for steady-state metrics.
    fn output_reference(&self, sim: &crate::config::SimulationBlock) -> Result<Option<crate::linalg::Vector>> {
        if let Some(b) = &sim.baseline {
            return Ok(Some(vector(&b.reference)));
        }
        Ok(self
            .config
            .cycle
            .reference
            .as_ref()
            .filter(|r| r.len() == 1)
            .map(|r| vector(&r[0])))
    }
}
