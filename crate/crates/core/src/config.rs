//! Experiment configuration files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cycle::{CycleCostSpec, CycleNorm};
use crate::geometry::Polytope;
use crate::linalg::{mat_from_rows, vector, Mat, Vector};
use crate::model::{discretize_zoh, ContinuousMode, ContinuousSwitchedSystem, FiniteInputSet, Mode, SwitchedAffineSystem};
use crate::tube::{EllipsoidBackend, TubeKind, DEFAULT_N_MAX};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub system: SystemBlock,
    pub inputs: Vec<InputEntry>,
    pub constraints: ConstraintsBlock,
    pub cycle: CycleBlock,
    pub mpc: MpcBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feasible: Option<FeasibleBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub continuous: Option<ContinuousBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discrete: Option<DiscreteBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuousBlock {
    pub modes: Vec<ContinuousMode>,
    pub omega: Vec<f64>,
    #[serde(rename = "Ts", default, skip_serializing_if = "Option::is_none")]
    pub ts: Option<f64>,
    #[serde(rename = "fs", default, skip_serializing_if = "Option::is_none")]
    pub fs: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteBlock {
    pub modes: Vec<Mode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputEntry {
    pub label: String,
    pub value: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum ConstraintsBlock {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Halfspaces(Polytope),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CycleBlock {
    /// Fixed cycle given as input labels; skips synthesis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<usize>,
    /// Output reference samples; the length must divide the period.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_norm")]
    pub norm: CycleNorm,
    /// Require every cycle state to satisfy the state constraints.
    #[serde(default = "yes")]
    pub state_constraints: bool,
}

fn default_norm() -> CycleNorm {
    CycleNorm::L1
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcBlock {
    pub horizon: usize,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    pub r: Vec<Vec<f64>>,
    pub tube: TubeKind,
    #[serde(default)]
    pub ellipsoid_backend: EllipsoidBackend,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default = "yes")]
    pub warm_start: bool,
    #[serde(default = "yes")]
    pub state_constraints: bool,
}

fn default_n_max() -> usize {
    DEFAULT_N_MAX
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeasibleMode {
    Exact,
    Hull,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeasibleBlock {
    pub mode: FeasibleMode,
    /// Defaults to the MPC horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationBlock {
    pub x0: Vec<f64>,
    #[serde(default)]
    pub k0: usize,
    pub steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BaselineBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineBlock {
    /// Defaults to the MPC horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    pub reference: Vec<f64>,
    #[serde(default = "one")]
    pub output_weight: f64,
    #[serde(default = "rate")]
    pub input_rate_weight: f64,
    #[serde(default = "terminal")]
    pub terminal_weight: f64,
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

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: String,
}

fn schema(pointer: &str, message: impl Into<String>) -> Error {
    Error::Schema {
        pointer: pointer.to_string(),
        message: message.into(),
    }
}

fn pointer_from_path(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => out.push_str(&format!("/{}", key.replace('~', "~0").replace('/', "~1"))),
            Segment::Enum { variant } => out.push_str(&format!("/{variant}")),
            Segment::Unknown => out.push_str("/?"),
        }
    }
    if out.is_empty() {
        "/".into()
    } else {
        out
    }
}

/// Deserializes `text` as `T`, reporting failures with a JSON pointer.
pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let pointer = pointer_from_path(e.path());
        schema(&pointer, e.into_inner().to_string())
    })
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = parse_json(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        ExperimentConfig::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// Cross-field checks that the type system does not express.
    pub fn validate(&self) -> Result<()> {
        match (&self.system.continuous, &self.system.discrete) {
            (Some(_), Some(_)) => {
                return Err(schema("/system", "give exactly one of `continuous` and `discrete`"));
            }
            (None, None) => return Err(schema("/system", "missing `continuous` or `discrete` system")),
            (Some(c), None) => match (c.ts, c.fs) {
                (Some(_), Some(_)) => {
                    return Err(schema("/system/continuous", "`Ts` and `fs` are mutually exclusive"))
                }
                (None, None) => return Err(schema("/system/continuous", "missing `Ts` or `fs`")),
                (Some(t), None) if !(t > 0.0 && t.is_finite()) => {
                    return Err(schema("/system/continuous/Ts", "must be positive"))
                }
                (None, Some(f)) if !(f > 0.0 && f.is_finite()) => {
                    return Err(schema("/system/continuous/fs", "must be positive"))
                }
                _ => {}
            },
            (None, Some(_)) => {}
        }
        if self.inputs.is_empty() {
            return Err(schema("/inputs", "at least one input is required"));
        }
        for (i, a) in self.inputs.iter().enumerate() {
            if self.inputs[..i].iter().any(|b| b.label == a.label) {
                return Err(schema(&format!("/inputs/{i}/label"), format!("duplicate label {:?}", a.label)));
            }
        }
        match &self.cycle.labels {
            Some(labels) => {
                if labels.is_empty() {
                    return Err(schema("/cycle/labels", "cycle needs at least one input"));
                }
                for (j, l) in labels.iter().enumerate() {
                    if self.label_index(l).is_none() {
                        return Err(schema(&format!("/cycle/labels/{j}"), format!("unknown input label {l:?}")));
                    }
                }
            }
            None => {
                match self.cycle.period {
                    None => return Err(schema("/cycle/period", "missing period `p`")),
                    Some(0) => return Err(schema("/cycle/period", "period must be at least 1")),
                    Some(_) => {}
                }
                if self.cycle.reference.is_none() {
                    return Err(schema("/cycle/reference", "missing output reference"));
                }
            }
        }
        if self.mpc.horizon == 0 {
            return Err(schema("/mpc/horizon", "horizon must be at least 1"));
        }
        if self.mpc.n_max == 0 {
            return Err(schema("/mpc/n_max", "must be at least 1"));
        }
        Ok(())
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.inputs.iter().position(|e| e.label == label)
    }

    pub fn input_set(&self) -> Result<FiniteInputSet> {
        FiniteInputSet::new(self.inputs.iter().map(|e| vector(&e.value)).collect())
            .map_err(|e| schema("/inputs", e.to_string()))
    }

    pub fn state_constraints(&self) -> Result<Polytope> {
        match &self.constraints {
            ConstraintsBlock::Box { lo, hi } => {
                Polytope::from_box(lo, hi).map_err(|e| schema("/constraints/box", e.to_string()))
            }
            ConstraintsBlock::Halfspaces(p) => Ok(p.clone()),
        }
    }

    pub fn sampling_time(&self) -> Option<f64> {
        let c = self.system.continuous.as_ref()?;
        c.ts.or(c.fs.map(|f| 1.0 / f))
    }

    pub fn continuous_system(&self) -> Result<Option<ContinuousSwitchedSystem>> {
        let Some(c) = &self.system.continuous else {
            return Ok(None);
        };
        ContinuousSwitchedSystem::new(c.modes.clone(), vector(&c.omega), self.input_set()?, self.state_constraints()?)
            .map(Some)
            .map_err(|e| schema("/system/continuous", e.to_string()))
    }

    /// The discrete-time system, sampled if given in continuous time.
    pub fn build_system(&self) -> Result<SwitchedAffineSystem> {
        if let Some(csys) = self.continuous_system()? {
            let ts = self.sampling_time().expect("validated");
            return discretize_zoh(&csys, ts).map_err(|e| schema("/system/continuous", e.to_string()));
        }
        let d = self.system.discrete.as_ref().expect("validated");
        SwitchedAffineSystem::new(d.modes.clone(), self.input_set()?, self.state_constraints()?)
            .map_err(|e| schema("/system/discrete", e.to_string()))
    }

    pub fn fixed_cycle(&self) -> Option<Vec<usize>> {
        self.cycle
            .labels
            .as_ref()
            .map(|l| l.iter().map(|s| self.label_index(s).expect("validated")).collect())
    }

    pub fn cycle_cost_spec(&self) -> Option<CycleCostSpec> {
        let reference = self.cycle.reference.as_ref()?;
        Some(CycleCostSpec {
            norm: self.cycle.norm,
            reference: reference.iter().map(|r| vector(r)).collect(),
        })
    }

    pub fn q(&self) -> Result<Mat> {
        mat_from_rows(&self.mpc.q).map_err(|e| schema("/mpc/Q", e.to_string()))
    }

    pub fn r(&self) -> Result<Mat> {
        mat_from_rows(&self.mpc.r).map_err(|e| schema("/mpc/R", e.to_string()))
    }

    pub fn x0(&self) -> Option<Vector> {
        self.simulation.as_ref().map(|s| vector(&s.x0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "system": {"discrete": {"modes": [
            {"A": [[0.5]], "b": [0.0], "C": [[1.0]], "d": [0.0]},
            {"A": [[0.5]], "b": [1.0], "C": [[1.0]], "d": [0.0]}
        ]}},
        "inputs": [{"label": "off", "value": [0]}, {"label": "on", "value": [1]}],
        "constraints": {"box": {"lo": [-5], "hi": [5]}},
        "cycle": {"period": 2, "reference": [[1.0]]},
        "mpc": {"horizon": 3, "Q": [[1]], "R": [[0.1]], "tube": "polytopic"}
    }"#;

    #[test]
    fn minimal_config_builds() {
        let cfg = ExperimentConfig::from_json_str(MINIMAL).unwrap();
        let sys = cfg.build_system().unwrap();
        assert_eq!(sys.num_inputs(), 2);
        assert_eq!(cfg.mpc.n_max, DEFAULT_N_MAX);
    }

    #[test]
    fn missing_period_is_a_schema_error() {
        let text = MINIMAL.replace(r#""period": 2, "#, "");
        match ExperimentConfig::from_json_str(&text) {
            Err(Error::Schema { pointer, .. }) => assert_eq!(pointer, "/cycle/period"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn type_errors_carry_a_pointer() {
        let text = MINIMAL.replace(r#""horizon": 3"#, r#""horizon": "three""#);
        match ExperimentConfig::from_json_str(&text) {
            Err(Error::Schema { pointer, .. }) => assert_eq!(pointer, "/mpc/horizon"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn both_system_kinds_rejected() {
        let text = MINIMAL.replace(
            r#""system": {"discrete""#,
            r#""system": {"continuous": {"modes": [], "omega": [], "Ts": 1.0}, "discrete""#,
        );
        assert!(matches!(ExperimentConfig::from_json_str(&text), Err(Error::Schema { .. })));
    }
}
