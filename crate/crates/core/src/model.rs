//! Discrete-time switched affine systems `x⁺ = A(u)x + b(u)`, `y = C(u)x + d(u)`
//! over a finite input set, and their zero-order-hold construction from
//! continuous-time modes driven by a constant exogenous input.

use serde::{Deserialize, Serialize};

use crate::geometry::Polytope;
use crate::linalg::{expm, serde_mat, serde_vec, serde_vec_list, Mat, Vector};
use crate::{Error, Result};

/// Ordered, duplicate-free list of admissible input vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FiniteInputSetRepr", into = "FiniteInputSetRepr")]
pub struct FiniteInputSet {
    elements: Vec<Vector>,
}

#[derive(Serialize, Deserialize)]
struct FiniteInputSetRepr {
    #[serde(with = "serde_vec_list")]
    elements: Vec<Vector>,
}

impl TryFrom<FiniteInputSetRepr> for FiniteInputSet {
    type Error = Error;
    fn try_from(r: FiniteInputSetRepr) -> Result<Self> {
        FiniteInputSet::new(r.elements)
    }
}

impl From<FiniteInputSet> for FiniteInputSetRepr {
    fn from(s: FiniteInputSet) -> Self {
        FiniteInputSetRepr { elements: s.elements }
    }
}

impl FiniteInputSet {
    pub fn new(elements: Vec<Vector>) -> Result<Self> {
        let Some(first) = elements.first() else {
            return Err(Error::invalid("finite input set must not be empty"));
        };
        let n_u = first.len();
        if elements.iter().any(|u| u.len() != n_u) {
            return Err(Error::invalid("input vectors differ in dimension"));
        }
        for i in 0..elements.len() {
            for j in (i + 1)..elements.len() {
                if elements[i] == elements[j] {
                    return Err(Error::invalid(format!("inputs {i} and {j} are identical")));
                }
            }
        }
        Ok(FiniteInputSet { elements })
    }

    /// Scalar inputs `{v_0, v_1, …}`.
    pub fn scalars(values: &[f64]) -> Result<Self> {
        FiniteInputSet::new(values.iter().map(|&v| Vector::from_element(1, v)).collect())
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.elements[0].len()
    }

    pub fn get(&self, i: usize) -> Option<&Vector> {
        self.elements.get(i)
    }

    pub fn elements(&self) -> &[Vector] {
        &self.elements
    }
}

/// One affine mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    #[serde(rename = "A", with = "serde_mat")]
    pub a: Mat,
    #[serde(with = "serde_vec")]
    pub b: Vector,
    #[serde(rename = "C", with = "serde_mat")]
    pub c: Mat,
    #[serde(with = "serde_vec")]
    pub d: Vector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SystemRepr", into = "SystemRepr")]
pub struct SwitchedAffineSystem {
    modes: Vec<Mode>,
    inputs: FiniteInputSet,
    state_constraints: Polytope,
}

#[derive(Serialize, Deserialize)]
struct SystemRepr {
    modes: Vec<Mode>,
    inputs: FiniteInputSet,
    state_constraints: Polytope,
}

impl TryFrom<SystemRepr> for SwitchedAffineSystem {
    type Error = Error;
    fn try_from(r: SystemRepr) -> Result<Self> {
        SwitchedAffineSystem::new(r.modes, r.inputs, r.state_constraints)
    }
}

impl From<SwitchedAffineSystem> for SystemRepr {
    fn from(s: SwitchedAffineSystem) -> Self {
        SystemRepr {
            modes: s.modes,
            inputs: s.inputs,
            state_constraints: s.state_constraints,
        }
    }
}

impl SwitchedAffineSystem {
    pub fn new(modes: Vec<Mode>, inputs: FiniteInputSet, state_constraints: Polytope) -> Result<Self> {
        if modes.len() != inputs.len() {
            return Err(Error::invalid(format!(
                "{} modes for {} inputs",
                modes.len(),
                inputs.len()
            )));
        }
        let n_x = modes[0].a.nrows();
        let n_y = modes[0].c.nrows();
        for (i, m) in modes.iter().enumerate() {
            let ok = m.a.shape() == (n_x, n_x)
                && m.b.len() == n_x
                && m.c.shape() == (n_y, n_x)
                && m.d.len() == n_y;
            if !ok {
                return Err(Error::invalid(format!("mode {i} has inconsistent dimensions")));
            }
        }
        if state_constraints.dim() != n_x {
            return Err(Error::invalid("state constraint dimension differs from n_x"));
        }
        if !state_constraints.has_interior() {
            return Err(Error::invalid("state constraint set has empty interior"));
        }
        if !state_constraints.is_bounded() {
            return Err(Error::invalid("state constraint set is unbounded"));
        }
        Ok(SwitchedAffineSystem {
            modes,
            inputs,
            state_constraints,
        })
    }

    pub fn n_x(&self) -> usize {
        self.modes[0].a.nrows()
    }

    pub fn n_u(&self) -> usize {
        self.inputs.dim()
    }

    pub fn n_y(&self) -> usize {
        self.modes[0].c.nrows()
    }

    pub fn num_inputs(&self) -> usize {
        self.inputs.len()
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn mode(&self, i: usize) -> &Mode {
        &self.modes[i]
    }

    pub fn inputs(&self) -> &FiniteInputSet {
        &self.inputs
    }

    pub fn state_constraints(&self) -> &Polytope {
        &self.state_constraints
    }

    /// One step of the dynamics under input `input_index`; returns
    /// `(A_i x + b_i, C_i x + d_i)`. No constraint checking.
    pub fn step(&self, x: &Vector, input_index: usize) -> Result<(Vector, Vector)> {
        let mode = self
            .modes
            .get(input_index)
            .ok_or_else(|| Error::invalid(format!("input index {input_index} out of range")))?;
        if x.len() != self.n_x() {
            return Err(Error::invalid(format!(
                "state has dimension {}, expected {}",
                x.len(),
                self.n_x()
            )));
        }
        Ok((&mode.a * x + &mode.b, &mode.c * x + &mode.d))
    }

    pub fn output(&self, x: &Vector, input_index: usize) -> Vector {
        let m = &self.modes[input_index];
        &m.c * x + &m.d
    }

    pub fn check_index(&self, i: usize) -> Result<()> {
        if i < self.num_inputs() {
            Ok(())
        } else {
            Err(Error::invalid(format!("input index {i} out of range (N_s = {})", self.num_inputs())))
        }
    }
}

/// Continuous-time mode `ẋ = A_c x + B_c ω`, `y = C_c x + D_c ω`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousMode {
    #[serde(rename = "A", with = "serde_mat")]
    pub a: Mat,
    #[serde(rename = "B", with = "serde_mat")]
    pub b: Mat,
    #[serde(rename = "C", with = "serde_mat")]
    pub c: Mat,
    #[serde(rename = "D", with = "serde_mat")]
    pub d: Mat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousSwitchedSystem {
    pub modes: Vec<ContinuousMode>,
    pub omega: Vector,
    pub inputs: FiniteInputSet,
    pub state_constraints: Polytope,
}

impl ContinuousSwitchedSystem {
    pub fn new(
        modes: Vec<ContinuousMode>,
        omega: Vector,
        inputs: FiniteInputSet,
        state_constraints: Polytope,
    ) -> Result<Self> {
        let Some(first) = modes.first() else {
            return Err(Error::invalid("no modes given"));
        };
        let n_x = first.a.nrows();
        let n_y = first.c.nrows();
        for (i, m) in modes.iter().enumerate() {
            let ok = m.a.shape() == (n_x, n_x)
                && m.b.shape() == (n_x, omega.len())
                && m.c.shape() == (n_y, n_x)
                && m.d.shape() == (n_y, omega.len());
            if !ok {
                return Err(Error::invalid(format!(
                    "continuous mode {i} has inconsistent dimensions (ω has {} entries)",
                    omega.len()
                )));
            }
        }
        Ok(ContinuousSwitchedSystem {
            modes,
            omega,
            inputs,
            state_constraints,
        })
    }
}

/// Exact zero-order-hold sampling of every mode with period `ts`.
///
/// `A = exp(A_c T)` and `b = ∫₀ᵀ exp(A_c s) ds · B_c ω` are read off the
/// exponential of the augmented matrix `[[A_c, B_c ω], [0, 0]]·T`, which
/// stays valid for singular `A_c`.
pub fn discretize_zoh(csys: &ContinuousSwitchedSystem, ts: f64) -> Result<SwitchedAffineSystem> {
    if !(ts > 0.0 && ts.is_finite()) {
        return Err(Error::invalid(format!("sampling time must be positive, got {ts}")));
    }
    let modes = csys
        .modes
        .iter()
        .map(|m| {
            let n = m.a.nrows();
            let bc = &m.b * &csys.omega;
            let mut aug = Mat::zeros(n + 1, n + 1);
            aug.view_mut((0, 0), (n, n)).copy_from(&(&m.a * ts));
            aug.view_mut((0, n), (n, 1)).copy_from(&(&bc * ts));
            let e = expm(&aug);
            Mode {
                a: e.view((0, 0), (n, n)).into_owned(),
                b: e.view((0, n), (n, 1)).column(0).into_owned(),
                c: m.c.clone(),
                d: &m.d * &csys.omega,
            }
        })
        .collect();
    SwitchedAffineSystem::new(modes, csys.inputs.clone(), csys.state_constraints.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_csys(a: f64, b: f64) -> ContinuousSwitchedSystem {
        ContinuousSwitchedSystem::new(
            vec![ContinuousMode {
                a: Mat::from_element(1, 1, a),
                b: Mat::from_element(1, 1, b),
                c: Mat::from_element(1, 1, 1.0),
                d: Mat::zeros(1, 1),
            }],
            Vector::from_element(1, 1.0),
            FiniteInputSet::scalars(&[0.0]).unwrap(),
            Polytope::from_box(&[-10.0], &[10.0]).unwrap(),
        )
        .unwrap()
    }

    fn affine_system(a: Mat, b: Vector) -> SwitchedAffineSystem {
        let n = a.nrows();
        SwitchedAffineSystem::new(
            vec![Mode {
                a,
                b,
                c: Mat::identity(n, n),
                d: Vector::zeros(n),
            }],
            FiniteInputSet::scalars(&[0.0]).unwrap(),
            Polytope::from_box(&vec![-100.0; n], &vec![100.0; n]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn input_set_invariants() {
        assert!(FiniteInputSet::new(vec![]).is_err());
        assert!(FiniteInputSet::scalars(&[1.0, 1.0]).is_err());
        assert!(FiniteInputSet::new(vec![Vector::zeros(1), Vector::zeros(2)]).is_err());
        let s = FiniteInputSet::scalars(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(s.get(1).unwrap()[0], 1.0);
        assert_eq!(s.len(), 3);
    }

    #[test]
    fn step_state_independent_map() {
        let sys = affine_system(Mat::zeros(2, 2), Vector::from_vec(vec![1.0, 0.0]));
        let (x, y) = sys.step(&Vector::from_vec(vec![9.0, 9.0]), 0).unwrap();
        assert_eq!(x.as_slice(), &[1.0, 0.0]);
        assert_eq!(y.as_slice(), &[9.0, 9.0]);
    }

    #[test]
    fn step_identity() {
        let sys = affine_system(Mat::identity(2, 2), Vector::zeros(2));
        let (x, _) = sys.step(&Vector::from_vec(vec![3.0, -4.0]), 0).unwrap();
        assert_eq!(x.as_slice(), &[3.0, -4.0]);
    }

    #[test]
    fn step_rejects_bad_arguments() {
        let sys = affine_system(Mat::identity(2, 2), Vector::zeros(2));
        assert!(sys.step(&Vector::zeros(3), 0).is_err());
        assert!(sys.step(&Vector::zeros(2), 1).is_err());
    }

    #[test]
    fn zoh_integrates_constant() {
        let d = discretize_zoh(&scalar_csys(0.0, 2.0), 0.5).unwrap();
        assert!((d.mode(0).a[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((d.mode(0).b[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zoh_scalar_closed_form() {
        let d = discretize_zoh(&scalar_csys(-1.0, 1.0), std::f64::consts::LN_2).unwrap();
        assert!((d.mode(0).a[(0, 0)] - 0.5).abs() < 1e-14);
        assert!((d.mode(0).b[0] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn zoh_rejects_nonpositive_sampling_time() {
        assert!(discretize_zoh(&scalar_csys(-1.0, 1.0), 0.0).is_err());
        assert!(discretize_zoh(&scalar_csys(-1.0, 1.0), -1.0).is_err());
    }

    #[test]
    fn zoh_first_order_consistency() {
        let ac = Mat::from_row_slice(2, 2, &[-5.8, -5.9, -4.1, -4.0]);
        let csys = ContinuousSwitchedSystem::new(
            vec![ContinuousMode {
                a: ac.clone(),
                b: Mat::from_row_slice(2, 1, &[0.0, -2.0]),
                c: Mat::identity(2, 2),
                d: Mat::zeros(2, 1),
            }],
            Vector::from_element(1, 1.0),
            FiniteInputSet::scalars(&[1.0]).unwrap(),
            Polytope::from_box(&[-10.0, -10.0], &[10.0, 10.0]).unwrap(),
        )
        .unwrap();
        let err = |t: f64| {
            let d = discretize_zoh(&csys, t).unwrap();
            (&d.mode(0).a - (Mat::identity(2, 2) + &ac * t)).norm()
        };
        let (e1, e2) = (err(1e-3), err(5e-4));
        // second-order remainder: halving the step quarters the error
        assert!((e1 / e2 - 4.0).abs() < 0.05, "ratio {}", e1 / e2);
    }
}
