//! Three-state HIV-1 dynamics with reverse-transcriptase (`u₁`) and
//! protease (`u₂`) inhibitor efficacies.
//!
//! States are scaled to `(T/10³, I/10², V/10⁵)`; all weights act on the
//! scaled variables.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::Benchmark;
use crate::error::{Error, Result};
use crate::nlp::{Cost, OcpDefinition, OcpModel};

pub const STATE_SCALES: [f64; 3] = [1e3, 1e2, 1e5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HivParameters {
    /// T-cell source rate [cells/day].
    pub s: f64,
    /// T-cell death rate [1/day].
    pub d: f64,
    /// Infection rate [1/(virion·day)].
    pub k: f64,
    /// Infected-cell death rate [1/day].
    pub delta: f64,
    /// Virions released per infected cell.
    pub n_v: f64,
    /// Viral clearance rate [1/day].
    pub c: f64,
    pub q_v: f64,
    pub q_i: f64,
    pub q_t: f64,
    pub r1: f64,
    pub r2: f64,
    pub qf_v: f64,
    pub qf_i: f64,
    pub qf_t: f64,
    /// Desired T-cell level [cells].
    pub t_ref: f64,
    /// Sampling interval [day].
    pub dt: f64,
    pub horizon: usize,
    /// RK4 substeps per sampling interval.
    pub substeps: usize,
    /// Positivity margin on the scaled states.
    pub state_margin: f64,
    /// `(T₀, I₀, V₀)` in physical units.
    pub initial_state: [f64; 3],
    /// Constant treatment used to build the initial guess.
    pub nominal_input: [f64; 2],
}

impl Default for HivParameters {
    fn default() -> Self {
        let s = 10.0;
        let d = 0.01;
        Self {
            s,
            d,
            k: 1e-7,
            delta: 0.7,
            n_v: 2.6e5,
            c: 13.0,
            q_v: 1.0,
            q_i: 1.0,
            q_t: 0.1,
            r1: 10.0,
            r2: 10.0,
            qf_v: 10.0,
            qf_i: 1e4,
            qf_t: 1.0,
            t_ref: s / d,
            dt: 1.0,
            horizon: 60,
            substeps: 10,
            state_margin: 1e-9,
            initial_state: [1e3, 10.0, 1e5],
            nominal_input: [0.3, 0.3],
        }
    }
}

impl HivParameters {
    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("s", self.s),
            ("d", self.d),
            ("k", self.k),
            ("delta", self.delta),
            ("n_v", self.n_v),
            ("c", self.c),
            ("dt", self.dt),
        ];
        for (name, v) in rates {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!(
                    "hiv.{name} must be positive, got {v}"
                )));
            }
        }
        let weights = [
            ("q_v", self.q_v),
            ("q_i", self.q_i),
            ("q_t", self.q_t),
            ("r1", self.r1),
            ("r2", self.r2),
            ("qf_v", self.qf_v),
            ("qf_i", self.qf_i),
            ("qf_t", self.qf_t),
            ("state_margin", self.state_margin),
        ];
        for (name, v) in weights {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!(
                    "hiv.{name} must be nonnegative, got {v}"
                )));
            }
        }
        if self.horizon == 0 || self.substeps == 0 {
            return Err(Error::Config(
                "hiv.horizon and hiv.substeps must be positive".into(),
            ));
        }
        if self.nominal_input.iter().any(|u| !(*u > 0.0 && *u < 1.0)) {
            return Err(Error::Config(
                "hiv.nominal_input must lie strictly inside (0, 1)".into(),
            ));
        }
        Ok(())
    }

    /// Basic reproductive number without treatment, `k s N_v/(d c)`.
    pub fn reproductive_number(&self) -> f64 {
        self.k * self.s * self.n_v / (self.d * self.c)
    }
}

#[derive(Debug, Clone)]
pub struct HivModel {
    pub params: HivParameters,
}

impl HivModel {
    pub fn new(params: HivParameters) -> Self {
        Self { params }
    }

    /// Vector field in scaled coordinates and its Jacobians.
    fn field(
        &self,
        y: &DVector<f64>,
        u: &DVector<f64>,
    ) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
        let p = &self.params;
        let [st, si, sv] = STATE_SCALES;
        let (t, i, v) = (st * y[0], si * y[1], sv * y[2]);
        let e1 = 1.0 - u[0];
        let e2 = 1.0 - u[1];
        let inf = e1 * p.k * v * t;
        let f = DVector::from_vec(vec![
            (p.s - p.d * t - inf) / st,
            (inf - p.delta * i) / si,
            (e2 * p.n_v * p.delta * i - p.c * v) / sv,
        ]);
        let dinf_t = e1 * p.k * v * st;
        let dinf_v = e1 * p.k * t * sv;
        let dinf_u1 = -p.k * v * t;
        let fy = DMatrix::from_row_slice(
            3,
            3,
            &[
                (-p.d * st - dinf_t) / st,
                0.0,
                -dinf_v / st,
                dinf_t / si,
                -p.delta,
                dinf_v / si,
                0.0,
                e2 * p.n_v * p.delta * si / sv,
                -p.c,
            ],
        );
        let fu = DMatrix::from_row_slice(
            3,
            2,
            &[
                -dinf_u1 / st,
                0.0,
                dinf_u1 / si,
                0.0,
                0.0,
                -p.n_v * p.delta * i / sv,
            ],
        );
        (f, fy, fu)
    }

    /// One sampling interval of RK4 substeps with forward sensitivities.
    fn step(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
        let h = self.params.dt / self.params.substeps as f64;
        let mut y = x.clone();
        let mut sx = DMatrix::<f64>::identity(3, 3);
        let mut su = DMatrix::<f64>::zeros(3, 2);
        for _ in 0..self.params.substeps {
            let (k1, a1, b1) = self.field(&y, u);
            let d1x = &a1 * &sx;
            let d1u = &a1 * &su + &b1;
            let y2 = &y + &k1 * (0.5 * h);
            let (k2, a2, b2) = self.field(&y2, u);
            let d2x = &a2 * (&sx + &d1x * (0.5 * h));
            let d2u = &a2 * (&su + &d1u * (0.5 * h)) + &b2;
            let y3 = &y + &k2 * (0.5 * h);
            let (k3, a3, b3) = self.field(&y3, u);
            let d3x = &a3 * (&sx + &d2x * (0.5 * h));
            let d3u = &a3 * (&su + &d2u * (0.5 * h)) + &b3;
            let y4 = &y + &k3 * h;
            let (k4, a4, b4) = self.field(&y4, u);
            let d4x = &a4 * (&sx + &d3x * h);
            let d4u = &a4 * (&su + &d3u * h) + &b4;
            y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            sx += (d1x + d2x * 2.0 + d3x * 2.0 + d4x) * (h / 6.0);
            su += (d1u + d2u * 2.0 + d3u * 2.0 + d4u) * (h / 6.0);
        }
        (y, sx, su)
    }

    fn scaled_t_ref(&self) -> f64 {
        self.params.t_ref / STATE_SCALES[0]
    }

    /// Converts a scaled state to physical units.
    pub fn unscale(x: &DVector<f64>) -> [f64; 3] {
        [
            x[0] * STATE_SCALES[0],
            x[1] * STATE_SCALES[1],
            x[2] * STATE_SCALES[2],
        ]
    }

    fn tracking_residual(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![x[2], x[1], self.scaled_t_ref() - x[0]])
    }
}

fn tracking_jacobian(cols: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(3, cols);
    j[(0, 2)] = 1.0;
    j[(1, 1)] = 1.0;
    j[(2, 0)] = -1.0;
    j
}

impl OcpModel for HivModel {
    fn state_dim(&self) -> usize {
        3
    }

    fn input_dim(&self) -> usize {
        2
    }

    fn path_constraint_dim(&self) -> usize {
        7
    }

    fn terminal_constraint_dim(&self) -> usize {
        3
    }

    fn dynamics(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        self.step(x, u).0
    }

    fn dynamics_jacobians(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        let (_, sx, su) = self.step(x, u);
        Some((sx, su))
    }

    fn stage_cost(&self, x: &DVector<f64>, u: &DVector<f64>) -> Cost {
        let p = &self.params;
        let t = self.tracking_residual(x);
        let mut jac = DMatrix::zeros(5, 5);
        jac.view_mut((0, 0), (3, 5))
            .copy_from(&tracking_jacobian(5));
        jac[(3, 3)] = 1.0;
        jac[(4, 4)] = 1.0;
        Cost::LeastSquares {
            residual: DVector::from_vec(vec![t[0], t[1], t[2], u[0], u[1]]),
            jacobian: Some(jac),
            weights: DVector::from_vec(vec![p.q_v, p.q_i, p.q_t, p.r1, p.r2]) * 2.0,
        }
    }

    fn terminal_cost(&self, x: &DVector<f64>) -> Cost {
        let p = &self.params;
        Cost::LeastSquares {
            residual: self.tracking_residual(x),
            jacobian: Some(tracking_jacobian(3)),
            weights: DVector::from_vec(vec![p.qf_v, p.qf_i, p.qf_t]) * 2.0,
        }
    }

    fn path_constraints(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let m = self.params.state_margin;
        DVector::from_vec(vec![
            m - x[0],
            m - x[1],
            m - x[2],
            -u[0],
            u[0] - 1.0,
            -u[1],
            u[1] - 1.0,
        ])
    }

    fn path_constraint_jacobians(
        &self,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
    ) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        let mut cx = DMatrix::zeros(7, 3);
        let mut cu = DMatrix::zeros(7, 2);
        for i in 0..3 {
            cx[(i, i)] = -1.0;
        }
        cu[(3, 0)] = -1.0;
        cu[(4, 0)] = 1.0;
        cu[(5, 1)] = -1.0;
        cu[(6, 1)] = 1.0;
        Some((cx, cu))
    }

    fn terminal_constraints(&self, x: &DVector<f64>) -> DVector<f64> {
        let m = self.params.state_margin;
        DVector::from_vec(vec![m - x[0], m - x[1], m - x[2]])
    }

    fn terminal_constraint_jacobian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(-DMatrix::identity(3, 3))
    }

    fn state_labels(&self) -> Vec<String> {
        vec!["T".into(), "I".into(), "V".into()]
    }

    fn state_units(&self) -> Vec<f64> {
        STATE_SCALES.to_vec()
    }

    fn input_labels(&self) -> Vec<String> {
        vec!["u1".into(), "u2".into()]
    }
}

pub fn hiv_ocp(params: HivParameters) -> Result<OcpDefinition> {
    params.validate()?;
    let x0 = DVector::from_iterator(
        3,
        params
            .initial_state
            .iter()
            .zip(STATE_SCALES)
            .map(|(v, s)| v / s),
    );
    let horizon = params.horizon;
    Ok(OcpDefinition::new(
        Arc::new(HivModel::new(params)),
        horizon,
        x0,
    ))
}

pub fn hiv_benchmark(params: HivParameters) -> Result<Benchmark> {
    let nominal = DVector::from_column_slice(&params.nominal_input);
    Ok(Benchmark {
        name: "hiv".into(),
        ocp: hiv_ocp(params)?,
        nominal_input: nominal,
        known_solution: None,
        known_multipliers: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nlp::transcribe;

    #[test]
    fn default_decision_dimension() {
        let nlp = transcribe(hiv_ocp(HivParameters::default()).unwrap()).unwrap();
        assert_eq!(nlp.decision_dim(), 303);
        assert_eq!(nlp.eq_dim(), 183);
        assert_eq!(nlp.ineq_dim(), 423);
    }

    #[test]
    fn untreated_infection_is_established() {
        assert!(HivParameters::default().reproductive_number() > 1.0);
    }

    #[test]
    fn perfect_drugs_clear_infection_monotonically() {
        let model = HivModel::new(HivParameters::default());
        let u = DVector::from_vec(vec![1.0, 1.0]);
        let mut x = DVector::from_vec(vec![1.0, 0.1, 1.0]);
        for _ in 0..60 {
            let next = model.dynamics(&x, &u);
            assert!(next[1] < x[1] && next[1] > 0.0);
            assert!(next[2] < x[2] && next[2] > 0.0);
            x = next;
        }
    }

    #[test]
    fn zero_weights_give_zero_cost() {
        let params = HivParameters {
            q_v: 0.0,
            q_i: 0.0,
            q_t: 0.0,
            r1: 0.0,
            r2: 0.0,
            qf_v: 0.0,
            qf_i: 0.0,
            qf_t: 0.0,
            ..HivParameters::default()
        };
        let nlp = transcribe(hiv_ocp(params).unwrap()).unwrap();
        let z = nlp.rollout_constant(&DVector::from_vec(vec![0.3, 0.6]));
        assert_eq!(nlp.objective(&z), 0.0);
    }

    #[test]
    fn analytic_jacobians_match_finite_differences() {
        let ocp = hiv_ocp(HivParameters::default()).unwrap();
        let pts = vec![
            (
                DVector::from_vec(vec![1.0, 0.1, 1.0]),
                DVector::from_vec(vec![0.5, 0.5]),
            ),
            (
                DVector::from_vec(vec![0.6, 0.05, 0.3]),
                DVector::from_vec(vec![0.9, 0.1]),
            ),
            (
                DVector::from_vec(vec![0.9, 0.2, 2.0]),
                DVector::from_vec(vec![0.0, 1.0]),
            ),
        ];
        ocp.check_derivatives(&pts, 1e-5).unwrap();
    }
}
