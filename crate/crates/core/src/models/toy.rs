use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::Benchmark;
use crate::error::{Error, Result};
use crate::nlp::{Cost, OcpDefinition, OcpModel};

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

/// `x⁺ = Ax + Bu` with cost `½xᵀQx + ½r u²` and terminal `½xᵀQ_N x`.
#[derive(Debug, Clone)]
pub struct DoubleIntegrator {
    pub dt: f64,
    pub state_weights: [f64; 2],
    pub input_weight: f64,
    pub terminal_weights: [f64; 2],
}

impl Default for DoubleIntegrator {
    fn default() -> Self {
        Self {
            dt: 0.1,
            state_weights: [1.0, 1.0],
            input_weight: 0.1,
            terminal_weights: [10.0, 10.0],
        }
    }
}

impl DoubleIntegrator {
    pub fn a(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[1.0, self.dt, 0.0, 1.0])
    }

    pub fn b(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(2, 1, &[0.5 * self.dt * self.dt, self.dt])
    }
}

impl OcpModel for DoubleIntegrator {
    fn state_dim(&self) -> usize {
        2
    }

    fn input_dim(&self) -> usize {
        1
    }

    fn dynamics(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        self.a() * x + self.b() * u
    }

    fn dynamics_jacobians(
        &self,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
    ) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        Some((self.a(), self.b()))
    }

    fn stage_cost(&self, x: &DVector<f64>, u: &DVector<f64>) -> Cost {
        Cost::LeastSquares {
            residual: v(&[x[0], x[1], u[0]]),
            jacobian: Some(DMatrix::identity(3, 3)),
            weights: v(&[
                self.state_weights[0],
                self.state_weights[1],
                self.input_weight,
            ]),
        }
    }

    fn terminal_cost(&self, x: &DVector<f64>) -> Cost {
        Cost::LeastSquares {
            residual: x.clone(),
            jacobian: Some(DMatrix::identity(2, 2)),
            weights: v(&self.terminal_weights),
        }
    }
}

/// Optimal trajectory of the double integrator by backward Riccati recursion.
pub fn double_integrator_riccati(
    model: &DoubleIntegrator,
    x_init: &DVector<f64>,
    horizon: usize,
) -> DVector<f64> {
    let a = model.a();
    let b = model.b();
    let q = DMatrix::from_diagonal(&v(&model.state_weights));
    let r = model.input_weight;
    let mut p = DMatrix::from_diagonal(&v(&model.terminal_weights));
    let mut gains = vec![DMatrix::zeros(1, 2); horizon];
    for k in (0..horizon).rev() {
        let bp = b.transpose() * &p;
        let denom = r + (&bp * &b)[(0, 0)];
        let kk = (&bp * &a) / denom;
        p = &q + a.transpose() * &p * (&a - &b * &kk);
        p = (&p + p.transpose()) * 0.5;
        gains[k] = kk;
    }
    let mut z = DVector::zeros(horizon * 3 + 2);
    let mut x = x_init.clone();
    for (k, kk) in gains.iter().enumerate() {
        let u = -(kk * &x);
        z.rows_mut(3 * k, 2).copy_from(&x);
        z[3 * k + 2] = u[0];
        x = &a * &x + &b * u;
    }
    z.rows_mut(3 * horizon, 2).copy_from(&x);
    z
}

/// `min ½(x₀² + u₀² + x₁²)` with `x₀ = 1`, `x₁ = u₀`.
#[derive(Debug, Clone, Copy, Default)]
pub struct EqualityQp;

impl OcpModel for EqualityQp {
    fn state_dim(&self) -> usize {
        1
    }

    fn input_dim(&self) -> usize {
        1
    }

    fn dynamics(&self, _x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        u.clone()
    }

    fn dynamics_jacobians(
        &self,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
    ) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        Some((DMatrix::zeros(1, 1), DMatrix::identity(1, 1)))
    }

    fn stage_cost(&self, x: &DVector<f64>, u: &DVector<f64>) -> Cost {
        Cost::Smooth {
            value: 0.5 * (x[0] * x[0] + u[0] * u[0]),
            gradient: Some(v(&[x[0], u[0]])),
            hessian: Some(DMatrix::identity(2, 2)),
        }
    }

    fn terminal_cost(&self, x: &DVector<f64>) -> Cost {
        Cost::Smooth {
            value: 0.5 * x[0] * x[0],
            gradient: Some(x.clone()),
            hessian: Some(DMatrix::identity(1, 1)),
        }
    }
}

/// `min (u − 2)² + ½x₀² + ½x₁²` with `x₁ = x₀ = 0` and `u ≤ 1`.
#[derive(Debug, Clone, Copy, Default)]
pub struct BoxConstrained;

impl OcpModel for BoxConstrained {
    fn state_dim(&self) -> usize {
        1
    }

    fn input_dim(&self) -> usize {
        1
    }

    fn path_constraint_dim(&self) -> usize {
        1
    }

    fn dynamics(&self, x: &DVector<f64>, _u: &DVector<f64>) -> DVector<f64> {
        x.clone()
    }

    fn dynamics_jacobians(
        &self,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
    ) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        Some((DMatrix::identity(1, 1), DMatrix::zeros(1, 1)))
    }

    fn stage_cost(&self, x: &DVector<f64>, u: &DVector<f64>) -> Cost {
        Cost::LeastSquares {
            residual: v(&[x[0], u[0] - 2.0]),
            jacobian: Some(DMatrix::identity(2, 2)),
            weights: v(&[1.0, 2.0]),
        }
    }

    fn terminal_cost(&self, x: &DVector<f64>) -> Cost {
        Cost::LeastSquares {
            residual: x.clone(),
            jacobian: Some(DMatrix::identity(1, 1)),
            weights: v(&[1.0]),
        }
    }

    fn path_constraints(&self, _x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        v(&[u[0] - 1.0])
    }

    fn path_constraint_jacobians(
        &self,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
    ) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        Some((DMatrix::zeros(1, 1), DMatrix::identity(1, 1)))
    }
}

/// Barrier minimizer of the box problem: `u(μ)` solves `2(u − 2) + μ/(1 − u) = 0`.
pub fn box_barrier_path(mu: f64) -> DVector<f64> {
    v(&[0.0, 1.0 - mu / (1.0 + (1.0 + 2.0 * mu).sqrt()), 0.0])
}

pub const DOUBLE_INTEGRATOR_HORIZON: usize = 20;

pub fn double_integrator(horizon: usize) -> Benchmark {
    let model = DoubleIntegrator::default();
    let x_init = v(&[1.0, 0.0]);
    let z_star = double_integrator_riccati(&model, &x_init, horizon);
    Benchmark {
        name: "double_integrator".into(),
        ocp: OcpDefinition::new(Arc::new(model), horizon, x_init),
        nominal_input: v(&[0.0]),
        known_solution: Some(z_star),
        known_multipliers: None,
    }
}

pub fn equality_qp() -> Benchmark {
    Benchmark {
        name: "eqqp".into(),
        ocp: OcpDefinition::new(Arc::new(EqualityQp), 1, v(&[1.0])),
        nominal_input: v(&[0.5]),
        known_solution: Some(v(&[1.0, 0.0, 0.0])),
        known_multipliers: Some(v(&[-1.0, 0.0])),
    }
}

pub fn box_constrained() -> Benchmark {
    Benchmark {
        name: "box".into(),
        ocp: OcpDefinition::new(Arc::new(BoxConstrained), 1, v(&[0.0])),
        nominal_input: v(&[0.0]),
        known_solution: Some(v(&[0.0, 1.0, 0.0])),
        known_multipliers: None,
    }
}

/// All small analytic problems with their default sizes.
pub fn toy_problems() -> Vec<Benchmark> {
    vec![
        double_integrator(DOUBLE_INTEGRATOR_HORIZON),
        equality_qp(),
        box_constrained(),
    ]
}

pub const TOY_NAMES: [&str; 3] = ["double_integrator", "eqqp", "box"];

/// Looks up a toy problem; `horizon` only applies to the double integrator.
pub fn toy_problem(name: &str, horizon: Option<usize>) -> Result<Benchmark> {
    match name {
        "double_integrator" => Ok(double_integrator(
            horizon.unwrap_or(DOUBLE_INTEGRATOR_HORIZON),
        )),
        "eqqp" => Ok(equality_qp()),
        "box" => Ok(box_constrained()),
        other => Err(Error::Config(format!(
            "unknown toy problem `toy:{other}` (expected double_integrator, eqqp or box)"
        ))),
    }
}
