use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Stage or terminal cost as returned by a model.
#[derive(Debug, Clone)]
pub enum Cost {
    /// `½ rᵀ W r` with diagonal `W`; the Hessian is taken as `Jᵀ W J`.
    LeastSquares {
        residual: DVector<f64>,
        /// Jacobian of the residual with respect to the stage variables.
        /// `None` selects central differences.
        jacobian: Option<DMatrix<f64>>,
        weights: DVector<f64>,
    },
    /// General smooth cost; missing derivatives fall back to central differences.
    Smooth {
        value: f64,
        gradient: Option<DVector<f64>>,
        hessian: Option<DMatrix<f64>>,
    },
}

impl Cost {
    pub fn value(&self) -> f64 {
        match self {
            Cost::LeastSquares {
                residual, weights, ..
            } => 0.5 * residual.component_mul(residual).dot(weights),
            Cost::Smooth { value, .. } => *value,
        }
    }
}

/// A discrete-time finite-horizon optimal control problem.
///
/// Stage functions take `(x, u)`; derivatives with respect to the stage
/// variables use the stacked ordering `[x; u]`. Constraints follow the
/// convention `c(x, u) ≤ 0`.
pub trait OcpModel: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;

    fn path_constraint_dim(&self) -> usize {
        0
    }

    fn terminal_constraint_dim(&self) -> usize {
        0
    }

    fn dynamics(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;

    /// `(∂f/∂x, ∂f/∂u)`, or `None` for finite differences.
    fn dynamics_jacobians(
        &self,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
    ) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        None
    }

    fn stage_cost(&self, x: &DVector<f64>, u: &DVector<f64>) -> Cost;

    fn terminal_cost(&self, x: &DVector<f64>) -> Cost;

    fn path_constraints(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(0)
    }

    /// `(∂c/∂x, ∂c/∂u)`, or `None` for finite differences.
    fn path_constraint_jacobians(
        &self,
        _x: &DVector<f64>,
        _u: &DVector<f64>,
    ) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        None
    }

    fn terminal_constraints(&self, _x: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(0)
    }

    fn terminal_constraint_jacobian(&self, _x: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }

    fn state_labels(&self) -> Vec<String> {
        (0..self.state_dim()).map(|i| format!("x{i}")).collect()
    }

    fn input_labels(&self) -> Vec<String> {
        (0..self.input_dim()).map(|i| format!("u{i}")).collect()
    }

    /// Factors mapping internal state coordinates to reported units.
    fn state_units(&self) -> Vec<f64> {
        vec![1.0; self.state_dim()]
    }
}

/// Central-difference step used by every finite-difference fallback.
pub fn fd_step(x: f64) -> f64 {
    1e-6 * (1.0 + x.abs())
}

/// Central-difference Jacobian of `f` at `x`.
pub fn fd_jacobian<F>(f: F, x: &DVector<f64>) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let f0 = f(x);
    let mut jac = DMatrix::zeros(f0.len(), x.len());
    let mut xp = x.clone();
    for j in 0..x.len() {
        let h = fd_step(x[j]);
        xp[j] = x[j] + h;
        let fp = f(&xp);
        xp[j] = x[j] - h;
        let fm = f(&xp);
        xp[j] = x[j];
        jac.set_column(j, &((fp - fm) / (2.0 * h)));
    }
    jac
}

/// Central-difference gradient of a scalar function.
pub fn fd_gradient<F>(f: F, x: &DVector<f64>) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let mut grad = DVector::zeros(x.len());
    let mut xp = x.clone();
    for j in 0..x.len() {
        let h = fd_step(x[j]);
        xp[j] = x[j] + h;
        let fp = f(&xp);
        xp[j] = x[j] - h;
        let fm = f(&xp);
        xp[j] = x[j];
        grad[j] = (fp - fm) / (2.0 * h);
    }
    grad
}

fn split(v: &DVector<f64>, n: usize) -> (DVector<f64>, DVector<f64>) {
    (
        v.rows(0, n).into_owned(),
        v.rows(n, v.len() - n).into_owned(),
    )
}

fn join(x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    let mut v = DVector::zeros(x.len() + u.len());
    v.rows_mut(0, x.len()).copy_from(x);
    v.rows_mut(x.len(), u.len()).copy_from(u);
    v
}

/// A model together with its horizon and initial state.
#[derive(Clone)]
pub struct OcpDefinition {
    pub model: Arc<dyn OcpModel>,
    pub horizon: usize,
    pub initial_state: DVector<f64>,
}

impl std::fmt::Debug for OcpDefinition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OcpDefinition")
            .field("state_dim", &self.model.state_dim())
            .field("input_dim", &self.model.input_dim())
            .field("horizon", &self.horizon)
            .field("initial_state", &self.initial_state.as_slice())
            .finish()
    }
}

fn check_len(callable: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension {
            callable: callable.to_string(),
            expected,
            got,
        });
    }
    Ok(())
}

fn check_shape(callable: &str, m: &DMatrix<f64>, rows: usize, cols: usize) -> Result<()> {
    check_len(&format!("{callable} (rows)"), rows, m.nrows())?;
    check_len(&format!("{callable} (cols)"), cols, m.ncols())
}

fn check_cost(callable: &str, cost: &Cost, dim: usize) -> Result<()> {
    match cost {
        Cost::LeastSquares {
            residual,
            jacobian,
            weights,
        } => {
            check_len(
                &format!("{callable} weights"),
                residual.len(),
                weights.len(),
            )?;
            if let Some(j) = jacobian {
                check_shape(&format!("{callable} jacobian"), j, residual.len(), dim)?;
            }
        }
        Cost::Smooth {
            gradient, hessian, ..
        } => {
            if let Some(g) = gradient {
                check_len(&format!("{callable} gradient"), dim, g.len())?;
            }
            if let Some(h) = hessian {
                check_shape(&format!("{callable} hessian"), h, dim, dim)?;
            }
        }
    }
    Ok(())
}

impl OcpDefinition {
    pub fn new(model: Arc<dyn OcpModel>, horizon: usize, initial_state: DVector<f64>) -> Self {
        Self {
            model,
            horizon,
            initial_state,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.model.state_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.model.input_dim()
    }

    /// Evaluates every callable once at `(x_init, 0)` and checks output sizes.
    pub fn validate(&self) -> Result<()> {
        let n = self.model.state_dim();
        let m = self.model.input_dim();
        if n == 0 || m == 0 {
            return Err(Error::Config(format!(
                "state and input dimensions must be positive (n = {n}, m = {m})"
            )));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        check_len("initial_state", n, self.initial_state.len())?;
        let x = self.initial_state.clone();
        let u = DVector::zeros(m);
        check_len("dynamics", n, self.model.dynamics(&x, &u).len())?;
        if let Some((fx, fu)) = self.model.dynamics_jacobians(&x, &u) {
            check_shape("dynamics_jacobians (x)", &fx, n, n)?;
            check_shape("dynamics_jacobians (u)", &fu, n, m)?;
        }
        check_cost("stage_cost", &self.model.stage_cost(&x, &u), n + m)?;
        check_cost("terminal_cost", &self.model.terminal_cost(&x), n)?;
        let p = self.model.path_constraint_dim();
        check_len(
            "path_constraints",
            p,
            self.model.path_constraints(&x, &u).len(),
        )?;
        if let Some((cx, cu)) = self.model.path_constraint_jacobians(&x, &u) {
            check_shape("path_constraint_jacobians (x)", &cx, p, n)?;
            check_shape("path_constraint_jacobians (u)", &cu, p, m)?;
        }
        let pn = self.model.terminal_constraint_dim();
        check_len(
            "terminal_constraints",
            pn,
            self.model.terminal_constraints(&x).len(),
        )?;
        if let Some(cn) = self.model.terminal_constraint_jacobian(&x) {
            check_shape("terminal_constraint_jacobian", &cn, pn, n)?;
        }
        Ok(())
    }

    /// Compares every supplied analytic derivative against central
    /// differences at the given stage points. Returns the worst relative
    /// discrepancy and fails if it exceeds `tol`.
    pub fn check_derivatives(
        &self,
        points: &[(DVector<f64>, DVector<f64>)],
        tol: f64,
    ) -> Result<f64> {
        let n = self.state_dim();
        let mut worst: f64 = 0.0;
        let mut compare = |name: &str,
                           analytic: &DMatrix<f64>,
                           numeric: &DMatrix<f64>|
         -> Result<()> {
            let scale = 1.0 + numeric.amax();
            let err = (analytic - numeric).amax() / scale;
            worst = worst.max(err);
            if err > tol {
                return Err(Error::Config(format!(
                    "analytic derivative of `{name}` disagrees with finite differences (relative error {err:.3e})"
                )));
            }
            Ok(())
        };
        for (x, u) in points {
            let xu = join(x, u);
            if let Some((fx, fu)) = self.model.dynamics_jacobians(x, u) {
                let num = fd_jacobian(
                    |v| {
                        let (a, b) = split(v, n);
                        self.model.dynamics(&a, &b)
                    },
                    &xu,
                );
                let mut ana = DMatrix::zeros(n, xu.len());
                ana.columns_mut(0, n).copy_from(&fx);
                ana.columns_mut(n, u.len()).copy_from(&fu);
                compare("dynamics", &ana, &num)?;
            }
            if let Some((cx, cu)) = self.model.path_constraint_jacobians(x, u) {
                let num = fd_jacobian(
                    |v| {
                        let (a, b) = split(v, n);
                        self.model.path_constraints(&a, &b)
                    },
                    &xu,
                );
                let mut ana = DMatrix::zeros(cx.nrows(), xu.len());
                ana.columns_mut(0, n).copy_from(&cx);
                ana.columns_mut(n, u.len()).copy_from(&cu);
                compare("path_constraints", &ana, &num)?;
            }
            if let Some(cn) = self.model.terminal_constraint_jacobian(x) {
                let num = fd_jacobian(|v| self.model.terminal_constraints(v), x);
                compare("terminal_constraints", &cn, &num)?;
            }
            let stage = |v: &DVector<f64>| {
                let (a, b) = split(v, n);
                self.model.stage_cost(&a, &b)
            };
            check_cost_derivatives("stage_cost", &stage, &xu, &mut compare)?;
            let term = |v: &DVector<f64>| self.model.terminal_cost(v);
            check_cost_derivatives("terminal_cost", &term, x, &mut compare)?;
        }
        Ok(worst)
    }

    pub(crate) fn stage_split(&self, v: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        split(v, self.state_dim())
    }
}

fn check_cost_derivatives<C, F>(
    name: &str,
    cost: &C,
    at: &DVector<f64>,
    compare: &mut F,
) -> Result<()>
where
    C: Fn(&DVector<f64>) -> Cost,
    F: FnMut(&str, &DMatrix<f64>, &DMatrix<f64>) -> Result<()>,
{
    match cost(at) {
        Cost::LeastSquares {
            jacobian: Some(j), ..
        } => {
            let num = fd_jacobian(
                |v| match cost(v) {
                    Cost::LeastSquares { residual, .. } => residual,
                    Cost::Smooth { .. } => DVector::zeros(0),
                },
                at,
            );
            compare(name, &j, &num)
        }
        Cost::Smooth {
            gradient: Some(g), ..
        } => {
            let num = fd_gradient(|v| cost(v).value(), at);
            compare(
                name,
                &DMatrix::from_column_slice(g.len(), 1, g.as_slice()),
                &DMatrix::from_column_slice(num.len(), 1, num.as_slice()),
            )
        }
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Scalar;

    impl OcpModel for Scalar {
        fn state_dim(&self) -> usize {
            1
        }
        fn input_dim(&self) -> usize {
            1
        }
        fn dynamics(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
            DVector::from_vec(vec![x[0] + u[0]])
        }
        fn stage_cost(&self, x: &DVector<f64>, u: &DVector<f64>) -> Cost {
            Cost::Smooth {
                value: x[0].powi(2) + u[0].powi(4),
                gradient: Some(DVector::from_vec(vec![2.0 * x[0], 4.0 * u[0].powi(3)])),
                hessian: None,
            }
        }
        fn terminal_cost(&self, _x: &DVector<f64>) -> Cost {
            Cost::Smooth {
                value: 0.0,
                gradient: None,
                hessian: None,
            }
        }
    }

    struct WrongDynamics;

    impl OcpModel for WrongDynamics {
        fn state_dim(&self) -> usize {
            2
        }
        fn input_dim(&self) -> usize {
            1
        }
        fn dynamics(&self, x: &DVector<f64>, _u: &DVector<f64>) -> DVector<f64> {
            DVector::from_vec(vec![x[0]])
        }
        fn stage_cost(&self, _x: &DVector<f64>, _u: &DVector<f64>) -> Cost {
            Cost::Smooth {
                value: 0.0,
                gradient: None,
                hessian: None,
            }
        }
        fn terminal_cost(&self, _x: &DVector<f64>) -> Cost {
            Cost::Smooth {
                value: 0.0,
                gradient: None,
                hessian: None,
            }
        }
    }

    #[test]
    fn validation_names_offending_callable() {
        let ocp = OcpDefinition::new(Arc::new(WrongDynamics), 3, DVector::zeros(2));
        match ocp.validate() {
            Err(Error::Dimension {
                callable,
                expected,
                got,
            }) => {
                assert_eq!(callable, "dynamics");
                assert_eq!((expected, got), (2, 1));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn supplied_gradient_passes_fd_check() {
        let ocp = OcpDefinition::new(Arc::new(Scalar), 2, DVector::from_vec(vec![1.0]));
        ocp.validate().unwrap();
        let pts = vec![
            (DVector::from_vec(vec![0.3]), DVector::from_vec(vec![-0.7])),
            (DVector::from_vec(vec![-1.2]), DVector::from_vec(vec![0.4])),
        ];
        let worst = ocp.check_derivatives(&pts, 1e-5).unwrap();
        assert!(worst < 1e-7);
    }

    #[test]
    fn fd_jacobian_of_linear_map_is_exact() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, -2.0, 0.5, 3.0, 0.0, 1.0]);
        let x = DVector::from_vec(vec![0.1, 2.0, -4.0]);
        let j = fd_jacobian(|v| &a * v, &x);
        assert!((j - a).amax() < 1e-8);
    }
}
