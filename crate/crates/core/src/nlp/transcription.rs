use nalgebra::{Cholesky, DMatrix, DVector};

use super::barrier::BarrierConfig;
use super::ocp::{fd_gradient, fd_jacobian, Cost, OcpDefinition};
use crate::error::{Error, Result};
use crate::linalg::symmetrize;
use crate::schur::QpData;

/// Maximum number of damping doublings tried by [`TrajectoryNlp::build_qp`].
pub const MAX_DAMPING_DOUBLINGS: usize = 40;

/// Offsets of the stage blocks `z_k = [x_k; u_k]` inside `z`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageLayout {
    pub state_dim: usize,
    pub input_dim: usize,
    pub horizon: usize,
}

impl StageLayout {
    pub fn stage_width(&self) -> usize {
        self.state_dim + self.input_dim
    }

    /// Offset of `x_k`; valid for `k = 0..=N`.
    pub fn offset(&self, k: usize) -> usize {
        k * self.stage_width()
    }

    pub fn decision_dim(&self) -> usize {
        self.horizon * self.stage_width() + self.state_dim
    }
}

/// Stacked NLP obtained by direct multiple shooting.
///
/// `G` is ordered as `[x_0 − x_init; x_1 − f(x_0,u_0); …; x_N − f(x_{N−1},u_{N−1})]`
/// and `H` as `[c(x_0,u_0); …; c(x_{N−1},u_{N−1}); c_N(x_N)]`.
#[derive(Debug, Clone)]
pub struct TrajectoryNlp {
    ocp: OcpDefinition,
    layout: StageLayout,
    path_dim: usize,
    terminal_dim: usize,
}

pub fn transcribe(ocp: OcpDefinition) -> Result<TrajectoryNlp> {
    ocp.validate()?;
    let layout = StageLayout {
        state_dim: ocp.state_dim(),
        input_dim: ocp.input_dim(),
        horizon: ocp.horizon,
    };
    let path_dim = ocp.model.path_constraint_dim();
    let terminal_dim = ocp.model.terminal_constraint_dim();
    Ok(TrajectoryNlp {
        ocp,
        layout,
        path_dim,
        terminal_dim,
    })
}

struct CostDerivs {
    gradient: DVector<f64>,
    hessian: DMatrix<f64>,
}

fn cost_derivs<C>(cost: C, at: &DVector<f64>) -> CostDerivs
where
    C: Fn(&DVector<f64>) -> Cost,
{
    match cost(at) {
        Cost::LeastSquares {
            residual,
            jacobian,
            weights,
        } => {
            let jac = jacobian.unwrap_or_else(|| {
                fd_jacobian(
                    |v| match cost(v) {
                        Cost::LeastSquares { residual, .. } => residual,
                        Cost::Smooth { .. } => unreachable!("cost form changed between calls"),
                    },
                    at,
                )
            });
            let wr = residual.component_mul(&weights);
            let gradient = jac.transpose() * wr;
            let mut wj = jac.clone();
            for (i, mut row) in wj.row_iter_mut().enumerate() {
                row *= weights[i];
            }
            let hessian = jac.transpose() * wj;
            CostDerivs { gradient, hessian }
        }
        Cost::Smooth {
            gradient, hessian, ..
        } => {
            let grad_at = |v: &DVector<f64>| match cost(v) {
                Cost::Smooth {
                    gradient: Some(g), ..
                } => g,
                _ => fd_gradient(|w| cost(w).value(), v),
            };
            let gradient = gradient.unwrap_or_else(|| grad_at(at));
            let mut hessian = hessian.unwrap_or_else(|| fd_jacobian(grad_at, at));
            symmetrize(&mut hessian);
            CostDerivs { gradient, hessian }
        }
    }
}

impl TrajectoryNlp {
    pub fn ocp(&self) -> &OcpDefinition {
        &self.ocp
    }

    pub fn layout(&self) -> &StageLayout {
        &self.layout
    }

    pub fn decision_dim(&self) -> usize {
        self.layout.decision_dim()
    }

    pub fn eq_dim(&self) -> usize {
        (self.layout.horizon + 1) * self.layout.state_dim
    }

    pub fn ineq_dim(&self) -> usize {
        self.layout.horizon * self.path_dim + self.terminal_dim
    }

    pub fn state(&self, z: &DVector<f64>, k: usize) -> DVector<f64> {
        z.rows(self.layout.offset(k), self.layout.state_dim)
            .into_owned()
    }

    pub fn input(&self, z: &DVector<f64>, k: usize) -> DVector<f64> {
        z.rows(
            self.layout.offset(k) + self.layout.state_dim,
            self.layout.input_dim,
        )
        .into_owned()
    }

    fn stage(&self, z: &DVector<f64>, k: usize) -> DVector<f64> {
        z.rows(self.layout.offset(k), self.layout.stage_width())
            .into_owned()
    }

    /// Stacks states and inputs into a decision vector.
    pub fn pack(&self, states: &[DVector<f64>], inputs: &[DVector<f64>]) -> DVector<f64> {
        assert_eq!(states.len(), self.layout.horizon + 1);
        assert_eq!(inputs.len(), self.layout.horizon);
        let n = self.layout.state_dim;
        let m = self.layout.input_dim;
        let mut z = DVector::zeros(self.decision_dim());
        for k in 0..=self.layout.horizon {
            let o = self.layout.offset(k);
            z.rows_mut(o, n).copy_from(&states[k]);
            if k < self.layout.horizon {
                z.rows_mut(o + n, m).copy_from(&inputs[k]);
            }
        }
        z
    }

    /// Simulates `f` from `x_init` under the given inputs; the result has `G = 0`.
    pub fn rollout(&self, inputs: &[DVector<f64>]) -> DVector<f64> {
        assert_eq!(inputs.len(), self.layout.horizon);
        let mut states = Vec::with_capacity(self.layout.horizon + 1);
        states.push(self.ocp.initial_state.clone());
        for u in inputs {
            let next = self.ocp.model.dynamics(states.last().unwrap(), u);
            states.push(next);
        }
        self.pack(&states, inputs)
    }

    /// Rollout with the same input applied at every stage.
    pub fn rollout_constant(&self, u: &DVector<f64>) -> DVector<f64> {
        self.rollout(&vec![u.clone(); self.layout.horizon])
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        let model = &self.ocp.model;
        let mut f = 0.0;
        for k in 0..self.layout.horizon {
            f += model
                .stage_cost(&self.state(z, k), &self.input(z, k))
                .value();
        }
        f + model
            .terminal_cost(&self.state(z, self.layout.horizon))
            .value()
    }

    fn stage_cost_derivs(&self, z: &DVector<f64>, k: usize) -> CostDerivs {
        let model = &self.ocp.model;
        if k == self.layout.horizon {
            cost_derivs(|v| model.terminal_cost(v), &self.state(z, k))
        } else {
            cost_derivs(
                |v| {
                    let (x, u) = self.ocp.stage_split(v);
                    model.stage_cost(&x, &u)
                },
                &self.stage(z, k),
            )
        }
    }

    pub fn objective_gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut grad = DVector::zeros(self.decision_dim());
        for k in 0..=self.layout.horizon {
            let d = self.stage_cost_derivs(z, k);
            grad.rows_mut(self.layout.offset(k), d.gradient.len())
                .copy_from(&d.gradient);
        }
        grad
    }

    /// Block-diagonal cost Hessian: Gauss–Newton for least-squares stage
    /// costs, exact (or finite-difference) otherwise.
    pub fn objective_hessian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let nz = self.decision_dim();
        let mut hess = DMatrix::zeros(nz, nz);
        for k in 0..=self.layout.horizon {
            let d = self.stage_cost_derivs(z, k);
            let o = self.layout.offset(k);
            let w = d.hessian.nrows();
            hess.view_mut((o, o), (w, w)).copy_from(&d.hessian);
        }
        hess
    }

    pub fn equalities(&self, z: &DVector<f64>) -> DVector<f64> {
        let n = self.layout.state_dim;
        let mut g = DVector::zeros(self.eq_dim());
        g.rows_mut(0, n)
            .copy_from(&(self.state(z, 0) - &self.ocp.initial_state));
        for k in 0..self.layout.horizon {
            let f = self
                .ocp
                .model
                .dynamics(&self.state(z, k), &self.input(z, k));
            g.rows_mut((k + 1) * n, n)
                .copy_from(&(self.state(z, k + 1) - f));
        }
        g
    }

    fn dynamics_jacobians(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let model = &self.ocp.model;
        model.dynamics_jacobians(x, u).unwrap_or_else(|| {
            let n = self.layout.state_dim;
            let mut xu = DVector::zeros(n + u.len());
            xu.rows_mut(0, n).copy_from(x);
            xu.rows_mut(n, u.len()).copy_from(u);
            let j = fd_jacobian(
                |v| {
                    let (a, b) = self.ocp.stage_split(v);
                    model.dynamics(&a, &b)
                },
                &xu,
            );
            (
                j.columns(0, n).into_owned(),
                j.columns(n, u.len()).into_owned(),
            )
        })
    }

    /// `𝒜 = ∇G`; row block `k+1` touches only `z_k` and `x_{k+1}`.
    pub fn equality_jacobian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let n = self.layout.state_dim;
        let m = self.layout.input_dim;
        let mut a = DMatrix::zeros(self.eq_dim(), self.decision_dim());
        a.view_mut((0, 0), (n, n))
            .copy_from(&DMatrix::identity(n, n));
        for k in 0..self.layout.horizon {
            let (fx, fu) = self.dynamics_jacobians(&self.state(z, k), &self.input(z, k));
            let row = (k + 1) * n;
            let o = self.layout.offset(k);
            a.view_mut((row, o), (n, n)).copy_from(&(-fx));
            a.view_mut((row, o + n), (n, m)).copy_from(&(-fu));
            a.view_mut((row, self.layout.offset(k + 1)), (n, n))
                .copy_from(&DMatrix::identity(n, n));
        }
        a
    }

    pub fn inequalities(&self, z: &DVector<f64>) -> DVector<f64> {
        let p = self.path_dim;
        let mut h = DVector::zeros(self.ineq_dim());
        let model = &self.ocp.model;
        for k in 0..self.layout.horizon {
            if p > 0 {
                h.rows_mut(k * p, p)
                    .copy_from(&model.path_constraints(&self.state(z, k), &self.input(z, k)));
            }
        }
        if self.terminal_dim > 0 {
            h.rows_mut(self.layout.horizon * p, self.terminal_dim)
                .copy_from(&model.terminal_constraints(&self.state(z, self.layout.horizon)));
        }
        h
    }

    pub fn inequality_jacobian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let n = self.layout.state_dim;
        let m = self.layout.input_dim;
        let p = self.path_dim;
        let model = &self.ocp.model;
        let mut jh = DMatrix::zeros(self.ineq_dim(), self.decision_dim());
        if p > 0 {
            for k in 0..self.layout.horizon {
                let x = self.state(z, k);
                let u = self.input(z, k);
                let (cx, cu) = model.path_constraint_jacobians(&x, &u).unwrap_or_else(|| {
                    let j = fd_jacobian(
                        |v| {
                            let (a, b) = self.ocp.stage_split(v);
                            model.path_constraints(&a, &b)
                        },
                        &self.stage(z, k),
                    );
                    (j.columns(0, n).into_owned(), j.columns(n, m).into_owned())
                });
                let o = self.layout.offset(k);
                jh.view_mut((k * p, o), (p, n)).copy_from(&cx);
                jh.view_mut((k * p, o + n), (p, m)).copy_from(&cu);
            }
        }
        if self.terminal_dim > 0 {
            let x = self.state(z, self.layout.horizon);
            let cn = model
                .terminal_constraint_jacobian(&x)
                .unwrap_or_else(|| fd_jacobian(|v| model.terminal_constraints(v), &x));
            jh.view_mut(
                (
                    self.layout.horizon * p,
                    self.layout.offset(self.layout.horizon),
                ),
                (self.terminal_dim, n),
            )
            .copy_from(&cn);
        }
        jh
    }

    pub fn is_strictly_feasible(&self, z: &DVector<f64>) -> bool {
        self.inequalities(z).iter().all(|&h| h < 0.0)
    }

    /// `F̃(z; μ) = F(z) + μ Σ φ(H_j(z))`, `+∞` outside the strict interior.
    pub fn barrier_objective(&self, z: &DVector<f64>, cfg: &BarrierConfig) -> f64 {
        let h = self.inequalities(z);
        if h.iter().any(|&v| !(v < 0.0)) {
            return f64::INFINITY;
        }
        let f = self.objective(z);
        let b: f64 = h.iter().map(|&s| cfg.kind.phi(s)).sum();
        if h.is_empty() {
            f
        } else {
            f + cfg.mu * b
        }
    }

    /// `∇F̃(z; μ) = ∇F(z) + μ Σ φ'(H_j) ∇H_j`.
    pub fn barrier_gradient(&self, z: &DVector<f64>, cfg: &BarrierConfig) -> DVector<f64> {
        let mut g = self.objective_gradient(z);
        if self.ineq_dim() > 0 {
            let h = self.inequalities(z);
            let jh = self.inequality_jacobian(z);
            let w = h.map(|s| cfg.mu * cfg.kind.dphi(s));
            g += jh.transpose() * w;
        }
        g
    }

    /// Assembles the barrier QP at `z`. The damping starts at `cfg.sigma`
    /// and is increased (`σ ← max(1e-8, 2σ)`) until `Q` admits a Cholesky
    /// factorization.
    pub fn build_qp(&self, z: &DVector<f64>, cfg: &BarrierConfig) -> Result<QpData> {
        let nz = self.decision_dim();
        if z.len() != nz {
            return Err(Error::Dimension {
                callable: "build_qp".into(),
                expected: nz,
                got: z.len(),
            });
        }
        let h = self.inequalities(z);
        if let Some((j, &v)) = h.iter().enumerate().find(|(_, &v)| !(v < 0.0)) {
            return Err(Error::Precondition(format!(
                "iterate is not strictly feasible: H[{j}] = {v:e}"
            )));
        }
        let mut q = self.objective_hessian(z);
        let mut g = self.objective_gradient(z);
        if !h.is_empty() {
            let jh = self.inequality_jacobian(z);
            let curv = h.map(|s| cfg.mu * cfg.kind.d2phi(s));
            let slope = h.map(|s| cfg.mu * cfg.kind.dphi(s));
            let mut scaled = jh.clone();
            for (i, mut row) in scaled.row_iter_mut().enumerate() {
                row *= curv[i];
            }
            q += jh.transpose() * scaled;
            g += jh.transpose() * slope;
        }
        symmetrize(&mut q);
        let a = self.equality_jacobian(z);
        let r = -self.equalities(z);

        let mut sigma = cfg.sigma.max(0.0);
        let mut doublings = 0;
        loop {
            let mut damped = q.clone();
            for i in 0..nz {
                damped[(i, i)] += sigma;
            }
            if Cholesky::new(damped.clone()).is_some() {
                return QpData::new(damped, a, g, r).map(|qp| qp.with_damping(sigma));
            }
            if doublings == MAX_DAMPING_DOUBLINGS {
                return Err(Error::Singular {
                    what: "Q",
                    detail: format!("still indefinite after damping σ = {sigma:e}"),
                });
            }
            sigma = (2.0 * sigma).max(1e-8);
            doublings += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nlp::ocp::OcpModel;
    use std::sync::Arc;

    struct Integrator;

    impl OcpModel for Integrator {
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
            Cost::LeastSquares {
                residual: DVector::from_vec(vec![x[0], u[0]]),
                jacobian: None,
                weights: DVector::from_vec(vec![1.0, 1.0]),
            }
        }
        fn terminal_cost(&self, x: &DVector<f64>) -> Cost {
            Cost::Smooth {
                value: 0.5 * x[0] * x[0],
                gradient: None,
                hessian: None,
            }
        }
        fn path_constraint_dim(&self) -> usize {
            1
        }
        fn path_constraints(&self, _x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
            DVector::from_vec(vec![u[0] - 1.0])
        }
    }

    fn nlp(horizon: usize) -> TrajectoryNlp {
        transcribe(OcpDefinition::new(
            Arc::new(Integrator),
            horizon,
            DVector::from_vec(vec![1.0]),
        ))
        .unwrap()
    }

    #[test]
    fn dimensions_follow_layout() {
        let t = nlp(2);
        assert_eq!(t.decision_dim(), 5);
        assert_eq!(t.eq_dim(), 3);
        assert_eq!(t.ineq_dim(), 2);
    }

    #[test]
    fn rollout_is_feasible() {
        let t = nlp(2);
        let z = t.rollout_constant(&DVector::from_vec(vec![0.0]));
        assert_eq!(t.equalities(&z).norm(), 0.0);
        assert_eq!(z.as_slice(), &[1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn barrier_objective_sentinel_on_boundary() {
        let t = nlp(1);
        let z = DVector::from_vec(vec![1.0, 1.0, 2.0]);
        assert!(t
            .barrier_objective(&z, &BarrierConfig::new(0.1))
            .is_infinite());
    }

    #[test]
    fn infeasible_iterate_rejected_by_build_qp() {
        let t = nlp(1);
        let z = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!(matches!(
            t.build_qp(&z, &BarrierConfig::new(0.1)),
            Err(Error::Precondition(_))
        ));
    }
}
