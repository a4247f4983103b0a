//! Shooting objective `H(q₀, p₀) + g(q(1))` and its exact gradient by reverse-mode
//! differentiation of the RK4 scheme.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fidelity::{FidelityTerm, WeightFactors};
use crate::kernels::{DeformKernelSpec, FidelityKernelSpec};
use crate::scalar::{lit, Real};
use crate::varifold::DiracVarifold;

use super::{point_masses, rk4_shoot, Costate, HamiltonianSystem, Layout, Model, ShootingState, Trajectory};

/// Kernels, data-term weight and time discretization of a shooting problem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShootingParams {
    pub deform: DeformKernelSpec,
    pub fidelity: FidelityKernelSpec,
    pub lambda: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub exec: Execution,
}

fn default_steps() -> usize {
    15
}

impl ShootingParams {
    pub fn validate(&self) -> Result<()> {
        self.deform.validate()?;
        self.fidelity.validate()?;
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        if self.steps == 0 {
            return Err(Error::InvalidInput("steps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Objective value, its parts and gradient at one point.
#[derive(Clone, Debug)]
pub struct ShootEvaluation<T> {
    pub cost: T,
    /// `H(q₀, p₀)`: deformation plus (Fisher-Rao) weight energy.
    pub transformation: T,
    /// Static L² weight penalty `γ/2 Σ r_i (α_i − 1)²` (zero for other models).
    pub weight_penalty: T,
    pub fidelity: T,
    /// Gradient with respect to the full initial costate (model layout).
    pub grad_p0: Vec<T>,
    /// Gradient with respect to the static multipliers `α` (L² only, empty otherwise).
    pub grad_alpha: Vec<T>,
    pub trajectory: Trajectory<T>,
}

/// A source, a target and a model, ready to be shot from arbitrary initial costates.
#[derive(Clone, Debug)]
pub struct ShootingProblem<T> {
    model: Model,
    system: HamiltonianSystem<T>,
    q0: ShootingState<T>,
    fidelity: FidelityTerm<T>,
    source_weights: Vec<T>,
    steps: usize,
}

impl<T: Real> ShootingProblem<T> {
    pub fn new(
        source: &DiracVarifold<T>,
        target: DiracVarifold<T>,
        model: Model,
        params: &ShootingParams,
    ) -> Result<Self> {
        params.validate()?;
        model.validate()?;
        if source.is_empty() {
            return Err(Error::InvalidInput("source varifold is empty".into()));
        }
        if source.dim_ambient() != target.dim_ambient() || source.dim_plane() != target.dim_plane() {
            return Err(Error::DimensionMismatch(
                "source and target differ in (n, d)".into(),
            ));
        }
        let q0 = ShootingState::from_varifold(source, &model);
        let system = HamiltonianSystem::new(
            q0.layout,
            &params.deform,
            &model,
            point_masses(source),
            params.exec,
        )?;
        let fidelity = FidelityTerm::new(target, params.fidelity, lit(params.lambda), params.exec)?;
        Ok(Self {
            model,
            system,
            q0,
            fidelity,
            source_weights: source.weights(),
            steps: params.steps,
        })
    }

    pub fn layout(&self) -> Layout {
        self.q0.layout
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn system(&self) -> &HamiltonianSystem<T> {
        &self.system
    }

    pub fn initial_state(&self) -> &ShootingState<T> {
        &self.q0
    }

    pub fn fidelity(&self) -> &FidelityTerm<T> {
        &self.fidelity
    }

    pub fn source_weights(&self) -> &[T] {
        &self.source_weights
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn shoot(&self, p0: &[T]) -> Result<Trajectory<T>> {
        let p0 = Costate::from_flat(self.layout(), p0.to_vec())?;
        rk4_shoot(&self.system, &self.q0, &p0, self.steps)
    }

    fn multipliers(&self, end: &ShootingState<T>, alpha: Option<&[T]>) -> Result<(Vec<T>, Vec<T>)> {
        let n = self.layout().atoms;
        let factors = match self.model {
            Model::Lddmm => WeightFactors::Unit,
            Model::L2 { .. } => {
                let a = alpha.ok_or_else(|| {
                    Error::InvalidInput("the L² model needs weight multipliers".into())
                })?;
                if a.len() != n {
                    return Err(Error::DimensionMismatch("one multiplier per atom expected".into()));
                }
                WeightFactors::L2(a)
            }
            Model::FisherRao { .. } => {
                let at: Vec<T> = (0..n).map(|i| end.alpha_tilde(i).unwrap()).collect();
                return Ok(FidelityTerm::multipliers(end, WeightFactors::FisherRao(&at)));
            }
        };
        Ok(FidelityTerm::multipliers(end, factors))
    }

    fn static_penalty(&self, alpha: Option<&[T]>) -> (T, Vec<T>) {
        match (self.model, alpha) {
            (Model::L2 { gamma }, Some(a)) => {
                let g = lit::<T>(gamma);
                let mut cost = T::zero();
                let grad = a
                    .iter()
                    .zip(&self.source_weights)
                    .map(|(ai, ri)| {
                        let e = *ai - T::one();
                        cost += *ri * e * e;
                        g * *ri * e
                    })
                    .collect();
                (lit::<T>(0.5) * g * cost, grad)
            }
            _ => (T::zero(), Vec::new()),
        }
    }

    /// Objective value and parts without the reverse sweep.
    pub fn cost(&self, p0: &[T], alpha: Option<&[T]>) -> Result<(T, Trajectory<T>)> {
        let traj = self.shoot(p0)?;
        let end = traj.final_state();
        let (c, _) = self.multipliers(&end, alpha)?;
        let (g, _) = self.fidelity.evaluate(&end, self.system.point_mass(), &c)?;
        let h0 = self.system.energy(&self.q0.data, p0)?;
        let (pen, _) = self.static_penalty(alpha);
        Ok((h0 + g + pen, traj))
    }

    /// Objective value and exact gradient.
    pub fn evaluate(&self, p0: &[T], alpha: Option<&[T]>) -> Result<ShootEvaluation<T>> {
        let layout = self.layout();
        let len = layout.len();
        let traj = self.shoot(p0)?;
        let end = traj.final_state();
        let (c, dc) = self.multipliers(&end, alpha)?;
        let (g, fg) = self.fidelity.evaluate(&end, self.system.point_mass(), &c)?;

        let mut lam = vec![T::zero(); 2 * len];
        for i in 0..layout.atoms {
            let (n, d) = (layout.n, layout.d);
            lam[layout.position_range(i)].copy_from_slice(&fg.position[i * n..(i + 1) * n]);
            lam[layout.frame_range(i)].copy_from_slice(&fg.frame[i * d * n..(i + 1) * d * n]);
            if let Some(k) = layout.weight_index(i) {
                lam[k] = fg.multiplier[i] * dc[i];
            }
        }
        self.backpropagate(&traj, &mut lam)?;

        let mut dq0 = vec![T::zero(); len];
        let mut dp0 = vec![T::zero(); len];
        let h0 = self.system.gradient(&self.q0.data, p0, &mut dq0, &mut dp0)?;
        for (g, l) in dp0.iter_mut().zip(&lam[len..]) {
            *g += *l;
        }
        let (pen, pen_grad) = self.static_penalty(alpha);
        let grad_alpha = if matches!(self.model, Model::L2 { .. }) {
            fg.multiplier
                .iter()
                .zip(&pen_grad)
                .map(|(a, b)| *a + *b)
                .collect()
        } else {
            Vec::new()
        };
        let transformation = h0.total();
        Ok(ShootEvaluation {
            cost: transformation + g + pen,
            transformation,
            weight_penalty: pen,
            fidelity: g,
            grad_p0: dp0,
            grad_alpha,
            trajectory: traj,
        })
    }

    /// Pulls a terminal cotangent `lam = ∂L/∂z(1)` back to `∂L/∂z(0)` through every
    /// RK4 step.
    pub fn backpropagate(&self, traj: &Trajectory<T>, lam: &mut [T]) -> Result<()> {
        let h = traj.step_size();
        let m = lam.len();
        let half = h * lit(0.5);
        let (c16, c13) = (h / lit(6.0), h / lit(3.0));
        let mut a = vec![T::zero(); m];
        let mut kb = vec![T::zero(); m];
        let mut acc = vec![T::zero(); m];
        for step in (0..traj.steps()).rev() {
            let [z2, z3, z4] = &traj.stages[step];
            let z1 = &traj.states[step];
            acc.copy_from_slice(lam);
            // stage 4
            for i in 0..m {
                kb[i] = c16 * lam[i];
            }
            self.system.rhs_vjp(z4, &kb, &mut a)?;
            add(&mut acc, &a);
            // stage 3
            for i in 0..m {
                kb[i] = c13 * lam[i] + h * a[i];
            }
            self.system.rhs_vjp(z3, &kb, &mut a)?;
            add(&mut acc, &a);
            // stage 2
            for i in 0..m {
                kb[i] = c13 * lam[i] + half * a[i];
            }
            self.system.rhs_vjp(z2, &kb, &mut a)?;
            add(&mut acc, &a);
            // stage 1
            for i in 0..m {
                kb[i] = c16 * lam[i] + half * a[i];
            }
            self.system.rhs_vjp(z1, &kb, &mut a)?;
            add(&mut acc, &a);
            lam.copy_from_slice(&acc);
        }
        Ok(())
    }
}

fn add<T: Real>(acc: &mut [T], v: &[T]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += *b;
    }
}

/// Cost and gradient of shooting `source` with deformation momenta `p0` (LDDMM layout,
/// no weight slots) and weight controls: `α` for L², `p^α̃` for Fisher-Rao, none for LDDMM.
///
/// Returns `(cost, ∂cost/∂p0, ∂cost/∂controls)`.
pub fn shoot_cost_and_grad<T: Real>(
    p0: &Costate<T>,
    weights_control: &[T],
    source: &DiracVarifold<T>,
    target: &DiracVarifold<T>,
    model: Model,
    params: &ShootingParams,
) -> Result<(T, Vec<T>, Vec<T>)> {
    let problem = ShootingProblem::new(source, target.clone(), model, params)?;
    let layout = problem.layout();
    let plain = Layout {
        weight_slot: false,
        ..layout
    };
    if p0.layout != plain {
        return Err(Error::DimensionMismatch(
            "deformation momenta must use the layout without weight slots".into(),
        ));
    }
    let expect = match model {
        Model::Lddmm => 0,
        _ => layout.atoms,
    };
    if weights_control.len() != expect {
        return Err(Error::DimensionMismatch(format!(
            "expected {expect} weight controls, got {}",
            weights_control.len()
        )));
    }
    let mut full = Vec::with_capacity(layout.len());
    for i in 0..layout.atoms {
        full.extend_from_slice(p0.p_x(i));
        full.extend_from_slice(p0.p_u(i));
        if layout.weight_slot {
            full.push(weights_control[i]);
        }
    }
    let alpha = matches!(model, Model::L2 { .. }).then_some(weights_control);
    let ev = problem.evaluate(&full, alpha)?;
    let mut grad_p = Vec::with_capacity(plain.len());
    let mut grad_w = Vec::new();
    for i in 0..layout.atoms {
        grad_p.extend_from_slice(&ev.grad_p0[layout.position_range(i)]);
        grad_p.extend_from_slice(&ev.grad_p0[layout.frame_range(i)]);
        if let Some(k) = layout.weight_index(i) {
            grad_w.push(ev.grad_p0[k]);
        }
    }
    if matches!(model, Model::L2 { .. }) {
        grad_w = ev.grad_alpha;
    }
    Ok((ev.cost, grad_p, grad_w))
}
