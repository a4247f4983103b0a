//! Classical RK4 on the Hamiltonian flow, keeping every stage input for the reverse sweep.

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

use super::{Costate, EnergyParts, HamiltonianSystem, Layout, ShootingState};

/// Uniform-grid solution of the shooting system.
#[derive(Clone, Debug)]
pub struct Trajectory<T> {
    pub layout: Layout,
    pub times: Vec<T>,
    /// Phase-space points `[q | p]` at each grid time.
    pub states: Vec<Vec<T>>,
    /// Inputs of RK4 stages 2, 3 and 4 for each step (stage 1 is `states[k]`).
    pub stages: Vec<[Vec<T>; 3]>,
}

impl<T: Real> Trajectory<T> {
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn step_size(&self) -> T {
        T::one() / lit::<T>(self.steps() as f64)
    }

    pub fn state(&self, k: usize) -> ShootingState<T> {
        let len = self.layout.len();
        ShootingState {
            layout: self.layout,
            data: self.states[k][..len].to_vec(),
        }
    }

    pub fn costate(&self, k: usize) -> Costate<T> {
        let len = self.layout.len();
        Costate {
            layout: self.layout,
            data: self.states[k][len..].to_vec(),
        }
    }

    pub fn final_state(&self) -> ShootingState<T> {
        self.state(self.steps())
    }

    /// `∫₀¹` of the deformation and weight parts of the Hamiltonian, using the RK4
    /// quadrature `h/6 (f₁ + 2f₂ + 2f₃ + f₄)` over the stored stages.
    pub fn integrated_energy(&self, system: &HamiltonianSystem<T>) -> Result<EnergyParts<T>> {
        let len = self.layout.len();
        let h = self.step_size();
        let w = [lit::<T>(1.0), lit(2.0), lit(2.0), lit(1.0)];
        let mut out = EnergyParts::default();
        for (k, st) in self.stages.iter().enumerate() {
            let pts = [&self.states[k], &st[0], &st[1], &st[2]];
            for (z, wi) in pts.iter().zip(w) {
                let e = system.energy_parts(&z[..len], &z[len..])?;
                let c = h / lit(6.0) * wi;
                out.deformation += c * e.deformation;
                out.weight += c * e.weight;
            }
        }
        Ok(out)
    }
}

/// Integrates `(q0, p0)` over `[0, 1]` with `steps` RK4 steps.
pub fn rk4_shoot<T: Real>(
    system: &HamiltonianSystem<T>,
    q0: &ShootingState<T>,
    p0: &Costate<T>,
    steps: usize,
) -> Result<Trajectory<T>> {
    let layout = system.layout();
    if steps == 0 {
        return Err(Error::InvalidInput("at least one time step is required".into()));
    }
    if q0.layout != layout || p0.layout != layout {
        return Err(Error::DimensionMismatch(
            "initial state/costate do not match the system layout".into(),
        ));
    }
    let mut z = Vec::with_capacity(2 * layout.len());
    z.extend_from_slice(&q0.data);
    z.extend_from_slice(&p0.data);
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { step: 0 });
    }
    let h = T::one() / lit::<T>(steps as f64);
    let half = h * lit(0.5);
    let sixth = h / lit(6.0);
    let two = lit::<T>(2.0);
    let m = z.len();
    let mut k1 = vec![T::zero(); m];
    let mut k2 = vec![T::zero(); m];
    let mut k3 = vec![T::zero(); m];
    let mut k4 = vec![T::zero(); m];
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut stages = Vec::with_capacity(steps);
    times.push(T::zero());
    states.push(z.clone());
    let offset = |base: &[T], dir: &[T], c: T| -> Vec<T> {
        base.iter().zip(dir).map(|(a, b)| *a + c * *b).collect()
    };
    for step in 0..steps {
        system.rhs(&z, &mut k1)?;
        let z2 = offset(&z, &k1, half);
        system.rhs(&z2, &mut k2)?;
        let z3 = offset(&z, &k2, half);
        system.rhs(&z3, &mut k3)?;
        let z4 = offset(&z, &k3, h);
        system.rhs(&z4, &mut k4)?;
        for i in 0..m {
            z[i] += sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i]);
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: step + 1 });
        }
        times.push(lit::<T>((step + 1) as f64) * h);
        states.push(z.clone());
        stages.push([z2, z3, z4]);
    }
    Ok(Trajectory {
        layout,
        times,
        states,
        stages,
    })
}

/// `max_k |H(t_k) − H(0)| / max(|H(0)|, 1e-30)` along a trajectory.
pub fn hamiltonian_drift<T: Real>(traj: &Trajectory<T>, system: &HamiltonianSystem<T>) -> Result<T> {
    let len = traj.layout.len();
    let h0 = system.energy(&traj.states[0][..len], &traj.states[0][len..])?;
    let scale = h0.abs().max(lit(1e-30));
    let mut worst = T::zero();
    for z in &traj.states[1..] {
        let h = system.energy(&z[..len], &z[len..])?;
        worst = worst.max((h - h0).abs() / scale);
    }
    Ok(worst)
}
