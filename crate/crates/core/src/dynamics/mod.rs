//! Hamiltonian shooting systems for the LDDMM, LDDMM-L² and LDDMM-Fisher-Rao models.
//!
//! Phase space is stored flat and atom-major. Each atom owns a block of
//! `n + d·n (+1 in the Fisher-Rao model)` entries in both the state `q` and the costate
//! `p`: position, frame vectors, then the square-root weight factor `α̃` (or its costate).

mod adjoint;
mod hamiltonian;
mod integrate;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::varifold::{frame_volume, DiracAtom, DiracVarifold};

pub use adjoint::{shoot_cost_and_grad, ShootEvaluation, ShootingParams, ShootingProblem};
pub use hamiltonian::{
    hamiltonian_rhs_fr, hamiltonian_rhs_l2, reduced_hamiltonian, EnergyParts, HamiltonianSystem,
    FR_MIN_VOLUME,
};
pub use integrate::{hamiltonian_drift, rk4_shoot, Trajectory};

/// Weight model of a registration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Model {
    /// Pure diffeomorphic transport, weights follow the Jacobian only.
    Lddmm,
    /// Static per-atom weight multipliers `α_i ≥ 0` penalized by `γ/2 Σ r_i (α_i − 1)²`.
    L2 { gamma: f64 },
    /// Fisher-Rao weight process `α̃_i(t)` evolving jointly with the flow.
    #[serde(rename = "fr")]
    FisherRao { gamma: f64 },
}

impl Model {
    pub fn gamma(&self) -> Option<f64> {
        match *self {
            Model::Lddmm => None,
            Model::L2 { gamma } | Model::FisherRao { gamma } => Some(gamma),
        }
    }

    pub fn is_fisher_rao(&self) -> bool {
        matches!(self, Model::FisherRao { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Model::Lddmm => "lddmm",
            Model::L2 { .. } => "l2",
            Model::FisherRao { .. } => "fr",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.gamma() {
            Some(g) if !(g > 0.0 && g.is_finite()) => Err(Error::InvalidInput(format!(
                "gamma must be positive and finite, got {g}"
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub n: usize,
    pub d: usize,
    pub atoms: usize,
    pub weight_slot: bool,
}

impl Layout {
    pub fn new(n: usize, d: usize, atoms: usize, model: &Model) -> Self {
        Self {
            n,
            d,
            atoms,
            weight_slot: model.is_fisher_rao(),
        }
    }

    #[inline]
    pub fn block(&self) -> usize {
        self.n + self.d * self.n + usize::from(self.weight_slot)
    }

    /// Length of `q` (equal to the length of `p`).
    #[inline]
    pub fn len(&self) -> usize {
        self.atoms * self.block()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms == 0
    }

    #[inline]
    pub fn position_range(&self, i: usize) -> std::ops::Range<usize> {
        let o = i * self.block();
        o..o + self.n
    }

    #[inline]
    pub fn frame_range(&self, i: usize) -> std::ops::Range<usize> {
        let o = i * self.block() + self.n;
        o..o + self.d * self.n
    }

    /// Index of the weight slot of atom `i` (Fisher-Rao layouts only).
    #[inline]
    pub fn weight_index(&self, i: usize) -> Option<usize> {
        self.weight_slot
            .then(|| i * self.block() + self.n + self.d * self.n)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShootingState<T> {
    pub layout: Layout,
    pub data: Vec<T>,
}

impl<T: Real> ShootingState<T> {
    /// Initial state of a source varifold: its positions and frames, with `α̃ = 1`.
    pub fn from_varifold(v: &DiracVarifold<T>, model: &Model) -> Self {
        let layout = Layout::new(v.dim_ambient(), v.dim_plane(), v.len(), model);
        let mut data = Vec::with_capacity(layout.len());
        for a in v.atoms() {
            data.extend_from_slice(&a.position);
            data.extend_from_slice(&a.frame);
            if layout.weight_slot {
                data.push(T::one());
            }
        }
        Self { layout, data }
    }

    pub fn from_flat(layout: Layout, data: Vec<T>) -> Result<Self> {
        if data.len() != layout.len() {
            return Err(Error::DimensionMismatch(format!(
                "state has {} entries, layout needs {}",
                data.len(),
                layout.len()
            )));
        }
        Ok(Self { layout, data })
    }

    pub fn position(&self, i: usize) -> &[T] {
        &self.data[self.layout.position_range(i)]
    }

    pub fn frame(&self, i: usize) -> &[T] {
        &self.data[self.layout.frame_range(i)]
    }

    pub fn alpha_tilde(&self, i: usize) -> Option<T> {
        self.layout.weight_index(i).map(|k| self.data[k])
    }

    pub fn frame_volume(&self, i: usize) -> T {
        frame_volume(self.frame(i), self.layout.d, self.layout.n)
    }

    /// Transported geometry as a varifold. Frame weights are recomputed from the
    /// transported frames; d = 0 atoms take `point_mass`.
    pub fn geometry(&self, point_mass: &[T]) -> DiracVarifold<T> {
        let Layout { n, d, atoms, .. } = self.layout;
        let atoms = (0..atoms)
            .map(|i| DiracAtom {
                position: self.position(i).to_vec(),
                frame: self.frame(i).to_vec(),
                weight: if d == 0 {
                    point_mass[i]
                } else {
                    self.frame_volume(i)
                },
            })
            .collect();
        DiracVarifold::from_atoms(n, d, atoms).expect("transported geometry is consistent")
    }

    /// Geometry with every weight multiplied by the model's weight factor
    /// (`α_i` for L², `α̃_i²` for Fisher-Rao, 1 for LDDMM).
    pub fn weighted_varifold(&self, point_mass: &[T], alpha: Option<&[T]>) -> DiracVarifold<T> {
        let geo = self.geometry(point_mass);
        let factors: Vec<T> = (0..self.layout.atoms)
            .map(|i| match (self.alpha_tilde(i), alpha) {
                (Some(a), _) => a * a,
                (None, Some(al)) => al[i],
                (None, None) => T::one(),
            })
            .collect();
        geo.rescaled(&factors)
            .expect("weight factors are non-negative")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Costate<T> {
    pub layout: Layout,
    pub data: Vec<T>,
}

impl<T: Real> Costate<T> {
    pub fn zeros(layout: Layout) -> Self {
        Self {
            layout,
            data: vec![T::zero(); layout.len()],
        }
    }

    pub fn from_flat(layout: Layout, data: Vec<T>) -> Result<Self> {
        if data.len() != layout.len() {
            return Err(Error::DimensionMismatch(format!(
                "costate has {} entries, layout needs {}",
                data.len(),
                layout.len()
            )));
        }
        Ok(Self { layout, data })
    }

    pub fn p_x(&self, i: usize) -> &[T] {
        &self.data[self.layout.position_range(i)]
    }

    pub fn p_x_mut(&mut self, i: usize) -> &mut [T] {
        let r = self.layout.position_range(i);
        &mut self.data[r]
    }

    pub fn p_u(&self, i: usize) -> &[T] {
        &self.data[self.layout.frame_range(i)]
    }

    pub fn p_u_mut(&mut self, i: usize) -> &mut [T] {
        let r = self.layout.frame_range(i);
        &mut self.data[r]
    }

    pub fn p_alpha(&self, i: usize) -> Option<T> {
        self.layout.weight_index(i).map(|k| self.data[k])
    }

    pub fn set_p_alpha(&mut self, i: usize, value: T) {
        let k = self
            .layout
            .weight_index(i)
            .expect("weight costate only exists in the Fisher-Rao layout");
        self.data[k] = value;
    }

    /// Same momenta without the weight costates (LDDMM/L² layout).
    pub fn without_weight_slot(&self) -> Self {
        let layout = Layout {
            weight_slot: false,
            ..self.layout
        };
        let mut data = Vec::with_capacity(layout.len());
        for i in 0..self.layout.atoms {
            data.extend_from_slice(self.p_x(i));
            data.extend_from_slice(self.p_u(i));
        }
        Self { layout, data }
    }
}

/// Point masses of a d = 0 source (empty otherwise).
pub fn point_masses<T: Real>(v: &DiracVarifold<T>) -> Vec<T> {
    if v.dim_plane() == 0 {
        v.weights()
    } else {
        Vec::new()
    }
}
