//! End-to-end registration: assembles the shooting objective for a model, runs the bounded
//! quasi-Newton solver over the stacked controls and packages the converged solution.
//! Also houses parameter presets and the synthetic benchmark generators.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{hamiltonian_drift, Model, ShootingParams, ShootingProblem, Trajectory};
use crate::error::{Error, Result};
use crate::optimizer::{minimize, Diagnostics, OptimizerConfig};
use crate::scalar::{lit, to_f64, Real};
use crate::varifold::{curve_to_varifold, DiracVarifold, Polyline};

/// Starting point of the optimization.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Init {
    /// Zero momenta, `α = 1`: the identity transformation.
    #[default]
    Zero,
    /// Deformation momenta per atom (position then frame entries, no weight slot) and
    /// weight controls (`α` for L², `p^α̃(0)` for Fisher-Rao, empty for LDDMM).
    Provided { momenta: Vec<f64>, controls: Vec<f64> },
}

#[derive(Clone, Debug)]
pub struct RegistrationProblem<T> {
    pub source: DiracVarifold<T>,
    pub target: DiracVarifold<T>,
    pub model: Model,
    pub params: ShootingParams,
    pub optimizer: OptimizerConfig,
    pub init: Init,
    /// Keep the deformation momenta at their initial values and optimize the weight
    /// controls only.
    pub fixed_deformation: bool,
}

impl<T: Real> RegistrationProblem<T> {
    pub fn new(source: DiracVarifold<T>, target: DiracVarifold<T>, model: Model, params: ShootingParams) -> Self {
        Self {
            source,
            target,
            model,
            params,
            optimizer: OptimizerConfig::default(),
            init: Init::Zero,
            fixed_deformation: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.source.is_empty() {
            return Err(Error::InvalidInput("source varifold is empty".into()));
        }
        self.model.validate()?;
        self.params.validate()?;
        if !(self.params.lambda > 0.0) {
            return Err(Error::InvalidInput("lambda must be positive".into()));
        }
        if self.fixed_deformation && self.model == Model::Lddmm {
            return Err(Error::InvalidInput("LDDMM has no weight controls to optimize".into()));
        }
        self.optimizer.validate()
    }

    /// Same problem under another `γ`.
    pub fn with_gamma(&self, gamma: f64) -> Self {
        let model = match self.model {
            Model::Lddmm => Model::Lddmm,
            Model::L2 { .. } => Model::L2 { gamma },
            Model::FisherRao { .. } => Model::FisherRao { gamma },
        };
        Self { model, ..self.clone() }
    }
}

/// Energy breakdown of a converged registration. `deformation + weight` is the
/// transformation energy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Energies<T> {
    pub deformation: T,
    pub weight: T,
    pub fidelity: T,
    pub total: T,
}

impl<T: Real> Energies<T> {
    pub fn transformation(&self) -> T {
        self.deformation + self.weight
    }
}

#[derive(Clone, Debug)]
pub struct RegistrationResult<T> {
    pub model: Model,
    /// Optimal initial costate in the model layout (Fisher-Rao layouts include `p^α̃(0)`).
    pub p0: Vec<T>,
    /// Static multipliers `α` (L² only).
    pub alpha: Vec<T>,
    pub trajectory: Trajectory<T>,
    pub energies: Energies<T>,
    /// Value of the optimized objective at the returned point.
    pub objective: T,
    /// Relative Hamiltonian drift along the trajectory.
    pub drift: T,
    /// Displayed weight of every atom at every grid time.
    pub weight_paths: Vec<Vec<T>>,
    /// Smallest `α̃_i(t_k)` over atoms and grid times (Fisher-Rao only).
    pub min_alpha_tilde: Option<T>,
    pub diagnostics: Diagnostics,
    pub warnings: Vec<String>,
}

impl<T: Real> RegistrationResult<T> {
    pub fn final_weights(&self) -> &[T] {
        self.weight_paths.last().expect("trajectory has at least one time")
    }

    /// Weight controls of the result: `α` (L²), `p^α̃(0)` (Fisher-Rao) or nothing.
    pub fn controls(&self) -> Vec<T> {
        let layout = self.trajectory.layout;
        match self.model {
            Model::L2 { .. } => self.alpha.clone(),
            Model::FisherRao { .. } => (0..layout.atoms)
                .map(|i| self.p0[layout.weight_index(i).unwrap()])
                .collect(),
            Model::Lddmm => Vec::new(),
        }
    }

    /// `α̃_i(1)` (Fisher-Rao) or `α_i` (L²) or 1.
    pub fn final_factors(&self) -> Vec<T> {
        let end = self.trajectory.final_state();
        (0..end.layout.atoms)
            .map(|i| match (end.alpha_tilde(i), self.model) {
                (Some(a), _) => a,
                (None, Model::L2 { .. }) => self.alpha[i],
                _ => T::one(),
            })
            .collect()
    }

    /// Transported geometry at grid time `k` carrying the displayed weights.
    pub fn varifold_at(&self, k: usize, point_mass: &[T]) -> DiracVarifold<T> {
        reweighted(self.trajectory.state(k).geometry(point_mass), &self.weight_paths[k])
    }
}

fn reweighted<T: Real>(geo: DiracVarifold<T>, weights: &[T]) -> DiracVarifold<T> {
    let factors: Vec<T> = geo
        .atoms()
        .iter()
        .zip(weights)
        .map(|(a, w)| if a.weight > T::zero() { (*w / a.weight).max(T::zero()) } else { T::zero() })
        .collect();
    geo.rescaled(&factors).expect("factors are non-negative")
}

/// Transported varifold at every grid time, carrying the displayed weights.
pub fn displayed_snapshots<T: Real>(
    traj: &Trajectory<T>,
    model: Model,
    point_mass: &[T],
    alpha: &[T],
) -> Vec<DiracVarifold<T>> {
    display_weights(traj, model, point_mass, alpha)
        .iter()
        .enumerate()
        .map(|(k, w)| reweighted(traj.state(k).geometry(point_mass), w))
        .collect()
}

/// Extension point for coarse-to-fine strategies. Each stage is run to convergence and
/// warm-starts the next.
pub trait Schedule {
    fn stages(&self, params: &ShootingParams) -> Vec<ShootingParams>;
}

/// A single stage with the problem's own parameters.
#[derive(Clone, Copy, Debug, Default)]
pub struct SingleScale;

impl Schedule for SingleScale {
    fn stages(&self, params: &ShootingParams) -> Vec<ShootingParams> {
        vec![*params]
    }
}

/// Maps optimizer variables to the model's initial costate and back.
struct Controls {
    model: Model,
    /// `4γ r_i` per atom: Fisher-Rao momenta are optimized as `p^α̃ / (4γ r_i)`, which puts
    /// the weight energy `≈ 2γ r_i ζ_i²` on the same footing as the position block.
    fr_scale: Vec<f64>,
    len: usize,
    atoms: usize,
}

impl Controls {
    fn split<'a, T: Real>(&self, x: &'a [T], p0: &mut Vec<T>, weight_index: impl Fn(usize) -> Option<usize>) -> Option<&'a [T]> {
        p0.clear();
        p0.extend_from_slice(&x[..self.len]);
        for i in 0..self.atoms {
            if let Some(k) = weight_index(i) {
                p0[k] *= lit(self.fr_scale[i]);
            }
        }
        matches!(self.model, Model::L2 { .. }).then(|| &x[self.len..])
    }
}

/// Minimizes the relaxed registration objective with a single-scale schedule.
pub fn register<T: Real>(problem: &RegistrationProblem<T>) -> Result<RegistrationResult<T>> {
    register_with_schedule(problem, &SingleScale)
}

pub fn register_with_schedule<T: Real>(
    problem: &RegistrationProblem<T>,
    schedule: &dyn Schedule,
) -> Result<RegistrationResult<T>> {
    problem.validate()?;
    let stages = schedule.stages(&problem.params);
    if stages.is_empty() {
        return Err(Error::InvalidInput("schedule produced no stages".into()));
    }
    let mut x = None;
    let mut out = None;
    for params in &stages {
        let (res, xs) = run_stage(problem, params, x.take())?;
        x = Some(xs);
        out = Some(res);
    }
    Ok(out.expect("at least one stage"))
}

fn initial_point<T: Real>(problem: &RegistrationProblem<T>, shoot: &ShootingProblem<T>, ctl: &Controls) -> Result<Vec<T>> {
    let layout = shoot.layout();
    let atoms = layout.atoms;
    let mut x = vec![T::zero(); layout.len()];
    let is_l2 = matches!(problem.model, Model::L2 { .. });
    if is_l2 {
        x.extend(std::iter::repeat(T::one()).take(atoms));
    }
    if let Init::Provided { momenta, controls } = &problem.init {
        let plain = layout.n + layout.d * layout.n;
        if momenta.len() != atoms * plain {
            return Err(Error::DimensionMismatch(format!(
                "expected {} initial momenta, got {}",
                atoms * plain,
                momenta.len()
            )));
        }
        let want = if problem.model == Model::Lddmm { 0 } else { atoms };
        if controls.len() != want {
            return Err(Error::DimensionMismatch(format!(
                "expected {want} initial weight controls, got {}",
                controls.len()
            )));
        }
        for i in 0..atoms {
            let o = i * layout.block();
            for k in 0..plain {
                x[o + k] = lit(momenta[i * plain + k]);
            }
            if let Some(k) = layout.weight_index(i) {
                x[k] = lit(controls[i] / ctl.fr_scale[i]);
            }
        }
        if is_l2 {
            if controls.iter().any(|a| !(*a >= 0.0)) {
                return Err(Error::InvalidInput("initial multipliers must be non-negative".into()));
            }
            for (xi, a) in x[layout.len()..].iter_mut().zip(controls) {
                *xi = lit(*a);
            }
        }
    }
    Ok(x)
}

fn run_stage<T: Real>(
    problem: &RegistrationProblem<T>,
    params: &ShootingParams,
    warm: Option<Vec<T>>,
) -> Result<(RegistrationResult<T>, Vec<T>)> {
    let shoot = ShootingProblem::new(&problem.source, problem.target.clone(), problem.model, params)?;
    let layout = shoot.layout();
    let gamma = problem.model.gamma().unwrap_or(1.0);
    let ctl = Controls {
        model: problem.model,
        fr_scale: shoot
            .source_weights()
            .iter()
            .map(|r| 4.0 * gamma * to_f64(*r))
            .collect(),
        len: layout.len(),
        atoms: layout.atoms,
    };
    let x0 = match warm {
        Some(x) => x,
        None => initial_point(problem, &shoot, &ctl)?,
    };
    let lower: Option<Vec<T>> = matches!(problem.model, Model::L2 { .. }).then(|| {
        let mut l = vec![T::neg_infinity(); layout.len()];
        l.extend(std::iter::repeat(T::zero()).take(layout.atoms));
        l
    });
    let widx = |i| layout.weight_index(i);
    let mut p0 = Vec::with_capacity(layout.len());
    if let Err(e) = {
        let alpha = ctl.split(&x0, &mut p0, widx);
        shoot.cost(&p0, alpha)
    } {
        return Err(Error::InfeasibleInit(Box::new(e)));
    }
    let free: Vec<usize> = if problem.fixed_deformation {
        (0..layout.atoms)
            .filter_map(widx)
            .chain(layout.len()..x0.len())
            .collect()
    } else {
        (0..x0.len()).collect()
    };
    let expand = |y: &[T]| -> Vec<T> {
        let mut x = x0.clone();
        for (k, v) in free.iter().zip(y) {
            x[*k] = *v;
        }
        x
    };
    let objective = |y: &[T]| -> Result<(T, Vec<T>)> {
        let x = expand(y);
        let mut p0 = Vec::with_capacity(layout.len());
        let alpha = ctl.split(&x, &mut p0, widx);
        let ev = shoot.evaluate(&p0, alpha)?;
        let mut grad = ev.grad_p0;
        for i in 0..layout.atoms {
            if let Some(k) = layout.weight_index(i) {
                grad[k] *= lit(ctl.fr_scale[i]);
            }
        }
        grad.extend_from_slice(&ev.grad_alpha);
        Ok((ev.cost, free.iter().map(|k| grad[*k]).collect()))
    };
    let y0: Vec<T> = free.iter().map(|k| x0[*k]).collect();
    let lower: Option<Vec<T>> = lower.map(|l| free.iter().map(|k| l[*k]).collect());
    let min = minimize(objective, y0, lower.as_deref(), &problem.optimizer)?;
    let x = expand(&min.x);
    let alpha = ctl.split(&x, &mut p0, widx).map(|a| a.to_vec()).unwrap_or_default();
    let ev = shoot.evaluate(&p0, (!alpha.is_empty()).then_some(alpha.as_slice()))?;
    let traj = ev.trajectory;
    let system = shoot.system();
    let parts = traj.integrated_energy(system)?;
    let weight = parts.weight + ev.weight_penalty;
    let energies = Energies {
        deformation: parts.deformation,
        weight,
        fidelity: ev.fidelity,
        total: parts.deformation + weight + ev.fidelity,
    };
    let drift = hamiltonian_drift(&traj, system)?;
    let weight_paths = display_weights(&traj, problem.model, system.point_mass(), &alpha);
    let mut warnings = Vec::new();
    let min_alpha_tilde = problem.model.is_fisher_rao().then(|| {
        traj.states
            .iter()
            .flat_map(|z| (0..layout.atoms).map(move |i| z[layout.weight_index(i).unwrap()]))
            .fold(T::infinity(), |m, a| m.min(a))
    });
    if let Some(m) = min_alpha_tilde {
        if m < lit(-1e-6) {
            warnings.push(format!("weight factor crosses zero along the flow (min {m})"));
        }
    }
    if !min.diagnostics.settled() {
        warnings.push(format!(
            "optimizer stopped with {:?} (projected gradient {:.3e})",
            min.diagnostics.termination, min.diagnostics.grad_norm
        ));
    }
    let result = RegistrationResult {
        model: problem.model,
        p0: p0.clone(),
        alpha,
        trajectory: traj,
        energies,
        objective: ev.cost,
        drift,
        weight_paths,
        min_alpha_tilde,
        diagnostics: min.diagnostics,
        warnings,
    };
    Ok((result, x))
}

/// Weights shown along the flow: `α̃²·vol` (Fisher-Rao), `((1 − t) + tα)·vol` (L²), `vol`
/// (LDDMM). For d = 0 the point mass stands in for the frame volume.
pub fn display_weights<T: Real>(traj: &Trajectory<T>, model: Model, point_mass: &[T], alpha: &[T]) -> Vec<Vec<T>> {
    let layout = traj.layout;
    (0..traj.states.len())
        .map(|k| {
            let t = traj.times[k];
            let st = traj.state(k);
            (0..layout.atoms)
                .map(|i| {
                    let vol = if layout.d == 0 { point_mass[i] } else { st.frame_volume(i) };
                    match model {
                        Model::FisherRao { .. } => {
                            let a = st.alpha_tilde(i).unwrap();
                            a * a * vol
                        }
                        Model::L2 { .. } => ((T::one() - t) + t * alpha[i]) * vol,
                        Model::Lddmm => vol,
                    }
                })
                .collect()
        })
        .collect()
}

/// Documented parameter presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Curves and surfaces: `λ = 10`, `γ = 0.1`.
    Surfaces,
    /// Bundles of Diracs: `λ = 10`, `γ = 0.01`.
    DiracBundle,
}

impl Preset {
    pub fn lambda(self) -> f64 {
        10.0
    }

    pub fn gamma(self) -> f64 {
        match self {
            Preset::Surfaces => 0.1,
            Preset::DiracBundle => 0.01,
        }
    }
}

/// Weight densities of the ellipse target, by angular quadrant.
pub const ELLIPSE_QUADRANT_DENSITIES: [f64; 4] = [0.5, 0.75, 1.25, 1.75];

/// Semi-axes of the ellipse target.
pub const ELLIPSE_AXES: [f64; 2] = [1.4, 0.8];

/// Target density at a point of the plane, by the quadrant of its polar angle.
pub fn ellipse_quadrant_density(x: &[f64]) -> f64 {
    let angle = x[1].atan2(x[0]).rem_euclid(TAU);
    let q = ((angle / (PI / 2.0)) as usize).min(3);
    ELLIPSE_QUADRANT_DENSITIES[q]
}

fn closed_curve(segments: usize, radius: impl Fn(f64) -> [f64; 2]) -> Polyline<f64> {
    let vertices = (0..segments)
        .map(|k| radius(TAU * k as f64 / segments as f64).to_vec())
        .collect();
    Polyline::new(vertices, true)
}

/// Unit circle with uniform density 1 and an ellipse with piecewise constant density per
/// quadrant, both with `segments` segments whose endpoints include the axis crossings.
pub fn synth_circle_ellipse(segments: usize) -> Result<(DiracVarifold<f64>, DiracVarifold<f64>)> {
    if segments < 4 || segments % 4 != 0 {
        return Err(Error::InvalidInput("segment count must be a positive multiple of 4".into()));
    }
    let circle = curve_to_varifold(&closed_curve(segments, |a| [a.cos(), a.sin()]))?;
    let [ax, ay] = ELLIPSE_AXES;
    let ellipse = curve_to_varifold(&closed_curve(segments, |a| [ax * a.cos(), ay * a.sin()]))?;
    let factors: Vec<f64> = ellipse
        .atoms()
        .iter()
        .map(|a| ellipse_quadrant_density(&a.position))
        .collect();
    Ok((circle, ellipse.rescaled(&factors)?))
}

/// Closed ground-truth shapes for partial matching.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PartialShape {
    /// `ρ(θ) = 1 + amplitude·cos(lobes·θ)`.
    Flower { lobes: u32, amplitude: f64 },
    Ellipse { a: f64, b: f64 },
}

impl Default for PartialShape {
    fn default() -> Self {
        PartialShape::Flower { lobes: 3, amplitude: 0.25 }
    }
}

impl PartialShape {
    fn point(&self, angle: f64) -> [f64; 2] {
        match *self {
            PartialShape::Flower { lobes, amplitude } => {
                let rho = 1.0 + amplitude * (lobes as f64 * angle).cos();
                [rho * angle.cos(), rho * angle.sin()]
            }
            PartialShape::Ellipse { a, b } => [a * angle.cos(), b * angle.sin()],
        }
    }
}

/// Linear part and offset of the affine map that carries the ground truth onto the
/// partial-matching source.
pub const PARTIAL_SOURCE_WARP: ([[f64; 2]; 2], [f64; 2]) = ([[0.85, -0.2], [0.15, 1.1]], [0.1, -0.05]);

/// Partial-matching instance: the source is the ground-truth curve moved by
/// [`PARTIAL_SOURCE_WARP`], and the target deletes a contiguous arc of
/// `removed_fraction` of the ground-truth segments starting at a seeded position.
pub fn synth_partial(
    shape: PartialShape,
    segments: usize,
    removed_fraction: f64,
    seed: u64,
) -> Result<(DiracVarifold<f64>, DiracVarifold<f64>, DiracVarifold<f64>)> {
    if !(0.0..1.0).contains(&removed_fraction) {
        return Err(Error::InvalidInput("removed fraction must lie in [0, 1)".into()));
    }
    if segments < 3 {
        return Err(Error::InvalidInput("at least three segments are required".into()));
    }
    let ([[a00, a01], [a10, a11]], [b0, b1]) = PARTIAL_SOURCE_WARP;
    let source = curve_to_varifold(&closed_curve(segments, |a| {
        let [x, y] = shape.point(a);
        [a00 * x + a01 * y + b0, a10 * x + a11 * y + b1]
    }))?;
    let truth = curve_to_varifold(&closed_curve(segments, |a| shape.point(a)))?;
    let removed = (removed_fraction * segments as f64).round() as usize;
    let start = ChaCha8Rng::seed_from_u64(seed).gen_range(0..segments);
    let kept = truth
        .atoms()
        .iter()
        .enumerate()
        .filter(|(k, _)| (k + segments - start) % segments >= removed)
        .map(|(_, a)| a.clone())
        .collect();
    let target = DiracVarifold::from_atoms(2, 1, kept)?;
    Ok((source, target, truth))
}
