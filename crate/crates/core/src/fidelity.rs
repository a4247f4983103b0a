//! Kernel (W*) distance between discrete varifolds and the terminal matching cost
//! `g = λ/2 ‖μ₁ − μ'‖²_{W*}` with its analytic gradient.

use crate::dynamics::ShootingState;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::kernels::FidelityKernelSpec;
use crate::linalg::{cofactor, cross_gram, det, MAX_PLANE_DIM};
use crate::scalar::{lit, Real};
use crate::varifold::{frame_volume, DiracVarifold, DEGENERATE_VOLUME};

/// Tolerated negative round-off in a squared distance before it is treated as a bug.
pub const NEGATIVE_ROUNDOFF: f64 = 1e-12;

/// `Σ_i Σ_j k(x_i, U_i, x'_j, U'_j) r_i r'_j`
pub fn wstar_inner<T: Real>(
    a: &DiracVarifold<T>,
    b: &DiracVarifold<T>,
    spec: &FidelityKernelSpec,
) -> Result<T> {
    check_compatible(a, b)?;
    let (n, d) = (a.dim_ambient(), a.dim_plane());
    let ga = Geometry::of_varifold(a)?;
    let gb = Geometry::of_varifold(b)?;
    let rows = Execution::Parallel.map(a.len(), |i| {
        let mut acc = T::zero();
        if ga.mass[i] == T::zero() {
            return acc;
        }
        for j in 0..b.len() {
            if gb.mass[j] == T::zero() {
                continue;
            }
            let k = pair_kernel(&ga, i, &gb, j, n, d, spec);
            acc += ga.mass[i] * gb.mass[j] * k;
        }
        acc
    });
    Ok(rows.into_iter().sum())
}

/// `‖a‖² − 2⟨a, b⟩ + ‖b‖²`, clamping round-off below zero.
pub fn wstar_dist2<T: Real>(
    a: &DiracVarifold<T>,
    b: &DiracVarifold<T>,
    spec: &FidelityKernelSpec,
) -> Result<T> {
    let v = wstar_inner(a, a, spec)? - lit::<T>(2.0) * wstar_inner(a, b, spec)?
        + wstar_inner(b, b, spec)?;
    clamp_dist2(v)
}

fn clamp_dist2<T: Real>(v: T) -> Result<T> {
    if v >= T::zero() {
        Ok(v)
    } else if v >= -lit::<T>(NEGATIVE_ROUNDOFF) {
        Ok(T::zero())
    } else {
        Err(Error::Consistency(format!(
            "squared kernel distance is negative ({v})"
        )))
    }
}

fn check_compatible<T: Real>(a: &DiracVarifold<T>, b: &DiracVarifold<T>) -> Result<()> {
    if a.dim_ambient() != b.dim_ambient() || a.dim_plane() != b.dim_plane() {
        return Err(Error::DimensionMismatch(format!(
            "varifolds live in (n, d) = ({}, {}) and ({}, {})",
            a.dim_ambient(),
            a.dim_plane(),
            b.dim_ambient(),
            b.dim_plane()
        )));
    }
    Ok(())
}

/// Borrowed positions/frames plus each atom's geometric mass (frame volume, or the point
/// mass for d = 0). Atoms with a degenerate frame get mass 0.
struct Geometry<'a, T> {
    pos: Vec<&'a [T]>,
    frame: Vec<&'a [T]>,
    mass: Vec<T>,
}

impl<'a, T: Real> Geometry<'a, T> {
    fn of_varifold(v: &'a DiracVarifold<T>) -> Result<Self> {
        let tiny = lit::<T>(DEGENERATE_VOLUME);
        let mut g = Geometry {
            pos: Vec::with_capacity(v.len()),
            frame: Vec::with_capacity(v.len()),
            mass: Vec::with_capacity(v.len()),
        };
        for (i, a) in v.atoms().iter().enumerate() {
            let m = if v.dim_plane() == 0 {
                a.weight
            } else {
                let vol = frame_volume(&a.frame, v.dim_plane(), v.dim_ambient());
                if vol < tiny {
                    if a.weight > tiny {
                        return Err(Error::DegenerateFrame {
                            atom: i,
                            volume: vol.to_f64().unwrap_or(0.0),
                        });
                    }
                    T::zero()
                } else {
                    vol
                }
            };
            g.pos.push(&a.position);
            g.frame.push(&a.frame);
            g.mass.push(m);
        }
        Ok(g)
    }

    fn of_state(state: &'a ShootingState<T>, point_mass: &[T]) -> Self {
        let l = state.layout;
        let tiny = lit::<T>(DEGENERATE_VOLUME);
        let mass = (0..l.atoms)
            .map(|i| {
                if l.d == 0 {
                    point_mass[i]
                } else {
                    let v = state.frame_volume(i);
                    if v < tiny {
                        T::zero()
                    } else {
                        v
                    }
                }
            })
            .collect();
        Geometry {
            pos: (0..l.atoms).map(|i| state.position(i)).collect(),
            frame: (0..l.atoms).map(|i| state.frame(i)).collect(),
            mass,
        }
    }
}

/// Kernel value between two nondegenerate atoms of (possibly) different geometries.
fn pair_kernel<T: Real>(
    a: &Geometry<'_, T>,
    i: usize,
    b: &Geometry<'_, T>,
    j: usize,
    n: usize,
    d: usize,
    spec: &FidelityKernelSpec,
) -> T {
    let kp = spec.position(a.pos[i], b.pos[j]);
    if d == 0 {
        return kp;
    }
    let mut g = [T::zero(); MAX_PLANE_DIM * MAX_PLANE_DIM];
    cross_gram(a.frame[i], b.frame[j], d, n, &mut g[..d * d]);
    let s = det(&g[..d * d], d) / (a.mass[i] * b.mass[j]);
    kp * spec.grass_profile(s).0
}

/// Partial derivatives of the terminal cost, one entry per source atom.
#[derive(Clone, Debug, PartialEq)]
pub struct FidelityGradient<T> {
    pub d_position: Vec<Vec<T>>,
    /// Row-major d×n per atom (empty for d = 0).
    pub d_frame: Vec<Vec<T>>,
    /// With respect to `α_i` (L²) or `α̃_i` (Fisher-Rao); zero for pure LDDMM.
    pub d_alpha: Vec<T>,
}

/// How the transported geometry is reweighted before matching.
#[derive(Clone, Copy, Debug)]
pub enum WeightFactors<'a, T> {
    /// Weights are the transported frame volumes.
    Unit,
    /// Static multipliers `α_i`.
    L2(&'a [T]),
    /// Square-root factors `α̃_i`; the multiplier is `α̃_i²`.
    FisherRao(&'a [T]),
}

/// Flat gradient of the terminal cost with respect to positions, frames and the weight
/// multiplier `c_i` (before the model's chain rule).
#[derive(Clone, Debug)]
pub struct FlatFidelityGradient<T> {
    pub position: Vec<T>,
    pub frame: Vec<T>,
    pub multiplier: Vec<T>,
}

/// Terminal matching term against a fixed target, with `‖μ'‖²` cached.
#[derive(Clone, Debug)]
pub struct FidelityTerm<T> {
    spec: FidelityKernelSpec,
    target: DiracVarifold<T>,
    target_norm2: T,
    lambda: T,
    exec: Execution,
}

impl<T: Real> FidelityTerm<T> {
    pub fn new(
        target: DiracVarifold<T>,
        spec: FidelityKernelSpec,
        lambda: T,
        exec: Execution,
    ) -> Result<Self> {
        spec.validate()?;
        let target_norm2 = wstar_inner(&target, &target, &spec)?;
        Ok(Self {
            spec,
            target,
            target_norm2,
            lambda,
            exec,
        })
    }

    pub fn target(&self) -> &DiracVarifold<T> {
        &self.target
    }

    pub fn target_norm2(&self) -> T {
        self.target_norm2
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn spec(&self) -> &FidelityKernelSpec {
        &self.spec
    }

    /// Cost and gradient for the geometry in `state` reweighted by multipliers `c`.
    pub fn evaluate(
        &self,
        state: &ShootingState<T>,
        point_mass: &[T],
        c: &[T],
    ) -> Result<(T, FlatFidelityGradient<T>)> {
        let l = state.layout;
        let (n, d) = (l.n, l.d);
        if n != self.target.dim_ambient() || d != self.target.dim_plane() {
            return Err(Error::DimensionMismatch(
                "transported source and target differ in (n, d)".into(),
            ));
        }
        let src = Geometry::of_state(state, point_mass);
        let tgt = Geometry::of_varifold(&self.target)?;
        for i in 0..l.atoms {
            if d > 0 && src.mass[i] == T::zero() && c[i] != T::zero() {
                return Err(Error::DegenerateFrame {
                    atom: i,
                    volume: state.frame_volume(i).to_f64().unwrap_or(0.0),
                });
            }
        }
        let two = lit::<T>(2.0);
        let pos_scale = -two * lit::<T>(1.0 / (self.spec.sigma_w * self.spec.sigma_w));

        struct AtomOut<T> {
            self_term: T,
            cross_term: T,
            gx: Vec<T>,
            gu: Vec<T>,
            gc: T,
        }

        // Per-atom mass gradients ∂m/∂u^k = Σ_l C^{kl} u^l / m.
        let mass_grad: Vec<Vec<T>> = (0..l.atoms)
            .map(|i| {
                let mut out = vec![T::zero(); d * n];
                if d > 0 && src.mass[i] > T::zero() {
                    frame_volume_grad(src.frame[i], d, n, src.mass[i], &mut out);
                }
                out
            })
            .collect();

        let per_atom = self.exec.map(l.atoms, |a| {
            let mut out = AtomOut {
                self_term: T::zero(),
                cross_term: T::zero(),
                gx: vec![T::zero(); n],
                gu: vec![T::zero(); d * n],
                gc: T::zero(),
            };
            let ma = src.mass[a];
            if ma == T::zero() {
                return out;
            }
            let ca = c[a];
            let mut g = [T::zero(); MAX_PLANE_DIM * MAX_PLANE_DIM];
            let mut cof = [T::zero(); MAX_PLANE_DIM * MAX_PLANE_DIM];
            // sign: +1 against source atoms, −1 against target atoms
            let mut accumulate = |other: &Geometry<'_, T>, b: usize, wb: T, sign: T| {
                let mb = other.mass[b];
                let kp = self.spec.position(src.pos[a], other.pos[b]);
                let (s, h, dh) = if d == 0 {
                    (T::one(), T::one(), T::zero())
                } else {
                    cross_gram(src.frame[a], other.frame[b], d, n, &mut g[..d * d]);
                    let s = det(&g[..d * d], d) / (ma * mb);
                    let (h, dh) = self.spec.grass_profile(s);
                    (s, h, dh)
                };
                let val = ma * wb * kp * h;
                if sign > T::zero() {
                    out.self_term += ca * val;
                } else {
                    out.cross_term += ca * val;
                }
                out.gc += sign * val;
                let gpos = sign * ca * val * pos_scale;
                for k in 0..n {
                    out.gx[k] += gpos * (src.pos[a][k] - other.pos[b][k]);
                }
                if d > 0 {
                    cofactor(&g[..d * d], d, &mut cof[..d * d]);
                    let cm = sign * ca * wb * kp * (h - s * dh);
                    let cd = sign * ca * wb * kp * dh / mb;
                    for k in 0..d {
                        for e in 0..n {
                            let mut dd = T::zero();
                            for q in 0..d {
                                dd += cof[k * d + q] * other.frame[b][q * n + e];
                            }
                            out.gu[k * n + e] += cm * mass_grad[a][k * n + e] + cd * dd;
                        }
                    }
                }
            };
            for b in 0..l.atoms {
                if src.mass[b] == T::zero() {
                    continue;
                }
                accumulate(&src, b, c[b] * src.mass[b], T::one());
            }
            for j in 0..tgt.mass.len() {
                if tgt.mass[j] == T::zero() {
                    continue;
                }
                accumulate(&tgt, j, tgt.mass[j], -T::one());
            }
            out
        });

        let half = lit::<T>(0.5);
        let mut self_sum = T::zero();
        let mut cross_sum = T::zero();
        let mut grad = FlatFidelityGradient {
            position: Vec::with_capacity(l.atoms * n),
            frame: Vec::with_capacity(l.atoms * d * n),
            multiplier: Vec::with_capacity(l.atoms),
        };
        for o in per_atom {
            self_sum += o.self_term;
            cross_sum += o.cross_term;
            grad.position.extend(o.gx.into_iter().map(|v| v * self.lambda));
            grad.frame.extend(o.gu.into_iter().map(|v| v * self.lambda));
            grad.multiplier.push(o.gc * self.lambda);
        }
        let cost = half * self.lambda * (self_sum - two * cross_sum + self.target_norm2);
        Ok((cost, grad))
    }

    /// Multipliers and their chain factors `dc/dα` for a weight model.
    pub fn multipliers(state: &ShootingState<T>, weights: WeightFactors<'_, T>) -> (Vec<T>, Vec<T>) {
        let n = state.layout.atoms;
        match weights {
            WeightFactors::Unit => (vec![T::one(); n], vec![T::zero(); n]),
            WeightFactors::L2(alpha) => (alpha.to_vec(), vec![T::one(); n]),
            WeightFactors::FisherRao(at) => (
                at.iter().map(|a| *a * *a).collect(),
                at.iter().map(|a| lit::<T>(2.0) * *a).collect(),
            ),
        }
    }
}

/// `∂|u¹ ∧ … ∧ u^d|/∂u^k = Σ_l C^{kl} u^l / vol` written into `out` (d×n).
pub fn frame_volume_grad<T: Real>(frame: &[T], d: usize, n: usize, vol: T, out: &mut [T]) {
    let mut g = [T::zero(); MAX_PLANE_DIM * MAX_PLANE_DIM];
    let mut cof = [T::zero(); MAX_PLANE_DIM * MAX_PLANE_DIM];
    cross_gram(frame, frame, d, n, &mut g[..d * d]);
    cofactor(&g[..d * d], d, &mut cof[..d * d]);
    for k in 0..d {
        for e in 0..n {
            let mut acc = T::zero();
            for l in 0..d {
                acc += cof[k * d + l] * frame[l * n + e];
            }
            out[k * n + e] = acc / vol;
        }
    }
}

/// Terminal cost `g(q)` and its partial derivatives for a transported state.
///
/// `point_mass` supplies the weights of d = 0 atoms and is ignored otherwise.
pub fn terminal_cost_and_grad<T: Real>(
    state: &ShootingState<T>,
    point_mass: &[T],
    weights: WeightFactors<'_, T>,
    target: &DiracVarifold<T>,
    spec: &FidelityKernelSpec,
    lambda: T,
) -> Result<(T, FidelityGradient<T>)> {
    let term = FidelityTerm::new(target.clone(), *spec, lambda, Execution::Parallel)?;
    let (c, dc) = FidelityTerm::multipliers(state, weights);
    let (cost, flat) = term.evaluate(state, point_mass, &c)?;
    let l = state.layout;
    let (n, d) = (l.n, l.d);
    Ok((
        cost,
        FidelityGradient {
            d_position: flat.position.chunks(n).map(<[T]>::to_vec).collect(),
            d_frame: (0..l.atoms)
                .map(|i| flat.frame[i * d * n..(i + 1) * d * n].to_vec())
                .collect(),
            d_alpha: flat
                .multiplier
                .iter()
                .zip(&dc)
                .map(|(g, f)| *g * *f)
                .collect(),
        },
    ))
}

/// Squared distance of `a` from the empty varifold, i.e. `‖a‖²`.
pub fn wstar_norm2<T: Real>(a: &DiracVarifold<T>, spec: &FidelityKernelSpec) -> Result<T> {
    wstar_inner(a, a, spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Model;
    use crate::kernels::{fidelity_kernel_eval, GrassKernelKind};
    use crate::varifold::{curve_to_varifold, DiracAtom, Polyline};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn og() -> FidelityKernelSpec {
        FidelityKernelSpec::oriented(0.7, 0.8)
    }

    fn random_varifold(rng: &mut ChaCha8Rng, n: usize, d: usize, atoms: usize) -> DiracVarifold<f64> {
        let mut v = DiracVarifold::new(n, d).unwrap();
        for _ in 0..atoms {
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if d == 0 {
                v.push_mass(x, rng.gen_range(0.2..1.5)).unwrap();
            } else {
                loop {
                    let f: Vec<f64> = (0..d * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    if frame_volume(&f, d, n) > 0.1 {
                        v.push_oriented(x, f).unwrap();
                        break;
                    }
                }
            }
        }
        v
    }

    #[test]
    fn inner_examples() {
        let mut a = DiracVarifold::<f64>::new(2, 1).unwrap();
        a.push_oriented(vec![0.1, 0.3], vec![2.0, 0.0]).unwrap();
        assert!((wstar_inner(&a, &a, &og()).unwrap() - 4.0).abs() < 1e-14);
        let empty = DiracVarifold::new(2, 1).unwrap();
        assert_eq!(wstar_inner(&a, &empty, &og()).unwrap(), 0.0);
        assert_eq!(wstar_inner(&empty, &a, &og()).unwrap(), 0.0);
        assert!((wstar_dist2(&a, &empty, &og()).unwrap() - 4.0).abs() < 1e-14);
        assert!(wstar_dist2(&a, &a, &og()).unwrap().abs() < 1e-10);
    }

    #[test]
    fn inner_matches_pair_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = FidelityKernelSpec::new(0.9, GrassKernelKind::Linear, 1.0);
        for (n, d) in [(2, 1), (3, 2), (3, 0)] {
            let a = random_varifold(&mut rng, n, d, 3);
            let b = random_varifold(&mut rng, n, d, 2);
            let mut want = 0.0;
            for x in a.atoms() {
                for y in b.atoms() {
                    want += fidelity_kernel_eval(&x.position, &x.frame, &y.position, &y.frame, &spec).unwrap()
                        * x.weight
                        * y.weight;
                }
            }
            assert!((wstar_inner(&a, &b, &spec).unwrap() - want).abs() < 1e-12);
            let brute = wstar_inner(&a, &a, &spec).unwrap() - 2.0 * want + wstar_inner(&b, &b, &spec).unwrap();
            assert!((wstar_dist2(&a, &b, &spec).unwrap() - brute.max(0.0)).abs() < 1e-12);
        }
    }

    fn numeric_cost(
        state: &ShootingState<f64>,
        mass: &[f64],
        weights: WeightFactors<'_, f64>,
        target: &DiracVarifold<f64>,
        spec: &FidelityKernelSpec,
        lambda: f64,
    ) -> f64 {
        terminal_cost_and_grad(state, mass, weights, target, spec, lambda).unwrap().0
    }

    fn check_gradient(n: usize, d: usize, model: Model, spec: FidelityKernelSpec, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let src = random_varifold(&mut rng, n, d, 4);
        let tgt = random_varifold(&mut rng, n, d, 3);
        let mass = crate::dynamics::point_masses(&src);
        let mut state = ShootingState::from_varifold(&src, &model);
        let alpha: Vec<f64> = (0..4).map(|_| rng.gen_range(0.5..1.5)).collect();
        if model.is_fisher_rao() {
            for (i, a) in alpha.iter().enumerate() {
                let k = state.layout.weight_index(i).unwrap();
                state.data[k] = *a;
            }
        }
        let weights = |al: &[f64]| -> Vec<f64> { al.to_vec() };
        fn factors(model: Model, al: &[f64]) -> WeightFactors<'_, f64> {
            match model {
                Model::Lddmm => WeightFactors::Unit,
                Model::L2 { .. } => WeightFactors::L2(al),
                Model::FisherRao { .. } => WeightFactors::FisherRao(al),
            }
        }
        let lambda = 3.0;
        let (_, grad) = terminal_cost_and_grad(&state, &mass, factors(model, &alpha), &tgt, &spec, lambda).unwrap();
        let h = 1e-5;
        let l = state.layout;
        for i in 0..4 {
            let ranges = [(l.position_range(i), &grad.d_position[i]), (l.frame_range(i), &grad.d_frame[i])];
            for (range, g) in ranges {
                for (off, idx) in range.enumerate() {
                    let mut sp = state.clone();
                    let mut sm = state.clone();
                    sp.data[idx] += h;
                    sm.data[idx] -= h;
                    let fd = (numeric_cost(&sp, &mass, factors(model, &alpha), &tgt, &spec, lambda)
                        - numeric_cost(&sm, &mass, factors(model, &alpha), &tgt, &spec, lambda))
                        / (2.0 * h);
                    assert!(
                        (fd - g[off]).abs() <= 1e-6 * fd.abs().max(1e-2),
                        "atom {i} coord {off}: fd {fd} vs {}",
                        g[off]
                    );
                }
            }
            if !matches!(model, Model::Lddmm) {
                let mut ap = weights(&alpha);
                let mut am = weights(&alpha);
                ap[i] += h;
                am[i] -= h;
                let (mut sp, mut sm) = (state.clone(), state.clone());
                if model.is_fisher_rao() {
                    sp.data[l.weight_index(i).unwrap()] += h;
                    sm.data[l.weight_index(i).unwrap()] -= h;
                }
                let fd = (numeric_cost(&sp, &mass, factors(model, &ap), &tgt, &spec, lambda)
                    - numeric_cost(&sm, &mass, factors(model, &am), &tgt, &spec, lambda))
                    / (2.0 * h);
                assert!((fd - grad.d_alpha[i]).abs() <= 1e-6 * fd.abs().max(1e-2));
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let lin = FidelityKernelSpec::new(0.8, GrassKernelKind::Linear, 1.0);
        let mut seed = 0;
        for (n, d) in [(2, 1), (3, 1), (3, 2), (2, 0), (3, 0)] {
            for model in [Model::Lddmm, Model::L2 { gamma: 1.0 }, Model::FisherRao { gamma: 1.0 }] {
                for spec in [og(), lin] {
                    seed += 1;
                    check_gradient(n, d, model, spec, seed);
                }
            }
        }
    }

    #[test]
    fn matched_source_is_stationary() {
        let circle: Vec<Vec<f64>> = (0..12)
            .map(|k| {
                let t = k as f64 * std::f64::consts::TAU / 12.0;
                vec![t.cos(), 0.6 * t.sin()]
            })
            .collect();
        let v = curve_to_varifold(&Polyline::new(circle, true)).unwrap();
        let state = ShootingState::from_varifold(&v, &Model::Lddmm);
        let (cost, grad) =
            terminal_cost_and_grad(&state, &[], WeightFactors::Unit, &v, &og(), 5.0).unwrap();
        assert!(cost.abs() < 1e-10);
        let norm: f64 = grad.d_position.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
        assert!(norm < 1e-8);

        let (cost, grad) =
            terminal_cost_and_grad(&state, &[], WeightFactors::Unit, &v, &og(), 0.0).unwrap();
        assert_eq!(cost, 0.0);
        assert!(grad.d_position.iter().chain(&grad.d_frame).flatten().all(|g| *g == 0.0));
    }

    #[test]
    fn frame_choice_does_not_change_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let src = random_varifold(&mut rng, 3, 2, 3);
        let tgt = random_varifold(&mut rng, 3, 2, 3);
        let spec = og();
        let base = wstar_dist2(&src, &tgt, &spec).unwrap();
        // replace atom 1's frame by a rotated + sheared unit-determinant recombination
        let (s, c) = 0.7f64.sin_cos();
        let m = [c, -s + 0.4 * c, s, c + 0.4 * s];
        let f = &src.atoms()[1].frame;
        let mut g = vec![0.0; 6];
        for r in 0..2 {
            for k in 0..3 {
                g[r * 3 + k] = m[r * 2] * f[k] + m[r * 2 + 1] * f[3 + k];
            }
        }
        let mut atoms = src.atoms().to_vec();
        atoms[1] = DiracAtom {
            weight: frame_volume(&g, 2, 3),
            frame: g,
            position: atoms[1].position.clone(),
        };
        let alt = DiracVarifold::from_atoms(3, 2, atoms).unwrap();
        assert!((wstar_dist2(&alt, &tgt, &spec).unwrap() - base).abs() < 1e-10);
    }

    #[test]
    fn degenerate_weighted_atom_is_rejected() {
        let mut src = DiracVarifold::<f64>::new(2, 1).unwrap();
        src.push_oriented(vec![0.0, 0.0], vec![1.0, 0.0]).unwrap();
        let mut state = ShootingState::from_varifold(&src, &Model::Lddmm);
        state.data[2] = 0.0;
        assert!(matches!(
            terminal_cost_and_grad(&state, &[], WeightFactors::Unit, &src, &og(), 1.0),
            Err(Error::DegenerateFrame { .. })
        ));
    }

    proptest! {
        #[test]
        fn distance_is_symmetric_and_nonnegative(seed in 0u64..500, perm in 0usize..3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_varifold(&mut rng, 2, 1, 3);
            let b = random_varifold(&mut rng, 2, 1, 2);
            let spec = og();
            let ab = wstar_dist2(&a, &b, &spec).unwrap();
            let ba = wstar_dist2(&b, &a, &spec).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - ba).abs() < 1e-12);
            let mut atoms = a.atoms().to_vec();
            atoms.rotate_left(perm);
            let shuffled = DiracVarifold::from_atoms(2, 1, atoms).unwrap();
            prop_assert!(wstar_dist2(&a, &shuffled, &spec).unwrap() < 1e-10);
        }
    }
}
