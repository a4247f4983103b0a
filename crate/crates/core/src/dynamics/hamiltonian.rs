//! Reduced Hamiltonian `H(q, p) = ½‖v‖²_V (+ Σ_i (p^α̃_i)²/(8γ m_i))` and its exact
//! gradient, written once for any [`Real`] so the same code yields Hessian-vector
//! products when evaluated on dual numbers.

use crate::autodiff::Dual;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fidelity::frame_volume_grad;
use crate::kernels::DeformKernelSpec;
use crate::linalg::dot;
use crate::scalar::{lit, Real};
use crate::varifold::frame_volume;

use super::{Costate, Layout, Model, ShootingState};

/// Frame volume below which the Fisher-Rao dynamics is considered singular.
pub const FR_MIN_VOLUME: f64 = 1e-12;

/// Split of the Hamiltonian into the kinetic deformation part and the weight part.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyParts<T> {
    pub deformation: T,
    pub weight: T,
}

impl<T: Real> EnergyParts<T> {
    pub fn total(&self) -> T {
        self.deformation + self.weight
    }
}

#[derive(Clone, Debug)]
pub struct HamiltonianSystem<T> {
    layout: Layout,
    inv_width2: f64,
    gamma: Option<f64>,
    point_mass: Vec<T>,
    exec: Execution,
}

impl<T: Real> HamiltonianSystem<T> {
    /// `point_mass` holds the (fixed) weights of d = 0 atoms; it is unused for d ≥ 1.
    pub fn new(
        layout: Layout,
        kernel: &DeformKernelSpec,
        model: &Model,
        point_mass: Vec<T>,
        exec: Execution,
    ) -> Result<Self> {
        kernel.validate()?;
        model.validate()?;
        if layout.weight_slot != model.is_fisher_rao() {
            return Err(Error::DimensionMismatch(
                "layout weight slot does not match the model".into(),
            ));
        }
        if layout.d == 0 && point_mass.len() != layout.atoms {
            return Err(Error::DimensionMismatch(
                "d = 0 systems need one point mass per atom".into(),
            ));
        }
        Ok(Self {
            layout,
            inv_width2: 1.0 / (kernel.sigma_v * kernel.sigma_v),
            gamma: match model {
                Model::FisherRao { gamma } => Some(*gamma),
                _ => None,
            },
            point_mass,
            exec,
        })
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn point_mass(&self) -> &[T] {
        &self.point_mass
    }

    pub fn execution(&self) -> Execution {
        self.exec
    }

    /// Writes `∂H/∂q` and `∂H/∂p` and returns the energy split.
    pub fn gradient(&self, q: &[T], p: &[T], dq: &mut [T], dp: &mut [T]) -> Result<EnergyParts<T>> {
        gradient_impl(
            self.layout,
            lit(self.inv_width2),
            self.gamma.map(lit),
            &self.point_mass,
            q,
            p,
            dq,
            dp,
            self.exec,
        )
    }

    pub fn energy_parts(&self, q: &[T], p: &[T]) -> Result<EnergyParts<T>> {
        let mut dq = vec![T::zero(); q.len()];
        let mut dp = vec![T::zero(); p.len()];
        self.gradient(q, p, &mut dq, &mut dp)
    }

    pub fn energy(&self, q: &[T], p: &[T]) -> Result<T> {
        Ok(self.energy_parts(q, p)?.total())
    }

    /// `ż = (∂H/∂p, −∂H/∂q)` for `z = [q | p]`.
    pub fn rhs(&self, z: &[T], out: &mut [T]) -> Result<()> {
        let len = self.layout.len();
        let (q, p) = z.split_at(len);
        let (dq_dt, dp_dt) = out.split_at_mut(len);
        self.gradient(q, p, dp_dt, dq_dt)?;
        for v in dp_dt.iter_mut() {
            *v = -*v;
        }
        Ok(())
    }

    /// Vector-Jacobian product `wᵀ ∂(rhs)/∂z`, computed as `∇²H · (−w_p, w_q)`.
    pub fn rhs_vjp(&self, z: &[T], w: &[T], out: &mut [T]) -> Result<()> {
        let len = self.layout.len();
        let (q, p) = z.split_at(len);
        let (wq, wp) = w.split_at(len);
        let qd: Vec<Dual<T>> = q.iter().zip(wp).map(|(a, b)| Dual::new(*a, -*b)).collect();
        let pd: Vec<Dual<T>> = p.iter().zip(wq).map(|(a, b)| Dual::new(*a, *b)).collect();
        let mass: Vec<Dual<T>> = self.point_mass.iter().map(|m| Dual::constant(*m)).collect();
        let mut dq = vec![Dual::constant(T::zero()); len];
        let mut dp = vec![Dual::constant(T::zero()); len];
        gradient_impl(
            self.layout,
            lit(self.inv_width2),
            self.gamma.map(lit),
            &mass,
            &qd,
            &pd,
            &mut dq,
            &mut dp,
            self.exec,
        )?;
        let (oq, op) = out.split_at_mut(len);
        for (o, v) in oq.iter_mut().zip(&dq) {
            *o = v.eps;
        }
        for (o, v) in op.iter_mut().zip(&dp) {
            *o = v.eps;
        }
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn gradient_impl<S: Real>(
    layout: Layout,
    inv_width2: S,
    gamma: Option<S>,
    point_mass: &[S],
    q: &[S],
    p: &[S],
    dq: &mut [S],
    dp: &mut [S],
    exec: Execution,
) -> Result<EnergyParts<S>> {
    let len = layout.len();
    assert_eq!(q.len(), len);
    assert_eq!(p.len(), len);
    assert_eq!(dq.len(), len);
    assert_eq!(dp.len(), len);
    let Layout { n, d, atoms, .. } = layout;
    let blk = layout.block();
    let s = lit::<S>(2.0) * inv_width2;
    let s2 = s * s;
    let half = lit::<S>(0.5);

    let parts = exec.for_blocks(dq, dp, blk, |i, gq, gp| -> Result<(S, S)> {
        for v in gq.iter_mut().chain(gp.iter_mut()) {
            *v = S::zero();
        }
        let oi = i * blk;
        let xi = &q[oi..oi + n];
        let ui = &q[oi + n..oi + n + d * n];
        let pxi = &p[oi..oi + n];
        let pui = &p[oi + n..oi + n + d * n];
        let (gx, rest) = gq.split_at_mut(n);
        let gu = &mut rest[..d * n];
        let (gpx, rest) = gp.split_at_mut(n);
        let gpu = &mut rest[..d * n];

        let mut z = vec![S::zero(); n];
        let mut zu_i = [S::zero(); 3];
        let mut zu_j = [S::zero(); 3];
        let mut pxi_puj = [S::zero(); 3];
        let mut pui_pxj = [S::zero(); 3];
        let mut uu = [S::zero(); 9];
        let mut pupu = [S::zero(); 9];
        let mut energy = S::zero();

        for j in 0..atoms {
            let oj = j * blk;
            let xj = &q[oj..oj + n];
            let uj = &q[oj + n..oj + n + d * n];
            let pxj = &p[oj..oj + n];
            let puj = &p[oj + n..oj + n + d * n];
            for e in 0..n {
                z[e] = xi[e] - xj[e];
            }
            let k = (-dot(&z, &z) * inv_width2).exp();
            let row = |a: usize| a * n..(a + 1) * n;
            for a in 0..d {
                zu_i[a] = dot(&z, &ui[row(a)]);
                zu_j[a] = dot(&z, &uj[row(a)]);
                pxi_puj[a] = dot(pxi, &puj[row(a)]);
                pui_pxj[a] = dot(&pui[row(a)], pxj);
                for b in 0..d {
                    uu[a * d + b] = dot(&ui[row(a)], &uj[row(b)]);
                    pupu[a * d + b] = dot(&pui[row(a)], &puj[row(b)]);
                }
            }
            let mut big_b = S::zero();
            let mut big_c = S::zero();
            let mut big_d = S::zero();
            let mut big_e = S::zero();
            for a in 0..d {
                big_b += pxi_puj[a] * zu_j[a];
                big_c += pui_pxj[a] * zu_i[a];
                for b in 0..d {
                    big_d += uu[a * d + b] * pupu[a * d + b];
                    big_e += zu_i[a] * zu_j[b] * pupu[a * d + b];
                }
            }
            let big_q = dot(pxi, pxj) + s * (big_b - big_c + big_d) - s2 * big_e;
            energy += k * big_q;

            // ∂/∂x_i
            let kq = -s * big_q * k;
            for e in 0..n {
                gx[e] += kq * z[e];
            }
            for a in 0..d {
                let mut pz_j = S::zero();
                let mut pz_i = S::zero();
                for b in 0..d {
                    pz_j += pupu[a * d + b] * zu_j[b];
                    pz_i += pupu[b * d + a] * zu_i[b];
                }
                let ca = k * (s * pxi_puj[a] - s2 * pz_i);
                let ci = k * (-s * pui_pxj[a] - s2 * pz_j);
                for e in 0..n {
                    gx[e] += ca * uj[a * n + e] + ci * ui[a * n + e];
                }
                // ∂/∂u_i^a
                let cz = ci;
                for e in 0..n {
                    gu[a * n + e] += cz * z[e];
                }
                for b in 0..d {
                    let c = k * s * pupu[a * d + b];
                    for e in 0..n {
                        gu[a * n + e] += c * uj[b * n + e];
                    }
                }
            }

            // ∂/∂p^x_i = v(x_i) contribution
            for e in 0..n {
                gpx[e] += k * pxj[e];
            }
            for b in 0..d {
                let c = k * s * zu_j[b];
                for e in 0..n {
                    gpx[e] += c * puj[b * n + e];
                }
            }
            // ∂/∂p^u_i^a = Dv(x_i) u_i^a contribution
            for a in 0..d {
                let cp = -k * s * zu_i[a];
                for e in 0..n {
                    gpu[a * n + e] += cp * pxj[e];
                }
                for b in 0..d {
                    let c = k * (s * uu[a * d + b] - s2 * zu_i[a] * zu_j[b]);
                    for e in 0..n {
                        gpu[a * n + e] += c * puj[b * n + e];
                    }
                }
            }
        }
        let mut weight_energy = S::zero();
        if let Some(gamma) = gamma {
            let m = if d == 0 {
                point_mass[i]
            } else {
                frame_volume(ui, d, n)
            };
            if !(m >= lit(FR_MIN_VOLUME)) {
                return Err(Error::DegenerateFrame {
                    atom: i,
                    volume: m.to_f64().unwrap_or(f64::NAN),
                });
            }
            let widx = n + d * n;
            let pa = p[oi + widx];
            let eight_gamma_m = lit::<S>(8.0) * gamma * m;
            weight_energy = pa * pa / eight_gamma_m;
            gp[widx] = lit::<S>(2.0) * pa / eight_gamma_m;
            gq[widx] = S::zero();
            if d > 0 {
                let mut grad_m = [S::zero(); 9];
                frame_volume_grad(ui, d, n, m, &mut grad_m[..d * n]);
                let c = -weight_energy / m;
                for (g, dm) in gq[n..n + d * n].iter_mut().zip(&grad_m[..d * n]) {
                    *g += c * *dm;
                }
            }
        }
        Ok((half * energy, weight_energy))
    });

    let mut out = EnergyParts {
        deformation: S::zero(),
        weight: S::zero(),
    };
    for r in parts {
        let (a, b) = r?;
        out.deformation += a;
        out.weight += b;
    }
    Ok(out)
}

fn check_layout<T: Real>(q: &ShootingState<T>, p: &Costate<T>, fr: bool) -> Result<()> {
    if q.layout != p.layout {
        return Err(Error::DimensionMismatch(
            "state and costate layouts differ".into(),
        ));
    }
    if q.layout.weight_slot != fr {
        return Err(Error::DimensionMismatch(if fr {
            "Fisher-Rao dynamics needs a weight slot per atom".into()
        } else {
            "L² dynamics has no weight slot".into()
        }));
    }
    Ok(())
}

fn rhs_typed<T: Real>(
    sys: &HamiltonianSystem<T>,
    q: &ShootingState<T>,
    p: &Costate<T>,
) -> Result<(ShootingState<T>, Costate<T>)> {
    let len = q.layout.len();
    let mut z = Vec::with_capacity(2 * len);
    z.extend_from_slice(&q.data);
    z.extend_from_slice(&p.data);
    let mut out = vec![T::zero(); 2 * len];
    sys.rhs(&z, &mut out)?;
    let dp = out.split_off(len);
    Ok((
        ShootingState::from_flat(q.layout, out)?,
        Costate::from_flat(q.layout, dp)?,
    ))
}

/// State and costate velocities of the LDDMM / LDDMM-L² system (no weight dynamics).
pub fn hamiltonian_rhs_l2<T: Real>(
    q: &ShootingState<T>,
    p: &Costate<T>,
    kernel: &DeformKernelSpec,
) -> Result<(ShootingState<T>, Costate<T>)> {
    check_layout(q, p, false)?;
    let mass = vec![T::one(); if q.layout.d == 0 { q.layout.atoms } else { 0 }];
    let sys = HamiltonianSystem::new(q.layout, kernel, &Model::Lddmm, mass, Execution::Parallel)?;
    rhs_typed(&sys, q, p)
}

/// State and costate velocities of the LDDMM-Fisher-Rao system.
pub fn hamiltonian_rhs_fr<T: Real>(
    q: &ShootingState<T>,
    p: &Costate<T>,
    kernel: &DeformKernelSpec,
    gamma: f64,
    point_mass: &[T],
) -> Result<(ShootingState<T>, Costate<T>)> {
    check_layout(q, p, true)?;
    let mass = if q.layout.d == 0 { point_mass.to_vec() } else { Vec::new() };
    let sys = HamiltonianSystem::new(
        q.layout,
        kernel,
        &Model::FisherRao { gamma },
        mass,
        Execution::Parallel,
    )?;
    rhs_typed(&sys, q, p)
}

/// Total transformation energy of the geodesic shot from `(q0, p0)`.
pub fn reduced_hamiltonian<T: Real>(
    q0: &ShootingState<T>,
    p0: &Costate<T>,
    model: &Model,
    kernel: &DeformKernelSpec,
    point_mass: &[T],
) -> Result<T> {
    check_layout(q0, p0, model.is_fisher_rao())?;
    let mass = if q0.layout.d == 0 { point_mass.to_vec() } else { Vec::new() };
    let sys = HamiltonianSystem::new(q0.layout, kernel, model, mass, Execution::Parallel)?;
    sys.energy(&q0.data, &p0.data)
}
