//! Deformation kernel `K_V(x, y) = exp(−|x − y|²/σ_V²) Id` with its derivatives, the
//! velocity field it generates from a costate, and the product fidelity kernel
//! `k(x, U, x', U') = k_pos(x, x') · h(⟨U, U'⟩)` on position × oriented planes.

use serde::{Deserialize, Serialize};

use crate::dynamics::{Costate, ShootingState};
use crate::error::{Error, Result};
use crate::linalg::{dist2, dot};
use crate::scalar::{lit, Real};
use crate::varifold::grassmann_inner;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeformKernelKind {
    #[default]
    Gaussian,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeformKernelSpec {
    #[serde(default)]
    pub kind: DeformKernelKind,
    pub sigma_v: f64,
}

impl DeformKernelSpec {
    pub fn gaussian(sigma_v: f64) -> Self {
        Self {
            kind: DeformKernelKind::Gaussian,
            sigma_v,
        }
    }

    /// Rotational stiffness of a single oriented Dirac, `σ_V²/2` for this Gaussian.
    pub fn tau(&self) -> f64 {
        self.sigma_v * self.sigma_v / 2.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma_v > 0.0 && self.sigma_v.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "sigma_v must be positive, got {}",
                self.sigma_v
            )))
        }
    }

    /// `1/σ_V²` in the working scalar.
    #[inline]
    pub fn inv_width2<T: Real>(&self) -> T {
        lit(1.0 / (self.sigma_v * self.sigma_v))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PosKernelKind {
    #[default]
    Gaussian,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrassKernelKind {
    Linear,
    #[default]
    OrientedGaussian,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FidelityKernelSpec {
    #[serde(default)]
    pub pos_kind: PosKernelKind,
    pub sigma_w: f64,
    #[serde(default)]
    pub grass_kind: GrassKernelKind,
    #[serde(default = "default_sigma_g")]
    pub sigma_g: f64,
}

fn default_sigma_g() -> f64 {
    1.0
}

impl FidelityKernelSpec {
    pub fn new(sigma_w: f64, grass_kind: GrassKernelKind, sigma_g: f64) -> Self {
        Self {
            pos_kind: PosKernelKind::Gaussian,
            sigma_w,
            grass_kind,
            sigma_g,
        }
    }

    /// Gaussian positions with the oriented Gaussian Grassmann kernel.
    pub fn oriented(sigma_w: f64, sigma_g: f64) -> Self {
        Self::new(sigma_w, GrassKernelKind::OrientedGaussian, sigma_g)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |w: f64| w > 0.0 && w.is_finite();
        if !ok(self.sigma_w) || !ok(self.sigma_g) {
            return Err(Error::InvalidInput(format!(
                "fidelity kernel widths must be positive (sigma_w = {}, sigma_g = {})",
                self.sigma_w, self.sigma_g
            )));
        }
        Ok(())
    }

    /// `k_pos(x, y) = exp(−|x − y|²/σ_w²)`
    #[inline]
    pub fn position<T: Real>(&self, x: &[T], y: &[T]) -> T {
        let inv: T = lit(1.0 / (self.sigma_w * self.sigma_w));
        (-dist2(x, y) * inv).exp()
    }

    /// Zonal profile `h(s)` and its derivative `h'(s)`.
    #[inline]
    pub fn grass_profile<T: Real>(&self, s: T) -> (T, T) {
        match self.grass_kind {
            GrassKernelKind::Linear => (s, T::one()),
            GrassKernelKind::OrientedGaussian => {
                let c: T = lit(2.0 / (self.sigma_g * self.sigma_g));
                let h = (c * (s - T::one())).exp();
                (h, c * h)
            }
        }
    }
}

/// `exp(−|x − y|²/σ_V²)`
pub fn kv_eval<T: Real>(x: &[T], y: &[T], spec: &DeformKernelSpec) -> T {
    (-dist2(x, y) * spec.inv_width2::<T>()).exp()
}

/// Gradient of the scalar kernel in its first argument.
pub fn kv_grad1<T: Real>(x: &[T], y: &[T], spec: &DeformKernelSpec) -> Vec<T> {
    let s = lit::<T>(2.0) * spec.inv_width2::<T>();
    let k = kv_eval(x, y, spec);
    x.iter().zip(y).map(|(a, b)| -s * (*a - *b) * k).collect()
}

/// Gradient of the scalar kernel in its second argument.
pub fn kv_grad2<T: Real>(x: &[T], y: &[T], spec: &DeformKernelSpec) -> Vec<T> {
    kv_grad1(x, y, spec).into_iter().map(|g| -g).collect()
}

/// Mixed derivative `∂²K/∂x∂y` as a row-major n×n matrix.
pub fn kv_hess12<T: Real>(x: &[T], y: &[T], spec: &DeformKernelSpec) -> Vec<T> {
    let n = x.len();
    let s = lit::<T>(2.0) * spec.inv_width2::<T>();
    let k = kv_eval(x, y, spec);
    let w: Vec<T> = x.iter().zip(y).map(|(a, b)| *a - *b).collect();
    let mut h = vec![T::zero(); n * n];
    for a in 0..n {
        for b in 0..n {
            let id = if a == b { s } else { T::zero() };
            h[a * n + b] = k * (id - s * s * w[a] * w[b]);
        }
    }
    h
}

/// The velocity field generated by a costate, with its first two spatial derivatives.
///
/// `v(y) = Σ_j K(x_j, y) p^x_j + Σ_j Σ_l ∂₁K(x_j, y)(u_j^l) p^u_j^l`
pub struct VelocityField<'a, T> {
    state: &'a ShootingState<T>,
    costate: &'a Costate<T>,
    inv_width2: T,
}

impl<'a, T: Real> VelocityField<'a, T> {
    pub fn new(
        state: &'a ShootingState<T>,
        costate: &'a Costate<T>,
        spec: &DeformKernelSpec,
    ) -> Self {
        assert_eq!(state.layout.atoms, costate.layout.atoms);
        assert_eq!(state.layout.n, costate.layout.n);
        assert_eq!(state.layout.d, costate.layout.d);
        Self {
            state,
            costate,
            inv_width2: spec.inv_width2(),
        }
    }

    /// Visits every generating atom with `(K, w = y − x_j, frame, p^x, p^u)`.
    fn each_atom(&self, y: &[T], mut f: impl FnMut(T, &[T], &[T], &[T], &[T])) {
        let mut w = vec![T::zero(); y.len()];
        for j in 0..self.state.layout.atoms {
            let xj = self.state.position(j);
            for (wk, (a, b)) in w.iter_mut().zip(y.iter().zip(xj)) {
                *wk = *a - *b;
            }
            let k = (-dot(&w, &w) * self.inv_width2).exp();
            f(
                k,
                &w,
                self.state.frame(j),
                self.costate.p_x(j),
                self.costate.p_u(j),
            );
        }
    }

    pub fn eval(&self, y: &[T]) -> Vec<T> {
        let n = y.len();
        let d = self.state.layout.d;
        let s = lit::<T>(2.0) * self.inv_width2;
        let mut v = vec![T::zero(); n];
        self.each_atom(y, |k, w, u, px, pu| {
            for a in 0..n {
                v[a] += k * px[a];
            }
            for l in 0..d {
                let c = s * dot(w, &u[l * n..(l + 1) * n]) * k;
                for a in 0..n {
                    v[a] += c * pu[l * n + a];
                }
            }
        });
        v
    }

    /// `J[a][b] = ∂v_a/∂y_b`, row-major.
    pub fn jacobian(&self, y: &[T]) -> Vec<T> {
        let n = y.len();
        let d = self.state.layout.d;
        let s = lit::<T>(2.0) * self.inv_width2;
        let mut jac = vec![T::zero(); n * n];
        self.each_atom(y, |k, w, u, px, pu| {
            for a in 0..n {
                for b in 0..n {
                    jac[a * n + b] += -s * w[b] * k * px[a];
                }
            }
            for l in 0..d {
                let ul = &u[l * n..(l + 1) * n];
                let wu = dot(w, ul);
                for b in 0..n {
                    let grad_f = s * k * (ul[b] - s * wu * w[b]);
                    for a in 0..n {
                        jac[a * n + b] += pu[l * n + a] * grad_f;
                    }
                }
            }
        });
        jac
    }

    /// `H[a][b][c] = ∂²v_a/∂y_b∂y_c`, flattened as `a·n² + b·n + c`.
    pub fn second_differential(&self, y: &[T]) -> Vec<T> {
        let n = y.len();
        let d = self.state.layout.d;
        let s = lit::<T>(2.0) * self.inv_width2;
        let mut hess = vec![T::zero(); n * n * n];
        self.each_atom(y, |k, w, u, px, pu| {
            for b in 0..n {
                for c in 0..n {
                    let id = if b == c { T::one() } else { T::zero() };
                    let hk = (-s * id + s * s * w[b] * w[c]) * k;
                    for a in 0..n {
                        hess[a * n * n + b * n + c] += hk * px[a];
                    }
                    for l in 0..d {
                        let ul = &u[l * n..(l + 1) * n];
                        let wu = dot(w, ul);
                        let hf = s
                            * (-s * k * (ul[b] * w[c] + w[b] * ul[c])
                                + wu * (-s * id + s * s * w[b] * w[c]) * k);
                        for a in 0..n {
                            hess[a * n * n + b * n + c] += hf * pu[l * n + a];
                        }
                    }
                }
            }
        });
        hess
    }
}

/// Evaluates the optimal velocity field at each target point.
pub fn velocity_field<T: Real>(
    state: &ShootingState<T>,
    costate: &Costate<T>,
    spec: &DeformKernelSpec,
    targets: &[Vec<T>],
) -> Vec<Vec<T>> {
    let field = VelocityField::new(state, costate, spec);
    targets.iter().map(|y| field.eval(y)).collect()
}

/// Product kernel between two atoms. Pass empty frames for d = 0 (Grassmann factor 1).
pub fn fidelity_kernel_eval<T: Real>(
    x: &[T],
    frame: &[T],
    x2: &[T],
    frame2: &[T],
    spec: &FidelityKernelSpec,
) -> Result<T> {
    let n = x.len();
    if x2.len() != n || frame.len() != frame2.len() || frame.len() % n != 0 {
        return Err(Error::DimensionMismatch(
            "atoms differ in ambient or plane dimension".into(),
        ));
    }
    let d = frame.len() / n;
    let kp = spec.position(x, x2);
    if d == 0 {
        return Ok(kp);
    }
    let s = grassmann_inner(frame, frame2, d, n)?;
    Ok(kp * spec.grass_profile(s).0)
}
