//! Closed-form LDDMM-Fisher-Rao geodesics between single Diracs, and the optimal weight
//! control for a frozen flow. These are the reference solutions the numerical engine is
//! validated against.
//!
//! Costs are squared distances (energies); the distance itself is `√cost`.

use crate::error::{Error, Result};
use crate::kernels::DeformKernelSpec;
use crate::linalg::{dist2, dot, norm2};
use crate::scalar::{lit, Real};

/// Geodesic `r(t) δ_{x(t)}` between two weighted points.
#[derive(Clone, Debug, PartialEq)]
pub struct Dirac0Geodesic<T> {
    pub cost: T,
    x0: Vec<T>,
    x1: Vec<T>,
    sqrt_r0: T,
    sqrt_r1: T,
}

impl<T: Real> Dirac0Geodesic<T> {
    pub fn position(&self, t: T) -> Vec<T> {
        lerp(&self.x0, &self.x1, t)
    }

    pub fn weight(&self, t: T) -> T {
        if t == T::zero() {
            return self.sqrt_r0 * self.sqrt_r0;
        }
        let s = (T::one() - t) * self.sqrt_r0 + t * self.sqrt_r1;
        s * s
    }
}

fn lerp<T: Real>(a: &[T], b: &[T], t: T) -> Vec<T> {
    a.iter().zip(b).map(|(p, q)| (T::one() - t) * *p + t * *q).collect()
}

fn check_weights<T: Real>(r0: T, r1: T) -> Result<()> {
    if !(r0 > T::zero() && r0.is_finite()) || !(r1 >= T::zero() && r1.is_finite()) {
        return Err(Error::InvalidWeights(format!(
            "need r0 > 0 and r1 >= 0, got r0 = {r0}, r1 = {r1}"
        )));
    }
    Ok(())
}

fn check_gamma<T: Real>(gamma: T) -> Result<()> {
    if !(gamma > T::zero() && gamma.is_finite()) {
        return Err(Error::InvalidInput(format!("gamma must be positive, got {gamma}")));
    }
    Ok(())
}

/// Straight-line transport with Fisher-Rao weight interpolation
/// `r(t) = ((1 − t)√r0 + t√r1)²`, cost `½|x1 − x0|² + 2γ(√r1 − √r0)²`.
pub fn geodesic_dirac0<T: Real>(x0: &[T], r0: T, x1: &[T], r1: T, gamma: T) -> Result<Dirac0Geodesic<T>> {
    check_weights(r0, r1)?;
    check_gamma(gamma)?;
    if x0.len() != x1.len() {
        return Err(Error::DimensionMismatch("endpoints differ in dimension".into()));
    }
    let (a, b) = (r0.sqrt(), r1.sqrt());
    let half = lit::<T>(0.5);
    Ok(Dirac0Geodesic {
        cost: half * dist2(x0, x1) + lit::<T>(2.0) * gamma * (b - a) * (b - a),
        x0: x0.to_vec(),
        x1: x1.to_vec(),
        sqrt_r0: a,
        sqrt_r1: b,
    })
}

/// Scalars that parameterize a single 1-Dirac geodesic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dirac1GeodesicParams<T> {
    /// Rotational stiffness `σ_V²/2`.
    pub tau: T,
    /// `√(1 + τ/(γ r0))`
    pub chi: T,
    pub nu: T,
    /// Angle between the two unit directions, in `[0, π)`.
    pub theta: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dirac1Geodesic<T> {
    pub cost: T,
    pub params: Dirac1GeodesicParams<T>,
    x0: Vec<T>,
    x1: Vec<T>,
    u0: Vec<T>,
    u1: Vec<T>,
    r0: T,
    r1: T,
}

impl<T: Real> Dirac1Geodesic<T> {
    pub fn position(&self, t: T) -> Vec<T> {
        lerp(&self.x0, &self.x1, t)
    }

    /// Unit direction, rotating along the great circle at constant speed.
    pub fn direction(&self, t: T) -> Vec<T> {
        let th = self.params.theta;
        if th == T::zero() || t == T::zero() {
            return self.u0.clone();
        } else if t == T::one() {
            return self.u1.clone();
        }
        let (a, b, s) = (((T::one() - t) * th).sin(), (t * th).sin(), th.sin());
        self.u0
            .iter()
            .zip(&self.u1)
            .map(|(p, q)| (a * *p + b * *q) / s)
            .collect()
    }

    pub fn weight(&self, t: T) -> T {
        if t == T::zero() {
            return self.r0;
        } else if t == T::one() {
            return self.r1;
        }
        let nu = self.params.nu;
        let (a, b) = (self.r0.sqrt(), self.r1.sqrt());
        if nu == T::zero() {
            let s = (T::one() - t) * a + t * b;
            return s * s;
        }
        let s = (a * ((T::one() - t) * nu).sinh() + b * (nu * t).sinh()) / nu.sinh();
        s * s
    }

    /// Transformation energy split into its translation, rotation and weight parts.
    pub fn cost_parts(&self) -> (T, T, T) {
        let half = lit::<T>(0.5);
        let p = self.params;
        (
            half * dist2(&self.x0, &self.x1),
            half * p.tau * p.theta * p.theta,
            lit::<T>(2.0) * p.tau * p.nu * p.nu,
        )
    }
}

/// `ν` from the closed-form branch matching `(r0, r1)`.
pub fn nu_branch<T: Real>(r0: T, r1: T, chi: T) -> T {
    let one = T::one();
    if r1 == T::zero() {
        return -lit::<T>(0.5) * ((chi - one) / (chi + one)).ln();
    }
    if r1 == r0 {
        return T::zero();
    }
    let ratio = (r1 / r0).sqrt();
    let root = (one + r0 / r1 * (chi * chi - one)).sqrt();
    if r1 < r0 {
        (-ratio * (one - root) / (chi - one)).ln()
    } else {
        (ratio * (one + root) / (chi + one)).ln()
    }
}

/// Residual `√(r1/r0)/sinh ν − coth ν ∓ χ` of the implicit characterization of `ν`, with
/// `+χ` when `r1 > r0` and `−χ` otherwise.
pub fn implicit_nu_residual<T: Real>(nu: T, r0: T, r1: T, chi: T) -> T {
    let sign = if r1 > r0 { T::one() } else { -T::one() };
    (r1 / r0).sqrt() / nu.sinh() - nu.cosh() / nu.sinh() - sign * chi
}

/// Exact geodesic between `r0 δ_(x0,u0)` and `r1 δ_(x1,u1)` for unit directions.
#[allow(clippy::too_many_arguments)]
pub fn geodesic_dirac1<T: Real>(
    x0: &[T],
    u0: &[T],
    r0: T,
    x1: &[T],
    u1: &[T],
    r1: T,
    gamma: T,
    kernel: &DeformKernelSpec,
) -> Result<Dirac1Geodesic<T>> {
    check_weights(r0, r1)?;
    check_gamma(gamma)?;
    kernel.validate()?;
    let n = x0.len();
    if [x1.len(), u0.len(), u1.len()].iter().any(|&l| l != n) {
        return Err(Error::DimensionMismatch("endpoints differ in dimension".into()));
    }
    let unit_tol = lit::<T>(1e-10);
    if (norm2(u0).sqrt() - T::one()).abs() > unit_tol || (norm2(u1).sqrt() - T::one()).abs() > unit_tol {
        return Err(Error::InvalidInput("directions must be unit vectors".into()));
    }
    let c = dot(u0, u1);
    if c <= -T::one() + lit(1e-12) {
        return Err(Error::AntipodalDirections);
    }
    let theta = c.min(T::one()).acos();
    let tau = lit::<T>(kernel.tau());
    let chi = (T::one() + tau / (gamma * r0)).sqrt();
    let nu = nu_branch(r0, r1, chi);
    check_branch(nu, r0, r1, chi)?;
    let params = Dirac1GeodesicParams { tau, chi, nu, theta };
    let half = lit::<T>(0.5);
    let cost = half * dist2(x0, x1) + half * tau * theta * theta + lit::<T>(2.0) * tau * nu * nu;
    Ok(Dirac1Geodesic {
        cost,
        params,
        x0: x0.to_vec(),
        x1: x1.to_vec(),
        u0: u0.to_vec(),
        u1: u1.to_vec(),
        r0,
        r1,
    })
}

/// Verifies a branch value against the implicit relation. Values too close to zero to
/// resolve the relation in floating point are accepted.
fn check_branch<T: Real>(nu: T, r0: T, r1: T, chi: T) -> Result<()> {
    if !nu.is_finite() || nu < T::zero() {
        return Err(Error::Consistency(format!("branch formula produced nu = {nu}")));
    }
    if nu < lit(1e-6) {
        return Ok(());
    }
    let res = implicit_nu_residual(nu, r0, r1, chi);
    let scale = T::one() + (r1 / r0).sqrt() / nu.sinh() + (nu.cosh() / nu.sinh()).abs() + chi;
    if res.abs() > lit::<T>(1e-9) * scale {
        return Err(Error::Consistency(format!(
            "nu = {nu} violates the implicit relation (residual {res})"
        )));
    }
    Ok(())
}

/// Trapezoid weights of a uniform grid on `[0, 1]` with `m` nodes.
pub fn trapezoid_weights<T: Real>(m: usize) -> Vec<T> {
    assert!(m >= 2, "a quadrature grid needs at least two nodes");
    let h = T::one() / lit::<T>((m - 1) as f64);
    (0..m)
        .map(|j| if j == 0 || j == m - 1 { h * lit(0.5) } else { h })
        .collect()
}

/// Optimal weight control for a frozen flow: for each atom with Jacobian samples
/// `h(t_j) > 0` on a uniform grid, the control `η_j = 2(α̃₁ − 1) / (h_j Σ_k w_k/h_k)`
/// reaching `α̃(1) = α̃₁` with least cost `Σ_j w_j η_j² h_j`.
pub fn optimal_eta_fixed_flow<T: Real>(jacobians: &[Vec<T>], alpha1_target: &[T]) -> Result<Vec<Vec<T>>> {
    if jacobians.len() != alpha1_target.len() {
        return Err(Error::DimensionMismatch(
            "one Jacobian profile per target weight expected".into(),
        ));
    }
    let two = lit::<T>(2.0);
    jacobians
        .iter()
        .zip(alpha1_target)
        .enumerate()
        .map(|(atom, (h, &a1))| {
            if h.len() < 2 {
                return Err(Error::InvalidInput("Jacobian profiles need at least two samples".into()));
            }
            if let Some(index) = h.iter().position(|v| !(*v > T::zero())) {
                return Err(Error::NonPositiveJacobian { atom, index });
            }
            if !(a1 >= T::zero()) {
                return Err(Error::InvalidWeights(format!(
                    "target factor {a1} for atom {atom} is negative"
                )));
            }
            let w = trapezoid_weights::<T>(h.len());
            let inv: T = w.iter().zip(h).map(|(wj, hj)| *wj / *hj).sum();
            Ok(h.iter().map(|hj| two * (a1 - T::one()) / (*hj * inv)).collect())
        })
        .collect()
}

/// Discrete control cost `Σ_j w_j η_j² h_j` of one atom.
pub fn weight_control_cost<T: Real>(eta: &[T], jacobian: &[T]) -> T {
    let w = trapezoid_weights::<T>(eta.len());
    w.iter()
        .zip(eta)
        .zip(jacobian)
        .map(|((wj, e), hj)| *wj * *e * *e * *hj)
        .sum()
}

/// `α̃(t_j) = 1 + ½ ∫₀^{t_j} η` with trapezoid partial sums.
pub fn alpha_tilde_path<T: Real>(eta: &[T]) -> Vec<T> {
    let m = eta.len();
    let h = T::one() / lit::<T>((m - 1) as f64);
    let quarter = lit::<T>(0.25);
    let mut out = Vec::with_capacity(m);
    let mut a = T::one();
    out.push(a);
    for j in 1..m {
        a += quarter * h * (eta[j - 1] + eta[j]);
        out.push(a);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_kernel() -> DeformKernelSpec {
        DeformKernelSpec::gaussian(1.0)
    }

    fn oriented_pair(gamma: f64) -> Dirac1Geodesic<f64> {
        geodesic_dirac1(&[0.0, 0.0], &[1.0, 0.0], 0.5, &[1.0, 0.0], &[0.0, 1.0], 1.0, gamma, &unit_kernel()).unwrap()
    }

    #[test]
    fn dirac0_examples() {
        let g = geodesic_dirac0::<f64>(&[0.3, 0.1], 2.0, &[0.3, 0.1], 2.0, 1.0).unwrap();
        assert_eq!(g.cost, 0.0);
        assert!((g.weight(0.4) - 2.0).abs() < 1e-15);
        let g = geodesic_dirac0::<f64>(&[0.0], 1.0, &[0.0], 4.0, 1.0).unwrap();
        assert!((g.cost - 2.0).abs() < 1e-15);
        assert!((g.weight(0.5) - 2.25).abs() < 1e-15);
        let g = geodesic_dirac0::<f64>(&[0.0, 0.0], 1.0, &[0.0, 0.0], 0.0, 1.0).unwrap();
        assert!((g.cost - 2.0).abs() < 1e-15);
        for t in [0.0, 0.3, 1.0] {
            assert!((g.weight(t) - (1.0 - t) * (1.0 - t)).abs() < 1e-15);
        }
        assert!(geodesic_dirac0(&[0.0], 0.0, &[1.0], 1.0, 1.0).is_err());
    }

    #[test]
    fn dirac1_identity_costs_nothing() {
        let g = geodesic_dirac1::<f64>(&[0.2, 0.1], &[0.6, 0.8], 1.3, &[0.2, 0.1], &[0.6, 0.8], 1.3, 0.5, &unit_kernel()).unwrap();
        assert_eq!(g.cost, 0.0);
        assert!((g.weight(0.5) - 1.3).abs() < 1e-15);
    }

    #[test]
    fn oriented_pair_values() {
        // ν from the r0 ≤ r1 branch, tabulated independently with σ_V = 1
        for (gamma, nu) in [(0.001, 0.013088957), (10.0, 0.334734125), (200.0, 0.345950342)] {
            let g = oriented_pair(gamma);
            assert!((g.params.nu - nu).abs() < 1e-8, "gamma {gamma}: nu {}", g.params.nu);
            let want = 0.5 + 0.25 * std::f64::consts::FRAC_PI_2.powi(2) + 2.0 * 0.5 * nu * nu;
            assert!((g.cost - want).abs() < 1e-7);
            assert!(implicit_nu_residual(g.params.nu, 0.5, 1.0, g.params.chi).abs() < 1e-10);
        }
    }

    #[test]
    fn vanishing_target_weight() {
        let k = unit_kernel();
        let g = geodesic_dirac1::<f64>(&[0.0, 0.0], &[1.0, 0.0], 0.8, &[0.5, 0.0], &[0.0, 1.0], 0.0, 2.0, &k).unwrap();
        let chi = g.params.chi;
        assert!((g.params.nu + 0.5 * ((chi - 1.0) / (chi + 1.0)).ln()).abs() < 1e-15);
        assert_eq!(g.weight(1.0), 0.0);
        assert!(implicit_nu_residual(g.params.nu, 0.8, 0.0, chi).abs() < 1e-10);
    }

    #[test]
    fn antipodal_and_non_unit_directions_are_rejected() {
        let k = unit_kernel();
        assert!(matches!(
            geodesic_dirac1(&[0.0, 0.0], &[1.0, 0.0], 1.0, &[1.0, 0.0], &[-1.0, 0.0], 1.0, 1.0, &k),
            Err(Error::AntipodalDirections)
        ));
        assert!(geodesic_dirac1(&[0.0, 0.0], &[2.0, 0.0], 1.0, &[1.0, 0.0], &[0.0, 1.0], 1.0, 1.0, &k).is_err());
        assert!(matches!(
            geodesic_dirac1(&[0.0, 0.0], &[1.0, 0.0], -1.0, &[1.0, 0.0], &[0.0, 1.0], 1.0, 1.0, &k),
            Err(Error::InvalidWeights(_))
        ));
    }

    #[test]
    fn residual_sign_structure() {
        let g = oriented_pair(10.0);
        let p = g.params;
        assert!(implicit_nu_residual(-p.nu, 0.5, 1.0, p.chi).abs() > 1.0);
        // equal weights: the relation degenerates and the residual tends to χ as ν → 0
        assert!((implicit_nu_residual(1e-8, 0.7, 0.7, p.chi) - p.chi).abs() < 1e-6);
    }

    #[test]
    fn gamma_limits() {
        let tau = 0.5;
        let base = 0.5 + tau / 2.0 * std::f64::consts::FRAC_PI_2.powi(2);
        let stiff = oriented_pair(1e6).cost;
        let lddmm = base + tau / 2.0 * 2f64.ln().powi(2);
        assert!((stiff - lddmm).abs() / lddmm < 1e-2);
        let soft = oriented_pair(1e-6).cost;
        assert!((soft - base).abs() / base < 1e-2);
    }

    #[test]
    fn path_endpoints_and_positivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let r0: f64 = rng.gen_range(0.1..3.0);
            let r1: f64 = if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.1..3.0) };
            let a: f64 = rng.gen_range(0.0..3.0);
            let b: f64 = rng.gen_range(0.0..3.0);
            let (u0, u1) = ([a.cos(), a.sin()], [b.cos(), b.sin()]);
            let gamma = rng.gen_range(0.01..10.0);
            let g = geodesic_dirac1(&[0.0, 0.0], &u0, r0, &[0.4, -0.2], &u1, r1, gamma, &unit_kernel()).unwrap();
            assert_eq!(g.weight(0.0), r0);
            assert!((g.weight(1.0) - r1).abs() < 1e-12 * (1.0 + r1));
            for k in 0..=1000 {
                assert!(g.weight(k as f64 / 1000.0) >= 0.0);
            }
            let u = g.direction(1.0);
            assert!((u[0] - u1[0]).abs() < 1e-12 && (u[1] - u1[1]).abs() < 1e-12);
            if r1 > 0.0 {
                let back = geodesic_dirac1(&[0.4, -0.2], &u1, r1, &[0.0, 0.0], &u0, r0, gamma, &unit_kernel()).unwrap();
                assert!((back.cost - g.cost).abs() < 1e-10, "{} vs {}", back.cost, g.cost);
                if g.params.nu > 1e-6 {
                    assert!(implicit_nu_residual(g.params.nu, r0, r1, g.params.chi).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn frozen_flow_control_examples() {
        let eta = optimal_eta_fixed_flow::<f64>(&[vec![1.0; 15]], &[3.0]).unwrap();
        assert!(eta[0].iter().all(|e| (e - 4.0).abs() < 1e-14));
        let path = alpha_tilde_path(&eta[0]);
        for (j, a) in path.iter().enumerate() {
            assert!((a - (1.0 + 2.0 * j as f64 / 14.0)).abs() < 1e-14);
        }
        let eta = optimal_eta_fixed_flow(&[vec![0.7; 5]], &[1.0]).unwrap();
        assert!(eta[0].iter().all(|e| *e == 0.0));
        assert!(matches!(
            optimal_eta_fixed_flow(&[vec![1.0, 0.0, 2.0]], &[2.0]),
            Err(Error::NonPositiveJacobian { atom: 0, index: 1 })
        ));
    }

    #[test]
    fn frozen_flow_control_beats_perturbations() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h: Vec<f64> = (0..15).map(|_| rng.gen_range(0.3..3.0)).collect();
        let target = 0.4;
        let eta = optimal_eta_fixed_flow(&[h.clone()], &[target]).unwrap().remove(0);
        let best = weight_control_cost(&eta, &h);
        let w = trapezoid_weights::<f64>(15);
        for _ in 0..20 {
            // perturbation with zero trapezoid integral keeps α̃(1) fixed
            let mut dp: Vec<f64> = (0..15).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mean: f64 = dp.iter().zip(&w).map(|(a, b)| a * b).sum();
            for v in dp.iter_mut() {
                *v -= mean;
            }
            let other: Vec<f64> = eta.iter().zip(&dp).map(|(a, b)| a + b).collect();
            let end = *alpha_tilde_path(&other).last().unwrap();
            assert!((end - target).abs() < 1e-12);
            assert!(weight_control_cost(&other, &h) >= best);
        }
        assert!(alpha_tilde_path(&eta).iter().all(|a| *a >= 0.0));
    }
}
