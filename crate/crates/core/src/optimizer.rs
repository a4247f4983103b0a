//! Limited-memory BFGS with simple lower bounds: gradient projection, active-set freezing
//! on bound faces and a strong-Wolfe line search capped at the largest feasible step.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Number of stored curvature pairs.
    pub memory: usize,
    pub max_iters: usize,
    /// Tolerance on the ∞-norm of the projected gradient.
    pub grad_tol: f64,
    /// Sufficient decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    /// Function evaluations allowed per line search.
    pub max_line_search: usize,
    /// Stop once an accepted step lowers the objective by less than this fraction of
    /// `max(|f|, 1)`.
    pub f_tol: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            memory: 10,
            max_iters: 500,
            grad_tol: 1e-6,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 30,
            f_tol: 1e-13,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.memory == 0 {
            return Err(Error::InvalidInput("optimizer memory must be at least 1".into()));
        }
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::InvalidInput(format!(
                "line search constants must satisfy 0 < c1 < c2 < 1, got c1 = {}, c2 = {}",
                self.c1, self.c2
            )));
        }
        if !(self.grad_tol >= 0.0) || !(self.f_tol >= 0.0) || self.max_line_search == 0 {
            return Err(Error::InvalidInput("invalid optimizer tolerances".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Projected gradient below tolerance.
    Converged,
    /// Relative objective decrease below tolerance.
    Stalled,
    MaxIterations,
    LineSearchFailure,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
    /// ∞-norm of the projected gradient at the returned point.
    pub grad_norm: f64,
    /// Objective value at the start and after every accepted step.
    pub history: Vec<f64>,
}

impl Diagnostics {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }

    /// Converged, or stalled at a point where the objective no longer decreases.
    pub fn settled(&self) -> bool {
        matches!(self.termination, Termination::Converged | Termination::Stalled)
    }
}

#[derive(Clone, Debug)]
pub struct Minimum<T> {
    pub x: Vec<T>,
    pub value: T,
    pub gradient: Vec<T>,
    pub diagnostics: Diagnostics,
}

struct Probe<T> {
    alpha: T,
    f: T,
    dphi: T,
    x: Vec<T>,
    g: Vec<T>,
}

struct Search<'a, T, F> {
    objective: &'a mut F,
    lower: Option<&'a [T]>,
    evaluations: usize,
}

impl<T: Real, F: FnMut(&[T]) -> Result<(T, Vec<T>)>> Search<'_, T, F> {
    /// Evaluation failures and non-finite values count as infinitely bad points.
    fn probe(&mut self, x0: &[T], d: &[T], alpha: T) -> Probe<T> {
        let mut x: Vec<T> = x0.iter().zip(d).map(|(a, b)| *a + alpha * *b).collect();
        if let Some(l) = self.lower {
            for (v, lo) in x.iter_mut().zip(l) {
                *v = v.max(*lo);
            }
        }
        self.evaluations += 1;
        match (self.objective)(&x) {
            Ok((f, g)) if f.is_finite() && g.iter().all(|v| v.is_finite()) => {
                let dphi = g.iter().zip(d).map(|(a, b)| *a * *b).sum();
                Probe { alpha, f, dphi, x, g }
            }
            _ => Probe {
                alpha,
                f: T::infinity(),
                dphi: T::nan(),
                x,
                g: Vec::new(),
            },
        }
    }
}

fn interpolate<T: Real>(lo: &Probe<T>, hi: &Probe<T>) -> T {
    let (a, b) = (lo.alpha, hi.alpha);
    let width = (b - a).abs();
    let (left, right) = (a.min(b), a.max(b));
    let guard = lit::<T>(0.1) * width;
    let mid = (a + b) * lit(0.5);
    if !hi.f.is_finite() || !hi.dphi.is_finite() {
        return mid;
    }
    let d1 = lo.dphi + hi.dphi - lit::<T>(3.0) * (lo.f - hi.f) / (a - b);
    let disc = d1 * d1 - lo.dphi * hi.dphi;
    if disc < T::zero() {
        return mid;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (hi.dphi + d2 - d1) / (hi.dphi - lo.dphi + lit::<T>(2.0) * d2);
    if t.is_finite() {
        t.max(left + guard).min(right - guard)
    } else {
        mid
    }
}

#[allow(clippy::too_many_arguments)]
fn line_search<T: Real, F: FnMut(&[T]) -> Result<(T, Vec<T>)>>(
    search: &mut Search<'_, T, F>,
    x: &[T],
    d: &[T],
    f0: T,
    dphi0: T,
    alpha_init: T,
    alpha_max: T,
    config: &OptimizerConfig,
) -> Option<Probe<T>> {
    let c1 = lit::<T>(config.c1);
    let curvature = -lit::<T>(config.c2) * dphi0;
    let armijo = |p: &Probe<T>| p.f.is_finite() && p.f <= f0 + c1 * p.alpha * dphi0;
    let origin = Probe {
        alpha: T::zero(),
        f: f0,
        dphi: dphi0,
        x: Vec::new(),
        g: Vec::new(),
    };
    let mut prev = origin;
    let mut alpha = alpha_init.min(alpha_max);
    let mut budget = config.max_line_search;
    let (mut lo, mut hi) = loop {
        if budget == 0 {
            return (prev.alpha > T::zero()).then_some(prev);
        }
        budget -= 1;
        let p = search.probe(x, d, alpha);
        if !armijo(&p) || (prev.alpha > T::zero() && p.f >= prev.f) {
            break (prev, p);
        }
        if p.dphi.abs() <= curvature {
            return Some(p);
        }
        if p.dphi >= T::zero() {
            break (p, prev);
        }
        if alpha >= alpha_max {
            return Some(p);
        }
        alpha = (alpha * lit(4.0)).min(alpha_max);
        prev = p;
    };
    while budget > 0 {
        budget -= 1;
        let trial = interpolate(&lo, &hi);
        let p = search.probe(x, d, trial);
        if !armijo(&p) || p.f >= lo.f {
            hi = p;
        } else {
            if p.dphi.abs() <= curvature {
                return Some(p);
            }
            if p.dphi * (hi.alpha - lo.alpha) >= T::zero() {
                hi = lo;
            }
            lo = p;
        }
        if (hi.alpha - lo.alpha).abs() <= lit::<T>(1e-16) * lo.alpha.max(T::one()) {
            break;
        }
    }
    (lo.alpha > T::zero() && lo.f < f0).then_some(lo)
}

fn projected_gradient<T: Real>(x: &[T], g: &[T], lower: Option<&[T]>) -> Vec<T> {
    match lower {
        None => g.to_vec(),
        Some(l) => x
            .iter()
            .zip(g)
            .zip(l)
            .map(|((xi, gi), li)| if *xi <= *li && *gi > T::zero() { T::zero() } else { *gi })
            .collect(),
    }
}

fn inf_norm<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, a| m.max(a.abs()))
}

fn two_loop<T: Real>(g: &[T], memory: &VecDeque<(Vec<T>, Vec<T>, T)>) -> Vec<T> {
    let dot = |a: &[T], b: &[T]| -> T { a.iter().zip(b).map(|(p, q)| *p * *q).sum() };
    let mut q = g.to_vec();
    let mut coef = Vec::with_capacity(memory.len());
    for (s, y, rho) in memory.iter().rev() {
        let a = *rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * *yi;
        }
        coef.push(a);
    }
    if let Some((s, y, _)) = memory.back() {
        let scale = dot(s, y) / dot(y, y);
        for qi in q.iter_mut() {
            *qi *= scale;
        }
    }
    for ((s, y, rho), a) in memory.iter().zip(coef.into_iter().rev()) {
        let b = *rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * *si;
        }
    }
    q
}

/// Minimizes `objective` from the feasible point `x0`, optionally subject to `x ≥ lower`
/// (entries may be `-∞`). The objective returns its value and gradient.
///
/// A failing line search is retried once along the steepest projected descent direction;
/// a second failure ends the run and is reported in the diagnostics together with the best
/// iterate found.
pub fn minimize<T, F>(
    mut objective: F,
    x0: Vec<T>,
    lower: Option<&[T]>,
    config: &OptimizerConfig,
) -> Result<Minimum<T>>
where
    T: Real,
    F: FnMut(&[T]) -> Result<(T, Vec<T>)>,
{
    config.validate()?;
    if let Some(l) = lower {
        if l.len() != x0.len() {
            return Err(Error::DimensionMismatch("bounds and start point differ in length".into()));
        }
        if x0.iter().zip(l).any(|(x, lo)| !(*x >= *lo)) {
            return Err(Error::InvalidInput("start point violates the lower bounds".into()));
        }
    }
    let (mut f, mut g) = objective(&x0)?;
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteObjective);
    }
    if g.len() != x0.len() {
        return Err(Error::DimensionMismatch("gradient length differs from the variable".into()));
    }
    let mut x = x0;
    let mut search = Search {
        objective: &mut objective,
        lower,
        evaluations: 1,
    };
    let mut memory: VecDeque<(Vec<T>, Vec<T>, T)> = VecDeque::with_capacity(config.memory);
    let mut history = vec![to_f64(f)];
    let tol = lit::<T>(config.grad_tol);
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;
    let mut pg = projected_gradient(&x, &g, lower);
    while iterations < config.max_iters {
        if inf_norm(&pg) <= tol {
            termination = Termination::Converged;
            break;
        }
        let mut step = None;
        let mut alpha_max_taken = T::infinity();
        for steepest in [false, true] {
            let mut d: Vec<T> = if steepest || memory.is_empty() {
                pg.iter().map(|v| -*v).collect()
            } else {
                two_loop(&pg, &memory).into_iter().map(|v| -v).collect()
            };
            for (k, (di, pgi)) in d.iter_mut().zip(&pg).enumerate() {
                let blocked = lower.is_some_and(|l| x[k] <= l[k] && *di < T::zero());
                if *pgi == T::zero() || blocked {
                    *di = T::zero();
                }
            }
            let mut dphi0: T = d.iter().zip(&g).map(|(a, b)| *a * *b).sum();
            if !(dphi0 < T::zero()) {
                d = pg.iter().map(|v| -*v).collect();
                dphi0 = d.iter().zip(&g).map(|(a, b)| *a * *b).sum();
            }
            let alpha_max = match lower {
                None => T::infinity(),
                Some(l) => x
                    .iter()
                    .zip(&d)
                    .zip(l)
                    .filter(|((_, di), _)| **di < T::zero())
                    .map(|((xi, di), li)| (*xi - *li) / -*di)
                    .fold(T::infinity(), |m, a| m.min(a)),
            };
            let alpha_init = if memory.is_empty() {
                T::one().min(T::one() / inf_norm(&d))
            } else {
                T::one()
            };
            alpha_max_taken = alpha_max;
            let from_memory = !steepest && !memory.is_empty();
            step = line_search(&mut search, &x, &d, f, dphi0, alpha_init, alpha_max, config);
            if step.is_some() || !from_memory {
                break;
            }
            memory.clear();
        }
        let Some(p) = step else {
            termination = Termination::LineSearchFailure;
            break;
        };
        let s: Vec<T> = p.x.iter().zip(&x).map(|(a, b)| *a - *b).collect();
        let y: Vec<T> = p.g.iter().zip(&g).map(|(a, b)| *a - *b).collect();
        let sy: T = s.iter().zip(&y).map(|(a, b)| *a * *b).sum();
        let ns: T = s.iter().map(|v| *v * *v).sum::<T>().sqrt();
        let ny: T = y.iter().map(|v| *v * *v).sum::<T>().sqrt();
        if sy > lit::<T>(1e-10) * ns * ny {
            if memory.len() == config.memory {
                memory.pop_front();
            }
            memory.push_back((s, y, T::one() / sy));
        }
        let at_bound = p.alpha >= alpha_max_taken;
        let decrease = f - p.f;
        let scale = f.abs().max(p.f.abs()).max(T::one());
        x = p.x;
        f = p.f;
        g = p.g;
        pg = projected_gradient(&x, &g, lower);
        history.push(to_f64(f));
        iterations += 1;
        if !at_bound && decrease <= lit::<T>(config.f_tol) * scale {
            termination = if inf_norm(&pg) <= tol { Termination::Converged } else { Termination::Stalled };
            break;
        }
    }
    let diagnostics = Diagnostics {
        iterations,
        evaluations: search.evaluations,
        termination,
        grad_norm: to_f64(inf_norm(&pg)),
        history,
    };
    Ok(Minimum {
        x,
        value: f,
        gradient: g,
        diagnostics,
    })
}
