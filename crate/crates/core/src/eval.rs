//! Quantitative evaluation of registrations: Chamfer distances, weight histograms and
//! sweeps over the weight-change penalty `γ`.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::registration::{register, RegistrationProblem, RegistrationResult};
use crate::scalar::{lit, to_f64, Real};

/// Symmetric mean nearest-neighbour distance
/// `½ (mean_{a} min_{b} |a − b| + mean_{b} min_{a} |a − b|)`.
pub fn chamfer<T: Real>(a: &[Vec<T>], b: &[Vec<T>]) -> Result<T> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet);
    }
    let n = a[0].len();
    if a.iter().chain(b).any(|p| p.len() != n) {
        return Err(Error::DimensionMismatch("points differ in dimension".into()));
    }
    let one_way = |from: &[Vec<T>], to: &[Vec<T>]| -> T {
        let total: T = from
            .iter()
            .map(|p| {
                to.iter()
                    .map(|q| crate::linalg::dist2(p, q))
                    .fold(T::infinity(), |m, d| m.min(d))
                    .sqrt()
            })
            .sum();
        total / lit::<T>(from.len() as f64)
    };
    Ok(lit::<T>(0.5) * (one_way(a, b) + one_way(b, a)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Histogram {
    /// `bins + 1` increasing bin edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Equal-width bins spanning the value range; a constant sample lands in a single bin.
    pub fn new(values: &[f64], bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::InvalidInput("a histogram needs at least one bin".into()));
        }
        if values.is_empty() {
            return Err(Error::EmptySet);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("histogram values must be finite".into()));
        }
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        let edges = (0..=bins).map(|k| lo + width * k as f64).collect();
        let mut counts = vec![0; bins];
        for v in values {
            let k = (((v - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
        Ok(Self { edges, counts })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            lower: f64,
            upper: f64,
            count: usize,
        }
        let mut w = csv::Writer::from_writer(out);
        for (k, c) in self.counts.iter().enumerate() {
            w.serialize(Row {
                lower: self.edges[k],
                upper: self.edges[k + 1],
                count: *c,
            })
            .map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("{other:?}")),
    }
}

/// Histogram of the final displayed weights of a registration.
pub fn weight_histogram<T: Real>(result: &RegistrationResult<T>, bins: usize) -> Result<Histogram> {
    let values: Vec<f64> = result.final_weights().iter().map(|w| to_f64(*w)).collect();
    Histogram::new(&values, bins)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub gamma: f64,
    pub deformation: f64,
    pub weight: f64,
    pub fidelity: f64,
    /// `max_i |factor_i(1) − 1|` with the model's weight factor (`α̃(1)` or `α`).
    pub max_weight_change: f64,
    pub final_weights: Vec<f64>,
}

impl SweepRow {
    /// Share of the transformation energy spent on weight change.
    pub fn weight_share(&self) -> f64 {
        let total = self.deformation + self.weight;
        if total > 0.0 {
            self.weight / total
        } else {
            0.0
        }
    }
}

/// Registers `problem` once per `γ`, in parallel, and tabulates the energy split.
pub fn gamma_sweep<T: Real>(problem: &RegistrationProblem<T>, gammas: &[f64]) -> Result<Vec<SweepRow>> {
    if problem.model.gamma().is_none() {
        return Err(Error::InvalidInput("a gamma sweep needs the L² or Fisher-Rao model".into()));
    }
    gammas
        .par_iter()
        .map(|&gamma| {
            let res = register(&problem.with_gamma(gamma))?;
            let change = res
                .final_factors()
                .iter()
                .map(|a| (to_f64(*a).abs() - 1.0).abs())
                .fold(0.0, f64::max);
            Ok(SweepRow {
                gamma,
                deformation: to_f64(res.energies.deformation),
                weight: to_f64(res.energies.weight),
                fidelity: to_f64(res.energies.fidelity),
                max_weight_change: change,
                final_weights: res.final_weights().iter().map(|w| to_f64(*w)).collect(),
            })
        })
        .collect()
}

/// One line per `γ`: `gamma,deformation,weight,fidelity,max_weight_change,weight_share`.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["gamma", "deformation", "weight", "fidelity", "max_weight_change", "weight_share"])
        .map_err(csv_error)?;
    for r in rows {
        w.write_record(
            [r.gamma, r.deformation, r.weight, r.fidelity, r.max_weight_change, r.weight_share()].map(|v| v.to_string()),
        )
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn chamfer_examples() {
        let a = vec![vec![0.0, 0.0], vec![1.0, 2.0]];
        assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
        assert_eq!(chamfer(&[vec![0.0, 0.0]], &[vec![3.0, 4.0]]).unwrap(), 5.0);
        assert!(matches!(chamfer::<f64>(&[], &a), Err(Error::EmptySet)));
    }

    #[test]
    fn chamfer_matches_exhaustive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<Vec<f64>> = (0..10).map(|_| vec![rng.gen(), rng.gen()]).collect();
        let b: Vec<Vec<f64>> = (0..12).map(|_| vec![rng.gen(), rng.gen()]).collect();
        let mut s_ab = 0.0;
        for p in &a {
            let mut best = f64::INFINITY;
            for q in &b {
                best = best.min(((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt());
            }
            s_ab += best;
        }
        let mut s_ba = 0.0;
        for q in &b {
            let mut best = f64::INFINITY;
            for p in &a {
                best = best.min(((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt());
            }
            s_ba += best;
        }
        let want = 0.5 * (s_ab / 10.0 + s_ba / 12.0);
        assert!((chamfer(&a, &b).unwrap() - want).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn chamfer_is_symmetric_and_non_negative(
            a in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 1..8),
            b in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 1..8),
        ) {
            let ab = chamfer(&a, &b).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - chamfer(&b, &a).unwrap()).abs() <= 1e-12);
            let mut both = a.clone();
            both.extend(b.iter().cloned());
            prop_assert!(chamfer(&both, &both).unwrap() == 0.0);
        }
    }

    #[test]
    fn histogram_examples() {
        let h = Histogram::new(&[0.7; 9], 5).unwrap();
        assert_eq!(h.counts.iter().filter(|c| **c > 0).count(), 1);
        assert_eq!(h.total(), 9);
        let h = Histogram::new(&[0.0, 0.25, 0.5, 1.0], 2).unwrap();
        assert_eq!(h.counts, vec![2, 2]);
        assert_eq!(h.edges, vec![0.0, 0.5, 1.0]);
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "lower,upper,count\n0.0,0.5,2\n0.5,1.0,2\n");
    }
}
