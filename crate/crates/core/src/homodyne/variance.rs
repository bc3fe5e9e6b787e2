use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::DensityMatrix;
use crate::error::{domain, Error, Result};
use crate::fock::{probe_cutoff, CutoffPolicy, ProbeSpec};
use crate::numeric::CompensatedSum;
use crate::qfi::dephased_probe;

/// First and second ladder moments, normalized by the trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureMoments {
    /// `⟨a†a⟩`
    pub mean_photons: f64,
    /// `⟨a⟩`
    pub a1: Complex64,
    /// `⟨a²⟩`
    pub a2: Complex64,
}

impl QuadratureMoments {
    pub fn of(rho: &DensityMatrix) -> Self {
        let dim = rho.dim();
        let tr = rho.trace();
        let n: CompensatedSum = (0..dim).map(|n| n as f64 * rho.get(n, n).re).collect();
        let mut a1 = Complex64::new(0.0, 0.0);
        let mut a2 = Complex64::new(0.0, 0.0);
        for n in 0..dim {
            if n + 1 < dim {
                a1 += ((n + 1) as f64).sqrt() * rho.get(n + 1, n);
            }
            if n + 2 < dim {
                a2 += (((n + 1) * (n + 2)) as f64).sqrt() * rho.get(n + 2, n);
            }
        }
        Self { mean_photons: n.value() / tr, a1: a1 / tr, a2: a2 / tr }
    }

    /// `ΔX_θ²` for `X_θ = (a e^{iθ} + a† e^{−iθ})/2`.
    pub fn variance(&self, theta: f64) -> f64 {
        let c = self.a2 - self.a1 * self.a1;
        let rot = Complex64::from_polar(1.0, 2.0 * theta);
        (2.0 * self.mean_photons + 1.0) / 4.0 - self.a1.norm_sqr() / 2.0 + (rot * c).re / 2.0
    }

    /// The quadrature angle in `[0, π)` of least variance and that variance.
    pub fn min_variance(&self) -> (f64, f64) {
        let c = self.a2 - self.a1 * self.a1;
        let var = (2.0 * self.mean_photons + 1.0) / 4.0 - self.a1.norm_sqr() / 2.0 - c.norm() / 2.0;
        let theta = if c.norm() == 0.0 { 0.0 } else { ((PI - c.arg()) / 2.0).rem_euclid(PI) };
        (theta, var)
    }
}

/// `ΔX_θ² = ⟨X_θ²⟩ − ⟨X_θ⟩²` from ladder-operator moments, with the same
/// quadrature convention as the homodyne outcome density.
pub fn quadrature_variance(rho: &DensityMatrix, theta: f64) -> f64 {
    QuadratureMoments::of(rho).variance(theta)
}

fn probe_moments(spec: &ProbeSpec, policy: &CutoffPolicy) -> Result<(QuadratureMoments, usize, f64)> {
    let cutoff = probe_cutoff(&spec.params()?, spec.epsilon_tail, policy.hard_limit)?;
    let (psi, rho) = dephased_probe(&spec.params()?, spec.delta, cutoff, spec.epsilon_tail)?;
    Ok((QuadratureMoments::of(&rho), cutoff, psi.tail_mass()))
}

/// `ΔX_θ²` over a (β, θ) grid at fixed energy and noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceMap {
    pub n_mean: f64,
    pub delta: f64,
    pub betas: Vec<f64>,
    pub thetas: Vec<f64>,
    /// `values[i][j]` is the variance at `betas[i]`, `thetas[j]`.
    pub values: Vec<Vec<f64>>,
    pub cutoffs: Vec<usize>,
    pub tail_masses: Vec<f64>,
    /// Indices `(i, j)` of the smallest entry.
    pub argmin: (usize, usize),
}

impl VarianceMap {
    pub fn argmin_beta(&self) -> f64 {
        self.betas[self.argmin.0]
    }

    pub fn argmin_theta(&self) -> f64 {
        self.thetas[self.argmin.1]
    }

    pub fn min(&self) -> f64 {
        self.values[self.argmin.0][self.argmin.1]
    }
}

pub fn variance_map(
    n_mean: f64,
    delta: f64,
    betas: &[f64],
    thetas: &[f64],
    policy: &CutoffPolicy,
) -> Result<VarianceMap> {
    if betas.is_empty() || thetas.is_empty() {
        return Err(domain("variance map needs non-empty beta and theta grids"));
    }
    let rows: Vec<_> = betas
        .par_iter()
        .map(|&beta| {
            let spec = ProbeSpec::new(n_mean, beta, delta)?.with_tail_tolerance(policy.epsilon_tail)?;
            let (m, cutoff, tail) = probe_moments(&spec, policy)?;
            Ok((thetas.iter().map(|&t| m.variance(t).max(0.0)).collect::<Vec<_>>(), cutoff, tail))
        })
        .collect::<Result<_>>()?;
    let mut argmin = (0, 0);
    let mut best = f64::INFINITY;
    for (i, (row, _, _)) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if v < best {
                best = v;
                argmin = (i, j);
            }
        }
    }
    let (values, cutoffs, tail_masses) = rows.into_iter().fold(
        (Vec::new(), Vec::new(), Vec::new()),
        |(mut v, mut c, mut t), (row, cutoff, tail)| {
            v.push(row);
            c.push(cutoff);
            t.push(tail);
            (v, c, t)
        },
    );
    Ok(VarianceMap {
        n_mean,
        delta,
        betas: betas.to_vec(),
        thetas: thetas.to_vec(),
        values,
        cutoffs,
        tail_masses,
        argmin,
    })
}

/// Which probe gives the smaller homodyne variance at the best quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseRegime {
    /// Squeezed vacuum (β = 1) wins.
    Squeezed,
    /// Coherent state (β = 0) wins.
    Coherent,
}

impl std::fmt::Display for NoiseRegime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Squeezed => "squeezed",
            Self::Coherent => "coherent",
        })
    }
}

pub fn noise_regime(n_mean: f64, delta: f64, policy: &CutoffPolicy) -> Result<NoiseRegime> {
    let best = |beta| -> Result<f64> {
        let spec = ProbeSpec::new(n_mean, beta, delta)?.with_tail_tolerance(policy.epsilon_tail)?;
        Ok(probe_moments(&spec, policy)?.0.min_variance().1)
    };
    Ok(if best(1.0)? < best(0.0)? { NoiseRegime::Squeezed } else { NoiseRegime::Coherent })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub n_mean: f64,
    /// Midpoint of the final bracket.
    pub delta_star: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Noise level `Δ*(N)` at which the minimum-variance probe switches from
/// squeezed vacuum to coherent, located by bisection to width `tol`.
pub fn noise_threshold(n_mean: f64, interval: (f64, f64), tol: f64, policy: &CutoffPolicy) -> Result<Threshold> {
    let (mut lo, mut hi) = interval;
    if !(lo >= 0.0 && lo < hi && tol > 0.0) {
        return Err(domain(format!("bad threshold search [{lo}, {hi}] with tol {tol}")));
    }
    let at_lo = noise_regime(n_mean, lo, policy)?;
    let at_hi = noise_regime(n_mean, hi, policy)?;
    if at_lo == at_hi {
        return Err(Error::NoCrossing { lo, hi, regime: at_lo.to_string() });
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if noise_regime(n_mean, mid, policy)? == at_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Threshold { n_mean, delta_star: 0.5 * (lo + hi), lo, hi })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{dephase, outer_product, NoiseParams};
    use crate::fock::{build_probe, FockVector, GaussianParams};
    use crate::homodyne::{homodyne_pdf, QuadratureGrid};

    #[test]
    fn vacuum_variance_is_a_quarter() {
        let rho = outer_product(&FockVector::vacuum(3));
        for t in [0.0, 0.4, 1.9] {
            assert!((quadrature_variance(&rho, t) - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn dephased_coherent_closed_form() {
        let alpha: f64 = 1.5;
        let psi = build_probe(&GaussianParams::new(alpha, 0.0).unwrap(), 60, 1e-12).unwrap();
        for delta in [0.0, 0.3, 1.0, 3.0] {
            let rho = dephase(&outer_product(&psi), &NoiseParams::new(delta).unwrap());
            let e = (-2.0 * delta * delta).exp();
            let expected = 0.25 + alpha * alpha / 2.0 * (1.0 - e) * (1.0 - e);
            assert!((quadrature_variance(&rho, 0.0) - expected).abs() < 1e-8, "delta={delta}");
        }
    }

    #[test]
    fn squeezed_vacuum_minimum() {
        let r: f64 = 0.8;
        let psi = build_probe(&GaussianParams::new(0.0, r).unwrap(), 120, 1e-12).unwrap();
        let (_, v) = QuadratureMoments::of(&outer_product(&psi)).min_variance();
        assert!((v - (-2.0 * r).exp() / 4.0).abs() < 1e-8);
    }

    #[test]
    fn min_variance_angle_is_the_minimum() {
        let psi = build_probe(&GaussianParams::new(0.7, -0.5).unwrap(), 80, 1e-12).unwrap();
        let m = QuadratureMoments::of(&outer_product(&psi));
        let (theta, v) = m.min_variance();
        assert!((m.variance(theta) - v).abs() < 1e-14);
        for j in 0..100 {
            assert!(m.variance(j as f64 * PI / 100.0) >= v - 1e-14);
        }
    }

    #[test]
    fn moments_agree_with_outcome_density() {
        let psi = build_probe(&GaussianParams::new(1.1, -0.4).unwrap(), 80, 1e-12).unwrap();
        let rho = dephase(&outer_product(&psi), &NoiseParams::new(0.3).unwrap());
        let grid = QuadratureGrid::covering(2.0, 80);
        for theta in [0.0, 0.6, PI / 2.0] {
            let p = homodyne_pdf(&rho, theta, &grid).unwrap();
            let x: Vec<f64> = grid.points().iter().zip(&p).map(|(x, p)| x * p).collect();
            let x2: Vec<f64> = grid.points().iter().zip(&p).map(|(x, p)| x * x * p).collect();
            let mean = grid.integrate(&x);
            let grid_var = grid.integrate(&x2) - mean * mean;
            assert!((grid_var - quadrature_variance(&rho, theta)).abs() < 1e-7, "theta={theta}");
        }
    }

    #[test]
    fn regimes_at_low_and_high_noise() {
        let policy = CutoffPolicy::default();
        let thetas: Vec<f64> = (0..60).map(|j| j as f64 * PI / 60.0).collect();
        let betas: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let low = variance_map(10.0, 0.1, &betas, &thetas, &policy).unwrap();
        assert_eq!(low.argmin_beta(), 1.0);
        assert!((low.argmin_theta() - PI / 2.0).abs() < 1e-12);
        let high = variance_map(10.0, 0.6, &betas, &thetas, &policy).unwrap();
        assert_eq!(high.argmin_beta(), 0.0);
        assert_eq!(high.argmin_theta(), 0.0);
    }

    #[test]
    fn threshold_bracket() {
        let policy = CutoffPolicy::default();
        let t = noise_threshold(10.0, (0.1, 0.6), 1e-3, &policy).unwrap();
        assert!(t.hi - t.lo <= 1e-3);
        assert!(t.delta_star > 0.1 && t.delta_star < 0.6);
        assert!(matches!(
            noise_threshold(10.0, (0.1, 0.105), 1e-3, &policy),
            Err(Error::NoCrossing { .. })
        ));
    }
}
