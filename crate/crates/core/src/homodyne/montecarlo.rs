//! Maximum-likelihood phase estimation from simulated homodyne data.
//!
//! Outcomes are binned into cells much narrower than the quadrature width;
//! cell probabilities `P_c(φ)` come from the same band decomposition as the
//! outcome density, integrated over each cell, so the likelihood of a batch is
//! exact for the binned data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fisher::{BandProfile, HomodyneSetup};
use super::grid::{covering_half_width, oscillator_wavefunctions, QuadratureGrid};
use super::variance::QuadratureMoments;
use crate::error::{domain, Error, Result};
use crate::fock::{CutoffPolicy, ProbeSpec};
use crate::numeric::{golden_section_max, CompensatedSum};

/// Cells per standard deviation of the narrowest quadrature.
const CELLS_PER_SIGMA: f64 = 50.0;
const MAX_CELLS: usize = 50_000;
const NODES_PER_CELL: usize = 4;
const COARSE_POINTS: usize = 41;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    /// Outcomes per batch, M.
    pub samples: usize,
    pub batches: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloResult {
    pub phi_true: f64,
    pub theta: f64,
    pub samples: usize,
    pub batches: usize,
    pub seed: u64,
    /// One maximum-likelihood estimate per batch.
    pub estimates: Vec<f64>,
    pub mean: f64,
    /// Sample variance of the estimates.
    pub variance: f64,
    /// Standard error of `variance` for Gaussian estimates, `var · √(2/(B−1))`.
    pub variance_se: f64,
    /// Homodyne Fisher information at `phi_true`.
    pub fisher: f64,
    /// `1 / (M F)`
    pub crb: f64,
    pub cutoff: usize,
    pub tail_mass: f64,
}

struct CellModel {
    profile: BandProfile,
}

impl CellModel {
    fn new(setup: &HomodyneSetup, n_mean: f64) -> Result<Self> {
        let (_, min_var) = QuadratureMoments::of(setup.state()).min_variance();
        let sigma = min_var.max(1e-12).sqrt();
        let half_width = covering_half_width(n_mean, setup.cutoff());
        let n_cells = ((2.0 * half_width * CELLS_PER_SIGMA / sigma).ceil() as usize).min(MAX_CELLS);
        let fine = QuadratureGrid::gauss_legendre(-half_width, half_width, n_cells, NODES_PER_CELL)?;
        let table = oscillator_wavefunctions(&fine, setup.cutoff())?;
        let profile = BandProfile::new(setup.state(), &table)?.collapse(fine.weights(), NODES_PER_CELL);
        Ok(Self { profile })
    }

    fn cumulative(&self, psi: f64) -> Vec<f64> {
        let (p, _) = self.profile.density_and_derivative(psi);
        let mut acc = CompensatedSum::new();
        p.into_iter()
            .map(|v| {
                acc.add(v.max(0.0));
                acc.value()
            })
            .collect()
    }
}

fn log_likelihood(profile: &BandProfile, counts: &[f64], psi: f64) -> f64 {
    let (p, _) = profile.density_and_derivative(psi);
    p.iter()
        .zip(counts)
        .map(|(p, n)| n * p.max(1e-300).ln())
        .collect::<CompensatedSum>()
        .value()
}

fn estimate(profile: &BandProfile, counts: &[f64], centre: f64, half_window: f64, tol: f64) -> Result<f64> {
    let step = 2.0 * half_window / (COARSE_POINTS - 1) as f64;
    let scan: Vec<f64> = (0..COARSE_POINTS)
        .map(|j| log_likelihood(profile, counts, centre - half_window + j as f64 * step))
        .collect();
    let (best, &l_best) = scan.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("non-empty");
    let l_worst = scan.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(l_best - l_worst > 1e-9) {
        return Err(Error::Estimation("likelihood is flat over the search window".into()));
    }
    let at = centre - half_window + best as f64 * step;
    let (phi, l) = golden_section_max::<_, Error>(
        |phi| Ok(log_likelihood(profile, counts, phi)),
        at - step,
        at + step,
        tol,
    )?;
    Ok(if l >= l_best { phi } else { at })
}

/// Simulates `batches` runs of `samples` homodyne outcomes at the true shift
/// `phi_true` and estimates the shift by maximum likelihood in each run.
///
/// Batch `b` draws from `ChaCha8` seeded with `seed` on stream `b`, so the
/// result does not depend on how batches are scheduled.
pub fn sample_and_estimate(
    spec: &ProbeSpec,
    phi_true: f64,
    theta: f64,
    config: &MonteCarloConfig,
    policy: &CutoffPolicy,
) -> Result<MonteCarloResult> {
    if config.samples < 100 {
        return Err(domain(format!("need at least 100 samples per batch, got {}", config.samples)));
    }
    if config.batches < 2 {
        return Err(domain("need at least two batches for a variance"));
    }
    let setup = HomodyneSetup::for_probe(spec, policy)?;
    let fisher = setup.fisher(phi_true, theta)?;
    if !(fisher > 1e-8) {
        return Err(Error::Estimation(format!("outcome density does not depend on the phase (F = {fisher:e})")));
    }
    let m = config.samples as f64;
    let sd = 1.0 / (m * fisher).sqrt();
    let half_window = std::f64::consts::FRAC_PI_4.min(8.0 * sd);
    let tol = 1e-4 * sd;

    let model = CellModel::new(&setup, spec.n_mean)?;
    let cdf = model.cumulative(phi_true - theta);
    let total = *cdf.last().expect("non-empty");

    let estimates: Vec<f64> = (0..config.batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(b as u64);
            let mut counts = vec![0u32; cdf.len()];
            for _ in 0..config.samples {
                let u = rng.random::<f64>() * total;
                let cell = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
                counts[cell] += 1;
            }
            let occupied: Vec<usize> = (0..counts.len()).filter(|&c| counts[c] > 0).collect();
            let weights: Vec<f64> = occupied.iter().map(|&c| counts[c] as f64).collect();
            let sub = model.profile.select(&occupied);
            Ok(estimate(&sub, &weights, phi_true - theta, half_window, tol)? + theta)
        })
        .collect::<Result<_>>()?;

    let b = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / b;
    let variance = estimates.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (b - 1.0);
    Ok(MonteCarloResult {
        phi_true,
        theta,
        samples: config.samples,
        batches: config.batches,
        seed: config.seed,
        mean,
        variance,
        variance_se: variance * (2.0 / (b - 1.0)).sqrt(),
        estimates,
        fisher,
        crb: 1.0 / (m * fisher),
        cutoff: setup.cutoff(),
        tail_mass: setup.tail_mass(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dephased_probe_cannot_be_estimated() {
        let spec = ProbeSpec::new(2.0, 0.0, 6.0).unwrap();
        let cfg = MonteCarloConfig { samples: 1000, batches: 4, seed: 1 };
        assert!(matches!(
            sample_and_estimate(&spec, 1.0, 0.0, &cfg, &CutoffPolicy::default()),
            Err(Error::Estimation(_))
        ));
    }

    #[test]
    fn too_few_samples_rejected() {
        let spec = ProbeSpec::new(2.0, 0.0, 0.1).unwrap();
        let cfg = MonteCarloConfig { samples: 10, batches: 4, seed: 1 };
        assert!(sample_and_estimate(&spec, 1.0, 0.0, &cfg, &CutoffPolicy::default()).is_err());
    }

    #[test]
    fn estimates_are_reproducible_and_near_the_truth() {
        let spec = ProbeSpec::new(2.0, 0.0, 0.1).unwrap();
        let cfg = MonteCarloConfig { samples: 2000, batches: 8, seed: 7 };
        let policy = CutoffPolicy::default();
        let a = sample_and_estimate(&spec, 1.5, 0.0, &cfg, &policy).unwrap();
        let b = sample_and_estimate(&spec, 1.5, 0.0, &cfg, &policy).unwrap();
        assert_eq!(a.estimates, b.estimates);
        for e in &a.estimates {
            assert!((e - 1.5).abs() < 6.0 * a.crb.sqrt());
        }
    }
}
