use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{oscillator_wavefunctions, QuadratureGrid, WavefunctionTable};
use crate::channel::DensityMatrix;
use crate::error::{Error, Result};
use crate::fock::{probe_cutoff, CutoffPolicy, ProbeSpec};
use crate::numeric::{golden_section_max, CompensatedSum};
use crate::qfi::dephased_probe;

/// Largest accepted `|Σ w p − Tr ρ|`.
pub const COVERAGE_TOLERANCE: f64 = 1e-6;
/// Points with `p < PROBABILITY_FLOOR · max p` are left out of the Fisher sum.
pub const PROBABILITY_FLOOR: f64 = 1e-14;
/// Relative size of negative probabilities clamped to zero.
pub const NEGATIVITY_TOLERANCE: f64 = 1e-12;

/// Homodyne Fisher information at one evaluation point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FisherResult {
    #[serde(rename = "F")]
    pub f: f64,
    pub phi0: f64,
    pub theta: f64,
    pub cutoff: usize,
    pub tail_mass: f64,
}

/// The band sums `g_d(x) = Σ_m ρ_{m+d,m} ψ_{m+d}(x) ψ_m(x)`.
///
/// For a rotation angle `ψ` the outcome density is
/// `p(x) = Σ_d c_d Re(e^{−iψd} g_d(x))` with `c_0 = 1`, `c_{d>0} = 2`, so the
/// expensive contraction with the wavefunction table happens once per state.
#[derive(Debug, Clone)]
pub struct BandProfile {
    n_points: usize,
    // (band index, real part, imaginary part if any)
    bands: Vec<(usize, Vec<f64>, Option<Vec<f64>>)>,
    trace: f64,
}

impl BandProfile {
    pub fn new(rho: &DensityMatrix, table: &WavefunctionTable) -> Result<Self> {
        if table.dim() < rho.dim() {
            return Err(Error::Domain(format!(
                "wavefunction table has {} levels, state needs {}",
                table.dim(),
                rho.dim()
            )));
        }
        let n_points = table.n_points();
        let dim = rho.dim();
        let bands = (0..dim)
            .into_par_iter()
            .filter_map(|d| {
                let entries: Vec<_> = (0..dim - d).map(|m| rho.get(m + d, m)).collect();
                if entries.iter().all(|z| z.re == 0.0 && z.im == 0.0) {
                    return None;
                }
                let complex = entries.iter().any(|z| z.im != 0.0);
                let mut re = vec![0.0; n_points];
                let mut im = if complex { Some(vec![0.0; n_points]) } else { None };
                for (m, z) in entries.iter().enumerate() {
                    if z.re == 0.0 && z.im == 0.0 {
                        continue;
                    }
                    let (upper, lower) = (table.level(m + d), table.level(m));
                    for k in 0..n_points {
                        re[k] += z.re * upper[k] * lower[k];
                    }
                    if let Some(im) = im.as_mut() {
                        for k in 0..n_points {
                            im[k] += z.im * upper[k] * lower[k];
                        }
                    }
                }
                Some((d, re, im))
            })
            .collect();
        Ok(Self { n_points, bands, trace: rho.trace() })
    }

    pub fn trace(&self) -> f64 {
        self.trace
    }

    /// Integrates consecutive runs of `group` points into cells, so that
    /// the density becomes the probability of each cell.
    pub(crate) fn collapse(&self, weights: &[f64], group: usize) -> BandProfile {
        let n_cells = self.n_points / group;
        let sum_cells = |v: &[f64]| -> Vec<f64> {
            (0..n_cells)
                .map(|c| (c * group..(c + 1) * group).map(|k| weights[k] * v[k]).sum())
                .collect()
        };
        let bands = self
            .bands
            .iter()
            .map(|(d, re, im)| (*d, sum_cells(re), im.as_deref().map(sum_cells)))
            .collect();
        BandProfile { n_points: n_cells, bands, trace: self.trace }
    }

    /// Restriction to the listed points.
    pub(crate) fn select(&self, points: &[usize]) -> BandProfile {
        let pick = |v: &[f64]| points.iter().map(|&k| v[k]).collect::<Vec<_>>();
        let bands = self
            .bands
            .iter()
            .map(|(d, re, im)| (*d, pick(re), im.as_deref().map(pick)))
            .collect();
        BandProfile { n_points: points.len(), bands, trace: self.trace }
    }

    /// Outcome density and its derivative with respect to the rotation angle.
    pub fn density_and_derivative(&self, psi: f64) -> (Vec<f64>, Vec<f64>) {
        let mut p = vec![0.0; self.n_points];
        let mut dp = vec![0.0; self.n_points];
        for (d, re, im) in &self.bands {
            let c = if *d == 0 { 1.0 } else { 2.0 };
            let df = *d as f64;
            let (s, co) = (psi * df).sin_cos();
            for k in 0..self.n_points {
                p[k] += c * co * re[k];
                dp[k] -= c * df * s * re[k];
            }
            if let Some(im) = im {
                for k in 0..self.n_points {
                    p[k] += c * s * im[k];
                    dp[k] += c * df * co * im[k];
                }
            }
        }
        (p, dp)
    }
}

fn check_density(p: &mut [f64], grid: &QuadratureGrid, trace: f64) -> Result<f64> {
    let max_p = p.iter().cloned().fold(0.0, f64::max);
    let floor = -NEGATIVITY_TOLERANCE * max_p.max(1.0);
    for v in p.iter_mut() {
        if *v < 0.0 {
            if *v < floor {
                return Err(Error::Range(format!("negative outcome density {v:e}")));
            }
            *v = 0.0;
        }
    }
    let deficit = trace - grid.integrate(p);
    if deficit.abs() > COVERAGE_TOLERANCE {
        return Err(Error::GridCoverage { deficit });
    }
    Ok(max_p)
}

/// Outcome density of `X_θ` on the grid points.
///
/// The local-oscillator phase enters as the band phase `e^{iθ(n−m)}` applied to
/// `ρ`, which amounts to measuring `X_θ = (a e^{iθ} + a† e^{−iθ})/2`.
pub fn homodyne_pdf(rho: &DensityMatrix, theta: f64, grid: &QuadratureGrid) -> Result<Vec<f64>> {
    let table = oscillator_wavefunctions(grid, rho.n_max())?;
    let profile = BandProfile::new(rho, &table)?;
    let (mut p, _) = profile.density_and_derivative(-theta);
    check_density(&mut p, grid, profile.trace())?;
    Ok(p)
}

/// A dephased probe prepared for repeated homodyne evaluations.
///
/// The state is `N_Δ(|ψ⟩⟨ψ|)` before the phase shift; the shift `φ` and the
/// oscillator phase `θ` enter only through `φ − θ`.
#[derive(Debug, Clone)]
pub struct HomodyneSetup {
    grid: QuadratureGrid,
    profile: BandProfile,
    rho: DensityMatrix,
    n_mean: f64,
    cutoff: usize,
    tail_mass: f64,
}

impl HomodyneSetup {
    /// Probe at its own cutoff on the covering grid.
    pub fn for_probe(spec: &ProbeSpec, policy: &CutoffPolicy) -> Result<Self> {
        spec.validate()?;
        let cutoff = probe_cutoff(&spec.params()?, spec.epsilon_tail, policy.hard_limit)?;
        Self::build(spec, cutoff, QuadratureGrid::covering(spec.n_mean, cutoff))
    }

    /// Probe at its own cutoff on a caller-supplied grid.
    pub fn with_grid(spec: &ProbeSpec, grid: QuadratureGrid, policy: &CutoffPolicy) -> Result<Self> {
        spec.validate()?;
        let cutoff = probe_cutoff(&spec.params()?, spec.epsilon_tail, policy.hard_limit)?;
        Self::build(spec, cutoff, grid)
    }

    fn build(spec: &ProbeSpec, cutoff: usize, grid: QuadratureGrid) -> Result<Self> {
        let (psi, rho) = dephased_probe(&spec.params()?, spec.delta, cutoff, spec.epsilon_tail)?;
        let table = oscillator_wavefunctions(&grid, cutoff)?;
        let profile = BandProfile::new(&rho, &table)?;
        Ok(Self { grid, profile, rho, n_mean: spec.n_mean, cutoff, tail_mass: psi.tail_mass() })
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    pub fn profile(&self) -> &BandProfile {
        &self.profile
    }

    /// The dephased, unshifted state.
    pub fn state(&self) -> &DensityMatrix {
        &self.rho
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    /// `p(x_k | φ)` for oscillator phase `θ`.
    pub fn pdf(&self, phi: f64, theta: f64) -> Result<Vec<f64>> {
        Ok(self.pdf_and_derivative(phi, theta)?.0)
    }

    /// `p(x_k | φ)` and `∂_φ p(x_k | φ)`.
    pub fn pdf_and_derivative(&self, phi: f64, theta: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let (mut p, dp) = self.profile.density_and_derivative(phi - theta);
        check_density(&mut p, &self.grid, self.profile.trace())?;
        Ok((p, dp))
    }

    /// `F = Σ_k w_k (∂_φ p)² / p` at `φ = phi0`.
    pub fn fisher(&self, phi0: f64, theta: f64) -> Result<f64> {
        let (mut p, dp) = self.profile.density_and_derivative(phi0 - theta);
        let max_p = check_density(&mut p, &self.grid, self.profile.trace())?;
        let cut = PROBABILITY_FLOOR * max_p;
        let f: CompensatedSum = p
            .iter()
            .zip(&dp)
            .zip(self.grid.weights())
            .filter(|((p, _), _)| **p > cut && **p > 0.0)
            .map(|((p, dp), w)| w * dp * dp / p)
            .collect();
        Ok(f.value())
    }

    fn result(&self, f: f64, phi0: f64, theta: f64) -> FisherResult {
        FisherResult { f, phi0, theta, cutoff: self.cutoff, tail_mass: self.tail_mass }
    }

    /// Fisher information maximized over the shift `φ0` at fixed `θ`.
    ///
    /// `F` has period π in `φ0 − θ`, so a coarse scan over one period locates the
    /// peak and golden-section search refines it.
    pub fn max_fisher(&self, theta: f64) -> Result<FisherResult> {
        let n_coarse = (64 + 16 * self.n_mean.ceil() as usize).min(512);
        let step = PI / n_coarse as f64;
        let coarse: Vec<f64> = (0..n_coarse)
            .into_par_iter()
            .map(|j| self.fisher(theta + j as f64 * step, theta))
            .collect::<Result<_>>()?;
        let (best, &f_best) = coarse
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty scan");
        let centre = theta + best as f64 * step;
        let (phi, f) = golden_section_max(|phi| self.fisher(phi, theta), centre - step, centre + step, 1e-10)?;
        Ok(if f >= f_best { self.result(f, phi, theta) } else { self.result(f_best, centre, theta) })
    }
}

/// Homodyne Fisher information of the dephased probe at shift `phi0`.
pub fn homodyne_fisher(spec: &ProbeSpec, phi0: f64, theta: f64, grid: &QuadratureGrid) -> Result<FisherResult> {
    let setup = HomodyneSetup::with_grid(spec, grid.clone(), &CutoffPolicy::default())?;
    let f = setup.fisher(phi0, theta)?;
    Ok(setup.result(f, phi0, theta))
}

/// Homodyne Fisher information maximized over the shift, on the covering grid.
pub fn max_homodyne_fisher(spec: &ProbeSpec, theta: f64, policy: &CutoffPolicy) -> Result<FisherResult> {
    HomodyneSetup::for_probe(spec, policy)?.max_fisher(theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{dephase, outer_product, NoiseParams};
    use crate::fock::{build_probe, FockVector, GaussianParams};

    fn moments(grid: &QuadratureGrid, p: &[f64]) -> (f64, f64) {
        let mean = grid.integrate(&grid.points().iter().zip(p).map(|(x, p)| x * p).collect::<Vec<_>>());
        let m2 = grid.integrate(&grid.points().iter().zip(p).map(|(x, p)| x * x * p).collect::<Vec<_>>());
        (mean, m2 - mean * mean)
    }

    #[test]
    fn vacuum_pdf_is_gaussian() {
        let rho = outer_product(&FockVector::vacuum(6));
        let grid = QuadratureGrid::covering(0.0, 6);
        for theta in [0.0, 0.7, 2.0] {
            let p = homodyne_pdf(&rho, theta, &grid).unwrap();
            for (x, p) in grid.points().iter().zip(&p) {
                let expected = (2.0 / PI).sqrt() * (-2.0 * x * x).exp();
                assert!((p - expected).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn coherent_pdf_is_displaced() {
        let alpha = 1.3;
        let psi = build_probe(&GaussianParams::new(alpha, 0.0).unwrap(), 40, 1e-12).unwrap();
        let grid = QuadratureGrid::covering(alpha * alpha, 40);
        let p = homodyne_pdf(&outer_product(&psi), 0.0, &grid).unwrap();
        let (mean, var) = moments(&grid, &p);
        assert!((mean - alpha).abs() < 1e-9);
        assert!((var - 0.25).abs() < 1e-9);
        for (x, p) in grid.points().iter().zip(&p) {
            let expected = (2.0 / PI).sqrt() * (-2.0 * (x - alpha).powi(2)).exp();
            assert!((p - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn diagonal_state_pdf_is_phase_invariant() {
        let psi = build_probe(&GaussianParams::new(1.0, 0.0).unwrap(), 30, 1e-10).unwrap();
        let rho = dephase(&outer_product(&psi), &NoiseParams::new(10.0).unwrap());
        let grid = QuadratureGrid::covering(1.0, 30);
        let a = homodyne_pdf(&rho, 0.3, &grid).unwrap();
        let b = homodyne_pdf(&rho, 0.3 + PI / 2.0, &grid).unwrap();
        assert!(a.iter().zip(&b).all(|(a, b)| (a - b).abs() < 1e-10));
    }

    #[test]
    fn narrow_grid_is_a_coverage_error() {
        let psi = build_probe(&GaussianParams::new(3.0, 0.0).unwrap(), 60, 1e-10).unwrap();
        let grid = QuadratureGrid::gauss_legendre(-1.0, 1.0, 20, 16).unwrap();
        assert!(matches!(
            homodyne_pdf(&outer_product(&psi), 0.0, &grid),
            Err(Error::GridCoverage { .. })
        ));
    }

    #[test]
    fn squeezed_vacuum_reaches_the_quantum_limit() {
        let spec = ProbeSpec::new(2.0, 1.0, 0.0).unwrap();
        let best = max_homodyne_fisher(&spec, 0.0, &CutoffPolicy::default()).unwrap();
        assert!((best.f - 48.0).abs() < 0.48, "{}", best.f);
    }

    #[test]
    fn dephased_state_carries_no_information() {
        let spec = ProbeSpec::new(2.0, 0.5, 6.0).unwrap();
        let best = max_homodyne_fisher(&spec, 0.0, &CutoffPolicy::default()).unwrap();
        assert!(best.f <= 1e-6);
    }

    #[test]
    fn derivative_matches_central_difference() {
        let spec = ProbeSpec::new(3.0, 0.4, 0.3).unwrap();
        let setup = HomodyneSetup::for_probe(&spec, &CutoffPolicy::default()).unwrap();
        let (phi, theta, h) = (0.4, 0.1, 1e-5);
        let (_, dp) = setup.pdf_and_derivative(phi, theta).unwrap();
        let plus = setup.pdf(phi + h, theta).unwrap();
        let minus = setup.pdf(phi - h, theta).unwrap();
        for k in 0..dp.len() {
            let fd = (plus[k] - minus[k]) / (2.0 * h);
            assert!((fd - dp[k]).abs() < 1e-7, "k={k}");
        }
    }

    #[test]
    fn shift_and_oscillator_phase_co_rotate() {
        let spec = ProbeSpec::new(3.0, 0.6, 0.2).unwrap();
        let grid = QuadratureGrid::covering(3.0, 120);
        let a = homodyne_fisher(&spec, 0.5, 0.2, &grid).unwrap();
        let b = homodyne_fisher(&spec, 0.5 + 0.9, 0.2 + 0.9, &grid).unwrap();
        assert!((a.f - b.f).abs() <= 1e-3 * a.f);
    }
}
