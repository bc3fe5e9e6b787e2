//! Truncated Fock-space representation of pure single-mode Gaussian probes.
//!
//! A probe is `D(α) S(r) |0⟩` with `S(r) = exp{(r/2)(a² − a†²)}` and
//! `D(α) = exp{α(a† − a)}`, both parameters real. Amplitudes are produced by
//! the three-term recurrence obtained from the annihilator of the state,
//!
//! ```text
//! cosh r √(n+1) c_{n+1} = α e^r c_n − sinh r √n c_{n−1},
//! c_0 = exp(−α²(1 + tanh r)/2) / √cosh r,
//! ```
//!
//! which stays finite at cutoffs where Hermite-polynomial closed forms overflow.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::numeric::CompensatedSum;

pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_CUTOFF_LIMIT: usize = 4096;

/// Real displacement and squeezing of `D(α) S(r) |0⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub alpha: f64,
    pub r: f64,
}

impl GaussianParams {
    pub fn new(alpha: f64, r: f64) -> Result<Self> {
        if !alpha.is_finite() || !r.is_finite() {
            return Err(domain(format!("non-finite probe parameters alpha={alpha}, r={r}")));
        }
        Ok(Self { alpha, r })
    }

    /// `sinh² r + α²`
    pub fn mean_photons(&self) -> f64 {
        self.r.sinh().powi(2) + self.alpha * self.alpha
    }
}

/// Tail tolerance and hard limit used when a cutoff is chosen automatically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffPolicy {
    pub epsilon_tail: f64,
    pub hard_limit: usize,
}

impl Default for CutoffPolicy {
    fn default() -> Self {
        Self { epsilon_tail: DEFAULT_TAIL_TOLERANCE, hard_limit: DEFAULT_CUTOFF_LIMIT }
    }
}

/// A probe described by its energy budget and the noise it will meet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    /// Mean photon number N.
    pub n_mean: f64,
    /// Fraction of N spent on squeezing, `sinh² r / N`.
    pub beta: f64,
    /// Phase-diffusion amplitude Δ.
    pub delta: f64,
    pub epsilon_tail: f64,
}

impl ProbeSpec {
    pub fn new(n_mean: f64, beta: f64, delta: f64) -> Result<Self> {
        let spec = Self { n_mean, beta, delta, epsilon_tail: DEFAULT_TAIL_TOLERANCE };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_tail_tolerance(mut self, epsilon_tail: f64) -> Result<Self> {
        self.epsilon_tail = epsilon_tail;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        check_energy(self.n_mean, self.beta)?;
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return Err(domain(format!("noise amplitude must be finite and >= 0, got {}", self.delta)));
        }
        if !(self.epsilon_tail > 0.0 && self.epsilon_tail < 1.0) {
            return Err(domain(format!("tail tolerance must lie in (0, 1), got {}", self.epsilon_tail)));
        }
        Ok(())
    }

    pub fn params(&self) -> Result<GaussianParams> {
        params_from_energy(self.n_mean, self.beta)
    }
}

fn check_energy(n_mean: f64, beta: f64) -> Result<()> {
    if !(n_mean.is_finite() && n_mean >= 0.0) {
        return Err(domain(format!("mean photon number must be finite and >= 0, got {n_mean}")));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(domain(format!("squeezing fraction must lie in [0, 1], got {beta}")));
    }
    Ok(())
}

/// Fock amplitudes of a probe, truncated at `n_max`.
///
/// The vector is not renormalized; `tail_mass` is the weight lost beyond the
/// cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct FockVector {
    amplitudes: Vec<Complex64>,
    tail_mass: f64,
}

impl FockVector {
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(domain("a Fock vector needs at least one amplitude"));
        }
        let norm: CompensatedSum = amplitudes.iter().map(|c| c.norm_sqr()).collect();
        let tail_mass = (1.0 - norm.value()).max(0.0);
        Ok(Self { amplitudes, tail_mass })
    }

    pub fn vacuum(n_max: usize) -> Self {
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); n_max + 1];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Self { amplitudes, tail_mass: 0.0 }
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn n_max(&self) -> usize {
        self.amplitudes.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes
            .iter()
            .map(|c| c.norm_sqr())
            .collect::<CompensatedSum>()
            .value()
    }
}

/// Inverts `N = sinh² r + α²`, `β = sinh² r / N`.
///
/// The squeezing parameter is returned on the negative branch,
/// `r = −asinh √(βN)`, so the squeezed quadrature is orthogonal to the real
/// displacement (phase squeezing). For β = 1 that is the `θ = π/2` quadrature.
pub fn params_from_energy(n_mean: f64, beta: f64) -> Result<GaussianParams> {
    check_energy(n_mean, beta)?;
    let alpha = ((1.0 - beta) * n_mean).max(0.0).sqrt();
    let r = -(beta * n_mean).sqrt().asinh();
    GaussianParams::new(alpha, r)
}

// Rescale the recurrence whenever an amplitude leaves this magnitude.
const RESCALE: f64 = 1e150;

fn real_amplitudes(params: &GaussianParams, n_max: usize) -> Vec<f64> {
    let GaussianParams { alpha, r } = *params;
    let (sh, ch) = (r.sinh(), r.cosh());
    let drive = alpha * r.exp();
    let log_c0 = -0.5 * alpha * alpha * (1.0 + r.tanh()) - 0.5 * ch.ln();

    let mut v = vec![0.0; n_max + 1];
    v[0] = 1.0;
    let mut shift = 0.0;
    for n in 0..n_max {
        let prev = if n > 0 { v[n - 1] } else { 0.0 };
        let next = (drive * v[n] - sh * (n as f64).sqrt() * prev) / (ch * ((n + 1) as f64).sqrt());
        v[n + 1] = next;
        if next.abs() > RESCALE {
            for x in &mut v[..=n + 1] {
                *x /= RESCALE;
            }
            shift += RESCALE.ln();
        }
    }

    let factor = (shift + log_c0).exp();
    if factor.is_finite() && factor > 0.0 {
        v.iter_mut().for_each(|x| *x *= factor);
    } else {
        for x in &mut v {
            if *x != 0.0 {
                *x = x.signum() * (x.abs().ln() + shift + log_c0).exp();
            }
        }
    }
    v
}

/// Tail mass `1 − Σ_{n ≤ k} |c_n|²` for every prefix `k`.
fn prefix_tails(amps: &[f64]) -> Vec<f64> {
    let mut acc = CompensatedSum::new();
    amps.iter()
        .map(|c| {
            acc.add(c * c);
            (1.0 - acc.value()).max(0.0)
        })
        .collect()
}

/// Amplitudes of `D(α) S(r) |0⟩` for `n = 0..=n_max`.
pub fn build_probe(params: &GaussianParams, n_max: usize, epsilon_tail: f64) -> Result<FockVector> {
    let amps = real_amplitudes(params, n_max);
    let tail = *prefix_tails(&amps).last().expect("non-empty");
    if tail > epsilon_tail {
        return Err(Error::Truncation { tail, n_max, tolerance: epsilon_tail });
    }
    Ok(FockVector {
        amplitudes: amps.into_iter().map(|c| Complex64::new(c, 0.0)).collect(),
        tail_mass: tail,
    })
}

/// `Σ n |c_n|²`
pub fn mean_photon(psi: &FockVector) -> f64 {
    psi.amplitudes
        .iter()
        .enumerate()
        .map(|(n, c)| n as f64 * c.norm_sqr())
        .collect::<CompensatedSum>()
        .value()
}

fn heuristic_cutoff(n_mean: f64) -> usize {
    (n_mean + 10.0 * (n_mean + 1.0).sqrt() + 20.0).ceil() as usize
}

/// Smallest cutoff whose Fock tail for this particular probe is below
/// `epsilon_tail`.
pub fn probe_cutoff(params: &GaussianParams, epsilon_tail: f64, hard_limit: usize) -> Result<usize> {
    if !(epsilon_tail > 0.0 && epsilon_tail < 1.0) {
        return Err(domain(format!("tail tolerance must lie in (0, 1), got {epsilon_tail}")));
    }
    let mut n_max = heuristic_cutoff(params.mean_photons()).min(hard_limit);
    let tails = loop {
        let tails = prefix_tails(&real_amplitudes(params, n_max));
        if *tails.last().expect("non-empty") < epsilon_tail {
            break tails;
        }
        if n_max >= hard_limit {
            return Err(Error::Resource { required: 2 * n_max, limit: hard_limit });
        }
        n_max = (2 * n_max).min(hard_limit);
    };
    let mut smallest = tails.iter().position(|&t| t < epsilon_tail).expect("last prefix passes");
    // The shorter recurrence may differ from the long one in the last ulp.
    while build_probe(params, smallest, epsilon_tail).is_err() {
        smallest += 1;
    }
    Ok(smallest)
}

/// Cutoff for an energy budget `N`, valid for every squeezing fraction.
///
/// Phase diffusion leaves the photon-number distribution untouched, so the
/// noise amplitude only has to be a valid Δ; the tail is taken as the worst case
/// over β ∈ {0, 0.1, …, 1}.
pub fn choose_cutoff(n_mean: f64, delta: f64, epsilon_tail: f64, hard_limit: usize) -> Result<usize> {
    check_energy(n_mean, 0.0)?;
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(domain(format!("noise amplitude must be finite and >= 0, got {delta}")));
    }
    let mut worst = 0;
    for i in 0..=10 {
        let params = params_from_energy(n_mean, i as f64 / 10.0)?;
        worst = worst.max(probe_cutoff(&params, epsilon_tail, hard_limit)?);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_from_energy_inverts_the_parametrization() {
        let p = params_from_energy(0.0, 0.0).unwrap();
        assert_eq!((p.alpha, p.r), (0.0, 0.0));

        let p = params_from_energy(5.0, 1.0).unwrap();
        assert_eq!(p.alpha, 0.0);
        assert_eq!(p.r.abs(), 5f64.sqrt().asinh());

        let p = params_from_energy(10.0, 0.5).unwrap();
        assert!((p.alpha - 5f64.sqrt()).abs() < 1e-15);
        assert!((p.r.abs() - 5f64.sqrt().asinh()).abs() < 1e-15);

        for &(n, b) in &[(0.3, 0.2), (7.0, 0.9), (30.0, 0.01)] {
            let p = params_from_energy(n, b).unwrap();
            assert!((p.mean_photons() - n).abs() <= 1e-12 * n);
        }
    }

    #[test]
    fn params_from_energy_rejects_bad_inputs() {
        assert!(matches!(params_from_energy(-1.0, 0.5), Err(Error::Domain(_))));
        assert!(matches!(params_from_energy(1.0, 1.5), Err(Error::Domain(_))));
        assert!(matches!(params_from_energy(1.0, -0.1), Err(Error::Domain(_))));
        assert!(matches!(params_from_energy(f64::NAN, 0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn vacuum_probe() {
        let psi = build_probe(&GaussianParams::new(0.0, 0.0).unwrap(), 8, 1e-10).unwrap();
        assert_eq!(psi.amplitudes()[0], Complex64::new(1.0, 0.0));
        assert!(psi.amplitudes()[1..].iter().all(|c| *c == Complex64::new(0.0, 0.0)));
        assert_eq!(mean_photon(&psi), 0.0);
        assert_eq!(psi.tail_mass(), 0.0);
    }

    #[test]
    fn squeezed_vacuum_has_exactly_zero_odd_amplitudes() {
        let psi = build_probe(&GaussianParams::new(0.0, 0.5).unwrap(), 60, 1e-10).unwrap();
        for (n, c) in psi.amplitudes().iter().enumerate() {
            if n % 2 == 1 {
                assert_eq!(c.norm_sqr(), 0.0, "n = {n}");
            }
        }
        // ⟨2|S(r)|0⟩ = −tanh r / √2 ⟨0|S(r)|0⟩
        let c = psi.amplitudes();
        assert!((c[2].re / c[0].re + 0.5f64.tanh() / 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn coherent_amplitudes_are_poissonian() {
        let alpha: f64 = 1.7;
        let psi = build_probe(&GaussianParams::new(alpha, 0.0).unwrap(), 60, 1e-10).unwrap();
        let mut expected = (-alpha * alpha / 2.0).exp();
        for (n, c) in psi.amplitudes().iter().enumerate() {
            if n > 0 {
                expected *= alpha / (n as f64).sqrt();
            }
            assert!((c.re - expected).abs() < 1e-14, "n = {n}");
        }
    }

    #[test]
    fn mean_photon_matches_energy_budget() {
        for &(n, b) in &[(5.0, 1.0), (10.0, 0.3), (2.0, 0.0), (3.5, 0.75)] {
            let p = params_from_energy(n, b).unwrap();
            let cutoff = probe_cutoff(&p, 1e-10, DEFAULT_CUTOFF_LIMIT).unwrap();
            let psi = build_probe(&p, cutoff, 1e-10).unwrap();
            assert!((mean_photon(&psi) - n).abs() < 1e-6 * (n + 1.0), "N={n} beta={b}");
        }
    }

    #[test]
    fn truncation_error_reports_tail() {
        let p = params_from_energy(10.0, 1.0).unwrap();
        match build_probe(&p, 10, 1e-10) {
            Err(Error::Truncation { tail, n_max, .. }) => {
                assert_eq!(n_max, 10);
                assert!(tail > 0.1);
            }
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn cutoff_for_vacuum_is_small() {
        assert!(choose_cutoff(0.0, 0.3, 1e-10, DEFAULT_CUTOFF_LIMIT).unwrap() <= 20);
    }

    #[test]
    fn cutoff_tail_is_below_tolerance() {
        let cutoff = choose_cutoff(10.0, 0.1, 1e-10, DEFAULT_CUTOFF_LIMIT).unwrap();
        for i in 0..=10 {
            let p = params_from_energy(10.0, i as f64 / 10.0).unwrap();
            let psi = build_probe(&p, cutoff, 1.0 - 1e-12).unwrap();
            assert!(psi.tail_mass() < 1e-10);
        }
    }

    #[test]
    fn cutoff_is_smallest_passing() {
        let p = params_from_energy(4.0, 0.5).unwrap();
        let cutoff = probe_cutoff(&p, 1e-10, DEFAULT_CUTOFF_LIMIT).unwrap();
        assert!(build_probe(&p, cutoff, 1e-10).is_ok());
        assert!(build_probe(&p, cutoff - 1, 1e-10).is_err());
    }

    #[test]
    fn cutoff_grows_with_energy() {
        let c10 = choose_cutoff(10.0, 0.1, 1e-12, DEFAULT_CUTOFF_LIMIT).unwrap();
        let c30 = choose_cutoff(30.0, 0.1, 1e-12, DEFAULT_CUTOFF_LIMIT).unwrap();
        assert!(c30 > c10);
    }

    #[test]
    fn cutoff_hard_limit_is_a_resource_error() {
        assert!(matches!(
            choose_cutoff(30.0, 0.0, 1e-10, 200),
            Err(Error::Resource { limit: 200, .. })
        ));
    }
}
