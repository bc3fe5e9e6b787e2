//! Quantum Fisher information of the phase-shift family generated by `a†a`.
//!
//! For `ρ_φ = U_φ ρ U_φ†` with spectral decomposition `ρ = Σ λ_n |λ_n⟩⟨λ_n|`
//!
//! ```text
//! H = 2 Σ_{n≠m} (λ_n − λ_m)² / (λ_n + λ_m) · |⟨λ_n| a†a |λ_m⟩|²,
//! ```
//!
//! independent of φ. Fock indices whose row and column vanish identically
//! (the odd states of a squeezed vacuum, say) span part of the kernel and are
//! dropped before diagonalization; they contribute nothing to `H`.

use faer::{Mat, Side};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{dephase, outer_product, DensityMatrix, NoiseParams};
use crate::error::{domain, Error, Result};
use crate::fock::{build_probe, probe_cutoff, FockVector, GaussianParams, ProbeSpec, DEFAULT_CUTOFF_LIMIT};
use crate::numeric::CompensatedSum;

/// Imaginary parts up to this size are stripped on the real path.
pub const IMAG_TOLERANCE: f64 = 1e-13;
/// Eigenvalues in `[−EIGEN_FLOOR, 0)` are clamped to zero; below is an error.
pub const EIGEN_FLOOR: f64 = 1e-10;
/// Pairs with `λ_n + λ_m` below this are skipped.
pub const DEGENERACY_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone)]
enum Eigenbasis {
    Real(Mat<f64>),
    Complex(Mat<Complex64>),
}

/// Eigenvalues (descending) and eigenvectors of a density matrix.
///
/// Eigenvectors are stored over the Fock support only; `eigenvector(j)`
/// expands them back onto the full basis `|0⟩..|n_max⟩`.
#[derive(Debug, Clone)]
pub struct SpectralData {
    dim: usize,
    support: Vec<usize>,
    eigenvalues: Vec<f64>,
    basis: Eigenbasis,
}

impl SpectralData {
    pub fn n_max(&self) -> usize {
        self.dim - 1
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Fock indices carrying weight.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    /// Eigenvalues on the support, sorted descending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// All `n_max + 1` eigenvalues, the kernel outside the support included.
    pub fn full_spectrum(&self) -> Vec<f64> {
        let mut all = self.eigenvalues.clone();
        all.resize(self.dim, 0.0);
        all.sort_by(|a, b| b.total_cmp(a));
        all
    }

    pub fn is_real(&self) -> bool {
        matches!(self.basis, Eigenbasis::Real(_))
    }

    /// Coefficient `r_{jk} = ⟨k|λ_j⟩`.
    pub fn coefficient(&self, j: usize, k: usize) -> Complex64 {
        match self.support.binary_search(&k) {
            Ok(i) => match &self.basis {
                Eigenbasis::Real(u) => Complex64::new(u[(i, j)], 0.0),
                Eigenbasis::Complex(u) => u[(i, j)],
            },
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    pub fn eigenvector(&self, j: usize) -> Vec<Complex64> {
        (0..self.dim).map(|k| self.coefficient(j, k)).collect()
    }

    /// `Σ_n λ_n |λ_n⟩⟨λ_n|`
    pub fn reconstruct(&self) -> DensityMatrix {
        let mut rho = DensityMatrix::zeros(self.dim);
        for (j, &lambda) in self.eigenvalues.iter().enumerate() {
            let v = self.eigenvector(j);
            for &n in &self.support {
                for &m in &self.support {
                    let z = rho.get(n, m) + lambda * v[n] * v[m].conj();
                    rho.set(n, m, z);
                }
            }
        }
        rho
    }
}

/// Result of a QFI evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QfiResult {
    #[serde(rename = "H")]
    pub h: f64,
    /// Ordered pairs `(n, m)`, `n ≠ m`, of the supported spectrum that entered the sum.
    pub n_terms_used: usize,
    /// Ordered pairs skipped because `λ_n + λ_m` fell below the threshold.
    pub degeneracy_skipped: usize,
    pub cutoff: usize,
    pub tail_mass: f64,
    /// Relative change of `H` when the cutoff was doubled, if checked.
    pub cutoff_change: Option<f64>,
}

fn fock_support(rho: &DensityMatrix) -> Vec<usize> {
    let zero = Complex64::new(0.0, 0.0);
    (0..rho.dim())
        .filter(|&n| rho.row(n).iter().any(|z| *z != zero) || (0..rho.dim()).any(|m| rho.get(m, n) != zero))
        .collect()
}

fn floor_eigenvalues(raw: impl Iterator<Item = f64>) -> Result<Vec<f64>> {
    let mut values = Vec::new();
    for v in raw {
        if v < -EIGEN_FLOOR {
            return Err(Error::Positivity { eigenvalue: v });
        }
        values.push(v.max(0.0));
    }
    Ok(values)
}

/// Descending order of the ascending faer output.
fn descending<T: Clone>(values: Vec<f64>, u: &Mat<T>) -> (Vec<f64>, Mat<T>) {
    let k = values.len();
    let sorted = Mat::from_fn(k, k, |i, j| u[(i, k - 1 - j)].clone());
    (values.into_iter().rev().collect(), sorted)
}

/// Real-symmetric diagonalization.
///
/// Probes with real parameters that have not been phase-shifted are real
/// symmetric; imaginary parts up to [`IMAG_TOLERANCE`] are stripped and larger
/// ones are a [`Error::Convention`]. Use [`eigendecompose_hermitian`] for
/// shifted states.
pub fn eigendecompose(rho: &DensityMatrix) -> Result<SpectralData> {
    let max_imag = rho.max_imag();
    if max_imag > IMAG_TOLERANCE {
        return Err(Error::Convention { max_imag });
    }
    let support = fock_support(rho);
    let k = support.len();
    let a = Mat::<f64>::from_fn(k, k, |i, j| rho.get(support[i], support[j]).re);
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let raw = floor_eigenvalues(evd.S().column_vector().iter().copied())?;
    let (eigenvalues, u) = descending(raw, &evd.U().to_owned());
    Ok(SpectralData { dim: rho.dim(), support, eigenvalues, basis: Eigenbasis::Real(u) })
}

/// Complex-Hermitian diagonalization, valid for any phase-shifted state.
pub fn eigendecompose_hermitian(rho: &DensityMatrix) -> Result<SpectralData> {
    let herm = rho.hermiticity_error();
    if herm > 1e-10 {
        return Err(domain(format!("matrix is not Hermitian (error {herm:e})")));
    }
    let support = fock_support(rho);
    let k = support.len();
    let a = Mat::<Complex64>::from_fn(k, k, |i, j| rho.get(support[i], support[j]));
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let raw = floor_eigenvalues(evd.S().column_vector().iter().map(|z| z.re))?;
    let (eigenvalues, u) = descending(raw, &evd.U().to_owned());
    Ok(SpectralData { dim: rho.dim(), support, eigenvalues, basis: Eigenbasis::Complex(u) })
}

/// `|⟨λ_j| a†a |λ_l⟩|²` for all pairs on the support.
fn generator_elements(spec: &SpectralData) -> Mat<f64> {
    let k = spec.support.len();
    match &spec.basis {
        Eigenbasis::Real(u) => {
            let scaled = Mat::<f64>::from_fn(k, k, |i, j| spec.support[i] as f64 * u[(i, j)]);
            let g = u.transpose() * &scaled;
            Mat::from_fn(k, k, |i, j| g[(i, j)] * g[(i, j)])
        }
        Eigenbasis::Complex(u) => {
            let scaled = Mat::<Complex64>::from_fn(k, k, |i, j| u[(i, j)] * spec.support[i] as f64);
            let g = u.adjoint() * &scaled;
            Mat::from_fn(k, k, |i, j| g[(i, j)].norm_sqr())
        }
    }
}

/// Evaluates the spectral QFI formula.
///
/// Terms are summed in ascending magnitude with compensated summation.
pub fn qfi_phase(spec: &SpectralData) -> QfiResult {
    let g2 = generator_elements(spec);
    let lambda = &spec.eigenvalues;
    let k = lambda.len();
    let mut terms = Vec::with_capacity(k * k.saturating_sub(1) / 2);
    let mut skipped = 0;
    for j in 0..k {
        for l in j + 1..k {
            let s = lambda[j] + lambda[l];
            if s <= DEGENERACY_THRESHOLD {
                skipped += 1;
                continue;
            }
            let d = lambda[j] - lambda[l];
            terms.push(d * d / s * g2[(j, l)]);
        }
    }
    let used = terms.len();
    terms.sort_unstable_by(|a, b| a.total_cmp(b));
    let sum: CompensatedSum = terms.into_iter().collect();
    QfiResult {
        // each unordered pair appears twice in the ordered sum
        h: 4.0 * sum.value(),
        n_terms_used: 2 * used,
        degeneracy_skipped: 2 * skipped,
        cutoff: spec.n_max(),
        tail_mass: 0.0,
        cutoff_change: None,
    }
}

/// `4 (⟨n²⟩ − ⟨n⟩²)`, the QFI of a pure state.
pub fn pure_qfi(psi: &FockVector) -> f64 {
    let mut n1 = CompensatedSum::new();
    let mut n2 = CompensatedSum::new();
    for (n, c) in psi.amplitudes().iter().enumerate() {
        let p = c.norm_sqr();
        let n = n as f64;
        n1.add(n * p);
        n2.add(n * n * p);
    }
    4.0 * (n2.value() - n1.value() * n1.value())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QfiOptions {
    pub cutoff_limit: usize,
    /// Confirm the cutoff by doubling it and comparing `H`.
    pub verify_cutoff: bool,
    /// Largest relative change of `H` accepted on doubling.
    pub convergence_tol: f64,
}

impl Default for QfiOptions {
    fn default() -> Self {
        Self { cutoff_limit: DEFAULT_CUTOFF_LIMIT, verify_cutoff: true, convergence_tol: 1e-3 }
    }
}

/// Dephased probe `N_Δ(|ψ_G⟩⟨ψ_G|)` at an explicit cutoff.
pub fn dephased_probe(params: &GaussianParams, delta: f64, n_max: usize, epsilon_tail: f64) -> Result<(FockVector, DensityMatrix)> {
    let psi = build_probe(params, n_max, epsilon_tail)?;
    let rho = dephase(&outer_product(&psi), &NoiseParams::new(delta)?);
    Ok((psi, rho))
}

fn qfi_at_cutoff(params: &GaussianParams, spec: &ProbeSpec, n_max: usize) -> Result<QfiResult> {
    let (psi, rho) = dephased_probe(params, spec.delta, n_max, spec.epsilon_tail)?;
    let mut result = qfi_phase(&eigendecompose(&rho)?);
    result.cutoff = n_max;
    result.tail_mass = psi.tail_mass();
    Ok(result)
}

fn relative_change(coarse: f64, fine: f64) -> f64 {
    (fine - coarse).abs() / fine.abs().max(1e-9)
}

/// QFI of the dephased Gaussian probe described by `spec`.
///
/// The cutoff is the smallest one meeting the tail tolerance for this probe.
/// With `verify_cutoff` it is doubled until `H` moves by less than
/// `convergence_tol`; the result reported is the one at the accepted cutoff.
pub fn qfi_of_probe(spec: &ProbeSpec, opts: &QfiOptions) -> Result<QfiResult> {
    spec.validate()?;
    let params = spec.params()?;
    let mut cutoff = probe_cutoff(&params, spec.epsilon_tail, opts.cutoff_limit)?;
    let mut current = qfi_at_cutoff(&params, spec, cutoff)?;
    if !opts.verify_cutoff {
        return Ok(current);
    }
    loop {
        let doubled = (2 * cutoff).max(cutoff + 2);
        if doubled > opts.cutoff_limit {
            return Err(Error::Resource { required: doubled, limit: opts.cutoff_limit });
        }
        let finer = qfi_at_cutoff(&params, spec, doubled)?;
        let change = relative_change(current.h, finer.h);
        if change < opts.convergence_tol {
            current.cutoff_change = Some(change);
            return Ok(current);
        }
        cutoff = doubled;
        current = finer;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::phase_shift;
    use crate::fock::params_from_energy;

    fn probe(n: f64, beta: f64) -> FockVector {
        let p = params_from_energy(n, beta).unwrap();
        build_probe(&p, probe_cutoff(&p, 1e-12, DEFAULT_CUTOFF_LIMIT).unwrap(), 1e-12).unwrap()
    }

    #[test]
    fn pure_state_spectrum() {
        let rho = outer_product(&probe(2.0, 0.5));
        let spec = eigendecompose(&rho).unwrap();
        assert!((spec.eigenvalues()[0] - 1.0).abs() < 1e-10);
        assert!(spec.eigenvalues()[1..].iter().all(|l| l.abs() <= 1e-12));
    }

    #[test]
    fn diagonal_state_has_fock_eigenvectors() {
        let weights = [0.4, 0.3, 0.2, 0.1];
        let rho = DensityMatrix::from_fn(4, |n, m| {
            Complex64::new(if n == m { weights[n] } else { 0.0 }, 0.0)
        });
        let spec = eigendecompose(&rho).unwrap();
        for j in 0..4 {
            assert!((spec.eigenvalues()[j] - weights[j]).abs() < 1e-15);
            assert!((spec.coefficient(j, j).norm() - 1.0).abs() < 1e-15);
        }
        assert!(qfi_phase(&spec).h.abs() < 1e-14);
    }

    #[test]
    fn reconstruction_matches_input() {
        let rho = dephase(&outer_product(&probe(3.0, 0.6)), &NoiseParams::new(0.2).unwrap());
        let spec = eigendecompose(&rho).unwrap();
        let back = spec.reconstruct();
        let frob: f64 = rho
            .entries()
            .iter()
            .zip(back.entries())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(frob < 1e-10, "{frob}");
    }

    #[test]
    fn real_path_rejects_shifted_states() {
        let rho = phase_shift(&outer_product(&probe(2.0, 0.0)), 0.3);
        assert!(matches!(eigendecompose(&rho), Err(Error::Convention { .. })));
        assert!(eigendecompose_hermitian(&rho).is_ok());
    }

    #[test]
    fn real_and_complex_paths_agree() {
        let rho = dephase(&outer_product(&probe(2.5, 0.7)), &NoiseParams::new(0.15).unwrap());
        let a = qfi_phase(&eigendecompose(&rho).unwrap());
        let b = qfi_phase(&eigendecompose_hermitian(&rho).unwrap());
        assert!((a.h - b.h).abs() < 1e-10 * a.h);
        let la = eigendecompose(&rho).unwrap();
        let lb = eigendecompose_hermitian(&rho).unwrap();
        for (x, y) in la.eigenvalues().iter().zip(lb.eigenvalues()) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn negative_eigenvalue_is_a_positivity_error() {
        let rho = DensityMatrix::from_fn(2, |n, m| {
            Complex64::new(if n == m { [1.1, -0.1][n] } else { 0.0 }, 0.0)
        });
        assert!(matches!(eigendecompose(&rho), Err(Error::Positivity { .. })));
    }

    #[test]
    fn pure_qfi_anchors() {
        assert_eq!(pure_qfi(&FockVector::vacuum(4)), 0.0);
        let sq = pure_qfi(&probe(3.0, 1.0));
        assert!((sq - 96.0).abs() < 1e-6 * 96.0);
        let coh = pure_qfi(&probe(3.0, 0.0));
        assert!((coh - 12.0).abs() < 1e-6 * 12.0);
    }

    #[test]
    fn noiseless_probe_anchors() {
        let opts = QfiOptions::default();
        let sq = qfi_of_probe(&ProbeSpec::new(5.0, 1.0, 0.0).unwrap(), &opts).unwrap();
        assert!((sq.h - 240.0).abs() < 0.24, "{}", sq.h);
        let coh = qfi_of_probe(&ProbeSpec::new(5.0, 0.0, 0.0).unwrap(), &opts).unwrap();
        assert!((coh.h - 20.0).abs() < 0.02, "{}", coh.h);
        assert!(sq.cutoff_change.unwrap() < 1e-3);
        assert!(sq.degeneracy_skipped > 0);
    }

    #[test]
    fn strong_noise_kills_the_qfi() {
        let q = qfi_of_probe(&ProbeSpec::new(2.0, 1.0, 5.0).unwrap(), &QfiOptions::default()).unwrap();
        assert!(q.h < 1e-6 && q.h >= 0.0);
    }

    #[test]
    fn cutoff_limit_is_enforced() {
        let opts = QfiOptions { cutoff_limit: 60, ..QfiOptions::default() };
        assert!(matches!(
            qfi_of_probe(&ProbeSpec::new(10.0, 1.0, 0.1).unwrap(), &opts),
            Err(Error::Resource { .. })
        ));
    }
}
