//! Phase shift and phase diffusion acting on truncated density matrices.
//!
//! Both maps act elementwise on the Fock-basis matrix and depend only on the
//! band index `d = n − m`: the shift multiplies band `d` by `e^{−iφd}`, the
//! diffusion by `e^{−Δ²d²}`. They commute, and neither touches the diagonal.

use num_complex::Complex64;

use crate::error::{domain, Result};
use crate::fock::FockVector;
use crate::numeric::CompensatedSum;

/// Dephasing factors below this are set to zero.
pub const UNDERFLOW_CLAMP: f64 = 1e-300;

/// Dense Fock-basis density matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    dim: usize,
    entries: Vec<Complex64>,
}

impl DensityMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, entries: vec![Complex64::new(0.0, 0.0); dim * dim] }
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut entries = Vec::with_capacity(dim * dim);
        for n in 0..dim {
            for m in 0..dim {
                entries.push(f(n, m));
            }
        }
        Self { dim, entries }
    }

    pub fn from_entries(dim: usize, entries: Vec<Complex64>) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(domain(format!("{} entries for a {dim}x{dim} matrix", entries.len())));
        }
        Ok(Self { dim, entries })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_max(&self) -> usize {
        self.dim - 1
    }

    #[inline]
    pub fn get(&self, n: usize, m: usize) -> Complex64 {
        self.entries[n * self.dim + m]
    }

    #[inline]
    pub fn set(&mut self, n: usize, m: usize, value: Complex64) {
        self.entries[n * self.dim + m] = value;
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn row(&self, n: usize) -> &[Complex64] {
        &self.entries[n * self.dim..(n + 1) * self.dim]
    }

    pub fn diagonal(&self) -> Vec<Complex64> {
        (0..self.dim).map(|n| self.get(n, n)).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|n| self.get(n, n).re).collect::<CompensatedSum>().value()
    }

    /// Largest `|ρ_{nm} − conj(ρ_{mn})|`.
    pub fn hermiticity_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for n in 0..self.dim {
            for m in n..self.dim {
                worst = worst.max((self.get(n, m) - self.get(m, n).conj()).norm());
            }
        }
        worst
    }

    /// Largest `|Im ρ_{nm}|`.
    pub fn max_imag(&self) -> f64 {
        self.entries.iter().fold(0.0, |acc: f64, z| acc.max(z.im.abs()))
    }

    /// Largest elementwise modulus of `self − other`.
    pub fn max_abs_diff(&self, other: &DensityMatrix) -> f64 {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        self.entries
            .iter()
            .zip(&other.entries)
            .fold(0.0, |acc: f64, (a, b)| acc.max((a - b).norm()))
    }

    /// Multiplies band `d = n − m` by `factor(d)`, leaving the diagonal untouched.
    fn map_bands(&self, factor: impl Fn(usize) -> Complex64) -> DensityMatrix {
        let mut out = self.clone();
        let bands: Vec<Complex64> = (0..self.dim).map(factor).collect();
        for n in 0..self.dim {
            for m in 0..self.dim {
                if n == m {
                    continue;
                }
                let z = if n > m { bands[n - m] } else { bands[m - n].conj() };
                out.entries[n * self.dim + m] *= z;
            }
        }
        out
    }
}

/// Phase-diffusion strength `Δ = Γt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    delta: f64,
}

impl NoiseParams {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(domain(format!("noise amplitude must be finite and >= 0, got {delta}")));
        }
        Ok(Self { delta })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// `e^{−Δ² d²}` for `d = 0..dim`, clamped to zero below [`UNDERFLOW_CLAMP`].
#[derive(Debug, Clone, PartialEq)]
pub struct DephasingBands {
    factors: Vec<f64>,
}

impl DephasingBands {
    pub fn new(noise: NoiseParams, dim: usize) -> Self {
        let d2 = noise.delta * noise.delta;
        let factors = (0..dim)
            .map(|d| {
                let f = (-d2 * (d * d) as f64).exp();
                if f < UNDERFLOW_CLAMP {
                    0.0
                } else {
                    f
                }
            })
            .collect();
        Self { factors }
    }

    #[inline]
    pub fn factor(&self, band: usize) -> f64 {
        self.factors[band]
    }

    pub fn factors(&self) -> &[f64] {
        &self.factors
    }
}

/// `|ψ⟩⟨ψ|`
pub fn outer_product(psi: &FockVector) -> DensityMatrix {
    let c = psi.amplitudes();
    DensityMatrix::from_fn(c.len(), |n, m| c[n] * c[m].conj())
}

/// Phase-diffusion channel: `ρ_{nm} → e^{−Δ²(n−m)²} ρ_{nm}`.
pub fn dephase(rho: &DensityMatrix, noise: &NoiseParams) -> DensityMatrix {
    if noise.delta == 0.0 {
        return rho.clone();
    }
    let bands = DephasingBands::new(*noise, rho.dim());
    rho.map_bands(|d| Complex64::new(bands.factor(d), 0.0))
}

/// `U_φ ρ U_φ†` with `U_φ = exp(−iφ a†a)`: `ρ_{nm} → e^{−iφ(n−m)} ρ_{nm}`.
pub fn phase_shift(rho: &DensityMatrix, phi: f64) -> DensityMatrix {
    if phi == 0.0 {
        return rho.clone();
    }
    rho.map_bands(|d| {
        let (s, c) = (phi * d as f64).sin_cos();
        Complex64::new(c, -s)
    })
}
