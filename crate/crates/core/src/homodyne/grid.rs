use crate::error::{domain, Error, Result};
use crate::numeric::{gauss_legendre, CompensatedSum};

/// Gauss–Legendre nodes per panel.
pub const PANEL_ORDER: usize = 16;

/// Quadrature points and weights on the real line of outcomes `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureGrid {
    pub fn from_parts(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(domain("grid needs matching, non-empty points and weights"));
        }
        if !points.windows(2).all(|p| p[0] < p[1]) {
            return Err(domain("grid points must be strictly increasing"));
        }
        if !weights.iter().all(|w| *w > 0.0 && w.is_finite()) {
            return Err(domain("grid weights must be positive"));
        }
        Ok(Self { points, weights })
    }

    /// Composite Gauss–Legendre rule with `panels` equal panels on `[lo, hi]`.
    pub fn gauss_legendre(lo: f64, hi: f64, panels: usize, order: usize) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() || panels == 0 || order == 0 {
            return Err(domain(format!("bad grid specification [{lo}, {hi}] x {panels} panels")));
        }
        let (nodes, w) = gauss_legendre(order);
        let h = (hi - lo) / panels as f64;
        let mut points = Vec::with_capacity(panels * order);
        let mut weights = Vec::with_capacity(panels * order);
        for p in 0..panels {
            let mid = lo + (p as f64 + 0.5) * h;
            for (x, wx) in nodes.iter().zip(&w) {
                points.push(mid + 0.5 * h * x);
                weights.push(0.5 * h * wx);
            }
        }
        Self::from_parts(points, weights)
    }

    /// Grid wide and fine enough for a state with mean photon number `n_mean`
    /// truncated at `n_max`.
    ///
    /// The half-width covers both the displacement (`4√N + 6`) and the classical
    /// turning point `√(n_max + ½)` of the highest Fock state; panels shrink with
    /// the shortest oscillation length of the wavefunction products.
    pub fn covering(n_mean: f64, n_max: usize) -> Self {
        let turning = (n_max as f64 + 0.5).sqrt();
        let half_width = covering_half_width(n_mean, n_max);
        let h = 0.25f64.min(4.0 / turning);
        let panels = (2.0 * half_width / h).ceil() as usize;
        Self::gauss_legendre(-half_width, half_width, panels, PANEL_ORDER).expect("valid covering grid")
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `Σ_k w_k f(x_k)` for values sampled on the grid.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).collect::<CompensatedSum>().value()
    }
}

/// Half-width of [`QuadratureGrid::covering`].
pub fn covering_half_width(n_mean: f64, n_max: usize) -> f64 {
    let turning = (n_max as f64 + 0.5).sqrt();
    6f64.max(4.0 * n_mean.max(0.0).sqrt() + 6.0).max(turning + 3.0)
}

/// `ψ_n(x_k)` for `n = 0..=n_max`, stored band by band: `value(n, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WavefunctionTable {
    dim: usize,
    n_points: usize,
    values: Vec<f64>,
}

impl WavefunctionTable {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    #[inline]
    pub fn value(&self, n: usize, k: usize) -> f64 {
        self.values[n * self.n_points + k]
    }

    /// `ψ_n` on every grid point.
    pub fn level(&self, n: usize) -> &[f64] {
        &self.values[n * self.n_points..(n + 1) * self.n_points]
    }
}

// Rescale the recurrence whenever a value leaves this magnitude.
const RESCALE: f64 = 1e150;

/// Position eigenfunctions for the quadrature `X = (a + a†)/2`.
///
/// `ψ_0(x) = (2/π)^{1/4} e^{−x²}` has variance 1/4, and higher levels follow
/// `ψ_{n+1} = (2x ψ_n − √n ψ_{n−1}) / √(n+1)`. Each point carries its own
/// logarithmic scale, so the Gaussian prefactor can underflow without losing
/// the levels where the wavefunction is not small.
pub fn oscillator_wavefunctions(grid: &QuadratureGrid, n_max: usize) -> Result<WavefunctionTable> {
    let dim = n_max + 1;
    let n_points = grid.len();
    let mut values = vec![0.0; dim * n_points];
    let log_norm = 0.25 * (2.0 / std::f64::consts::PI).ln();
    let sqrt_n: Vec<f64> = (0..=dim).map(|n| (n as f64).sqrt()).collect();
    for (k, &x) in grid.points().iter().enumerate() {
        let mut log_scale = log_norm - x * x;
        let mut prev = 0.0;
        let mut cur: f64 = 1.0;
        for n in 0..dim {
            let v = if cur == 0.0 { 0.0 } else { cur.signum() * (cur.abs().ln() + log_scale).exp() };
            if !v.is_finite() {
                return Err(Error::Range(format!("wavefunction overflow at x = {x}, n = {n}")));
            }
            values[n * n_points + k] = v;
            let next = (2.0 * x * cur - sqrt_n[n] * prev) / sqrt_n[n + 1];
            prev = cur;
            cur = next;
            if cur.abs() > RESCALE {
                prev /= RESCALE;
                cur /= RESCALE;
                log_scale += RESCALE.ln();
            }
        }
    }
    Ok(WavefunctionTable { dim, n_points, values })
}
