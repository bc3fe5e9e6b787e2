//! Squeezing-fraction optimization, (N, Δ) sweeps and the scaling laws of the
//! optimized QFI.

use faer::linalg::solvers::SolveLstsq;
use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::fock::{ProbeSpec, DEFAULT_TAIL_TOLERANCE};
use crate::numeric::golden_section_max;
use crate::qfi::{qfi_of_probe, QfiOptions, QfiResult};

/// Δ² columns used for the reference (N, Δ) panels, keyed by the largest N.
pub const PANEL_DELTA_SQUARED: [(f64, [f64; 4]); 4] = [
    (10.0, [4.5e-5, 4.5e-4, 4.5e-3, 4.5e-2]),
    (15.0, [2e-5, 2e-4, 2e-3, 2e-2]),
    (20.0, [1.125e-5, 1.125e-4, 1.125e-3, 1.125e-2]),
    (30.0, [5e-6, 5e-5, 5e-4, 5e-3]),
];

/// `n_max/10, 2 n_max/10, …, n_max`.
pub fn default_n_grid(n_max: f64) -> Vec<f64> {
    (1..=10).map(|i| n_max * i as f64 / 10.0).collect()
}

/// Settings shared by the β optimizer and the sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub beta_tol: f64,
    pub epsilon_tail: f64,
    /// Applied to the final evaluation at `β_opt`; the search itself runs
    /// without the cutoff-doubling check.
    pub qfi: QfiOptions,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { beta_tol: 1e-3, epsilon_tail: DEFAULT_TAIL_TOLERANCE, qfi: QfiOptions::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaOptimum {
    pub beta: f64,
    pub qfi: QfiResult,
}

impl BetaOptimum {
    pub fn h(&self) -> f64 {
        self.qfi.h
    }
}

fn qfi_at(n_mean: f64, beta: f64, delta: f64, opts: &SweepOptions, verify: bool) -> Result<QfiResult> {
    let spec = ProbeSpec::new(n_mean, beta, delta)?.with_tail_tolerance(opts.epsilon_tail)?;
    qfi_of_probe(&spec, &QfiOptions { verify_cutoff: verify, ..opts.qfi })
}

/// Index of the largest value, preferring the later index on ties.
fn argmax_last(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v >= values[best] {
            best = i;
        }
    }
    best
}

fn local_maxima(values: &[f64]) -> usize {
    let n = values.len();
    (0..n)
        .filter(|&i| {
            let left = i == 0 || values[i] > values[i - 1];
            let right = i == n - 1 || values[i] >= values[i + 1];
            left && right
        })
        .count()
}

/// Maximizes the QFI of the dephased probe over the squeezing fraction.
///
/// An 11-point grid brackets the maximum and golden-section search refines it
/// to `beta_tol`. If the grid shows more than one local maximum, a grid of step
/// 0.01 picks the bracket instead. Ties go to the larger β; at Δ = 0 the
/// squeezed vacuum is returned directly.
pub fn optimize_beta(n_mean: f64, delta: f64, opts: &SweepOptions) -> Result<BetaOptimum> {
    if !(n_mean > 0.0 && n_mean.is_finite()) {
        return Err(domain(format!("optimization needs N > 0, got {n_mean}")));
    }
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(domain(format!("noise amplitude must be finite and >= 0, got {delta}")));
    }
    if delta == 0.0 {
        return Ok(BetaOptimum { beta: 1.0, qfi: qfi_at(n_mean, 1.0, 0.0, opts, opts.qfi.verify_cutoff)? });
    }
    let eval = |beta: f64| qfi_at(n_mean, beta, delta, opts, false).map(|q| q.h);
    let scan = |steps: usize| -> Result<(Vec<f64>, Vec<f64>)> {
        let betas: Vec<f64> = (0..=steps).map(|i| i as f64 / steps as f64).collect();
        let h = betas.par_iter().map(|&b| eval(b)).collect::<Result<Vec<_>>>()?;
        Ok((betas, h))
    };

    let (mut betas, mut h) = scan(10)?;
    if local_maxima(&h) > 1 {
        (betas, h) = scan(100)?;
    }
    let i = argmax_last(&h);
    let lo = betas[i.saturating_sub(1)];
    let hi = betas[(i + 1).min(betas.len() - 1)];
    let (b_gs, h_gs) = golden_section_max(eval, lo, hi, opts.beta_tol)?;

    let mut candidates = vec![(betas[0], h[0]), (b_gs, h_gs), (betas[i], h[i])];
    candidates.push((1.0, *h.last().expect("non-empty")));
    let mut best = candidates[0];
    for c in candidates {
        if c.1 > best.1 || (c.1 == best.1 && c.0 > best.0) {
            best = c;
        }
    }
    let qfi = qfi_at(n_mean, best.0, delta, opts, opts.qfi.verify_cutoff)?;
    Ok(BetaOptimum { beta: best.0, qfi })
}

/// One point of an (N, Δ) sweep with the QFI optimized over β.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    #[serde(rename = "N")]
    pub n_mean: f64,
    #[serde(rename = "Delta")]
    pub delta: f64,
    pub beta_opt: f64,
    #[serde(rename = "H_opt")]
    pub h_opt: f64,
    /// `N Δ`
    pub xi: f64,
    /// `H Δ / N`
    pub gamma: f64,
    #[serde(rename = "F_homodyne")]
    pub f_homodyne: Option<f64>,
    pub cutoff: usize,
    pub tail_mass: f64,
    /// Failure message when the point could not be computed.
    pub error: Option<String>,
}

impl SweepRecord {
    pub fn from_optimum(n_mean: f64, delta: f64, opt: &BetaOptimum) -> Self {
        Self {
            n_mean,
            delta,
            beta_opt: opt.beta,
            h_opt: opt.qfi.h,
            xi: n_mean * delta,
            gamma: opt.qfi.h * delta / n_mean,
            f_homodyne: None,
            cutoff: opt.qfi.cutoff,
            tail_mass: opt.qfi.tail_mass,
            error: None,
        }
    }

    pub fn failed(n_mean: f64, delta: f64, error: &Error) -> Self {
        Self {
            n_mean,
            delta,
            beta_opt: f64::NAN,
            h_opt: f64::NAN,
            xi: n_mean * delta,
            gamma: f64::NAN,
            f_homodyne: None,
            cutoff: 0,
            tail_mass: f64::NAN,
            error: Some(error.to_string()),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

/// Optimized QFI over the grid, N-major. Failed points carry their error.
pub fn qfi_surface(n_grid: &[f64], delta_grid: &[f64], opts: &SweepOptions) -> Result<Vec<SweepRecord>> {
    if n_grid.is_empty() || delta_grid.is_empty() {
        return Err(domain("sweep grids must be non-empty"));
    }
    let points: Vec<(f64, f64)> = n_grid
        .iter()
        .flat_map(|&n| delta_grid.iter().map(move |&d| (n, d)))
        .collect();
    Ok(points
        .par_iter()
        .map(|&(n, d)| match optimize_beta(n, d, opts) {
            Ok(opt) => SweepRecord::from_optimum(n, d, &opt),
            Err(e) => SweepRecord::failed(n, d, &e),
        })
        .collect())
}

/// Both sides of a scaling comparison `f(N, Δ)` against `f(N/k, kΔ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingCheck {
    #[serde(rename = "N")]
    pub n_mean: f64,
    #[serde(rename = "Delta")]
    pub delta: f64,
    pub k: f64,
    pub original: BetaOptimum,
    pub rescaled: BetaOptimum,
    pub deviation: f64,
}

fn scaled_pair(n_mean: f64, delta: f64, k: f64, opts: &SweepOptions) -> Result<(BetaOptimum, BetaOptimum)> {
    if !(k >= 1.0 && n_mean / k >= 1.0) {
        return Err(domain(format!("scaling check needs k >= 1 and N/k >= 1, got N={n_mean}, k={k}")));
    }
    Ok((optimize_beta(n_mean, delta, opts)?, optimize_beta(n_mean / k, k * delta, opts)?))
}

/// `|H(N, Δ) − k² H(N/k, kΔ)| / H(N, Δ)` for the optimized QFI.
pub fn check_qfi_scaling(n_mean: f64, delta: f64, k: f64, opts: &SweepOptions) -> Result<ScalingCheck> {
    let (original, rescaled) = scaled_pair(n_mean, delta, k, opts)?;
    let deviation = (original.h() - k * k * rescaled.h()).abs() / original.h();
    Ok(ScalingCheck { n_mean, delta, k, original, rescaled, deviation })
}

/// `|β_opt(N, Δ) − β_opt(N/k, kΔ)|`
pub fn check_beta_scaling(n_mean: f64, delta: f64, k: f64, opts: &SweepOptions) -> Result<ScalingCheck> {
    let (original, rescaled) = scaled_pair(n_mean, delta, k, opts)?;
    let deviation = (original.beta - rescaled.beta).abs();
    Ok(ScalingCheck { n_mean, delta, k, original, rescaled, deviation })
}

/// Least-squares fit `ln γ = c − b ln ξ − a ln² ξ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Root-mean-square residual in `ln γ`.
    pub residual_rms: f64,
    pub n_records: usize,
}

impl FitResult {
    pub fn ln_gamma(&self, xi: f64) -> f64 {
        let l = xi.ln();
        self.c - self.b * l - self.a * l * l
    }
}

pub const MIN_FIT_RECORDS: usize = 10;

/// Unweighted OLS of `ln γ` on `{1, ln ξ, ln² ξ}` over the successful records.
pub fn fit_gamma(records: &[SweepRecord]) -> Result<FitResult> {
    let usable: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.is_ok() && r.gamma > 0.0 && r.xi > 0.0 && r.gamma.is_finite())
        .map(|r| (r.xi.ln(), r.gamma.ln()))
        .collect();
    if usable.len() < MIN_FIT_RECORDS {
        return Err(Error::Fit(format!(
            "{} usable records, at least {MIN_FIT_RECORDS} needed",
            usable.len()
        )));
    }
    let mut distinct: Vec<f64> = usable.iter().map(|u| u.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::Fit("design matrix is singular: fewer than three distinct xi".into()));
    }
    let n = usable.len();
    let x = Mat::<f64>::from_fn(n, 3, |i, j| usable[i].0.powi(j as i32));
    let y = Mat::<f64>::from_fn(n, 1, |i, _| usable[i].1);
    let coef = x.qr().solve_lstsq(&y);
    let (c, slope, quad) = (coef[(0, 0)], coef[(1, 0)], coef[(2, 0)]);
    if ![c, slope, quad].iter().all(|v| v.is_finite()) {
        return Err(Error::Fit("least-squares solution is not finite".into()));
    }
    let ss: f64 = usable
        .iter()
        .map(|(l, g)| {
            let r = g - (c + slope * l + quad * l * l);
            r * r
        })
        .sum();
    Ok(FitResult { a: -quad, b: -slope, c, residual_rms: (ss / n as f64).sqrt(), n_records: n })
}

/// Quantum Cramér–Rao bound for `M` repetitions in its two equivalent forms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrbBound {
    /// `1 / (M H)`
    pub variance: f64,
    /// `Δ / (γ N) / M`
    pub gamma_form: f64,
}

pub fn crb_bound(record: &SweepRecord, repetitions: u64) -> Result<CrbBound> {
    if repetitions == 0 {
        return Err(domain("the number of repetitions must be at least 1"));
    }
    if !record.is_ok() || !record.h_opt.is_finite() || record.h_opt < 0.0 {
        return Err(domain("record carries no valid QFI"));
    }
    if record.h_opt == 0.0 {
        return Err(Error::UnboundedVariance);
    }
    let m = repetitions as f64;
    Ok(CrbBound {
        variance: 1.0 / (m * record.h_opt),
        gamma_form: record.delta / (record.gamma * record.n_mean) / m,
    })
}
