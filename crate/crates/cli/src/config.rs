//! Job configuration: a TOML file with one table per command, overlaid by
//! command-line flags, then completed with defaults and validated.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use phasediff::fock::{DEFAULT_CUTOFF_LIMIT, DEFAULT_TAIL_TOLERANCE};
use phasediff::sweep::{default_n_grid, PANEL_DELTA_SQUARED};

use crate::CliError;

pub const DEFAULT_SEED: u64 = 20240601;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// Settings shared by every command.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Common {
    /// Output path, `-` for standard output
    #[arg(long, global = true)]
    pub output: Option<String>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Worker threads
    #[arg(long, global = true, env = "PHASEDIFF_WORKERS")]
    pub workers: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Largest Fock cutoff any probe may use
    #[arg(long, global = true)]
    pub cutoff_limit: Option<usize>,
    /// Fock tail mass tolerated beyond the cutoff
    #[arg(long, global = true)]
    pub tail_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct QfiSection {
    /// Mean photon numbers
    #[arg(long = "n", value_delimiter = ',')]
    pub n: Option<Vec<f64>>,
    /// Squeezing fractions
    #[arg(long, value_delimiter = ',')]
    pub beta: Option<Vec<f64>>,
    /// Noise amplitudes
    #[arg(long, value_delimiter = ',')]
    pub delta: Option<Vec<f64>>,
    /// Confirm each cutoff by doubling it
    #[arg(long)]
    pub verify_cutoff: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct SweepSection {
    /// Mean photon numbers; defaults to ten steps up to `--n-max`
    #[arg(long = "n", value_delimiter = ',')]
    pub n: Option<Vec<f64>>,
    #[arg(long)]
    pub n_max: Option<f64>,
    /// Noise amplitudes
    #[arg(long, value_delimiter = ',', conflicts_with = "delta_squared")]
    pub delta: Option<Vec<f64>>,
    /// Noise given as Δ²
    #[arg(long, value_delimiter = ',')]
    pub delta_squared: Option<Vec<f64>>,
    #[arg(long)]
    pub beta_tol: Option<f64>,
    /// Also compute the best homodyne Fisher information at β_opt
    #[arg(long)]
    pub homodyne: Option<bool>,
    /// Compare every point with its (N/k, kΔ) partner
    #[arg(long)]
    pub scaling_k: Option<f64>,
    #[arg(long)]
    pub verify_cutoff: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct HomodyneSection {
    #[arg(long = "n", value_delimiter = ',')]
    pub n: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub beta: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub delta: Option<Vec<f64>>,
    /// Oscillator phases
    #[arg(long, value_delimiter = ',')]
    pub theta: Option<Vec<f64>>,
    /// Evaluation shifts; F is maximized over the shift when omitted
    #[arg(long, value_delimiter = ',')]
    pub phi0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct VarianceMapSection {
    #[arg(long = "n", value_delimiter = ',')]
    pub n: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub delta: Option<Vec<f64>>,
    /// Squeezing fractions of the map
    #[arg(long, value_delimiter = ',')]
    pub beta: Option<Vec<f64>>,
    /// Number of equally spaced phases in [0, π)
    #[arg(long)]
    pub n_theta: Option<usize>,
    /// Energies for which the threshold noise is located
    #[arg(long, value_delimiter = ',')]
    pub threshold_n: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub threshold_interval: Option<Vec<f64>>,
    #[arg(long)]
    pub threshold_tol: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FitSection {
    /// Sweep table (CSV or JSON) to fit
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct CrbMcSection {
    #[arg(long = "n")]
    pub n: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    /// True shift; defaults to the shift of largest Fisher information
    #[arg(long)]
    pub phi_true: Option<f64>,
    /// Outcomes per batch
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub batches: Option<usize>,
}

/// Everything a config file may contain.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub output: Option<String>,
    pub format: Option<Format>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
    pub cutoff_limit: Option<usize>,
    pub tail_tol: Option<f64>,
    pub qfi: Option<QfiSection>,
    pub sweep: Option<SweepSection>,
    pub homodyne: Option<HomodyneSection>,
    pub variance_map: Option<VarianceMapSection>,
    pub fit: Option<FitSection>,
    pub crb_mc: Option<CrbMcSection>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    pub fn common(&self) -> Common {
        Common {
            output: self.output.clone(),
            format: self.format,
            workers: self.workers,
            seed: self.seed,
            cutoff_limit: self.cutoff_limit,
            tail_tol: self.tail_tol,
        }
    }
}

macro_rules! overlay {
    ($flags:expr, $file:expr, $($field:ident),+) => {
        $( if $flags.$field.is_some() { $file.$field = $flags.$field.clone(); } )+
    };
}

pub trait Section: Sized {
    fn overlay(&mut self, flags: &Self);
    fn complete(self) -> Self;
    fn validate(&self) -> Result<(), String>;
}

impl Common {
    pub fn overlay(&mut self, flags: &Common) {
        overlay!(flags, self, output, format, workers, seed, cutoff_limit, tail_tol);
    }

    pub fn complete(self) -> Self {
        Self {
            output: Some(self.output.unwrap_or_else(|| "-".into())),
            format: Some(self.format.unwrap_or(Format::Csv)),
            workers: Some(self.workers.unwrap_or_else(|| {
                std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
            })),
            seed: Some(self.seed.unwrap_or(DEFAULT_SEED)),
            cutoff_limit: Some(self.cutoff_limit.unwrap_or(DEFAULT_CUTOFF_LIMIT)),
            tail_tol: Some(self.tail_tol.unwrap_or(DEFAULT_TAIL_TOLERANCE)),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.workers == Some(0) {
            return Err("workers must be at least 1".into());
        }
        if self.cutoff_limit == Some(0) {
            return Err("cutoff-limit must be at least 1".into());
        }
        if let Some(t) = self.tail_tol {
            if !(t > 0.0 && t < 1.0) {
                return Err(format!("tail-tol must lie in (0, 1), got {t}"));
            }
        }
        Ok(())
    }
}

fn grid(name: &str, values: &Option<Vec<f64>>, ok: impl Fn(f64) -> bool, domain: &str) -> Result<(), String> {
    let values = values.as_ref().ok_or_else(|| format!("{name} is not set"))?;
    if values.is_empty() {
        return Err(format!("{name} grid is empty"));
    }
    if let Some(bad) = values.iter().find(|v| !(v.is_finite() && ok(**v))) {
        return Err(format!("{name} value {bad} is outside {domain}"));
    }
    Ok(())
}

fn photons(name: &str, v: &Option<Vec<f64>>) -> Result<(), String> {
    grid(name, v, |x| x >= 0.0, "[0, inf)")
}

fn fractions(name: &str, v: &Option<Vec<f64>>) -> Result<(), String> {
    grid(name, v, |x| (0.0..=1.0).contains(&x), "[0, 1]")
}

fn noise(name: &str, v: &Option<Vec<f64>>) -> Result<(), String> {
    grid(name, v, |x| x >= 0.0, "[0, inf)")
}

fn phases(name: &str, v: &Option<Vec<f64>>) -> Result<(), String> {
    grid(name, v, |_| true, "the reals")
}

impl Section for QfiSection {
    fn overlay(&mut self, flags: &Self) {
        overlay!(flags, self, n, beta, delta, verify_cutoff);
    }

    fn complete(self) -> Self {
        Self {
            n: Some(self.n.unwrap_or_else(|| vec![1.0, 2.0, 5.0, 10.0])),
            beta: Some(self.beta.unwrap_or_else(|| vec![1.0])),
            delta: Some(self.delta.unwrap_or_else(|| vec![0.0])),
            verify_cutoff: Some(self.verify_cutoff.unwrap_or(true)),
        }
    }

    fn validate(&self) -> Result<(), String> {
        photons("n", &self.n)?;
        fractions("beta", &self.beta)?;
        noise("delta", &self.delta)
    }
}

impl Section for SweepSection {
    fn overlay(&mut self, flags: &Self) {
        if flags.delta.is_some() {
            self.delta_squared = None;
        }
        if flags.delta_squared.is_some() {
            self.delta = None;
        }
        overlay!(flags, self, n, n_max, delta, delta_squared, beta_tol, homodyne, scaling_k, verify_cutoff);
    }

    fn complete(self) -> Self {
        let n_max = self.n_max.unwrap_or(15.0);
        let delta_squared = match (&self.delta, self.delta_squared) {
            (Some(_), _) => None,
            (None, Some(d2)) => Some(d2),
            (None, None) => PANEL_DELTA_SQUARED.iter().find(|(n, _)| *n == n_max).map(|(_, d2)| d2.to_vec()),
        };
        Self {
            n: Some(self.n.unwrap_or_else(|| default_n_grid(n_max))),
            n_max: Some(n_max),
            delta: self
                .delta
                .or_else(|| delta_squared.as_ref().map(|d2| d2.iter().map(|v| v.sqrt()).collect())),
            delta_squared,
            beta_tol: Some(self.beta_tol.unwrap_or(1e-3)),
            homodyne: Some(self.homodyne.unwrap_or(false)),
            scaling_k: self.scaling_k,
            verify_cutoff: Some(self.verify_cutoff.unwrap_or(true)),
        }
    }

    fn validate(&self) -> Result<(), String> {
        grid("n", &self.n, |x| x > 0.0, "(0, inf)")?;
        if self.delta.is_none() {
            return Err("delta is not set and there is no default noise grid for this n-max".into());
        }
        noise("delta", &self.delta)?;
        if let Some(tol) = self.beta_tol {
            if !(tol > 0.0 && tol < 1.0) {
                return Err(format!("beta-tol must lie in (0, 1), got {tol}"));
            }
        }
        if let Some(k) = self.scaling_k {
            if !(k >= 1.0 && k.is_finite()) {
                return Err(format!("scaling-k must be >= 1, got {k}"));
            }
        }
        Ok(())
    }
}

impl Section for HomodyneSection {
    fn overlay(&mut self, flags: &Self) {
        overlay!(flags, self, n, beta, delta, theta, phi0);
    }

    fn complete(self) -> Self {
        Self {
            n: Some(self.n.unwrap_or_else(|| vec![1.0, 5.0])),
            beta: Some(self.beta.unwrap_or_else(|| vec![0.0, 1.0])),
            delta: Some(self.delta.unwrap_or_else(|| vec![0.0, 0.5f64.sqrt(), 1.0, 2f64.sqrt(), 5f64.sqrt()])),
            theta: Some(self.theta.unwrap_or_else(|| vec![0.0])),
            phi0: self.phi0,
        }
    }

    fn validate(&self) -> Result<(), String> {
        photons("n", &self.n)?;
        fractions("beta", &self.beta)?;
        noise("delta", &self.delta)?;
        phases("theta", &self.theta)?;
        if self.phi0.is_some() {
            phases("phi0", &self.phi0)?;
        }
        Ok(())
    }
}

impl Section for VarianceMapSection {
    fn overlay(&mut self, flags: &Self) {
        overlay!(flags, self, n, delta, beta, n_theta, threshold_n, threshold_interval, threshold_tol);
    }

    fn complete(self) -> Self {
        Self {
            n: Some(self.n.unwrap_or_else(|| vec![10.0])),
            delta: Some(self.delta.unwrap_or_else(|| vec![0.1, 0.6])),
            beta: Some(self.beta.unwrap_or_else(|| (0..=20).map(|i| i as f64 / 20.0).collect())),
            n_theta: Some(self.n_theta.unwrap_or(60)),
            threshold_n: Some(self.threshold_n.unwrap_or_default()),
            threshold_interval: Some(self.threshold_interval.unwrap_or_else(|| vec![0.01, 1.0])),
            threshold_tol: Some(self.threshold_tol.unwrap_or(1e-3)),
        }
    }

    fn validate(&self) -> Result<(), String> {
        photons("n", &self.n)?;
        noise("delta", &self.delta)?;
        fractions("beta", &self.beta)?;
        if self.n_theta == Some(0) {
            return Err("n-theta must be at least 1".into());
        }
        if let Some(t) = &self.threshold_n {
            if t.iter().any(|n| !(n.is_finite() && *n >= 0.0)) {
                return Err("threshold-n values must be >= 0".into());
            }
        }
        if let Some(iv) = &self.threshold_interval {
            if iv.len() != 2 || !(iv[0] >= 0.0 && iv[0] < iv[1]) {
                return Err(format!("threshold-interval must be two increasing values >= 0, got {iv:?}"));
            }
        }
        if let Some(tol) = self.threshold_tol {
            if !(tol > 0.0) {
                return Err(format!("threshold-tol must be positive, got {tol}"));
            }
        }
        Ok(())
    }
}

impl Section for FitSection {
    fn overlay(&mut self, flags: &Self) {
        overlay!(flags, self, input);
    }

    fn complete(self) -> Self {
        self
    }

    fn validate(&self) -> Result<(), String> {
        match &self.input {
            Some(_) => Ok(()),
            None => Err("fit needs an input table (--input)".into()),
        }
    }
}

impl Section for CrbMcSection {
    fn overlay(&mut self, flags: &Self) {
        overlay!(flags, self, n, beta, delta, theta, phi_true, samples, batches);
    }

    fn complete(self) -> Self {
        Self {
            n: Some(self.n.unwrap_or(4.0)),
            beta: Some(self.beta.unwrap_or(0.0)),
            delta: Some(self.delta.unwrap_or(0.1)),
            theta: Some(self.theta.unwrap_or(0.0)),
            phi_true: self.phi_true,
            samples: Some(self.samples.unwrap_or(100_000)),
            batches: Some(self.batches.unwrap_or(200)),
        }
    }

    fn validate(&self) -> Result<(), String> {
        photons("n", &self.n.map(|v| vec![v]))?;
        fractions("beta", &self.beta.map(|v| vec![v]))?;
        noise("delta", &self.delta.map(|v| vec![v]))?;
        if self.samples.is_some_and(|m| m < 100) {
            return Err("samples must be at least 100".into());
        }
        if self.batches.is_some_and(|b| b < 2) {
            return Err("batches must be at least 2".into());
        }
        Ok(())
    }
}

/// Overlays flags on the file section, fills defaults and validates.
pub fn resolve<S: Section + Default + Clone>(file: Option<S>, flags: &S) -> Result<S, CliError> {
    let mut section = file.unwrap_or_default();
    section.overlay(flags);
    let section = section.complete();
    section.validate().map_err(CliError::Usage)?;
    Ok(section)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_sections_parse() {
        let cfg: FileConfig = toml::from_str(
            r#"
            seed = 7
            format = "json"
            [qfi]
            n = [2.0]
            beta = [1.0]
            delta = [0.0]
            [variance-map]
            n-theta = 12
            [crb-mc]
            samples = 1000
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.format, Some(Format::Json));
        assert_eq!(cfg.qfi.unwrap().n, Some(vec![2.0]));
        assert_eq!(cfg.variance_map.unwrap().n_theta, Some(12));
        assert_eq!(cfg.crb_mc.unwrap().samples, Some(1000));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<FileConfig>("[qfi]\nnn = [1.0]\n").is_err());
        assert!(toml::from_str::<FileConfig>("sed = 3\n").is_err());
    }

    #[test]
    fn flags_override_file() {
        let file = QfiSection { n: Some(vec![1.0]), beta: Some(vec![0.5]), ..Default::default() };
        let flags = QfiSection { n: Some(vec![3.0]), ..Default::default() };
        let s = resolve(Some(file), &flags).unwrap();
        assert_eq!(s.n, Some(vec![3.0]));
        assert_eq!(s.beta, Some(vec![0.5]));
        assert_eq!(s.delta, Some(vec![0.0]));
    }

    #[test]
    fn empty_grid_is_a_usage_error() {
        let file = QfiSection { n: Some(vec![]), ..Default::default() };
        assert!(matches!(resolve(Some(file), &QfiSection::default()), Err(CliError::Usage(_))));
    }

    #[test]
    fn sweep_defaults_follow_the_panel_table() {
        let s = resolve(None, &SweepSection { n_max: Some(10.0), ..Default::default() }).unwrap();
        assert_eq!(s.n.as_ref().unwrap().len(), 10);
        assert_eq!(s.n.as_ref().unwrap()[0], 1.0);
        let d = s.delta.unwrap();
        assert!((d[0] - 4.5e-5f64.sqrt()).abs() < 1e-18);
        assert!(resolve(None, &SweepSection { n_max: Some(12.0), ..Default::default() }).is_err());
    }
}
