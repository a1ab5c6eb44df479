//! Convergence experiment harness.
//!
//! Reproduces the pointwise and spectral behavior of the graph connection
//! Laplacian at desk scale: pointwise operator error against analytic
//! targets, rescaled spectra against catalogued references, boundary/Neumann
//! checks, orientability verdicts, heat-kernel powers, and the bandwidth
//! schedules tying `h` to `n`.

mod runs;

pub use runs::*;

use crate::error::{Error, Result};

/// How the kernel bandwidth is tied to the sample count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandwidthRule {
    /// `h = c (log n / n)^{1/(d/2 + 3)}` — the alpha = 0 schedule.
    AlphaZero { c: f64 },
    /// `h = c (log n / n)^{1/(d/2 + 4)}` — the alpha > 0 schedule.
    AlphaPositive { c: f64 },
    /// Fixed bandwidth, independent of `n`.
    Fixed { h: f64 },
}

impl BandwidthRule {
    pub fn alpha_zero() -> Self {
        BandwidthRule::AlphaZero { c: 1.0 }
    }

    pub fn alpha_positive() -> Self {
        BandwidthRule::AlphaPositive { c: 1.0 }
    }

    pub fn h(&self, n: usize, d: usize) -> f64 {
        bandwidth_schedule(n, d, *self)
    }
}

/// Bandwidth from the schedule: the exponent is `1/(d/2 + 3)` for the
/// unnormalized kernel and `1/(d/2 + 4)` once density normalization is in
/// play, balancing squared bias against sampling variance.
pub fn bandwidth_schedule(n: usize, d: usize, rule: BandwidthRule) -> f64 {
    assert!(n >= 10, "schedule defined for n >= 10");
    let base = (n as f64).ln() / n as f64;
    match rule {
        BandwidthRule::AlphaZero { c } => c * base.powf(1.0 / (d as f64 / 2.0 + 3.0)),
        BandwidthRule::AlphaPositive { c } => c * base.powf(1.0 / (d as f64 / 2.0 + 4.0)),
        BandwidthRule::Fixed { h } => h,
    }
}

/// One experiment row: a named metric at a given `(n, h)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub n: usize,
    pub h: f64,
    pub metric: String,
    pub value: f64,
}

/// A named pass/fail outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
}

/// Deterministic product of one experiment run.
#[derive(Debug, Clone, Default)]
pub struct ConvergenceReport {
    pub rows: Vec<ReportRow>,
    pub verdicts: Vec<Verdict>,
    /// Key-value provenance: config echo, seeds, library version.
    pub provenance: Vec<(String, String)>,
}

impl ConvergenceReport {
    pub fn push(&mut self, n: usize, h: f64, metric: &str, value: f64) {
        self.rows.push(ReportRow {
            n,
            h,
            metric: metric.to_string(),
            value,
        });
    }

    pub fn verdict(&mut self, name: &str, pass: bool) {
        self.verdicts.push(Verdict {
            name: name.to_string(),
            pass,
        });
    }

    pub fn metric_series(&self, metric: &str) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.metric == metric)
            .map(|r| (r.n as f64, r.value))
            .collect()
    }

    pub fn value(&self, metric: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.metric == metric).map(|r| r.value)
    }
}

/// Experiment configuration; built by the CLI from flat key-value configs.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub manifold: crate::manifolds::ManifoldModel,
    pub density: crate::manifolds::DensitySpec,
    pub n_schedule: Vec<usize>,
    pub alpha: f64,
    /// Boundary-layer exponent: points within `h^gamma` of the boundary are
    /// excluded from interior aggregates.
    pub gamma: f64,
    pub bandwidth_rule: BandwidthRule,
    pub transport_source: TransportSource,
    pub seed: u64,
    pub eig_count: usize,
    pub field: Option<String>,
    /// Diffusion time for the heat-power experiment.
    pub t: f64,
    /// Independent (n, seed) cells aggregated per schedule entry in the
    /// pointwise experiment; medians are averaged across them.
    pub reps: usize,
}

/// Where the per-edge connection comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportSource {
    Trivial,
    Analytic,
    EstimatedPca,
    Z2Analytic,
    Z2Pca,
}

impl TransportSource {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "trivial" => Ok(TransportSource::Trivial),
            "analytic" => Ok(TransportSource::Analytic),
            "pca" | "estimated_pca" => Ok(TransportSource::EstimatedPca),
            "z2-analytic" | "z2_analytic" => Ok(TransportSource::Z2Analytic),
            "z2-pca" | "z2_pca" => Ok(TransportSource::Z2Pca),
            other => Err(Error::InvalidConfig(format!("unknown transport `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TransportSource::Trivial => "trivial",
            TransportSource::Analytic => "analytic",
            TransportSource::EstimatedPca => "pca",
            TransportSource::Z2Analytic => "z2-analytic",
            TransportSource::Z2Pca => "z2-pca",
        }
    }
}

impl ExperimentConfig {
    pub fn new(manifold: crate::manifolds::ManifoldModel) -> Self {
        ExperimentConfig {
            manifold,
            density: crate::manifolds::DensitySpec::Uniform,
            n_schedule: vec![1000],
            alpha: 1.0,
            gamma: 0.45,
            bandwidth_rule: BandwidthRule::alpha_positive(),
            transport_source: TransportSource::Trivial,
            seed: 42,
            eig_count: 12,
            field: None,
            t: 0.5,
            reps: 1,
        }
    }

    /// Checks the structural invariants (schedule strictly increasing; gamma
    /// in the spectral-convergence window when spectral experiments run it).
    pub fn validate(&self, spectral_mode: bool) -> Result<()> {
        if self.n_schedule.is_empty() {
            return Err(Error::InvalidConfig("empty n_schedule".into()));
        }
        if !self.n_schedule.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidConfig(
                "n_schedule must be strictly increasing".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig("alpha must lie in [0, 1]".into()));
        }
        let lo = if spectral_mode { 0.4 } else { 0.0 };
        if self.gamma <= lo || self.gamma >= 0.5 {
            return Err(Error::InvalidConfig(format!(
                "gamma {} outside ({lo}, 0.5)",
                self.gamma
            )));
        }
        Ok(())
    }
}
