//! Kernel density estimation and least-squares cross-validation.
//!
//! With the Gaussian kernel the whole CV criterion is a function of two pair
//! sums over `e = exp(-(X_i - X_j)² / (4h²))`: `A(u) ∝ e` and `K(u) ∝ e²`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{std_normal_pdf, DerivedKernelId, KernelSpec};
use crate::pairwise::{gauss_pair_sums, gauss_pair_sums_within, pair_sum};
use crate::search::{minimize_log, GoldenConfig};

/// Pairs farther apart than this many bandwidths are skipped when the
/// cutoff is enabled. Both `K` and `A` are below 1e-22 there.
pub const CUTOFF_RADIUS: f64 = 10.0 * std::f64::consts::SQRT_2;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    values: Vec<f64>,
}

impl Sample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!("observation {i} is not finite")));
        }
        Ok(Sample { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Sample standard deviation (divisor `n - 1`).
    pub fn std_dev(&self) -> f64 {
        let n = self.len();
        if n < 2 {
            return 0.0;
        }
        let mean = self.values.iter().sum::<f64>() / n as f64;
        let ss: f64 = self.values.iter().map(|v| (v - mean) * (v - mean)).sum();
        (ss / (n - 1) as f64).sqrt()
    }

    /// Interquartile range with linearly interpolated quantiles.
    pub fn iqr(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let mut sorted = self.values.clone();
        sorted.sort_by(f64::total_cmp);
        quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25)
    }

    /// `min(sd, IQR/1.349)`, ignoring a zero IQR when the spread is
    /// otherwise positive (heavily tied data).
    pub fn robust_scale(&self) -> f64 {
        let sd = self.std_dev();
        let iqr = self.iqr() / 1.349;
        match (sd > 0.0, iqr > 0.0) {
            (true, true) => sd.min(iqr),
            (true, false) => sd,
            (false, true) => iqr,
            (false, false) => 0.0,
        }
    }

    /// Normal-reference pilot `1.06 σ̂ n^{-1/5}`.
    pub fn reference_bandwidth(&self) -> Result<f64> {
        let scale = self.robust_scale();
        if !(scale > 0.0) {
            return Err(Error::DegenerateSample(format!(
                "all {} observations are equal",
                self.len()
            )));
        }
        Ok(1.06 * scale * (self.len() as f64).powf(-0.2))
    }
}

pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    pub lo: f64,
    pub hi: f64,
    pub rel_tol: f64,
    pub max_expansions: u32,
}

impl SearchConfig {
    pub const DEFAULT_REL_TOL: f64 = 1e-5;
    pub const DEFAULT_MAX_EXPANSIONS: u32 = 3;

    pub fn new(lo: f64, hi: f64, rel_tol: f64, max_expansions: u32) -> Result<Self> {
        let config = SearchConfig {
            lo,
            hi,
            rel_tol,
            max_expansions,
        };
        config.validate()?;
        Ok(config)
    }

    /// `[h_ref/16, 4 h_ref]` around the normal-reference pilot.
    pub fn for_sample(sample: &Sample) -> Result<Self> {
        let h_ref = sample.reference_bandwidth()?;
        Self::new(
            h_ref / 16.0,
            4.0 * h_ref,
            Self::DEFAULT_REL_TOL,
            Self::DEFAULT_MAX_EXPANSIONS,
        )
    }

    pub fn with_rel_tol(mut self, rel_tol: f64) -> Result<Self> {
        self.rel_tol = rel_tol;
        self.validate()?;
        Ok(self)
    }

    pub fn scaled(self, s: f64) -> Result<Self> {
        Self::new(self.lo * s, self.hi * s, self.rel_tol, self.max_expansions)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo > 0.0 && self.hi > self.lo && self.hi.is_finite()) {
            return Err(Error::domain(format!(
                "search bracket must satisfy 0 < lo < hi, got [{}, {}]",
                self.lo, self.hi
            )));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol <= 1e-2) {
            return Err(Error::domain(format!(
                "rel_tol must lie in (0, 0.01], got {}",
                self.rel_tol
            )));
        }
        if self.max_expansions > 5 {
            return Err(Error::domain(format!(
                "max_expansions must be at most 5, got {}",
                self.max_expansions
            )));
        }
        Ok(())
    }
}

/// How a search bracket is chosen for each sample handed to the minimizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BracketRule {
    /// Normal-reference bracket of [`SearchConfig::for_sample`].
    Auto { rel_tol: f64, max_expansions: u32 },
    /// The same bracket for every sample.
    Fixed(SearchConfig),
}

impl Default for BracketRule {
    fn default() -> Self {
        BracketRule::Auto {
            rel_tol: SearchConfig::DEFAULT_REL_TOL,
            max_expansions: SearchConfig::DEFAULT_MAX_EXPANSIONS,
        }
    }
}

impl BracketRule {
    pub fn config_for(&self, sample: &Sample) -> Result<SearchConfig> {
        match *self {
            BracketRule::Auto {
                rel_tol,
                max_expansions,
            } => {
                let base = SearchConfig::for_sample(sample)?;
                SearchConfig::new(base.lo, base.hi, rel_tol, max_expansions)
            }
            BracketRule::Fixed(config) => {
                config.validate()?;
                Ok(config)
            }
        }
    }

    pub fn rel_tol(&self) -> f64 {
        match self {
            BracketRule::Auto { rel_tol, .. } => *rel_tol,
            BracketRule::Fixed(c) => c.rel_tol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "CV")]
    Cv,
    #[serde(rename = "MISE")]
    Mise,
    #[serde(rename = "PCV")]
    Pcv,
    #[serde(rename = "PCVP")]
    Pcvp,
    #[serde(rename = "MA")]
    Ma,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Cv => "CV",
            Method::Mise => "MISE",
            Method::Pcv => "PCV",
            Method::Pcvp => "PCVP",
            Method::Ma => "MA",
        })
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "CV" => Ok(Method::Cv),
            "MISE" => Ok(Method::Mise),
            "PCV" => Ok(Method::Pcv),
            "PCVP" => Ok(Method::Pcvp),
            "MA" => Ok(Method::Ma),
            other => Err(Error::Parse(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthEstimate {
    pub h: f64,
    pub objective: f64,
    pub boundary_hit: bool,
    pub group_size: usize,
    pub method: Method,
    pub evaluations: usize,
    pub expansions: u32,
}

/// `f̂_h(x) = (nh)^{-1} Σ K((x - X_i)/h)` at each grid point.
pub fn kde_eval(sample: &Sample, h: f64, grid: &[f64]) -> Result<Vec<f64>> {
    check_bandwidth(h)?;
    if sample.is_empty() {
        return Err(Error::domain(
            "cannot estimate a density from an empty sample",
        ));
    }
    let x = sample.values();
    let norm = 1.0 / (x.len() as f64 * h);
    Ok(grid
        .par_iter()
        .map(|&g| {
            norm * x
                .iter()
                .map(|&xi| std_normal_pdf((g - xi) / h))
                .sum::<f64>()
        })
        .collect())
}

fn check_bandwidth(h: f64) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::domain(format!(
            "bandwidth must be positive and finite, got {h}"
        )));
    }
    Ok(())
}

/// Prepared CV objective for one sample.
#[derive(Debug, Clone)]
pub struct CvCriterion {
    x: Vec<f64>,
    cutoff: bool,
}

impl CvCriterion {
    pub fn new(sample: &Sample) -> Result<Self> {
        Self::build(sample, false)
    }

    /// Skips pairs more than [`CUTOFF_RADIUS`] bandwidths apart.
    pub fn with_cutoff(sample: &Sample) -> Result<Self> {
        Self::build(sample, true)
    }

    fn build(sample: &Sample, cutoff: bool) -> Result<Self> {
        if sample.len() < 2 {
            return Err(Error::domain(format!(
                "CV needs n >= 2, got {}",
                sample.len()
            )));
        }
        let mut x = sample.values().to_vec();
        if cutoff {
            x.sort_by(f64::total_cmp);
        }
        Ok(CvCriterion { x, cutoff })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// `CV(h) = ∫f̂² - (2/n) Σ f̂^i(X_i)` evaluated through pair sums.
    pub fn score(&self, h: f64) -> Result<f64> {
        check_bandwidth(h)?;
        let n = self.x.len() as f64;
        let scale = 0.25 / (h * h);
        let sums = if self.cutoff {
            gauss_pair_sums_within(&self.x, scale, CUTOFF_RADIUS * h)
        } else {
            gauss_pair_sums(&self.x, scale)
        };
        let a0 = 1.0 / (2.0 * PI.sqrt());
        let k0 = 1.0 / (2.0 * PI).sqrt();
        let int_f2 = a0 * (n + 2.0 * sums.first) / (n * n * h);
        let loo = 2.0 * k0 * 2.0 * sums.second / (n * (n - 1.0) * h);
        Ok(int_f2 - loo)
    }
}

pub fn cv_score(sample: &Sample, h: f64) -> Result<f64> {
    CvCriterion::new(sample)?.score(h)
}

/// `(n²h)^{-1} Σ_i Σ_j g((X_i - X_j)/h)` for a derived kernel `g`.
///
/// With `g = A, C, B, D` this equals `∫f̂²`, `∫f̃²`, `∫f̂f̃` and `∫f̂f*`,
/// where `f̃` and `f*` are the estimators built from `L` and `H`.
pub fn kernel_u_statistic(
    kernel: &KernelSpec,
    id: DerivedKernelId,
    sample: &Sample,
    h: f64,
) -> Result<f64> {
    check_bandwidth(h)?;
    if sample.is_empty() {
        return Err(Error::domain("empty sample"));
    }
    let n = sample.len() as f64;
    let g0 = kernel.eval_derived(id, 0.0)?;
    let off = pair_sum(sample.values(), |d| {
        kernel.eval_derived(id, d / h).unwrap_or(f64::NAN)
    });
    Ok((n * g0 + 2.0 * off) / (n * n * h))
}

/// CV bandwidth by golden-section search in `ln h`; boundary hits expand the
/// offending edge by 4 up to `config.max_expansions` times.
pub fn minimize_cv(sample: &Sample, config: &SearchConfig) -> Result<BandwidthEstimate> {
    minimize_criterion(&CvCriterion::new(sample)?, config)
}

pub fn minimize_criterion(
    criterion: &CvCriterion,
    config: &SearchConfig,
) -> Result<BandwidthEstimate> {
    config.validate()?;
    let golden = GoldenConfig {
        rel_tol: config.rel_tol,
        max_expansions: config.max_expansions,
        expansion_factor: 4.0,
        polish: true,
        fail_on_boundary: false,
    };
    let out = minimize_log(|h| criterion.score(h), config.lo, config.hi, &golden)?;
    Ok(BandwidthEstimate {
        h: out.x,
        objective: out.value,
        boundary_hit: out.boundary_hit,
        group_size: criterion.len(),
        method: Method::Cv,
        evaluations: out.evaluations,
        expansions: out.expansions,
    })
}

/// [`minimize_cv`] with the normal-reference bracket.
pub fn cv_bandwidth(sample: &Sample) -> Result<BandwidthEstimate> {
    let config = SearchConfig::for_sample(sample)?;
    minimize_cv(sample, &config)
}
