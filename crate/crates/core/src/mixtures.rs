//! Gaussian mixtures as ground-truth densities.
//!
//! Everything needed from a mixture (roughness functionals, the exact MISE of
//! a Gaussian-kernel estimator, the MISE-optimal bandwidth) reduces to sums
//! of Gaussian evaluations over pairs of components.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cv::{BandwidthEstimate, Method};
use crate::error::{Error, Result};
use crate::kernels::{normal_pdf, KernelSpec};
use crate::search::{minimize_log, GoldenConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalMixture {
    weights: Vec<f64>,
    means: Vec<f64>,
    sds: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MixturePreset {
    MW1,
    MW2,
    MW8,
}

impl MixturePreset {
    pub const ALL: [MixturePreset; 3] =
        [MixturePreset::MW1, MixturePreset::MW2, MixturePreset::MW8];

    pub fn mixture(self) -> NormalMixture {
        let (w, m, s): (Vec<f64>, Vec<f64>, Vec<f64>) = match self {
            MixturePreset::MW1 => (vec![1.0], vec![0.0], vec![1.0]),
            MixturePreset::MW2 => (
                vec![0.2, 0.2, 0.6],
                vec![0.0, 0.5, 13.0 / 12.0],
                vec![1.0, 2.0 / 3.0, 5.0 / 9.0],
            ),
            MixturePreset::MW8 => (vec![0.75, 0.25], vec![0.0, 1.5], vec![1.0, 1.0 / 3.0]),
        };
        NormalMixture::new(w, m, s).expect("preset mixtures are valid")
    }
}

impl fmt::Display for MixturePreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            MixturePreset::MW1 => "MW1",
            MixturePreset::MW2 => "MW2",
            MixturePreset::MW8 => "MW8",
        };
        f.write_str(name)
    }
}

impl FromStr for MixturePreset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "MW1" => Ok(MixturePreset::MW1),
            "MW2" => Ok(MixturePreset::MW2),
            "MW8" => Ok(MixturePreset::MW8),
            other => Err(Error::Parse(format!("unknown mixture preset '{other}'"))),
        }
    }
}

/// Gaussian-product identity: `∫ φ_a(x-μ₁) φ_b(x-μ₂) dx = φ_{√(a²+b²)}(μ₁-μ₂)`.
#[derive(Debug, Clone, Copy)]
struct ComponentPair {
    weight: f64,
    delta: f64,
    var_sum: f64,
}

impl NormalMixture {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, sds: Vec<f64>) -> Result<Self> {
        let m = weights.len();
        if m == 0 || means.len() != m || sds.len() != m {
            return Err(Error::InvalidMixture(format!(
                "component counts differ or are zero (weights {}, means {}, sds {})",
                m,
                means.len(),
                sds.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidMixture("weights must be positive".into()));
        }
        if sds.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidMixture(
                "standard deviations must be positive".into(),
            ));
        }
        if means.iter().any(|mu| !mu.is_finite()) {
            return Err(Error::InvalidMixture("means must be finite".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMixture(format!(
                "weights sum to {total}, not 1"
            )));
        }
        Ok(NormalMixture {
            weights,
            means,
            sds,
        })
    }

    /// Like [`NormalMixture::new`] but rescales the weights to sum to one.
    pub fn normalized(weights: Vec<f64>, means: Vec<f64>, sds: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::InvalidMixture(
                "weights must have a positive sum".into(),
            ));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Self::new(weights, means, sds)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn sds(&self) -> &[f64] {
        &self.sds
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    /// The mixture of `s·X + shift`.
    pub fn affine(&self, scale: f64, shift: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::domain("scale must be positive"));
        }
        Self::new(
            self.weights.clone(),
            self.means.iter().map(|m| scale * m + shift).collect(),
            self.sds.iter().map(|s| scale * s).collect(),
        )
    }

    pub fn mean(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.means)
            .map(|(w, m)| w * m)
            .sum()
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        self.weights
            .iter()
            .zip(self.means.iter().zip(&self.sds))
            .map(|(w, (m, s))| w * (s * s + (m - mu) * (m - mu)))
            .sum()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.weights
            .iter()
            .zip(self.means.iter().zip(&self.sds))
            .map(|(w, (m, s))| w * normal_pdf(x - m, *s))
            .sum()
    }

    /// `f''(x)`
    pub fn pdf_second_derivative(&self, x: f64) -> f64 {
        self.weights
            .iter()
            .zip(self.means.iter().zip(&self.sds))
            .map(|(w, (m, s))| {
                let z = (x - m) / s;
                w * normal_pdf(x - m, *s) * (z * z - 1.0) / (s * s)
            })
            .sum()
    }

    fn pairs(&self) -> impl Iterator<Item = ComponentPair> + '_ {
        let m = self.components();
        (0..m).flat_map(move |i| {
            (0..m).map(move |j| ComponentPair {
                weight: self.weights[i] * self.weights[j],
                delta: self.means[i] - self.means[j],
                var_sum: self.sds[i] * self.sds[i] + self.sds[j] * self.sds[j],
            })
        })
    }

    /// `∫ f²` (order 0) or `∫ (f'')²` (order 2).
    pub fn roughness(&self, order: u32) -> Result<f64> {
        match order {
            0 => Ok(self
                .pairs()
                .map(|p| p.weight * normal_pdf(p.delta, p.var_sum.sqrt()))
                .sum()),
            // ∫ φ''_a(x-μ₁) φ''_b(x-μ₂) dx is the fourth derivative of
            // φ_s at μ₁-μ₂ with s² = a² + b².
            2 => Ok(self
                .pairs()
                .map(|p| {
                    let (d, v) = (p.delta, p.var_sum);
                    let poly = (d * d * d * d - 6.0 * d * d * v + 3.0 * v * v) / (v * v * v * v);
                    p.weight * normal_pdf(d, v.sqrt()) * poly
                })
                .sum()),
            other => Err(Error::domain(format!(
                "roughness of order {other} is not supported"
            ))),
        }
    }

    /// `Σ w_i w_j φ_{√(a h² + σ_i² + σ_j²)}(μ_i - μ_j)`
    fn omega(&self, a: f64, h: f64) -> f64 {
        self.pairs()
            .map(|p| p.weight * normal_pdf(p.delta, (a * h * h + p.var_sum).sqrt()))
            .sum()
    }

    /// Exact MISE of the Gaussian-kernel estimator with bandwidth `h` from
    /// `n` observations:
    ///
    /// ```text
    /// R(K)/(nh) + (1 - 1/n) Ω₂ - 2 Ω₁ + Ω₀
    /// ```
    ///
    /// where `Ω_a` is the component-pair sum with variances `a h² + σ_i² + σ_j²`.
    pub fn exact_mise(&self, n: usize, h: f64) -> Result<f64> {
        if n < 2 {
            return Err(Error::domain(format!("exact MISE needs n >= 2, got {n}")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::domain(format!(
                "bandwidth must be positive, got {h}"
            )));
        }
        let nf = n as f64;
        let rk = 1.0 / (2.0 * PI.sqrt());
        Ok(
            rk / (nf * h) + (1.0 - 1.0 / nf) * self.omega(2.0, h) - 2.0 * self.omega(1.0, h)
                + self.omega(0.0, 0.0),
        )
    }

    /// `D = [R(K) / (R(f'') σ_K⁴)]^{1/5}`
    pub fn bandwidth_constant(&self, kernel: &KernelSpec) -> Result<f64> {
        let i2 = self.roughness(2)?;
        Ok((kernel.roughness / (i2 * kernel.sigma4())).powf(0.2))
    }

    /// `D n^{-1/5}`
    pub fn asymptotic_optimal_bandwidth(&self, kernel: &KernelSpec, n: usize) -> Result<f64> {
        if n < 1 {
            return Err(Error::domain("n must be at least 1"));
        }
        Ok(self.bandwidth_constant(kernel)? * (n as f64).powf(-0.2))
    }

    /// The MISE-optimal bandwidth `h_{n,0}`.
    pub fn mise_optimal_bandwidth(&self, n: usize) -> Result<BandwidthEstimate> {
        if n < 2 {
            return Err(Error::domain(format!("n must be at least 2, got {n}")));
        }
        let pilot = self.asymptotic_optimal_bandwidth(&KernelSpec::gaussian(), n)?;
        let config = GoldenConfig {
            rel_tol: 1e-6,
            max_expansions: 3,
            expansion_factor: 2.0,
            polish: false,
            fail_on_boundary: true,
        };
        let out = minimize_log(|h| self.exact_mise(n, h), pilot / 4.0, 4.0 * pilot, &config)?;
        Ok(BandwidthEstimate {
            h: out.x,
            objective: out.value,
            boundary_hit: false,
            group_size: n,
            method: Method::Mise,
            evaluations: out.evaluations,
            expansions: out.expansions,
        })
    }

    /// `n` i.i.d. draws: a component by weight, then a Gaussian draw.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(n, &mut rng)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        let mut cumulative = Vec::with_capacity(self.components());
        let mut acc = 0.0;
        for w in &self.weights {
            acc += w;
            cumulative.push(acc);
        }
        let last = self.components() - 1;
        (0..n)
            .map(|_| {
                let u: f64 = rng.random::<f64>() * acc;
                let k = cumulative.iter().position(|&c| u < c).unwrap_or(last);
                let z: f64 = StandardNormal.sample(rng);
                self.means[k] + self.sds[k] * z
            })
            .collect()
    }

    /// Random mixture: `M ∈ {2..20}` with `P(m) ∝ 1/m`, Dirichlet(½,…,½)
    /// weights, precisions `1/σ²` i.i.d. Gamma(shape ½, rate ½), and
    /// `μ_j | σ_j ~ N(0, σ_j²)`.
    pub fn random(seed: u64) -> NormalMixture {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let harmonic: f64 = (2..=20).map(|m| 1.0 / m as f64).sum();
        let u: f64 = rng.random::<f64>() * harmonic;
        let mut acc = 0.0;
        let mut m = 20;
        for k in 2..=20 {
            acc += 1.0 / k as f64;
            if u < acc {
                m = k;
                break;
            }
        }

        // Dirichlet(½) via normalized Gamma(½, 1) draws. Shape ½ puts real
        // mass near zero, so redraw the (vanishingly rare) exact-zero case.
        let unit_gamma = Gamma::new(0.5, 1.0).expect("valid gamma");
        let weights = loop {
            let raw: Vec<f64> = (0..m).map(|_| unit_gamma.sample(&mut rng)).collect();
            let total: f64 = raw.iter().sum();
            let w: Vec<f64> = raw.iter().map(|g| g / total).collect();
            if w.iter().all(|x| *x > 0.0 && x.is_finite()) {
                break w;
            }
        };
        // Rate ½ is scale 2.
        let precision = Gamma::new(0.5, 2.0).expect("valid gamma");
        let mut sds = Vec::with_capacity(m);
        let mut means = Vec::with_capacity(m);
        for _ in 0..m {
            let sd = loop {
                let tau: f64 = precision.sample(&mut rng);
                let sd = tau.sqrt().recip();
                if sd.is_finite() && sd > 0.0 {
                    break sd;
                }
            };
            let z: f64 = StandardNormal.sample(&mut rng);
            sds.push(sd);
            means.push(sd * z);
        }
        NormalMixture::normalized(weights, means, sds).expect("generated mixture is valid")
    }

    /// Reads `weight,mean,sd` records, one per line. Blank lines and lines
    /// starting with `#` are ignored; weights are renormalized.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        text.parse()
    }

    pub fn to_records(&self) -> String {
        let mut out = String::new();
        for i in 0..self.components() {
            out.push_str(&format!(
                "{:?},{:?},{:?}\n",
                self.weights[i], self.means[i], self.sds[i]
            ));
        }
        out
    }
}

impl FromStr for NormalMixture {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let (mut w, mut m, mut s) = (Vec::new(), Vec::new(), Vec::new());
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(Error::Parse(format!(
                    "line {}: expected 'weight,mean,sd', got '{line}'",
                    lineno + 1
                )));
            }
            let parse = |v: &str| {
                v.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: '{v}': {e}", lineno + 1)))
            };
            w.push(parse(fields[0])?);
            m.push(parse(fields[1])?);
            s.push(parse(fields[2])?);
        }
        NormalMixture::normalized(w, m, s)
    }
}
