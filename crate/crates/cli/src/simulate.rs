//! Replicated Monte Carlo over a known mixture.
//!
//! Replicate `r` draws its data with seed `split_seed(seed, r)`; its
//! partitions use `split_seed(that, 0)` as the base seed for every `p`.
//! For each `p` a single permuted run with the largest requested
//! permutation count is made: PCV is its first permutation and PCVP with
//! `N` permutations is the mean of its first `N`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use pcv_core::asymptotics::expected_cv_bandwidth;
use pcv_core::cv::{minimize_criterion, BracketRule, CvCriterion, Method, Sample};
use pcv_core::kernels::KernelSpec;
use pcv_core::mixtures::NormalMixture;
use pcv_core::pcv::{permuted_pcv, PcvOptions, TabulatedPrior};
use pcv_core::seed::split_seed;

use crate::error::{usage, CliResult};
use crate::output::Table;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    /// Label used in output tables.
    pub label: String,
    pub mixture: NormalMixture,
    pub n: usize,
    pub replicates: usize,
    pub methods: Vec<Method>,
    pub p_values: Vec<usize>,
    /// Permutation counts for PCVP.
    pub permutations: Vec<usize>,
    pub seed: u64,
    pub rel_tol: f64,
    pub max_expansions: u32,
    pub min_group: usize,
    pub cutoff: bool,
    /// Prior over `n^{-1/6} p` for model averaging across `p_values`.
    pub prior: Option<TabulatedPrior>,
}

impl SimScenario {
    pub fn new(
        label: impl Into<String>,
        mixture: NormalMixture,
        n: usize,
        replicates: usize,
    ) -> Self {
        SimScenario {
            label: label.into(),
            mixture,
            n,
            replicates,
            methods: vec![Method::Cv],
            p_values: Vec::new(),
            permutations: Vec::new(),
            seed: 0,
            rel_tol: 1e-3,
            max_expansions: 3,
            min_group: pcv_core::pcv::DEFAULT_MIN_GROUP,
            cutoff: false,
            prior: None,
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.replicates < 2 {
            return Err(usage("a simulation needs at least 2 replicates"));
        }
        if self.n < 2 {
            return Err(usage("sample size must be at least 2"));
        }
        if self.methods.is_empty() {
            return Err(usage("no methods requested"));
        }
        let needs_p = self
            .methods
            .iter()
            .any(|m| matches!(m, Method::Pcv | Method::Pcvp | Method::Ma));
        if needs_p && self.p_values.is_empty() {
            return Err(usage("PCV-type methods need at least one p"));
        }
        for &p in &self.p_values {
            if p == 0 || self.n / p < self.min_group {
                return Err(usage(format!(
                    "p = {p} gives groups below the minimum size {} at n = {}",
                    self.min_group, self.n
                )));
            }
        }
        if self.methods.contains(&Method::Pcvp)
            && (self.permutations.is_empty() || self.permutations.contains(&0))
        {
            return Err(usage("PCVP needs positive permutation counts"));
        }
        if self.methods.contains(&Method::Ma) && self.prior.is_none() {
            return Err(usage("model averaging needs a prior"));
        }
        if self.methods.contains(&Method::Mise) {
            return Err(usage("MISE is an oracle, not a data-driven method"));
        }
        Ok(())
    }

    fn options(&self) -> PcvOptions {
        PcvOptions {
            bracket: BracketRule::Auto {
                rel_tol: self.rel_tol,
                max_expansions: self.max_expansions,
            },
            min_group: self.min_group,
            cutoff: self.cutoff,
        }
    }

    fn max_permutations(&self) -> usize {
        if self.methods.contains(&Method::Pcvp) {
            self.permutations.iter().copied().max().unwrap_or(1)
        } else {
            1
        }
    }
}

/// Draws of one method across replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodDraws {
    pub method: Method,
    /// Number of groups (1 for CV).
    pub p: usize,
    pub permutations: usize,
    pub values: Vec<f64>,
    pub boundary_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub method: Method,
    pub p: usize,
    pub permutations: usize,
    pub replicates: usize,
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
    /// `Σ (ĥ - h_{n,0})²`
    pub sse_vs_opt: f64,
    /// `(mean - h̃_n) / std_error`
    pub t_stat: f64,
    pub boundary_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationOutput {
    pub label: String,
    pub n: usize,
    pub h_opt: f64,
    pub h_tilde: f64,
    pub draws: Vec<MethodDraws>,
    pub summaries: Vec<Summary>,
}

impl SimulationOutput {
    pub fn draws_for(&self, method: Method, p: usize, permutations: usize) -> Option<&MethodDraws> {
        self.draws
            .iter()
            .find(|d| d.method == method && d.p == p && d.permutations == permutations)
    }

    pub fn summary_for(&self, method: Method, p: usize, permutations: usize) -> Option<&Summary> {
        self.summaries
            .iter()
            .find(|d| d.method == method && d.p == p && d.permutations == permutations)
    }

    pub const COLUMNS: [&'static str; 15] = [
        "mixture",
        "n",
        "method",
        "p",
        "permutations",
        "replicates",
        "mean",
        "variance",
        "std_error",
        "sse_vs_opt",
        "h_opt",
        "h_tilde",
        "t_stat",
        "boundary_count",
        "label_note",
    ];

    pub fn table(&self) -> Table {
        let mut t = Table::new(&Self::COLUMNS[..14]);
        for s in &self.summaries {
            t.push(vec![
                self.label.clone().into(),
                self.n.into(),
                s.method.to_string().into(),
                s.p.into(),
                s.permutations.into(),
                s.replicates.into(),
                s.mean.into(),
                s.variance.into(),
                s.std_error.into(),
                s.sse_vs_opt.into(),
                self.h_opt.into(),
                self.h_tilde.into(),
                s.t_stat.into(),
                s.boundary_count.into(),
            ]);
        }
        t
    }

    /// Per-replicate draws, one row per (replicate, method).
    pub fn draws_table(&self) -> Table {
        let mut t = Table::new(&[
            "mixture",
            "n",
            "method",
            "p",
            "permutations",
            "replicate",
            "h",
        ]);
        for d in &self.draws {
            for (r, h) in d.values.iter().enumerate() {
                t.push(vec![
                    self.label.clone().into(),
                    self.n.into(),
                    d.method.to_string().into(),
                    d.p.into(),
                    d.permutations.into(),
                    r.into(),
                    (*h).into(),
                ]);
            }
        }
        t
    }
}

struct Replicate {
    cv: Option<(f64, bool)>,
    /// Per `p`: permutation bandwidths and the per-permutation boundary counts.
    pcv: Vec<(Vec<f64>, Vec<usize>)>,
}

fn run_replicate(scenario: &SimScenario, r: usize) -> CliResult<Replicate> {
    let data_seed = split_seed(scenario.seed, r as u64);
    let sample = Sample::new(scenario.mixture.sample(scenario.n, data_seed))?;
    let opts = scenario.options();

    let cv = if scenario.methods.contains(&Method::Cv) {
        let crit = if scenario.cutoff {
            CvCriterion::with_cutoff(&sample)?
        } else {
            CvCriterion::new(&sample)?
        };
        let config = opts.bracket.config_for(&sample)?;
        let est = minimize_criterion(&crit, &config)?;
        Some((est.h, est.boundary_hit))
    } else {
        None
    };

    let needs_pcv = scenario
        .methods
        .iter()
        .any(|m| matches!(m, Method::Pcv | Method::Pcvp | Method::Ma));
    let mut pcv = Vec::new();
    if needs_pcv {
        let base = split_seed(data_seed, 0);
        let perms = scenario.max_permutations();
        for &p in &scenario.p_values {
            let res = permuted_pcv(&sample, p, perms, base, &opts)?;
            let per_perm_boundary = res
                .per_group
                .chunks(p)
                .map(|c| c.iter().filter(|e| e.boundary_hit).count())
                .collect();
            pcv.push((res.per_permutation, per_perm_boundary));
        }
    }
    Ok(Replicate { cv, pcv })
}

fn summarize(draws: &MethodDraws, h_opt: f64, h_tilde: f64) -> Summary {
    let t = draws.values.len();
    let mean = draws.values.iter().sum::<f64>() / t as f64;
    let variance = draws.values.iter().map(|h| (h - mean).powi(2)).sum::<f64>() / (t - 1) as f64;
    let std_error = (variance / t as f64).sqrt();
    Summary {
        method: draws.method,
        p: draws.p,
        permutations: draws.permutations,
        replicates: t,
        mean,
        variance,
        std_error,
        sse_vs_opt: draws.values.iter().map(|h| (h - h_opt).powi(2)).sum(),
        t_stat: (mean - h_tilde) / std_error,
        boundary_count: draws.boundary_count,
    }
}

pub fn run_simulation(scenario: &SimScenario) -> CliResult<SimulationOutput> {
    scenario.validate()?;
    let kernel = KernelSpec::gaussian();
    let h_opt = scenario.mixture.mise_optimal_bandwidth(scenario.n)?.h;
    let h_tilde = expected_cv_bandwidth(&scenario.mixture, &kernel, scenario.n)?;

    let results: Vec<CliResult<Replicate>> = (0..scenario.replicates)
        .into_par_iter()
        .map(|r| run_replicate(scenario, r))
        .collect();
    let reps = results.into_iter().collect::<CliResult<Vec<_>>>()?;

    let mut draws = Vec::new();
    if scenario.methods.contains(&Method::Cv) {
        let values: Vec<(f64, bool)> = reps.iter().map(|r| r.cv.expect("cv requested")).collect();
        draws.push(MethodDraws {
            method: Method::Cv,
            p: 1,
            permutations: 1,
            values: values.iter().map(|v| v.0).collect(),
            boundary_count: values.iter().filter(|v| v.1).count(),
        });
    }
    for (j, &p) in scenario.p_values.iter().enumerate() {
        if scenario.methods.contains(&Method::Pcv) {
            draws.push(MethodDraws {
                method: Method::Pcv,
                p,
                permutations: 1,
                values: reps.iter().map(|r| r.pcv[j].0[0]).collect(),
                boundary_count: reps.iter().map(|r| r.pcv[j].1[0]).sum(),
            });
        }
        if scenario.methods.contains(&Method::Pcvp) {
            for &m in &scenario.permutations {
                draws.push(MethodDraws {
                    method: Method::Pcvp,
                    p,
                    permutations: m,
                    values: reps
                        .iter()
                        .map(|r| r.pcv[j].0[..m].iter().sum::<f64>() / m as f64)
                        .collect(),
                    boundary_count: reps
                        .iter()
                        .map(|r| r.pcv[j].1[..m].iter().sum::<usize>())
                        .sum(),
                });
            }
        }
    }
    if scenario.methods.contains(&Method::Ma) {
        let prior = scenario.prior.as_ref().expect("validated");
        let scale = (scenario.n as f64).powf(-1.0 / 6.0);
        let weights: Vec<f64> = scenario
            .p_values
            .iter()
            .map(|&p| {
                if scenario.p_values.len() == 1 {
                    1.0
                } else {
                    prior.density_at(scale * p as f64)
                }
            })
            .collect();
        let total: f64 = weights.iter().sum();
        if total.is_nan() || total <= 0.0 {
            return Err(pcv_core::error::Error::DegeneratePrior.into());
        }
        draws.push(MethodDraws {
            method: Method::Ma,
            p: 0,
            permutations: 1,
            values: reps
                .iter()
                .map(|r| {
                    weights
                        .iter()
                        .zip(&r.pcv)
                        .map(|(w, v)| w * v.0[0])
                        .sum::<f64>()
                        / total
                })
                .collect(),
            boundary_count: reps
                .iter()
                .map(|r| r.pcv.iter().map(|v| v.1[0]).sum::<usize>())
                .sum(),
        });
    }

    let summaries = draws.iter().map(|d| summarize(d, h_opt, h_tilde)).collect();
    Ok(SimulationOutput {
        label: scenario.label.clone(),
        n: scenario.n,
        h_opt,
        h_tilde,
        draws,
        summaries,
    })
}

fn sample_variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// `Var(a)/Var(b)` over paired replicates and its delete-one jackknife
/// standard error.
pub fn variance_ratio(a: &[f64], b: &[f64]) -> CliResult<(f64, f64)> {
    if a.len() != b.len() || a.len() < 3 {
        return Err(usage("variance ratio needs paired samples of size >= 3"));
    }
    let t = a.len();
    let ratio = sample_variance(a) / sample_variance(b);
    let mut loo = Vec::with_capacity(t);
    let mut buf_a = Vec::with_capacity(t - 1);
    let mut buf_b = Vec::with_capacity(t - 1);
    for i in 0..t {
        buf_a.clear();
        buf_b.clear();
        buf_a.extend(
            a.iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, v)| *v),
        );
        buf_b.extend(
            b.iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, v)| *v),
        );
        loo.push(sample_variance(&buf_a) / sample_variance(&buf_b));
    }
    let mean = loo.iter().sum::<f64>() / t as f64;
    let var = loo.iter().map(|v| (v - mean).powi(2)).sum::<f64>() * (t - 1) as f64 / t as f64;
    Ok((ratio, var.sqrt()))
}
