//! Closed-form asymptotic constants and predictions for CV and PCV
//! bandwidths under a known normal mixture.
//!
//! Variances are absolute (`Var ĥ`); MSE predictions are for the relative
//! error `(ĥ - h₀)/h₀`. The two are linked by `h₀ = D n^{-1/5}`, so
//! `A n^{-1/5} = Var(ĥ_CV) / h₀²` and `B n^{-2/5} = (B* n^{-2/5} / h₀)²`.

use serde::{Deserialize, Serialize};

use crate::cv::Method;
use crate::error::{Error, Result};
use crate::kernels::{CrossFunctional, KernelFamily, KernelSpec};
use crate::mixtures::NormalMixture;
use crate::pcv::TabulatedPrior;
use crate::seed::split_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticConstants {
    pub d: f64,
    pub a_star: f64,
    pub a: f64,
    pub b_star: f64,
    pub b: f64,
    pub c: f64,
    pub c_perm: f64,
}

pub fn constants(mixture: &NormalMixture, kernel: &KernelSpec) -> Result<AsymptoticConstants> {
    if kernel.family != KernelFamily::Gaussian {
        return Err(Error::UnsupportedKernel(format!("{:?}", kernel.family)));
    }
    let i0 = mixture.roughness(0)?;
    let i2 = mixture.roughness(2)?;
    let rk = kernel.roughness;
    let s4 = kernel.sigma4();
    let v2 = kernel.cross_functional(CrossFunctional::IntV2);
    let vw = kernel.cross_functional(CrossFunctional::IntVW);

    let d = (rk / (s4 * i2)).powf(0.2);
    let a_star = 0.32 * v2 / rk.powf(1.4) * i0 / i2.powf(0.6);
    let b_star = 0.32 * vw * i0 / (rk.powf(1.6) * (s4 * i2).powf(0.4));
    let a = a_star / (d * d);
    let b = (b_star / d).powi(2);
    Ok(AsymptoticConstants {
        d,
        a_star,
        a,
        b_star,
        b,
        c: (2.0 * a / b).powf(5.0 / 6.0),
        c_perm: (4.5 * a / b).powf(5.0 / 11.0),
    })
}

/// `h̃_n = h_{n,0} - B* n^{-2/5}` with the exact MISE minimizer `h_{n,0}`.
pub fn expected_cv_bandwidth(
    mixture: &NormalMixture,
    kernel: &KernelSpec,
    n: usize,
) -> Result<f64> {
    let k = constants(mixture, kernel)?;
    let h0 = mixture.mise_optimal_bandwidth(n)?.h;
    Ok(h0 - k.b_star * (n as f64).powf(-0.4))
}

fn check_np(n: usize, p: f64) -> Result<()> {
    if n == 0 || !(p >= 1.0 && p.is_finite()) {
        return Err(Error::domain(format!(
            "need n >= 1 and p >= 1, got n = {n}, p = {p}"
        )));
    }
    Ok(())
}

/// `Var ĥ_CV ~ A* n^{-3/5}` and `Var ĥ_PCV ~ A* n^{-3/5} p^{-4/5}`.
pub fn predict_variance(k: &AsymptoticConstants, n: usize, p: f64, method: Method) -> Result<f64> {
    check_np(n, p)?;
    let cv = k.a_star * (n as f64).powf(-0.6);
    match method {
        Method::Cv => Ok(cv),
        Method::Pcv => Ok(cv * p.powf(-0.8)),
        other => Err(Error::domain(format!(
            "no variance prediction for method {other}"
        ))),
    }
}

/// Relative MSE `A n^{-1/5} p^{-4/5} + B n^{-2/5} p^{2/5}`; the permuted
/// form has `p^{-9/5}` in the variance term.
pub fn predict_mse(k: &AsymptoticConstants, n: usize, p: f64, permuted: bool) -> Result<f64> {
    check_np(n, p)?;
    let nf = n as f64;
    let var_exp = if permuted { -1.8 } else { -0.8 };
    Ok(k.a * nf.powf(-0.2) * p.powf(var_exp) + k.b * nf.powf(-0.4) * p.powf(0.4))
}

/// `C n^{1/6}`, not rounded.
pub fn optimal_p(k: &AsymptoticConstants, n: usize) -> f64 {
    k.c * (n as f64).powf(1.0 / 6.0)
}

/// `C_perm n^{1/11}`, not rounded.
pub fn optimal_p_permuted(k: &AsymptoticConstants, n: usize) -> f64 {
    k.c_perm * (n as f64).powf(1.0 / 11.0)
}

/// MSE at `p = k·p_opt` relative to the optimum: `(k^{-4/5} + 2k^{2/5})/3`.
pub fn mse_inflation_ratio(k: f64) -> Result<f64> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::domain(format!("k must be positive, got {k}")));
    }
    Ok((k.powf(-0.8) + 2.0 * k.powf(0.4)) / 3.0)
}

/// Variance of permuted PCV over `N` permutations relative to one PCV:
/// `1/N + (N-1)/(N p)`.
pub fn theorem2_factor(permutations: usize, p: f64) -> Result<f64> {
    if permutations == 0 || !(p >= 1.0) {
        return Err(Error::domain("need N >= 1 and p >= 1"));
    }
    let n = permutations as f64;
    Ok(1.0 / n + (n - 1.0) / (n * p))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnequalSizeFactor {
    /// `μ^{1/5} / μ_{1/5}`, multiplying the variance term.
    pub linear: f64,
    /// Its square, multiplying the squared-bias term.
    pub quadratic: f64,
    /// `Σ n_i^{1/5}`
    pub sum_fifth_roots: f64,
}

/// Inflation from unequal group sizes, with `μ` and `μ_{1/5}` the empirical
/// mean of the sizes and of their fifth roots.
pub fn unequal_size_factor(sizes: &[usize]) -> Result<UnequalSizeFactor> {
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(Error::domain("sizes must be non-empty and positive"));
    }
    let m = sizes.len() as f64;
    let mu = sizes.iter().map(|&s| s as f64).sum::<f64>() / m;
    let sum_fifth_roots: f64 = sizes.iter().map(|&s| (s as f64).powf(0.2)).sum();
    let linear = mu.powf(0.2) / (sum_fifth_roots / m);
    Ok(UnequalSizeFactor {
        linear,
        quadratic: linear * linear,
        sum_fifth_roots,
    })
}

pub fn optimal_constant(mixture: &NormalMixture, kernel: &KernelSpec) -> Result<f64> {
    Ok(constants(mixture, kernel)?.c)
}

/// `I₂^{1/6} / I₀^{5/6}`; the optimal constant is a fixed multiple of this.
pub fn constant_shape(mixture: &NormalMixture) -> Result<f64> {
    Ok(mixture.roughness(2)?.powf(1.0 / 6.0) / mixture.roughness(0)?.powf(5.0 / 6.0))
}

/// Optimal constants of `count` random mixtures; mixture `k` is drawn with
/// seed `split_seed(seed, k)`.
pub fn random_constants(count: usize, seed: u64, kernel: &KernelSpec) -> Result<Vec<f64>> {
    (0..count)
        .map(|k| optimal_constant(&NormalMixture::random(split_seed(seed, k as u64)), kernel))
        .collect()
}

/// Histogram prior for model averaging: the density of the optimal constant
/// over random mixtures, tabulated on `bins` bins of `[lo, hi]`.
pub fn constant_prior(
    count: usize,
    seed: u64,
    bins: usize,
    lo: f64,
    hi: f64,
) -> Result<TabulatedPrior> {
    let values = random_constants(count, seed, &KernelSpec::gaussian())?;
    TabulatedPrior::from_samples_in(&values, lo, hi, bins)
}
