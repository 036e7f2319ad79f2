//! Partitioned cross-validation and its variants.
//!
//! A PCV bandwidth splits the sample into `p` groups, runs ordinary CV on
//! each group, rescales each group bandwidth `b̂_i` to the full sample size
//! via `ĥ_i = (n/n_i)^{-1/5} b̂_i`, and combines the `ĥ_i` with weights
//! proportional to `n_i^{1/5}`.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cv::{
    kde_eval, minimize_criterion, BandwidthEstimate, BracketRule, CvCriterion, Method, Sample,
};
use crate::error::{Error, Result};
use crate::seed::{permutation, split_seed};

pub const DEFAULT_MIN_GROUP: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcvOptions {
    pub bracket: BracketRule,
    /// Smallest allowed group; partitions below it are rejected.
    pub min_group: usize,
    /// Skip pairs that are far apart in bandwidth units; see [`CvCriterion::with_cutoff`].
    pub cutoff: bool,
}

impl Default for PcvOptions {
    fn default() -> Self {
        PcvOptions {
            bracket: BracketRule::default(),
            min_group: DEFAULT_MIN_GROUP,
            cutoff: false,
        }
    }
}

/// Seeded split of `0..n` into `p` near-equal groups. Group `g` (0-based)
/// holds `order[bounds[g]..bounds[g+1]]`; the first `n mod p` groups get the
/// extra element.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub n: usize,
    pub p: usize,
    pub seed: u64,
    order: Vec<usize>,
    bounds: Vec<usize>,
}

impl PartitionPlan {
    pub fn group(&self, g: usize) -> &[usize] {
        &self.order[self.bounds[g]..self.bounds[g + 1]]
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.bounds.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Group index (0-based) of every observation.
    pub fn assignment(&self) -> Vec<usize> {
        let mut out = vec![0; self.n];
        for g in 0..self.p {
            for &i in self.group(g) {
                out[i] = g;
            }
        }
        out
    }

    pub fn gather(&self, values: &[f64]) -> Vec<Vec<f64>> {
        (0..self.p)
            .map(|g| self.group(g).iter().map(|&i| values[i]).collect())
            .collect()
    }
}

pub fn make_partition(n: usize, p: usize, seed: u64) -> Result<PartitionPlan> {
    if p < 2 || p > n / 2 {
        return Err(Error::Partition(format!(
            "need 2 <= p <= n/2, got p = {p} with n = {n}"
        )));
    }
    let order = permutation(n, seed);
    let (q, r) = (n / p, n % p);
    let mut bounds = Vec::with_capacity(p + 1);
    bounds.push(0);
    for g in 0..p {
        let size = if g < r { q + 1 } else { q };
        bounds.push(bounds[g] + size);
    }
    Ok(PartitionPlan {
        n,
        p,
        seed,
        order,
        bounds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcvResult {
    pub h: f64,
    pub method: Method,
    pub n: usize,
    pub p: usize,
    pub permutations: usize,
    /// Group CV bandwidths `b̂`, permutation-major.
    pub per_group: Vec<BandwidthEstimate>,
    /// Size-adjusted bandwidths `ĥ`, aligned with `per_group`.
    pub scaled: Vec<f64>,
    /// The PCV bandwidth of each permutation, in permutation order.
    pub per_permutation: Vec<f64>,
    pub boundary_count: usize,
}

impl PcvResult {
    pub fn estimate(&self) -> BandwidthEstimate {
        BandwidthEstimate {
            h: self.h,
            objective: f64::NAN,
            boundary_hit: self.boundary_count > 0,
            group_size: self.n / self.p,
            method: self.method,
            evaluations: self.per_group.iter().map(|e| e.evaluations).sum(),
            expansions: self
                .per_group
                .iter()
                .map(|e| e.expansions)
                .max()
                .unwrap_or(0),
        }
    }

    /// Mean of the first `k` permutation bandwidths.
    pub fn leading_mean(&self, k: usize) -> f64 {
        let k = k.clamp(1, self.per_permutation.len());
        self.per_permutation[..k].iter().sum::<f64>() / k as f64
    }
}

/// `(n/n_i)^{-1/5} b̂_i`
pub fn scale_to_size(b: f64, group_size: usize, n: usize) -> f64 {
    (n as f64 / group_size as f64).powf(-0.2) * b
}

/// `Σ n_i^{1/5} ĥ_i / Σ n_i^{1/5}` with `ĥ_i = (n/n_i)^{-1/5} b̂_i`.
pub fn combine_weighted(bandwidths: &[f64], sizes: &[usize], n: usize) -> Result<f64> {
    if bandwidths.len() != sizes.len() || bandwidths.is_empty() {
        return Err(Error::SizeMismatch(format!(
            "{} bandwidths for {} group sizes",
            bandwidths.len(),
            sizes.len()
        )));
    }
    let total: usize = sizes.iter().sum();
    if total != n {
        return Err(Error::SizeMismatch(format!(
            "group sizes sum to {total}, expected {n}"
        )));
    }
    combine_to_target(bandwidths, sizes, n)
}

/// [`combine_weighted`] without the requirement that the sizes add up to
/// the target size.
pub fn combine_to_target(bandwidths: &[f64], sizes: &[usize], n: usize) -> Result<f64> {
    if sizes.contains(&0) {
        return Err(Error::SizeMismatch("group of size zero".into()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (&b, &m) in bandwidths.iter().zip(sizes) {
        let w = (m as f64).powf(0.2);
        num += w * scale_to_size(b, m, n);
        den += w;
    }
    Ok(num / den)
}

fn criterion(values: Vec<f64>, opts: &PcvOptions) -> Result<(CvCriterion, Sample)> {
    let sample = Sample::new(values)?;
    let crit = if opts.cutoff {
        CvCriterion::with_cutoff(&sample)?
    } else {
        CvCriterion::new(&sample)?
    };
    Ok((crit, sample))
}

fn cv_on(values: Vec<f64>, opts: &PcvOptions) -> Result<BandwidthEstimate> {
    let (crit, sample) = criterion(values, opts)?;
    let config = opts.bracket.config_for(&sample)?;
    minimize_criterion(&crit, &config)
}

/// CV bandwidth of every group, in group order. Errors carry the index of
/// the first failing group.
fn group_bandwidths(groups: Vec<Vec<f64>>, opts: &PcvOptions) -> Result<Vec<BandwidthEstimate>> {
    let results: Vec<Result<BandwidthEstimate>> =
        groups.into_par_iter().map(|g| cv_on(g, opts)).collect();
    results
        .into_iter()
        .enumerate()
        .map(|(group, r)| {
            r.map_err(|e| Error::Group {
                group,
                source: Box::new(e),
            })
        })
        .collect()
}

fn check_group_floor(n: usize, p: usize, min_group: usize) -> Result<()> {
    if p == 0 || n / p < min_group {
        return Err(Error::Partition(format!(
            "groups of n/p = {n}/{p} fall below the minimum group size {min_group}"
        )));
    }
    Ok(())
}

struct SinglePcv {
    h: f64,
    per_group: Vec<BandwidthEstimate>,
    scaled: Vec<f64>,
}

fn single_pcv(sample: &Sample, p: usize, seed: u64, opts: &PcvOptions) -> Result<SinglePcv> {
    let n = sample.len();
    let groups = if p == 1 {
        vec![sample.values().to_vec()]
    } else {
        make_partition(n, p, seed)?.gather(sample.values())
    };
    let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
    let per_group = group_bandwidths(groups, opts)?;
    let b: Vec<f64> = per_group.iter().map(|e| e.h).collect();
    let h = combine_weighted(&b, &sizes, n)?;
    let scaled = b
        .iter()
        .zip(&sizes)
        .map(|(&b, &m)| scale_to_size(b, m, n))
        .collect();
    Ok(SinglePcv {
        h,
        per_group,
        scaled,
    })
}

/// PCV bandwidth with `p` groups. With `p = 1` this is the CV bandwidth of
/// the whole sample.
pub fn pcv_bandwidth(sample: &Sample, p: usize, seed: u64, opts: &PcvOptions) -> Result<PcvResult> {
    check_group_floor(sample.len(), p, opts.min_group)?;
    let single = single_pcv(sample, p, seed, opts)?;
    let boundary_count = single.per_group.iter().filter(|e| e.boundary_hit).count();
    Ok(PcvResult {
        h: single.h,
        method: Method::Pcv,
        n: sample.len(),
        p,
        permutations: 1,
        per_group: single.per_group,
        scaled: single.scaled,
        per_permutation: vec![single.h],
        boundary_count,
    })
}

/// Mean of `permutations` PCV bandwidths; permutation `k` partitions with
/// sub-seed `split_seed(seed, k)`.
pub fn permuted_pcv(
    sample: &Sample,
    p: usize,
    permutations: usize,
    seed: u64,
    opts: &PcvOptions,
) -> Result<PcvResult> {
    if permutations == 0 {
        return Err(Error::domain("at least one permutation is required"));
    }
    check_group_floor(sample.len(), p, opts.min_group)?;
    let runs: Vec<Result<SinglePcv>> = (0..permutations)
        .into_par_iter()
        .map(|k| single_pcv(sample, p, split_seed(seed, k as u64), opts))
        .collect();
    let mut per_group = Vec::new();
    let mut scaled = Vec::new();
    let mut per_permutation = Vec::with_capacity(permutations);
    for run in runs {
        let run = run?;
        per_permutation.push(run.h);
        per_group.extend(run.per_group);
        scaled.extend(run.scaled);
    }
    let h = per_permutation.iter().sum::<f64>() / permutations as f64;
    let boundary_count = per_group.iter().filter(|e| e.boundary_hit).count();
    Ok(PcvResult {
        h,
        method: Method::Pcvp,
        n: sample.len(),
        p,
        permutations,
        per_group,
        scaled,
        per_permutation,
        boundary_count,
    })
}

fn choose_with_exponent(
    n: usize,
    c: f64,
    exponent: f64,
    min_group: usize,
    max_group: Option<usize>,
) -> Result<usize> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::domain(format!("constant must be positive, got {c}")));
    }
    if min_group == 0 || n < 2 * min_group {
        return Err(Error::Infeasible(format!(
            "n = {n} cannot hold two groups of at least {min_group}"
        )));
    }
    let upper = n / min_group;
    let lower = match max_group {
        Some(0) => return Err(Error::Infeasible("max_group must be positive".into())),
        Some(m) => n.div_ceil(m),
        None => 1,
    };
    if lower > upper {
        return Err(Error::Infeasible(format!(
            "no p satisfies {min_group} <= n/p <= {} for n = {n}",
            max_group.unwrap_or(n)
        )));
    }
    let raw = (c * (n as f64).powf(exponent)).round().max(1.0) as usize;
    Ok(raw.clamp(lower, upper))
}

/// `round(C n^{1/6})`, clamped so that `min_group <= n/p <= max_group`.
/// When the memory cap binds the result is `⌈n / max_group⌉`.
pub fn choose_p(n: usize, c: f64, min_group: usize, max_group: Option<usize>) -> Result<usize> {
    choose_with_exponent(n, c, 1.0 / 6.0, min_group, max_group)
}

/// `round(C_perm n^{1/11})` with the same clamping as [`choose_p`].
pub fn choose_p_permuted(
    n: usize,
    c_perm: f64,
    min_group: usize,
    max_group: Option<usize>,
) -> Result<usize> {
    choose_with_exponent(n, c_perm, 1.0 / 11.0, min_group, max_group)
}

/// A density over the constant `C`, tabulated at increasing abscissae and
/// interpolated linearly; zero outside the table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedPrior {
    xs: Vec<f64>,
    density: Vec<f64>,
}

impl TabulatedPrior {
    pub fn new(xs: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        if xs.is_empty() || xs.len() != density.len() {
            return Err(Error::domain(
                "prior table needs matching, non-empty columns",
            ));
        }
        if xs.windows(2).any(|w| !(w[0] < w[1])) || xs.iter().any(|x| !x.is_finite()) {
            return Err(Error::domain(
                "prior abscissae must be finite and increasing",
            ));
        }
        if density.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::domain(
                "prior density must be finite and nonnegative",
            ));
        }
        Ok(TabulatedPrior { xs, density })
    }

    /// Histogram density of `values` on `bins` equal-width bins spanning
    /// their range, tabulated at the bin midpoints.
    pub fn from_samples(values: &[f64], bins: usize) -> Result<Self> {
        if values.is_empty() || bins == 0 || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain(
                "prior needs finite values and at least one bin",
            ));
        }
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(hi > lo) {
            return Err(Error::domain("prior values must not all be equal"));
        }
        Self::from_samples_in(values, lo, hi, bins)
    }

    /// Like [`TabulatedPrior::from_samples`] on the fixed range `[lo, hi]`.
    /// Values outside the range still count towards the normalization, so
    /// the table is the restriction of the full density.
    pub fn from_samples_in(values: &[f64], lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if values.is_empty() || bins == 0 || !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::domain(
                "prior needs values, a proper range and at least one bin",
            ));
        }
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0usize; bins];
        for &v in values {
            if v >= lo && v <= hi {
                counts[(((v - lo) / width) as usize).min(bins - 1)] += 1;
            }
        }
        let total = values.len() as f64 * width;
        let xs = (0..bins).map(|k| lo + (k as f64 + 0.5) * width).collect();
        let density = counts.iter().map(|&c| c as f64 / total).collect();
        Self::new(xs, density)
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn values(&self) -> &[f64] {
        &self.density
    }

    pub fn density_at(&self, c: f64) -> f64 {
        let (xs, d) = (&self.xs, &self.density);
        if !c.is_finite() || c < xs[0] || c > xs[xs.len() - 1] {
            return 0.0;
        }
        let k = xs.partition_point(|&x| x <= c);
        if k == 0 {
            return d[0];
        }
        if k == xs.len() {
            return d[k - 1];
        }
        let t = (c - xs[k - 1]) / (xs[k] - xs[k - 1]);
        d[k - 1] + t * (d[k] - d[k - 1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelAverageTerm {
    pub p: usize,
    /// `n^{-1/6} p`
    pub c: f64,
    pub weight: f64,
    /// PCV bandwidth at this `p`; NaN when the weight is zero and the
    /// bandwidth was never computed.
    pub h: f64,
    pub boundary_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelAverage {
    pub h: f64,
    pub n: usize,
    pub terms: Vec<ModelAverageTerm>,
}

impl ModelAverage {
    pub fn estimate(&self) -> BandwidthEstimate {
        BandwidthEstimate {
            h: self.h,
            objective: f64::NAN,
            boundary_hit: self.terms.iter().any(|t| t.boundary_count > 0),
            group_size: self.n,
            method: Method::Ma,
            evaluations: 0,
            expansions: 0,
        }
    }
}

/// `ĥ_MA = Σ π(n^{-1/6} p_j) ĥ(p_j) / Σ π(n^{-1/6} p_j)`, every `ĥ(p_j)`
/// a PCV bandwidth drawn with the same base seed.
pub fn model_average(
    sample: &Sample,
    p_list: &[usize],
    prior: &TabulatedPrior,
    seed: u64,
    opts: &PcvOptions,
) -> Result<ModelAverage> {
    let n = sample.len();
    if p_list.is_empty() {
        return Err(Error::domain("model averaging needs at least one p"));
    }
    if p_list[0] <= 1 || p_list.windows(2).any(|w| w[0] >= w[1]) || p_list[p_list.len() - 1] >= n {
        return Err(Error::domain(format!(
            "p values must satisfy 1 < p_1 < ... < p_J < n, got {p_list:?}"
        )));
    }
    let scale = (n as f64).powf(-1.0 / 6.0);
    let single = p_list.len() == 1;
    let mut terms: Vec<ModelAverageTerm> = p_list
        .iter()
        .map(|&p| {
            let c = scale * p as f64;
            ModelAverageTerm {
                p,
                c,
                weight: if single { 1.0 } else { prior.density_at(c) },
                h: f64::NAN,
                boundary_count: 0,
            }
        })
        .collect();
    let total: f64 = terms.iter().map(|t| t.weight).sum();
    if !(total > 0.0) {
        return Err(Error::DegeneratePrior);
    }
    let mut num = 0.0;
    for term in terms.iter_mut().filter(|t| t.weight > 0.0) {
        let r = pcv_bandwidth(sample, term.p, seed, opts)?;
        term.h = r.h;
        term.boundary_count = r.boundary_count;
        num += term.weight * r.h;
    }
    Ok(ModelAverage {
        h: num / total,
        n,
        terms,
    })
}

/// Layout of a chunk file.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ChunkFormat {
    /// 1-based CSV column holding the values; `None` means one value per line.
    pub column: Option<usize>,
    /// 1-based CSV column compared against [`ChunkSource::label`].
    pub label_column: Option<usize>,
    pub has_header: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkSource {
    pub path: PathBuf,
    pub declared_size: Option<usize>,
    /// Keep only rows whose label column equals this text.
    pub label: Option<String>,
    pub format: ChunkFormat,
}

impl ChunkSource {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        ChunkSource {
            path: path.into(),
            declared_size: None,
            label: None,
            format: ChunkFormat::default(),
        }
    }

    pub fn with_format(mut self, format: ChunkFormat) -> Self {
        self.format = format;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn with_declared_size(mut self, size: usize) -> Self {
        self.declared_size = Some(size);
        self
    }

    fn fail(&self, message: impl Into<String>) -> Error {
        Error::Chunk {
            path: self.path.clone(),
            message: message.into(),
        }
    }

    pub fn read(&self) -> Result<Vec<f64>> {
        let values = match self.format.column {
            None => self.read_lines()?,
            Some(column) => self.read_csv(column)?,
        };
        if values.is_empty() {
            return Err(self.fail("no observations"));
        }
        if let Some(declared) = self.declared_size {
            if declared != values.len() {
                return Err(self.fail(format!(
                    "declared {declared} rows but read {}",
                    values.len()
                )));
            }
        }
        Ok(values)
    }

    fn parse_value(&self, text: &str, line: usize) -> Result<f64> {
        let v: f64 = text
            .trim()
            .parse()
            .map_err(|e| self.fail(format!("line {line}: '{}': {e}", text.trim())))?;
        if !v.is_finite() {
            return Err(self.fail(format!("line {line}: non-finite value")));
        }
        Ok(v)
    }

    fn read_lines(&self) -> Result<Vec<f64>> {
        if self.label.is_some() {
            return Err(self.fail("a label filter needs CSV input with a value column"));
        }
        let text = std::fs::read_to_string(&self.path).map_err(|e| self.fail(e.to_string()))?;
        let skip = usize::from(self.format.has_header);
        let mut out = Vec::new();
        for (i, line) in text.lines().enumerate().skip(skip) {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            out.push(self.parse_value(line, i + 1)?);
        }
        Ok(out)
    }

    fn read_csv(&self, column: usize) -> Result<Vec<f64>> {
        if column == 0 || self.format.label_column == Some(0) {
            return Err(self.fail("columns are 1-based"));
        }
        let label_col = match (&self.label, self.format.label_column) {
            (Some(_), None) => return Err(self.fail("a label filter needs a label column")),
            (Some(_), Some(c)) => Some(c - 1),
            (None, _) => None,
        };
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(self.format.has_header)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_path(&self.path)
            .map_err(|e| self.fail(e.to_string()))?;
        let mut out = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| self.fail(e.to_string()))?;
            let line = i + 1 + usize::from(self.format.has_header);
            if let (Some(c), Some(want)) = (label_col, &self.label) {
                let got = record
                    .get(c)
                    .ok_or_else(|| self.fail(format!("line {line}: missing label column")))?;
                if got != want {
                    continue;
                }
            }
            let field = record
                .get(column - 1)
                .ok_or_else(|| self.fail(format!("line {line}: missing column {column}")))?;
            out.push(self.parse_value(field, line)?);
        }
        Ok(out)
    }
}

/// Every regular file in `dir`, sorted by file name.
pub fn chunks_in_dir(
    dir: &Path,
    format: &ChunkFormat,
    label: Option<&str>,
) -> Result<Vec<ChunkSource>> {
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        if entry.file_type()?.is_file() {
            paths.push(entry.path());
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Chunk {
            path: dir.to_path_buf(),
            message: "directory holds no chunk files".into(),
        });
    }
    Ok(paths
        .into_iter()
        .map(|p| {
            let mut c = ChunkSource::new(p).with_format(format.clone());
            c.label = label.map(str::to_owned);
            c
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkReport {
    pub path: PathBuf,
    pub size: usize,
    /// Group bandwidths `b̂_ij` averaged over permutations.
    pub group_bandwidths: Vec<f64>,
    pub group_sizes: Vec<usize>,
    pub boundary_count: usize,
    /// Why the chunk was left out, if it was.
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkedResult {
    pub h: f64,
    /// Rows read across all chunks, including skipped ones.
    pub total_n: usize,
    pub groups_per_chunk: usize,
    pub permutations: usize,
    pub chunks: Vec<ChunkReport>,
    pub skipped: usize,
    pub boundary_count: usize,
}

fn process_chunk(
    values: Vec<f64>,
    groups: usize,
    permutations: usize,
    seed: u64,
    opts: &PcvOptions,
) -> Result<(Vec<f64>, Vec<usize>, usize)> {
    let n = values.len();
    check_group_floor(n, groups, opts.min_group)?;
    if groups == 1 {
        let est = cv_on(values, opts).map_err(|e| Error::Group {
            group: 0,
            source: Box::new(e),
        })?;
        return Ok((vec![est.h], vec![n], usize::from(est.boundary_hit)));
    }
    let runs: Vec<Result<(Vec<BandwidthEstimate>, Vec<usize>)>> = (0..permutations)
        .into_par_iter()
        .map(|k| {
            let plan = make_partition(n, groups, split_seed(seed, k as u64))?;
            let sizes = plan.group_sizes();
            Ok((group_bandwidths(plan.gather(&values), opts)?, sizes))
        })
        .collect();
    let mut sums = vec![0.0; groups];
    let mut sizes = Vec::new();
    let mut boundary = 0;
    for run in runs {
        let (est, s) = run?;
        for (acc, e) in sums.iter_mut().zip(&est) {
            *acc += e.h;
        }
        boundary += est.iter().filter(|e| e.boundary_hit).count();
        sizes = s;
    }
    let means = sums.iter().map(|s| s / permutations as f64).collect();
    Ok((means, sizes, boundary))
}

/// Out-of-core PCV: each chunk is read, split into `groups_per_chunk`
/// groups (repeated over `permutations` partitions, averaging each group's
/// bandwidth), and dropped before the next chunk is read. All group
/// bandwidths are then combined with [`combine_to_target`] for the total
/// row count.
pub fn chunked_pipeline(
    chunks: &[ChunkSource],
    groups_per_chunk: usize,
    permutations: usize,
    seed: u64,
    opts: &PcvOptions,
) -> Result<ChunkedResult> {
    if chunks.is_empty() {
        return Err(Error::domain("no chunks given"));
    }
    if groups_per_chunk == 0 || permutations == 0 {
        return Err(Error::domain(
            "groups per chunk and permutations must be positive",
        ));
    }
    let mut reports = Vec::with_capacity(chunks.len());
    let mut total_n = 0;
    for (i, chunk) in chunks.iter().enumerate() {
        let values = chunk.read()?;
        let size = values.len();
        total_n += size;
        let chunk_seed = split_seed(seed, i as u64);
        let report = match process_chunk(values, groups_per_chunk, permutations, chunk_seed, opts) {
            Ok((b, sizes, boundary_count)) => ChunkReport {
                path: chunk.path.clone(),
                size,
                group_bandwidths: b,
                group_sizes: sizes,
                boundary_count,
                skipped: None,
            },
            Err(e) if !e.is_io() => ChunkReport {
                path: chunk.path.clone(),
                size,
                group_bandwidths: Vec::new(),
                group_sizes: Vec::new(),
                boundary_count: 0,
                skipped: Some(e.to_string()),
            },
            Err(e) => return Err(e),
        };
        reports.push(report);
    }
    let (mut b, mut sizes) = (Vec::new(), Vec::new());
    for r in reports.iter().filter(|r| r.skipped.is_none()) {
        b.extend_from_slice(&r.group_bandwidths);
        sizes.extend_from_slice(&r.group_sizes);
    }
    let skipped = reports.iter().filter(|r| r.skipped.is_some()).count();
    if b.is_empty() {
        return Err(Error::DegenerateSample(format!(
            "all {skipped} chunks were skipped"
        )));
    }
    let h = combine_to_target(&b, &sizes, total_n)?;
    Ok(ChunkedResult {
        h,
        total_n,
        groups_per_chunk,
        permutations,
        boundary_count: reports.iter().map(|r| r.boundary_count).sum(),
        chunks: reports,
        skipped,
    })
}

/// Size-weighted average of the per-chunk estimates, which is the estimate
/// on the pooled data.
pub fn combined_density(chunks: &[ChunkSource], h: f64, grid: &[f64]) -> Result<Vec<f64>> {
    if chunks.is_empty() {
        return Err(Error::domain("no chunks given"));
    }
    let mut acc = vec![0.0; grid.len()];
    let mut total = 0usize;
    for chunk in chunks {
        let sample = Sample::new(chunk.read()?)?;
        let m = sample.len();
        for (a, f) in acc.iter_mut().zip(kde_eval(&sample, h, grid)?) {
            *a += m as f64 * f;
        }
        total += m;
    }
    Ok(acc.into_iter().map(|a| a / total as f64).collect())
}
