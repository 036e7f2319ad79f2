//! Wall-clock comparison of CV and PCV.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use pcv_core::cv::{minimize_cv, Sample};
use pcv_core::mixtures::NormalMixture;
use pcv_core::pcv::{choose_p, pcv_bandwidth, PcvOptions};
use pcv_core::seed::split_seed;

use crate::error::{usage, CliResult};
use crate::output::Table;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub mixture: NormalMixture,
    pub sizes: Vec<usize>,
    /// Datasets timed per size.
    pub datasets: usize,
    pub cn: f64,
    pub min_group: usize,
    pub max_group: Option<usize>,
    pub seed: u64,
    /// Also time PCV with its groups spread over this many threads.
    pub parallel_threads: Option<usize>,
    pub options: BenchOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchOptions {
    pub rel_tol: f64,
    pub max_expansions: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n: usize,
    pub p: usize,
    pub datasets: usize,
    /// Mean seconds per dataset.
    pub cv_seconds: f64,
    pub pcv_seconds: f64,
    pub pcv_parallel_seconds: Option<f64>,
    pub ratio: f64,
}

fn pool(threads: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| usage(format!("cannot build thread pool: {e}")))
}

pub fn run_bench(config: &BenchConfig) -> CliResult<Vec<BenchRow>> {
    if config.datasets == 0 || config.sizes.is_empty() {
        return Err(usage("bench needs at least one size and one dataset"));
    }
    let serial = pool(1)?;
    let parallel = config.parallel_threads.map(pool).transpose()?;
    let opts = PcvOptions {
        bracket: pcv_core::cv::BracketRule::Auto {
            rel_tol: config.options.rel_tol,
            max_expansions: config.options.max_expansions,
        },
        min_group: config.min_group,
        cutoff: false,
    };
    let mut rows = Vec::with_capacity(config.sizes.len());
    for (i, &n) in config.sizes.iter().enumerate() {
        let p = choose_p(n, config.cn, config.min_group, config.max_group)?;
        let size_seed = split_seed(config.seed, i as u64);
        let (mut cv_t, mut pcv_t, mut par_t) = (0.0, 0.0, 0.0);
        for d in 0..config.datasets {
            let data_seed = split_seed(size_seed, d as u64);
            let sample = Sample::new(config.mixture.sample(n, data_seed))?;
            let search = opts.bracket.config_for(&sample)?;
            let part_seed = split_seed(data_seed, 0);

            let start = Instant::now();
            serial.install(|| minimize_cv(&sample, &search))?;
            cv_t += start.elapsed().as_secs_f64();

            let start = Instant::now();
            serial.install(|| pcv_bandwidth(&sample, p, part_seed, &opts))?;
            pcv_t += start.elapsed().as_secs_f64();

            if let Some(pool) = &parallel {
                let start = Instant::now();
                pool.install(|| pcv_bandwidth(&sample, p, part_seed, &opts))?;
                par_t += start.elapsed().as_secs_f64();
            }
        }
        let k = config.datasets as f64;
        rows.push(BenchRow {
            n,
            p,
            datasets: config.datasets,
            cv_seconds: cv_t / k,
            pcv_seconds: pcv_t / k,
            pcv_parallel_seconds: parallel.as_ref().map(|_| par_t / k),
            ratio: cv_t / pcv_t,
        });
    }
    Ok(rows)
}

pub fn bench_table(rows: &[BenchRow]) -> Table {
    let mut t = Table::new(&[
        "n",
        "p",
        "datasets",
        "cv_seconds",
        "pcv_seconds",
        "pcv_parallel_seconds",
        "ratio",
    ]);
    for r in rows {
        t.push(vec![
            r.n.into(),
            r.p.into(),
            r.datasets.into(),
            r.cv_seconds.into(),
            r.pcv_seconds.into(),
            r.pcv_parallel_seconds.map_or_else(|| "".into(), Into::into),
            r.ratio.into(),
        ]);
    }
    t
}
