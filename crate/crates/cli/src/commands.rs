//! Execution of each subcommand. Every command returns the text it emits.

use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use pcv_core::asymptotics::{
    constants, expected_cv_bandwidth, mse_inflation_ratio, optimal_p, optimal_p_permuted,
    predict_mse, predict_variance, theorem2_factor, unequal_size_factor, AsymptoticConstants,
    UnequalSizeFactor,
};
use pcv_core::cv::{
    kde_eval, minimize_criterion, minimize_cv, BandwidthEstimate, BracketRule, CvCriterion, Method,
    Sample, SearchConfig,
};
use pcv_core::kernels::KernelSpec;
use pcv_core::mixtures::{MixturePreset, NormalMixture};
use pcv_core::pcv::{
    choose_p, choose_p_permuted, chunked_pipeline, chunks_in_dir, combined_density, model_average,
    pcv_bandwidth, permuted_pcv, ChunkFormat, ChunkReport, ChunkSource, ModelAverageTerm,
    PcvOptions, PcvResult, TabulatedPrior,
};

use crate::args::{
    AsymptoticsArgs, BenchArgs, Command, DataArgs, DensityArgs, Format, KernelTag, MethodArg,
    OracleArgs, PriorArgs, RunManifest, SelectArgs, SimulateArgs,
};
use crate::bench::{bench_table, run_bench, BenchConfig, BenchOptions};
use crate::error::{usage, CliResult};
use crate::output::{to_json, Table, SCHEMA_VERSION};
use crate::simulate::{run_simulation, SimScenario};

/// Points on the automatic density grid.
pub const AUTO_GRID_POINTS: usize = 512;
/// Automatic grid margin beyond the data range, in bandwidths.
pub const AUTO_GRID_MARGIN: f64 = 6.0;

fn kernel(tag: KernelTag) -> KernelSpec {
    match tag {
        KernelTag::Gaussian => KernelSpec::gaussian(),
    }
}

/// A preset tag or a path to a mixture file.
pub fn resolve_mixture(spec: &str) -> CliResult<(String, NormalMixture)> {
    if let Ok(preset) = spec.parse::<MixturePreset>() {
        return Ok((preset.to_string(), preset.mixture()));
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(usage(format!(
            "'{spec}' is neither a mixture preset nor an existing file"
        )));
    }
    Ok((spec.to_owned(), NormalMixture::from_file(path)?))
}

fn chunk_format(data: &DataArgs) -> ChunkFormat {
    ChunkFormat {
        column: data.column,
        label_column: data.label_column,
        has_header: data.header,
    }
}

fn source(data: &DataArgs, path: &Path) -> ChunkSource {
    let mut s = ChunkSource::new(path).with_format(chunk_format(data));
    s.label = data.label.clone();
    s
}

fn read_sample(data: &DataArgs, path: &Path) -> CliResult<Sample> {
    Ok(Sample::new(source(data, path).read()?)?)
}

fn search_rule(
    lo: Option<f64>,
    hi: Option<f64>,
    tol: f64,
    max_expansions: u32,
) -> CliResult<BracketRule> {
    Ok(match (lo, hi) {
        (Some(lo), Some(hi)) => BracketRule::Fixed(SearchConfig::new(lo, hi, tol, max_expansions)?),
        (None, None) => BracketRule::Auto {
            rel_tol: tol,
            max_expansions,
        },
        _ => return Err(usage("--search-lo and --search-hi must be given together")),
    })
}

fn pcv_options(args: &SelectArgs) -> CliResult<PcvOptions> {
    Ok(PcvOptions {
        bracket: search_rule(
            args.search.search_lo,
            args.search.search_hi,
            args.search.tol,
            args.search.max_expansions,
        )?,
        min_group: args.min_group,
        cutoff: args.search.cutoff,
    })
}

/// Reads a "c,density" table, or builds the random-mixture histogram.
pub fn load_prior(args: &PriorArgs) -> CliResult<TabulatedPrior> {
    let Some(path) = &args.prior else {
        return Ok(pcv_core::asymptotics::constant_prior(
            args.prior_mixtures,
            args.prior_seed,
            args.prior_bins,
            0.0,
            args.prior_hi,
        )?);
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?;
    let (mut xs, mut ds) = (Vec::new(), Vec::new());
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let parse = |j: usize| -> Option<f64> { record.get(j).and_then(|t| t.parse().ok()) };
        match (parse(0), parse(1)) {
            (Some(x), Some(d)) if record.len() == 2 => {
                xs.push(x);
                ds.push(d);
            }
            // A non-numeric first row is a header.
            _ if i == 0 => {}
            _ => {
                return Err(usage(format!(
                    "{}: row {} is not 'c,density'",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    Ok(TabulatedPrior::new(xs, ds)?)
}

/// Candidate group counts for model averaging: `round(c n^{1/6})` for every
/// prior abscissa with positive density, kept within the group-size floor.
pub fn default_p_list(prior: &TabulatedPrior, n: usize, min_group: usize) -> Vec<usize> {
    let scale = (n as f64).powf(1.0 / 6.0);
    let upper = n / min_group.max(1);
    let mut ps: Vec<usize> = prior
        .xs()
        .iter()
        .zip(prior.values())
        .filter(|(_, &d)| d > 0.0)
        .map(|(&c, _)| (c * scale).round() as usize)
        .filter(|&p| p >= 2 && p <= upper)
        .collect();
    ps.sort_unstable();
    ps.dedup();
    ps
}

fn default_c_perm() -> f64 {
    constants(&MixturePreset::MW1.mixture(), &KernelSpec::gaussian())
        .expect("normal constants")
        .c_perm
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupDiagnostic {
    pub permutation: usize,
    pub group: usize,
    pub size: usize,
    /// Group CV bandwidth.
    pub b: f64,
    /// Bandwidth rescaled to the full sample size.
    pub h_scaled: f64,
    pub objective: f64,
    pub boundary_hit: bool,
    pub evaluations: usize,
    pub expansions: u32,
}

fn diagnostics(res: &PcvResult) -> Vec<GroupDiagnostic> {
    res.per_group
        .iter()
        .zip(&res.scaled)
        .enumerate()
        .map(|(i, (e, &h))| GroupDiagnostic {
            permutation: i / res.p,
            group: i % res.p,
            size: e.group_size,
            b: e.h,
            h_scaled: h,
            objective: e.objective,
            boundary_hit: e.boundary_hit,
            evaluations: e.evaluations,
            expansions: e.expansions,
        })
        .collect()
}

fn single_diagnostic(e: &BandwidthEstimate) -> GroupDiagnostic {
    GroupDiagnostic {
        permutation: 0,
        group: 0,
        size: e.group_size,
        b: e.h,
        h_scaled: e.h,
        objective: e.objective,
        boundary_hit: e.boundary_hit,
        evaluations: e.evaluations,
        expansions: e.expansions,
    }
}

/// Outcome of a selection, without timing or provenance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Selection {
    pub h: f64,
    pub method: Method,
    pub n: usize,
    pub p: Vec<usize>,
    pub permutations: usize,
    pub boundary_count: usize,
    pub per_group: Vec<GroupDiagnostic>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_average: Option<Vec<ModelAverageTerm>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chunks: Option<Vec<ChunkReport>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skipped_chunks: Option<usize>,
}

pub fn select_sample(args: &SelectArgs, sample: &Sample) -> CliResult<Selection> {
    let opts = pcv_options(args)?;
    let n = sample.len();
    let single_p = |default: &dyn Fn() -> CliResult<usize>| -> CliResult<usize> {
        match args.p.as_slice() {
            [] => default(),
            [p] => Ok(*p),
            _ => Err(usage("only model averaging takes several values of --p")),
        }
    };
    let from_pcv = |res: PcvResult| Selection {
        h: res.h,
        method: res.method,
        n,
        p: vec![res.p],
        permutations: res.permutations,
        boundary_count: res.boundary_count,
        per_group: diagnostics(&res),
        model_average: None,
        chunks: None,
        skipped_chunks: None,
    };
    match args.method {
        MethodArg::Cv => {
            if !args.p.is_empty() && args.p != [1] {
                return Err(usage(
                    "CV uses a single group; drop --p or pick another method",
                ));
            }
            let config = opts.bracket.config_for(sample)?;
            let est = if opts.cutoff {
                minimize_criterion(&CvCriterion::with_cutoff(sample)?, &config)?
            } else {
                minimize_cv(sample, &config)?
            };
            Ok(Selection {
                h: est.h,
                method: Method::Cv,
                n,
                p: vec![1],
                permutations: 1,
                boundary_count: usize::from(est.boundary_hit),
                per_group: vec![single_diagnostic(&est)],
                model_average: None,
                chunks: None,
                skipped_chunks: None,
            })
        }
        MethodArg::Pcv => {
            let p = single_p(&|| Ok(choose_p(n, args.cn, args.min_group, args.max_group)?))?;
            Ok(from_pcv(pcv_bandwidth(sample, p, args.seed, &opts)?))
        }
        MethodArg::Pcvp => {
            let c = args.cn_perm.unwrap_or_else(default_c_perm);
            let p = single_p(&|| Ok(choose_p_permuted(n, c, args.min_group, args.max_group)?))?;
            Ok(from_pcv(permuted_pcv(
                sample,
                p,
                args.permutations,
                args.seed,
                &opts,
            )?))
        }
        MethodArg::Ma => {
            let prior = load_prior(&args.prior)?;
            let p_list = if args.p.is_empty() {
                default_p_list(&prior, n, args.min_group)
            } else {
                args.p.clone()
            };
            let ma = model_average(sample, &p_list, &prior, args.seed, &opts)?;
            Ok(Selection {
                h: ma.h,
                method: Method::Ma,
                n,
                p: p_list,
                permutations: 1,
                boundary_count: ma.terms.iter().map(|t| t.boundary_count).sum(),
                per_group: Vec::new(),
                model_average: Some(ma.terms),
                chunks: None,
                skipped_chunks: None,
            })
        }
    }
}

fn chunk_sources(args: &SelectArgs, dir: &Path) -> CliResult<Vec<ChunkSource>> {
    Ok(chunks_in_dir(
        dir,
        &chunk_format(&args.data),
        args.data.label.as_deref(),
    )?)
}

pub fn select_chunks(args: &SelectArgs, dir: &Path) -> CliResult<Selection> {
    let opts = pcv_options(args)?;
    let groups = match args.p.as_slice() {
        [] => 1,
        [p] => *p,
        _ => {
            return Err(usage(
                "--p takes a single groups-per-chunk value with --chunks-dir",
            ))
        }
    };
    let permutations = match args.method {
        MethodArg::Cv if groups == 1 => 1,
        MethodArg::Cv => return Err(usage("CV on chunks uses one group per chunk")),
        MethodArg::Pcv => 1,
        MethodArg::Pcvp => args.permutations,
        MethodArg::Ma => return Err(usage("model averaging is not available for chunked input")),
    };
    let chunks = chunk_sources(args, dir)?;
    let res = chunked_pipeline(&chunks, groups, permutations, args.seed, &opts)?;
    let mut per_group = Vec::new();
    for (c, report) in res.chunks.iter().enumerate() {
        for (g, (&b, &size)) in report
            .group_bandwidths
            .iter()
            .zip(&report.group_sizes)
            .enumerate()
        {
            per_group.push(GroupDiagnostic {
                permutation: c,
                group: g,
                size,
                b,
                h_scaled: pcv_core::pcv::scale_to_size(b, size, res.total_n),
                objective: f64::NAN,
                boundary_hit: false,
                evaluations: 0,
                expansions: 0,
            });
        }
    }
    Ok(Selection {
        h: res.h,
        method: if permutations > 1 {
            Method::Pcvp
        } else {
            Method::Pcv
        },
        n: res.total_n,
        p: vec![groups],
        permutations,
        boundary_count: res.boundary_count,
        per_group,
        model_average: None,
        skipped_chunks: Some(res.skipped),
        chunks: Some(res.chunks),
    })
}

fn select_any(args: &SelectArgs) -> CliResult<Vec<(String, Selection)>> {
    if let Some(dir) = &args.data.chunks_dir {
        return Ok(vec![(dir.display().to_string(), select_chunks(args, dir)?)]);
    }
    if args.data.input.is_empty() {
        return Err(usage("give --input or --chunks-dir"));
    }
    args.data
        .input
        .iter()
        .map(|path| {
            Ok((
                path.display().to_string(),
                select_sample(args, &read_sample(&args.data, path)?)?,
            ))
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct Record<'a, T: Serialize> {
    schema_version: u32,
    command: &'static str,
    #[serde(flatten)]
    body: T,
    wall_seconds: f64,
    manifest: &'a RunManifest,
}

fn record<T: Serialize>(manifest: &RunManifest, body: T, start: Instant) -> CliResult<String> {
    let mut text = to_json(&Record {
        schema_version: SCHEMA_VERSION,
        command: manifest.command.name(),
        body,
        wall_seconds: start.elapsed().as_secs_f64(),
        manifest,
    })?;
    text.push('\n');
    Ok(text)
}

fn cmd_select(manifest: &RunManifest, args: &SelectArgs, start: Instant) -> CliResult<String> {
    let mut results = select_any(args)?;
    if results.len() != 1 {
        return Err(usage("select takes exactly one --input"));
    }
    let (_, sel) = results.remove(0);
    match manifest.format() {
        Format::Json => record(manifest, sel, start),
        Format::Csv if sel.model_average.is_some() => {
            let mut t = Table::new(&["method", "h", "p", "c", "weight", "h_p", "boundary_count"]);
            for term in sel.model_average.iter().flatten() {
                t.push(vec![
                    sel.method.to_string().into(),
                    sel.h.into(),
                    term.p.into(),
                    term.c.into(),
                    term.weight.into(),
                    term.h.into(),
                    term.boundary_count.into(),
                ]);
            }
            t.to_string()
        }
        Format::Csv => {
            let mut t = Table::new(&[
                "method",
                "h",
                "permutation",
                "group",
                "size",
                "b",
                "h_scaled",
                "objective",
                "boundary_hit",
            ]);
            for g in &sel.per_group {
                t.push(vec![
                    sel.method.to_string().into(),
                    sel.h.into(),
                    g.permutation.into(),
                    g.group.into(),
                    g.size.into(),
                    g.b.into(),
                    g.h_scaled.into(),
                    g.objective.into(),
                    g.boundary_hit.into(),
                ]);
            }
            t.to_string()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleRow {
    pub n: usize,
    /// Exact MISE minimizer.
    pub h_opt: f64,
    pub mise_at_opt: f64,
    /// Asymptotic MISE minimizer `D n^{-1/5}`.
    pub h_amise: f64,
    /// Expected CV bandwidth including its second-order bias.
    pub h_tilde: f64,
    pub p: f64,
    pub p_opt: f64,
    pub p_opt_rounded: usize,
    pub p_perm_opt: f64,
    pub p_perm_opt_rounded: usize,
    pub var_cv: f64,
    pub var_pcv: f64,
    pub variance_reduction: f64,
    pub mse_cv: f64,
    pub mse_pcv: f64,
    pub mse_pcvp: f64,
}

pub fn oracle_row(
    mixture: &NormalMixture,
    kernel: &KernelSpec,
    n: usize,
    p: Option<f64>,
) -> CliResult<OracleRow> {
    let k = constants(mixture, kernel)?;
    let opt = mixture.mise_optimal_bandwidth(n)?;
    let p_opt = optimal_p(&k, n);
    let p_perm_opt = optimal_p_permuted(&k, n);
    let p = p.unwrap_or(p_opt).max(1.0);
    let var_cv = predict_variance(&k, n, 1.0, Method::Cv)?;
    let var_pcv = predict_variance(&k, n, p, Method::Pcv)?;
    Ok(OracleRow {
        n,
        h_opt: opt.h,
        mise_at_opt: opt.objective,
        h_amise: mixture.asymptotic_optimal_bandwidth(kernel, n)?,
        h_tilde: expected_cv_bandwidth(mixture, kernel, n)?,
        p,
        p_opt,
        p_opt_rounded: p_opt.round() as usize,
        p_perm_opt,
        p_perm_opt_rounded: p_perm_opt.round() as usize,
        var_cv,
        var_pcv,
        variance_reduction: var_cv / var_pcv,
        mse_cv: predict_mse(&k, n, 1.0, false)?,
        mse_pcv: predict_mse(&k, n, p, false)?,
        mse_pcvp: predict_mse(&k, n, p, true)?,
    })
}

#[derive(Debug, Serialize)]
struct OracleBody {
    mixture: String,
    components: String,
    constants: AsymptoticConstants,
    rows: Vec<OracleRow>,
}

fn cmd_oracle(manifest: &RunManifest, args: &OracleArgs, start: Instant) -> CliResult<String> {
    let (label, mixture) = resolve_mixture(&args.mixture)?;
    let kernel = kernel(args.kernel);
    let k = constants(&mixture, &kernel)?;
    let rows = args
        .n
        .iter()
        .map(|&n| oracle_row(&mixture, &kernel, n, args.p))
        .collect::<CliResult<Vec<_>>>()?;
    match manifest.format() {
        Format::Json => record(
            manifest,
            OracleBody {
                mixture: label,
                components: mixture.to_records(),
                constants: k,
                rows,
            },
            start,
        ),
        Format::Csv => {
            let mut t = Table::new(&[
                "mixture",
                "n",
                "h_opt",
                "mise_at_opt",
                "h_amise",
                "h_tilde",
                "c",
                "c_perm",
                "p",
                "p_opt",
                "p_perm_opt",
                "var_cv",
                "var_pcv",
                "variance_reduction",
                "mse_cv",
                "mse_pcv",
                "mse_pcvp",
            ]);
            for r in rows {
                t.push(vec![
                    label.clone().into(),
                    r.n.into(),
                    r.h_opt.into(),
                    r.mise_at_opt.into(),
                    r.h_amise.into(),
                    r.h_tilde.into(),
                    k.c.into(),
                    k.c_perm.into(),
                    r.p.into(),
                    r.p_opt.into(),
                    r.p_perm_opt.into(),
                    r.var_cv.into(),
                    r.var_pcv.into(),
                    r.variance_reduction.into(),
                    r.mse_cv.into(),
                    r.mse_pcv.into(),
                    r.mse_pcvp.into(),
                ]);
            }
            t.to_string()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionRow {
    pub n: usize,
    pub p: f64,
    pub var_cv: f64,
    pub var_pcv: f64,
    pub variance_reduction: f64,
    pub mse_cv: f64,
    pub mse_pcv: f64,
    pub mse_pcvp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PermutationFactor {
    pub permutations: usize,
    pub p: f64,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InflationRow {
    pub k: f64,
    pub ratio: f64,
}

#[derive(Debug, Serialize)]
struct AsymptoticsBody {
    mixture: String,
    constants: AsymptoticConstants,
    predictions: Vec<PredictionRow>,
    permutation_factors: Vec<PermutationFactor>,
    inflation: Vec<InflationRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    unequal_sizes: Option<UnequalSizeFactor>,
}

fn cmd_asymptotics(
    manifest: &RunManifest,
    args: &AsymptoticsArgs,
    start: Instant,
) -> CliResult<String> {
    let (label, mixture) = resolve_mixture(&args.mixture)?;
    let k = constants(&mixture, &kernel(args.kernel))?;
    let mut predictions = Vec::new();
    let mut factors = Vec::new();
    for &n in &args.n {
        let ps = if args.p.is_empty() {
            vec![optimal_p(&k, n)]
        } else {
            args.p.clone()
        };
        for p in ps {
            let var_cv = predict_variance(&k, n, 1.0, Method::Cv)?;
            let var_pcv = predict_variance(&k, n, p, Method::Pcv)?;
            predictions.push(PredictionRow {
                n,
                p,
                var_cv,
                var_pcv,
                variance_reduction: var_cv / var_pcv,
                mse_cv: predict_mse(&k, n, 1.0, false)?,
                mse_pcv: predict_mse(&k, n, p, false)?,
                mse_pcvp: predict_mse(&k, n, p, true)?,
            });
            for &m in &args.permutations {
                let f = PermutationFactor {
                    permutations: m,
                    p,
                    factor: theorem2_factor(m, p)?,
                };
                if !factors.contains(&f) {
                    factors.push(f);
                }
            }
        }
    }
    let inflation = args
        .k
        .iter()
        .map(|&x| {
            Ok(InflationRow {
                k: x,
                ratio: mse_inflation_ratio(x)?,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let unequal_sizes = if args.sizes.is_empty() {
        None
    } else {
        Some(unequal_size_factor(&args.sizes)?)
    };
    match manifest.format() {
        Format::Json => record(
            manifest,
            AsymptoticsBody {
                mixture: label,
                constants: k,
                predictions,
                permutation_factors: factors,
                inflation,
                unequal_sizes,
            },
            start,
        ),
        Format::Csv => {
            let mut t = Table::new(&[
                "mixture",
                "n",
                "p",
                "var_cv",
                "var_pcv",
                "variance_reduction",
                "mse_cv",
                "mse_pcv",
                "mse_pcvp",
            ]);
            for r in predictions {
                t.push(vec![
                    label.clone().into(),
                    r.n.into(),
                    r.p.into(),
                    r.var_cv.into(),
                    r.var_pcv.into(),
                    r.variance_reduction.into(),
                    r.mse_cv.into(),
                    r.mse_pcv.into(),
                    r.mse_pcvp.into(),
                ]);
            }
            t.to_string()
        }
    }
}

pub fn scenario(args: &SimulateArgs) -> CliResult<SimScenario> {
    let (label, mixture) = resolve_mixture(&args.mixture)?;
    let mut s = SimScenario::new(label, mixture, args.n, args.replicates);
    s.methods = args.methods.iter().map(|&m| m.into()).collect();
    s.methods.dedup();
    s.p_values = args.p.clone();
    s.permutations = args.permutations.clone();
    s.seed = args.seed;
    s.rel_tol = args.tol;
    s.max_expansions = args.max_expansions;
    s.min_group = args.min_group;
    s.cutoff = args.cutoff;
    if s.methods.contains(&Method::Ma) {
        s.prior = Some(load_prior(&args.prior)?);
    }
    Ok(s)
}

fn cmd_simulate(manifest: &RunManifest, args: &SimulateArgs, start: Instant) -> CliResult<String> {
    let out = run_simulation(&scenario(args)?)?;
    if let Some(path) = &args.draws_out {
        crate::output::emit(&out.draws_table().to_string()?, Some(path))?;
    }
    match manifest.format() {
        Format::Json => record(manifest, &out, start),
        Format::Csv => out.table().to_string(),
    }
}

fn cmd_bench(manifest: &RunManifest, args: &BenchArgs, start: Instant) -> CliResult<String> {
    let (_, mixture) = resolve_mixture(&args.mixture)?;
    let config = BenchConfig {
        mixture,
        sizes: args.sizes.clone(),
        datasets: args.datasets,
        cn: args.cn,
        min_group: args.min_group,
        max_group: args.max_group,
        seed: args.seed,
        parallel_threads: args.parallel_threads,
        options: BenchOptions {
            rel_tol: args.tol,
            max_expansions: SearchConfig::DEFAULT_MAX_EXPANSIONS,
        },
    };
    let rows = run_bench(&config)?;
    match manifest.format() {
        Format::Json => record(manifest, serde_json::json!({ "rows": rows }), start),
        Format::Csv => bench_table(&rows).to_string(),
    }
}

/// Parses "min,max,points".
pub fn parse_grid(spec: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    let bad = || usage(format!("grid must be 'min,max,points', got '{spec}'"));
    let [lo, hi, m] = parts.as_slice() else {
        return Err(bad());
    };
    let lo: f64 = lo.parse().map_err(|_| bad())?;
    let hi: f64 = hi.parse().map_err(|_| bad())?;
    let m: usize = m.parse().map_err(|_| bad())?;
    if !(lo.is_finite() && hi.is_finite() && hi > lo) || m < 2 {
        return Err(bad());
    }
    Ok(linspace(lo, hi, m))
}

pub fn linspace(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    let step = (hi - lo) / (m - 1) as f64;
    (0..m)
        .map(|i| if i == m - 1 { hi } else { lo + step * i as f64 })
        .collect()
}

fn range(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityCurve {
    pub label: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityOutput {
    /// Common bandwidth used for every curve.
    pub h: f64,
    /// Bandwidth selected for each input before averaging.
    pub selected: Vec<f64>,
    pub grid: Vec<f64>,
    pub curves: Vec<DensityCurve>,
}

enum DensityInput {
    Sample(String, Sample),
    Chunks(String, Vec<ChunkSource>),
}

pub fn density(args: &DensityArgs) -> CliResult<DensityOutput> {
    let sel = &args.select;
    let inputs = if let Some(dir) = &sel.data.chunks_dir {
        vec![DensityInput::Chunks(
            dir.display().to_string(),
            chunk_sources(sel, dir)?,
        )]
    } else {
        match sel.data.input.len() {
            1 | 2 => sel
                .data
                .input
                .iter()
                .map(|p| {
                    Ok(DensityInput::Sample(
                        label_of(p),
                        read_sample(&sel.data, p)?,
                    ))
                })
                .collect::<CliResult<Vec<_>>>()?,
            0 => return Err(usage("give --input or --chunks-dir")),
            _ => return Err(usage("density compares at most two inputs")),
        }
    };
    let selected: Vec<f64> = match args.h {
        Some(h) if h > 0.0 && h.is_finite() => vec![h],
        Some(h) => return Err(usage(format!("bandwidth must be positive, got {h}"))),
        None => inputs
            .iter()
            .map(|input| match input {
                DensityInput::Sample(_, s) => Ok(select_sample(sel, s)?.h),
                DensityInput::Chunks(_, _) => {
                    Ok(select_chunks(sel, sel.data.chunks_dir.as_ref().unwrap())?.h)
                }
            })
            .collect::<CliResult<_>>()?,
    };
    let h = selected.iter().sum::<f64>() / selected.len() as f64;

    let grid = match &args.grid {
        Some(spec) => parse_grid(spec)?,
        None => {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for input in &inputs {
                let (a, b) = match input {
                    DensityInput::Sample(_, s) => range(s.values()),
                    DensityInput::Chunks(_, chunks) => {
                        let mut r = (f64::INFINITY, f64::NEG_INFINITY);
                        for c in chunks {
                            let (a, b) = range(&c.read()?);
                            r = (r.0.min(a), r.1.max(b));
                        }
                        r
                    }
                };
                lo = lo.min(a);
                hi = hi.max(b);
            }
            linspace(
                lo - AUTO_GRID_MARGIN * h,
                hi + AUTO_GRID_MARGIN * h,
                AUTO_GRID_POINTS,
            )
        }
    };
    let curves = inputs
        .iter()
        .map(|input| {
            Ok(match input {
                DensityInput::Sample(label, s) => DensityCurve {
                    label: label.clone(),
                    values: kde_eval(s, h, &grid)?,
                },
                DensityInput::Chunks(label, chunks) => DensityCurve {
                    label: label.clone(),
                    values: combined_density(chunks, h, &grid)?,
                },
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(DensityOutput {
        h,
        selected,
        grid,
        curves,
    })
}

fn label_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn cmd_density(manifest: &RunManifest, args: &DensityArgs, start: Instant) -> CliResult<String> {
    let out = density(args)?;
    match manifest.format() {
        Format::Json => record(manifest, &out, start),
        Format::Csv => {
            let mut t = Table::new(&["series", "h", "x", "density"]);
            for c in &out.curves {
                for (x, f) in out.grid.iter().zip(&c.values) {
                    t.push(vec![
                        c.label.clone().into(),
                        out.h.into(),
                        (*x).into(),
                        (*f).into(),
                    ]);
                }
            }
            t.to_string()
        }
    }
}

fn thread_pool(threads: Option<usize>) -> CliResult<Option<rayon::ThreadPool>> {
    match threads {
        None => Ok(None),
        Some(0) => Err(usage("--threads must be positive")),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map(Some)
            .map_err(|e| usage(format!("cannot build thread pool: {e}"))),
    }
}

/// Runs a manifest and returns the text it emits.
pub fn execute(manifest: &RunManifest) -> CliResult<String> {
    let start = Instant::now();
    let run = || match &manifest.command {
        Command::Select(a) => cmd_select(manifest, a, start),
        Command::Oracle(a) => cmd_oracle(manifest, a, start),
        Command::Asymptotics(a) => cmd_asymptotics(manifest, a, start),
        Command::Simulate(a) => cmd_simulate(manifest, a, start),
        Command::Bench(a) => cmd_bench(manifest, a, start),
        Command::Density(a) => cmd_density(manifest, a, start),
        Command::Run(_) => Err(usage("a manifest cannot contain another 'run'")),
    };
    match thread_pool(manifest.threads)? {
        Some(pool) => pool.install(run),
        None => run(),
    }
}

pub fn load_manifest(path: &Path) -> CliResult<RunManifest> {
    let text = std::fs::read_to_string(path)?;
    let manifest: RunManifest = serde_json::from_str(&text)?;
    if manifest.schema_version != SCHEMA_VERSION {
        return Err(usage(format!(
            "manifest schema_version {} is not supported (expected {SCHEMA_VERSION})",
            manifest.schema_version
        )));
    }
    Ok(manifest)
}
