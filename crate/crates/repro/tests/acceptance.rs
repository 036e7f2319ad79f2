//! Acceptance suite. Prints one line per check and one PASS/FAIL line per
//! criterion; exits non-zero if any criterion fails. Criterion ids given on
//! the command line (for example `C5 C7`) restrict the run.

use std::time::Instant;

use pcv_cli::bench::{run_bench, BenchConfig, BenchOptions};
use pcv_cli::simulate::{run_simulation, variance_ratio, SimScenario, SimulationOutput};
use pcv_core::asymptotics::{
    constants, expected_cv_bandwidth, mse_inflation_ratio, optimal_p, optimal_p_permuted,
    predict_variance, theorem2_factor,
};
use pcv_core::cv::{kde_eval, kernel_u_statistic, minimize_cv, Method, Sample, SearchConfig};
use pcv_core::kernels::{CrossFunctional, DerivedKernelId, KernelSpec};
use pcv_core::mixtures::MixturePreset;
use pcv_core::pcv::{
    chunked_pipeline, chunks_in_dir, combine_weighted, make_partition, permuted_pcv, ChunkFormat,
    PcvOptions,
};
use pcv_core::quadrature::integrate;
use pcv_core::seed::split_seed;
use pcv_repro::reference::*;
use pcv_repro::report::{Criterion, Outcome};

/// Relative tolerance of the bandwidth search in the Monte Carlo criteria.
const MC_REL_TOL: f64 = 1e-2;

fn kernel() -> KernelSpec {
    KernelSpec::gaussian()
}

fn c1() -> Outcome {
    let mut c = Criterion::start("C1", "oracle bandwidths h_{n,0} from the exact MISE");
    let start = Instant::now();
    for (preset, row) in OPTIMAL {
        let m = preset.mixture();
        for (&n, &want) in TABLE_SIZES.iter().zip(&row) {
            match m.mise_optimal_bandwidth(n) {
                Ok(e) => c.near(format!("{preset} n={n} h_opt"), e.h, want, ORACLE_TOL),
                Err(e) => {
                    c.error(format!("{preset} n={n}"), e);
                    false
                }
            };
        }
    }
    let h = MixturePreset::MW8
        .mixture()
        .mise_optimal_bandwidth(25000)
        .map(|e| e.h);
    match h {
        Ok(h) => c.near("MW8 n=25000 h_opt (text)", h, MW8_OPTIMAL_25000, ORACLE_TOL),
        Err(e) => {
            c.error("MW8 n=25000", e);
            false
        }
    };
    for (preset, want) in CAPTION_OPTIMAL {
        match preset.mixture().mise_optimal_bandwidth(CAPTION_N) {
            Ok(e) => c.near(
                format!("{preset} n={CAPTION_N} h_opt (figure caption)"),
                e.h,
                want,
                ORACLE_TOL,
            ),
            Err(e) => {
                c.error(format!("{preset} caption"), e);
                false
            }
        };
    }
    let secs = start.elapsed().as_secs_f64();
    c.check(secs < 60.0, format!("runtime {secs:.2} s < 60 s"));
    c.finish()
}

fn c2() -> Outcome {
    let mut c = Criterion::start(
        "C2",
        "expected CV bandwidths h~_n with the second-order bias term",
    );
    let start = Instant::now();
    for (preset, row) in EXPECTED_CV {
        let m = preset.mixture();
        for (&n, &want) in TABLE_SIZES.iter().zip(&row) {
            match expected_cv_bandwidth(&m, &kernel(), n) {
                Ok(h) => c.near(format!("{preset} n={n} h_tilde"), h, want, EXPECTED_CV_TOL),
                Err(e) => {
                    c.error(format!("{preset} n={n}"), e);
                    false
                }
            };
        }
    }
    let secs = start.elapsed().as_secs_f64();
    c.check(secs < 60.0, format!("runtime {secs:.2} s < 60 s"));
    c.finish()
}

fn c3() -> Outcome {
    let mut c = Criterion::start("C3", "derived kernel identities");
    let k = kernel();
    for id in [DerivedKernelId::V, DerivedKernelId::W] {
        for j in 0..=3 {
            match k.moment(id, j) {
                Ok(m) => c.near(
                    format!("moment({id:?}, {j})"),
                    m,
                    0.0,
                    DERIVED_KERNEL_MOMENT_TOL,
                ),
                Err(e) => {
                    c.error(format!("moment({id:?}, {j})"), e);
                    false
                }
            };
        }
    }
    c.near(
        "int V^2",
        k.cross_functional(CrossFunctional::IntV2),
        INT_V2,
        INT_V2_TOL,
    );
    // Independent check of the tabulated constant by quadrature.
    let v2 = integrate(
        |u| {
            let v = k.eval_derived(DerivedKernelId::V, u).unwrap();
            v * v
        },
        -30.0,
        30.0,
        1e-13,
    )
    .value;
    c.near(
        "int V^2 by quadrature",
        v2,
        k.cross_functional(CrossFunctional::IntV2),
        1e-9,
    );
    c.finish()
}

fn c4() -> Outcome {
    let mut c = Criterion::start("C4", "normal constant C and optimal group counts");
    let k = match constants(&MixturePreset::MW1.mixture(), &kernel()) {
        Ok(k) => k,
        Err(e) => {
            c.error("constants", e);
            return c.finish();
        }
    };
    c.near_rel("C for MW1", k.c, NORMAL_CONSTANT, NORMAL_CONSTANT_REL_TOL);
    for (n, want) in OPTIMAL_P {
        let p = optimal_p(&k, n);
        c.check(
            p.round() as usize == want,
            format!("round(C n^(1/6)) at n={n}: {p:.3} -> {want}"),
        );
    }
    for (n, want) in OPTIMAL_P_PERMUTED {
        let p = optimal_p_permuted(&k, n);
        c.check(
            p.round() as usize == want,
            format!("round(C_perm n^(1/11)) at n={n}: {p:.3} -> {want}"),
        );
    }
    c.finish()
}

fn round_to(x: f64, digits: i32) -> f64 {
    let s = 10f64.powi(digits);
    (x * s).round() / s
}

fn c5() -> Outcome {
    let mut c = Criterion::start("C5", "closed-form permutation and inflation factors");
    for (n, p, want) in PERMUTATION_FACTORS {
        let f = theorem2_factor(n, p).unwrap();
        c.check(
            round_to(f, 3) == want,
            format!("factor(N={n}, p={p}) = {f:.6} -> {want}"),
        );
    }
    let (k, want) = INFLATION;
    let r = mse_inflation_ratio(k).unwrap();
    c.check(
        round_to(r, 2) == want,
        format!("inflation({k}) = {r:.6} -> {want}"),
    );
    c.finish()
}

fn c6() -> Outcome {
    let mut c = Criterion::start("C6", "asymptotic CV and PCV variances");
    let p_at = |n: usize| VARIANCE_TABLE_CONSTANT * (n as f64).powf(1.0 / 6.0);
    for (preset, cv_want, pcv_want) in ASYMPTOTIC_VARIANCES {
        let k = constants(&preset.mixture(), &kernel()).unwrap();
        let n = VARIANCE_N;
        let cv = predict_variance(&k, n, 1.0, Method::Cv).unwrap();
        let pcv = predict_variance(&k, n, p_at(n), Method::Pcv).unwrap();
        c.near_rel(
            format!("{preset} n={n} Var CV"),
            cv,
            cv_want,
            VARIANCE_REL_TOL,
        );
        c.near_rel(
            format!("{preset} n={n} Var PCV"),
            pcv,
            pcv_want,
            VARIANCE_REL_TOL,
        );
        if preset == MixturePreset::MW1 {
            c.near_rel(
                format!("{preset} n={n} variance reduction"),
                cv / pcv,
                VARIANCE_REDUCTION,
                VARIANCE_REL_TOL,
            );
        }
    }
    for (preset, v50, v100) in PCV_VARIANCES {
        let k = constants(&preset.mixture(), &kernel()).unwrap();
        for (n, want) in [(50_000, v50), (100_000, v100)] {
            let v = predict_variance(&k, n, p_at(n), Method::Pcv).unwrap();
            c.near_rel(format!("{preset} n={n} Var PCV"), v, want, VARIANCE_REL_TOL);
        }
    }
    c.finish()
}

fn simulate(c: &mut Criterion, scenario: &SimScenario) -> Option<SimulationOutput> {
    let start = Instant::now();
    match run_simulation(scenario) {
        Ok(out) => {
            c.note(format!(
                "{} n={} T={} simulated in {:.1} s",
                scenario.label,
                scenario.n,
                scenario.replicates,
                start.elapsed().as_secs_f64()
            ));
            Some(out)
        }
        Err(e) => {
            c.error(format!("{} n={} simulation", scenario.label, scenario.n), e);
            None
        }
    }
}

fn scenario(preset: MixturePreset, n: usize, seed: u64) -> SimScenario {
    let mut s = SimScenario::new(preset.to_string(), preset.mixture(), n, REPLICATES);
    s.seed = seed;
    s.rel_tol = MC_REL_TOL;
    s.cutoff = true;
    s
}

/// `|mean - want| <= 3 SE`
fn within_se(c: &mut Criterion, what: String, mean: f64, se: f64, want: f64) -> bool {
    c.check(
        (mean - want).abs() <= STANDARD_ERRORS * se,
        format!(
            "{what}: mean {mean:.5} (SE {se:.5}), want {want} within {STANDARD_ERRORS} SE (off by {:.2} SE)",
            (mean - want).abs() / se
        ),
    )
}

fn c7() -> Outcome {
    let mut c = Criterion::start("C7", "Monte Carlo bias of CV bandwidths, MW1, T = 300");
    let mut ts = Vec::new();
    for (i, (n, want, t_ref)) in MW1_CV_MEANS.into_iter().enumerate() {
        let s = scenario(MixturePreset::MW1, n, 7000 + i as u64);
        let Some(out) = simulate(&mut c, &s) else {
            continue;
        };
        let sum = out.summary_for(Method::Cv, 1, 1).unwrap();
        within_se(&mut c, format!("n={n} CV"), sum.mean, sum.std_error, want);
        c.note(format!(
            "n={n}: h_tilde {:.5}, t = {:.2} (reference t = {t_ref} at T=2000), boundary hits {}",
            out.h_tilde, sum.t_stat, sum.boundary_count
        ));
        ts.push((n, sum.t_stat.abs()));
    }
    if ts.len() == MW1_CV_MEANS.len() {
        let decreasing = ts.windows(2).all(|w| w[0].1 > w[1].1);
        let text: Vec<String> = ts.iter().map(|(n, t)| format!("{n}: {t:.2}")).collect();
        c.check(
            decreasing,
            format!("|t| decreasing in n ({})", text.join(", ")),
        );
    }
    c.finish()
}

fn c8() -> Outcome {
    let mut c = Criterion::start("C8", "desk-scale PCV reproduction, MW1, p = 30, T = 300");
    let mut s = scenario(MixturePreset::MW1, 25_000, 8000);
    s.methods = vec![Method::Cv, Method::Pcv];
    s.p_values = vec![PCV30_N];
    if let Some(out) = simulate(&mut c, &s) {
        let cv = out.draws_for(Method::Cv, 1, 1).unwrap();
        let pcv = out.draws_for(Method::Pcv, PCV30_N, 1).unwrap();
        let (ratio, se) = variance_ratio(&cv.values, &pcv.values).unwrap();
        let (lo, hi) = EMPIRICAL_VRF;
        c.check(
            (lo..=hi).contains(&ratio),
            format!("n=25000 Var(CV)/Var(PCV) = {ratio:.2} (jackknife SE {se:.2}) in [{lo}, {hi}]"),
        );
        let sum = out.summary_for(Method::Pcv, PCV30_N, 1).unwrap();
        within_se(
            &mut c,
            "n=25000 PCV vs trend".into(),
            sum.mean,
            sum.std_error,
            pcv30_trend(25_000),
        );
        c.note(format!(
            "n=25000: CV mean {:.5}, h_opt {:.5}, boundary hits CV {} PCV {}",
            out.summary_for(Method::Cv, 1, 1).unwrap().mean,
            out.h_opt,
            cv.boundary_count,
            pcv.boundary_count
        ));
    }
    let mut s = scenario(MixturePreset::MW1, PCV30_MEANS[0].0, 8001);
    s.methods = vec![Method::Pcv];
    s.p_values = vec![PCV30_N];
    if let Some(out) = simulate(&mut c, &s) {
        let sum = out.summary_for(Method::Pcv, PCV30_N, 1).unwrap();
        within_se(
            &mut c,
            format!("n={} PCV", PCV30_MEANS[0].0),
            sum.mean,
            sum.std_error,
            PCV30_MEANS[0].1,
        );
    }
    c.finish()
}

fn c9() -> Outcome {
    let mut c = Criterion::start(
        "C9",
        "permuted PCV variance factor, n = 50000, p = 33, T = 300",
    );
    for (i, (preset, r2_obs, r5_obs)) in PERMUTED_RATIOS.into_iter().enumerate() {
        let mut s = scenario(preset, PERMUTED_N, 9000 + i as u64);
        s.methods = vec![Method::Pcv, Method::Pcvp];
        s.p_values = vec![PERMUTED_P];
        s.permutations = vec![2, 5];
        let Some(out) = simulate(&mut c, &s) else {
            continue;
        };
        let pcv = &out.draws_for(Method::Pcv, PERMUTED_P, 1).unwrap().values;
        for (m, observed) in [(2, r2_obs), (5, r5_obs)] {
            let pcvp = &out.draws_for(Method::Pcvp, PERMUTED_P, m).unwrap().values;
            let (ratio, se) = variance_ratio(pcvp, pcv).unwrap();
            let want = theorem2_factor(m, PERMUTED_P as f64).unwrap();
            c.check(
                (ratio - want).abs() <= STANDARD_ERRORS * se,
                format!(
                    "{preset} Var(PCVP_{m})/Var(PCV) = {ratio:.4} (jackknife SE {se:.4}), \
                     want {want:.4} within {STANDARD_ERRORS} SE (reference run {observed})"
                ),
            );
        }
    }
    c.finish()
}

fn kde_derived(id: DerivedKernelId, x: &[f64], h: f64, t: f64) -> f64 {
    let k = kernel();
    x.iter()
        .map(|&xi| k.eval_derived(id, (t - xi) / h).unwrap())
        .sum::<f64>()
        / (x.len() as f64 * h)
}

fn c10() -> Outcome {
    use DerivedKernelId::*;
    let mut c = Criterion::start("C10", "structural identities");
    let k = kernel();

    // Partition average of group estimates is the full estimate.
    let x = MixturePreset::MW2.mixture().sample(1003, 101);
    let grid: Vec<f64> = (0..61).map(|i| -3.0 + 0.1 * i as f64).collect();
    let full = kde_eval(&Sample::new(x.clone()).unwrap(), 0.2, &grid).unwrap();
    let plan = make_partition(x.len(), 7, 102).unwrap();
    let mut avg = vec![0.0; grid.len()];
    for g in plan.gather(&x) {
        let w = g.len() as f64 / x.len() as f64;
        for (a, f) in avg
            .iter_mut()
            .zip(kde_eval(&Sample::new(g).unwrap(), 0.2, &grid).unwrap())
        {
            *a += w * f;
        }
    }
    let worst = avg
        .iter()
        .zip(&full)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    c.check(
        worst < 1e-12,
        format!("partition-average estimate = full estimate (max diff {worst:.1e})"),
    );

    // U-statistic forms of the four integrals against quadrature.
    for (n, seed) in [(10usize, 103u64), (30, 104)] {
        let s = Sample::new(MixturePreset::MW8.mixture().sample(n, seed)).unwrap();
        let v = s.values();
        let h = 0.3;
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min) - 15.0 * h;
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 15.0 * h;
        for (conv, a, b) in [(A, K, K), (C, L, L), (B, K, L), (D, K, H)] {
            let u = kernel_u_statistic(&k, conv, &s, h).unwrap();
            let q = integrate(
                |t| kde_derived(a, v, h, t) * kde_derived(b, v, h, t),
                lo,
                hi,
                1e-12,
            )
            .value;
            c.near(
                format!("n={n} U-statistic {conv:?} vs quadrature of {a:?}*{b:?}"),
                u,
                q,
                1e-7,
            );
        }
    }

    // Chunked pipeline against the monolithic combine of the same groups.
    let dir = tempfile::tempdir().unwrap();
    let sizes = [640usize, 515, 702, 433];
    let seed = 105;
    let (mut b, mut group_sizes) = (Vec::new(), Vec::new());
    for (i, &m) in sizes.iter().enumerate() {
        let v = MixturePreset::MW1.mixture().sample(m, 200 + i as u64);
        let text: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
        std::fs::write(dir.path().join(format!("chunk{i}.txt")), text.join("\n")).unwrap();
        let plan = make_partition(m, 2, split_seed(split_seed(seed, i as u64), 0)).unwrap();
        for g in plan.gather(&v) {
            group_sizes.push(g.len());
            let gs = Sample::new(g).unwrap();
            b.push(
                minimize_cv(&gs, &SearchConfig::for_sample(&gs).unwrap())
                    .unwrap()
                    .h,
            );
        }
    }
    let chunks = chunks_in_dir(dir.path(), &ChunkFormat::default(), None).unwrap();
    let piped = chunked_pipeline(&chunks, 2, 1, seed, &PcvOptions::default()).unwrap();
    let mono = combine_weighted(&b, &group_sizes, sizes.iter().sum()).unwrap();
    c.near(
        "chunked pipeline = monolithic weighted combine",
        piped.h,
        mono,
        1e-12,
    );

    // Bit-exact results across thread counts.
    let sample = Sample::new(MixturePreset::MW2.mixture().sample(6000, 106)).unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| permuted_pcv(&sample, 12, 4, 107, &PcvOptions::default()).unwrap())
    };
    let one = run(1);
    let same = [2, 4].iter().all(|&t| {
        let other = run(t);
        other.h.to_bits() == one.h.to_bits() && other.per_group == one.per_group
    });
    c.check(same, "permuted PCV identical on 1, 2 and 4 threads");
    let mut sc = SimScenario::new("MW1", MixturePreset::MW1.mixture(), 500, 6);
    sc.methods = vec![Method::Cv, Method::Pcv, Method::Pcvp];
    sc.p_values = vec![4];
    sc.permutations = vec![3];
    let sim = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_simulation(&sc).unwrap())
    };
    c.check(sim(1) == sim(3), "simulation identical on 1 and 3 threads");

    // CV scale equivariance.
    let base = MixturePreset::MW2.mixture().sample(400, 108);
    let tight = |s: &Sample| {
        let cfg = SearchConfig::for_sample(s)
            .unwrap()
            .with_rel_tol(1e-9)
            .unwrap();
        minimize_cv(s, &cfg).unwrap().h
    };
    let h0 = tight(&Sample::new(base.clone()).unwrap());
    for (scale, shift) in [(0.001, 5.0), (37.0, -120.0)] {
        let y: Vec<f64> = base.iter().map(|v| scale * v + shift).collect();
        let h = tight(&Sample::new(y).unwrap());
        c.near_rel(
            format!("CV bandwidth of {scale}x + {shift}"),
            h,
            scale * h0,
            1e-6,
        );
    }
    c.finish()
}

fn c11() -> Outcome {
    let mut c = Criterion::start(
        "C11",
        "declared substitutions: timing monotonicity and speed-up floor",
    );
    for h in DECLARED_HIGGS {
        c.note(format!(
            "full-dataset bandwidth {h} is not reproduced at desk scale"
        ));
    }
    let config = BenchConfig {
        mixture: MixturePreset::MW1.mixture(),
        sizes: TIMING_SIZES.to_vec(),
        datasets: TIMING_DATASETS,
        cn: NORMAL_CONSTANT,
        min_group: pcv_core::pcv::DEFAULT_MIN_GROUP,
        max_group: None,
        seed: 11,
        parallel_threads: None,
        options: BenchOptions {
            rel_tol: SearchConfig::DEFAULT_REL_TOL,
            max_expansions: SearchConfig::DEFAULT_MAX_EXPANSIONS,
        },
    };
    match run_bench(&config) {
        Ok(rows) => {
            for r in &rows {
                c.note(format!(
                    "n={} p={}: CV {:.3} s, PCV {:.4} s, ratio {:.1}",
                    r.n, r.p, r.cv_seconds, r.pcv_seconds, r.ratio
                ));
            }
            c.check(
                rows[0].ratio >= TIMING_FLOOR,
                format!(
                    "speed-up at n={} is {:.1} >= {TIMING_FLOOR}",
                    rows[0].n, rows[0].ratio
                ),
            );
            let increasing = rows.windows(2).all(|w| w[1].ratio > w[0].ratio);
            c.check(increasing, "speed-up increasing in n");
        }
        Err(e) => c.error("bench", e),
    }
    c.finish()
}

type CriterionFn = fn() -> Outcome;

fn main() {
    let filters: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let all: [(&str, CriterionFn); 11] = [
        ("C1", c1),
        ("C2", c2),
        ("C3", c3),
        ("C4", c4),
        ("C5", c5),
        ("C6", c6),
        ("C7", c7),
        ("C8", c8),
        ("C9", c9),
        ("C10", c10),
        ("C11", c11),
    ];
    let outcomes: Vec<Outcome> = all
        .iter()
        .filter(|(id, _)| filters.is_empty() || filters.iter().any(|f| f.eq_ignore_ascii_case(id)))
        .map(|(_, run)| run())
        .collect();
    println!();
    println!("acceptance summary");
    for o in &outcomes {
        println!("{} {}", if o.pass { "PASS" } else { "FAIL" }, o.id);
    }
    let failed = outcomes.iter().filter(|o| !o.pass).count();
    println!("{} passed, {failed} failed", outcomes.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
