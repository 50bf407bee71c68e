//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Tolerances and counts are fixed here.

mod common;

use std::fs;
use std::path::Path;
use std::time::Instant;

use common::*;
use tscox::baseline::{breslow_cumulative_hazard, exponentiality_diagnostic, DEFAULT_EXPONENTIALITY_THRESHOLD};
use tscox::bootstrap::{compare_models, paired_replicates, resample_indices, BootstrapOptions};
use tscox::cox::CoxFit;
use tscox::pipeline::{run_pipeline, summaries_from_table3, Inputs, PipelineConfig};
use tscox::synth::{generate_cohort, generate_cohort_with, Baseline, GeneratorParams, DEFAULT_GOMPERTZ_PSI};
use tscox::{
    build_risk_sets, fit_cox, partial_log_likelihood, score_and_information, validate_cohort, Cohort, Execution,
    FitOptions, Model, ModelSpec, Ties, TimeScale,
};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

// 1
fn derivatives() -> Outcome {
    const GRAD_RTOL: f64 = 1e-6;
    const INFO_RTOL: f64 = 1e-4;
    let start = Instant::now();
    let (mut worst_g, mut worst_i) = (0.0f64, 0.0f64);
    let mut checks = 0;
    for k in 0..25u64 {
        let shape = RandomCohort { n: 10 + (k as usize * 7) % 21, ties: k % 2 == 0, n_covariates: 2 };
        let cohort = random_cohort(500 + k, &shape);
        for m in Model::ALL {
            let spec = m.spec(vec![0, 1]);
            let p = spec.dimension();
            // Step per coordinate sized to the covariate's magnitude.
            let scale: Vec<f64> =
                (0..p).map(|j| max_abs(cohort.subjects().iter().map(|s| covariates(&spec, s)[j])).max(1.0)).collect();
            let beta: Vec<f64> =
                (0..p).map(|j| if j < 2 { 0.35 - 0.3 * j as f64 + 0.01 * k as f64 } else { -0.03 }).collect();
            for ties in [Ties::Breslow, Ties::Efron] {
                let (g, info) = score_and_information(&cohort, &spec, &beta, ties).unwrap();
                let mut fd_g = vec![0.0; p];
                let mut fd_info = vec![vec![0.0; p]; p];
                for j in 0..p {
                    let h = 1e-5 / scale[j];
                    let (mut up, mut dn) = (beta.clone(), beta.clone());
                    up[j] += h;
                    dn[j] -= h;
                    let ll = |b: &[f64]| partial_log_likelihood(&cohort, &spec, b, ties).unwrap();
                    fd_g[j] = (ll(&up) - ll(&dn)) / (2.0 * h);
                    let (gu, _) = score_and_information(&cohort, &spec, &up, ties).unwrap();
                    let (gd, _) = score_and_information(&cohort, &spec, &dn, ties).unwrap();
                    for i in 0..p {
                        fd_info[i][j] = -(gu[i] - gd[i]) / (2.0 * h);
                    }
                }
                let eg = max_abs(g.iter().zip(&fd_g).map(|(a, b)| a - b)) / max_abs(fd_g.iter().copied());
                let ei =
                    max_abs((0..p).flat_map(|i| (0..p).map(move |j| (i, j))).map(|(i, j)| info[i][j] - fd_info[i][j]))
                        / max_abs(fd_info.iter().flatten().copied());
                worst_g = worst_g.max(eg);
                worst_i = worst_i.max(ei);
                checks += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst_g < GRAD_RTOL && worst_i < INFO_RTOL && secs < 10.0,
        format!("{checks} cohort/model/tie cases; worst relative error gradient {worst_g:.2e} (< {GRAD_RTOL:e}), information {worst_i:.2e} (< {INFO_RTOL:e}); {secs:.2} s (< 10 s)"),
    )
}

// 2
fn golden_section() -> Outcome {
    const TOL: f64 = 1e-4;
    let mut worst = 0.0f64;
    let mut fixtures = 0;
    let mut seed = 0u64;
    while fixtures < 10 {
        let n = 5 + (seed as usize % 4);
        let cohort = random_cohort(7000 + seed, &RandomCohort { n, ties: seed.is_multiple_of(3), n_covariates: 1 });
        let scale = TimeScale::ALL[seed as usize % 3];
        let ties = if seed.is_multiple_of(2) { Ties::Breslow } else { Ties::Efron };
        seed += 1;
        let spec = ModelSpec::new(scale, vec![0], false);
        // Fixtures without a finite maximum are not usable.
        let Ok(fit) = fit_cox(&cohort, &spec, &FitOptions::default().with_ties(ties)) else { continue };
        let best = golden_section_max(|b| brute_log_likelihood(&cohort, &spec, &[b], ties), -30.0, 30.0, 1e-10);
        worst = worst.max((fit.beta[0] - best).abs());
        fixtures += 1;
    }
    check(worst < TOL, format!("10 fixtures (n <= 8); max |beta - golden-section argmax| = {worst:.2e} (< {TOL:e})"))
}

fn constant_entry(cohort: &Cohort, a0: f64) -> Cohort {
    let mut raw = cohort.to_raw();
    for r in &mut raw {
        let fu = r.exit_age - r.entry_age;
        r.entry_age = a0;
        r.exit_age = a0 + fu;
    }
    validate_cohort(cohort.name(), raw, cohort.covariate_names().to_vec()).unwrap()
}

// 3
fn equal_entry_ages() -> Outcome {
    const TOL: f64 = 1e-8;
    let mut worst = 0.0f64;
    let mut shifted = true;
    for k in 0..10u64 {
        let params = GeneratorParams { n: 600, ..GeneratorParams::default() };
        let a0 = 40.0 + 2.5 * k as f64;
        let cohort = constant_entry(&generate_cohort(&params, 100 + k, "flat").unwrap(), a0);
        let tos =
            fit_cox(&cohort, &ModelSpec::new(TimeScale::TimeOnStudy, vec![0], false), &FitOptions::default()).unwrap();
        let m3 = fit_cox(&cohort, &Model::M3.spec(vec![0]), &FitOptions::default()).unwrap();
        worst = worst.max((tos.beta[0] - m3.beta[0]).abs());
        let a = build_risk_sets(&cohort, TimeScale::TimeOnStudy);
        let b = build_risk_sets(&cohort, TimeScale::AgeLeftTruncated);
        shifted &= a.entries.len() == b.entries.len()
            && a.entries.iter().zip(&b.entries).all(|(x, y)| {
                x.event_time + a0 == y.event_time && x.at_risk_ids == y.at_risk_ids && x.event_ids == y.event_ids
            });
    }
    check(
        worst < TOL && shifted,
        format!("10 cohorts; max |beta_M3 - beta_TOS| = {worst:.2e} (< {TOL:e}); risk sets identical after +a0 shift: {shifted}"),
    )
}

// 4
fn nesting() -> Outcome {
    let mut tos_nested = 0;
    let mut age_violations = 0;
    for k in 0..100u64 {
        let cohort = random_cohort(9000 + k, &RandomCohort { n: 20, ties: k % 2 == 0, n_covariates: 1 });
        tos_nested += build_risk_sets(&cohort, TimeScale::TimeOnStudy).is_nested() as usize;
        age_violations += !build_risk_sets(&cohort, TimeScale::AgeLeftTruncated).is_nested() as usize;
    }
    check(
        tos_nested == 100 && age_violations >= 1,
        format!("time-on-study nested in {tos_nested}/100 cohorts; left-truncated age scale not nested in {age_violations}/100"),
    )
}

// 5
fn breslow_nelson_aalen() -> Outcome {
    let mut compared = 0;
    let mut mismatches = 0;
    for k in 0..20u64 {
        let cohort = random_cohort(11000 + k, &RandomCohort { n: 30, ties: k % 2 == 0, n_covariates: 1 });
        for m in Model::ALL {
            let spec = m.spec(vec![0]);
            let Ok(mut fit): Result<CoxFit, _> = fit_cox(&cohort, &spec, &FitOptions::default()) else { continue };
            fit.beta.iter_mut().for_each(|b| *b = 0.0);
            let curve = breslow_cumulative_hazard(&cohort, &fit, &spec).unwrap();
            let na = nelson_aalen(&cohort, spec.scale);
            let got: Vec<(f64, f64)> = curve.points.iter().map(|p| (p.time, p.value)).collect();
            compared += got.len();
            mismatches += (got != na) as usize;
        }
    }
    check(
        mismatches == 0,
        format!("{compared} event times across 20 cohorts x 3 scales; {mismatches} curves differ from Nelson-Aalen"),
    )
}

struct RecoveryRun {
    beta: [f64; 3],
    se3: f64,
    slope: f64,
}

fn recovery_runs() -> (Vec<RecoveryRun>, f64) {
    let start = Instant::now();
    let params =
        GeneratorParams { n: 2000, beta_true: 0.02, rho: 0.4, follow_up_max: 20.0, ..GeneratorParams::default() };
    let runs = Execution::Parallel.map_range(0..20, |seed| {
        let cohort = generate_cohort_with(&params, seed as u64, "recovery", Execution::Sequential).unwrap();
        let fits: Vec<CoxFit> = Model::ALL
            .iter()
            .map(|m| fit_cox(&cohort, &m.spec(vec![0]), &FitOptions::default()).unwrap().require_converged().unwrap())
            .collect();
        let spec = Model::M3.spec(vec![0]);
        let curve = breslow_cumulative_hazard(&cohort, &fits[2], &spec).unwrap();
        let report = exponentiality_diagnostic(&curve, DEFAULT_EXPONENTIALITY_THRESHOLD).unwrap();
        RecoveryRun {
            beta: [fits[0].beta[0], fits[1].beta[0], fits[2].beta[0]],
            se3: fits[2].standard_errors[0],
            slope: report.slope,
        }
    });
    (runs, start.elapsed().as_secs_f64())
}

// 6
fn recovery(runs: &[RecoveryRun], secs: f64) -> Outcome {
    let covered = runs.iter().filter(|r| (r.beta[2] - 0.02).abs() <= 3.0 * r.se3).count();
    let slopes: Vec<f64> = runs.iter().map(|r| r.slope).collect();
    let mean = slopes.iter().sum::<f64>() / slopes.len() as f64;
    let mc_se = sd(&slopes) / (slopes.len() as f64).sqrt();
    let slope_ok = (mean - DEFAULT_GOMPERTZ_PSI).abs() <= 3.0 * mc_se;
    check(
        covered >= 18 && slope_ok && secs < 60.0,
        format!(
            "M3 beta within 3 se of 0.02 in {covered}/20 (>= 18); mean log-hazard slope {mean:.5} vs psi {DEFAULT_GOMPERTZ_PSI} (|diff| {:.5} <= 3 MC se {:.5}); {secs:.1} s (< 60 s)",
            (mean - DEFAULT_GOMPERTZ_PSI).abs(),
            3.0 * mc_se
        ),
    )
}

// 7
fn ordering(runs: &[RecoveryRun]) -> Outcome {
    let below_m3 = runs.iter().filter(|r| r.beta[1] < r.beta[2]).count();
    let below_m1 = runs.iter().filter(|r| r.beta[1] < r.beta[0]).count();
    check(
        below_m3 >= 18 && below_m1 >= 18,
        format!("beta_M2 < beta_M3 in {below_m3}/20, beta_M2 < beta_M1 in {below_m1}/20 (each >= 18)"),
    )
}

// 8
fn independence_equivalence() -> Outcome {
    let start = Instant::now();
    let params = GeneratorParams {
        n: 5000,
        rho: 0.0,
        baseline: Baseline::Gompertz { c: tscox::synth::DEFAULT_GOMPERTZ_C, psi: DEFAULT_GOMPERTZ_PSI },
        ..GeneratorParams::default()
    };
    let mut p_values = Vec::new();
    for seed in 0..20u64 {
        let cohort = generate_cohort_with(&params, 40 + seed, "independent", Execution::Parallel).unwrap();
        let options = BootstrapOptions { replicates: 1000, seed, ..BootstrapOptions::default() };
        let r = compare_models(&cohort, &Model::M1.spec(vec![0]), &Model::M3.spec(vec![0]), &options)
            .map_err(|e| e.to_string())?;
        p_values.push(r.p_value);
    }
    let above = p_values.iter().filter(|&&p| p > 0.05).count();
    let min_p = p_values.iter().copied().fold(1.0, f64::min);
    check(
        above >= 17,
        format!(
            "M1 vs M3 p > 0.05 in {above}/20 (>= 17); smallest p {min_p:.3}; 1000 replicates each; {:.0} s",
            start.elapsed().as_secs_f64()
        ),
    )
}

// 9
fn bootstrap_contract() -> Outcome {
    let cohort = random_cohort(424242, &RandomCohort { n: 40, ties: false, n_covariates: 1 });
    let m1 = Model::M1.spec(vec![0]);
    let m2 = Model::M2.spec(vec![0]);
    let options = BootstrapOptions { replicates: 10, seed: 17, ..BootstrapOptions::default() };

    let own = compare_models(&cohort, &m1, &m1, &options).map_err(|e| e.to_string())?;
    let json = |exec| {
        let r = compare_models(&cohort, &m1, &m2, &BootstrapOptions { execution: exec, ..options }).unwrap();
        serde_json::to_string(&r).unwrap()
    };
    let (a, b, c) = (json(Execution::Parallel), json(Execution::Parallel), json(Execution::Sequential));
    let identical = a == b && a == c;

    let set = paired_replicates(&cohort, &[m1.clone(), m2.clone()], &options).map_err(|e| e.to_string())?;
    let se = set.compare(0, 1, 0.05).map_err(|e| e.to_string())?.bootstrap_se;
    let mut deltas = Vec::new();
    for draw in 0..set.draws as u64 {
        let Ok(resample) = cohort_from_rows(&cohort, &resample_indices(cohort.len(), options.seed, draw)) else {
            continue;
        };
        let fa = fit_cox(&resample, &m1, &options.fit).ok().filter(|f| f.converged);
        let fb = fit_cox(&resample, &m2, &options.fit).ok().filter(|f| f.converged);
        if let (Some(fa), Some(fb)) = (fa, fb) {
            deltas.push(fa.beta[0] - fb.beta[0]);
        }
    }
    let err = if deltas.len() == 10 { (sd(&deltas) - se).abs() } else { f64::INFINITY };
    check(
        own.p_value == 1.0 && identical && err < 1e-12,
        format!(
            "self-comparison p = {}; repeated and sequential runs byte-identical: {identical}; re-aggregated se differs by {err:.1e} (< 1e-12) over {} replicates",
            own.p_value,
            deltas.len()
        ),
    )
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

fn total_row_sums(table: &str) -> Vec<usize> {
    let total = table.lines().find(|l| l.starts_with("Total\t")).unwrap_or_default();
    let cells: Vec<usize> = total.split('\t').skip(1).map(|c| c.parse().unwrap_or(0)).collect();
    cells.chunks(2).map(|c| c.iter().sum()).collect()
}

// 10
fn pipeline_scale() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = PipelineConfig {
        inputs: Inputs::Synthetic {
            cohorts: 54,
            params: GeneratorParams { n: 1000, ..GeneratorParams::default() },
            rho_range: Some((0.0963, 0.628)),
        },
        replicates: 1000,
        seed: 2024,
        ..PipelineConfig::default()
    };
    let start = Instant::now();
    let first = run_pipeline(&config, &tmp.path().join("a")).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let sequential = PipelineConfig { execution: Execution::Sequential, workers: 1, ..config.clone() };
    run_pipeline(&sequential, &tmp.path().join("b")).map_err(|e| e.to_string())?;
    let identical = dir_bytes(&tmp.path().join("a")) == dir_bytes(&tmp.path().join("b"));

    let table3 = fs::read_to_string(tmp.path().join("a/table3.tsv")).unwrap();
    let (t1, t2) = summaries_from_table3(&table3).map_err(|e| e.to_string())?;
    let recomputed = t1 == fs::read_to_string(tmp.path().join("a/table1.tsv")).unwrap()
        && t2 == fs::read_to_string(tmp.path().join("a/table2.tsv")).unwrap();
    let sums1 = total_row_sums(&t1);
    let sums2 = total_row_sums(&t2);
    let all54 = sums1 == [54, 54, 54] && sums2 == [54, 54, 54];
    check(
        secs < 600.0 && identical && recomputed && all54 && first.n_succeeded() == 54,
        format!(
            "54 cohorts x 3 models x 1000 replicates in {secs:.0} s (< 600 s); {}/54 succeeded; rerun byte-identical: {identical}; tables 1/2 recomputed from table 3: {recomputed}; totals per pair {sums1:?} / {sums2:?}",
            first.n_succeeded()
        ),
    )
}

fn main() {
    let mut failures = 0;
    let mut report = |id: u32, name: &str, outcome: Outcome| {
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failures += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} [{id:>2}] {name}: {detail}");
    };
    report(1, "score and information vs finite differences", derivatives());
    report(2, "fit vs golden-section oracle", golden_section());
    report(3, "equal entry ages make time scales equivalent", equal_entry_ages());
    report(4, "risk-set nesting", nesting());
    report(5, "Breslow at zero equals Nelson-Aalen", breslow_nelson_aalen());
    let (runs, secs) = recovery_runs();
    report(6, "parameter and baseline recovery", recovery(&runs, secs));
    report(7, "coefficient ordering across time scales", ordering(&runs));
    report(8, "no M1/M3 difference under independence", independence_equivalence());
    report(9, "bootstrap contract", bootstrap_contract());
    report(10, "pipeline determinism and scale", pipeline_scale());
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
