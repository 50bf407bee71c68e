//! Batch comparison of the three models over many cohorts.
//!
//! Each cohort is fitted under the requested models, the requested pairs are
//! compared with one shared paired bootstrap, and the baseline hazard of one
//! model is checked for log-linearity. Results land in a set of TSV files:
//!
//! - `table3.tsv`: one row per cohort (coefficients, SEs, pairwise p-values,
//!   correlation, exponentiality)
//! - `table1.tsv`, `table2.tsv`: significance counts by correlation bin and by
//!   exponentiality, recomputable from `table3.tsv` alone
//! - `comparisons.tsv`, `models.tsv`, `hazard_summary.tsv`, `status.tsv`
//! - `hazard_<cohort>.tsv` and `config.json`
//!
//! Every file starts with a `#` line naming the crate version, the config
//! hash and the seed.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::baseline::{
    breslow_from_design, exponentiality_diagnostic, CumulativeHazard, ExponentialityReport,
    DEFAULT_EXPONENTIALITY_THRESHOLD,
};
use crate::bootstrap::{paired_replicates, BootstrapOptions, ComparisonResult};
use crate::cohort::{pearson_correlation, Cohort};
use crate::cox::{fit_design, Design, FitError, FitOptions, Model, Ties};
use crate::csv_io::read_cohort_file;
use crate::exec::{with_workers, Execution};
use crate::synth::{generate_cohort, GeneratorParams};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Where cohorts come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Inputs {
    /// CSV files, or directories whose `*.csv` files are all read.
    Paths(Vec<PathBuf>),
    /// `cohorts` generated cohorts named `cohort_01`, `cohort_02`, ... With
    /// `rho_range = (lo, hi)` the entry-age/risk-factor correlation steps
    /// evenly from `lo` to `hi` across cohorts; otherwise every cohort uses
    /// `params.rho`.
    Synthetic { cohorts: usize, params: GeneratorParams, rho_range: Option<(f64, f64)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub inputs: Inputs,
    pub models: Vec<Model>,
    pub comparisons: Vec<(Model, Model)>,
    pub replicates: usize,
    pub seed: u64,
    pub ties: Ties,
    pub alpha: f64,
    pub expo_threshold: f64,
    /// Model whose baseline hazard is estimated and checked.
    pub hazard_model: Model,
    /// Worker threads; 0 uses every core. Does not affect results.
    #[serde(skip)]
    pub workers: usize,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            inputs: Inputs::Paths(Vec::new()),
            models: Model::ALL.to_vec(),
            comparisons: vec![(Model::M1, Model::M2), (Model::M1, Model::M3), (Model::M2, Model::M3)],
            replicates: 1000,
            seed: 0,
            ties: Ties::Breslow,
            alpha: 0.05,
            expo_threshold: DEFAULT_EXPONENTIALITY_THRESHOLD,
            hazard_model: Model::M3,
            workers: 0,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no cohorts to process: {0}")]
    NoInputs(String),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl PipelineError {
    /// Process exit code for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::InvalidConfig(_) => 1,
            PipelineError::NoInputs(_) | PipelineError::Io { .. } => 2,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_owned(), source }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::InvalidConfig(m));
        if self.models.is_empty() {
            return bad("no models requested".into());
        }
        if self.models.iter().collect::<BTreeSet<_>>().len() != self.models.len() {
            return bad("duplicate model in models".into());
        }
        for &(a, b) in &self.comparisons {
            if a == b {
                return bad(format!("comparison {a} vs {b} compares a model with itself"));
            }
            if !self.models.contains(&a) || !self.models.contains(&b) {
                return bad(format!("comparison {a} vs {b} uses a model that is not requested"));
            }
        }
        if !self.models.contains(&self.hazard_model) {
            return bad(format!("hazard model {} is not among the requested models", self.hazard_model));
        }
        if self.replicates < 2 {
            return bad(format!("replicates must be at least 2, got {}", self.replicates));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.expo_threshold > 0.0 && self.expo_threshold <= 1.0) {
            return bad(format!("exponentiality threshold must lie in (0, 1], got {}", self.expo_threshold));
        }
        if let Inputs::Synthetic { cohorts, params, rho_range } = &self.inputs {
            if *cohorts == 0 {
                return bad("synthetic input needs at least one cohort".into());
            }
            params.validate().map_err(|e| PipelineError::InvalidConfig(e.to_string()))?;
            if let Some((lo, hi)) = rho_range {
                if !(*lo > -1.0 && *hi < 1.0 && lo <= hi) {
                    return bad(format!("rho range ({lo}, {hi}) must satisfy -1 < lo <= hi < 1"));
                }
            }
        }
        Ok(())
    }

    /// Canonical JSON of the settings that influence results.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn sha256(&self) -> String {
        hex(&Sha256::digest(self.to_json().as_bytes()))
    }

    fn provenance(&self) -> String {
        format!(
            "# tscox={} config_sha256={} seed={} alpha={} ties={} replicates={} hazard_model={} expo_threshold={}",
            VERSION,
            self.sha256(),
            self.seed,
            self.alpha,
            self.ties,
            self.replicates,
            self.hazard_model,
            self.expo_threshold
        )
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(2 * bytes.len()), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Seed for one cohort, from the run seed and the cohort name, so results do
/// not depend on cohort order or scheduling.
pub fn cohort_seed(seed: u64, name: &str, purpose: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(purpose.as_bytes());
    h.update([0]);
    h.update(name.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// Seed used to generate synthetic cohort `name`.
pub fn generation_seed(seed: u64, name: &str) -> u64 {
    cohort_seed(seed, name, "generate")
}

#[derive(Debug, Clone, PartialEq)]
enum Source {
    File(PathBuf),
    Synthetic(GeneratorParams),
}

#[derive(Debug, Clone, PartialEq)]
struct Job {
    name: String,
    source: Source,
}

fn collect_jobs(inputs: &Inputs) -> Result<Vec<Job>, PipelineError> {
    match inputs {
        Inputs::Paths(paths) => {
            let mut files = Vec::new();
            for p in paths {
                if p.is_dir() {
                    let mut found: Vec<PathBuf> = fs::read_dir(p)
                        .map_err(io_err(p))?
                        .filter_map(|e| e.ok().map(|e| e.path()))
                        .filter(|f| f.is_file() && f.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")))
                        .collect();
                    found.sort();
                    files.extend(found);
                } else {
                    files.push(p.clone());
                }
            }
            if files.is_empty() {
                let shown: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
                return Err(PipelineError::NoInputs(format!("no CSV files found in {}", shown.join(", "))));
            }
            let mut names = BTreeSet::new();
            let mut jobs = Vec::with_capacity(files.len());
            for f in files {
                let name = f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                if !names.insert(name.clone()) {
                    return Err(PipelineError::InvalidConfig(format!("two input files are named '{name}'")));
                }
                jobs.push(Job { name, source: Source::File(f) });
            }
            Ok(jobs)
        }
        Inputs::Synthetic { cohorts, params, rho_range } => Ok(synthetic_cohorts(*cohorts, params, *rho_range)
            .into_iter()
            .map(|(name, p)| Job { name, source: Source::Synthetic(p) })
            .collect()),
    }
}

/// Names and generator parameters of the cohorts described by
/// [`Inputs::Synthetic`]. Generating cohort `name` with seed
/// `cohort_seed(seed, name, "generate")` reproduces the pipeline's cohort.
pub fn synthetic_cohorts(
    cohorts: usize,
    params: &GeneratorParams,
    rho_range: Option<(f64, f64)>,
) -> Vec<(String, GeneratorParams)> {
    let width = cohorts.to_string().len().max(2);
    (0..cohorts)
        .map(|k| {
            let mut p = *params;
            if let Some((lo, hi)) = rho_range {
                let t = if cohorts > 1 { k as f64 / (cohorts - 1) as f64 } else { 0.0 };
                p.rho = lo + t * (hi - lo);
            }
            (format!("cohort_{:0width$}", k + 1), p)
        })
        .collect()
}

/// One model's risk-factor estimate in one cohort.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSummary {
    pub model: Model,
    pub beta: f64,
    pub se: f64,
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairSummary {
    pub a: Model,
    pub b: Model,
    pub result: ComparisonResult,
}

/// Everything computed for one cohort. `errors` is empty when every
/// requested quantity was obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortReport {
    pub cohort: String,
    pub n_subjects: usize,
    pub n_events: usize,
    pub models: Vec<ModelSummary>,
    pub comparisons: Vec<PairSummary>,
    /// Pearson correlation of entry age with the risk factor.
    pub correlation: Option<f64>,
    pub exponentiality: Option<ExponentialityReport>,
    pub hazard: Option<(CumulativeHazard, Vec<f64>)>,
    pub errors: Vec<String>,
}

impl CohortReport {
    pub fn succeeded(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn model(&self, m: Model) -> Option<&ModelSummary> {
        self.models.iter().find(|s| s.model == m)
    }

    /// Comparison of `a` with `b`, whichever order it was requested in.
    pub fn pair(&self, a: Model, b: Model) -> Option<&ComparisonResult> {
        self.comparisons.iter().find(|p| (p.a, p.b) == (a, b) || (p.a, p.b) == (b, a)).map(|p| &p.result)
    }

    fn failed(cohort: String, error: String) -> Self {
        CohortReport {
            cohort,
            n_subjects: 0,
            n_events: 0,
            models: Vec::new(),
            comparisons: Vec::new(),
            correlation: None,
            exponentiality: None,
            hazard: None,
            errors: vec![error],
        }
    }
}

fn load(job: &Job, config: &PipelineConfig) -> Result<Cohort, String> {
    match &job.source {
        Source::File(path) => read_cohort_file(path).map_err(|e| format!("{}: {e}", path.display())),
        Source::Synthetic(params) => {
            generate_cohort(params, generation_seed(config.seed, &job.name), &job.name).map_err(|e| e.to_string())
        }
    }
}

fn process(job: &Job, config: &PipelineConfig) -> CohortReport {
    let cohort = match load(job, config) {
        Ok(c) => c,
        Err(e) => return CohortReport::failed(job.name.clone(), e),
    };
    let mut report = CohortReport::failed(job.name.clone(), String::new());
    report.errors.clear();
    report.n_subjects = cohort.len();
    report.n_events = cohort.n_events();
    if cohort.n_covariates() == 0 {
        report.errors.push("cohort has no covariate columns".into());
        return report;
    }

    // Risk factor first, remaining columns as adjustment covariates.
    let covariates: Vec<usize> = (0..cohort.n_covariates()).collect();
    let fit_options = FitOptions::default().with_ties(config.ties);
    let mut fitted = Vec::new();
    for &m in &config.models {
        let spec = m.spec(covariates.clone());
        let outcome = Design::new(&cohort, &spec)
            .map_err(FitError::from)
            .and_then(|d| fit_design(&d, &spec, &spec.term_names(&cohort), &fit_options).map(|f| (d, f)))
            .and_then(|(d, f)| f.require_converged().map(|f| (d, f)));
        match outcome {
            Ok((design, fit)) => {
                report.models.push(ModelSummary {
                    model: m,
                    beta: fit.risk_factor_beta(),
                    se: fit.risk_factor_se(),
                    log_likelihood: fit.log_likelihood,
                    converged: fit.converged,
                    iterations: fit.iterations,
                });
                if m == config.hazard_model {
                    let curve = breslow_from_design(&design, spec.scale, &fit.beta);
                    match exponentiality_diagnostic(&curve, config.expo_threshold) {
                        Ok(r) => report.exponentiality = Some(r),
                        Err(e) => report.errors.push(format!("exponentiality under {m}: {e}")),
                    }
                    report.hazard = Some((curve, fit.beta.clone()));
                }
                fitted.push(m);
            }
            Err(e) => report.errors.push(format!("fit {m}: {e}")),
        }
    }

    // One shared set of resamples for every model that takes part in a comparison.
    let wanted: Vec<Model> =
        fitted.iter().copied().filter(|m| config.comparisons.iter().any(|&(a, b)| a == *m || b == *m)).collect();
    let usable: Vec<(Model, Model)> =
        config.comparisons.iter().copied().filter(|(a, b)| wanted.contains(a) && wanted.contains(b)).collect();
    if usable.len() < config.comparisons.len() {
        report.errors.push("some comparisons skipped because a model failed to fit".into());
    }
    if !usable.is_empty() {
        let specs: Vec<_> = wanted.iter().map(|m| m.spec(covariates.clone())).collect();
        let options = BootstrapOptions {
            replicates: config.replicates,
            seed: cohort_seed(config.seed, &job.name, "bootstrap"),
            alpha: config.alpha,
            fit: fit_options,
            execution: config.execution,
        };
        match paired_replicates(&cohort, &specs, &options) {
            Ok(set) => {
                let pos = |m: Model| wanted.iter().position(|&w| w == m).expect("model in wanted");
                for (a, b) in usable {
                    match set.compare(pos(a), pos(b), config.alpha) {
                        Ok(result) => report.comparisons.push(PairSummary { a, b, result }),
                        Err(e) => report.errors.push(format!("compare {a} vs {b}: {e}")),
                    }
                }
            }
            Err(e) => report.errors.push(format!("bootstrap: {e}")),
        }
    }

    match pearson_correlation(&cohort.entry_ages(), &cohort.covariate_column(0)) {
        Ok(r) => report.correlation = Some(r),
        Err(e) => report.errors.push(format!("correlation: {e}")),
    }
    report
}

/// Processes every cohort; per-cohort failures are recorded, not raised.
pub fn run_cohorts(config: &PipelineConfig) -> Result<Vec<CohortReport>, PipelineError> {
    config.validate()?;
    let jobs = collect_jobs(&config.inputs)?;
    Ok(with_workers(config.workers, || config.execution.map_slice(&jobs, |job| process(job, config))))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutcome {
    pub reports: Vec<CohortReport>,
    pub table1: String,
    pub table2: String,
    pub table3: String,
}

impl PipelineOutcome {
    pub fn n_succeeded(&self) -> usize {
        self.reports.iter().filter(|r| r.succeeded()).count()
    }

    /// 0 when at least one cohort succeeded, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.n_succeeded() > 0 {
            0
        } else {
            2
        }
    }
}

/// Runs the batch and writes every report file into `out_dir`.
pub fn run_pipeline(config: &PipelineConfig, out_dir: &Path) -> Result<PipelineOutcome, PipelineError> {
    let reports = run_cohorts(config)?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let head = config.provenance();
    let write = |file: &str, body: &str| -> Result<(), PipelineError> {
        let path = out_dir.join(file);
        fs::write(&path, body).map_err(io_err(&path))
    };

    let table3 = render_table3(&head, &reports);
    let rows = reports.iter().map(Table3Row::from_report).collect::<Vec<_>>();
    let (table1, table2) = render_summaries(&head, &rows, config.alpha);
    write("table3.tsv", &table3)?;
    write("table1.tsv", &table1)?;
    write("table2.tsv", &table2)?;
    write("comparisons.tsv", &render_comparisons(&head, &reports))?;
    write("models.tsv", &render_models(&head, &reports))?;
    write("hazard_summary.tsv", &render_hazard_summary(&head, config.hazard_model, &reports))?;
    write("status.tsv", &render_status(&head, &reports))?;
    write("config.json", &(config.to_json() + "\n"))?;
    for r in &reports {
        if let Some((curve, beta)) = &r.hazard {
            let mut buf = Vec::new();
            curve.write_tsv(&mut buf, &r.cohort, beta).expect("write to memory");
            write(&format!("hazard_{}.tsv", r.cohort), &String::from_utf8(buf).expect("utf8"))?;
        }
    }
    Ok(PipelineOutcome { reports, table1, table2, table3 })
}

fn num(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_owned(), |x| x.to_string())
}

fn yes_no(v: Option<bool>) -> &'static str {
    match v {
        Some(true) => "Yes",
        Some(false) => "No",
        None => "NA",
    }
}

pub const TABLE3_COLUMNS: [&str; 12] =
    ["cohort", "beta1", "se1", "beta2", "se2", "beta3", "se3", "p12", "p13", "p23", "corr", "exponential"];

const PAIRS: [(Model, Model); 3] = [(Model::M1, Model::M2), (Model::M1, Model::M3), (Model::M2, Model::M3)];

fn render_table3(head: &str, reports: &[CohortReport]) -> String {
    let mut s = format!("{head}\n{}\n", TABLE3_COLUMNS.join("\t"));
    for r in reports {
        let mut cells = vec![r.cohort.clone()];
        for m in Model::ALL {
            let fit = r.model(m);
            cells.push(num(fit.map(|f| f.beta)));
            cells.push(num(fit.map(|f| f.se)));
        }
        for (a, b) in PAIRS {
            cells.push(num(r.pair(a, b).map(|c| c.p_value)));
        }
        cells.push(num(r.correlation));
        cells.push(yes_no(r.exponentiality.as_ref().map(|e| e.is_exponential)).to_owned());
        s += &cells.join("\t");
        s.push('\n');
    }
    s
}

fn render_comparisons(head: &str, reports: &[CohortReport]) -> String {
    let mut s = format!(
        "{head}\ncohort\tmodel_a\tmodel_b\tbeta_a\tbeta_b\tdifference\tbootstrap_se\tz\tp_value\tsignificant\treplicates_requested\treplicates_used\n"
    );
    for r in reports {
        for p in &r.comparisons {
            let c = &p.result;
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.cohort,
                p.a,
                p.b,
                c.beta_a,
                c.beta_b,
                c.difference,
                c.bootstrap_se,
                c.z_statistic,
                c.p_value,
                c.significant,
                c.replicates_requested,
                c.replicates_used
            );
        }
    }
    s
}

fn render_models(head: &str, reports: &[CohortReport]) -> String {
    let mut s = format!("{head}\ncohort\tmodel\tbeta\tse\tlog_likelihood\tconverged\titerations\n");
    for r in reports {
        for m in &r.models {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.cohort, m.model, m.beta, m.se, m.log_likelihood, m.converged, m.iterations
            );
        }
    }
    s
}

fn render_hazard_summary(head: &str, model: Model, reports: &[CohortReport]) -> String {
    let mut s = format!("{head}\ncohort\tmodel\tslope\tintercept\tr_squared\tthreshold\texponential\tn_points\n");
    for r in reports {
        if let Some(e) = &r.exponentiality {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.cohort,
                model,
                e.slope,
                e.intercept,
                e.r_squared,
                e.threshold,
                yes_no(Some(e.is_exponential)),
                e.n_points
            );
        }
    }
    s
}

fn render_status(head: &str, reports: &[CohortReport]) -> String {
    let mut s = format!("{head}\ncohort\tstatus\tn_subjects\tn_events\tmessage\n");
    for r in reports {
        let status = if r.succeeded() { "ok" } else { "failed" };
        let msg = r.errors.join("; ").replace(['\t', '\n'], " ");
        let _ = writeln!(s, "{}\t{}\t{}\t{}\t{}", r.cohort, status, r.n_subjects, r.n_events, msg);
    }
    s
}

/// The part of a `table3.tsv` row the summaries are built from.
#[derive(Debug, Clone, PartialEq)]
pub struct Table3Row {
    pub cohort: String,
    /// p-values for M1/M2, M1/M3, M2/M3.
    pub p: [Option<f64>; 3],
    pub corr: Option<f64>,
    pub exponential: Option<bool>,
}

impl Table3Row {
    fn from_report(r: &CohortReport) -> Self {
        Table3Row {
            cohort: r.cohort.clone(),
            p: PAIRS.map(|(a, b)| r.pair(a, b).map(|c| c.p_value)),
            corr: r.correlation,
            exponential: r.exponentiality.as_ref().map(|e| e.is_exponential),
        }
    }
}

/// Correlation bins, closed on the left; negative correlations get their own row.
pub const CORRELATION_BINS: [(&str, f64, f64); 7] = [
    ("0.5+", 0.5, f64::INFINITY),
    ("0.4-0.5", 0.4, 0.5),
    ("0.3-0.4", 0.3, 0.4),
    ("0.2-0.3", 0.2, 0.3),
    ("0.1-0.2", 0.1, 0.2),
    ("0.0-0.1", 0.0, 0.1),
    ("<0.0", f64::NEG_INFINITY, 0.0),
];

const SUMMARY_COLUMNS: &str =
    "m1_vs_m2_sig\tm1_vs_m2_nonsig\tm1_vs_m3_sig\tm1_vs_m3_nonsig\tm2_vs_m3_sig\tm2_vs_m3_nonsig";

type Counts = [[usize; 2]; 3];

fn tally<'a>(rows: impl Iterator<Item = &'a Table3Row>, alpha: f64) -> Counts {
    let mut c = [[0; 2]; 3];
    for r in rows {
        for (k, p) in r.p.iter().enumerate() {
            if let Some(p) = p {
                c[k][if *p < alpha { 0 } else { 1 }] += 1;
            }
        }
    }
    c
}

fn counts_line(label: &str, c: &Counts) -> String {
    let cells: Vec<String> = c.iter().flatten().map(usize::to_string).collect();
    format!("{label}\t{}\n", cells.join("\t"))
}

/// Table-1 (by correlation bin) and Table-2 (by exponentiality) summaries.
/// Rows with a missing grouping value or p-value are left out of the counts.
pub fn render_summaries(head: &str, rows: &[Table3Row], alpha: f64) -> (String, String) {
    let mut t1 = format!("{head}\ncorrelation\t{SUMMARY_COLUMNS}\n");
    let mut binned: Vec<&Table3Row> = Vec::new();
    for (label, lo, hi) in CORRELATION_BINS {
        let in_bin: Vec<&Table3Row> = rows.iter().filter(|r| r.corr.is_some_and(|c| c >= lo && c < hi)).collect();
        t1 += &counts_line(label, &tally(in_bin.iter().copied(), alpha));
        binned.extend(in_bin);
    }
    t1 += &counts_line("Total", &tally(binned.into_iter(), alpha));

    let mut t2 = format!("{head}\nexponential\t{SUMMARY_COLUMNS}\n");
    for (label, flag) in [("Yes", true), ("No", false)] {
        t2 += &counts_line(label, &tally(rows.iter().filter(|r| r.exponential == Some(flag)), alpha));
    }
    t2 += &counts_line("Total", &tally(rows.iter().filter(|r| r.exponential.is_some()), alpha));
    (t1, t2)
}

#[derive(Debug, Error)]
pub enum Table3Error {
    #[error("missing provenance line")]
    MissingHeader,
    #[error("provenance line has no alpha")]
    MissingAlpha,
    #[error("unexpected columns: {0}")]
    BadColumns(String),
    #[error("line {line}: {message}")]
    BadRow { line: usize, message: String },
}

fn parse_opt<T: std::str::FromStr>(cell: &str, line: usize) -> Result<Option<T>, Table3Error> {
    if cell == "NA" {
        return Ok(None);
    }
    cell.parse().map(Some).map_err(|_| Table3Error::BadRow { line, message: format!("cannot parse '{cell}'") })
}

/// Rebuilds `table1.tsv` and `table2.tsv` from the text of a `table3.tsv`.
pub fn summaries_from_table3(text: &str) -> Result<(String, String), Table3Error> {
    let mut lines = text.lines();
    let head = lines.next().filter(|l| l.starts_with('#')).ok_or(Table3Error::MissingHeader)?;
    let alpha: f64 = head
        .split_whitespace()
        .find_map(|t| t.strip_prefix("alpha="))
        .and_then(|a| a.parse().ok())
        .ok_or(Table3Error::MissingAlpha)?;
    let columns = lines.next().unwrap_or_default();
    if columns != TABLE3_COLUMNS.join("\t") {
        return Err(Table3Error::BadColumns(columns.to_owned()));
    }
    let mut rows = Vec::new();
    for (i, l) in lines.enumerate() {
        let line = i + 3;
        let cells: Vec<&str> = l.split('\t').collect();
        if cells.len() != TABLE3_COLUMNS.len() {
            return Err(Table3Error::BadRow { line, message: format!("expected 12 cells, found {}", cells.len()) });
        }
        let exponential = match cells[11] {
            "Yes" => Some(true),
            "No" => Some(false),
            "NA" => None,
            other => return Err(Table3Error::BadRow { line, message: format!("bad exponential flag '{other}'") }),
        };
        rows.push(Table3Row {
            cohort: cells[0].to_owned(),
            p: [parse_opt(cells[7], line)?, parse_opt(cells[8], line)?, parse_opt(cells[9], line)?],
            corr: parse_opt(cells[10], line)?,
            exponential,
        });
    }
    Ok(render_summaries(head, &rows, alpha))
}
