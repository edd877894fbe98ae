//! Convergence sweeps: for every dataset size and seed, generate a dataset
//! on a benchmark, learn the missingness table with each learner, plan on
//! the learned model and evaluate the plan on the true one.

use std::cmp::Ordering;
use std::path::{Path, PathBuf};

use missmdp_core::bench::{self, BenchSpec, Benchmark, Scale};
use missmdp_core::eval::{normalize_value, tv_summary, RolloutConfig, RolloutStats};
use missmdp_core::learn::{learn, Algorithm, LearnerSpec, DEFAULT_KAPPA};
use missmdp_core::model::MissingnessTable;
use missmdp_core::pac::certify;
use missmdp_core::plan::{solve_point_based, AlphaPolicy, SolveConfig};
use missmdp_core::rng::derive_seed;
use missmdp_core::simulate::{generate_dataset, BehaviorPolicy};
use rayon::prelude::*;

use crate::error::{Error, Result};

const DATA_TAG: u64 = 1;
const SOLVE_TAG: u64 = 2;
const EVAL_TAG: u64 = 3;

pub const DESK_SIZES: [usize; 8] = [10, 50, 100, 500, 1_000, 5_000, 10_000, 100_000];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub benchmark: String,
    pub scale: Scale,
    pub gamma: Option<f64>,
    pub sizes: Vec<usize>,
    pub learners: Vec<Algorithm>,
    pub seeds: usize,
    pub master_seed: u64,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    pub out_dir: PathBuf,
    /// Plan and roll out; when off only ATV / WTV are reported.
    pub evaluate: bool,
    pub kappa: f64,
    pub delta: f64,
    /// Solver precision relative to `ρ_max / (1 − γ)`.
    pub precision: f64,
    pub max_beliefs: usize,
    pub expansions: usize,
    pub max_sweeps: usize,
    pub episodes: usize,
    /// Per-feature missing probability of the prior baseline.
    pub prior_missing: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            benchmark: "icu-smar".into(),
            scale: Scale::Desk,
            gamma: None,
            sizes: DESK_SIZES.to_vec(),
            learners: vec![Algorithm::Amcar, Algorithm::Asmar, Algorithm::Aimi],
            seeds: 20,
            master_seed: 0,
            workers: 0,
            out_dir: PathBuf::from("results"),
            evaluate: true,
            kappa: DEFAULT_KAPPA,
            delta: 0.95,
            precision: 0.001,
            max_beliefs: 256,
            expansions: 8,
            max_sweeps: 2000,
            episodes: 2000,
            prior_missing: 0.5,
        }
    }
}

fn config_err(message: impl Into<String>) -> Error {
    Error::Config(message.into())
}

fn parse_value<T: std::str::FromStr>(section: &str, key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| config_err(format!("[{section}] {key}: cannot parse {value:?}")))
}

fn parse_list<T: std::str::FromStr>(section: &str, key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(str::trim).filter(|t| !t.is_empty()).map(|t| parse_value(section, key, t)).collect()
}

impl ExperimentConfig {
    /// Reads INI text with sections `[experiment]`, `[learning]`, `[solver]`
    /// and `[evaluation]`; missing keys keep their defaults.
    pub fn from_ini(text: &str) -> Result<Self> {
        let ini = ini::Ini::load_from_str(text).map_err(|e| config_err(e.to_string()))?;
        let mut c = Self::default();
        for (section, props) in ini.iter() {
            let section = section.unwrap_or("");
            for (key, value) in props.iter() {
                match (section, key) {
                    ("experiment", "benchmark") => c.benchmark = value.trim().to_string(),
                    ("experiment", "scale") => {
                        c.scale =
                            Scale::parse(value.trim()).ok_or_else(|| config_err(format!("unknown scale {value:?}")))?
                    }
                    ("experiment", "gamma") => c.gamma = Some(parse_value(section, key, value)?),
                    ("experiment", "sizes") => c.sizes = parse_list(section, key, value)?,
                    ("experiment", "learners") => {
                        c.learners = value
                            .split(',')
                            .map(str::trim)
                            .filter(|t| !t.is_empty())
                            .map(|t| Algorithm::parse(t).ok_or_else(|| config_err(format!("unknown learner {t:?}"))))
                            .collect::<Result<_>>()?
                    }
                    ("experiment", "seeds") => c.seeds = parse_value(section, key, value)?,
                    ("experiment", "master_seed") => c.master_seed = parse_value(section, key, value)?,
                    ("experiment", "workers") => c.workers = parse_value(section, key, value)?,
                    ("experiment", "out") => c.out_dir = PathBuf::from(value.trim()),
                    ("experiment", "evaluate") => c.evaluate = parse_value(section, key, value)?,
                    ("learning", "kappa") => c.kappa = parse_value(section, key, value)?,
                    ("learning", "delta") => c.delta = parse_value(section, key, value)?,
                    ("solver", "precision") => c.precision = parse_value(section, key, value)?,
                    ("solver", "max_beliefs") => c.max_beliefs = parse_value(section, key, value)?,
                    ("solver", "expansions") => c.expansions = parse_value(section, key, value)?,
                    ("solver", "max_sweeps") => c.max_sweeps = parse_value(section, key, value)?,
                    ("evaluation", "episodes") => c.episodes = parse_value(section, key, value)?,
                    ("evaluation", "prior_missing") => c.prior_missing = parse_value(section, key, value)?,
                    _ => return Err(config_err(format!("unknown key `{key}` in section [{section}]"))),
                }
            }
        }
        c.check()?;
        Ok(c)
    }

    pub fn check(&self) -> Result<()> {
        if self.sizes.is_empty() || self.sizes[0] == 0 || self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(config_err("sizes must be positive and strictly increasing"));
        }
        if self.seeds == 0 {
            return Err(config_err("at least one seed is required"));
        }
        if self.learners.is_empty() {
            return Err(config_err("at least one learner is required"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(config_err("delta must lie in (0, 1)"));
        }
        if self.evaluate && (self.episodes == 0 || !(self.precision > 0.0)) {
            return Err(config_err("evaluation needs episodes >= 1 and a positive precision"));
        }
        BenchSpec::preset(&self.benchmark, self.scale)?;
        Ok(())
    }

    pub fn bench_spec(&self) -> Result<BenchSpec> {
        let mut spec = BenchSpec::preset(&self.benchmark, self.scale)?;
        spec.gamma = self.gamma.or(spec.gamma);
        Ok(spec)
    }
}

/// One line of the metrics report. Baseline rows carry no seed or size.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub seed: Option<usize>,
    pub dataset_size: Option<usize>,
    pub learner: String,
    pub atv: Option<f64>,
    pub wtv: Option<f64>,
    pub value_mean: Option<f64>,
    pub value_ci95: Option<f64>,
    pub value_normalized: Option<f64>,
    /// Certificate of the learned table.
    pub global_epsilon: Option<f64>,
    pub flagged_keys: Option<usize>,
    pub unvisited_states: Option<usize>,
    pub error: Option<String>,
}

impl ReportRow {
    fn new(seed: Option<usize>, dataset_size: Option<usize>, learner: &str) -> Self {
        Self {
            seed,
            dataset_size,
            learner: learner.to_string(),
            atv: None,
            wtv: None,
            value_mean: None,
            value_ci95: None,
            value_normalized: None,
            global_epsilon: None,
            flagged_keys: None,
            unvisited_states: None,
            error: None,
        }
    }

    fn order_key(&self) -> (bool, usize, usize, &str) {
        (self.dataset_size.is_some(), self.dataset_size.unwrap_or(0), self.seed.unwrap_or(0), &self.learner)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
}

impl ExperimentReport {
    /// Rows of one learner grouped by dataset size, in size order.
    pub fn by_size(&self, learner: &str) -> Vec<(usize, Vec<&ReportRow>)> {
        let mut out: Vec<(usize, Vec<&ReportRow>)> = Vec::new();
        for row in self.rows.iter().filter(|r| r.learner == learner) {
            let Some(size) = row.dataset_size else { continue };
            match out.iter_mut().find(|(s, _)| *s == size) {
                Some((_, rows)) => rows.push(row),
                None => out.push((size, vec![row])),
            }
        }
        out.sort_by_key(|(s, _)| *s);
        out
    }

    /// Median of a metric per dataset size; rows without the metric are skipped.
    pub fn medians(&self, learner: &str, metric: impl Fn(&ReportRow) -> Option<f64>) -> Vec<(usize, f64)> {
        self.by_size(learner)
            .into_iter()
            .filter_map(|(size, rows)| {
                let values: Vec<f64> = rows.iter().filter_map(|r| metric(r)).collect();
                median(&values).map(|m| (size, m))
            })
            .collect()
    }

    pub fn baseline(&self, learner: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.dataset_size.is_none() && r.learner == learner)
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

struct Context<'a> {
    config: &'a ExperimentConfig,
    bench: &'a Benchmark,
    solve: SolveConfig,
    eval_seed: u64,
    anchors: Option<(f64, f64)>,
}

fn solve(ctx: &Context, table: &MissingnessTable) -> Result<AlphaPolicy> {
    Ok(solve_point_based(&ctx.bench.model, table, &ctx.solve)?)
}

fn evaluate(ctx: &Context, policy: &AlphaPolicy, tracker: &MissingnessTable) -> Result<RolloutStats> {
    let rc = RolloutConfig::new(ctx.config.episodes, ctx.eval_seed);
    Ok(missmdp_core::eval::rollout_value(&ctx.bench.model, &ctx.bench.table, tracker, policy, &rc)?)
}

fn fill_value(row: &mut ReportRow, stats: RolloutStats, anchors: Option<(f64, f64)>) {
    row.value_mean = Some(stats.mean);
    row.value_ci95 = Some(stats.ci95);
    if let Some((prior, optimal)) = anchors {
        row.value_normalized = normalize_value(stats.mean, prior, optimal).ok();
    }
}

/// All learners on one (size, seed) dataset.
fn run_unit(ctx: &Context, size: usize, seed_index: usize) -> Vec<ReportRow> {
    let config = ctx.config;
    let model = &ctx.bench.model;
    // The seed ignores the size, so each seed's datasets are nested prefixes of
    // one trajectory stream.
    let data_seed = derive_seed(config.master_seed, &[DATA_TAG, seed_index as u64]);
    let data = generate_dataset(model, &ctx.bench.table, BehaviorPolicy::UniformRandom, size, data_seed);
    let counts = data.map(|d| d.counts());
    config
        .learners
        .iter()
        .map(|&algo| {
            let mut row = ReportRow::new(Some(seed_index), Some(size), algo.name());
            let outcome = (|| -> Result<()> {
                let counts = counts.as_ref().map_err(|e| Error::Core(e.clone()))?;
                let learned = learn(model, counts, &LearnerSpec::new(algo).with_kappa(config.kappa))?;
                let tv = tv_summary(model, &learned.table, &ctx.bench.table);
                row.atv = Some(tv.atv);
                row.wtv = Some(tv.wtv);
                let cert = certify(&learned.counts, config.delta)?;
                row.global_epsilon = Some(cert.global_epsilon);
                row.flagged_keys = Some(cert.flagged().count());
                row.unvisited_states = Some(learned.unvisited.len());
                if config.evaluate {
                    let policy = solve(ctx, &learned.table)?;
                    fill_value(&mut row, evaluate(ctx, &policy, &learned.table)?, ctx.anchors);
                }
                Ok(())
            })();
            if let Err(e) = outcome {
                row.error = Some(e.to_string());
            }
            row
        })
        .collect()
}

/// Runs the sweep. Rows come back sorted: baselines first, then by size,
/// seed and learner.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.check()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| config_err(format!("cannot start worker pool: {e}")))?;
    pool.install(|| run_in_pool(config))
}

fn run_in_pool(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let bench = bench::build(&config.bench_spec()?)?;
    let model = &bench.model;
    let eps = config.precision * model.reward_bound().max(f64::MIN_POSITIVE) / (1.0 - model.gamma());
    // Every cell and baseline shares one solver seed and one evaluation seed,
    // so differences between rows come from the learned tables.
    let solve_config = SolveConfig {
        max_beliefs: config.max_beliefs,
        expansions: config.expansions,
        max_sweeps: config.max_sweeps,
        seed: derive_seed(config.master_seed, &[SOLVE_TAG]),
        ..SolveConfig::new(eps)
    };
    let mut ctx = Context {
        config,
        bench: &bench,
        solve: solve_config,
        eval_seed: derive_seed(config.master_seed, &[EVAL_TAG]),
        anchors: None,
    };

    let prior_table = bench::prior_missingness(model.features(), config.prior_missing)?;
    let mut rows = Vec::new();
    if config.evaluate {
        let baselines: Vec<(&str, &MissingnessTable)> = vec![("optimal", &bench.table), ("prior", &prior_table)];
        let results: Vec<Result<RolloutStats>> = baselines
            .par_iter()
            .map(|&(_, table)| {
                let policy = solve(&ctx, table)?;
                evaluate(&ctx, &policy, table)
            })
            .collect();
        let optimal = results[0].as_ref().map_err(|e| config_err(format!("optimal baseline failed: {e}")))?;
        let prior = results[1].as_ref().map_err(|e| config_err(format!("prior baseline failed: {e}")))?;
        ctx.anchors = Some((prior.mean, optimal.mean));
        for ((name, table), stats) in baselines.into_iter().zip([*optimal, *prior]) {
            let mut row = ReportRow::new(None, None, name);
            let tv = tv_summary(model, table, &bench.table);
            row.atv = Some(tv.atv);
            row.wtv = Some(tv.wtv);
            fill_value(&mut row, stats, ctx.anchors);
            rows.push(row);
        }
    }

    let units: Vec<(usize, usize)> =
        config.sizes.iter().flat_map(|&size| (0..config.seeds).map(move |seed| (size, seed))).collect();
    let cells: Vec<Vec<ReportRow>> = units.par_iter().map(|&(size, seed)| run_unit(&ctx, size, seed)).collect();
    rows.extend(cells.into_iter().flatten());
    rows.sort_by(|a, b| a.order_key().cmp(&b.order_key()));
    Ok(ExperimentReport { rows })
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const REPORT_HEADER: [&str; 8] =
    ["seed", "dataset_size", "learner", "atv", "wtv", "value_mean", "value_ci95", "value_normalized"];

/// Metrics report as CSV text, with a trailing `error` column.
pub fn render_report(report: &ExperimentReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = REPORT_HEADER.to_vec();
    header.push("error");
    w.write_record(&header)?;
    for r in &report.rows {
        w.write_record([
            opt(r.seed),
            opt(r.dataset_size),
            r.learner.clone(),
            opt(r.atv),
            opt(r.wtv),
            opt(r.value_mean),
            opt(r.value_ci95),
            opt(r.value_normalized),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    finish(w)
}

/// Certificate summary per learned table.
pub fn render_certificates(report: &ExperimentReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["seed", "dataset_size", "learner", "global_epsilon", "flagged_keys", "unvisited_states"])?;
    for r in report.rows.iter().filter(|r| r.dataset_size.is_some()) {
        w.write_record([
            opt(r.seed),
            opt(r.dataset_size),
            r.learner.clone(),
            opt(r.global_epsilon),
            opt(r.flagged_keys),
            opt(r.unvisited_states),
        ])?;
    }
    finish(w)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Parses a report written by [`render_report`].
pub fn parse_report(text: &str) -> Result<ExperimentReport> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.iter().take(REPORT_HEADER.len()).ne(REPORT_HEADER.iter().copied()) {
        return Err(config_err("unexpected report header"));
    }
    fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize) -> Result<Option<T>> {
        match rec.get(i).unwrap_or("") {
            "" => Ok(None),
            s => s.parse().map(Some).map_err(|_| config_err(format!("bad report field {s:?}"))),
        }
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let mut row = ReportRow::new(field(&rec, 0)?, field(&rec, 1)?, rec.get(2).unwrap_or(""));
        row.atv = field(&rec, 3)?;
        row.wtv = field(&rec, 4)?;
        row.value_mean = field(&rec, 5)?;
        row.value_ci95 = field(&rec, 6)?;
        row.value_normalized = field(&rec, 7)?;
        row.error = field(&rec, 8)?;
        rows.push(row);
    }
    Ok(ExperimentReport { rows })
}

/// Writes `report.csv` and `certificates.csv` into `dir`.
pub fn write_report(report: &ExperimentReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, text) in [("report.csv", render_report(report)?), ("certificates.csv", render_certificates(report)?)] {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_from_ini() {
        let text = "[experiment]\nbenchmark = pred-mcar\nsizes = 10, 100\nlearners = amcar, asmar\nseeds = 3\n\
                    evaluate = false\n[learning]\nkappa = 0.5\n";
        let c = ExperimentConfig::from_ini(text).unwrap();
        assert_eq!(c.benchmark, "pred-mcar");
        assert_eq!(c.sizes, vec![10, 100]);
        assert_eq!(c.learners, vec![Algorithm::Amcar, Algorithm::Asmar]);
        assert_eq!(c.seeds, 3);
        assert!(!c.evaluate);
        assert_eq!(c.kappa, 0.5);
        assert_eq!(c.episodes, 2000);
    }

    #[test]
    fn config_rejects_bad_input() {
        assert!(ExperimentConfig::from_ini("[experiment]\nsizes = 100, 10\n").is_err());
        assert!(ExperimentConfig::from_ini("[experiment]\nseeds = 0\n").is_err());
        assert!(ExperimentConfig::from_ini("[experiment]\ncolour = blue\n").is_err());
        assert!(ExperimentConfig::from_ini("[experiment]\nbenchmark = chess\n").is_err());
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}
