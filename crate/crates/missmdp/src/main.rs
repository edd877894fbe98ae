use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use missmdp::experiment::{run_experiment, write_report, ExperimentConfig};
use missmdp::formats::{self, ModelFile};
use missmdp::parallel;
use missmdp_core::bench::{self, BenchSpec, Scale};
use missmdp_core::eval::RolloutConfig;
use missmdp_core::learn::{learn, AimiKnowledge, Algorithm, LearnerSpec, DEFAULT_KAPPA};
use missmdp_core::mgraph::{consistent_with, parse_mgraph, MGraph};
use missmdp_core::model::{classify_missingness, MissingnessTable};
use missmdp_core::pac::certify;
use missmdp_core::plan::{solve_point_based, SolveConfig};
use missmdp_core::simulate::BehaviorPolicy;

/// Learn, certify and plan with missingness-MDPs.
#[derive(Parser)]
#[command(name = "missmdp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a dataset of observation histories under the uniform policy.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        /// Number of observations.
        #[arg(long)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the missingness table from a dataset.
    Learn {
        #[command(flatten)]
        learner: LearnerArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// PAC certificate for the counts a learner would use.
    Certify {
        #[command(flatten)]
        learner: LearnerArgs,
        #[arg(long, default_value_t = 0.95)]
        delta: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the missingness class and the self-censoring features.
    Classify {
        #[command(flatten)]
        model: ModelArgs,
        /// Also check the table against an m-graph.
        #[arg(long)]
        mgraph: Option<PathBuf>,
    },
    /// Solve the model with point-based value iteration.
    Plan {
        #[command(flatten)]
        model: ModelArgs,
        /// Absolute precision target.
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 256)]
        max_beliefs: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo value of a policy on the model.
    Eval {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        policy: PathBuf,
        /// Table the agent tracks its belief with; defaults to the true one.
        #[arg(long)]
        tracker: Option<PathBuf>,
        #[arg(long, default_value_t = 2000)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a convergence sweep described by an INI config.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the output directory of the config.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write a benchmark's model and m-graph files.
    BenchEmit {
        /// Preset name, e.g. icu-smar or pred-mcar.
        preset: String,
        #[arg(long, default_value = "desk")]
        scale: String,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    model: PathBuf,
    /// Missingness file; overrides `M` rows in the model file.
    #[arg(long)]
    missingness: Option<PathBuf>,
}

#[derive(Args)]
struct LearnerArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "aimi")]
    algo: String,
    #[arg(long, default_value_t = DEFAULT_KAPPA)]
    kappa: f64,
    /// Structural knowledge: AsMAR takes its always-observed set, AIMI its
    /// indicator parents.
    #[arg(long)]
    mgraph: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn load_model(path: &Path) -> Result<ModelFile> {
    formats::parse_model(&read(path)?).with_context(|| format!("in {}", path.display()))
}

fn load_graph(path: &Path) -> Result<MGraph> {
    parse_mgraph(&read(path)?).with_context(|| format!("in {}", path.display()))
}

impl ModelArgs {
    fn load(&self) -> Result<(ModelFile, MissingnessTable)> {
        let file = load_model(&self.model)?;
        let table = match &self.missingness {
            Some(path) => {
                formats::parse_missingness(&read(path)?, file.model.features())
                    .with_context(|| format!("in {}", path.display()))?
                    .table
            }
            None => file
                .missingness
                .clone()
                .ok_or_else(|| anyhow!("{} has no M rows; pass --missingness", self.model.display()))?,
        };
        Ok((file, table))
    }
}

impl LearnerArgs {
    fn run(&self) -> Result<(ModelFile, missmdp_core::learn::LearnedMissingness)> {
        let file = load_model(&self.model)?;
        let model = &file.model;
        let data = formats::parse_dataset(model.features(), model.n_actions(), &read(&self.dataset)?)
            .with_context(|| format!("in {}", self.dataset.display()))?;
        let algo = Algorithm::parse(&self.algo).ok_or_else(|| anyhow!("unknown learner {:?}", self.algo))?;
        let mut spec = LearnerSpec::new(algo).with_kappa(self.kappa);
        if let Some(path) = &self.mgraph {
            let graph = load_graph(path)?;
            match algo {
                Algorithm::Asmar => spec.always_override = Some(graph.always_observed().iter().copied().collect()),
                Algorithm::Aimi => spec.knowledge = AimiKnowledge::Graph(graph),
                Algorithm::Amcar => {}
            }
        }
        let learned = learn(model, &data.counts(), &spec)?;
        Ok((file, learned))
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { model, size, seed, out } => {
            let (file, table) = model.load()?;
            let data = parallel::generate_dataset(&file.model, &table, BehaviorPolicy::UniformRandom, size, seed)?;
            write(&out, &formats::render_dataset(file.model.features(), &data))?;
            println!("{} histories, {} observations", data.histories().len(), data.total_observations());
        }
        Command::Learn { learner, out } => {
            let (file, learned) = learner.run()?;
            write(&out, &formats::render_learned(file.model.features(), &learned))?;
            if !learned.unvisited.is_empty() {
                eprintln!("warning: {} states have no matching observation", learned.unvisited.len());
            }
        }
        Command::Certify { learner, delta, out } => {
            let (file, learned) = learner.run()?;
            let cert = certify(&learned.counts, delta)?;
            println!(
                "global_epsilon={} keys={} flagged={}",
                cert.global_epsilon,
                cert.keys.len(),
                cert.flagged().count()
            );
            if let Some(out) = out {
                write(&out, &formats::render_certificate(file.model.features(), &cert))?;
            }
        }
        Command::Classify { model, mgraph } => {
            let (file, table) = model.load()?;
            let features = file.model.features();
            let class = classify_missingness(features, &table);
            let censored: Vec<String> = class.self_censoring.iter().map(|i| (i + 1).to_string()).collect();
            println!("{}", class.kind);
            println!("self-censoring {{{}}}", censored.join(", "));
            if let Some(path) = mgraph {
                let graph = load_graph(&path)?;
                if !consistent_with(features, &table, &graph) {
                    bail!("table is not consistent with {}", path.display());
                }
                println!("consistent with {}", path.display());
            }
        }
        Command::Plan { model, eps, seed, max_beliefs, out } => {
            let (file, table) = model.load()?;
            let config = SolveConfig { seed, max_beliefs, ..SolveConfig::new(eps) };
            let policy = solve_point_based(&file.model, &table, &config)?;
            write(&out, &formats::render_policy(&policy, file.model.n_actions()))?;
            println!("{} alpha vectors", policy.vectors.len());
        }
        Command::Eval { model, policy, tracker, episodes, seed } => {
            let (file, truth) = model.load()?;
            let policy = formats::parse_policy(&read(&policy)?)?.policy;
            let tracker = match tracker {
                Some(path) => formats::parse_missingness(&read(&path)?, file.model.features())?.table,
                None => truth.clone(),
            };
            let stats =
                parallel::rollout_value(&file.model, &truth, &tracker, &policy, &RolloutConfig::new(episodes, seed))?;
            println!("value_mean={} value_ci95={} episodes={}", stats.mean, stats.ci95, stats.episodes);
        }
        Command::Experiment { config, out, workers, seed } => {
            let mut cfg = ExperimentConfig::from_ini(&read(&config)?)?;
            if let Some(out) = out {
                cfg.out_dir = out;
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            let report = run_experiment(&cfg)?;
            write_report(&report, &cfg.out_dir)?;
            let failed = report.rows.iter().filter(|r| r.error.is_some()).count();
            println!("{} rows written to {} ({failed} failed)", report.rows.len(), cfg.out_dir.display());
        }
        Command::BenchEmit { preset, scale, out } => {
            let scale = Scale::parse(&scale).ok_or_else(|| anyhow!("unknown scale {scale:?}"))?;
            let spec = BenchSpec::preset(&preset, scale)?;
            let b = bench::build(&spec)?;
            let stem = spec.name();
            write(&out.join(format!("{stem}.model")), &formats::render_model(&b.model, Some(&b.table)))?;
            write(&out.join(format!("{stem}.mgraph")), &b.graph.render())?;
            println!("{stem}: {} states, {} actions", b.model.features().n_states(), b.model.n_actions());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::FAILURE;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
