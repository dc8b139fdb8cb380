//! Batch entry points: trace and manifest generation, DQN and regressor
//! training, evaluation and reporting. Every command is deterministic under
//! `--seed`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use coi_abr::agents::{dqn_train, Bba, DqnAgent, DqnConfig, DqnPolicy, Policy, Rba, RobustMpc, WeightMode};
use coi_abr::eval::{run_session, summarize_sessions, Summary};
use coi_abr::interest::{planted_dataset, train_regressor, Dataset, PlantedConfig, RegressorConfig};
use coi_abr::media::{generate_manifest, load_manifest, ManifestConfig, VideoManifest};
use coi_abr::sim::{chunk_log_csv, EnvConfig, RewardParams};
use coi_abr::trace::{generate_synthetic_trace, load_trace, BandwidthTrace, TraceProfile};

pub const METHODS: [&str; 5] = ["bba", "rba", "mpc", "coi", "dqn-constant"];

/// Exit code for usage and configuration problems.
pub const EXIT_USAGE: i32 = 2;
/// Exit code for failures while running a valid command.
pub const EXIT_FAILURE: i32 = 1;

/// Marks an error as a configuration problem (exit code 2).
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Parser)]
#[command(name = "coi-abr", version, about = "Content-of-interest adaptive bitrate experiments")]
pub struct Cli {
    /// Experiment config (JSON). Flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (a file path for gen-manifest).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Comma-separated methods: bba, rba, mpc, coi, dqn-constant.
    #[arg(long, global = true, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// Sessions to train (train-dqn), evaluate (evaluate) or traces to write (gen-traces).
    #[arg(long, global = true)]
    pub sessions: Option<usize>,
    /// Directory of trace CSV files used instead of synthetic traces.
    #[arg(long, global = true)]
    pub traces: Option<PathBuf>,
    /// Manifest JSON used for every session instead of generated ones.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic bandwidth traces as CSV.
    GenTraces,
    /// Write a synthetic manifest with interestingness annotations.
    GenManifest,
    /// Train the DQN agents named in the method list.
    TrainDqn,
    /// Train the interestingness regressor on a feature CSV or planted data.
    TrainInterest {
        /// Feature CSV (`chunk_id,label,f0,...`); planted data when absent.
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Run every method over the evaluation sessions and write summaries.
    Evaluate {
        /// Directory holding trained agents; defaults to --out.
        #[arg(long)]
        agents: Option<PathBuf>,
    },
    /// Print the summary table of a previous evaluation.
    Report,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub traces: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub methods: Vec<String>,
    /// Evaluation sessions.
    pub sessions: usize,
    pub trace_count: usize,
    pub trace_profile: TraceProfile,
    pub manifest_generator: ManifestConfig,
    pub env: EnvConfig,
    pub reward: RewardParams,
    pub dqn: DqnConfig,
    pub regressor: RegressorConfig,
    pub planted: PlantedConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: None,
            traces: None,
            manifest: None,
            methods: METHODS.iter().map(|s| s.to_string()).collect(),
            sessions: 20,
            trace_count: 20,
            trace_profile: TraceProfile::default(),
            manifest_generator: ManifestConfig::default(),
            env: EnvConfig::default(),
            reward: RewardParams::default(),
            dqn: DqnConfig::default(),
            regressor: RegressorConfig::default(),
            planted: PlantedConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| config_err(format!("invalid config {}: {e}", path.display())))
    }

    fn apply_flags(&mut self, cli: &Cli) {
        if let Some(s) = cli.seed {
            self.seed = s;
        }
        if let Some(o) = &cli.out {
            self.out = Some(o.clone());
        }
        if let Some(m) = &cli.methods {
            self.methods = m.clone();
        }
        if let Some(t) = &cli.traces {
            self.traces = Some(t.clone());
        }
        if let Some(m) = &cli.manifest {
            self.manifest = Some(m.clone());
        }
    }

    pub fn validate(&self) -> Result<()> {
        for m in &self.methods {
            if !METHODS.contains(&m.as_str()) {
                return Err(config_err(format!("unknown method {m:?}; expected one of {}", METHODS.join(", "))));
            }
        }
        if self.methods.is_empty() {
            return Err(config_err("method list is empty"));
        }
        if self.sessions == 0 || self.trace_count == 0 {
            return Err(config_err("sessions and trace_count must be >= 1"));
        }
        self.trace_profile.validate().map_err(|e| config_err(e.to_string()))?;
        self.env.validate().map_err(|e| config_err(e.to_string()))?;
        self.reward.validate().map_err(|e| config_err(e.to_string()))?;
        self.dqn.validate().map_err(|e| config_err(e.to_string()))?;
        for p in [&self.traces, &self.manifest].into_iter().flatten() {
            if !p.exists() {
                return Err(config_err(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }

    fn out_dir(&self) -> Result<&Path> {
        self.out.as_deref().ok_or_else(|| config_err("--out is required"))
    }
}

/// Independent seed streams so that training and evaluation never share
/// traces or videos.
#[derive(Debug, Clone, Copy)]
enum Stream {
    TrainTrace = 1,
    TrainManifest = 2,
    EvalTrace = 3,
    EvalManifest = 4,
    Agent = 5,
    Regressor = 6,
}

fn derive_seed(base: u64, stream: Stream, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(stream as u64);
    rng.set_word_pos(2 * index as u128);
    rng.next_u64()
}

/// Supplies the (manifest, trace) pair for each session.
struct SessionSource {
    config: ExperimentConfig,
    traces: Vec<Arc<BandwidthTrace>>,
    manifest: Option<Arc<VideoManifest>>,
    trace_stream: Stream,
    manifest_stream: Stream,
}

impl SessionSource {
    fn new(config: &ExperimentConfig, training: bool) -> Result<Self> {
        let traces = match &config.traces {
            Some(dir) => load_trace_dir(dir)?,
            None => Vec::new(),
        };
        let manifest = match &config.manifest {
            Some(p) => {
                let f = fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
                Some(Arc::new(load_manifest(f).with_context(|| format!("loading {}", p.display()))?))
            }
            None => None,
        };
        let (trace_stream, manifest_stream) = if training {
            (Stream::TrainTrace, Stream::TrainManifest)
        } else {
            (Stream::EvalTrace, Stream::EvalManifest)
        };
        Ok(Self { config: config.clone(), traces, manifest, trace_stream, manifest_stream })
    }

    fn session(&self, i: usize) -> Result<(Arc<VideoManifest>, Arc<BandwidthTrace>)> {
        let c = &self.config;
        let trace = if self.traces.is_empty() {
            let seed = derive_seed(c.seed, self.trace_stream, i);
            Arc::new(generate_synthetic_trace(&c.trace_profile, seed, format!("synthetic_{i:03}"))?)
        } else {
            self.traces[i % self.traces.len()].clone()
        };
        let manifest = match &self.manifest {
            Some(m) => m.clone(),
            None => {
                let seed = derive_seed(c.seed, self.manifest_stream, i);
                Arc::new(generate_manifest(&c.manifest_generator, seed, &format!("video_{i:03}"))?)
            }
        };
        Ok((manifest, trace))
    }
}

fn load_trace_dir(dir: &Path) -> Result<Vec<Arc<BandwidthTrace>>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(config_err(format!("no .csv traces in {}", dir.display())));
    }
    paths
        .iter()
        .map(|p| {
            let name = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            let f = fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
            Ok(Arc::new(load_trace(f, name).with_context(|| format!("loading {}", p.display()))?))
        })
        .collect()
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn series_csv(header: &str, values: &[f64]) -> String {
    let mut out = format!("index,{header}\n");
    for (i, v) in values.iter().enumerate() {
        out.push_str(&format!("{i},{v}\n"));
    }
    out
}

fn weight_mode(method: &str) -> Option<WeightMode> {
    match method {
        "coi" => Some(WeightMode::Coi),
        "dqn-constant" => Some(WeightMode::DQN_CONSTANT),
        _ => None,
    }
}

pub fn agent_dir(root: &Path, method: &str) -> PathBuf {
    root.join(method)
}

fn gen_traces(c: &ExperimentConfig, count: usize) -> Result<()> {
    let out = c.out_dir()?;
    for i in 0..count {
        let seed = derive_seed(c.seed, Stream::EvalTrace, i);
        let name = format!("trace_{i:03}");
        let t = generate_synthetic_trace(&c.trace_profile, seed, name.clone())?;
        write(&out.join(format!("{name}.csv")), &t.to_csv())?;
    }
    println!("wrote {count} traces to {}", out.display());
    Ok(())
}

fn gen_manifest(c: &ExperimentConfig) -> Result<()> {
    let out = c.out_dir()?;
    let m = generate_manifest(&c.manifest_generator, derive_seed(c.seed, Stream::EvalManifest, 0), "synthetic")
        .map_err(|e| config_err(e.to_string()))?;
    write(out, &m.to_json())?;
    println!("wrote manifest with {} chunks to {}", m.num_chunks(), out.display());
    Ok(())
}

fn train_dqn(c: &ExperimentConfig) -> Result<()> {
    let out = c.out_dir()?;
    let modes: Vec<(&str, WeightMode)> = c.methods.iter().filter_map(|m| weight_mode(m).map(|w| (m.as_str(), w))).collect();
    if modes.is_empty() {
        return Err(config_err("method list names no DQN agent (coi, dqn-constant)"));
    }
    let source = SessionSource::new(c, true)?;
    // Materialize sessions up front so the training closure cannot fail.
    let sessions = (0..c.dqn.sessions).map(|i| source.session(i)).collect::<Result<Vec<_>>>()?;
    for (name, mode) in modes {
        let config = DqnConfig { seed: derive_seed(c.seed, Stream::Agent, 0), ..c.dqn.clone() };
        let trained = dqn_train(|i| sessions[i].clone(), c.env, c.reward, &config, mode)?;
        let dir = agent_dir(out, name);
        write(&dir.join("checkpoint.json"), &trained.agent.net.to_json())?;
        write(&dir.join("agent.json"), &trained.agent.meta_json())?;
        write(&dir.join("reward_history.csv"), &series_csv("cumulative_reward", &trained.reward_history))?;
        write(&dir.join("loss_history.csv"), &series_csv("td_loss", &trained.loss_history))?;
        let last = trained.reward_history.last().copied().unwrap_or(f64::NAN);
        println!("{name}: trained {} sessions, last session reward {last}", trained.reward_history.len());
    }
    Ok(())
}

fn load_agent(root: &Path, method: &str) -> Result<DqnAgent> {
    let dir = agent_dir(root, method);
    let ckpt = dir.join("checkpoint.json");
    let meta = dir.join("agent.json");
    let read = |p: &Path| fs::read_to_string(p).map_err(|e| config_err(format!("missing trained agent {}: {e}", p.display())));
    let agent = DqnAgent::from_parts(&read(&ckpt)?, &read(&meta)?)?;
    if weight_mode(method) != Some(agent.meta.weight_mode) {
        return Err(config_err(format!("{} holds a {} agent", dir.display(), agent.name())));
    }
    Ok(agent)
}

fn make_policy(method: &str, agents: &Path) -> Result<Box<dyn Policy>> {
    Ok(match method {
        "bba" => Box::new(Bba::default()),
        "rba" => Box::new(Rba),
        "mpc" => Box::new(RobustMpc::default()),
        m => Box::new(DqnPolicy::new(Arc::new(load_agent(agents, m)?))),
    })
}

/// Runs every configured method over `config.sessions` evaluation sessions.
pub fn evaluate_methods(c: &ExperimentConfig, agents: &Path) -> Result<(Summary, Vec<(String, usize, String)>)> {
    let source = SessionSource::new(c, false)?;
    let mut policies = c.methods.iter().map(|m| Ok((m.clone(), make_policy(m, agents)?))).collect::<Result<Vec<_>>>()?;
    let mut runs = Vec::new();
    let mut logs = Vec::new();
    for i in 0..c.sessions {
        let (manifest, trace) = source.session(i)?;
        for (name, policy) in policies.iter_mut() {
            let metrics = run_session(policy.as_mut(), manifest.clone(), trace.clone(), c.reward, c.env)?;
            logs.push((name.clone(), i, chunk_log_csv(&metrics.chunk_log)));
            runs.push((name.clone(), metrics));
        }
    }
    Ok((summarize_sessions(&runs)?, logs))
}

fn evaluate(c: &ExperimentConfig, agents: Option<&Path>) -> Result<()> {
    let out = c.out_dir()?;
    let agents = agents.unwrap_or(out);
    let (summary, logs) = evaluate_methods(c, agents)?;
    write(&out.join("summary.json"), &summary.to_json())?;
    write(&out.join("table.csv"), &summary.table_csv())?;
    write(&out.join("ecdf.csv"), &summary.ecdf_csv())?;
    write(&out.join("bins.csv"), &summary.bins_csv())?;
    write(&out.join("correlations.csv"), &summary.correlations_csv())?;
    for (method, i, csv) in logs {
        write(&out.join("logs").join(&method).join(format!("session_{i:03}.csv")), &csv)?;
    }
    print!("{}", render_table(&summary));
    Ok(())
}

fn train_interest(c: &ExperimentConfig, features: Option<&Path>) -> Result<()> {
    let out = c.out_dir()?;
    let data = match features {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| config_err(format!("cannot read {}: {e}", p.display())))?;
            Dataset::from_csv(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => planted_dataset(&PlantedConfig { seed: derive_seed(c.seed, Stream::Regressor, 0), ..c.planted })?,
    };
    let config = RegressorConfig { seed: derive_seed(c.seed, Stream::Regressor, 1), ..c.regressor.clone() };
    let trained = train_regressor(&data, &config)?;
    write(&out.join("interest_model.json"), &trained.model.to_json())?;
    write(&out.join("interest_loss_history.csv"), &series_csv("train_mse", &trained.loss_history))?;
    let metrics = serde_json::json!({
        "samples": data.len(),
        "train_samples": trained.train_indices.len(),
        "test_samples": trained.test_indices.len(),
        "test_mse": trained.test_mse,
        "test_mean_abs_error": trained.test_mean_abs_error,
        "test_bias": trained.test_bias,
    });
    write(&out.join("interest_metrics.json"), &serde_json::to_string_pretty(&metrics)?)?;
    println!("test MSE {:.5} over {} held-out samples", trained.test_mse, trained.test_indices.len());
    Ok(())
}

/// Plain-text rendering of the summary table.
pub fn render_table(summary: &Summary) -> String {
    let mut out = format!("{:<14}{:>12}{:>12}{:>14}{:>12}{:>12}{:>10}\n", "method", "rebuf_s", "startup_s", "bitrate_kbps", "var_kbps", "reward", "spearman");
    for m in &summary.methods {
        let rho = m.correlation.spearman.map(|r| format!("{r:.3}")).unwrap_or_else(|| "n/a".into());
        out.push_str(&format!(
            "{:<14}{:>12.3}{:>12.3}{:>14.1}{:>12.1}{:>12.0}{:>10}\n",
            m.method,
            m.rebuffer_s.mean,
            m.startup_delay_s.mean,
            m.average_bitrate_kbps.mean,
            m.bitrate_variation_kbps.mean,
            m.cumulative_reward.mean,
            rho
        ));
    }
    out
}

fn report(c: &ExperimentConfig) -> Result<()> {
    let path = c.out_dir()?.join("summary.json");
    let text = fs::read_to_string(&path)
        .map_err(|_| config_err(format!("missing {}; run `evaluate` first", path.display())))?;
    let summary: Summary = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    print!("{}", render_table(&summary));
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    config.apply_flags(cli);
    if let Some(n) = cli.sessions {
        match cli.command {
            Command::TrainDqn => config.dqn.sessions = n,
            Command::GenTraces => config.trace_count = n,
            _ => config.sessions = n,
        }
    }
    config.validate()?;
    match &cli.command {
        Command::GenTraces => gen_traces(&config, config.trace_count),
        Command::GenManifest => gen_manifest(&config),
        Command::TrainDqn => train_dqn(&config),
        Command::TrainInterest { features } => train_interest(&config, features.as_deref()),
        Command::Evaluate { agents } => evaluate(&config, agents.as_deref()),
        Command::Report => report(&config),
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                EXIT_USAGE
            } else {
                EXIT_FAILURE
            }
        }
    }
}
