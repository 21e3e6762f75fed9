//! `werewolf`: run games, tournaments, the Monte Carlo baseline and log analytics.
//!
//! Exit codes: 0 success, 1 user or configuration error, 2 internal error.

mod config;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use walkdir::WalkDir;

use werewolf_core::agents::{HeuristicPolicy, Policy, RandomPolicy};
use werewolf_core::analytics::{self, ClassifierDetector, RevealDetector, StructuredDetector};
use werewolf_core::engine::GameMaster;
use werewolf_core::exec::Exec;
use werewolf_core::game::{Role, Seat};
use werewolf_core::llm::{ChatClient, HttpTransport, LlmPolicy, TemplateSet};
use werewolf_core::log::GameLog;
use werewolf_core::montecarlo;
use werewolf_core::rng::derive_seed;
use werewolf_core::tournament::{self, RunOptions};

use config::{AgentAssignment, AgentSpec, RunConfigFile};

#[derive(Parser)]
#[command(name = "werewolf", version, about = "Werewolf arena: games, tournaments, baselines and analytics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Play one game and write its JSONL log.
    RunGame(RunGameArgs),
    /// Estimate the villager win rate of the debate-free baseline.
    Mc(McArgs),
    /// Play the round-robin schedule from the config's `tournament` section.
    Tournament(TournamentArgs),
    /// Compute metrics over a directory of game logs and write CSV files.
    Analyze(AnalyzeArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Args)]
struct RunGameArgs {
    /// JSON run config. Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Game seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// `random`, `heuristic` or `llm:<profile>` for every seat, or
    /// `villagers=<spec>,werewolves=<spec>`. Overrides the config.
    #[arg(long)]
    agents: Option<String>,
    /// Log path. Defaults to `game_<seed>.jsonl`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Collect synthetic votes after every debate turn; overrides the config.
    #[arg(long, value_enum)]
    synthetic_votes: Option<Toggle>,
}

#[derive(Args)]
struct McArgs {
    /// Number of simulated games.
    #[arg(long, default_value_t = 100_000, value_parser = clap::value_parser!(u64).range(1..))]
    games: u64,
    /// Include the auto-believed seer.
    #[arg(long, value_enum, default_value_t = Toggle::Off)]
    seer: Toggle,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Run on the calling thread only.
    #[arg(long)]
    sequential: bool,
    /// Print one JSON object `{games, seer, rate, ci95}`.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct TournamentArgs {
    /// JSON run config with a `tournament` section.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Concurrent games; overrides `tournament.workers`.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
enum Metric {
    Entropy,
    Bids,
    Seer,
    Winmatrix,
    Consensus,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Directory searched recursively for `*.jsonl` logs.
    #[arg(long)]
    logs: PathBuf,
    /// Comma-separated metric families.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "entropy,bids,seer,winmatrix")]
    metrics: Vec<Metric>,
    /// Directory for the CSV files.
    #[arg(long)]
    out: PathBuf,
    /// Label seer reveals with this provider profile instead of structured claims.
    #[arg(long, requires = "config")]
    classifier: Option<String>,
    /// Run config holding the classifier's provider profile.
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Error split by exit code.
enum Failure {
    User(anyhow::Error),
    Internal(anyhow::Error),
}

type CmdResult = Result<(), Failure>;

trait UserContext<T> {
    fn user(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> UserContext<T> for Result<T, E> {
    fn user(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::User(e.into()))
    }
}

fn internal<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Internal(e.into())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::RunGame(a) => cmd_run_game(a),
        Command::Mc(a) => cmd_mc(a),
        Command::Tournament(a) => cmd_tournament(a),
        Command::Analyze(a) => cmd_analyze(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::User(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Internal(e)) => {
            eprintln!("internal error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// Builds policies from agent specs, sharing one client per provider profile.
struct AgentRegistry {
    clients: BTreeMap<String, ChatClient>,
    file: RunConfigFile,
}

impl AgentRegistry {
    fn new(file: RunConfigFile) -> Self {
        let transport = Arc::new(HttpTransport::default());
        let clients = file
            .providers
            .iter()
            .map(|(name, profile)| {
                let client = ChatClient::new(profile.clone(), transport.clone())
                    .with_retry(file.retry)
                    .with_concurrency(file.max_concurrent_requests);
                (name.clone(), client)
            })
            .collect();
        Self { clients, file }
    }

    fn make(&self, spec: &AgentSpec, seed: u64) -> Result<Box<dyn Policy>, String> {
        Ok(match spec {
            AgentSpec::Random => Box::new(RandomPolicy::new(seed)),
            AgentSpec::Heuristic => Box::new(HeuristicPolicy::new(seed)),
            AgentSpec::Llm(profile) => {
                let client = self.clients.get(profile).ok_or_else(|| format!("unknown provider profile {profile:?}"))?;
                Box::new(LlmPolicy::new(client.clone(), TemplateSet::default(), self.file.llm, seed))
            }
        })
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfigFile, Failure> {
    match path {
        Some(p) => RunConfigFile::load(p).user(),
        None => Ok(RunConfigFile::default()),
    }
}

fn cmd_run_game(args: RunGameArgs) -> CmdResult {
    let mut file = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        file.game.seed = seed;
    }
    if let Some(t) = args.synthetic_votes {
        file.game.synthetic_votes = t == Toggle::On;
    }
    if let Some(spec) = &args.agents {
        file.agents = AgentAssignment::parse_flag(spec).map_err(|e| anyhow::anyhow!("--agents: {e}")).user()?;
    }
    file.validate().user()?;

    let config = file.game.clone();
    let assignment = file.agents.clone();
    let villager = assignment.villagers_spec().user()?;
    let werewolf = assignment.werewolves_spec().user()?;
    let registry = AgentRegistry::new(file);

    let setup = werewolf_core::game::new_game(config.clone()).user()?;
    let mut agents = Vec::new();
    for (i, p) in setup.players.iter().enumerate() {
        let spec = if p.role.is_werewolf() { &werewolf } else { &villager };
        agents.push(registry.make(spec, derive_seed(config.seed, "agent", i as u64)).map_err(|e| anyhow::anyhow!(e)).user()?);
    }
    let outcome = GameMaster::new(config.clone(), agents).map_err(internal)?.run().map_err(internal)?;
    let log = outcome.into_log(&assignment.villagers, &assignment.werewolves);
    let out = args.out.unwrap_or_else(|| PathBuf::from(format!("game_{}.jsonl", config.seed)));
    log.write(&out).user()?;
    match log.winner() {
        Some(w) => println!("winner: {w:?} after {} rounds", log.final_round() + 1),
        None => println!("no winner after {} rounds", log.final_round() + 1),
    }
    println!("log: {}", out.display());
    Ok(())
}

fn cmd_mc(args: McArgs) -> CmdResult {
    let exec = if args.sequential { Exec::Sequential } else { Exec::Parallel };
    let seer = args.seer == Toggle::On;
    let est = montecarlo::estimate_win_rate(args.games as usize, seer, args.seed, exec).map_err(internal)?;
    if args.json {
        println!("{}", json!({ "games": est.games, "seer": seer, "rate": est.rate, "ci95": est.ci95 }));
    } else {
        println!(
            "villager win rate: {:.5} ± {:.5} (95% CI, {} games, seer {})",
            est.rate,
            est.ci95,
            est.games,
            if seer { "on" } else { "off" }
        );
    }
    Ok(())
}

fn cmd_tournament(args: TournamentArgs) -> CmdResult {
    let file = load_config(Some(&args.config))?;
    file.validate().user()?;
    let settings = file.tournament.clone().ok_or_else(|| anyhow::anyhow!("tournament: section is required")).user()?;
    let out = args
        .out
        .or_else(|| file.output.dir.clone())
        .ok_or_else(|| anyhow::anyhow!("no output directory: pass --out or set output.dir"))
        .user()?;
    let schedule =
        tournament::schedule_round_robin(&settings.models, settings.games_per_pair, settings.selfplay_games, settings.seed)
            .user()?;
    let specs: BTreeMap<String, AgentSpec> =
        settings.models.iter().map(|m| Ok((m.clone(), AgentSpec::parse(m)?))).collect::<Result<_, String>>()
            .map_err(|e| anyhow::anyhow!(e))
            .user()?;
    let base = file.game.clone();
    let registry = AgentRegistry::new(file);
    let factory = |model: &str, _seat: Seat, _role: Role, seed: u64| -> Result<Box<dyn Policy>, String> {
        let spec = specs.get(model).ok_or_else(|| format!("model {model:?} is not in the schedule"))?;
        registry.make(spec, seed)
    };
    let opts = RunOptions { workers: args.workers.unwrap_or(settings.workers), exec: Exec::Parallel };
    let summary = tournament::run_tournament(&schedule, &base, &factory, &out, opts).map_err(|e| match e {
        tournament::TournamentError::Io { .. } | tournament::TournamentError::Log { .. } => Failure::User(e.into()),
        other => Failure::Internal(other.into()),
    })?;
    println!(
        "games played: {}, resumed: {}, crashed: {}",
        summary.played,
        summary.resumed,
        summary.crashes.len()
    );
    for ((v, w), cell) in &summary.win_matrix {
        println!("{v} (villagers) vs {w} (werewolves): {}/{} villager wins", cell.villager_wins, cell.games);
    }
    println!("summary: {}", summary.win_matrix_path.display());
    if !summary.crashes.is_empty() {
        return Err(Failure::Internal(anyhow::anyhow!("{} games crashed; see {}", summary.crashes.len(), summary.manifest_path.display())));
    }
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> CmdResult {
    let mut paths: Vec<PathBuf> = WalkDir::new(&args.logs)
        .into_iter()
        .filter_map(|e| match e {
            Ok(e) => Some(e),
            Err(err) => {
                eprintln!("warning: {err}");
                None
            }
        })
        .filter(|e| e.file_type().is_file() && e.path().extension().is_some_and(|x| x == "jsonl"))
        .map(|e| e.into_path())
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Failure::User(anyhow::anyhow!("no .jsonl logs under {}", args.logs.display())));
    }

    let mut logs = Vec::new();
    for path in &paths {
        match GameLog::read(path) {
            Ok((log, warnings)) => {
                for w in warnings {
                    eprintln!("warning: {}:{}: {}", path.display(), w.line, w.message);
                }
                logs.push(log);
            }
            Err(e) => eprintln!("warning: {e}"),
        }
    }
    if logs.is_empty() {
        return Err(Failure::User(anyhow::anyhow!("none of the {} log files could be read", paths.len())));
    }

    fs::create_dir_all(&args.out).map_err(|e| anyhow::anyhow!("{}: {e}", args.out.display())).user()?;
    let create = |name: &str| -> Result<fs::File, Failure> {
        let p = args.out.join(name);
        fs::File::create(&p).map_err(|e| anyhow::anyhow!("{}: {e}", p.display())).user()
    };
    let csv_err = |e: csv::Error| Failure::User(e.into());

    let mut metrics = args.metrics.clone();
    metrics.sort();
    metrics.dedup();
    for metric in metrics {
        match metric {
            Metric::Entropy => analytics::write_entropy_csv(create("entropy.csv")?, &analytics::average_entropy(&logs)).map_err(csv_err)?,
            Metric::Bids => analytics::write_bids_csv(create("bids.csv")?, &analytics::bid_distribution(&logs)).map_err(csv_err)?,
            Metric::Winmatrix => analytics::write_win_matrix_csv(create("win_matrix.csv")?, &analytics::win_matrix(&logs)).map_err(csv_err)?,
            Metric::Consensus => analytics::write_consensus_csv(create("consensus.csv")?, &analytics::consensus_points(&logs)).map_err(csv_err)?,
            Metric::Seer => {
                let detector: Box<dyn RevealDetector> = match &args.classifier {
                    Some(profile) => {
                        let file = load_config(args.config.as_deref())?;
                        let registry = AgentRegistry::new(file);
                        let client = registry
                            .clients
                            .get(profile)
                            .cloned()
                            .ok_or_else(|| anyhow::anyhow!("--classifier: unknown provider profile {profile:?}"))
                            .user()?;
                        Box::new(ClassifierDetector::new(client))
                    }
                    None => Box::new(StructuredDetector),
                };
                let mut by_model: BTreeMap<String, Vec<_>> = BTreeMap::new();
                for log in &logs {
                    let (reveals, warnings) = analytics::detect_reveals(log, detector.as_ref());
                    for w in warnings {
                        eprintln!("warning: seer detection: {w}");
                    }
                    by_model.entry(log.header.villager_model.clone()).or_default().push(reveals);
                }
                let rows: Vec<_> = by_model.into_iter().map(|(m, games)| (m, analytics::seer_metrics(&games))).collect();
                analytics::write_seer_csv(create("seer.csv")?, &rows).map_err(csv_err)?;
            }
        }
    }
    println!("analyzed {} of {} logs into {}", logs.len(), paths.len(), args.out.display());
    Ok(())
}
