//! Round-robin schedules and the batch runner that plays them.
//!
//! Output layout under the run directory:
//!
//! ```text
//! logs/<matchup>/<index>_<seed>.jsonl      one canonical game log
//! logs/<matchup>/<index>_<seed>.meta.json  wall-clock timestamps (not part of the log)
//! summary/win_matrix.csv
//! summary/run_manifest.json                schedule, per-game seeds, config hash, crashes
//! ```
//!
//! In a matchup the villager model drives every non-werewolf seat (villagers, seer, doctor);
//! the werewolf model drives both werewolves. A game's seed is
//! `derive_seed(matchup.base_seed, "game", index)`, so any game can be rerun on its own.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agents::Policy;
use crate::analytics::{self, WinMatrix};
use crate::engine::{EngineError, GameMaster};
use crate::exec::{self, Exec};
use crate::game::{self, GameConfig, Role, Seat};
use crate::log::GameLog;
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matchup {
    pub villager_model: String,
    pub werewolf_model: String,
    pub games: usize,
    pub base_seed: u64,
}

impl Matchup {
    pub fn game_seed(&self, index: usize) -> u64 {
        derive_seed(self.base_seed, "game", index as u64)
    }

    pub fn is_selfplay(&self) -> bool {
        self.villager_model == self.werewolf_model
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub matchups: Vec<Matchup>,
}

impl Schedule {
    pub fn total_games(&self) -> usize {
        self.matchups.iter().map(|m| m.games).sum()
    }

    /// Directory name for matchup `i`: position, then both model names made filesystem safe.
    pub fn matchup_dir(&self, i: usize) -> String {
        let m = &self.matchups[i];
        format!("{i:02}_{}_vs_{}", sanitize(&m.villager_model), sanitize(&m.werewolf_model))
    }
}

fn sanitize(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' }).collect()
}

#[derive(Debug, Error)]
pub enum TournamentError {
    #[error("games per pair must be even, got {0}")]
    OddGamesPerPair(usize),
    #[error("at least one model is required")]
    NoModels,
    #[error("duplicate model name {0:?}")]
    DuplicateModel(String),
    #[error("matchup {index} has no games")]
    EmptyMatchup { index: usize },
    #[error("invalid game config: {0}")]
    Config(#[from] game::ConfigError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {message}")]
    Log { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> TournamentError + '_ {
    move |source| TournamentError::Io { path: path.to_path_buf(), source }
}

/// For every unordered pair, one matchup in each direction with `games_per_pair / 2` games;
/// then one self-play matchup of `selfplay_games` per model (omitted when zero).
pub fn schedule_round_robin(
    models: &[String],
    games_per_pair: usize,
    selfplay_games: usize,
    seed: u64,
) -> Result<Schedule, TournamentError> {
    if models.is_empty() {
        return Err(TournamentError::NoModels);
    }
    if !games_per_pair.is_multiple_of(2) {
        return Err(TournamentError::OddGamesPerPair(games_per_pair));
    }
    for (i, m) in models.iter().enumerate() {
        if models[..i].contains(m) {
            return Err(TournamentError::DuplicateModel(m.clone()));
        }
    }
    let mut pairs = Vec::new();
    for i in 0..models.len() {
        for j in i + 1..models.len() {
            if games_per_pair > 0 {
                pairs.push((i, j));
                pairs.push((j, i));
            }
        }
    }
    let mut matchups: Vec<Matchup> = pairs
        .into_iter()
        .map(|(v, w)| (models[v].clone(), models[w].clone(), games_per_pair / 2))
        .chain(models.iter().filter(|_| selfplay_games > 0).map(|m| (m.clone(), m.clone(), selfplay_games)))
        .map(|(villager_model, werewolf_model, games)| Matchup { villager_model, werewolf_model, games, base_seed: 0 })
        .collect();
    for (i, m) in matchups.iter_mut().enumerate() {
        m.base_seed = derive_seed(seed, "matchup", i as u64);
    }
    Ok(Schedule { matchups })
}

/// Builds the policy for one seat. Arguments: model name, seat, role, and a seed unique to
/// that seat in that game.
pub trait AgentFactory: Sync {
    fn make(&self, model: &str, seat: Seat, role: Role, seed: u64) -> Result<Box<dyn Policy>, String>;
}

impl<F> AgentFactory for F
where
    F: Fn(&str, Seat, Role, u64) -> Result<Box<dyn Policy>, String> + Sync,
{
    fn make(&self, model: &str, seat: Seat, role: Role, seed: u64) -> Result<Box<dyn Policy>, String> {
        self(model, seat, role, seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOptions {
    /// Concurrent games; 0 means one per available core.
    pub workers: usize,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { workers: 0, exec: Exec::Parallel }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameRecord {
    pub matchup: usize,
    pub index: usize,
    pub seed: u64,
    pub log: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashRecord {
    pub matchup: usize,
    pub index: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schedule: Schedule,
    pub config_hash: String,
    pub games: Vec<GameRecord>,
    pub crashes: Vec<CrashRecord>,
}

#[derive(Debug, Clone)]
pub struct TournamentSummary {
    pub played: usize,
    /// Games whose log already existed and were not rerun.
    pub resumed: usize,
    pub crashes: Vec<CrashRecord>,
    pub win_matrix: WinMatrix,
    pub manifest_path: PathBuf,
    pub win_matrix_path: PathBuf,
}

#[derive(Debug, Serialize)]
struct MetaSidecar {
    started_unix_ms: u128,
    finished_unix_ms: u128,
    elapsed_ms: u128,
}

/// SHA-256 of the canonical JSON encoding of `config`, hex encoded.
pub fn config_hash(config: &GameConfig) -> String {
    let bytes = serde_json::to_vec(config).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

pub fn log_path(out_dir: &Path, schedule: &Schedule, matchup: usize, index: usize) -> PathBuf {
    let seed = schedule.matchups[matchup].game_seed(index);
    out_dir.join("logs").join(schedule.matchup_dir(matchup)).join(format!("{index}_{seed}.jsonl"))
}

fn unix_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

enum Outcome {
    Played,
    Resumed,
    Crashed(String),
}

/// Plays one game of a matchup and returns its log.
pub fn play_game(matchup: &Matchup, index: usize, base: &GameConfig, factory: &dyn AgentFactory) -> Result<GameLog, String> {
    let seed = matchup.game_seed(index);
    let config = GameConfig { seed, ..base.clone() };
    let setup = game::new_game(config.clone()).map_err(|e| e.to_string())?;
    let mut agents = Vec::with_capacity(setup.players.len());
    for (i, p) in setup.players.iter().enumerate() {
        let model = if p.role.is_werewolf() { &matchup.werewolf_model } else { &matchup.villager_model };
        agents.push(factory.make(model, Seat(i), p.role, derive_seed(seed, "agent", i as u64))?);
    }
    let outcome = GameMaster::new(config, agents).and_then(GameMaster::run).map_err(|e: EngineError| e.to_string())?;
    Ok(outcome.into_log(&matchup.villager_model, &matchup.werewolf_model))
}

fn run_one(
    out_dir: &Path,
    schedule: &Schedule,
    matchup: usize,
    index: usize,
    base: &GameConfig,
    factory: &dyn AgentFactory,
) -> Result<Outcome, TournamentError> {
    let path = log_path(out_dir, schedule, matchup, index);
    if path.exists() {
        return Ok(Outcome::Resumed);
    }
    let started = unix_ms();
    let clock = Instant::now();
    let log = match play_game(&schedule.matchups[matchup], index, base, factory) {
        Ok(log) => log,
        Err(e) => return Ok(Outcome::Crashed(e)),
    };
    log.write(&path).map_err(|e| TournamentError::Log { path: path.clone(), message: e.to_string() })?;
    let meta = MetaSidecar { started_unix_ms: started, finished_unix_ms: unix_ms(), elapsed_ms: clock.elapsed().as_millis() };
    let meta_path = path.with_extension("meta.json");
    fs::write(&meta_path, serde_json::to_vec_pretty(&meta).expect("meta serializes")).map_err(io_err(&meta_path))?;
    Ok(Outcome::Played)
}

/// Runs every game in `schedule` that has no log yet, then rebuilds the summary from all logs
/// on disk. Games that fail are listed in the manifest and left out of the win matrix.
pub fn run_tournament(
    schedule: &Schedule,
    base: &GameConfig,
    factory: &dyn AgentFactory,
    out_dir: &Path,
    opts: RunOptions,
) -> Result<TournamentSummary, TournamentError> {
    base.validate()?;
    for (index, m) in schedule.matchups.iter().enumerate() {
        if m.games == 0 {
            return Err(TournamentError::EmptyMatchup { index });
        }
    }
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;

    let jobs: Vec<(usize, usize)> =
        schedule.matchups.iter().enumerate().flat_map(|(m, mu)| (0..mu.games).map(move |i| (m, i))).collect();
    let results = exec::map_range_with_workers(opts.exec, opts.workers, jobs.len(), |j| {
        let (m, i) = jobs[j];
        run_one(out_dir, schedule, m, i, base, factory)
    });

    let (mut played, mut resumed) = (0, 0);
    let mut crashes = Vec::new();
    let mut games = Vec::new();
    let mut logs = Vec::new();
    for (&(m, i), result) in jobs.iter().zip(results) {
        let seed = schedule.matchups[m].game_seed(i);
        match result? {
            Outcome::Played => played += 1,
            Outcome::Resumed => resumed += 1,
            Outcome::Crashed(error) => {
                log::error!("matchup {m} game {i} (seed {seed}) failed: {error}");
                crashes.push(CrashRecord { matchup: m, index: i, seed, error });
                continue;
            }
        }
        let path = log_path(out_dir, schedule, m, i);
        let (log, _) = GameLog::read(&path).map_err(|e| TournamentError::Log { path: path.clone(), message: e.to_string() })?;
        logs.push(log);
        let rel = path.strip_prefix(out_dir).unwrap_or(&path).to_path_buf();
        games.push(GameRecord { matchup: m, index: i, seed, log: rel });
    }

    let win_matrix = analytics::win_matrix(&logs);
    let summary_dir = out_dir.join("summary");
    fs::create_dir_all(&summary_dir).map_err(io_err(&summary_dir))?;
    let win_matrix_path = summary_dir.join("win_matrix.csv");
    let file = fs::File::create(&win_matrix_path).map_err(io_err(&win_matrix_path))?;
    analytics::write_win_matrix_csv(file, &win_matrix)
        .map_err(|e| TournamentError::Log { path: win_matrix_path.clone(), message: e.to_string() })?;

    let manifest = RunManifest { schedule: schedule.clone(), config_hash: config_hash(base), games, crashes: crashes.clone() };
    let manifest_path = summary_dir.join("run_manifest.json");
    fs::write(&manifest_path, serde_json::to_vec_pretty(&manifest).expect("manifest serializes")).map_err(io_err(&manifest_path))?;

    Ok(TournamentSummary { played, resumed, crashes, win_matrix, manifest_path, win_matrix_path })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("m{i}")).collect()
    }

    #[test]
    fn three_models_give_nine_matchups() {
        let s = schedule_round_robin(&names(3), 10, 5, 1).unwrap();
        assert_eq!(s.matchups.len(), 9);
        assert_eq!(s.total_games(), 45);
        assert_eq!(s.matchups.iter().filter(|m| m.is_selfplay()).count(), 3);
    }

    #[test]
    fn degenerate_and_parity() {
        let s = schedule_round_robin(&names(1), 10, 5, 1).unwrap();
        assert_eq!(s.matchups.len(), 1);
        assert!(s.matchups[0].is_selfplay());
        assert!(matches!(schedule_round_robin(&names(3), 7, 5, 1), Err(TournamentError::OddGamesPerPair(7))));
    }

    #[test]
    fn schedule_is_deterministic_and_role_fair() {
        let a = schedule_round_robin(&names(4), 6, 2, 9).unwrap();
        assert_eq!(a, schedule_round_robin(&names(4), 6, 2, 9).unwrap());
        for m in names(4) {
            let v: usize = a.matchups.iter().filter(|x| !x.is_selfplay() && x.villager_model == m).map(|x| x.games).sum();
            let w: usize = a.matchups.iter().filter(|x| !x.is_selfplay() && x.werewolf_model == m).map(|x| x.games).sum();
            assert_eq!(v, w);
        }
    }
}
