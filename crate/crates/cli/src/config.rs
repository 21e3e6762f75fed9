//! The JSON run config.
//!
//! ```json
//! {
//!   "game": { "seed": 7, "debate_cap": 8, "synthetic_votes": true },
//!   "providers": {
//!     "gpt": { "endpoint": "https://api.example.com/v1/chat/completions", "model": "gpt-4",
//!              "header": "Authorization", "api_key_env": "OPENAI_API_KEY" }
//!   },
//!   "agents": { "villagers": "llm:gpt", "werewolves": "heuristic" },
//!   "llm": { "temperature": 1.0, "max_tokens": 1024, "reasks": 2 },
//!   "retry": { "max_attempts": 4, "base_delay_ms": 500, "max_delay_ms": 30000 },
//!   "max_concurrent_requests": 8,
//!   "tournament": { "models": ["random", "heuristic", "llm:gpt"], "games_per_pair": 10,
//!                   "selfplay_games": 5, "seed": 1, "workers": 4 },
//!   "output": { "dir": "runs/first" }
//! }
//! ```
//!
//! Every section is optional. Agent specs are `random`, `heuristic` or `llm:<provider>`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde::Deserialize;

use werewolf_core::game::GameConfig;
use werewolf_core::llm::{LlmSettings, ProviderProfile, RetryPolicy};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AgentSpec {
    Random,
    Heuristic,
    Llm(String),
}

impl AgentSpec {
    pub fn parse(s: &str) -> Result<Self, String> {
        match s.trim() {
            "random" => Ok(AgentSpec::Random),
            "heuristic" => Ok(AgentSpec::Heuristic),
            other => match other.strip_prefix("llm:") {
                Some(p) if !p.is_empty() => Ok(AgentSpec::Llm(p.to_string())),
                _ => Err(format!("unknown agent spec {other:?} (expected random, heuristic or llm:<provider>)")),
            },
        }
    }
}

impl fmt::Display for AgentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentSpec::Random => f.write_str("random"),
            AgentSpec::Heuristic => f.write_str("heuristic"),
            AgentSpec::Llm(p) => write!(f, "llm:{p}"),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentAssignment {
    #[serde(default = "heuristic")]
    pub villagers: String,
    #[serde(default = "heuristic")]
    pub werewolves: String,
}

fn heuristic() -> String {
    "heuristic".into()
}

impl Default for AgentAssignment {
    fn default() -> Self {
        Self { villagers: heuristic(), werewolves: heuristic() }
    }
}

impl AgentAssignment {
    /// `<spec>` for every seat, or `villagers=<spec>,werewolves=<spec>` (either part optional).
    pub fn parse_flag(s: &str) -> Result<Self, String> {
        if !s.contains('=') {
            AgentSpec::parse(s)?;
            return Ok(Self { villagers: s.trim().into(), werewolves: s.trim().into() });
        }
        let mut out = Self::default();
        for part in s.split(',') {
            let (side, spec) = part.split_once('=').ok_or_else(|| format!("expected side=spec, got {part:?}"))?;
            AgentSpec::parse(spec)?;
            match side.trim() {
                "villagers" => out.villagers = spec.trim().into(),
                "werewolves" => out.werewolves = spec.trim().into(),
                other => return Err(format!("unknown side {other:?} (expected villagers or werewolves)")),
            }
        }
        Ok(out)
    }

    pub fn villagers_spec(&self) -> anyhow::Result<AgentSpec> {
        AgentSpec::parse(&self.villagers).map_err(|e| anyhow!("agents.villagers: {e}"))
    }

    pub fn werewolves_spec(&self) -> anyhow::Result<AgentSpec> {
        AgentSpec::parse(&self.werewolves).map_err(|e| anyhow!("agents.werewolves: {e}"))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TournamentSettings {
    pub models: Vec<String>,
    #[serde(default = "ten")]
    pub games_per_pair: usize,
    #[serde(default = "five")]
    pub selfplay_games: usize,
    #[serde(default)]
    pub seed: u64,
    /// Concurrent games; 0 = one per core.
    #[serde(default)]
    pub workers: usize,
}

fn ten() -> usize {
    10
}
fn five() -> usize {
    5
}
fn eight() -> usize {
    8
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSettings {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    #[serde(default)]
    pub game: GameConfig,
    #[serde(default)]
    pub providers: BTreeMap<String, ProviderProfile>,
    #[serde(default)]
    pub agents: AgentAssignment,
    #[serde(default)]
    pub llm: LlmSettings,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default = "eight")]
    pub max_concurrent_requests: usize,
    #[serde(default)]
    pub tournament: Option<TournamentSettings>,
    #[serde(default)]
    pub output: OutputSettings,
}

impl Default for RunConfigFile {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config is valid")
    }
}

impl RunConfigFile {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let file: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let at = e.path().to_string();
            anyhow!("{}: {at}: {}", path.display(), e.into_inner())
        })?;
        Ok(file)
    }

    /// Semantic checks that the schema cannot express, reported with the offending field path.
    pub fn validate(&self) -> anyhow::Result<()> {
        self.game.validate().map_err(|e| anyhow!("game: {e}"))?;
        let check = |field: String, spec: &str| -> anyhow::Result<()> {
            match AgentSpec::parse(spec).map_err(|e| anyhow!("{field}: {e}"))? {
                AgentSpec::Llm(p) if !self.providers.contains_key(&p) => {
                    Err(anyhow!("{field}: unknown provider profile {p:?}"))
                }
                _ => Ok(()),
            }
        };
        check("agents.villagers".into(), &self.agents.villagers)?;
        check("agents.werewolves".into(), &self.agents.werewolves)?;
        if let Some(t) = &self.tournament {
            if t.models.is_empty() {
                return Err(anyhow!("tournament.models: at least one model is required"));
            }
            for (i, m) in t.models.iter().enumerate() {
                check(format!("tournament.models[{i}]"), m)?;
            }
            if t.games_per_pair % 2 != 0 {
                return Err(anyhow!("tournament.games_per_pair: must be even, got {}", t.games_per_pair));
            }
        }
        if self.max_concurrent_requests == 0 {
            return Err(anyhow!("max_concurrent_requests: must be at least 1"));
        }
        Ok(())
    }
}
