//! JSONL game logs.
//!
//! Line 1 is a `header` record (config, roster, and the models behind each side); every
//! following line is one `event` record in emission order. The encoding is canonical: struct
//! fields serialize in declaration order and all maps are ordered, so the same game always
//! produces the same bytes. Wall-clock data never goes into the log.

use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{self, EventKind, GameConfig, GameEvent, GameState, Player, ReplayError, Winner};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format_version: u32,
    pub config: GameConfig,
    pub players: Vec<Player>,
    pub villager_model: String,
    pub werewolf_model: String,
}

impl LogHeader {
    pub fn for_state(state: &GameState, villager_model: &str, werewolf_model: &str) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            config: state.config.clone(),
            players: state.players.clone(),
            villager_model: villager_model.to_string(),
            werewolf_model: werewolf_model.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Record {
    Header(LogHeader),
    Event(GameEvent),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameLog {
    pub header: LogHeader,
    pub events: Vec<GameEvent>,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}: no header record")]
    MissingHeader { path: String },
    #[error("{path}: {source}")]
    Replay { path: String, source: ReplayError },
}

/// A line that could not be decoded; reading continues past it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineWarning {
    pub line: usize,
    pub message: String,
}

impl GameLog {
    pub fn from_state(state: &GameState, header: LogHeader) -> Self {
        Self { header, events: state.history.clone() }
    }

    pub fn winner(&self) -> Option<Winner> {
        self.events.iter().rev().find_map(|e| match e.kind {
            EventKind::GameEnded { winner } => Some(winner),
            _ => None,
        })
    }

    pub fn final_round(&self) -> u32 {
        self.events.last().map(|e| e.round).unwrap_or(0)
    }

    /// Replays the events over a fresh game built from the header's config.
    pub fn replay(&self) -> Result<GameState, ReplayError> {
        game::replay(self.header.config.clone(), &self.events)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let header = Record::Header(self.header.clone());
        out.push_str(&serde_json::to_string(&header).expect("header serializes"));
        out.push('\n');
        for e in &self.events {
            out.push_str(&serde_json::to_string(&Record::Event(e.clone())).expect("event serializes"));
            out.push('\n');
        }
        out
    }

    /// Parses a log, skipping undecodable lines and reporting them with 1-based line numbers.
    pub fn parse_jsonl<R: BufRead>(reader: R) -> io::Result<(Option<GameLog>, Vec<LineWarning>)> {
        let mut header = None;
        let mut events = Vec::new();
        let mut warnings = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<Record>(&line) {
                Ok(Record::Header(h)) if header.is_none() => header = Some(h),
                Ok(Record::Header(_)) => warnings.push(LineWarning { line: i + 1, message: "duplicate header".into() }),
                Ok(Record::Event(e)) => events.push(e),
                Err(e) => warnings.push(LineWarning { line: i + 1, message: e.to_string() }),
            }
        }
        Ok((header.map(|header| GameLog { header, events }), warnings))
    }

    pub fn read(path: &Path) -> Result<(GameLog, Vec<LineWarning>), LogError> {
        let file = fs::File::open(path).map_err(|source| LogError::Io { path: path.display().to_string(), source })?;
        let (log, warnings) = Self::parse_jsonl(BufReader::new(file))
            .map_err(|source| LogError::Io { path: path.display().to_string(), source })?;
        let log = log.ok_or_else(|| LogError::MissingHeader { path: path.display().to_string() })?;
        Ok((log, warnings))
    }

    /// Writes atomically: to a temporary sibling first, then renamed into place.
    pub fn write(&self, path: &Path) -> Result<(), LogError> {
        let io_err = |source| LogError::Io { path: path.display().to_string(), source };
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io_err)?;
        }
        let tmp = path.with_extension("jsonl.tmp");
        {
            let mut f = fs::File::create(&tmp).map_err(io_err)?;
            f.write_all(self.to_jsonl().as_bytes()).map_err(io_err)?;
            f.sync_all().map_err(io_err)?;
        }
        fs::rename(&tmp, path).map_err(io_err)
    }
}
