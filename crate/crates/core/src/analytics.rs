//! Post-hoc metrics over game logs.
//!
//! CSV column orders are fixed:
//!
//! * entropy: `round,debate_index,h_mean,n_games`
//! * bids: `turn,level,count,mentioned_flag` (`mentioned_flag` 0 = all bidders, 1 = bidders
//!   mentioned in the previous turn)
//! * seer: `model,games,reveals_per_game,first_reveal_round,unmasked_wolf_pct,believed_pct,backfired_pct`
//! * win matrix: `villager_model,werewolf_model,games,wins,ratio`
//! * consensus: `round,games,mean_index,sem,no_consensus`

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::engine::mentioned_names;
use crate::game::{EventKind, Role, Seat};
use crate::llm::{ChatClient, ChatMessage, ChatRequest};
use crate::log::GameLog;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalyticsError {
    #[error("entropy of an empty tally is undefined")]
    EmptyTally,
}

/// Votes received per player after one debate line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteTally {
    pub round: u32,
    pub debate_index: usize,
    pub counts: BTreeMap<Seat, u32>,
}

impl VoteTally {
    pub fn from_votes(round: u32, debate_index: usize, votes: &BTreeMap<Seat, Seat>) -> Self {
        let mut counts = BTreeMap::new();
        for target in votes.values() {
            *counts.entry(*target).or_insert(0) += 1;
        }
        Self { round, debate_index, counts }
    }

    pub fn total(&self) -> u32 {
        self.counts.values().sum()
    }
}

/// Shannon entropy in bits of the vote shares. Players with no votes contribute nothing.
pub fn entropy(tally: &VoteTally) -> Result<f64, AnalyticsError> {
    entropy_of_counts(tally.counts.values().copied())
}

pub fn entropy_of_counts(counts: impl IntoIterator<Item = u32> + Clone) -> Result<f64, AnalyticsError> {
    let total: u64 = counts.clone().into_iter().map(u64::from).sum();
    if total == 0 {
        return Err(AnalyticsError::EmptyTally);
    }
    let total = total as f64;
    let h = counts
        .into_iter()
        .filter(|c| *c > 0)
        .map(|c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum::<f64>();
    Ok(h.max(0.0))
}

/// Synthetic tallies of one game, keyed by (round, debate index).
pub fn game_tallies(log: &GameLog) -> BTreeMap<(u32, usize), VoteTally> {
    log.events
        .iter()
        .filter_map(|e| match &e.kind {
            EventKind::SyntheticTally { debate_index, votes } => {
                Some(((e.round, *debate_index), VoteTally::from_votes(e.round, *debate_index, votes)))
            }
            _ => None,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyPoint {
    pub round: u32,
    pub debate_index: usize,
    pub mean_entropy: f64,
    pub games: usize,
}

pub type EntropySeries = Vec<EntropyPoint>;

/// Mean entropy per (round, debate index), averaging only over the games that have a tally at
/// that cell, i.e. games that reached round r's debate. Empty cells are omitted.
pub fn average_entropy(logs: &[GameLog]) -> EntropySeries {
    let mut cells: BTreeMap<(u32, usize), (f64, usize)> = BTreeMap::new();
    for log in logs {
        for (key, tally) in game_tallies(log) {
            if let Ok(h) = entropy(&tally) {
                let cell = cells.entry(key).or_insert((0.0, 0));
                cell.0 += h;
                cell.1 += 1;
            }
        }
    }
    cells
        .into_iter()
        .map(|((round, debate_index), (sum, n))| EntropyPoint { round, debate_index, mean_entropy: sum / n as f64, games: n })
        .collect()
}

/// First debate index at which some player holds a strict majority of the votes cast.
pub fn consensus_index(tallies: &[VoteTally]) -> Option<usize> {
    tallies.iter().position(|t| {
        let cast = t.total();
        t.counts.values().any(|c| 2 * c > cast)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusPoint {
    pub round: u32,
    pub games: usize,
    pub mean_index: Option<f64>,
    /// Standard error of the mean over games that reached consensus.
    pub sem: Option<f64>,
    pub no_consensus: usize,
}

pub fn consensus_points(logs: &[GameLog]) -> Vec<ConsensusPoint> {
    let mut per_round: BTreeMap<u32, Vec<Option<usize>>> = BTreeMap::new();
    for log in logs {
        let mut by_round: BTreeMap<u32, Vec<VoteTally>> = BTreeMap::new();
        for ((round, _), tally) in game_tallies(log) {
            by_round.entry(round).or_default().push(tally);
        }
        for (round, tallies) in by_round {
            per_round.entry(round).or_default().push(consensus_index(&tallies));
        }
    }
    per_round
        .into_iter()
        .map(|(round, idx)| {
            let hits: Vec<f64> = idx.iter().flatten().map(|i| *i as f64).collect();
            let n = hits.len() as f64;
            let mean = (!hits.is_empty()).then(|| hits.iter().sum::<f64>() / n);
            let sem = mean.filter(|_| hits.len() > 1).map(|m| {
                let var = hits.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
                (var / n).sqrt()
            });
            ConsensusPoint { round, games: idx.len(), mean_index: mean, sem, no_consensus: idx.len() - hits.len() }
        })
        .collect()
}

/// Bid-level histograms per debate turn index.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BidHistograms {
    pub overall: BTreeMap<usize, [u64; 5]>,
    pub mentioned: BTreeMap<usize, [u64; 5]>,
}

pub fn bid_distribution(logs: &[GameLog]) -> BidHistograms {
    let mut hist = BidHistograms::default();
    for log in logs {
        let names: Vec<&str> = log.header.players.iter().map(|p| p.name.as_str()).collect();
        let mut current_round = None;
        let mut turn = 0usize;
        let mut previous: Option<String> = None;
        for e in &log.events {
            let EventKind::DebateTurn { utterance, bids, .. } = &e.kind else { continue };
            if current_round != Some(e.round) {
                current_round = Some(e.round);
                turn = 0;
                previous = None;
            }
            let mentioned: BTreeSet<&str> = match &previous {
                Some(text) => mentioned_names(text, names.iter().copied()).collect(),
                None => BTreeSet::new(),
            };
            for (seat, level) in bids {
                let level = (*level).min(4) as usize;
                hist.overall.entry(turn).or_insert([0; 5])[level] += 1;
                if mentioned.contains(names[seat.0]) {
                    hist.mentioned.entry(turn).or_insert([0; 5])[level] += 1;
                }
            }
            previous = Some(utterance.clone());
            turn += 1;
        }
    }
    hist
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RevealOutcome {
    ExiledTarget,
    ExiledRevealer,
    Neither,
}

/// A seer publicly naming someone's role (its own included).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevealEvent {
    pub round: u32,
    pub revealer: Seat,
    pub target: Seat,
    pub target_true_role: Role,
    pub outcome: RevealOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeerRevealMetrics {
    pub games: usize,
    pub reveals_per_game: f64,
    /// Mean 0-indexed round of each game's first reveal, over games with at least one reveal.
    pub first_reveal_round: Option<f64>,
    pub unmasked_wolf_pct: Option<f64>,
    pub believed_pct: Option<f64>,
    pub backfired_pct: Option<f64>,
}

/// Table-style seer statistics over per-game reveal lists.
///
/// Reveals are deduplicated per (revealer, target, round). Believed and backfired are
/// percentages of reveals that named a true werewolf.
pub fn seer_metrics(games: &[Vec<RevealEvent>]) -> SeerRevealMetrics {
    let mut total = 0usize;
    let mut wolf_reveals = 0usize;
    let mut believed = 0usize;
    let mut backfired = 0usize;
    let mut first_rounds = Vec::new();
    for reveals in games {
        let mut seen = BTreeSet::new();
        let unique: Vec<&RevealEvent> = reveals.iter().filter(|r| seen.insert((r.revealer, r.target, r.round))).collect();
        if let Some(first) = unique.iter().map(|r| r.round).min() {
            first_rounds.push(first as f64);
        }
        total += unique.len();
        for r in unique.into_iter().filter(|r| r.target_true_role.is_werewolf()) {
            wolf_reveals += 1;
            match r.outcome {
                RevealOutcome::ExiledTarget => believed += 1,
                RevealOutcome::ExiledRevealer => backfired += 1,
                RevealOutcome::Neither => {}
            }
        }
    }
    let pct = |num: usize, den: usize| (den > 0).then(|| 100.0 * num as f64 / den as f64);
    SeerRevealMetrics {
        games: games.len(),
        reveals_per_game: if games.is_empty() { 0.0 } else { total as f64 / games.len() as f64 },
        first_reveal_round: (!first_rounds.is_empty()).then(|| first_rounds.iter().sum::<f64>() / first_rounds.len() as f64),
        unmasked_wolf_pct: pct(wolf_reveals, total),
        believed_pct: pct(believed, wolf_reveals),
        backfired_pct: pct(backfired, wolf_reveals),
    }
}

/// A role claim found in one utterance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimLabel {
    pub subject: Seat,
    pub role: Role,
}

/// Finds seer reveals in a log.
pub trait RevealDetector {
    /// Claims made by `speaker` in `utterance`. Errors are reported as warnings by
    /// [`detect_reveals`] and the utterance is skipped.
    fn claims(&self, log: &GameLog, speaker: Seat, utterance: &str, structured: &[ClaimLabel]) -> Result<Vec<ClaimLabel>, String>;
}

/// Reads the structured claim markers scripted agents attach to their lines.
#[derive(Debug, Clone, Copy, Default)]
pub struct StructuredDetector;

impl RevealDetector for StructuredDetector {
    fn claims(&self, _log: &GameLog, _speaker: Seat, _utterance: &str, structured: &[ClaimLabel]) -> Result<Vec<ClaimLabel>, String> {
        Ok(structured.to_vec())
    }
}

pub const CLASSIFIER_TEMPLATE: &str = "You are annotating a transcript of the social deduction game Werewolf.\n\
Players: {players}.\n\
The following line was spoken by {speaker}:\n\"{utterance}\"\n\n\
Does this line reveal a role? Count a reveal when the speaker states their own role, or states \
that another named player has a specific role (Villager, Werewolf, Seer or Doctor). Hints, \
suspicions and questions are not reveals.\n\
Answer with exactly one JSON object: {\"reveals\": [{\"player\": \"<name>\", \"role\": \"<role>\"}]}. \
Use an empty list when nothing is revealed.";

/// Sends each utterance to a chat model at temperature 0 and caches the labels by the
/// SHA-256 of the prompt, so re-analysing a log is stable and cheap.
pub struct ClassifierDetector {
    client: ChatClient,
    cache: Mutex<HashMap<String, Vec<(String, Role)>>>,
}

impl ClassifierDetector {
    pub fn new(client: ChatClient) -> Self {
        Self { client, cache: Mutex::new(HashMap::new()) }
    }

    pub fn cached_entries(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }

    fn prompt(log: &GameLog, speaker: Seat, utterance: &str) -> String {
        let names: Vec<&str> = log.header.players.iter().map(|p| p.name.as_str()).collect();
        CLASSIFIER_TEMPLATE
            .replace("{players}", &names.join(", "))
            .replace("{speaker}", names.get(speaker.0).copied().unwrap_or("?"))
            .replace("{utterance}", utterance)
    }

    fn parse(reply: &str) -> Result<Vec<(String, Role)>, String> {
        #[derive(Deserialize)]
        struct Item {
            player: String,
            role: String,
        }
        #[derive(Deserialize)]
        struct Reply {
            reveals: Vec<Item>,
        }
        let value = crate::llm::first_json_object(reply).ok_or("no JSON object in classifier reply")?;
        let reply: Reply = serde_json::from_value(value).map_err(|e| e.to_string())?;
        reply
            .reveals
            .into_iter()
            .map(|i| {
                let role = match i.role.trim().to_lowercase().as_str() {
                    "villager" => Role::Villager,
                    "werewolf" => Role::Werewolf,
                    "seer" => Role::Seer,
                    "doctor" => Role::Doctor,
                    other => return Err(format!("unknown role {other:?}")),
                };
                Ok((i.player, role))
            })
            .collect()
    }
}

impl RevealDetector for ClassifierDetector {
    fn claims(&self, log: &GameLog, speaker: Seat, utterance: &str, _structured: &[ClaimLabel]) -> Result<Vec<ClaimLabel>, String> {
        let prompt = Self::prompt(log, speaker, utterance);
        let key = hex::encode(Sha256::digest(prompt.as_bytes()));
        let cached = self.cache.lock().expect("cache lock").get(&key).cloned();
        let labels = match cached {
            Some(l) => l,
            None => {
                let request = ChatRequest {
                    endpoint: self.client.profile().endpoint.clone(),
                    model: self.client.profile().model.clone(),
                    messages: vec![ChatMessage::user(prompt)],
                    temperature: 0.0,
                    max_tokens: 256,
                };
                let reply = self.client.complete(&request).map_err(|e| e.to_string())?;
                let labels = Self::parse(&reply)?;
                self.cache.lock().expect("cache lock").insert(key, labels.clone());
                labels
            }
        };
        Ok(labels
            .into_iter()
            .filter_map(|(name, role)| {
                log.header
                    .players
                    .iter()
                    .position(|p| p.name.eq_ignore_ascii_case(name.trim()))
                    .map(|i| ClaimLabel { subject: Seat(i), role })
            })
            .collect())
    }
}

/// Seer reveals in one game, with the outcome of the same round's vote. Detector failures
/// become warnings.
pub fn detect_reveals(log: &GameLog, detector: &dyn RevealDetector) -> (Vec<RevealEvent>, Vec<String>) {
    let roles: Vec<Role> = log.header.players.iter().map(|p| p.role).collect();
    let mut exiles: BTreeMap<u32, Seat> = BTreeMap::new();
    for e in &log.events {
        if let EventKind::Exile { target } = e.kind {
            exiles.insert(e.round, target);
        }
    }
    let mut reveals = Vec::new();
    let mut warnings = Vec::new();
    for e in &log.events {
        let EventKind::DebateTurn { speaker, utterance, claims, .. } = &e.kind else { continue };
        if roles.get(speaker.0) != Some(&Role::Seer) {
            continue;
        }
        let structured: Vec<ClaimLabel> = claims.iter().map(|c| ClaimLabel { subject: c.subject, role: c.role }).collect();
        match detector.claims(log, *speaker, utterance, &structured) {
            Ok(found) => {
                for c in found {
                    let Some(true_role) = roles.get(c.subject.0).copied() else { continue };
                    let outcome = match exiles.get(&e.round) {
                        Some(t) if *t == c.subject => RevealOutcome::ExiledTarget,
                        Some(t) if t == speaker => RevealOutcome::ExiledRevealer,
                        _ => RevealOutcome::Neither,
                    };
                    reveals.push(RevealEvent { round: e.round, revealer: *speaker, target: c.subject, target_true_role: true_role, outcome });
                }
            }
            Err(msg) => warnings.push(format!("round {} line by {}: {msg}", e.round, speaker)),
        }
    }
    (reveals, warnings)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WinCell {
    pub games: usize,
    pub villager_wins: usize,
}

impl WinCell {
    pub fn ratio(&self) -> f64 {
        self.villager_wins as f64 / self.games as f64
    }
}

pub type WinMatrix = BTreeMap<(String, String), WinCell>;

/// Villager wins per (villager model, werewolf model); unfinished games are skipped.
pub fn win_matrix(logs: &[GameLog]) -> WinMatrix {
    let mut m = WinMatrix::new();
    for log in logs {
        let Some(winner) = log.winner() else { continue };
        let cell = m.entry((log.header.villager_model.clone(), log.header.werewolf_model.clone())).or_default();
        cell.games += 1;
        if winner == crate::game::Winner::Villagers {
            cell.villager_wins += 1;
        }
    }
    m
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub fn write_entropy_csv<W: Write>(w: W, series: &EntropySeries) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["round", "debate_index", "h_mean", "n_games"])?;
    for p in series {
        out.write_record([p.round.to_string(), p.debate_index.to_string(), format!("{:.6}", p.mean_entropy), p.games.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_bids_csv<W: Write>(w: W, hist: &BidHistograms) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["turn", "level", "count", "mentioned_flag"])?;
    for (flag, table) in [(0, &hist.overall), (1, &hist.mentioned)] {
        for (turn, counts) in table {
            for (level, count) in counts.iter().enumerate() {
                out.write_record([turn.to_string(), level.to_string(), count.to_string(), flag.to_string()])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_seer_csv<W: Write>(w: W, rows: &[(String, SeerRevealMetrics)]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["model", "games", "reveals_per_game", "first_reveal_round", "unmasked_wolf_pct", "believed_pct", "backfired_pct"])?;
    for (model, m) in rows {
        out.write_record([
            model.clone(),
            m.games.to_string(),
            format!("{:.6}", m.reveals_per_game),
            fmt_opt(m.first_reveal_round),
            fmt_opt(m.unmasked_wolf_pct),
            fmt_opt(m.believed_pct),
            fmt_opt(m.backfired_pct),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_win_matrix_csv<W: Write>(w: W, m: &WinMatrix) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["villager_model", "werewolf_model", "games", "wins", "ratio"])?;
    for ((v, wolf), cell) in m {
        out.write_record([v.clone(), wolf.clone(), cell.games.to_string(), cell.villager_wins.to_string(), format!("{:.6}", cell.ratio())])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_consensus_csv<W: Write>(w: W, points: &[ConsensusPoint]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["round", "games", "mean_index", "sem", "no_consensus"])?;
    for p in points {
        out.write_record([p.round.to_string(), p.games.to_string(), fmt_opt(p.mean_index), fmt_opt(p.sem), p.no_consensus.to_string()])?;
    }
    out.flush()?;
    Ok(())
}
