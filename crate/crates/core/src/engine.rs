//! The Game Master: night resolution, bid-arbitrated debate, voting and memory updates.
//!
//! Every agent answer is checked against the legal options before it touches the game. An
//! illegal answer is recorded as a `ProtocolViolation` and replaced with a uniformly random
//! legal one, so a misbehaving policy can never stall or corrupt a game.

use std::collections::{BTreeMap, BTreeSet};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{self, Action, AgentView, Decision, MemoryStream, Policy, TranscriptLine, Utterance};
use crate::game::{
    self, check_win, tally_votes, ActionKind, ConfigError, EventKind, EventPhase, GameConfig, GameEvent, GameState,
    Phase, PlayerId, Role, RuleViolation, Seat, Visibility,
};
use crate::log::{GameLog, LogHeader};
use crate::rng::{self, GameRng};

pub const MAX_BID: u8 = 4;

/// Guard against games that never resolve (e.g. a doctor who always guesses right and votes
/// that never reach a majority).
pub const MAX_ROUNDS: u32 = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bid {
    pub level: u8,
    pub bidder: Seat,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NightActions {
    pub proposer: Seat,
    pub werewolf_target: Seat,
    pub doctor_target: Option<Seat>,
    pub seer_target: Option<Seat>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DebateLine {
    pub speaker: Seat,
    pub utterance: String,
    pub bids: BTreeMap<Seat, u8>,
}

pub type DebateTranscript = Vec<DebateLine>;

/// An illegal action, attributed to the capability that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{action:?}: {reason}")]
pub struct ProtocolError {
    pub action: ActionKind,
    pub reason: String,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("expected {expected} policies, got {got}")]
    PolicyCount { expected: usize, got: usize },
    #[error("game did not finish within {0} rounds")]
    RoundLimit(u32),
    #[error("internal rule violation: {0}")]
    Internal(#[from] RuleViolation),
}

/// Names (from `names`) that occur in `utterance` as whole words, case-insensitively.
///
/// Words are maximal runs of alphabetic characters, so "Ginger." matches Ginger while
/// "gingerly" does not. Multi-word names must appear as consecutive words.
pub fn mentioned_names<'a>(utterance: &str, names: impl IntoIterator<Item = &'a str>) -> impl Iterator<Item = &'a str> {
    let words: Vec<String> =
        utterance.split(|c: char| !c.is_alphabetic()).filter(|w| !w.is_empty()).map(str::to_lowercase).collect();
    names.into_iter().filter(move |name| {
        let parts: Vec<String> =
            name.split(|c: char| !c.is_alphabetic()).filter(|w| !w.is_empty()).map(str::to_lowercase).collect();
        !parts.is_empty() && words.windows(parts.len()).any(|w| w == parts.as_slice())
    })
}

pub fn detect_mentions(utterance: &str, living: &[PlayerId]) -> BTreeSet<Seat> {
    let hits: BTreeSet<&str> = mentioned_names(utterance, living.iter().map(|p| p.name.as_str())).collect();
    living.iter().filter(|p| hits.contains(p.name.as_str())).map(|p| p.seat).collect()
}

/// Picks the next speaker: the highest bidder, or among tied top bidders a weighted draw where
/// players in `mentioned` carry `mention_weight` and everyone else weight 1.
pub fn arbitrate_turn<R: Rng + ?Sized>(bids: &[Bid], mentioned: &BTreeSet<Seat>, mention_weight: u32, rng: &mut R) -> Seat {
    assert!(!bids.is_empty(), "arbitration needs at least one bid");
    let top = bids.iter().map(|b| b.level).max().unwrap();
    let tied: Vec<Seat> = bids.iter().filter(|b| b.level == top).map(|b| b.bidder).collect();
    if tied.len() == 1 {
        return tied[0];
    }
    let weights = tied.iter().map(|s| if mentioned.contains(s) { mention_weight.max(1) } else { 1 });
    let dist = WeightedIndex::new(weights).expect("weights are positive");
    tied[dist.sample(rng)]
}

fn night_round(state: &GameState) -> u32 {
    if state.phase == Phase::Night {
        state.round
    } else {
        state.round + 1
    }
}

/// Validates the night's choices and returns the successor state with the events it produced.
///
/// The werewolves' victim dies unless the living doctor protected them. The seer's result is
/// private to the seer. A dead doctor's or seer's choice is ignored.
pub fn resolve_night(state: &GameState, actions: &NightActions) -> Result<(GameState, Vec<GameEvent>), ProtocolError> {
    let err = |action, reason: String| ProtocolError { action, reason };
    let round = night_round(state);
    if !(state.phase == Phase::Night || (state.phase == Phase::Vote && state.block.vote_resolved)) {
        return Err(err(ActionKind::Eliminate, format!("night actions during {:?}", state.phase)));
    }
    let alive = |s: Seat| state.is_alive(s);
    if !alive(actions.proposer) || !state.role(actions.proposer).is_werewolf() {
        return Err(err(ActionKind::Eliminate, format!("{} is not a living werewolf", actions.proposer)));
    }
    let target = actions.werewolf_target;
    if target.0 >= state.players.len() || !alive(target) {
        return Err(err(ActionKind::Eliminate, format!("target {target} is not alive")));
    }
    if state.role(target).is_werewolf() {
        return Err(err(ActionKind::Eliminate, format!("target {target} is a werewolf")));
    }
    let doctor = state.living_with_role(Role::Doctor);
    let seer = state.living_with_role(Role::Seer);
    if let (Some(_), Some(t)) = (doctor, actions.doctor_target) {
        if t.0 >= state.players.len() || !alive(t) {
            return Err(err(ActionKind::Protect, format!("protected player {t} is not alive")));
        }
    }
    if let (Some(s), Some(t)) = (seer, actions.seer_target) {
        if t.0 >= state.players.len() || !alive(t) || t == s {
            return Err(err(ActionKind::Investigate, format!("investigation target {t} is not a living other player")));
        }
    }

    let wolves: Vec<Seat> = state.living_werewolves().collect();
    let mut events = vec![GameEvent::new(
        round,
        EventPhase::Night,
        Visibility::Private(wolves),
        EventKind::WerewolfTarget { proposer: actions.proposer, target },
    )];
    let mut protected = None;
    if let (Some(d), Some(t)) = (doctor, actions.doctor_target) {
        protected = Some(t);
        events.push(GameEvent::new(
            round,
            EventPhase::Night,
            Visibility::Private(vec![d]),
            EventKind::DoctorProtect { doctor: d, target: t },
        ));
    }
    if let (Some(s), Some(t)) = (seer, actions.seer_target) {
        events.push(GameEvent::new(
            round,
            EventPhase::Night,
            Visibility::Private(vec![s]),
            EventKind::SeerResult { seer: s, target: t, role: state.role(t) },
        ));
    }
    let victim = if protected == Some(target) { None } else { Some(target) };
    events.push(GameEvent::public(round, EventPhase::Night, EventKind::NightElimination { victim }));

    let mut next = state.clone();
    for e in &events {
        next.apply(e.clone()).map_err(|v| err(ActionKind::Eliminate, v.0))?;
    }
    if let Some(winner) = check_win(&next) {
        let end = GameEvent::public(round, EventPhase::End, EventKind::GameEnded { winner });
        next.apply(end.clone()).map_err(|v| err(ActionKind::Eliminate, v.0))?;
        events.push(end);
    }
    Ok((next, events))
}

/// Outcome of one live game.
#[derive(Debug, Clone)]
pub struct GameOutcome {
    pub state: GameState,
    pub memories: Vec<MemoryStream>,
    /// Each living agent's memory snapshot at the end of every round, for monotonicity checks.
    pub memory_snapshots: Vec<Vec<MemoryStream>>,
}

impl GameOutcome {
    pub fn winner(&self) -> Option<game::Winner> {
        self.state.winner()
    }

    pub fn into_log(self, villager_model: &str, werewolf_model: &str) -> GameLog {
        GameLog::from_state(&self.state, LogHeader::for_state(&self.state, villager_model, werewolf_model))
    }
}

/// Drives one game. Policies are indexed by seat.
pub struct GameMaster {
    state: GameState,
    agents: Vec<Box<dyn Policy>>,
    memories: Vec<MemoryStream>,
    snapshots: Vec<Vec<MemoryStream>>,
    rng: GameRng,
    synthetic_rng: GameRng,
    transcript: Vec<(Seat, String)>,
    pending: Vec<EventKind>,
}

impl GameMaster {
    pub fn new(config: GameConfig, agents: Vec<Box<dyn Policy>>) -> Result<Self, EngineError> {
        let state = game::new_game(config)?;
        if agents.len() != state.players.len() {
            return Err(EngineError::PolicyCount { expected: state.players.len(), got: agents.len() });
        }
        let mut gm = Self {
            rng: rng::stream(state.config.seed, rng::streams::GAMEPLAY),
            synthetic_rng: rng::stream(state.config.seed, rng::streams::SYNTHETIC),
            memories: vec![MemoryStream::default(); state.players.len()],
            snapshots: Vec::new(),
            agents,
            transcript: Vec::new(),
            pending: Vec::new(),
            state,
        };
        let roster = gm.roster();
        for e in gm.state.history.clone() {
            gm.observe(&e, &roster);
        }
        Ok(gm)
    }

    pub fn state(&self) -> &GameState {
        &self.state
    }

    fn roster(&self) -> Vec<String> {
        self.state.players.iter().map(|p| p.name.clone()).collect()
    }

    fn observe(&mut self, event: &GameEvent, roster: &[String]) {
        for seat in self.state.alive.clone() {
            if event.visibility.visible_to(seat) {
                agents::append_observation(&mut self.memories[seat.0], event, roster);
            }
        }
    }

    fn emit(&mut self, event: GameEvent) -> Result<(), EngineError> {
        self.state.apply(event.clone())?;
        let roster = self.roster();
        self.observe(&event, &roster);
        Ok(())
    }

    /// Writes queued annotations (reasoning, fallbacks, violations) tagged with `round`/`phase`.
    fn flush(&mut self, round: u32, phase: EventPhase) -> Result<(), EngineError> {
        for kind in std::mem::take(&mut self.pending) {
            let visibility = match &kind {
                EventKind::Reasoning { player, .. } => Visibility::Private(vec![*player]),
                _ => Visibility::GameMaster,
            };
            self.emit(GameEvent::new(round, phase, visibility, kind))?;
        }
        Ok(())
    }

    fn note<T>(&mut self, seat: Seat, kind: ActionKind, action: &Action<T>) {
        if let Some(reason) = &action.fallback {
            self.pending.push(EventKind::PolicyFallback { player: seat, action: kind, reason: reason.clone() });
        }
        if kind != ActionKind::SyntheticVote {
            if let Some(text) = action.reasoning.as_ref().filter(|t| !t.trim().is_empty()) {
                self.pending.push(EventKind::Reasoning { player: seat, action: kind, text: text.clone() });
            }
        }
    }

    fn view(&mut self, seat: Seat, round: u32, kind: ActionKind, candidates: Vec<Seat>, debate_turn: usize) -> AgentView {
        let rng = if kind == ActionKind::SyntheticVote { &mut self.synthetic_rng } else { &mut self.rng };
        let mut names: Vec<String> = candidates.iter().map(|s| self.state.name(*s).to_string()).collect();
        names.shuffle(rng);
        let transcript = self
            .transcript
            .iter()
            .map(|(s, t)| TranscriptLine { speaker: self.state.name(*s).to_string(), text: t.clone() })
            .collect();
        AgentView::build(
            &self.state,
            seat,
            round,
            &self.memories[seat.0],
            transcript,
            Decision { kind, candidates: names, debate_turn },
        )
    }

    /// Maps a named choice onto a candidate seat, substituting a random legal one if needed.
    fn resolve_choice(&mut self, seat: Seat, kind: ActionKind, answer: &str, candidates: &[Seat]) -> Seat {
        if let Some(s) = self.state.seat_of(answer).filter(|s| candidates.contains(s)) {
            return s;
        }
        self.pending.push(EventKind::ProtocolViolation {
            player: seat,
            action: kind,
            detail: format!("{answer:?} is not one of the legal options"),
        });
        let rng = if kind == ActionKind::SyntheticVote { &mut self.synthetic_rng } else { &mut self.rng };
        *candidates.choose(rng).expect("candidate list is never empty")
    }

    fn ask_target(&mut self, seat: Seat, round: u32, kind: ActionKind, candidates: Vec<Seat>, turn: usize) -> Seat {
        let view = self.view(seat, round, kind, candidates.clone(), turn);
        let action = match kind {
            ActionKind::Vote | ActionKind::SyntheticVote => self.agents[seat.0].vote(&view),
            _ => self.agents[seat.0].night_action(&view),
        };
        self.note(seat, kind, &action);
        self.resolve_choice(seat, kind, &action.value, &candidates)
    }

    fn others(&self, seat: Seat) -> Vec<Seat> {
        self.state.alive.iter().copied().filter(|s| *s != seat).collect()
    }

    fn night(&mut self) -> Result<(), EngineError> {
        let round = night_round(&self.state);
        self.transcript.clear();
        let proposer = self.state.living_werewolves().next().expect("a living werewolf while the game is on");
        let prey: Vec<Seat> = self.state.alive.iter().copied().filter(|s| !self.state.role(*s).is_werewolf()).collect();
        let werewolf_target = self.ask_target(proposer, round, ActionKind::Eliminate, prey, 0);
        let doctor_target = self.state.living_with_role(Role::Doctor).map(|d| {
            let all: Vec<Seat> = self.state.alive.iter().copied().collect();
            self.ask_target(d, round, ActionKind::Protect, all, 0)
        });
        let seer_target = self.state.living_with_role(Role::Seer).map(|s| {
            let others = self.others(s);
            self.ask_target(s, round, ActionKind::Investigate, others, 0)
        });
        let actions = NightActions { proposer, werewolf_target, doctor_target, seer_target };
        let (_, events) = resolve_night(&self.state, &actions).map_err(|e| RuleViolation(e.to_string()))?;
        self.flush(round, EventPhase::Night)?;
        for e in events {
            self.emit(e)?;
        }
        Ok(())
    }

    fn debate(&mut self) -> Result<(), EngineError> {
        let round = self.state.round;
        let weight = self.state.config.mention_tiebreak_weight;
        for turn in 0..self.state.config.debate_cap {
            let living: Vec<Seat> = self.state.alive.iter().copied().collect();
            let mut bids = Vec::with_capacity(living.len());
            for &seat in &living {
                let view = self.view(seat, round, ActionKind::Bid, self.others(seat), turn);
                let action = self.agents[seat.0].bid(&view);
                self.note(seat, ActionKind::Bid, &action);
                let level = if action.value > MAX_BID {
                    self.pending.push(EventKind::ProtocolViolation {
                        player: seat,
                        action: ActionKind::Bid,
                        detail: format!("bid {} is out of range", action.value),
                    });
                    0
                } else {
                    action.value
                };
                bids.push(Bid { level, bidder: seat });
            }
            let mentioned = match self.transcript.last() {
                Some((_, text)) => {
                    let players: Vec<PlayerId> =
                        living.iter().map(|s| PlayerId { seat: *s, name: self.state.name(*s).to_string() }).collect();
                    detect_mentions(text, &players)
                }
                None => BTreeSet::new(),
            };
            let speaker = arbitrate_turn(&bids, &mentioned, weight, &mut self.rng);
            let view = self.view(speaker, round, ActionKind::Speak, self.others(speaker), turn);
            let action = self.agents[speaker.0].speak(&view);
            self.note(speaker, ActionKind::Speak, &action);
            let Utterance { text, claims } = action.value;
            let claims = claims.into_iter().filter(|c| c.subject.0 < self.state.players.len()).collect();
            self.emit(GameEvent::public(
                round,
                EventPhase::Debate,
                EventKind::DebateTurn {
                    speaker,
                    utterance: text.clone(),
                    bids: bids.iter().map(|b| (b.bidder, b.level)).collect(),
                    claims,
                },
            ))?;
            self.transcript.push((speaker, text));
            self.flush(round, EventPhase::Debate)?;

            if self.state.config.synthetic_votes {
                let mut votes = BTreeMap::new();
                for &seat in &living {
                    let target = self.ask_target(seat, round, ActionKind::SyntheticVote, self.others(seat), turn);
                    votes.insert(seat, target);
                }
                self.emit(GameEvent::new(
                    round,
                    EventPhase::Debate,
                    Visibility::GameMaster,
                    EventKind::SyntheticTally { debate_index: turn, votes },
                ))?;
                self.flush(round, EventPhase::Debate)?;
            }
        }
        Ok(())
    }

    fn vote(&mut self) -> Result<(), EngineError> {
        let round = self.state.round;
        let living: Vec<Seat> = self.state.alive.iter().copied().collect();
        // Every view is built before any vote is recorded.
        let views: Vec<(Seat, Vec<Seat>, AgentView)> = living
            .iter()
            .map(|&seat| {
                let others = self.others(seat);
                let view = self.view(seat, round, ActionKind::Vote, others.clone(), 0);
                (seat, others, view)
            })
            .collect();
        let mut votes = BTreeMap::new();
        for (seat, others, view) in views {
            let action = self.agents[seat.0].vote(&view);
            self.note(seat, ActionKind::Vote, &action);
            let target = self.resolve_choice(seat, ActionKind::Vote, &action.value, &others);
            votes.insert(seat, target);
        }
        for (voter, target) in &votes {
            self.emit(GameEvent::public(round, EventPhase::Vote, EventKind::VoteCast { voter: *voter, target: *target }))?;
        }
        self.flush(round, EventPhase::Vote)?;
        let outcome = match tally_votes(&votes)? {
            Some(target) => EventKind::Exile { target },
            None => EventKind::NoExile,
        };
        self.emit(GameEvent::public(round, EventPhase::Vote, outcome))?;
        if let Some(winner) = check_win(&self.state) {
            self.emit(GameEvent::public(round, EventPhase::End, EventKind::GameEnded { winner }))?;
        }
        Ok(())
    }

    fn summarize(&mut self) -> Result<(), EngineError> {
        let round = self.state.round;
        let living: Vec<Seat> = self.state.alive.iter().copied().collect();
        for seat in living {
            let view = self.view(seat, round, ActionKind::Summarize, Vec::new(), 0);
            let action = self.agents[seat.0].summarize(&view);
            self.note(seat, ActionKind::Summarize, &action);
            agents::append_reflection(&mut self.memories[seat.0], round, &action.value)
                .map_err(|e| RuleViolation(e.to_string()))?;
            self.emit(GameEvent::new(
                round,
                EventPhase::Vote,
                Visibility::Private(vec![seat]),
                EventKind::RoundSummary { player: seat, text: action.value },
            ))?;
        }
        self.flush(round, EventPhase::Vote)?;
        self.snapshots.push(self.memories.clone());
        Ok(())
    }

    pub fn run(mut self) -> Result<GameOutcome, EngineError> {
        loop {
            if night_round(&self.state) >= MAX_ROUNDS {
                return Err(EngineError::RoundLimit(MAX_ROUNDS));
            }
            self.night()?;
            if self.state.is_over() {
                break;
            }
            self.debate()?;
            self.vote()?;
            if self.state.is_over() {
                break;
            }
            self.summarize()?;
        }
        Ok(GameOutcome { state: self.state, memories: self.memories, memory_snapshots: self.snapshots })
    }
}

/// Runs one game to completion and returns its log.
pub fn run_game(config: GameConfig, agents: Vec<Box<dyn Policy>>) -> Result<GameLog, EngineError> {
    Ok(GameMaster::new(config, agents)?.run()?.into_log("", ""))
}

/// One debate's transcript recovered from a finished game's history.
pub fn debate_transcript(state: &GameState, round: u32) -> DebateTranscript {
    state
        .history
        .iter()
        .filter(|e| e.round == round)
        .filter_map(|e| match &e.kind {
            EventKind::DebateTurn { speaker, utterance, bids, .. } => {
                Some(DebateLine { speaker: *speaker, utterance: utterance.clone(), bids: bids.clone() })
            }
            _ => None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::RandomPolicy;
    use crate::rng::stream;

    fn bids(levels: &[u8]) -> Vec<Bid> {
        levels.iter().enumerate().map(|(i, l)| Bid { level: *l, bidder: Seat(i) }).collect()
    }

    #[test]
    fn unique_max_wins() {
        let mut r = stream(1, 0);
        assert_eq!(arbitrate_turn(&bids(&[4, 2, 0]), &BTreeSet::new(), 2, &mut r), Seat(0));
    }

    #[test]
    fn symmetric_tie_reaches_everyone() {
        let mut r = stream(2, 0);
        let mut seen = BTreeSet::new();
        for _ in 0..200 {
            seen.insert(arbitrate_turn(&bids(&[0, 0, 0]), &BTreeSet::new(), 2, &mut r));
        }
        assert_eq!(seen.len(), 3);
    }

    /// Independent whole-word oracle: scan every occurrence and check the neighbouring chars.
    fn oracle_mentions(text: &str, name: &str) -> bool {
        let hay: Vec<char> = text.to_lowercase().chars().collect();
        let needle: Vec<char> = name.to_lowercase().chars().collect();
        if needle.is_empty() || needle.len() > hay.len() {
            return false;
        }
        (0..=hay.len() - needle.len()).any(|i| {
            hay[i..i + needle.len()] == needle[..]
                && (i == 0 || !hay[i - 1].is_alphabetic())
                && (i + needle.len() == hay.len() || !hay[i + needle.len()].is_alphabetic())
        })
    }

    #[test]
    fn mentions_match_whole_words_only() {
        let living = vec![
            PlayerId { seat: Seat(0), name: "Ginger".into() },
            PlayerId { seat: Seat(1), name: "Will".into() },
        ];
        assert_eq!(detect_mentions("I suspect Ginger.", &living), BTreeSet::from([Seat(0)]));
        assert!(detect_mentions("gingerly speaking...", &living).is_empty());
        assert!(detect_mentions("", &living).is_empty());
        assert_eq!(detect_mentions("WILL, ginger!", &living).len(), 2);
        for text in ["gingerly speaking...", "I suspect Ginger.", "Ginger's alibi", "will-power", "Willow", "x"] {
            for p in &living {
                assert_eq!(detect_mentions(text, &living).contains(&p.seat), oracle_mentions(text, &p.name), "{text} / {}", p.name);
            }
        }
    }

    #[test]
    fn night_save_and_kill() {
        let state = game::new_game(GameConfig::with_seed(11)).unwrap();
        let wolf = state.living_werewolves().next().unwrap();
        let villagers: Vec<Seat> = state.seats().filter(|s| state.role(*s) == Role::Villager).collect();
        let (p3, p5) = (villagers[0], villagers[1]);
        let seer = state.living_with_role(Role::Seer).unwrap();
        let saved = NightActions { proposer: wolf, werewolf_target: p3, doctor_target: Some(p3), seer_target: Some(wolf) };
        let (next, events) = resolve_night(&state, &saved).unwrap();
        assert!(next.is_alive(p3));
        assert!(events.iter().any(|e| e.kind == EventKind::NightElimination { victim: None }));
        let seer_event = events.iter().find(|e| matches!(e.kind, EventKind::SeerResult { .. })).unwrap();
        assert_eq!(seer_event.visibility, Visibility::Private(vec![seer]));
        assert_eq!(seer_event.kind, EventKind::SeerResult { seer, target: wolf, role: Role::Werewolf });

        let missed = NightActions { doctor_target: Some(p5), ..saved.clone() };
        let (next, _) = resolve_night(&state, &missed).unwrap();
        assert!(!next.is_alive(p3));

        let bad = NightActions { werewolf_target: wolf, ..saved };
        assert_eq!(resolve_night(&state, &bad).unwrap_err().action, ActionKind::Eliminate);
    }

    #[test]
    fn dead_doctor_is_ignored() {
        let mut state = game::new_game(GameConfig::with_seed(12)).unwrap();
        let wolf = state.living_werewolves().next().unwrap();
        let doctor = state.living_with_role(Role::Doctor).unwrap();
        state.alive.remove(&doctor);
        let victim = state.alive.iter().copied().find(|s| state.role(*s) == Role::Villager).unwrap();
        let actions = NightActions { proposer: wolf, werewolf_target: victim, doctor_target: Some(victim), seer_target: None };
        let (next, _) = resolve_night(&state, &actions).unwrap();
        assert!(!next.is_alive(victim));
    }

    #[test]
    fn debate_length_is_capped() {
        let config = GameConfig::with_seed(5);
        let agents: Vec<Box<dyn Policy>> = (0..8).map(|i| Box::new(RandomPolicy::new(i)) as Box<dyn Policy>).collect();
        let out = GameMaster::new(config, agents).unwrap().run().unwrap();
        let first = debate_transcript(&out.state, 0);
        if out.state.round > 0 || out.state.history.iter().any(|e| matches!(e.kind, EventKind::DebateTurn { .. })) {
            assert_eq!(first.len(), 8);
        }
    }
}
