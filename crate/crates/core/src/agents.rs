//! Agent-facing types: perspective-filtered views, memory streams, the [`Policy`] trait and
//! the two scripted baselines.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::mentioned_names;
use crate::game::{ActionKind, EventKind, GameEvent, GameState, Phase, Role, RoleClaim, Seat, Visibility};
use crate::rng::{self, GameRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MemoryKind {
    Observation,
    Reflection,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub round: u32,
    pub kind: MemoryKind,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MemoryError {
    #[error("a reflection for round {0} already exists")]
    DuplicateReflection(u32),
}

/// Append-only stream of observations and end-of-round reflections.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryStream {
    entries: Vec<MemoryEntry>,
}

impl MemoryStream {
    pub fn entries(&self) -> &[MemoryEntry] {
        &self.entries
    }

    pub fn observe(&mut self, round: u32, text: impl Into<String>) {
        self.entries.push(MemoryEntry { round, kind: MemoryKind::Observation, text: text.into() });
    }

    pub fn reflect(&mut self, round: u32, text: impl Into<String>) -> Result<(), MemoryError> {
        if self.entries.iter().any(|e| e.kind == MemoryKind::Reflection && e.round == round) {
            return Err(MemoryError::DuplicateReflection(round));
        }
        self.entries.push(MemoryEntry { round, kind: MemoryKind::Reflection, text: text.into() });
        Ok(())
    }

    pub fn reflections(&self) -> impl Iterator<Item = &MemoryEntry> {
        self.entries.iter().filter(|e| e.kind == MemoryKind::Reflection)
    }

    pub fn is_prefix_of(&self, other: &MemoryStream) -> bool {
        other.entries.len() >= self.entries.len() && other.entries[..self.entries.len()] == self.entries[..]
    }
}

/// Records `event` as an observation if it is a game-level fact. Debate lines, reasoning,
/// summaries and synthetic tallies are not observations.
pub fn append_observation(memory: &mut MemoryStream, event: &GameEvent, roster: &[String]) -> bool {
    match describe_event(event, roster) {
        Some(text) => {
            memory.observe(event.round, text);
            true
        }
        None => false,
    }
}

pub fn append_reflection(memory: &mut MemoryStream, round: u32, text: &str) -> Result<(), MemoryError> {
    memory.reflect(round, text)
}

/// Plain-language rendering of observable game facts.
pub fn describe_event(event: &GameEvent, roster: &[String]) -> Option<String> {
    let name = |s: &Seat| roster.get(s.0).cloned().unwrap_or_else(|| s.to_string());
    let r = event.round;
    Some(match &event.kind {
        EventKind::GameStarted { players } => format!("The game started with players: {}.", players.join(", ")),
        EventKind::WerewolfTeam { members } => {
            format!("The werewolves are: {}.", members.iter().map(name).collect::<Vec<_>>().join(", "))
        }
        EventKind::WerewolfTarget { proposer, target } => {
            format!("Round {r}: {} chose {} as the werewolves' target.", name(proposer), name(target))
        }
        EventKind::DoctorProtect { target, .. } => format!("Round {r}: you protected {}.", name(target)),
        EventKind::SeerResult { target, role, .. } => format!("Round {r}: you investigated {} and learned they are a {role}.", name(target)),
        EventKind::NightElimination { victim: Some(v) } => format!("Round {r}: {} was eliminated during the night.", name(v)),
        EventKind::NightElimination { victim: None } => format!("Round {r}: no one was eliminated during the night."),
        EventKind::VoteCast { voter, target } => format!("Round {r}: {} voted for {}.", name(voter), name(target)),
        EventKind::Exile { target } => format!("Round {r}: {} was exiled by majority vote.", name(target)),
        EventKind::NoExile => format!("Round {r}: no majority was reached, so no one was exiled."),
        EventKind::GameEnded { winner } => format!("The game ended. {winner} win."),
        _ => return None,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptLine {
    pub speaker: String,
    pub text: String,
}

/// What is being asked of the agent, with the legal options in randomized order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub kind: ActionKind,
    pub candidates: Vec<String>,
    /// Index of the current debate turn (0-based) for bid/speak/synthetic-vote requests.
    pub debate_turn: usize,
}

/// Everything one agent may know when making a decision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentView {
    pub seat: Seat,
    pub name: String,
    pub role: Role,
    pub round: u32,
    pub phase: Phase,
    /// Names of all players by seat.
    pub roster: Vec<String>,
    pub living: Vec<String>,
    pub public_events: Vec<GameEvent>,
    pub private_events: Vec<GameEvent>,
    pub memory: MemoryStream,
    /// Debate lines of the current round only.
    pub transcript: Vec<TranscriptLine>,
    pub decision: Decision,
}

impl AgentView {
    pub fn build(
        state: &GameState,
        seat: Seat,
        round: u32,
        memory: &MemoryStream,
        transcript: Vec<TranscriptLine>,
        decision: Decision,
    ) -> Self {
        let mut public_events = Vec::new();
        let mut private_events = Vec::new();
        for e in &state.history {
            match &e.visibility {
                Visibility::Public => public_events.push(e.clone()),
                v if v.visible_to(seat) => private_events.push(e.clone()),
                _ => {}
            }
        }
        Self {
            seat,
            name: state.name(seat).to_string(),
            role: state.role(seat),
            round,
            phase: state.phase,
            roster: state.players.iter().map(|p| p.name.clone()).collect(),
            living: state.alive.iter().map(|s| state.name(*s).to_string()).collect(),
            public_events,
            private_events,
            memory: memory.clone(),
            transcript,
            decision,
        }
    }

    pub fn seat_of(&self, name: &str) -> Option<Seat> {
        self.roster.iter().position(|n| n.eq_ignore_ascii_case(name.trim())).map(Seat)
    }

    pub fn name_of(&self, seat: Seat) -> &str {
        &self.roster[seat.0]
    }

    pub fn is_living(&self, name: &str) -> bool {
        self.living.iter().any(|n| n.eq_ignore_ascii_case(name))
    }

    /// Fellow werewolves, known only to werewolves.
    pub fn allies(&self) -> BTreeSet<Seat> {
        self.private_events
            .iter()
            .filter_map(|e| match &e.kind {
                EventKind::WerewolfTeam { members } => Some(members.iter().copied().filter(|s| *s != self.seat)),
                _ => None,
            })
            .flatten()
            .collect()
    }

    /// Roles learned through the seer's own investigations.
    pub fn investigations(&self) -> BTreeMap<Seat, Role> {
        self.private_events
            .iter()
            .filter_map(|e| match &e.kind {
                EventKind::SeerResult { target, role, .. } => Some((*target, *role)),
                _ => None,
            })
            .collect()
    }

    /// Every structured role claim made in public debate so far, with its speaker.
    pub fn public_claims(&self) -> Vec<(Seat, RoleClaim)> {
        self.public_events
            .iter()
            .filter_map(|e| match &e.kind {
                EventKind::DebateTurn { speaker, claims, .. } => Some(claims.iter().map(move |c| (*speaker, c.clone()))),
                _ => None,
            })
            .flatten()
            .collect()
    }
}

/// Text plus any explicit role claims it makes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub text: String,
    pub claims: Vec<RoleClaim>,
}

impl Utterance {
    pub fn plain(text: impl Into<String>) -> Self {
        Self { text: text.into(), claims: Vec::new() }
    }
}

/// A policy's answer, with optional private reasoning and a note when the value is a
/// fallback rather than the policy's own choice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Action<T> {
    pub value: T,
    pub reasoning: Option<String>,
    pub fallback: Option<String>,
}

impl<T> Action<T> {
    pub fn chosen(value: T) -> Self {
        Self { value, reasoning: None, fallback: None }
    }

    pub fn with_reasoning(value: T, reasoning: impl Into<String>) -> Self {
        Self { value, reasoning: Some(reasoning.into()), fallback: None }
    }

    pub fn fallback(value: T, reason: impl Into<String>) -> Self {
        Self { value, reasoning: None, fallback: Some(reason.into()) }
    }
}

/// The five capabilities an agent provides. Target-valued answers are player names drawn
/// from `view.decision.candidates`.
pub trait Policy: Send {
    fn bid(&mut self, view: &AgentView) -> Action<u8>;
    fn speak(&mut self, view: &AgentView) -> Action<Utterance>;
    /// Used for both binding votes and synthetic votes; `view.decision.kind` tells them apart.
    fn vote(&mut self, view: &AgentView) -> Action<String>;
    /// Eliminate, protect or investigate, depending on `view.decision.kind`.
    fn night_action(&mut self, view: &AgentView) -> Action<String>;
    fn summarize(&mut self, view: &AgentView) -> Action<String>;
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn bid(&mut self, view: &AgentView) -> Action<u8> {
        (**self).bid(view)
    }
    fn speak(&mut self, view: &AgentView) -> Action<Utterance> {
        (**self).speak(view)
    }
    fn vote(&mut self, view: &AgentView) -> Action<String> {
        (**self).vote(view)
    }
    fn night_action(&mut self, view: &AgentView) -> Action<String> {
        (**self).night_action(view)
    }
    fn summarize(&mut self, view: &AgentView) -> Action<String> {
        (**self).summarize(view)
    }
}

const PHRASES: &[&str] = &[
    "I am just a simple villager trying to figure this out.",
    "We need to think carefully before we vote.",
    "Something about last night does not add up.",
    "Let us hear from the people who have been quiet.",
    "I have no strong feelings yet.",
    "Keep your eyes open, everyone.",
];

/// Uniformly random legal play. Synthetic votes draw from a separate stream so that
/// enabling them never changes the policy's gameplay choices.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: GameRng,
    synthetic_rng: GameRng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self { rng: rng::stream(seed, rng::streams::GAMEPLAY), synthetic_rng: rng::stream(seed, rng::streams::SYNTHETIC) }
    }
}

pub fn random_policy(seed: u64) -> RandomPolicy {
    RandomPolicy::new(seed)
}

fn pick(rng: &mut GameRng, candidates: &[String]) -> String {
    candidates.choose(rng).cloned().unwrap_or_default()
}

impl Policy for RandomPolicy {
    fn bid(&mut self, _view: &AgentView) -> Action<u8> {
        Action::chosen(self.rng.random_range(0..=4))
    }

    fn speak(&mut self, _view: &AgentView) -> Action<Utterance> {
        Action::chosen(Utterance::plain(*PHRASES.choose(&mut self.rng).unwrap()))
    }

    fn vote(&mut self, view: &AgentView) -> Action<String> {
        let rng = if view.decision.kind == ActionKind::SyntheticVote { &mut self.synthetic_rng } else { &mut self.rng };
        Action::chosen(pick(rng, &view.decision.candidates))
    }

    fn night_action(&mut self, view: &AgentView) -> Action<String> {
        Action::chosen(pick(&mut self.rng, &view.decision.candidates))
    }

    fn summarize(&mut self, _view: &AgentView) -> Action<String> {
        Action::chosen(String::new())
    }
}

/// Words that turn a mention into an accusation.
pub const ACCUSATION_KEYWORDS: &[&str] = &["suspect", "werewolf", "wolf", "lying", "liar", "accuse", "vote for"];

pub fn is_accusation(text: &str) -> bool {
    let lower = text.to_lowercase();
    ACCUSATION_KEYWORDS.iter().any(|k| lower.contains(k))
}

/// Accusation counts per accused name over the current transcript. A line accuses every
/// living player it mentions, other than its speaker, when it contains an accusation keyword.
pub fn accusation_counts(view: &AgentView) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for line in &view.transcript {
        if !is_accusation(&line.text) {
            continue;
        }
        for name in mentioned_names(&line.text, view.living.iter().map(String::as_str)) {
            if !name.eq_ignore_ascii_case(&line.speaker) {
                *counts.entry(name.to_string()).or_default() += 1;
            }
        }
    }
    counts
}

/// Most accused candidate; ties go to the lowest seat.
pub fn most_accused(view: &AgentView, eligible: impl Fn(&str) -> bool) -> Option<String> {
    let counts = accusation_counts(view);
    view.decision
        .candidates
        .iter()
        .filter(|c| eligible(c))
        .filter_map(|c| counts.get(c).map(|n| (*n, view.seat_of(c).map(|s| s.0).unwrap_or(usize::MAX), c)))
        .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)))
        .map(|(_, _, c)| c.clone())
}

/// Rule-based opponent with a fixed rule table.
///
/// | role | bid | speech | vote | night |
/// |---|---|---|---|---|
/// | seer | 4 while it knows an unrevealed living wolf, else 2 if mentioned, else 1 | reveals the wolf with a structured claim | known wolf, else most accused | random un-investigated player |
/// | werewolf | 4 when it or an ally was accused in the last line, else 0 on turn 0 and 1 after | denies and accuses the accuser | most accused non-ally, else a seer claimant | seer claimant, else random |
/// | villager, doctor | 2 if mentioned in the last line, else 0 on turn 0 and 1 after | echoes the seer's claim or the top suspect | most accused | doctor protects a seer claimant, else random |
///
/// Reflections are a one-line summary of the round's outcome.
#[derive(Debug, Clone)]
pub struct HeuristicPolicy {
    rng: GameRng,
    synthetic_rng: GameRng,
}

impl HeuristicPolicy {
    pub fn new(seed: u64) -> Self {
        Self { rng: rng::stream(seed, rng::streams::GAMEPLAY), synthetic_rng: rng::stream(seed, rng::streams::SYNTHETIC) }
    }

    /// The seer's living wolves it has not yet named in a public claim.
    fn unrevealed_wolves(view: &AgentView) -> Vec<Seat> {
        let claimed: BTreeSet<Seat> = view
            .public_claims()
            .into_iter()
            .filter(|(speaker, c)| *speaker == view.seat && c.role == Role::Werewolf)
            .map(|(_, c)| c.subject)
            .collect();
        view.investigations()
            .into_iter()
            .filter(|(s, role)| role.is_werewolf() && !claimed.contains(s) && view.is_living(view.name_of(*s)))
            .map(|(s, _)| s)
            .collect()
    }

    fn seer_claimant(view: &AgentView) -> Option<String> {
        view.public_claims()
            .into_iter()
            .rev()
            .find(|(speaker, _)| view.is_living(view.name_of(*speaker)))
            .map(|(speaker, _)| view.name_of(speaker).to_string())
    }

    /// Living players publicly named as werewolves by someone.
    fn claimed_wolves(view: &AgentView) -> Vec<String> {
        view.public_claims()
            .into_iter()
            .filter(|(_, c)| c.role == Role::Werewolf)
            .map(|(_, c)| view.name_of(c.subject).to_string())
            .filter(|n| view.is_living(n))
            .collect()
    }

    fn last_line(view: &AgentView) -> Option<&TranscriptLine> {
        view.transcript.last()
    }

    fn mentioned_last(view: &AgentView, name: &str) -> bool {
        Self::last_line(view)
            .map(|l| mentioned_names(&l.text, [name]).next().is_some())
            .unwrap_or(false)
    }

    fn idle_bid(view: &AgentView) -> u8 {
        if view.decision.debate_turn == 0 {
            0
        } else {
            1
        }
    }

    fn wolf_under_attack(view: &AgentView) -> Option<String> {
        let line = Self::last_line(view)?;
        let allies = view.allies();
        let speaker = view.seat_of(&line.speaker)?;
        if speaker == view.seat || allies.contains(&speaker) || !is_accusation(&line.text) {
            return None;
        }
        let mut team = allies.clone();
        team.insert(view.seat);
        team.iter()
            .any(|s| mentioned_names(&line.text, [view.name_of(*s)]).next().is_some())
            .then(|| line.speaker.clone())
    }

    fn random_candidate(&mut self, view: &AgentView, eligible: impl Fn(&str) -> bool) -> String {
        let rng = if view.decision.kind == ActionKind::SyntheticVote { &mut self.synthetic_rng } else { &mut self.rng };
        let pool: Vec<String> = view.decision.candidates.iter().filter(|c| eligible(c)).cloned().collect();
        if pool.is_empty() {
            pick(rng, &view.decision.candidates)
        } else {
            pick(rng, &pool)
        }
    }

    fn suspect(&mut self, view: &AgentView) -> String {
        match view.role {
            Role::Werewolf => {
                let allies: Vec<String> = view.allies().iter().map(|s| view.name_of(*s).to_string()).collect();
                let not_ally = |n: &str| !allies.iter().any(|a| a.eq_ignore_ascii_case(n));
                most_accused(view, not_ally)
                    .or_else(|| Self::seer_claimant(view).filter(|c| view.decision.candidates.contains(c)))
                    .unwrap_or_else(|| self.random_candidate(view, not_ally))
            }
            Role::Seer => {
                let known = view.investigations();
                if let Some(wolf) = known
                    .iter()
                    .filter(|(_, r)| r.is_werewolf())
                    .map(|(s, _)| view.name_of(*s).to_string())
                    .find(|n| view.decision.candidates.contains(n))
                {
                    return wolf;
                }
                let innocent = |n: &str| view.seat_of(n).map(|s| known.get(&s).is_some_and(|r| !r.is_werewolf())).unwrap_or(false);
                most_accused(view, |n| !innocent(n)).unwrap_or_else(|| self.random_candidate(view, |n| !innocent(n)))
            }
            _ => most_accused(view, |_| true).unwrap_or_else(|| self.random_candidate(view, |_| true)),
        }
    }
}

pub fn heuristic_policy(seed: u64) -> HeuristicPolicy {
    HeuristicPolicy::new(seed)
}

impl Policy for HeuristicPolicy {
    fn bid(&mut self, view: &AgentView) -> Action<u8> {
        let mentioned = Self::mentioned_last(view, &view.name);
        let level = match view.role {
            Role::Seer if !Self::unrevealed_wolves(view).is_empty() => 4,
            Role::Werewolf if Self::wolf_under_attack(view).is_some() => 4,
            Role::Werewolf => Self::idle_bid(view),
            _ if mentioned => 2,
            _ => Self::idle_bid(view),
        };
        Action::chosen(level)
    }

    fn speak(&mut self, view: &AgentView) -> Action<Utterance> {
        if view.role == Role::Seer {
            if let Some(wolf) = Self::unrevealed_wolves(view).first().copied() {
                let name = view.name_of(wolf);
                return Action::chosen(Utterance {
                    text: format!("I am the Seer. I investigated {name} and {name} is a Werewolf. Vote for {name}!"),
                    claims: vec![RoleClaim { subject: wolf, role: Role::Werewolf }],
                });
            }
        }
        if view.role == Role::Werewolf {
            if let Some(accuser) = Self::wolf_under_attack(view) {
                return Action::chosen(Utterance::plain(format!(
                    "{accuser} is lying! I am a simple villager. I suspect {accuser} is the real Werewolf."
                )));
            }
        }
        if view.role != Role::Werewolf {
            if let Some(wolf) = Self::claimed_wolves(view).into_iter().find(|n| !n.eq_ignore_ascii_case(&view.name)) {
                return Action::chosen(Utterance::plain(format!("I believe the Seer. {wolf} must be a Werewolf, I will vote for {wolf}.")));
            }
        }
        let target = self.suspect(view);
        if target.is_empty() {
            return Action::chosen(Utterance::plain(PHRASES[1]));
        }
        Action::chosen(Utterance::plain(format!("I suspect {target}. Something about them feels off.")))
    }

    fn vote(&mut self, view: &AgentView) -> Action<String> {
        Action::chosen(self.suspect(view))
    }

    fn night_action(&mut self, view: &AgentView) -> Action<String> {
        let choice = match view.decision.kind {
            ActionKind::Eliminate | ActionKind::Protect => {
                match Self::seer_claimant(view).filter(|c| view.decision.candidates.contains(c)) {
                    Some(seer) => seer,
                    None => self.random_candidate(view, |_| true),
                }
            }
            ActionKind::Investigate => {
                let known = view.investigations();
                self.random_candidate(view, |n| view.seat_of(n).is_some_and(|s| !known.contains_key(&s)))
            }
            _ => self.random_candidate(view, |_| true),
        };
        Action::chosen(choice)
    }

    fn summarize(&mut self, view: &AgentView) -> Action<String> {
        Action::chosen(round_outcome_line(view))
    }
}

/// "round r: X was eliminated; Y was exiled" from the public events of the view's round.
pub fn round_outcome_line(view: &AgentView) -> String {
    let mut parts = Vec::new();
    for e in view.public_events.iter().filter(|e| e.round == view.round) {
        match &e.kind {
            EventKind::NightElimination { victim: Some(v) } => parts.push(format!("{} was eliminated", view.name_of(*v))),
            EventKind::NightElimination { victim: None } => parts.push("no one was eliminated".to_string()),
            EventKind::Exile { target } => parts.push(format!("{} was exiled", view.name_of(*target))),
            EventKind::NoExile => parts.push("no one was exiled".to_string()),
            _ => {}
        }
    }
    format!("round {}: {}", view.round, parts.join("; "))
}
