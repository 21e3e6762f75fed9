//! Domain types and pure state transitions.
//!
//! A [`GameState`] only ever changes through [`GameState::apply`], which validates an event
//! against the rules before committing it. The engine uses the same entry point when it runs a
//! game live, so a persisted event log replays to exactly the state the live run reached.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::{IndexedRandom, SliceRandom};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

const DEFAULT_NAMES: &str = include_str!("../data/names.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    Villager,
    Werewolf,
    Seer,
    Doctor,
}

impl Role {
    pub fn is_werewolf(self) -> bool {
        self == Role::Werewolf
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Villager => "Villager",
            Role::Werewolf => "Werewolf",
            Role::Seer => "Seer",
            Role::Doctor => "Doctor",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Seat index of a player, `0..N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct Seat(pub usize);

// Accepts numeric strings too: JSON map keys are strings, and buffered (tagged-enum) decoding
// does not convert them back to integers.
impl<'de> Deserialize<'de> for Seat {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct SeatVisitor;
        impl serde::de::Visitor<'_> for SeatVisitor {
            type Value = Seat;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a seat index")
            }
            fn visit_u64<E: serde::de::Error>(self, v: u64) -> Result<Seat, E> {
                usize::try_from(v).map(Seat).map_err(E::custom)
            }
            fn visit_i64<E: serde::de::Error>(self, v: i64) -> Result<Seat, E> {
                usize::try_from(v).map(Seat).map_err(E::custom)
            }
            fn visit_str<E: serde::de::Error>(self, v: &str) -> Result<Seat, E> {
                v.parse().map(Seat).map_err(E::custom)
            }
        }
        d.deserialize_any(SeatVisitor)
    }
}

impl fmt::Display for Seat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlayerId {
    pub seat: Seat,
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Winner {
    Villagers,
    Werewolves,
}

impl fmt::Display for Winner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Winner::Villagers => f.write_str("Villagers"),
            Winner::Werewolves => f.write_str("Werewolves"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoleCounts {
    pub villagers: usize,
    pub werewolves: usize,
    pub seers: usize,
    pub doctors: usize,
}

impl Default for RoleCounts {
    fn default() -> Self {
        Self { villagers: 4, werewolves: 2, seers: 1, doctors: 1 }
    }
}

impl RoleCounts {
    pub fn total(&self) -> usize {
        self.villagers + self.werewolves + self.seers + self.doctors
    }

    pub fn count(&self, role: Role) -> usize {
        match role {
            Role::Villager => self.villagers,
            Role::Werewolf => self.werewolves,
            Role::Seer => self.seers,
            Role::Doctor => self.doctors,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GameConfig {
    pub roles: RoleCounts,
    pub debate_cap: usize,
    pub name_pool: Vec<String>,
    pub seed: u64,
    pub synthetic_votes: bool,
    pub mention_tiebreak_weight: u32,
    /// Hook for ending a debate once synthetic votes reach a majority. Not implemented;
    /// validation rejects `true`.
    pub stop_on_consensus: bool,
}

impl Default for GameConfig {
    fn default() -> Self {
        Self {
            roles: RoleCounts::default(),
            debate_cap: 8,
            name_pool: default_name_pool(),
            seed: 0,
            synthetic_votes: true,
            mention_tiebreak_weight: 2,
            stop_on_consensus: false,
        }
    }
}

/// The shipped pool of 17 first names.
pub fn default_name_pool() -> Vec<String> {
    serde_json::from_str(DEFAULT_NAMES).expect("bundled name pool is valid JSON")
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("at least one werewolf is required")]
    NoWerewolves,
    #[error("werewolves ({werewolves}) must be outnumbered by the other roles ({others}) at the start")]
    WerewolvesNotOutnumbered { werewolves: usize, others: usize },
    #[error("at most one {0} is supported")]
    TooMany(Role),
    #[error("debate_cap must be at least 1")]
    DebateCap,
    #[error("name pool has {pool} names but {players} players are needed")]
    NamePoolTooSmall { pool: usize, players: usize },
    #[error("name pool contains a duplicate or empty name: {0:?}")]
    BadName(String),
    #[error("mention_tiebreak_weight must be positive")]
    TiebreakWeight,
    #[error("stop_on_consensus is not supported")]
    ConsensusStopUnsupported,
}

impl GameConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    pub fn players(&self) -> usize {
        self.roles.total()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let r = &self.roles;
        if r.werewolves == 0 {
            return Err(ConfigError::NoWerewolves);
        }
        let others = r.total() - r.werewolves;
        if r.werewolves >= others {
            return Err(ConfigError::WerewolvesNotOutnumbered { werewolves: r.werewolves, others });
        }
        if r.seers > 1 {
            return Err(ConfigError::TooMany(Role::Seer));
        }
        if r.doctors > 1 {
            return Err(ConfigError::TooMany(Role::Doctor));
        }
        if self.debate_cap == 0 {
            return Err(ConfigError::DebateCap);
        }
        if self.name_pool.len() < r.total() {
            return Err(ConfigError::NamePoolTooSmall { pool: self.name_pool.len(), players: r.total() });
        }
        let mut seen = BTreeSet::new();
        for name in &self.name_pool {
            let key = name.trim().to_lowercase();
            if key.is_empty() || !seen.insert(key) {
                return Err(ConfigError::BadName(name.clone()));
            }
        }
        if self.mention_tiebreak_weight == 0 {
            return Err(ConfigError::TiebreakWeight);
        }
        if self.stop_on_consensus {
            return Err(ConfigError::ConsensusStopUnsupported);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Night,
    Debate,
    Vote,
    Ended(Winner),
}

/// Where in the game an event happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventPhase {
    Setup,
    Night,
    Debate,
    Vote,
    End,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Visibility {
    Public,
    Private(Vec<Seat>),
    /// Recorded for the Game Master and analysis only; never shown to any agent.
    GameMaster,
}

impl Visibility {
    pub fn visible_to(&self, seat: Seat) -> bool {
        match self {
            Visibility::Public => true,
            Visibility::Private(to) => to.contains(&seat),
            Visibility::GameMaster => false,
        }
    }
}

/// Which policy capability an event refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActionKind {
    Bid,
    Speak,
    Vote,
    SyntheticVote,
    Eliminate,
    Protect,
    Investigate,
    Summarize,
}

impl ActionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::Bid => "bid",
            ActionKind::Speak => "speak",
            ActionKind::Vote => "vote",
            ActionKind::SyntheticVote => "synthetic_vote",
            ActionKind::Eliminate => "eliminate",
            ActionKind::Protect => "protect",
            ActionKind::Investigate => "investigate",
            ActionKind::Summarize => "summarize",
        }
    }
}

/// A structured claim that `subject` holds `role`, attached to an utterance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleClaim {
    pub subject: Seat,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum EventKind {
    GameStarted {
        players: Vec<String>,
    },
    WerewolfTeam {
        members: Vec<Seat>,
    },
    WerewolfTarget {
        proposer: Seat,
        target: Seat,
    },
    DoctorProtect {
        doctor: Seat,
        target: Seat,
    },
    SeerResult {
        seer: Seat,
        target: Seat,
        role: Role,
    },
    /// `victim` is `None` when the night's target was protected.
    NightElimination {
        victim: Option<Seat>,
    },
    DebateTurn {
        speaker: Seat,
        utterance: String,
        bids: BTreeMap<Seat, u8>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        claims: Vec<RoleClaim>,
    },
    SyntheticTally {
        debate_index: usize,
        votes: BTreeMap<Seat, Seat>,
    },
    VoteCast {
        voter: Seat,
        target: Seat,
    },
    Exile {
        target: Seat,
    },
    NoExile,
    RoundSummary {
        player: Seat,
        text: String,
    },
    Reasoning {
        player: Seat,
        action: ActionKind,
        text: String,
    },
    PolicyFallback {
        player: Seat,
        action: ActionKind,
        reason: String,
    },
    ProtocolViolation {
        player: Seat,
        action: ActionKind,
        detail: String,
    },
    GameEnded {
        winner: Winner,
    },
}

impl EventKind {
    /// Events that only annotate a game (analysis, diagnostics, private reasoning) rather
    /// than advance it.
    pub fn is_annotation(&self) -> bool {
        matches!(
            self,
            EventKind::SyntheticTally { .. }
                | EventKind::Reasoning { .. }
                | EventKind::PolicyFallback { .. }
                | EventKind::ProtocolViolation { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameEvent {
    pub round: u32,
    pub phase: EventPhase,
    pub visibility: Visibility,
    pub kind: EventKind,
}

impl GameEvent {
    pub fn new(round: u32, phase: EventPhase, visibility: Visibility, kind: EventKind) -> Self {
        Self { round, phase, visibility, kind }
    }

    pub fn public(round: u32, phase: EventPhase, kind: EventKind) -> Self {
        Self::new(round, phase, Visibility::Public, kind)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Player {
    pub name: String,
    pub role: Role,
}

/// Bookkeeping for the block currently in progress. Fully derived from events.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockState {
    pub wolf_target: Option<Seat>,
    pub protected: Option<Seat>,
    pub investigated: bool,
    pub debate_turns: usize,
    pub tallies: usize,
    pub votes: BTreeMap<Seat, Seat>,
    pub vote_resolved: bool,
    pub summarized: BTreeSet<Seat>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameState {
    pub config: GameConfig,
    pub round: u32,
    pub phase: Phase,
    pub players: Vec<Player>,
    pub alive: BTreeSet<Seat>,
    pub history: Vec<GameEvent>,
    pub block: BlockState,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct RuleViolation(pub String);

macro_rules! violation {
    ($($arg:tt)*) => { RuleViolation(format!($($arg)*)) };
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("event {index}: {reason}")]
    Illegal { index: usize, reason: RuleViolation },
    #[error("log does not begin with the setup events produced by its config")]
    SetupMismatch,
    #[error("invalid config: {0}")]
    Config(#[from] ConfigError),
}

/// Creates the initial state: names sampled without replacement, roles shuffled, phase Night.
///
/// The history starts with a public `GameStarted` and a `WerewolfTeam` event private to the
/// werewolves (they know each other).
pub fn new_game(config: GameConfig) -> Result<GameState, ConfigError> {
    config.validate()?;
    let mut rng = rng::stream(config.seed, rng::streams::SETUP);
    let n = config.players();
    let names: Vec<String> = config.name_pool.choose_multiple(&mut rng, n).cloned().collect();
    let mut roles = Vec::with_capacity(n);
    for role in [Role::Villager, Role::Werewolf, Role::Seer, Role::Doctor] {
        roles.extend(std::iter::repeat_n(role, config.roles.count(role)));
    }
    roles.shuffle(&mut rng);

    let players: Vec<Player> =
        names.into_iter().zip(roles).map(|(name, role)| Player { name, role }).collect();
    let wolves: Vec<Seat> =
        (0..n).map(Seat).filter(|s| players[s.0].role.is_werewolf()).collect();
    let history = vec![
        GameEvent::public(
            0,
            EventPhase::Setup,
            EventKind::GameStarted { players: players.iter().map(|p| p.name.clone()).collect() },
        ),
        GameEvent::new(
            0,
            EventPhase::Setup,
            Visibility::Private(wolves.clone()),
            EventKind::WerewolfTeam { members: wolves },
        ),
    ];
    Ok(GameState {
        config,
        round: 0,
        phase: Phase::Night,
        alive: (0..n).map(Seat).collect(),
        players,
        history,
        block: BlockState::default(),
    })
}

/// Villagers win with no living werewolf; werewolves win once they are at least as many as
/// everyone else alive.
pub fn check_win(state: &GameState) -> Option<Winner> {
    let wolves = state.living_werewolves().count();
    let others = state.alive.len() - wolves;
    win_from_counts(wolves, others)
}

pub fn win_from_counts(living_wolves: usize, living_others: usize) -> Option<Winner> {
    if living_wolves == 0 {
        Some(Winner::Villagers)
    } else if living_wolves >= living_others {
        Some(Winner::Werewolves)
    } else {
        None
    }
}

/// Strict-majority tally: the target with more than half of the votes cast, if any.
pub fn tally_votes(votes: &BTreeMap<Seat, Seat>) -> Result<Option<Seat>, RuleViolation> {
    let mut counts: BTreeMap<Seat, usize> = BTreeMap::new();
    for (voter, target) in votes {
        if voter == target {
            return Err(violation!("{voter} voted for themselves"));
        }
        *counts.entry(*target).or_default() += 1;
    }
    let cast = votes.len();
    Ok(counts.into_iter().find(|(_, c)| 2 * c > cast).map(|(t, _)| t))
}

/// Folds `event` into a copy of `state`.
pub fn apply_event(state: &GameState, event: GameEvent) -> Result<GameState, RuleViolation> {
    let mut next = state.clone();
    next.apply(event)?;
    Ok(next)
}

/// Rebuilds the final state of a game from its config and full event log.
pub fn replay(config: GameConfig, events: &[GameEvent]) -> Result<GameState, ReplayError> {
    let mut state = new_game(config)?;
    let setup = state.history.len();
    if events.len() < setup || events[..setup] != state.history[..] {
        return Err(ReplayError::SetupMismatch);
    }
    for (index, event) in events.iter().enumerate().skip(setup) {
        state.apply(event.clone()).map_err(|reason| ReplayError::Illegal { index, reason })?;
    }
    Ok(state)
}

impl GameState {
    pub fn seats(&self) -> impl Iterator<Item = Seat> + '_ {
        (0..self.players.len()).map(Seat)
    }

    pub fn name(&self, seat: Seat) -> &str {
        &self.players[seat.0].name
    }

    pub fn role(&self, seat: Seat) -> Role {
        self.players[seat.0].role
    }

    pub fn is_alive(&self, seat: Seat) -> bool {
        self.alive.contains(&seat)
    }

    pub fn seat_of(&self, name: &str) -> Option<Seat> {
        self.players.iter().position(|p| p.name.eq_ignore_ascii_case(name.trim())).map(Seat)
    }

    pub fn living_werewolves(&self) -> impl Iterator<Item = Seat> + '_ {
        self.alive.iter().copied().filter(|s| self.role(*s).is_werewolf())
    }

    pub fn living_with_role(&self, role: Role) -> Option<Seat> {
        self.alive.iter().copied().find(|s| self.role(*s) == role)
    }

    pub fn winner(&self) -> Option<Winner> {
        match self.phase {
            Phase::Ended(w) => Some(w),
            _ => None,
        }
    }

    pub fn is_over(&self) -> bool {
        matches!(self.phase, Phase::Ended(_))
    }

    /// The phase tag an event emitted right now would carry.
    pub fn event_phase(&self) -> EventPhase {
        match self.phase {
            Phase::Night => EventPhase::Night,
            Phase::Debate => EventPhase::Debate,
            Phase::Vote => EventPhase::Vote,
            Phase::Ended(_) => EventPhase::End,
        }
    }

    fn living(&self, seat: Seat, what: &str) -> Result<(), RuleViolation> {
        if seat.0 >= self.players.len() {
            return Err(violation!("{what} {seat} does not exist"));
        }
        if !self.is_alive(seat) {
            return Err(violation!("{what} {seat} is not alive"));
        }
        Ok(())
    }

    fn pending_winner_guard(&self, kind: &EventKind) -> Result<(), RuleViolation> {
        if let Some(w) = check_win(self) {
            if !matches!(kind, EventKind::GameEnded { .. }) {
                return Err(violation!("{w} have won; only GameEnded may follow"));
            }
        }
        Ok(())
    }

    /// Validates `event` against the rules and commits it. On error the state is unchanged.
    pub fn apply(&mut self, event: GameEvent) -> Result<(), RuleViolation> {
        if self.is_over() {
            return Err(violation!("game is over"));
        }
        if matches!(event.kind, EventKind::GameStarted { .. } | EventKind::WerewolfTeam { .. }) {
            return Err(violation!("setup events only occur at game creation"));
        }

        // The first event tagged with the next round's night opens that round.
        let opens_night = self.phase == Phase::Vote
            && self.block.vote_resolved
            && event.phase == EventPhase::Night
            && event.round == self.round + 1;
        let (round, phase) = if opens_night { (self.round + 1, Phase::Night) } else { (self.round, self.phase) };
        if event.round != round {
            return Err(violation!("event tagged round {} but game is in round {}", event.round, round));
        }
        if !event.kind.is_annotation() {
            self.pending_winner_guard(&event.kind)?;
        }

        let expected_phase = match (&event.kind, phase) {
            (EventKind::GameEnded { .. }, _) => EventPhase::End,
            (EventKind::VoteCast { .. }, Phase::Debate) => EventPhase::Vote,
            _ => match phase {
                Phase::Night => EventPhase::Night,
                Phase::Debate => EventPhase::Debate,
                Phase::Vote => EventPhase::Vote,
                Phase::Ended(_) => EventPhase::End,
            },
        };
        if event.phase != expected_phase {
            return Err(violation!("event tagged {:?} during {:?}", event.phase, phase));
        }

        let mut next_block = if opens_night { BlockState::default() } else { self.block.clone() };
        let mut next_phase = phase;
        let mut removed: Option<Seat> = None;

        match (&event.kind, phase) {
            (kind, _) if kind.is_annotation() => {
                match kind {
                    EventKind::SyntheticTally { debate_index, votes } => {
                        if phase != Phase::Debate {
                            return Err(violation!("synthetic tally outside the debate"));
                        }
                        if *debate_index + 1 != next_block.debate_turns || next_block.tallies != next_block.debate_turns - 1 {
                            return Err(violation!("synthetic tally {debate_index} does not follow its debate turn"));
                        }
                        let voters: BTreeSet<Seat> = votes.keys().copied().collect();
                        if voters != self.alive {
                            return Err(violation!("synthetic tally must hold one vote per living player"));
                        }
                        for (voter, target) in votes {
                            self.living(*target, "synthetic vote target")?;
                            if voter == target {
                                return Err(violation!("{voter} cast a synthetic self-vote"));
                            }
                        }
                        next_block.tallies += 1;
                    }
                    EventKind::Reasoning { player, .. }
                    | EventKind::PolicyFallback { player, .. }
                    | EventKind::ProtocolViolation { player, .. } => {
                        if player.0 >= self.players.len() {
                            return Err(violation!("unknown player {player}"));
                        }
                    }
                    _ => unreachable!(),
                }
            }
            (EventKind::WerewolfTarget { proposer, target }, Phase::Night) => {
                if next_block.wolf_target.is_some() {
                    return Err(violation!("werewolves already chose a target tonight"));
                }
                self.living(*proposer, "proposer")?;
                self.living(*target, "werewolf target")?;
                if !self.role(*proposer).is_werewolf() {
                    return Err(violation!("{proposer} is not a werewolf"));
                }
                if self.role(*target).is_werewolf() {
                    return Err(violation!("werewolves cannot target a werewolf"));
                }
                next_block.wolf_target = Some(*target);
            }
            (EventKind::DoctorProtect { doctor, target }, Phase::Night) => {
                if next_block.protected.is_some() {
                    return Err(violation!("doctor already acted tonight"));
                }
                self.living(*doctor, "doctor")?;
                self.living(*target, "protected player")?;
                if self.role(*doctor) != Role::Doctor {
                    return Err(violation!("{doctor} is not the doctor"));
                }
                next_block.protected = Some(*target);
            }
            (EventKind::SeerResult { seer, target, role }, Phase::Night) => {
                if next_block.investigated {
                    return Err(violation!("seer already investigated tonight"));
                }
                self.living(*seer, "seer")?;
                self.living(*target, "investigated player")?;
                if self.role(*seer) != Role::Seer {
                    return Err(violation!("{seer} is not the seer"));
                }
                if seer == target {
                    return Err(violation!("seer cannot investigate themselves"));
                }
                if self.role(*target) != *role {
                    return Err(violation!("seer result for {target} reports the wrong role"));
                }
                next_block.investigated = true;
            }
            (EventKind::NightElimination { victim }, Phase::Night) => {
                let target = next_block.wolf_target.ok_or_else(|| violation!("night resolved without a werewolf target"))?;
                let saved = next_block.protected == Some(target);
                let expected = if saved { None } else { Some(target) };
                if *victim != expected {
                    return Err(violation!("night outcome {victim:?} does not match actions (expected {expected:?})"));
                }
                removed = *victim;
                next_phase = Phase::Debate;
            }
            (EventKind::DebateTurn { speaker, bids, .. }, Phase::Debate) => {
                if next_block.debate_turns >= self.config.debate_cap {
                    return Err(violation!("debate already has {} turns", self.config.debate_cap));
                }
                if next_block.tallies < next_block.debate_turns && self.config.synthetic_votes {
                    return Err(violation!("previous debate turn has no synthetic tally"));
                }
                self.living(*speaker, "speaker")?;
                let bidders: BTreeSet<Seat> = bids.keys().copied().collect();
                if bidders != self.alive {
                    return Err(violation!("every living player must bid exactly once"));
                }
                if let Some(level) = bids.values().find(|l| **l > 4) {
                    return Err(violation!("bid level {level} out of range"));
                }
                let top = bids.values().copied().max().unwrap_or(0);
                if bids[speaker] != top {
                    return Err(violation!("speaker {speaker} did not hold the highest bid"));
                }
                next_block.debate_turns += 1;
            }
            (EventKind::VoteCast { voter, target }, Phase::Debate | Phase::Vote) => {
                if next_block.vote_resolved {
                    return Err(violation!("vote already resolved"));
                }
                self.living(*voter, "voter")?;
                self.living(*target, "vote target")?;
                if voter == target {
                    return Err(violation!("{voter} voted for themselves"));
                }
                if next_block.votes.insert(*voter, *target).is_some() {
                    return Err(violation!("{voter} already voted"));
                }
                next_phase = Phase::Vote;
            }
            (EventKind::Exile { .. } | EventKind::NoExile, Phase::Vote) => {
                if next_block.vote_resolved {
                    return Err(violation!("vote already resolved"));
                }
                let voters: BTreeSet<Seat> = next_block.votes.keys().copied().collect();
                if voters != self.alive {
                    return Err(violation!("not every living player has voted"));
                }
                let outcome = tally_votes(&next_block.votes)?;
                let claimed = match &event.kind {
                    EventKind::Exile { target } => Some(*target),
                    _ => None,
                };
                if claimed != outcome {
                    return Err(violation!("exile outcome {claimed:?} does not match the tally ({outcome:?})"));
                }
                removed = outcome;
                next_block.vote_resolved = true;
            }
            (EventKind::RoundSummary { player, .. }, Phase::Vote) => {
                if !next_block.vote_resolved {
                    return Err(violation!("summaries come after the vote"));
                }
                self.living(*player, "summarizing player")?;
                if !next_block.summarized.insert(*player) {
                    return Err(violation!("{player} already summarized this round"));
                }
            }
            (EventKind::GameEnded { winner }, _) => {
                let night_done = phase == Phase::Debate && next_block.debate_turns == 0;
                let vote_done = phase == Phase::Vote && next_block.vote_resolved;
                if !(night_done || vote_done) {
                    return Err(violation!("game can only end after a night or a vote is resolved"));
                }
                match check_win(self) {
                    Some(w) if w == *winner => next_phase = Phase::Ended(w),
                    other => return Err(violation!("GameEnded({winner}) but win check gives {other:?}")),
                }
            }
            (kind, phase) => {
                return Err(violation!("{} is not legal during {phase:?}", kind_name(kind)));
            }
        }

        // Commit.
        if let Some(seat) = removed {
            self.alive.remove(&seat);
        }
        self.round = round;
        self.phase = next_phase;
        self.block = next_block;
        self.history.push(event);
        Ok(())
    }
}

pub fn kind_name(kind: &EventKind) -> &'static str {
    match kind {
        EventKind::GameStarted { .. } => "GameStarted",
        EventKind::WerewolfTeam { .. } => "WerewolfTeam",
        EventKind::WerewolfTarget { .. } => "WerewolfTarget",
        EventKind::DoctorProtect { .. } => "DoctorProtect",
        EventKind::SeerResult { .. } => "SeerResult",
        EventKind::NightElimination { .. } => "NightElimination",
        EventKind::DebateTurn { .. } => "DebateTurn",
        EventKind::SyntheticTally { .. } => "SyntheticTally",
        EventKind::VoteCast { .. } => "VoteCast",
        EventKind::Exile { .. } => "Exile",
        EventKind::NoExile => "NoExile",
        EventKind::RoundSummary { .. } => "RoundSummary",
        EventKind::Reasoning { .. } => "Reasoning",
        EventKind::PolicyFallback { .. } => "PolicyFallback",
        EventKind::ProtocolViolation { .. } => "ProtocolViolation",
        EventKind::GameEnded { .. } => "GameEnded",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state() -> GameState {
        new_game(GameConfig::with_seed(42)).unwrap()
    }

    fn seat_with(state: &GameState, role: Role) -> Seat {
        state.seats().find(|s| state.role(*s) == role).unwrap()
    }

    fn ev(state: &GameState, phase: EventPhase, kind: EventKind) -> GameEvent {
        GameEvent::public(state.round, phase, kind)
    }

    #[test]
    fn default_game_has_standard_role_multiset() {
        let s = state();
        assert_eq!(s.players.len(), 8);
        let mut roles: Vec<Role> = s.players.iter().map(|p| p.role).collect();
        roles.sort();
        assert_eq!(
            roles,
            vec![
                Role::Villager,
                Role::Villager,
                Role::Villager,
                Role::Villager,
                Role::Werewolf,
                Role::Werewolf,
                Role::Seer,
                Role::Doctor
            ]
        );
        assert_eq!(s.phase, Phase::Night);
        assert_eq!(s.round, 0);
        assert!(matches!(s.history[0].kind, EventKind::GameStarted { .. }));
        let names: BTreeSet<_> = s.players.iter().map(|p| p.name.clone()).collect();
        assert_eq!(names.len(), 8);
    }

    #[test]
    fn small_name_pool_is_rejected() {
        let mut cfg = GameConfig::default();
        cfg.name_pool.truncate(7);
        assert_eq!(new_game(cfg).unwrap_err(), ConfigError::NamePoolTooSmall { pool: 7, players: 8 });
    }

    #[test]
    fn other_config_guards() {
        let cfg = GameConfig { debate_cap: 0, ..GameConfig::default() };
        assert_eq!(cfg.validate(), Err(ConfigError::DebateCap));
        let cfg = GameConfig { roles: RoleCounts { villagers: 0, werewolves: 2, seers: 1, doctors: 1 }, ..GameConfig::default() };
        assert!(matches!(cfg.validate(), Err(ConfigError::WerewolvesNotOutnumbered { .. })));
        let mut cfg = GameConfig::default();
        cfg.name_pool[1] = cfg.name_pool[0].to_uppercase();
        assert!(matches!(cfg.validate(), Err(ConfigError::BadName(_))));
    }

    #[test]
    fn same_seed_same_setup() {
        assert_eq!(state(), state());
        let other = new_game(GameConfig::with_seed(43)).unwrap();
        assert_ne!(state().players, other.players);
    }

    #[test]
    fn check_win_cases() {
        assert_eq!(win_from_counts(0, 3), Some(Winner::Villagers));
        assert_eq!(win_from_counts(2, 2), Some(Winner::Werewolves));
        assert_eq!(win_from_counts(1, 4), None);
        assert_eq!(check_win(&state()), None);
    }

    #[test]
    fn tally_is_strict_majority() {
        let votes = |pairs: &[(usize, usize)]| pairs.iter().map(|(a, b)| (Seat(*a), Seat(*b))).collect::<BTreeMap<_, _>>();
        let five = votes(&[(0, 2), (1, 2), (3, 2), (4, 2), (5, 2), (2, 0), (6, 0), (7, 0)]);
        assert_eq!(tally_votes(&five).unwrap(), Some(Seat(2)));
        let split = votes(&[(0, 2), (1, 2), (3, 2), (4, 2), (5, 4), (2, 4), (6, 4), (7, 4)]);
        assert_eq!(tally_votes(&split).unwrap(), None);
        let three = votes(&[(0, 1), (2, 1), (1, 0)]);
        assert_eq!(tally_votes(&three).unwrap(), Some(Seat(1)));
        assert!(tally_votes(&votes(&[(0, 0)])).is_err());
    }

    #[test]
    fn debate_turn_during_night_is_rejected() {
        let s = state();
        let bids = s.alive.iter().map(|p| (*p, 0u8)).collect();
        let e = ev(&s, EventPhase::Night, EventKind::DebateTurn { speaker: Seat(0), utterance: "hi".into(), bids, claims: vec![] });
        assert!(apply_event(&s, e).is_err());
    }

    #[test]
    fn night_then_exile_removes_players() {
        let mut s = state();
        let wolf = seat_with(&s, Role::Werewolf);
        let victim = seat_with(&s, Role::Villager);
        s.apply(ev(&s, EventPhase::Night, EventKind::WerewolfTarget { proposer: wolf, target: victim })).unwrap();
        // Wrong outcome is rejected.
        assert!(apply_event(&s, ev(&s, EventPhase::Night, EventKind::NightElimination { victim: None })).is_err());
        s.apply(ev(&s, EventPhase::Night, EventKind::NightElimination { victim: Some(victim) })).unwrap();
        assert!(!s.is_alive(victim));
        assert_eq!(s.phase, Phase::Debate);
        let alive: Vec<Seat> = s.alive.iter().copied().collect();
        let bids: BTreeMap<Seat, u8> = alive.iter().map(|p| (*p, if *p == wolf { 3 } else { 1 })).collect();
        s.apply(ev(&s, EventPhase::Debate, EventKind::DebateTurn { speaker: wolf, utterance: "x".into(), bids, claims: vec![] })).unwrap();
        let votes: BTreeMap<Seat, Seat> = alive.iter().map(|p| (*p, if *p == alive[0] { alive[1] } else { alive[0] })).collect();
        s.apply(ev(&s, EventPhase::Debate, EventKind::SyntheticTally { debate_index: 0, votes: votes.clone() })).unwrap();
        for (v, t) in &votes {
            s.apply(ev(&s, EventPhase::Vote, EventKind::VoteCast { voter: *v, target: *t })).unwrap();
        }
        assert!(apply_event(&s, ev(&s, EventPhase::Vote, EventKind::NoExile)).is_err());
        s.apply(ev(&s, EventPhase::Vote, EventKind::Exile { target: alive[0] })).unwrap();
        assert!(!s.is_alive(alive[0]));
        assert_eq!(s.alive.len(), 6);
    }

    #[test]
    fn speaker_must_hold_top_bid() {
        let mut s = state();
        let wolf = seat_with(&s, Role::Werewolf);
        let doc = seat_with(&s, Role::Doctor);
        let victim = seat_with(&s, Role::Villager);
        s.apply(ev(&s, EventPhase::Night, EventKind::WerewolfTarget { proposer: wolf, target: victim })).unwrap();
        s.apply(ev(&s, EventPhase::Night, EventKind::DoctorProtect { doctor: doc, target: victim })).unwrap();
        s.apply(ev(&s, EventPhase::Night, EventKind::NightElimination { victim: None })).unwrap();
        assert_eq!(s.alive.len(), 8);
        let bids: BTreeMap<Seat, u8> = s.alive.iter().map(|p| (*p, if *p == wolf { 4 } else { 0 })).collect();
        let bad = ev(&s, EventPhase::Debate, EventKind::DebateTurn { speaker: doc, utterance: "x".into(), bids, claims: vec![] });
        assert!(apply_event(&s, bad).is_err());
    }
}
