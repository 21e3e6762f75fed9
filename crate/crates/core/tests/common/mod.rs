//! Helpers shared by the integration tests: agent line-ups, an independent log checker,
//! scripted HTTP transports and a fake clock.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde_json::Value;

use werewolf_core::agents::{Action, AgentView, HeuristicPolicy, Policy, RandomPolicy, Utterance};
use werewolf_core::game::{EventKind, EventPhase, GameConfig, Role, Seat, Winner};
use werewolf_core::llm::{HttpReply, Sleeper, Transport, TransportError};
use werewolf_core::log::GameLog;

pub fn random_agents(seed: u64, n: usize) -> Vec<Box<dyn Policy>> {
    (0..n).map(|i| Box::new(RandomPolicy::new(seed.wrapping_mul(1000).wrapping_add(i as u64))) as Box<dyn Policy>).collect()
}

pub fn heuristic_agents(seed: u64, n: usize) -> Vec<Box<dyn Policy>> {
    (0..n).map(|i| Box::new(HeuristicPolicy::new(seed.wrapping_mul(1000).wrapping_add(i as u64))) as Box<dyn Policy>).collect()
}

fn phase_rank(p: EventPhase) -> u8 {
    match p {
        EventPhase::Setup => 0,
        EventPhase::Night => 1,
        EventPhase::Debate => 2,
        EventPhase::Vote => 3,
        EventPhase::End => 4,
    }
}

/// Checks a finished log without going through the engine's own validation: role
/// conservation, phase order, debate cap, speaker legitimacy, voting, exile majority, and the
/// final winner.
pub fn check_log(log: &GameLog) -> Result<(), String> {
    let cfg = &log.header.config;
    let roles: Vec<Role> = log.header.players.iter().map(|p| p.role).collect();
    for (role, want) in [
        (Role::Villager, cfg.roles.villagers),
        (Role::Werewolf, cfg.roles.werewolves),
        (Role::Seer, cfg.roles.seers),
        (Role::Doctor, cfg.roles.doctors),
    ] {
        let got = roles.iter().filter(|r| **r == role).count();
        if got != want {
            return Err(format!("{role:?}: {got} players, config says {want}"));
        }
    }
    let names: BTreeSet<&str> = log.header.players.iter().map(|p| p.name.as_str()).collect();
    if names.len() != roles.len() {
        return Err("duplicate names".into());
    }

    let mut alive: BTreeSet<Seat> = (0..roles.len()).map(Seat).collect();
    let mut last = (0u32, 0u8);
    let mut turns: BTreeMap<u32, usize> = BTreeMap::new();
    let mut votes: BTreeMap<Seat, Seat> = BTreeMap::new();
    let mut ended = None;
    for (i, e) in log.events.iter().enumerate() {
        if ended.is_some() {
            return Err(format!("event {i} after GameEnded"));
        }
        let here = (e.round, phase_rank(e.phase));
        if here < last {
            return Err(format!("event {i}: phase {:?} of round {} after {last:?}", e.phase, e.round));
        }
        last = here;
        match &e.kind {
            EventKind::ProtocolViolation { detail, .. } => return Err(format!("event {i}: protocol violation: {detail}")),
            EventKind::NightElimination { victim: Some(v) } => {
                if !alive.remove(v) {
                    return Err(format!("event {i}: dead player {v} eliminated"));
                }
            }
            EventKind::DebateTurn { speaker, bids, .. } => {
                let n = turns.entry(e.round).or_default();
                *n += 1;
                if *n > cfg.debate_cap {
                    return Err(format!("round {}: more than {} debate turns", e.round, cfg.debate_cap));
                }
                let bidders: BTreeSet<Seat> = bids.keys().copied().collect();
                if bidders != alive {
                    return Err(format!("event {i}: bidders {bidders:?} are not the living {alive:?}"));
                }
                let top = bids.values().max().copied().unwrap_or(0);
                if bids.get(speaker) != Some(&top) || top > 4 {
                    return Err(format!("event {i}: speaker {speaker} does not hold the top bid {top}"));
                }
            }
            EventKind::VoteCast { voter, target } => {
                if !alive.contains(voter) || !alive.contains(target) || voter == target {
                    return Err(format!("event {i}: illegal vote {voter} -> {target}"));
                }
                if votes.insert(*voter, *target).is_some() {
                    return Err(format!("event {i}: {voter} voted twice"));
                }
            }
            EventKind::Exile { .. } | EventKind::NoExile if e.phase == EventPhase::Vote => {
                let mut counts: BTreeMap<Seat, usize> = BTreeMap::new();
                for t in votes.values() {
                    *counts.entry(*t).or_default() += 1;
                }
                let majority = counts.iter().find(|(_, c)| 2 * **c > votes.len()).map(|(s, _)| *s);
                let got = match &e.kind {
                    EventKind::Exile { target } => Some(*target),
                    _ => None,
                };
                if majority != got {
                    return Err(format!("event {i}: vote result {got:?} but majority is {majority:?}"));
                }
                if votes.len() != alive.len() {
                    return Err(format!("event {i}: {} votes from {} living players", votes.len(), alive.len()));
                }
                if let EventKind::Exile { target } = &e.kind {
                    alive.remove(target);
                }
                votes.clear();
            }
            EventKind::GameEnded { winner } => ended = Some(*winner),
            _ => {}
        }
    }
    let wolves = alive.iter().filter(|s| roles[s.0] == Role::Werewolf).count();
    let others = alive.len() - wolves;
    let expected = if wolves == 0 {
        Winner::Villagers
    } else if wolves >= others {
        Winner::Werewolves
    } else {
        return Err(format!("game ended with {wolves} wolves and {others} others alive"));
    };
    match ended {
        Some(w) if w == expected => Ok(()),
        other => Err(format!("winner {other:?}, expected {expected:?}")),
    }
}

/// Non-annotation events, i.e. the actual course of play.
pub fn gameplay_events(log: &GameLog) -> Vec<werewolf_core::game::GameEvent> {
    log.events.iter().filter(|e| !e.kind.is_annotation()).cloned().collect()
}

pub fn config(seed: u64) -> GameConfig {
    GameConfig::with_seed(seed)
}

/// Transport answering from a script; once the script is exhausted the last reply repeats.
pub struct ScriptedTransport {
    replies: Mutex<VecDeque<Result<HttpReply, TransportError>>>,
    last: Mutex<Option<Result<HttpReply, TransportError>>>,
    pub calls: AtomicUsize,
    pub requests: Mutex<Vec<(Vec<(String, String)>, Value)>>,
}

impl ScriptedTransport {
    pub fn new(replies: Vec<Result<HttpReply, TransportError>>) -> Arc<Self> {
        Arc::new(Self {
            replies: Mutex::new(replies.into()),
            last: Mutex::new(None),
            calls: AtomicUsize::new(0),
            requests: Mutex::new(Vec::new()),
        })
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Transport for ScriptedTransport {
    fn post(&self, _url: &str, headers: &[(String, String)], body: &Value) -> Result<HttpReply, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.requests.lock().unwrap().push((headers.to_vec(), body.clone()));
        let next = self.replies.lock().unwrap().pop_front();
        let mut last = self.last.lock().unwrap();
        match next {
            Some(r) => {
                *last = Some(r.clone());
                r
            }
            None => last.clone().expect("script is not empty"),
        }
    }
}

/// Transport that answers every request through a closure.
pub struct FnTransport<F>(pub F, pub AtomicUsize);

impl<F> FnTransport<F> {
    pub fn new(f: F) -> Arc<Self> {
        Arc::new(Self(f, AtomicUsize::new(0)))
    }
    pub fn calls(&self) -> usize {
        self.1.load(Ordering::SeqCst)
    }
}

impl<F> Transport for FnTransport<F>
where
    F: Fn(&Value) -> Result<HttpReply, TransportError> + Send + Sync,
{
    fn post(&self, _url: &str, _headers: &[(String, String)], body: &Value) -> Result<HttpReply, TransportError> {
        self.1.fetch_add(1, Ordering::SeqCst);
        (self.0)(body)
    }
}

pub fn ok_reply(content: &str) -> Result<HttpReply, TransportError> {
    let body = serde_json::json!({ "choices": [{ "message": { "role": "assistant", "content": content } }] });
    Ok(HttpReply { status: 200, body: body.to_string() })
}

pub fn status_reply(status: u16) -> Result<HttpReply, TransportError> {
    Ok(HttpReply { status, body: format!("status {status}") })
}

/// Records requested sleeps instead of sleeping.
#[derive(Default)]
pub struct FakeClock {
    pub sleeps: Mutex<Vec<Duration>>,
}

impl Sleeper for FakeClock {
    fn sleep(&self, d: Duration) {
        self.sleeps.lock().unwrap().push(d);
    }
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct Counts {
    pub actions: usize,
    pub fallbacks: usize,
}

/// Wraps a policy and counts its answers and how many of them were fallbacks.
pub struct Counting<P> {
    pub inner: P,
    pub counts: Arc<Mutex<Counts>>,
}

impl<P: Policy> Counting<P> {
    fn record<T>(&self, a: Action<T>) -> Action<T> {
        let mut c = self.counts.lock().unwrap();
        c.actions += 1;
        if a.fallback.is_some() {
            c.fallbacks += 1;
        }
        a
    }
}

impl<P: Policy> Policy for Counting<P> {
    fn bid(&mut self, view: &AgentView) -> Action<u8> {
        let a = self.inner.bid(view);
        self.record(a)
    }
    fn speak(&mut self, view: &AgentView) -> Action<Utterance> {
        let a = self.inner.speak(view);
        self.record(a)
    }
    fn vote(&mut self, view: &AgentView) -> Action<String> {
        let a = self.inner.vote(view);
        self.record(a)
    }
    fn night_action(&mut self, view: &AgentView) -> Action<String> {
        let a = self.inner.night_action(view);
        self.record(a)
    }
    fn summarize(&mut self, view: &AgentView) -> Action<String> {
        let a = self.inner.summarize(view);
        self.record(a)
    }
}
