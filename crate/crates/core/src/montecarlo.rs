//! Debate-free baseline simulation with an optional auto-believed seer.
//!
//! Eight players, two werewolves, one doctor and optionally one seer. Nobody talks: every vote
//! is a uniform draw, and werewolves never vote for each other. When the seer is included and
//! finds a werewolf, that werewolf is exiled at once and the day is skipped.
//!
//! Sets are `u8` bitmasks over seats `0..8`. Every "sample" is a uniform draw from the stated set.
//!
//! Line-by-line correspondence with the reference procedure, as implemented in
//! [`simulate_game_traced`]:
//!
//! | step | statement |
//! |---|---|
//! | players | `players = ALL` |
//! | werewolves | `wolves = sample 2 from players` |
//! | villagers | `villagers = players \ wolves` |
//! | doctor | `doctor = sample from villagers` |
//! | seer | `seer = sample from villagers \ {doctor}` if included |
//! | investigated | `investigated = {}` |
//! | loop | `while |wolves| < |villagers| and |wolves| > 0` |
//! | night | `victim = sample from villagers`, `save = sample from players` |
//! | save guard | remove victim from villagers and players `if doctor ∉ villagers or victim ≠ save` |
//! | seer guard | investigate only `if seer included and seer ∈ players` |
//! | investigation | `target = sample from players \ (investigated ∪ {seer})`, add to investigated |
//! | auto exile | `if target ∈ wolves`: remove from players and wolves, `continue` |
//! | wolf vote | `vote = sample from players \ wolves` |
//! | other vote | `vote = sample from players \ {voter}` |
//! | majority | exile the top target `if count > ½ · Σ votes`, removing it from all sets |
//! | winner | `|wolves| ≥ |villagers|` → werewolves, else villagers |

use serde::{Deserialize, Serialize};
use thiserror::Error;

use rand::Rng;

use crate::exec::{self, Exec};
use crate::game::Winner;
use crate::rng::{self, GameRng};

pub const PLAYERS: u8 = 8;
pub const ALL: u8 = 0xFF;
/// Hard cap on loop iterations. Reaching it is an internal error.
pub const ROUND_CAP: u32 = 10_000;
/// Games per independently seeded chunk in [`estimate_win_rate`].
pub const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McState {
    pub players: u8,
    pub wolves: u8,
    pub villagers: u8,
    pub doctor: u8,
    pub seer: Option<u8>,
    pub investigated: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McResult {
    pub winner: Winner,
    pub rounds: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum McError {
    #[error("simulation exceeded {0} rounds")]
    RoundCap(u32),
}

/// One observable step of a simulated game, for checking sampling domains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McStep {
    Setup { state: McState },
    Night { before: McState, victim: u8, save: u8, removed: bool },
    Investigate { before: McState, target: u8, exiled: bool },
    Vote { before: McState, voter: u8, target: u8 },
    Tally { before: McState, exiled: Option<u8>, top_count: u32, cast: u32 },
}

fn bit(i: u8) -> u8 {
    1 << i
}

fn contains(set: u8, i: u8) -> bool {
    set & bit(i) != 0
}

/// Uniform draw from a non-empty bitmask.
fn sample(set: u8, rng: &mut GameRng) -> u8 {
    debug_assert!(set != 0);
    let k = rng.random_range(0..set.count_ones());
    let mut rest = set;
    for _ in 0..k {
        rest &= rest - 1;
    }
    rest.trailing_zeros() as u8
}

pub fn simulate_game(include_seer: bool, rng: &mut GameRng) -> Result<McResult, McError> {
    simulate_game_traced(include_seer, rng, |_| {})
}

/// [`simulate_game`] reporting every draw to `trace`.
pub fn simulate_game_traced(
    include_seer: bool,
    rng: &mut GameRng,
    mut trace: impl FnMut(McStep),
) -> Result<McResult, McError> {
    let mut players = ALL;
    let first = sample(players, rng);
    let second = sample(players & !bit(first), rng);
    let mut wolves = bit(first) | bit(second);
    let mut villagers = players & !wolves;
    let doctor = sample(villagers, rng);
    let seer = include_seer.then(|| sample(villagers & !bit(doctor), rng));
    let mut investigated = 0u8;

    let snapshot = |players, wolves, villagers, investigated| McState { players, wolves, villagers, doctor, seer, investigated };
    trace(McStep::Setup { state: snapshot(players, wolves, villagers, investigated) });

    let mut rounds = 0u32;
    while wolves.count_ones() < villagers.count_ones() && wolves.count_ones() > 0 {
        if rounds >= ROUND_CAP {
            return Err(McError::RoundCap(ROUND_CAP));
        }
        rounds += 1;

        // Night.
        let before = snapshot(players, wolves, villagers, investigated);
        let victim = sample(villagers, rng);
        let save = sample(players, rng);
        let removed = !contains(villagers, doctor) || victim != save;
        if removed {
            villagers &= !bit(victim);
            players &= !bit(victim);
        }
        trace(McStep::Night { before, victim, save, removed });

        // Seer.
        if let Some(s) = seer.filter(|s| contains(players, *s)) {
            let domain = players & !(investigated | bit(s));
            if domain != 0 {
                let before = snapshot(players, wolves, villagers, investigated);
                let target = sample(domain, rng);
                investigated |= bit(target);
                let exiled = contains(wolves, target);
                trace(McStep::Investigate { before, target, exiled });
                if exiled {
                    players &= !bit(target);
                    wolves &= !bit(target);
                    continue;
                }
            }
        }

        // Day.
        let before = snapshot(players, wolves, villagers, investigated);
        let mut votes = [0u32; PLAYERS as usize];
        for voter in 0..PLAYERS {
            if !contains(players, voter) {
                continue;
            }
            let domain = if contains(wolves, voter) { players & !wolves } else { players & !bit(voter) };
            let target = sample(domain, rng);
            votes[target as usize] += 1;
            trace(McStep::Vote { before, voter, target });
        }
        let cast: u32 = votes.iter().sum();
        let (exile, count) = votes
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(i, c)| (i as u8, *c))
            .unwrap();
        let exiled = (2 * count > cast).then_some(exile);
        trace(McStep::Tally { before, exiled, top_count: count, cast });
        if let Some(e) = exiled {
            players &= !bit(e);
            wolves &= !bit(e);
            villagers &= !bit(e);
        }
    }

    let winner = if wolves.count_ones() >= villagers.count_ones() { Winner::Werewolves } else { Winner::Villagers };
    Ok(McResult { winner, rounds })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WinRateEstimate {
    pub games: usize,
    pub villager_wins: usize,
    pub rate: f64,
    /// Half-width of the 95% normal-approximation binomial interval.
    pub ci95: f64,
}

impl WinRateEstimate {
    pub fn from_counts(games: usize, villager_wins: usize) -> Self {
        let rate = villager_wins as f64 / games as f64;
        let ci95 = 1.96 * (rate * (1.0 - rate) / games as f64).sqrt();
        Self { games, villager_wins, rate, ci95 }
    }
}

/// Runs `n` games. Games are split into chunks of [`CHUNK`]; chunk `k` uses stream `k` of
/// `seed`, so the result is identical under every execution strategy.
pub fn estimate_win_rate(n: usize, include_seer: bool, seed: u64, exec: Exec) -> Result<WinRateEstimate, McError> {
    assert!(n >= 1, "at least one game");
    let chunks = n.div_ceil(CHUNK);
    let per_chunk = exec::map_range(exec, chunks, |k| -> Result<usize, McError> {
        let mut rng = rng::stream(seed, k as u64);
        let games = CHUNK.min(n - k * CHUNK);
        let mut wins = 0;
        for _ in 0..games {
            if simulate_game(include_seer, &mut rng)?.winner == Winner::Villagers {
                wins += 1;
            }
        }
        Ok(wins)
    });
    let mut wins = 0;
    for w in per_chunk {
        wins += w?;
    }
    Ok(WinRateEstimate::from_counts(n, wins))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_game_rate_is_zero_or_one() {
        for seed in 0..20 {
            let est = estimate_win_rate(1, false, seed, Exec::Sequential).unwrap();
            assert!(est.rate == 0.0 || est.rate == 1.0);
        }
    }

    #[test]
    fn sample_covers_set_uniformly() {
        let mut rng = rng::stream(0, 0);
        let set = 0b1010_0110u8;
        let mut counts = [0u32; 8];
        for _ in 0..40_000 {
            counts[sample(set, &mut rng) as usize] += 1;
        }
        for i in 0..8u8 {
            if contains(set, i) {
                assert!((counts[i as usize] as f64 - 10_000.0).abs() < 500.0);
            } else {
                assert_eq!(counts[i as usize], 0);
            }
        }
    }

    #[test]
    fn results_match_terminal_predicate() {
        let mut rng = rng::stream(3, 0);
        for _ in 0..500 {
            let mut last = None;
            let r = simulate_game_traced(true, &mut rng, |s| last = Some(s)).unwrap();
            assert!(r.rounds >= 1);
        }
    }

    #[test]
    fn strategies_agree() {
        let a = estimate_win_rate(10_000, true, 7, Exec::Sequential).unwrap();
        let b = estimate_win_rate(10_000, true, 7, Exec::Parallel).unwrap();
        assert_eq!(a, b);
    }
}
