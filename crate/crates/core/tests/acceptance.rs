//! Acceptance checks. Runs without the libtest harness and prints one `PASS`/`FAIL` line per
//! criterion; exits nonzero if any fails.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::process::ExitCode;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::Rng;
use serde_json::Value;

use werewolf_core::agents::{HeuristicPolicy, Policy, RandomPolicy};
use werewolf_core::analytics::{self, RevealEvent, RevealOutcome, SeerRevealMetrics, StructuredDetector, VoteTally};
use werewolf_core::engine::{arbitrate_turn, run_game, Bid, GameMaster};
use werewolf_core::exec::Exec;
use werewolf_core::game::{
    EventKind, EventPhase, GameConfig, GameEvent, Player, Role, RoleClaim, Seat, Winner,
};
use werewolf_core::llm::{ChatClient, ChatMessage, ChatRequest, LlmPolicy, LlmSettings, ProviderProfile, RetryPolicy, TemplateSet};
use werewolf_core::log::{GameLog, LogHeader, FORMAT_VERSION};
use werewolf_core::montecarlo::{estimate_win_rate, simulate_game_traced, McStep};
use werewolf_core::rng;
use werewolf_core::tournament::{self, RunOptions};

use common::*;

/// Villager wins of the with-seer baseline in 100,000 games at seed 1 (rate 0.4694). A change
/// here means the simulation changed.
const SEER_WINS_SEED1: usize = 46_940;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn mc_baseline() -> Check {
    let t = Instant::now();
    let est = estimate_win_rate(100_000, false, 1, Exec::Parallel).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    ensure((0.009..=0.015).contains(&est.rate), || format!("rate {} outside [0.009, 0.015]", est.rate))?;
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    let again = estimate_win_rate(100_000, false, 1, Exec::Sequential).map_err(|e| e.to_string())?;
    ensure(again.rate == est.rate, || format!("seed 1 reproduced {} then {}", est.rate, again.rate))?;
    Ok(format!("rate {:.5} ± {:.5} in {elapsed:.2?}", est.rate, est.ci95))
}

/// Replays traced games and checks every draw against its sampling domain.
fn check_domains(games: usize, seed: u64) -> Result<(), String> {
    let mut rng = rng::stream(seed, 0);
    for g in 0..games {
        let mut steps = Vec::new();
        let result = simulate_game_traced(true, &mut rng, |s| steps.push(s)).map_err(|e| e.to_string())?;
        let mut skipped_day = false;
        for s in &steps {
            let fail = |what: &str| Err(format!("game {g}: {what} in {s:?}"));
            match *s {
                McStep::Setup { state } => {
                    if state.wolves.count_ones() != 2 || state.villagers.count_ones() != 6 || state.players != 0xFF {
                        return fail("bad setup");
                    }
                    if state.wolves & (1 << state.doctor) != 0 || state.seer.is_some_and(|x| x == state.doctor || state.wolves & (1 << x) != 0) {
                        return fail("special role on a wolf or doubled");
                    }
                }
                McStep::Night { before, victim, save, removed } => {
                    skipped_day = false;
                    if before.villagers & (1 << victim) == 0 || before.players & (1 << save) == 0 {
                        return fail("night draw outside domain");
                    }
                    let doctor_alive = before.villagers & (1 << before.doctor) != 0;
                    if removed != (!doctor_alive || victim != save) {
                        return fail("save guard");
                    }
                }
                McStep::Investigate { before, target, exiled } => {
                    let seer = before.seer.ok_or("investigation without seer")?;
                    if before.players & (1 << seer) == 0 {
                        return fail("dead seer investigated");
                    }
                    let domain = before.players & !(before.investigated | (1 << seer));
                    if domain & (1 << target) == 0 {
                        return fail("investigation outside domain");
                    }
                    if exiled != (before.wolves & (1 << target) != 0) {
                        return fail("auto exile mismatch");
                    }
                    skipped_day = exiled;
                }
                McStep::Vote { before, voter, target } => {
                    if skipped_day {
                        return fail("vote after auto exile");
                    }
                    let domain = if before.wolves & (1 << voter) != 0 { before.players & !before.wolves } else { before.players & !(1 << voter) };
                    if domain & (1 << target) == 0 || before.players & (1 << voter) == 0 {
                        return fail("vote outside domain");
                    }
                }
                McStep::Tally { before, exiled, top_count, cast } => {
                    if cast != before.players.count_ones() {
                        return fail("not everyone voted");
                    }
                    if exiled.is_some() != (2 * top_count > cast) {
                        return fail("majority rule");
                    }
                }
            }
        }
        let _ = result;
    }
    Ok(())
}

fn mc_seer() -> Check {
    check_domains(2_000, 11)?;
    let est = estimate_win_rate(100_000, true, 1, Exec::Parallel).map_err(|e| e.to_string())?;
    ensure(est.villager_wins == SEER_WINS_SEED1, || format!("measured {} wins but frozen {SEER_WINS_SEED1}", est.villager_wins))?;
    Ok(format!("domains hold over 2000 traced games; rate {:.5} (frozen); the published claim is 1.0", est.rate))
}

fn oracle_entropy(counts: &[u32]) -> f64 {
    let total: u32 = counts.iter().sum();
    let mut h = 0.0;
    for &c in counts {
        if c > 0 {
            let p = c as f64 / total as f64;
            h -= p * p.log2();
        }
    }
    h
}

fn entropy_identities() -> Check {
    for n in 1..=16u32 {
        let uniform = analytics::entropy_of_counts(vec![3; n as usize]).map_err(|e| e.to_string())?;
        ensure((uniform - (n as f64).log2()).abs() <= 1e-12, || format!("uniform over {n}: {uniform}"))?;
        let unanimous = analytics::entropy_of_counts(vec![n]).map_err(|e| e.to_string())?;
        ensure(unanimous.abs() <= 1e-12, || format!("unanimous {n}: {unanimous}"))?;
    }
    let mut rng = rng::stream(5, 0);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let k = rng.random_range(1..=8);
        let counts: Vec<u32> = (0..k).map(|_| rng.random_range(0..=8)).collect();
        if counts.iter().sum::<u32>() == 0 {
            continue;
        }
        let votes: BTreeMap<Seat, u32> = counts.iter().enumerate().filter(|(_, c)| **c > 0).map(|(i, c)| (Seat(i), *c)).collect();
        let tally = VoteTally { round: 0, debate_index: 0, counts: votes };
        let got = analytics::entropy(&tally).map_err(|e| e.to_string())?;
        worst = worst.max((got - oracle_entropy(&counts)).abs());
    }
    ensure(worst <= 1e-12, || format!("max deviation {worst:e}"))?;
    Ok(format!("identities exact; max oracle deviation {worst:e} over 10000 tallies"))
}

fn arbitration() -> Check {
    let mut rng = rng::stream(17, 0);
    let mut draw = rng::stream(18, 0);
    for case in 0..10_000 {
        let n = rng.random_range(1..=8usize);
        let mut bids: Vec<Bid> = (0..n).map(|i| Bid { level: rng.random_range(0..=3), bidder: Seat(i) }).collect();
        let winner = rng.random_range(0..n);
        bids[winner].level = 4;
        let mentioned = (0..n).filter(|_| rng.random_bool(0.5)).map(Seat).collect();
        let got = arbitrate_turn(&bids, &mentioned, 2, &mut draw);
        ensure(got == Seat(winner), || format!("case {case}: unique max {winner} but {got} chosen"))?;
    }
    let bids = [Bid { level: 3, bidder: Seat(0) }, Bid { level: 3, bidder: Seat(1) }, Bid { level: 1, bidder: Seat(2) }];
    let mentioned = [Seat(1)].into_iter().collect();
    let mut tie = rng::stream(19, 0);
    let hits = (0..10_000).filter(|_| arbitrate_turn(&bids, &mentioned, 2, &mut tie) == Seat(1)).count();
    let freq = hits as f64 / 10_000.0;
    ensure((0.657..=0.677).contains(&freq), || format!("mentioned frequency {freq}"))?;
    Ok(format!("0 violations in 10000 unique-max cases; mentioned tie frequency {freq:.4}"))
}

fn soak() -> Check {
    let t = Instant::now();
    let mut villager_wins = 0;
    for g in 0..1000u64 {
        let log = run_game(config(g), random_agents(g, 8)).map_err(|e| format!("game {g}: {e}"))?;
        check_log(&log).map_err(|e| format!("game {g}: {e}"))?;
        if log.winner() == Some(Winner::Villagers) {
            villager_wins += 1;
        }
    }
    let elapsed = t.elapsed();
    let rate = villager_wins as f64 / 1000.0;
    ensure(rate < 0.05, || format!("villager win rate {rate}"))?;
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!("1000 games clean, villager win rate {rate:.3}, {elapsed:.2?}"))
}

fn replay() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for seed in [3u64, 7, 42] {
        let outcome = GameMaster::new(config(seed), heuristic_agents(seed, 8)).and_then(GameMaster::run).map_err(|e| e.to_string())?;
        let live = outcome.state.clone();
        let log = outcome.into_log("heuristic", "heuristic");
        let path = dir.path().join(format!("{seed}.jsonl"));
        log.write(&path).map_err(|e| e.to_string())?;
        let (read, warnings) = GameLog::read(&path).map_err(|e| e.to_string())?;
        ensure(warnings.is_empty(), || format!("seed {seed}: {warnings:?}"))?;
        let replayed = read.replay().map_err(|e| format!("seed {seed}: {e}"))?;
        ensure(replayed == live, || format!("seed {seed}: replayed state differs"))?;

        let again = GameMaster::new(config(seed), heuristic_agents(seed, 8)).and_then(GameMaster::run).map_err(|e| e.to_string())?;
        let bytes = fs::read(&path).map_err(|e| e.to_string())?;
        ensure(again.into_log("heuristic", "heuristic").to_jsonl().into_bytes() == bytes, || format!("seed {seed}: rerun bytes differ"))?;
    }
    Ok("3 logs replay to the live state; reruns are byte-identical".into())
}

fn synthetic_isolation() -> Check {
    for seed in 0..20u64 {
        let on = run_game(GameConfig { synthetic_votes: true, ..config(seed) }, heuristic_agents(seed, 8)).map_err(|e| e.to_string())?;
        let off = run_game(GameConfig { synthetic_votes: false, ..config(seed) }, heuristic_agents(seed, 8)).map_err(|e| e.to_string())?;
        ensure(on.events.iter().any(|e| matches!(e.kind, EventKind::SyntheticTally { .. })), || format!("seed {seed}: no tallies"))?;
        ensure(gameplay_events(&on) == gameplay_events(&off), || format!("seed {seed}: gameplay differs"))?;
    }
    Ok("20 seeded games identical with synthetic votes on and off".into())
}

pub fn seer_fixture() -> Vec<GameLog> {
    let roles = [Role::Seer, Role::Werewolf, Role::Werewolf, Role::Villager, Role::Doctor, Role::Villager, Role::Villager, Role::Villager];
    let cfg = config(0);
    let header = LogHeader {
        format_version: FORMAT_VERSION,
        players: roles.iter().enumerate().map(|(i, r)| Player { name: cfg.name_pool[i].clone(), role: *r }).collect(),
        config: cfg,
        villager_model: "scripted".into(),
        werewolf_model: "scripted".into(),
    };
    let line = |round: u32, speaker: usize, claims: &[(usize, Role)]| {
        GameEvent::public(
            round,
            EventPhase::Debate,
            EventKind::DebateTurn {
                speaker: Seat(speaker),
                utterance: "...".into(),
                bids: BTreeMap::new(),
                claims: claims.iter().map(|(s, r)| RoleClaim { subject: Seat(*s), role: *r }).collect(),
            },
        )
    };
    let exile = |round: u32, target: usize| GameEvent::public(round, EventPhase::Vote, EventKind::Exile { target: Seat(target) });
    let game = |events: Vec<GameEvent>| GameLog { header: header.clone(), events };
    vec![
        // Wolf 1 named twice in round 0 (one reveal) and exiled; wolf 2 named in round 1 and the seer exiled.
        game(vec![
            line(0, 0, &[(1, Role::Werewolf)]),
            line(0, 3, &[(2, Role::Werewolf)]),
            line(0, 0, &[(1, Role::Werewolf)]),
            exile(0, 1),
            line(1, 0, &[(2, Role::Werewolf)]),
            exile(1, 0),
        ]),
        // A villager vouched for in round 1; wolf 2 named in round 2 with nobody exiled.
        game(vec![line(1, 0, &[(3, Role::Villager)]), exile(1, 5), line(2, 0, &[(2, Role::Werewolf)])]),
        // The seer outs itself in round 2 and is exiled.
        game(vec![line(0, 4, &[(4, Role::Doctor)]), line(2, 0, &[(0, Role::Seer)]), exile(2, 0)]),
    ]
}

fn seer_oracle() -> Check {
    let logs = seer_fixture();
    let per_game: Vec<Vec<RevealEvent>> = logs.iter().map(|l| analytics::detect_reveals(l, &StructuredDetector).0).collect();
    ensure(per_game.iter().map(Vec::len).collect::<Vec<_>>() == vec![3, 2, 1], || format!("raw reveals {per_game:?}"))?;
    ensure(per_game[0][0].outcome == RevealOutcome::ExiledTarget && per_game[0][2].outcome == RevealOutcome::ExiledRevealer, || "outcomes".into())?;
    let m = analytics::seer_metrics(&per_game);
    // 5 unique reveals in 3 games; first reveals in rounds 0, 1, 2; 3 name a wolf; of those 1
    // exiled the wolf and 1 exiled the seer.
    let want = SeerRevealMetrics {
        games: 3,
        reveals_per_game: 5.0 / 3.0,
        first_reveal_round: Some(1.0),
        unmasked_wolf_pct: Some(100.0 * 3.0 / 5.0),
        believed_pct: Some(100.0 * 1.0 / 3.0),
        backfired_pct: Some(100.0 * 1.0 / 3.0),
    };
    ensure(m == want, || format!("got {m:?}, want {want:?}"))?;
    Ok("reveals/game 1.667, first round 1.0, unmasked 60%, believed 33.3%, backfired 33.3%".into())
}

fn profile() -> ProviderProfile {
    ProviderProfile { endpoint: "http://mock/v1/chat".into(), header: "Authorization".into(), model: "mock".into(), api_key_env: None }
}

fn llm_robustness() -> Check {
    let transport = FnTransport::new(|_body: &Value| ok_reply("lorem {{ ipsum ] \"bid\": eleven"));
    let client = ChatClient::new(profile(), transport.clone());
    let counts = Arc::new(Mutex::new(Counts::default()));
    let agents: Vec<Box<dyn Policy>> = (0..8)
        .map(|i| {
            let inner = LlmPolicy::new(client.clone(), TemplateSet::default(), LlmSettings::default(), i);
            Box::new(Counting { inner, counts: counts.clone() }) as Box<dyn Policy>
        })
        .collect();
    let log = run_game(config(5), agents).map_err(|e| e.to_string())?;
    check_log(&log)?;
    log.replay().map_err(|e| e.to_string())?;
    let c = *counts.lock().unwrap();
    ensure(c.actions > 0 && c.fallbacks == c.actions, || format!("{c:?}"))?;
    let per_action = 1 + LlmSettings::default().reasks as usize;
    ensure(transport.calls() == per_action * c.actions, || format!("{} requests for {} actions", transport.calls(), c.actions))?;

    let script = ScriptedTransport::new(vec![status_reply(429), status_reply(429), ok_reply("fine")]);
    let clock = Arc::new(FakeClock::default());
    let retry = RetryPolicy { max_attempts: 4, base_delay_ms: 250, max_delay_ms: 10_000 };
    let client = ChatClient::new(profile(), script.clone()).with_sleeper(clock.clone()).with_retry(retry);
    let req = ChatRequest { endpoint: "http://mock/v1/chat".into(), model: "mock".into(), messages: vec![ChatMessage::user("hi")], temperature: 1.0, max_tokens: 16 };
    let text = client.complete(&req).map_err(|e| e.to_string())?;
    let sleeps = clock.sleeps.lock().unwrap().clone();
    ensure(text == "fine" && script.calls() == 3, || format!("{text:?} after {} calls", script.calls()))?;
    ensure(sleeps == vec![Duration::from_millis(250), Duration::from_millis(500)], || format!("sleeps {sleeps:?}"))?;
    Ok(format!("{} actions all fell back legally; 429,429,200 slept {sleeps:?}", c.actions))
}

fn tournament_accounting() -> Check {
    let models: Vec<String> = ["random", "heuristic", "heuristic-b"].map(String::from).to_vec();
    let schedule = tournament::schedule_round_robin(&models, 10, 5, 2024).map_err(|e| e.to_string())?;
    for m in &models {
        let side = |f: fn(&tournament::Matchup) -> &String| -> usize {
            schedule.matchups.iter().filter(|x| !x.is_selfplay() && f(x) == m).map(|x| x.games).sum()
        };
        let (v, w) = (side(|x| &x.villager_model), side(|x| &x.werewolf_model));
        ensure(v == w && v == 10, || format!("{m}: {v} villager-side vs {w} werewolf-side games"))?;
    }
    let factory = |model: &str, _seat: Seat, _role: Role, seed: u64| -> Result<Box<dyn Policy>, String> {
        Ok(match model {
            "random" => Box::new(RandomPolicy::new(seed)),
            "heuristic" => Box::new(HeuristicPolicy::new(seed)),
            "heuristic-b" => Box::new(HeuristicPolicy::new(seed ^ 0x5eed)),
            other => return Err(format!("unknown model {other}")),
        })
    };
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let summary = tournament::run_tournament(&schedule, &config(0), &factory, dir.path(), RunOptions::default()).map_err(|e| e.to_string())?;
    ensure(summary.crashes.is_empty(), || format!("crashes {:?}", summary.crashes))?;

    let mut recount: BTreeMap<(String, String), (usize, usize)> = BTreeMap::new();
    let mut files = 0;
    for entry in walk(&dir.path().join("logs"))? {
        if entry.extension().is_some_and(|x| x == "jsonl") {
            files += 1;
            let text = fs::read_to_string(&entry).map_err(|e| e.to_string())?;
            let mut lines = text.lines().map(|l| serde_json::from_str::<Value>(l).unwrap());
            let header = lines.next().ok_or("empty log")?;
            let key = (header["villager_model"].as_str().unwrap().to_string(), header["werewolf_model"].as_str().unwrap().to_string());
            let winner = lines.filter(|v| v["kind"]["type"] == "GameEnded").map(|v| v["kind"]["winner"].as_str().unwrap().to_string()).next_back();
            let cell = recount.entry(key).or_default();
            cell.0 += 1;
            if winner.as_deref() == Some("Villagers") {
                cell.1 += 1;
            }
        }
    }
    ensure(files == 45, || format!("{files} logs"))?;

    let csv = fs::read_to_string(&summary.win_matrix_path).map_err(|e| e.to_string())?;
    let mut rows = csv.lines();
    ensure(rows.next() == Some("villager_model,werewolf_model,games,wins,ratio"), || "csv header".into())?;
    let mut from_csv = BTreeMap::new();
    for row in rows {
        let f: Vec<&str> = row.split(',').collect();
        from_csv.insert((f[0].to_string(), f[1].to_string()), (f[2].parse::<usize>().unwrap(), f[3].parse::<usize>().unwrap()));
    }
    ensure(from_csv == recount, || format!("csv {from_csv:?} vs recount {recount:?}"))?;
    Ok(format!("45 logs, 9 matchups, role-fair, {} win-matrix cells match the recount", from_csv.len()))
}

fn walk(dir: &std::path::Path) -> Result<Vec<std::path::PathBuf>, String> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| e.to_string())? {
        let p = entry.map_err(|e| e.to_string())?.path();
        if p.is_dir() {
            out.extend(walk(&p)?);
        } else {
            out.push(p);
        }
    }
    Ok(out)
}

fn main() -> ExitCode {
    let checks: [(&str, fn() -> Check); 10] = [
        ("monte carlo baseline without seer", mc_baseline),
        ("monte carlo with seer", mc_seer),
        ("entropy identities", entropy_identities),
        ("bid arbitration", arbitration),
        ("engine soak", soak),
        ("determinism and replay", replay),
        ("synthetic-vote non-interference", synthetic_isolation),
        ("seer metrics oracle", seer_oracle),
        ("llm policy robustness", llm_robustness),
        ("tournament accounting", tournament_accounting),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS [{}] {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{}] {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
