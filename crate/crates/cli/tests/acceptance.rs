//! Acceptance suite: one PASS/FAIL line per criterion.

#[path = "../../core/tests/common/oracle.rs"]
mod oracle;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use electanon_core::codec::{factorial, rank, rank_cids, unrank};
use electanon_core::crypto::{Crypto, Digest, IdentityCommitment};
use electanon_core::election::{ElectionError, ElectionMachine, ElectionParams, Phase};
use electanon_core::ledger::{Ledger, Outcome};
use electanon_core::merkle::{build_tree, hash_leaf_list, ForestMode};
use electanon_core::scenario::{run, BallotSpec, Behavior, ProposerSpec, Run, RunOptions, Scenario, VoterSpec};
use electanon_core::tally::{borda_result, tideman_result, TallyMethod, TallyStorage};
use num_bigint::{BigUint, RandBigInt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        // NaN must fail too, so test the condition rather than its negation.
        if $cond {
        } else {
            return Err(format!($($msg)+));
        }
    };
}

fn within(elapsed: Duration, limit_s: u64) -> Result<(), String> {
    if elapsed > Duration::from_secs(limit_s) {
        Err(format!("took {:.1}s, limit {limit_s}s", elapsed.as_secs_f64()))
    } else {
        Ok(())
    }
}

fn scenario(voters: usize, candidates: usize, height: usize, seed: u64) -> Scenario {
    Scenario {
        params: ElectionParams {
            tree_height: height,
            max_proposal_count: candidates as u32,
            proposal_lifetime: 30,
            commit_lifetime: 30,
            reveal_lifetime: 30,
            ..Default::default()
        },
        voters: VoterSpec { count: voters, behaviors: BTreeMap::new() },
        proposers: (0..candidates)
            .map(|i| ProposerSpec { text: format!("proposal {i}"), no_show: false })
            .collect(),
        ballots: BallotSpec::Random,
        seed,
        gas_table: None,
        gas_cap: None,
        registration_batch: None,
    }
}

fn go(s: &Scenario) -> Result<Run, String> {
    run(s, RunOptions::default()).map_err(|e| e.to_string())
}

fn r_squared(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if syy == 0.0 {
        return 1.0;
    }
    sxy * sxy / (sxx * syy)
}

fn c1_rank_bijection() -> Verdict {
    let t = Instant::now();
    let mut exhaustive = 0u64;
    for n in 1..=8usize {
        let total = factorial(n);
        let mut seen = std::collections::HashSet::new();
        let mut r = BigUint::from(0u32);
        while r < total {
            let p = unrank(&r, n).map_err(|e| e.to_string())?;
            ensure!(rank(&p).value() == &r, "n={n} rank {r} does not round-trip");
            ensure!(seen.insert(p.into_vec()), "n={n} rank {r} repeats a permutation");
            r += 1u32;
            exhaustive += 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in [20usize, 50] {
        let bound = factorial(n);
        for _ in 0..1000 {
            let r = rng.gen_biguint_below(&bound);
            let p = unrank(&r, n).map_err(|e| e.to_string())?;
            ensure!(rank(&p).into_value() == r, "n={n} rank {r} does not round-trip");
        }
    }
    within(t.elapsed(), 10)?;
    Ok(format!("{exhaustive} exhaustive + 2000 random round-trips in {:.2}s", t.elapsed().as_secs_f64()))
}

fn storage(method: TallyMethod, n: usize, profile: &oracle::Profile) -> TallyStorage {
    let mut ts = TallyStorage::new();
    for b in profile {
        method.rule().tally(rank_cids(b).unwrap().value(), n, &mut ts).unwrap();
    }
    ts
}

fn c2_tally_oracles() -> Verdict {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for i in 0..1000 {
        let n = rng.gen_range(1..=5);
        let v = rng.gen_range(0..=50);
        let p = oracle::random_profile(&mut rng, n, v);
        let b = borda_result(n, &storage(TallyMethod::Borda, n, &p));
        ensure!(b == oracle::borda(n, &p), "profile {i}: borda {b:?} vs oracle {:?}", oracle::borda(n, &p));
        let tm = tideman_result(n, &storage(TallyMethod::Tideman, n, &p));
        let o = oracle::ranked_pairs(n, &p);
        ensure!(tm == o, "profile {i}: tideman {tm:?} vs oracle {o:?}");
    }
    within(t.elapsed(), 30)?;
    Ok(format!("1000/1000 profiles agree in {:.2}s", t.elapsed().as_secs_f64()))
}

fn c3_condorcet() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut found, mut drawn) = (0, 0);
    while found < 200 {
        drawn += 1;
        ensure!(drawn < 100_000, "only {found} Condorcet profiles in {drawn} draws");
        let n = rng.gen_range(2..=5);
        let v = rng.gen_range(1..=50);
        let p = oracle::random_profile(&mut rng, n, v);
        let Some(c) = oracle::condorcet_winner(n, &p) else { continue };
        found += 1;
        let got = tideman_result(n, &storage(TallyMethod::Tideman, n, &p));
        ensure!(got == Some(c), "Condorcet winner {c} but tideman returned {got:?}");
    }
    Ok(format!("200/200 Condorcet winners elected ({drawn} profiles drawn)"))
}

fn c4_end_to_end() -> Verdict {
    let t = Instant::now();
    let mut lines = Vec::new();
    for tally in [TallyMethod::Borda, TallyMethod::Tideman] {
        let mut s = scenario(40, 10, 6, 4);
        s.params.tally_method = tally;
        let r = go(&s)?.report;
        ensure!(r.winner.is_some(), "{tally:?}: no winner");
        ensure!(r.transactions.accepted_for("commitVote") == 40, "{tally:?}: commits {}", r.transactions.accepted_for("commitVote"));
        ensure!(r.transactions.accepted_for("revealVote") == 40, "{tally:?}: reveals {}", r.transactions.accepted_for("revealVote"));
        ensure!(r.transactions.rejected_total() == 0, "{tally:?}: rejected {:?}", r.transactions.rejected);
        ensure!(r.audit.plaintext_vids_before_reveal == 0, "{tally:?}: VIDs leaked before Reveal");
        ensure!(r.audit.identity_commitments_from_commit == 0, "{tally:?}: IDCs seen from Commit on");
        ensure!(r.audit.recomputation_agrees, "{tally:?}: self-tally disagrees");
        lines.push(format!("{tally:?} winner {}", r.winner.unwrap()));
    }
    within(t.elapsed(), 20)?;
    Ok(format!("40 voters x 10 candidates: {}", lines.join(", ")))
}

fn c5_security() -> Verdict {
    let mut s = scenario(10, 4, 4, 5);
    s.voters.behaviors = BTreeMap::from([
        (1, Behavior::DoubleVote),
        (2, Behavior::Ineligible),
        (3, Behavior::WrongReveal),
        (4, Behavior::InvalidBallot),
        (5, Behavior::Late),
    ]);
    let run = go(&s)?;
    let r = &run.report;
    let rej = &r.transactions.rejected;
    ensure!(r.transactions.rejected_for("DoubleVote") == 1, "DoubleVote rejections: {rej:?}");
    ensure!(r.transactions.rejected_for("InvalidProof") == 1, "InvalidProof rejections: {rej:?}");
    ensure!(r.transactions.rejected_for("HashMismatch") == 1, "HashMismatch rejections: {rej:?}");
    ensure!(r.transactions.rejected_for("InvalidBallot") == 1, "InvalidBallot rejections: {rej:?}");
    // honest 0,6..9 plus the double voter's first ballot
    ensure!(r.tally.ballots() == 6, "tallied {} ballots, expected 6", r.tally.ballots());
    ensure!(r.audit.tallied_matches_revealed, "tally differs from revealed ballots");

    let commit = r.span(Phase::Commit).ok_or("no Commit span")?;
    let late: Vec<_> = run
        .ledger
        .transactions()
        .iter()
        .filter(|t| t.function == "commitVote" && t.outcome == Outcome::Rejected { reason: "WrongPhase".into() })
        .collect();
    ensure!(
        late.len() == 1 && Some(late[0].block) == commit.end_block,
        "late commit not rejected at the Commit deadline"
    );

    // authority lockout and late calls at and after each deadline
    let c = Crypto::default();
    let mut ledger = Ledger::default();
    let ea = c.address(b"ea");
    let params = ElectionParams { tree_height: 2, max_proposal_count: 3, ..Default::default() };
    let mut m = ElectionMachine::setup(&mut ledger, ea, params).map_err(|e| e.to_string())?;
    let idc = c.commit_identity(&c.gen_identity(b"v").unwrap());
    let root = build_tree(&c, &[idc.0], 2).unwrap().root();
    m.add_voters(&mut ledger, ea, &[idc], root).map_err(|e| e.to_string())?;
    let props = [c.address(b"p1"), c.address(b"p2"), c.address(b"p3")];
    m.add_proposers(&mut ledger, ea, &props).map_err(|e| e.to_string())?;
    m.start_election(&mut ledger, ea).map_err(|e| e.to_string())?;
    let start = ledger.height();
    m.propose(&mut ledger, props[0], "a").map_err(|e| e.to_string())?;
    ledger.advance_to(start + 29);
    m.propose(&mut ledger, props[1], "b").map_err(|e| e.to_string())?;
    ledger.advance_to(start + 30);
    let at_deadline = m.propose(&mut ledger, props[2], "c");
    ensure!(
        at_deadline == Err(ElectionError::WrongPhase { actual: Phase::Commit }),
        "proposal at deadline block: {at_deadline:?}"
    );
    for step in 0..4 {
        ensure!(m.add_voters(&mut ledger, ea, &[idc], root).is_err(), "EA addVoters accepted at step {step}");
        ensure!(m.add_proposers(&mut ledger, ea, &[ea]).is_err(), "EA addProposers accepted at step {step}");
        ensure!(m.start_election(&mut ledger, ea).is_err(), "EA start accepted at step {step}");
        ledger.advance_blocks(30);
    }
    ensure!(
        m.effective_state(ledger.height()).phase == Phase::Completed,
        "machine did not complete"
    );
    Ok("DoubleVote, InvalidProof, HashMismatch (untallied), InvalidBallot, EA lockout, deadline rejections".into())
}

fn c6_robustness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0;
    for i in 0..50u64 {
        let voters = rng.gen_range(5..=40);
        let abandon = 0.9 * i as f64 / 49.0;
        let mut s = scenario(voters, rng.gen_range(2..=6), 6, 600 + i);
        s.params.tally_method = if i % 2 == 0 { TallyMethod::Borda } else { TallyMethod::Tideman };
        for v in 0..voters {
            let b = if rng.gen_bool(abandon) {
                Behavior::AbandonAfterCommit
            } else {
                match rng.gen_range(0..10) {
                    0 => Behavior::DoubleVote,
                    1 => Behavior::WrongReveal,
                    2 => Behavior::Late,
                    3 => Behavior::InvalidBallot,
                    _ => Behavior::Honest,
                }
            };
            s.voters.behaviors.insert(v, b);
        }
        let run = go(&s)?;
        let budget = s.params.proposal_lifetime + s.params.commit_lifetime + s.params.reveal_lifetime;
        let blocks = run.report.blocks_to_completion().ok_or(format!("scenario {i} never completed"))?;
        ensure!(blocks <= budget, "scenario {i}: {blocks} blocks > {budget}");
        worst = worst.max(blocks);

        let n_c = run.machine.candidate_count();
        let mut revealed: Vec<BigUint> = run
            .ledger
            .transactions()
            .iter()
            .filter(|t| t.function == "revealVote" && t.outcome.is_accepted())
            .map(|t| t.public_inputs["vid"].as_str().unwrap().parse().unwrap())
            .filter(|v| *v < factorial(n_c))
            .collect();
        let mut tallied = run.machine.tallied().to_vec();
        revealed.sort();
        tallied.sort();
        ensure!(revealed == tallied, "scenario {i}: tallied multiset differs from revealed");
    }
    Ok(format!("50/50 completed (max {worst} blocks of 90); tallied == revealed-valid in all"))
}

fn estimate_output(n_c: u64, v: u64) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_electanon"))
        .args(["estimate", "--candidates", &n_c.to_string(), "--voters", &v.to_string()])
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(out.status.success(), "estimate exited with {}", out.status);
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn c7_cost_shapes() -> Verdict {
    let mut commit = Vec::new();
    for v in [10usize, 100, 1000] {
        for n in [5usize, 10, 20] {
            let r = go(&scenario(v, n, 10, 7))?.report;
            let g = r.gas_report.0.get("commitVote").ok_or("no commits")?;
            ensure!(g.min == g.max, "commit gas varies within run v={v} n={n}");
            commit.push(g.min);
        }
    }
    ensure!(commit.iter().all(|&g| g == commit[0]), "commit gas differs across runs: {commit:?}");

    let ns = [2usize, 3, 5, 8, 10, 15, 20];
    let mut reveal = Vec::new();
    for &n in &ns {
        let r = go(&scenario(5, n, 3, 8))?.report;
        reveal.push(r.gas_report.0.get("revealVote").ok_or("no reveals")?.avg as f64);
    }
    let r2_reveal = r_squared(&ns.map(|n| n as f64), &reveal);
    ensure!(r2_reveal > 0.999, "reveal R^2 {r2_reveal}");

    let c = Crypto::default();
    let batches = [1usize, 10, 50, 100, 500, 1000];
    let mut add = Vec::new();
    for &b in &batches {
        let mut ledger = Ledger::default();
        let ea = c.address(b"ea");
        let mut m = ElectionMachine::setup(&mut ledger, ea, ElectionParams::default()).map_err(|e| e.to_string())?;
        let idcs: Vec<IdentityCommitment> =
            (0..b as u32).map(|i| IdentityCommitment(c.hash(b"leaf", &[&i.to_be_bytes()]))).collect();
        m.add_voters(&mut ledger, ea, &idcs, Digest::default()).map_err(|e| e.to_string())?;
        add.push(ledger.transactions().last().unwrap().gas_used as f64);
    }
    let r2_add = r_squared(&batches.map(|b| b as f64), &add);
    ensure!(r2_add > 0.999, "addVoters R^2 {r2_add}");

    for (n, reveal_gas, proposers_gas) in [(10u64, 119_000u64, 286_040u64), (2, 55_000, 97_352), (40, 359_000, 993_620)] {
        let out = estimate_output(n, 40)?;
        ensure!(out.contains(&format!("= {reveal_gas}\n")), "estimate n={n} lacks {reveal_gas}:\n{out}");
        ensure!(out.contains(&format!("= {proposers_gas}\n")), "estimate n={n} lacks {proposers_gas}:\n{out}");
    }
    Ok(format!(
        "commit {} gas in all 9 runs; reveal R^2={r2_reveal:.6}; addVoters R^2={r2_add:.6}; estimate prints 119000 / 286040",
        commit[0]
    ))
}

fn c8_forest() -> Verdict {
    let mut s = scenario(2560, 4, 8, 9);
    s.params.forest_mode = true;
    s.params.tree_size = 256;
    let run = go(&s)?;
    let forest = run.machine.forest().ok_or("no forest")?;
    ensure!(forest.len() == 10, "{} trees registered", forest.len());
    let mut verified = 0;
    for tx in run.ledger.transactions().iter().filter(|t| t.function == "commitVote") {
        ensure!(tx.outcome.is_accepted(), "commit {} rejected: {:?}", tx.seq, tx.outcome);
        let i = tx.public_inputs["tree_index"].as_u64().ok_or("no tree index")?;
        let root = tx.public_inputs["proof"]["computed_root"].as_str().ok_or("no root")?;
        ensure!(forest.root(i).map(|r| r.to_hex()).as_deref() == Some(root), "commit {} root mismatch", tx.seq);
        verified += 1;
    }
    ensure!(verified == 2560, "{verified} commits verified");

    let c = Crypto::default();
    for mode in [ForestMode::PublicLeaves, ForestMode::ListHash] {
        let mut ledger = Ledger::default();
        let ea = c.address(b"ea");
        let params = ElectionParams { tree_height: 8, forest_mode: true, tree_size: 256, forest_registration: mode, ..Default::default() };
        let mut m = ElectionMachine::setup(&mut ledger, ea, params).map_err(|e| e.to_string())?;
        let idcs: Vec<IdentityCommitment> =
            (0..256u32).map(|i| IdentityCommitment(c.hash(b"leaf", &[&i.to_be_bytes()]))).collect();
        let leaves: Vec<Digest> = idcs.iter().map(|x| x.0).collect();
        let mut tampered = leaves.clone();
        tampered.swap(0, 1);
        let wrong_root = build_tree(&c, &tampered, 8).unwrap().root();
        let r = match mode {
            ForestMode::PublicLeaves => m.add_voters(&mut ledger, ea, &idcs, wrong_root),
            ForestMode::ListHash => {
                m.add_voters_with_list_hash(&mut ledger, ea, &idcs, wrong_root, hash_leaf_list(&c, &leaves))
            }
        };
        ensure!(r == Err(ElectionError::RootMismatch), "{mode:?}: mismatched root gave {r:?}");
        ensure!(m.forest().unwrap().is_empty(), "{mode:?}: mismatched tree was stored");
    }
    Ok("10 trees x 256, 2560/2560 commits verify against roots[tree_index]; mismatched roots rejected".into())
}

fn cli_reports(scenario_path: &std::path::Path, out: &std::path::Path) -> Result<(Vec<u8>, Vec<u8>), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_electanon"))
        .arg("run")
        .arg("--scenario")
        .arg(scenario_path)
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?
        .status;
    ensure!(status.code() == Some(0) || status.code() == Some(2), "run exited with {status}");
    let read = |f: &str| std::fs::read(out.join(f)).map_err(|e| e.to_string());
    Ok((read("report.json")?, read("transactions.json")?))
}

fn c9_determinism() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut s = scenario(30, 5, 5, 99);
    s.voters.behaviors =
        BTreeMap::from([(0, Behavior::DoubleVote), (3, Behavior::AbandonAfterCommit), (7, Behavior::WrongReveal)]);
    let path = dir.path().join("scenario.json");
    std::fs::write(&path, serde_json::to_string_pretty(&s).unwrap()).map_err(|e| e.to_string())?;
    let a = cli_reports(&path, &dir.path().join("a"))?;
    let b = cli_reports(&path, &dir.path().join("b"))?;
    ensure!(a.0 == b.0, "report.json differs between runs");
    ensure!(a.1 == b.1, "transactions.json differs between runs");

    for seed in 0..10u64 {
        let mut s = scenario(12, 4, 4, seed);
        s.params.tally_method = if seed % 2 == 0 { TallyMethod::Borda } else { TallyMethod::Tideman };
        s.voters.behaviors.insert((seed % 12) as usize, Behavior::Late);
        let x = serde_json::to_string(&go(&s)?.report).unwrap();
        let y = serde_json::to_string(&go(&s)?.report).unwrap();
        ensure!(x == y, "library report differs for seed {seed}");
    }
    Ok(format!("CLI reports byte-identical ({} + {} bytes); 10 library replays identical", a.0.len(), a.1.len()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("rank/unrank bijection", c1_rank_bijection),
        ("tally oracle equivalence", c2_tally_oracles),
        ("Condorcet property", c3_condorcet),
        ("end-to-end 40 voters / 10 candidates", c4_end_to_end),
        ("security scenario suite", c5_security),
        ("robustness under abandonment", c6_robustness),
        ("cost shapes and estimate formulas", c7_cost_shapes),
        ("Merkle forest", c8_forest),
        ("determinism", c9_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {}: PASS  {name} ({secs:.1}s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL  {name} ({secs:.1}s): {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
