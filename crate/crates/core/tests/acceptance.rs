//! Acceptance suite: one pass/fail line per criterion, written straight to
//! stderr so it shows in captured test output too.

use std::io::Write;
use std::time::{Duration, Instant};

use angel_core::game::GameSpec;
use angel_core::lemmas::fuzz_lemmas;
use angel_core::measure::Measure;
use angel_core::play::{make_devil, replay, run_match, MatchConfig};
use angel_core::scaleup::fuzz::fuzz_implementation;
use angel_core::trace::{verify_trace, Trace};
use angel_core::{solve_params, ParamSet, Rat};

const PARAMS_LIMIT: Duration = Duration::from_secs(1);
const LEMMA_TRIALS: usize = 100_000;
const LEMMA_LIMIT: Duration = Duration::from_secs(5 * 60);
const BIG_MOVES: usize = 1000;
const BIG_CHAIN: usize = 6;
const SURVIVAL_MOVES: usize = 10_000;
const SURVIVAL_SEEDS: u64 = 5;
const RUN_LIMIT: Duration = Duration::from_secs(10 * 60);

struct Line {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn emit(l: &Line) {
    let mark = if l.pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr().lock(), "acceptance {mark} {:<26} {}", l.name, l.detail);
}

fn valid() -> ParamSet {
    solve_params(Rat::new(3, 4), 12).unwrap()
}

/// Every inequality of the parameter system, evaluated here from scratch.
fn inequality_failures(p: &ParamSet) -> Vec<&'static str> {
    let r = Rat::from;
    let one = Rat::ONE;
    let min = |a: Rat, b: Rat| if a < b { a } else { b };
    let checks = [
        (Rat::new(2, 3) < p.xi && p.xi < one, "2/3 < xi < 1"),
        (Rat::ZERO < p.delta && p.delta < p.xi / r(2), "0 < delta < xi/2"),
        (p.rho1 > p.rho2 && p.rho2 > Rat::ZERO, "rho1 > rho2 > 0"),
        (p.nu == 17 * p.q, "nu = 17Q"),
        (p.kappa >= 12, "kappa >= 12"),
        (r(p.q) > r(2 * p.kappa) / (one - p.xi), "Q > 2 kappa/(1-xi)"),
        (p.rho2 == r(8), "rho2 = 8"),
        (p.rho1 > r(22 * p.q) / (one - p.xi), "rho1 > 22Q/(1-xi)"),
        (p.theta == r(2) * (r(6) + r(3) * p.rho1), "theta = 2(6+3 rho1)"),
        (p.delta < min((one - p.xi) / r(6), (p.xi - Rat::new(2, 3)) / r(p.q)), "delta bound"),
        (p.sigma < min(p.delta / (r(3 * p.nu) * p.theta), one / (r(2) * p.rho1)), "sigma bound"),
    ];
    checks.iter().filter(|(ok, _)| !ok).map(|(_, n)| *n).collect()
}

fn parameter_solver() -> Line {
    let t = Instant::now();
    let p = valid();
    let elapsed = t.elapsed();
    let bad = inequality_failures(&p);
    // Q is the least integer above 2κ/(1-ξ) = 96
    let pass = p.q == 97 && bad.is_empty() && p.valid && elapsed < PARAMS_LIMIT;
    Line { name: "parameter solver", pass, detail: format!("Q={} failed={bad:?} time={elapsed:?} (limit 1 s, exact)", p.q) }
}

fn lemma_fuzz() -> Line {
    let t = Instant::now();
    let rep = fuzz_lemmas(&valid(), LEMMA_TRIALS, 2024).unwrap();
    let elapsed = t.elapsed();
    let counter: usize = rep.results.iter().map(|r| r.counterexamples).sum();
    let min_ex = rep.results.iter().map(|r| r.exercised).min().unwrap_or(0);
    let pass = rep.results.len() == 7 && counter == 0 && elapsed < LEMMA_LIMIT && rep.results.iter().all(|r| r.trials == LEMMA_TRIALS);
    Line {
        name: "lemma fuzz",
        pass,
        detail: format!("7 lemmas x {LEMMA_TRIALS} trials, counterexamples={counter}, min exercised={min_ex}, time={elapsed:.1?} (limit 5 min)"),
    }
}

fn implementation_fuzz() -> (Line, Line, Line) {
    let base = GameSpec::base(valid(), false).unwrap();
    let t = Instant::now();
    let rep = fuzz_implementation(&base, BIG_MOVES, 7, BIG_CHAIN);
    let elapsed = t.elapsed();
    let contract = ["angel_allowed", "halt after two", "move budget", "nesting", "simplicity", "time budget", "J", "big temporal"];
    let transfer = ["time transfer", "ledger"];
    let n = |names: &[&str]| names.iter().map(|c| rep.count(c)).sum::<usize>();
    let other = rep.violations.len() - n(&contract) - n(&transfer) - rep.count("drift");
    let c = n(&contract) + other;
    let contract_line = Line {
        name: "implementation contract",
        pass: rep.big_moves >= BIG_MOVES && c == 0 && rep.diagnostics.is_empty() && rep.devil_errors.is_empty(),
        detail: format!(
            "big moves={} small moves={} failed big={} max small/big={} (nu {}) max time/(theta B*)={:.4} violations={c} diagnostics={} devil errors={} time={elapsed:.1?}",
            rep.big_moves,
            rep.small_moves,
            rep.failed_big,
            rep.max_small_per_big,
            base.params.nu,
            rep.max_time_fraction,
            rep.diagnostics.len(),
            rep.devil_errors.len()
        ),
    };
    let tr = n(&transfer);
    let transfer_line = Line {
        name: "time transfer",
        pass: rep.big_moves >= BIG_MOVES && tr == 0,
        detail: format!("big unit histories={} transfer/ledger violations={tr}", rep.big_moves),
    };
    let d = rep.count("drift");
    let drift_line = Line {
        name: "drift",
        pass: rep.big_moves >= BIG_MOVES && d == 0,
        detail: format!("windows of <= nu small moves gaining >= delta B: {d}"),
    };
    if !rep.violations.is_empty() || !rep.diagnostics.is_empty() {
        let _ = writeln!(std::io::stderr().lock(), "first violations: {:?} {:?}", rep.violations.first(), rep.diagnostics.first());
    }
    (contract_line, transfer_line, drift_line)
}

fn survival_and_determinism() -> (Line, Line) {
    let mut survival_fail = Vec::new();
    let mut replay_fail = Vec::new();
    let mut slowest = Duration::ZERO;
    let mut runs = 0;
    for devil in ["random", "wall"] {
        for seed in 1..=SURVIVAL_SEEDS {
            let cfg = MatchConfig { params: valid(), toy: false, depth: 1, seed, horizon: SURVIVAL_MOVES };
            let t = Instant::now();
            let mut d = make_devil(devil, seed).unwrap();
            let (trace, rep) = run_match(&cfg, d.as_mut()).unwrap();
            let v = verify_trace(&trace, None).unwrap();
            let elapsed = t.elapsed();
            slowest = slowest.max(elapsed);
            runs += 1;
            if !(rep.survived && rep.moves == SURVIVAL_MOVES && rep.violations == 0 && v.is_clean() && elapsed < RUN_LIMIT) {
                survival_fail.push(format!("{devil}:{seed} moves={} findings={} {:?}", rep.moves, v.findings.len(), rep.reason));
            }
            let text = trace.to_text();
            let (again, _) = replay(&trace).unwrap();
            let parsed = Trace::parse(&text).unwrap();
            let mu = again.lines.len();
            if again.to_text() != text || parsed != trace || parsed.to_text() != text {
                replay_fail.push(format!("{devil}:{seed} lines {mu}"));
            }
        }
    }
    // the measure's own serializations
    let cfg = MatchConfig { params: valid(), toy: false, depth: 1, seed: 9, horizon: 500 };
    let mut d = make_devil("wall", 9).unwrap();
    let mut m = angel_core::play::Match::new(&cfg, &d.name()).unwrap();
    while m.pending().is_some() {
        m.devil_turn(d.as_mut()).unwrap();
    }
    let mu = m.log().current().mu.clone();
    let text_ok = Measure::from_text(&mu.to_text()).unwrap() == mu;
    let json_ok = serde_json::from_str::<Measure>(&serde_json::to_string(&mu).unwrap()).unwrap() == mu;
    if !(text_ok && json_ok && !mu.is_empty()) {
        replay_fail.push(format!("measure round trip text={text_ok} json={json_ok}"));
    }
    (
        Line {
            name: "survival",
            pass: survival_fail.is_empty(),
            detail: format!(
                "{runs} runs (random x{SURVIVAL_SEEDS}, wall x{SURVIVAL_SEEDS}) x {SURVIVAL_MOVES} moves, slowest run+verify={slowest:.1?} (limit 10 min), failures={survival_fail:?}"
            ),
        },
        Line {
            name: "determinism and round-trip",
            pass: replay_fail.is_empty(),
            detail: format!("{runs} replays byte-identical, measure cells={}, failures={replay_fail:?}", mu.len()),
        },
    )
}

#[test]
fn acceptance() {
    let mut lines = vec![parameter_solver()];
    emit(&lines[0]);
    let (contract, transfer, drift) = implementation_fuzz();
    for l in [contract, transfer, drift] {
        emit(&l);
        lines.push(l);
    }
    let (survival, determinism) = survival_and_determinism();
    for l in [survival, determinism] {
        emit(&l);
        lines.push(l);
    }
    let l = lemma_fuzz();
    emit(&l);
    lines.push(l);
    let failed: Vec<&str> = lines.iter().filter(|l| !l.pass).map(|l| l.name).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
