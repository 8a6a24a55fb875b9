//! Randomized checks of the run lemmas: each trial draws an instance near
//! the hypothesis boundary, and a trial whose hypothesis holds but whose
//! conclusion fails is a counterexample. Masses are in units of `B`.
//!
//! Sparse runs are stored compressed: zero stretches are cut to two
//! colonies, which preserves every predicate built from windows of at most
//! three colonies and the obstacle's relative position.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::params::ParamSet;
use crate::rat::Rat;
use crate::runs::{g, obstacle, Thresholds};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Vacuous,
    Holds,
    Fails,
}

/// A trial: runs of colony masses plus lemma-specific indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub runs: Vec<Vec<Rat>>,
    pub idx: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LemmaResult {
    pub name: String,
    pub trials: usize,
    /// Trials whose hypothesis held.
    pub exercised: usize,
    pub counterexamples: usize,
    /// First counterexample after shrinking.
    pub example: Option<Instance>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub seed: u64,
    pub results: Vec<LemmaResult>,
}

impl LemmaReport {
    pub fn is_clean(&self) -> bool {
        self.results.iter().all(|r| r.counterexamples == 0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum LemmaError {
    #[error("lemma suites need a valid parameter set")]
    Toy,
}

struct Ctx {
    th: Thresholds,
    q: usize,
    kappa: usize,
    xi: Rat,
    delta: Rat,
    /// Largest mass gain of a reduced body during one implementation.
    swell: Rat,
}

type Gen = fn(&Ctx, &mut ChaCha8Rng) -> Instance;
type Check = fn(&Ctx, &Instance) -> Verdict;

pub const LEMMAS: [&str; 7] = [
    "good-clean",
    "negq-good-unimodal",
    "kappa-clean-rows",
    "blameable-run",
    "distant-obstacles",
    "scapegoat-cell",
    "no-good-column-unimodal",
];

fn suite() -> [(Gen, Check); 7] {
    [
        (gen_good_clean, check_good_clean),
        (gen_negq, check_negq),
        (gen_kappa_rows, check_kappa_rows),
        (gen_blame, check_blame),
        (gen_distant, check_distant),
        (gen_scapegoat, check_scapegoat),
        (gen_no_good_column, check_no_good_column),
    ]
}

/// Run every lemma for `trials` trials. Lemmas run on separate threads with
/// seeds derived from `seed`, so the report is deterministic.
pub fn fuzz_lemmas(params: &ParamSet, trials: usize, seed: u64) -> Result<LemmaReport, LemmaError> {
    if !params.valid {
        return Err(LemmaError::Toy);
    }
    let ctx = Ctx {
        th: Thresholds::from(params),
        q: params.q as usize,
        kappa: params.kappa as usize,
        xi: params.xi,
        delta: params.delta,
        swell: Rat::int(3) * Rat::from(params.nu) * params.sigma * params.theta,
    };
    let results = std::thread::scope(|s| {
        let handles: Vec<_> = suite()
            .into_iter()
            .enumerate()
            .map(|(k, (gen, check))| {
                let ctx = &ctx;
                s.spawn(move || run_lemma(ctx, LEMMAS[k], gen, check, trials, seed.wrapping_mul(31).wrapping_add(k as u64)))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("lemma thread")).collect()
    });
    Ok(LemmaReport { seed, results })
}

fn run_lemma(ctx: &Ctx, name: &str, gen: Gen, check: Check, trials: usize, seed: u64) -> LemmaResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut res = LemmaResult { name: name.to_string(), trials, exercised: 0, counterexamples: 0, example: None };
    for _ in 0..trials {
        let inst = gen(ctx, &mut rng);
        match check(ctx, &inst) {
            Verdict::Vacuous => {}
            Verdict::Holds => res.exercised += 1,
            Verdict::Fails => {
                res.exercised += 1;
                res.counterexamples += 1;
                if res.example.is_none() {
                    res.example = Some(shrink(ctx, check, inst));
                }
            }
        }
    }
    res
}

/// Greedy minimization: zero masses, then round them to coarse dyadics,
/// keeping each change that still fails.
fn shrink(ctx: &Ctx, check: Check, mut inst: Instance) -> Instance {
    for r in 0..inst.runs.len() {
        for k in 0..inst.runs[r].len() {
            let old = inst.runs[r][k];
            if old.is_zero() {
                continue;
            }
            let mut tries = vec![Rat::ZERO];
            tries.extend((2..=16).map(|e| Rat::new((old * Rat::int(1 << e)).floor(), 1 << e)));
            for v in tries {
                inst.runs[r][k] = v;
                if check(ctx, &inst) == Verdict::Fails {
                    break;
                }
                inst.runs[r][k] = old;
            }
        }
    }
    inst
}

fn verdict(hyp: bool, concl: impl FnOnce() -> bool) -> Verdict {
    match (hyp, hyp && concl()) {
        (false, _) => Verdict::Vacuous,
        (true, true) => Verdict::Holds,
        (true, false) => Verdict::Fails,
    }
}

/// A rational in `(0, 1)` skewed towards 1.
fn near_one(rng: &mut impl Rng) -> Rat {
    let x: i128 = rng.gen_range(1..1 << 16);
    Rat::ONE - Rat::new(x * x, 1 << 32)
}

fn frac(rng: &mut impl Rng) -> Rat {
    Rat::new(rng.gen_range(0..=1 << 16), 1 << 16)
}

fn sum(m: &[Rat]) -> Rat {
    m.iter().sum()
}

/// Split `total` into `k` parts by random integer weights.
fn split(total: Rat, k: usize, rng: &mut impl Rng) -> Vec<Rat> {
    let w: Vec<i128> = (0..k).map(|_| rng.gen_range(1..=64)).collect();
    let sw: i128 = w.iter().sum();
    w.iter().map(|x| total * Rat::new(*x, sw)).collect()
}

/// Up to five masses on a run of `len` colonies, mostly clustered.
fn sparse(len: usize, total: Rat, rng: &mut impl Rng) -> Vec<(usize, Rat)> {
    let k = rng.gen_range(1..=5);
    let p0 = rng.gen_range(0..len);
    let parts = split(total, k, rng);
    parts
        .into_iter()
        .map(|a| {
            let p = if rng.gen_bool(0.8) { (p0 + rng.gen_range(0..6)).min(len - 1) } else { rng.gen_range(0..len) };
            (p, a)
        })
        .collect()
}

/// Dense run with zero stretches cut to two colonies.
pub fn compress(len: usize, entries: &[(usize, Rat)]) -> Vec<Rat> {
    let mut e: Vec<(usize, Rat)> = entries.to_vec();
    e.sort_by_key(|x| x.0);
    let mut out = Vec::new();
    let mut last: Option<usize> = None;
    for (p, a) in e {
        match last {
            Some(l) if l == p => {
                *out.last_mut().expect("entry") += a;
                continue;
            }
            Some(l) => out.extend(std::iter::repeat_n(Rat::ZERO, (p - l - 1).min(2))),
            None => out.extend(std::iter::repeat_n(Rat::ZERO, p.min(2))),
        }
        out.push(a);
        last = Some(p);
    }
    let tail = last.map_or(len, |l| len - 1 - l);
    out.extend(std::iter::repeat_n(Rat::ZERO, tail.min(2)));
    if out.is_empty() {
        out.push(Rat::ZERO);
    }
    out
}

// good-clean: an (i+1)-good run is i-clean for i in {0, 1}.

fn gen_good_clean(c: &Ctx, rng: &mut ChaCha8Rng) -> Instance {
    let i = rng.gen_range(0..=1usize);
    let bound = c.th.good_bound(g(i as i64 + 1), 1);
    Instance { runs: vec![compress(c.q, &sparse(c.q, bound * near_one(rng), rng))], idx: vec![i] }
}

fn check_good_clean(c: &Ctx, x: &Instance) -> Verdict {
    let i = g(x.idx[0] as i64);
    let run = &x.runs[0];
    verdict(c.th.is_good(sum(run), i + Rat::ONE, 1), || c.th.clean(run, i, 1))
}

// negq-good-unimodal: a (-Q)-good run is 1-unimodal.

fn gen_negq(c: &Ctx, rng: &mut ChaCha8Rng) -> Instance {
    let bound = c.th.good_bound(-g(c.q as i64), 1);
    Instance { runs: vec![compress(c.q, &sparse(c.q, bound * near_one(rng), rng))], idx: vec![] }
}

fn check_negq(c: &Ctx, x: &Instance) -> Verdict {
    let run = &x.runs[0];
    verdict(c.th.is_good(sum(run), -g(c.q as i64), 1), || c.th.unimodal(run, Rat::ONE, 1))
}

// kappa-clean-rows: Q rows with total mass at most Q(xi+delta)+1 contain at
// least kappa 1-clean rows. Rows without mass are not stored; idx[0] counts
// them.

fn gen_kappa_rows(c: &Ctx, rng: &mut ChaCha8Rng) -> Instance {
    let budget = Rat::from(c.q as i64) * (c.xi + c.delta) + Rat::ONE;
    let total = if rng.gen_bool(0.1) { budget } else { budget * near_one(rng) };
    let lo = c.q.saturating_sub(c.kappa + 8).max(1);
    let n = rng.gen_range(lo..=c.q);
    let shares = if rng.gen_bool(0.5) { vec![total / Rat::from(n as i64); n] } else { split(total, n, rng) };
    let runs = shares
        .into_iter()
        .map(|s| {
            let k = rng.gen_range(1..=4);
            let p0 = rng.gen_range(0..c.q - 4);
            let parts = split(s, k, rng);
            compress(c.q, &parts.into_iter().enumerate().map(|(j, a)| (p0 + j, a)).collect::<Vec<_>>())
        })
        .collect();
    Instance { runs, idx: vec![c.q - n] }
}

fn check_kappa_rows(c: &Ctx, x: &Instance) -> Verdict {
    let budget = Rat::from(c.q as i64) * (c.xi + c.delta) + Rat::ONE;
    let total: Rat = x.runs.iter().map(|r| sum(r)).sum();
    let empty_clean = c.th.clean(&[Rat::ZERO; 3], Rat::ONE, 1);
    verdict(total <= budget && x.runs.len() + x.idx[0] == c.q, || {
        let clean = x.runs.iter().filter(|r| c.th.clean(r, Rat::ONE, 1)).count();
        clean + if empty_clean { x.idx[0] } else { 0 } >= c.kappa
    })
}

// blameable-run: from a (-1)-safe cell u = 0, a row r >= 2 that is not
// securely reachable has a blameable run of mass at least (1 - xi)/2.

fn gen_blame(c: &Ctx, rng: &mut ChaCha8Rng) -> Instance {
    let r = rng.gen_range(2..=c.q);
    let mut col = vec![Rat::ZERO; r + 1];
    col[0] = c.th.safe_bound(-Rat::ONE, 1) * near_one(rng);
    let total = Rat::new(6, 5) * frac(rng);
    // cluster next to the start, or around the final step into r
    let near_start = rng.gen_bool(0.5);
    let k = rng.gen_range(1..=3);
    for (j, a) in split(total, k, rng).into_iter().enumerate() {
        let p = if near_start { 1 + j } else { r - j };
        col[p.clamp(1, r)] += a;
    }
    Instance { runs: vec![col], idx: vec![r] }
}

fn check_blame(c: &Ctx, x: &Instance) -> Verdict {
    let col = &x.runs[0];
    let r = x.idx[0];
    let hyp = r >= 2 && c.th.is_safe(col[0], -Rat::ONE, 1) && !c.th.securely_reachable(col, 0, r, 1);
    verdict(hyp, || sum(&col[1..=r]) >= (Rat::ONE - c.xi) * Rat::half())
}

// distant-obstacles: two unimodal columns whose obstacles avoid rows i and
// i+1 leave one of those rows safe across both columns.

fn gen_distant(c: &Ctx, rng: &mut ChaCha8Rng) -> Instance {
    let i = rng.gen_range(1..c.q - 2);
    let cap = c.xi * Rat::new(11, 20);
    let runs = (0..2)
        .map(|_| {
            let mut col = vec![Rat::ZERO; c.q];
            for v in &mut col[i - 1..=i + 2] {
                *v = cap * frac(rng);
            }
            let mut r = rng.gen_range(0..c.q);
            if r == i || r == i + 1 {
                r = if rng.gen_bool(0.5) { i - 1 } else { i + 2 };
            }
            let top = col.iter().copied().fold(Rat::ZERO, |a, b| if b > a { b } else { a });
            col[r] = top + frac(rng);
            col
        })
        .collect();
    Instance { runs, idx: vec![i] }
}

fn check_distant(c: &Ctx, x: &Instance) -> Verdict {
    let i = x.idx[0];
    let (a, b) = (&x.runs[0], &x.runs[1]);
    let away = |m: &[Rat]| {
        let r = obstacle(m);
        r != i && r != i + 1
    };
    let hyp = c.th.unimodal(a, Rat::ZERO, 1) && c.th.unimodal(b, Rat::ZERO, 1) && away(a) && away(b);
    verdict(hyp, || (0..2).any(|q| c.th.is_safe(a[i + q] + b[i + q], Rat::ZERO, 1)))
}

// scapegoat-cell: a six-colony reduced body that turned bad after gaining
// at most 3 nu sigma theta B had a colony of mass at least (1 - delta)/6.
// runs[0] is the start measure, runs[1] the gain.

fn gen_scapegoat(c: &Ctx, rng: &mut ChaCha8Rng) -> Instance {
    let gain = c.swell * frac(rng);
    let start = (Rat::ONE - gain) * (Rat::ONE + Rat::new(1, 1 << 10) * (frac(rng) - Rat::half()));
    let mu0 = if rng.gen_bool(0.5) { vec![start / Rat::int(6); 6] } else { split(start, 6, rng) };
    Instance { runs: vec![mu0, split(gain, 6, rng)], idx: vec![] }
}

fn check_scapegoat(c: &Ctx, x: &Instance) -> Verdict {
    let (mu0, gain) = (&x.runs[0], &x.runs[1]);
    let hyp = gain.iter().all(|a| !a.is_negative()) && sum(gain) <= c.swell && sum(mu0) + sum(gain) >= Rat::ONE;
    verdict(hyp, || mu0.iter().any(|a| *a >= (Rat::ONE - c.delta) / Rat::int(6)))
}

// no-good-column-unimodal: in a good Q x Q body (mass < Q) where no column
// is 1-good, every column is unimodal.

fn gen_no_good_column(c: &Ctx, rng: &mut ChaCha8Rng) -> Instance {
    let floor = c.th.good_bound(Rat::ONE, 1);
    let slack = Rat::from(c.q as i64) - Rat::from(c.q as i64) * floor;
    let extra = slack * near_one(rng);
    let extras = if rng.gen_bool(0.5) {
        let mut v = vec![Rat::ZERO; c.q];
        v[rng.gen_range(0..c.q)] = extra;
        v
    } else {
        split(extra, c.q, rng)
    };
    let runs = extras.into_iter().map(|e| compress(c.q, &sparse(c.q, floor + e, rng))).collect();
    Instance { runs, idx: vec![] }
}

fn check_no_good_column(c: &Ctx, x: &Instance) -> Verdict {
    let total: Rat = x.runs.iter().map(|r| sum(r)).sum();
    let hyp = x.runs.len() == c.q
        && total < Rat::from(c.q as i64)
        && x.runs.iter().all(|r| !c.th.is_good(sum(r), Rat::ONE, 1));
    verdict(hyp, || x.runs.iter().all(|r| c.th.unimodal(r, Rat::ZERO, 1)))
}
