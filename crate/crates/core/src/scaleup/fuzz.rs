//! Randomized exercise of the implementation map one level up: a random
//! legal big angel over structured start measures, each big move carried
//! out by its implementation against an adversarial small devil.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::devils::adversarial_devil;
use crate::game::{angel_allowed_cached, devil_allowed_spatial, ClearCache, is_simple, Configuration, GameLog, GameSpec, History, Outcome, Record};
use crate::geom::{colony_of, CellCoord, Direction, Sym};
use crate::measure::Measure;
use crate::moves::{self, catalog, LocatedMove, MoveKind};
use crate::rat::Rat;

use super::implement::{CaseKind, Diagnostic, ImplContext, Implementation};
use super::run::{drive, Violation};
use super::transfer::verify_time_transfer;

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ImplFuzzReport {
    pub big_moves: usize,
    pub small_moves: usize,
    pub failed_big: usize,
    pub max_small_per_big: usize,
    /// Largest elapsed time of a big move as a fraction of `θB*`.
    pub max_time_fraction: f64,
    pub by_kind: BTreeMap<String, usize>,
    pub cases: BTreeMap<String, usize>,
    pub violations: Vec<Violation>,
    pub diagnostics: Vec<Diagnostic>,
    pub devil_errors: Vec<String>,
}

impl ImplFuzzReport {
    pub fn count(&self, check: &str) -> usize {
        self.violations.iter().filter(|v| v.check == check).count()
    }
}

/// Structured start measure around the big colony at the origin, with the
/// obstacle colony and heading of a marginal wall placed ahead, if any.
pub fn structured_measure(gs: &GameSpec, rng: &mut impl Rng) -> (Measure, Option<(CellCoord, Direction)>) {
    let q = gs.params.q;
    let delta = gs.params.delta;
    let mut mu = Measure::new();
    let put = |mu: &mut Measure, c: CellCoord, a: Rat| mu.deposit_in_place(c, a).expect("positive weight");
    let colonies: Vec<CellCoord> =
        (-2..=2).flat_map(|x| (-2..=2).map(move |y| CellCoord::new(x, y))).filter(|c| *c != CellCoord::ORIGIN).collect();
    // a besieged trial starts with a marginal wall on an attack's obstacle
    let besiege = rng.gen_bool(0.4);
    let patterns = rng.gen_range(besiege as usize..=2);
    let mut siege = None;
    for idx in 0..patterns {
        let forced = besiege && idx == 0;
        let dir = *Direction::ALL.choose(rng).expect("directions");
        // half the patterns sit on the obstacle colony of an attack from the origin
        let ahead = forced || rng.gen_bool(0.5);
        let big = if ahead {
            let k = rng.gen_range(1..=4);
            let (dx, dy) = dir.vec();
            CellCoord::new(dx * k, dy * k)
        } else {
            *colonies.choose(rng).expect("colonies")
        };
        let frame = Sym::toward(dir);
        let local = |u: i64, v: i64| {
            // (u, v) in the rotated colony frame, v along `dir`
            let (x, y) = frame.cell((u, v));
            let (x, y) = (x.rem_euclid(q), y.rem_euclid(q));
            CellCoord::new(big.x * q + x, big.y * q + y)
        };
        match if forced { 2 } else { rng.gen_range(0..3) } {
            0 => {
                let n = rng.gen_range(5..120);
                let weights = [Rat::new(1, 4), Rat::new(1, 2), Rat::new(3, 4), Rat::ONE, Rat::int(2)];
                for _ in 0..n {
                    let c = local(rng.gen_range(0..q), rng.gen_range(0..q));
                    put(&mut mu, c, *weights.choose(rng).expect("weights"));
                }
            }
            1 => {
                let h = rng.gen_range(0..q);
                let gap = rng.gen_range(0.0..0.3);
                for u in 0..q {
                    if !rng.gen_bool(gap) {
                        put(&mut mu, local(u, h), Rat::ONE);
                    }
                }
            }
            _ => {
                if ahead && siege.is_none() {
                    siege = Some((big, dir));
                }
                let eps = *[Rat::new(1, 1 << 33), delta / Rat::int(4), delta * Rat::int(2)].choose(rng).expect("eps");
                let mut h = rng.gen_range(6..q - 6);
                for u in 0..q {
                    put(&mut mu, local(u, h), Rat::ONE - eps);
                    h = (h + rng.gen_range(-1..=1)).clamp(4, q - 5);
                }
                if rng.gen_bool(0.5) {
                    put(&mut mu, local(rng.gen_range(0..q), rng.gen_range(0..q)), Rat::int(2));
                }
            }
        }
    }
    (mu, siege)
}

fn weight(lm: &LocatedMove) -> u32 {
    match lm.z.kind {
        MoveKind::Step => 1,
        MoveKind::Jump | MoveKind::Turn => 2,
        _ => 4,
    }
}

/// Legal big moves at `cfg` that keep the big path simple.
fn big_options(outer: &GameSpec, cfg: &Configuration, seq: &[LocatedMove]) -> Vec<LocatedMove> {
    let here = colony_of(outer.b, cfg.p);
    let prev = seq.last();
    let mut cache = ClearCache::default();
    catalog(outer.variant)
        .iter()
        .map(|z| LocatedMove::new(here, z))
        .filter(|lm| {
            let mut s = seq.to_vec();
            s.push(*lm);
            is_simple(&s) && angel_allowed_cached(outer, cfg, lm, prev, &mut cache).is_ok()
        })
        .collect()
}

/// Largest mass gained by any window of at most `nu` consecutive units.
pub fn max_drift(log: &GameLog, nu: usize) -> Rat {
    let totals: Vec<Rat> = log
        .history
        .records
        .iter()
        .map(|r| r.d.mu.total().get())
        .chain(std::iter::once(log.current().mu.total().get()))
        .collect();
    let mut best = Rat::ZERO;
    for i in 0..totals.len() {
        let j = (i + nu).min(totals.len() - 1);
        best = best.max(totals[j] - totals[i]);
    }
    best
}

/// Play chains of big moves until `big_moves` have been implemented.
pub fn fuzz_implementation(base: &Arc<GameSpec>, big_moves: usize, seed: u64, chain: usize) -> ImplFuzzReport {
    let outer = GameSpec::scaled(base);
    let q = base.params.q;
    let p = &base.params;
    let theta_b = p.theta * Rat::from(outer.b);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = ImplFuzzReport::default();
    let mut trial = 0u64;
    while rep.big_moves < big_moves {
        trial += 1;
        let (mu0, siege) = structured_measure(base, &mut rng);
        let start = CellCoord::new(rng.gen_range(q / 4..3 * q / 4), rng.gen_range(q / 4..3 * q / 4));
        let cfg0 = Configuration::new(0, start, mu0, Outcome::Succ);
        let mut log = GameLog::new(base.clone(), cfg0.clone());
        let mut big_log = GameLog::new(outer.clone(), cfg0);
        let mut devil = adversarial_devil(seed ^ (trial << 20));
        devil.spoil = *[0.75, 1.0].choose(&mut rng).expect("spoil rates");
        // the default prefix: an east step into the start colony, so that no
        // big move returns to it
        let mut big_seq: Vec<LocatedMove> = vec![LocatedMove::new(CellCoord::new(-1, 0), moves::step(Direction::E))];
        // after a failed attack and a finish, the path goes on toward the
        // passing side or the finish direction, as in the recursive strategy
        let mut resume: Option<(Direction, Direction)> = None;
        let mut recent: VecDeque<HashSet<CellCoord>> = VecDeque::new();
        let mut small_all: Vec<LocatedMove> = Vec::new();
        for _ in 0..chain {
            if rep.big_moves >= big_moves {
                break;
            }
            let big_cfg = big_log.current().clone();
            let mut opts = big_options(&outer, &big_cfg, &big_seq);
            if let Some((pass, fin)) = resume {
                opts.retain(|m| m.z.is_continuing() || m.z.dir == pass || m.z.dir == fin);
            }
            let besieged: Vec<LocatedMove> = match siege {
                Some((col, dir)) if big_seq.len() == 1 => opts
                    .iter()
                    .copied()
                    .filter(|m| m.z.is_attack() && m.z.dir == dir && m.z.obstacle.map(|o| m.colony(o)) == Some(col))
                    .collect(),
                _ => vec![],
            };
            let pick = if besieged.is_empty() { opts.choose_weighted(&mut rng, weight).ok() } else { besieged.choose(&mut rng) };
            let Some(big) = pick.copied() else { break };
            let forbidden: HashSet<CellCoord> = recent.iter().flatten().copied().collect();
            let ctx = ImplContext { inner: base.clone(), outer: outer.clone(), big, prefix: vec![], forbidden };
            let mut imp = Implementation::new(ctx);
            let t0 = log.current().t;
            let driven = match drive(&mut imp, &mut log, &mut devil, 4 * p.nu as usize) {
                Ok(d) => d,
                Err(e) => {
                    rep.devil_errors.push(format!("{}: {e}", big.name()));
                    break;
                }
            };
            rep.big_moves += 1;
            *rep.by_kind.entry(format!("{:?}", big.z.kind)).or_default() += 1;
            for c in &imp.cases {
                *rep.cases.entry(format!("{c:?}")).or_default() += 1;
            }
            if imp.cases.is_empty() {
                *rep.cases.entry(format!("{:?}", CaseKind::Direct)).or_default() += 1;
            }
            let tag = |v: Violation| Violation { check: v.check, detail: format!("{}: {}", big.name(), v.detail) };
            rep.violations.extend(driven.violations.into_iter().map(tag));
            rep.diagnostics.extend(imp.diagnostics.iter().cloned());
            let small: Vec<LocatedMove> = log.history.records[driven.first_unit..].iter().map(|r| r.a).collect();
            rep.small_moves += small.len();
            rep.max_small_per_big = rep.max_small_per_big.max(small.len());
            if driven.outcome == Outcome::Fail {
                rep.failed_big += 1;
            }
            // contract checks
            if small.len() < 2 {
                rep.violations.push(tag(Violation::new("halt after two", format!("{} small moves", small.len()))));
            }
            if small.len() as i64 > p.nu {
                rep.violations.push(tag(Violation::new("move budget", format!("{} > ν", small.len()))));
            }
            let big_body: HashSet<CellCoord> = big.body().into_iter().collect();
            for m in &small {
                if !m.body().iter().all(|c| big_body.contains(&colony_of(q, *c))) {
                    rep.violations.push(tag(Violation::new("nesting", m.name())));
                }
            }
            small_all.extend(small.iter().copied());
            if !is_simple(&small_all) {
                rep.violations.push(tag(Violation::new("simplicity", "concatenated small path not simple")));
                small_all = small.clone();
            }
            let end = log.current().clone();
            let elapsed = end.t - t0;
            let frac = Rat::from(elapsed as i64) / theta_b;
            rep.max_time_fraction = rep.max_time_fraction.max(frac.to_f64());
            if frac > Rat::ONE {
                rep.violations.push(tag(Violation::new("time budget", format!("elapsed {elapsed} > θB*"))));
            }
            let big_end = Configuration::new(end.t, end.p, end.mu.clone(), driven.outcome);
            let deposited = end.mu.total().get() - big_cfg.mu.total().get();
            if let Err(e) = devil_allowed_spatial(&outer, &big_cfg, &big, &big_end, deposited) {
                rep.violations.push(tag(Violation::new("J", e.to_string())));
            }
            let delta = big_end.mu.delta_from(&big_cfg.mu);
            if let Err(e) = big_log.check_temporal(&big_cfg, &big, &big_end, &delta) {
                rep.violations.push(tag(Violation::new("big temporal", e.to_string())));
            }
            // time transfer on the big unit history
            let small_hist = History {
                records: log.history.records[driven.first_unit..].to_vec(),
                last: Some(end.clone()),
            };
            let big_hist = History { records: vec![Record { d: big_cfg.clone(), a: big }], last: Some(big_end.clone()) };
            let mut tr = verify_time_transfer(base, &outer, &big_hist, &small_hist);
            tr.ledger = Some(imp.ledger.audit(base, &end.mu, imp.bodies()));
            if !tr.holds {
                rep.violations.push(tag(Violation::new(
                    "time transfer",
                    format!("τ(small) {} > τ(big) {}", tr.small_bound, tr.big_bound),
                )));
            }
            if let Some(a) = &tr.ledger {
                if !a.is_clean() {
                    rep.violations.push(tag(Violation::new("ledger", format!("{a:?}"))));
                }
            }
            big_log.push(big, big_end, &delta);
            resume = match (big.z.kind, driven.outcome) {
                (MoveKind::Finish, _) => resume,
                (_, Outcome::Fail) => {
                    let pass = if big.z.kind == MoveKind::Turn { big.turn_parts().1.z.pass } else { big.z.pass };
                    pass.map(|p| (p, big.z.landing.opposite()))
                }
                _ => None,
            };
            if let (Some((p, _)), MoveKind::Finish) = (resume, big.z.kind) {
                resume = Some((p, big.z.dir));
            }
            big_seq.push(big);
            recent.push_back(imp.claimed());
            if recent.len() > 4 {
                recent.pop_front();
            }
        }
        let drift = max_drift(&log, p.nu as usize);
        if drift >= p.delta * Rat::from(base.b) {
            rep.violations.push(Violation::new("drift", format!("trial {trial}: window gained {drift}")));
        }
    }
    rep
}
