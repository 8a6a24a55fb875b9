//! Devil opponents. Every policy chooses deposits, a clock advance and a
//! landing for each angel move, and every reply passes `devil_allowed`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::game::{devil_allowed_delta, devil_allowed_spatial, Configuration, DevilRefusal, GameLog, GameSpec, Outcome};
use crate::geom::{CellBox, CellCoord, Direction};
use crate::measure::Measure;
use crate::moves::LocatedMove;
use crate::rat::Rat;

/// Cap on scanned cells per end colony when the colony is large.
const LANDING_SCAN: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Landing {
    pub p: CellCoord,
    pub j: Outcome,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Reply {
    pub end: Configuration,
    pub delta: Vec<(CellCoord, Rat)>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum DevilError {
    #[error("unit {unit}: no legal landing for {mv}")]
    NoLanding { unit: usize, mv: String },
    #[error("unit {unit}: time bound already exceeded for {mv}")]
    NoTime { unit: usize, mv: String },
    #[error("replay index {index}: {reason}")]
    Replay { index: usize, reason: String },
    #[error("unit {unit}: {refusal}")]
    Illegal { unit: usize, refusal: DevilRefusal },
}

/// A devil opponent for one game.
pub trait Devil: Send {
    fn name(&self) -> String;
    fn respond(&mut self, log: &GameLog, lm: &LocatedMove) -> Result<Reply, DevilError>;
}

fn scan(b: i64, c: CellCoord) -> impl Iterator<Item = CellCoord> {
    let bx = CellBox::colony(b, c);
    let n = (b * b) as usize;
    // spread the scan over the colony when it is capped
    let stride = if n > LANDING_SCAN { n / LANDING_SCAN } else { 1 };
    (0..n).step_by(stride).map(move |i| CellCoord::new(bx.x0 + (i as i64) % b, bx.y0 + (i as i64) / b))
}

/// Legal landings for `lm` under the end measure `mu`: success points in the
/// destination, then failure points in the transits. Exhaustive at base
/// scale; capped per colony above.
pub fn landing_options(gs: &GameSpec, mu: &Measure, lm: &LocatedMove, limit: usize) -> Vec<Landing> {
    let mut out = Vec::new();
    for p in scan(gs.b, lm.dest()) {
        if gs.k_start(mu, p, lm.z.landing) {
            out.push(Landing { p, j: Outcome::Succ });
            if out.len() >= limit {
                break;
            }
        }
    }
    if lm.z.is_attack() {
        let run = if lm.z.kind == crate::moves::MoveKind::ContAttack { &lm.z.reduced } else { &lm.z.forward_run };
        if gs.th().is_bad(gs.set_mass(mu, lm.colonies(run)), gs.b) {
            let mut n = 0;
            for t in lm.transits() {
                for p in scan(gs.b, t) {
                    if gs.k_fail(mu, p, lm) {
                        out.push(Landing { p, j: Outcome::Fail });
                        n += 1;
                        if n >= limit {
                            break;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Pick a landing: adversarial policies take a failure when one is legal.
pub fn choose_landing(options: &[Landing], prefer_fail: bool, rng: &mut impl Rng) -> Option<Landing> {
    if prefer_fail {
        let fails: Vec<&Landing> = options.iter().filter(|l| l.j == Outcome::Fail).collect();
        if let Some(l) = fails.choose(rng) {
            return Some(**l);
        }
    }
    options.choose(rng).copied()
}

/// How a policy wants to spend the clock.
#[derive(Clone, Copy, Debug)]
pub enum Clock {
    /// Smallest advance that pays for the deposits (at least `floor`).
    Min { floor: u64 },
    /// All headroom up to a cap.
    Max { cap: u64 },
    /// Uniform in the admissible range up to a cap.
    Uniform { cap: u64 },
}

/// Assemble a legal reply. `shares` are fractions of the unit's budget
/// `σ·dt` (summing to at most one); the clock is settled first against the
/// deposit-free time bound, which deposits can only raise. Deposits that
/// would spoil the chosen landing are dropped.
pub fn assemble(
    log: &GameLog,
    lm: &LocatedMove,
    shares: &[(CellCoord, Rat)],
    clock: Clock,
    prefer_fail: bool,
    rng: &mut impl Rng,
) -> Result<Reply, DevilError> {
    let gs = &log.spec;
    let start = log.current();
    let unit = log.len();
    let mut options = landing_options(gs, &start.mu, lm, 16);
    if options.is_empty() {
        return Err(DevilError::NoLanding { unit, mv: lm.name() });
    }
    while let Some(landing) = choose_landing(&options, prefer_fail, rng) {
        let (limit, _) = log.time_limit(start, lm, landing.p, landing.j, &[]);
        let head = limit.floor() - start.t as i128;
        if head < 0 {
            options.retain(|l| *l != landing);
            continue;
        }
        let head = head.min(u64::MAX as i128 / 2) as u64;
        let dt = match clock {
            Clock::Min { floor } => floor.min(head),
            Clock::Max { cap } => head.min(cap),
            Clock::Uniform { cap } => rng.gen_range(0..=head.min(cap)),
        };
        let budget = gs.params.sigma * Rat::from(dt as i64);
        let delta = merge(&shares.iter().map(|(c, f)| (*c, budget * *f)).collect::<Vec<_>>());
        let mut mu = start.mu.clone();
        for (c, a) in &delta {
            mu.deposit_in_place(*c, *a).expect("deposits are positive");
        }
        let end = Configuration::new(start.t + dt, landing.p, mu, landing.j);
        if devil_allowed_spatial(gs, start, lm, &end, budget_used(&delta)).is_ok() {
            return Ok(Reply { end, delta });
        }
        let end = Configuration::new(start.t + dt, landing.p, start.mu.clone(), landing.j);
        devil_allowed_spatial(gs, start, lm, &end, Rat::ZERO).map_err(|refusal| DevilError::Illegal { unit, refusal })?;
        return Ok(Reply { end, delta: vec![] });
    }
    Err(DevilError::NoTime { unit, mv: lm.name() })
}

/// Make an attack fail by topping its failing run up to bad, when the
/// deficit is affordable within the time bound. The deposit goes on the
/// heaviest run cell.
pub fn spoil_attack(log: &GameLog, lm: &LocatedMove, rng: &mut impl Rng) -> Option<Reply> {
    if !lm.z.is_attack() {
        return None;
    }
    let gs = &log.spec;
    let start = log.current();
    let run = if lm.z.kind == crate::moves::MoveKind::ContAttack { &lm.z.reduced } else { &lm.z.forward_run };
    let cols: Vec<CellCoord> = lm.colonies(run).collect();
    let deficit = Rat::from(gs.b) - gs.set_mass(&start.mu, cols.iter().copied());
    if !deficit.is_positive() {
        return None;
    }
    let dt = (deficit / gs.params.sigma).floor() + 1;
    let dt = u64::try_from(dt).ok()?;
    let target = cols
        .iter()
        .flat_map(|c| scan(gs.b, *c).take(LANDING_SCAN))
        .max_by_key(|c| start.mu.weight(*c).get())?;
    let delta = vec![(target, deficit)];
    let mu = start.mu.deposit(target, deficit).ok()?;
    let fails: Vec<Landing> =
        landing_options(gs, &mu, lm, 16).into_iter().filter(|l| l.j == Outcome::Fail).collect();
    let landing = *fails.choose(rng)?;
    let end = devil_allowed_delta(gs, log, start, lm, start.t + dt, landing.p, landing.j, &delta).ok()?;
    Some(Reply { end, delta })
}

fn budget_used(delta: &[(CellCoord, Rat)]) -> Rat {
    delta.iter().map(|(_, a)| *a).sum()
}

/// A reply with explicit deposits, clock and landing, checked in full.
pub fn explicit_reply(
    log: &GameLog,
    lm: &LocatedMove,
    deposits: &[(CellCoord, Rat)],
    dt: u64,
    landing: Landing,
) -> Result<Reply, DevilRefusal> {
    let start = log.current();
    let delta = merge(deposits);
    let end = devil_allowed_delta(&log.spec, log, start, lm, start.t + dt, landing.p, landing.j, &delta)?;
    Ok(Reply { end, delta })
}

/// Sum deposits per cell, dropping non-positive amounts; sorted by cell.
pub fn merge(deposits: &[(CellCoord, Rat)]) -> Vec<(CellCoord, Rat)> {
    let mut m: std::collections::BTreeMap<CellCoord, Rat> = std::collections::BTreeMap::new();
    for (c, a) in deposits {
        if a.is_positive() {
            *m.entry(*c).or_insert(Rat::ZERO) += *a;
        }
    }
    m.into_iter().collect()
}

/// Never deposits; one time unit per move when allowed.
#[derive(Clone, Debug, Default)]
pub struct ZeroDevil;

impl Devil for ZeroDevil {
    fn name(&self) -> String {
        "zero".into()
    }

    fn respond(&mut self, log: &GameLog, lm: &LocatedMove) -> Result<Reply, DevilError> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assemble(log, lm, &[], Clock::Min { floor: 1 }, false, &mut rng)
    }
}

/// Uniform deposits within budget near the angel.
#[derive(Clone, Debug)]
pub struct RandomDevil {
    pub seed: u64,
    rng: ChaCha8Rng,
    pub radius: i64,
    pub max_dt: u64,
}

pub fn random_devil(seed: u64) -> RandomDevil {
    RandomDevil { seed, rng: ChaCha8Rng::seed_from_u64(seed), radius: 6, max_dt: 64 }
}

impl Devil for RandomDevil {
    fn name(&self) -> String {
        format!("random:{}", self.seed)
    }

    fn respond(&mut self, log: &GameLog, lm: &LocatedMove) -> Result<Reply, DevilError> {
        let p = log.current().p;
        let k = self.rng.gen_range(1..=4);
        let mut deposits = Vec::new();
        for _ in 0..k {
            let c = p.offset(
                self.rng.gen_range(-self.radius..=self.radius),
                self.rng.gen_range(-self.radius..=self.radius),
            );
            let share = self.rng.gen_range(0..=8);
            deposits.push((c, Rat::new(share, 8 * k as i128)));
        }
        let clock = Clock::Uniform { cap: self.max_dt };
        let fail = self.rng.gen_bool(0.5);
        assemble(log, lm, &deposits, clock, fail, &mut self.rng)
    }
}

/// Spends all headroom on an arc across the angel's heading.
#[derive(Clone, Debug)]
pub struct WallDevil {
    pub seed: u64,
    rng: ChaCha8Rng,
    pub distance: i64,
    pub half_width: i64,
    pub max_dt: u64,
}

pub fn wall_devil(seed: u64) -> WallDevil {
    WallDevil { seed, rng: ChaCha8Rng::seed_from_u64(seed), distance: 3, half_width: 2, max_dt: 4096 }
}

impl Devil for WallDevil {
    fn name(&self) -> String {
        format!("wall:{}", self.seed)
    }

    fn respond(&mut self, log: &GameLog, lm: &LocatedMove) -> Result<Reply, DevilError> {
        let b = log.spec.b;
        let heading = lm.z.landing;
        let dest = lm.dest();
        let centre = CellCoord::new(dest.x * b + b / 2, dest.y * b + b / 2);
        let (hx, hy) = heading.vec();
        let (px, py) = heading.cw().vec();
        let d = self.distance * b;
        let n = 2 * self.half_width + 1;
        let deposits: Vec<(CellCoord, Rat)> = (-self.half_width..=self.half_width)
            .map(|s| (centre.offset(hx * d + px * s * b, hy * d + py * s * b), Rat::new(1, n as i128)))
            .collect();
        assemble(log, lm, &deposits, Clock::Max { cap: self.max_dt }, true, &mut self.rng)
    }
}

/// Fuzzing adversary: maximal clock, deposits just ahead of the angel and on
/// random nearby cells, failure landings whenever legal.
#[derive(Clone, Debug)]
pub struct AdversarialDevil {
    pub seed: u64,
    rng: ChaCha8Rng,
    pub max_dt: u64,
    /// Probability of spoiling an attack when affordable.
    pub spoil: f64,
}

pub fn adversarial_devil(seed: u64) -> AdversarialDevil {
    AdversarialDevil { seed, rng: ChaCha8Rng::seed_from_u64(seed), max_dt: 1 << 20, spoil: 0.75 }
}

impl Devil for AdversarialDevil {
    fn name(&self) -> String {
        format!("adversarial:{}", self.seed)
    }

    fn respond(&mut self, log: &GameLog, lm: &LocatedMove) -> Result<Reply, DevilError> {
        if self.rng.gen_bool(self.spoil) {
            if let Some(r) = spoil_attack(log, lm, &mut self.rng) {
                return Ok(r);
            }
        }
        let b = log.spec.b;
        let dest = lm.dest();
        let ahead = lm.z.landing;
        let mut deposits = Vec::new();
        for k in 1..=3 {
            let (x, y) = ahead.vec();
            let c = CellCoord::new(dest.x * b + x * k * b, dest.y * b + y * k * b);
            deposits.push((c, Rat::new(1, 4)));
        }
        let side = *Direction::ALL.choose(&mut self.rng).expect("four directions");
        let (sx, sy) = side.vec();
        deposits.push((CellCoord::new(dest.x * b + sx * b, dest.y * b + sy * b), Rat::new(1, 4)));
        assemble(log, lm, &deposits, Clock::Max { cap: self.max_dt }, true, &mut self.rng)
    }
}

/// One recorded devil reply.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReplayUnit {
    /// Located name of the angel move it answered.
    pub name: String,
    pub t: u64,
    pub p: CellCoord,
    pub j: Outcome,
    pub delta: Vec<(CellCoord, Rat)>,
}

/// Re-emits recorded replies, failing on the first mismatch or illegality.
#[derive(Clone, Debug)]
pub struct ReplayDevil {
    units: Vec<ReplayUnit>,
    next: usize,
    /// Name reported by [`Devil::name`], normally the recorded devil's.
    pub label: String,
}

pub fn replay_devil(units: Vec<ReplayUnit>) -> ReplayDevil {
    ReplayDevil { units, next: 0, label: "replay".into() }
}

impl Devil for ReplayDevil {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn respond(&mut self, log: &GameLog, lm: &LocatedMove) -> Result<Reply, DevilError> {
        let index = self.next;
        let Some(u) = self.units.get(index) else {
            return Err(DevilError::Replay { index, reason: "trace exhausted".into() });
        };
        let here = lm.name();
        if u.name != here {
            return Err(DevilError::Replay { index, reason: format!("angel played {here}, trace has {}", u.name) });
        }
        let start = log.current();
        let end = devil_allowed_delta(&log.spec, log, start, lm, u.t, u.p, u.j, &u.delta)
            .map_err(|r| DevilError::Replay { index, reason: r.to_string() })?;
        self.next += 1;
        Ok(Reply { end, delta: u.delta.clone() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moves::{by_name, ContTemplate};
    use crate::params::solve_params;

    fn toy() -> std::sync::Arc<GameSpec> {
        GameSpec::base(crate::params::ParamSet::default_toy(), true).unwrap()
    }

    fn mv(name: &str) -> LocatedMove {
        LocatedMove::new(CellCoord::ORIGIN, by_name(ContTemplate::Corrected, name).unwrap())
    }

    #[test]
    fn success_only_options_land_in_dest() {
        let gs = GameSpec::base(solve_params(Rat::new(3, 4), 12).unwrap(), false).unwrap();
        let opts = landing_options(&gs, &Measure::new(), &mv("step.N"), 16);
        assert_eq!(opts, vec![Landing { p: CellCoord::new(0, 1), j: Outcome::Succ }]);
    }

    #[test]
    fn budget_is_respected_by_every_policy() {
        let gs = toy();
        let mut devils: Vec<Box<dyn Devil>> =
            vec![Box::new(ZeroDevil), Box::new(random_devil(3)), Box::new(wall_devil(4)), Box::new(adversarial_devil(5))];
        for d in devils.iter_mut() {
            let mut log = GameLog::new(gs.clone(), Configuration::default());
            let mut p = CellCoord::ORIGIN;
            for _ in 0..20 {
                let lm = LocatedMove::new(p, by_name(ContTemplate::Corrected, "step.N").unwrap());
                let Ok(r) = d.respond(&log, &lm) else { break };
                let start = log.current().clone();
                let dep = r.end.mu.total().get() - start.mu.total().get();
                assert!(dep <= gs.params.sigma * Rat::from((r.end.t - start.t) as i64), "{}", d.name());
                p = r.end.p;
                log.push(lm, r.end, &r.delta);
            }
            let t = log.current().t;
            assert!(log.current().mu.total().get() <= gs.params.sigma * Rat::from(t as i64));
        }
    }

    #[test]
    fn replay_reproduces_and_rejects_mismatch() {
        let gs = toy();
        let mut log = GameLog::new(gs.clone(), Configuration::default());
        let mut d = random_devil(9);
        let mut rec = Vec::new();
        let mut p = CellCoord::ORIGIN;
        for _ in 0..10 {
            let lm = LocatedMove::new(p, by_name(ContTemplate::Corrected, "step.E").unwrap());
            let r = d.respond(&log, &lm).unwrap();
            rec.push(ReplayUnit { name: lm.name(), t: r.end.t, p: r.end.p, j: r.end.j, delta: r.delta.clone() });
            p = r.end.p;
            log.push(lm, r.end, &r.delta);
        }
        let mut replay = replay_devil(rec.clone());
        let mut log2 = GameLog::new(gs.clone(), Configuration::default());
        let mut p = CellCoord::ORIGIN;
        for _ in 0..10 {
            let lm = LocatedMove::new(p, by_name(ContTemplate::Corrected, "step.E").unwrap());
            let r = replay.respond(&log2, &lm).unwrap();
            p = r.end.p;
            log2.push(lm, r.end, &r.delta);
        }
        assert_eq!(log2.current(), log.current());
        let mut replay = replay_devil(rec);
        let lm = LocatedMove::new(CellCoord::ORIGIN, by_name(ContTemplate::Corrected, "step.N").unwrap());
        let gs_log = GameLog::new(gs, Configuration::default());
        assert!(matches!(replay.respond(&gs_log, &lm), Err(DevilError::Replay { index: 0, .. })));
    }
}
