//! Game rules: specs, configurations, histories, the angel and devil
//! constraints, simplicity and time bounds.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::geom::{colony_of, CellBox, CellCoord, Direction};
use crate::measure::{ColonyGrid, Measure};
use crate::moves::{self, ContTemplate, LocatedMove, MoveKind, Off};
use crate::params::{ParamError, ParamSet};
use crate::rat::{Rat, RatSum};
use crate::runs::{g, Thresholds};

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Default, Serialize, Deserialize)]
pub enum Outcome {
    #[default]
    Succ,
    Fail,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Succ => "succ",
            Outcome::Fail => "fail",
        })
    }
}

#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct Configuration {
    pub t: u64,
    pub p: CellCoord,
    pub mu: Measure,
    pub j: Outcome,
}

impl Configuration {
    pub fn new(t: u64, p: CellCoord, mu: Measure, j: Outcome) -> Configuration {
        Configuration { t, p, mu, j }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Record {
    pub d: Configuration,
    pub a: LocatedMove,
}

/// Alternating configurations and moves. With `last` set it is a d-history.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct History {
    pub records: Vec<Record>,
    pub last: Option<Configuration>,
}

impl History {
    /// Located move that witnesses a continuing move from the current end.
    pub fn failure_witness(&self) -> Option<&LocatedMove> {
        match (&self.last, self.records.last()) {
            (Some(d), Some(r)) if d.j == Outcome::Fail => Some(&r.a),
            _ => None,
        }
    }

    pub fn moves(&self) -> Vec<LocatedMove> {
        self.records.iter().map(|r| r.a).collect()
    }
}

/// A game at colony size `b` with its clearance relations. Level 0 is the
/// base game; level `k+1` is the scaled game over level `k`.
#[derive(Clone, Debug)]
pub struct GameSpec {
    pub level: u32,
    pub b: i64,
    pub params: Arc<ParamSet>,
    pub variant: ContTemplate,
    pub inner: Option<Arc<GameSpec>>,
}

impl GameSpec {
    pub fn base(params: ParamSet, allow_toy: bool) -> Result<Arc<GameSpec>, ParamError> {
        GameSpec::base_with(params, allow_toy, ContTemplate::default())
    }

    pub fn base_with(params: ParamSet, allow_toy: bool, variant: ContTemplate) -> Result<Arc<GameSpec>, ParamError> {
        let params = params.checked(allow_toy)?;
        Ok(Arc::new(GameSpec { level: 0, b: 1, params: Arc::new(params), variant, inner: None }))
    }

    pub fn scaled(inner: &Arc<GameSpec>) -> Arc<GameSpec> {
        Arc::new(GameSpec {
            level: inner.level + 1,
            b: inner.b.checked_mul(inner.params.q).expect("colony size overflows i64"),
            params: inner.params.clone(),
            variant: inner.variant,
            inner: Some(inner.clone()),
        })
    }

    pub fn th(&self) -> Thresholds {
        Thresholds::from(&*self.params)
    }

    pub fn q(&self) -> i64 {
        self.params.q
    }

    pub fn colony_mass(&self, mu: &Measure, c: CellCoord) -> Rat {
        mu.mass_box(&CellBox::colony(self.b, c))
    }

    pub fn set_mass<I: IntoIterator<Item = CellCoord>>(&self, mu: &Measure, cs: I) -> Rat {
        let mut v: Vec<CellCoord> = cs.into_iter().collect();
        v.sort();
        v.dedup();
        v.into_iter().map(|c| self.colony_mass(mu, c)).sum()
    }

    fn safe(&self, mass: Rat, i: Rat) -> bool {
        self.th().is_safe(mass, i, self.b)
    }

    fn good(&self, mass: Rat, i: Rat) -> bool {
        self.th().is_good(mass, i, self.b)
    }

    /// `K_start`: point `p` is clear for starting a new move toward `x`.
    pub fn k_start(&self, mu: &Measure, p: CellCoord, x: Direction) -> bool {
        match &self.inner {
            None => self.safe(mu.weight(p).get(), g(-1)),
            Some(inner) => self.k_start_star(inner, mu, p, x),
        }
    }

    fn k_start_star(&self, inner: &Arc<GameSpec>, mu: &Measure, p: CellCoord, x: Direction) -> bool {
        if !inner.k_start(mu, p, x) {
            return false;
        }
        let big = colony_of(self.b, p);
        if !self.safe(self.colony_mass(mu, big), g(-2)) {
            return false;
        }
        let q = self.q();
        let grid = ColonyGrid::build(mu, inner.b, CellCoord::new(big.x * q, big.y * q), q as usize, q as usize);
        let cell = colony_of(inner.b, p);
        let local = (cell.x - big.x * q, cell.y - big.y * q);
        let th = inner.th();
        // Lines perpendicular to x beyond the cell, nearest first, each read in
        // increasing global coordinate.
        let beyond: Vec<Vec<Rat>> = match x {
            Direction::N => (local.1 + 1..q).map(|r| (0..q).map(|c| grid.at(c as usize, r as usize)).collect()).collect(),
            Direction::S => (0..local.1).rev().map(|r| (0..q).map(|c| grid.at(c as usize, r as usize)).collect()).collect(),
            Direction::E => (local.0 + 1..q).map(|c| (0..q).map(|r| grid.at(c as usize, r as usize)).collect()).collect(),
            Direction::W => (0..local.0).rev().map(|c| (0..q).map(|r| grid.at(c as usize, r as usize)).collect()).collect(),
        };
        let clean: Vec<bool> = beyond.iter().map(|row| th.clean(row, Rat::ZERO, inner.b)).collect();
        let count = clean.iter().filter(|c| **c).count() as i64;
        if count < self.params.kappa - 2 {
            return false;
        }
        if clean.first() != Some(&true) {
            return false;
        }
        let cfg = Configuration::new(0, p, mu.clone(), Outcome::Succ);
        let step = LocatedMove::new(cell, moves::step_v(self.variant, x));
        angel_allowed(inner, &cfg, &step, None).is_ok()
    }

    /// `K_fail`: point `p` is clear for failure of the attack `lm`.
    pub fn k_fail(&self, mu: &Measure, p: CellCoord, lm: &LocatedMove) -> bool {
        if !lm.z.is_attack() {
            return false;
        }
        let c = colony_of(self.b, p);
        match &self.inner {
            None => lm.colonies(&lm.z.below_obstacle).any(|o| o == c),
            Some(inner) => self.k_fail_star(inner, mu, p, lm),
        }
    }

    fn k_fail_star(&self, inner: &Arc<GameSpec>, mu: &Measure, p: CellCoord, lm: &LocatedMove) -> bool {
        let big = colony_of(self.b, p);
        if !lm.transits().contains(&big) {
            return false;
        }
        let landing = lm.z.landing;
        let pass = lm.z.pass.expect("attacks have a passing side");
        let body: std::collections::HashSet<CellCoord> = lm.body().into_iter().collect();
        let q = self.q();
        let cell = colony_of(inner.b, p);
        // cells of the body south of U along the landing direction
        let (dx, dy) = landing.opposite().vec();
        let mut south = Vec::new();
        let mut c = cell.offset(dx, dy);
        while body.contains(&CellCoord::new(c.x.div_euclid(q), c.y.div_euclid(q))) {
            south.push(inner.colony_mass(mu, c));
            c = c.offset(dx, dy);
        }
        let th = inner.th();
        let half = Rat::half();
        let excl_ok = th.step_clean(&south, half, inner.b);
        let mut incl = south.clone();
        incl.insert(0, inner.colony_mass(mu, cell));
        let incl_ok = th.step_clean(&incl, half, inner.b);
        if incl_ok && inner.k_start(mu, p, pass) {
            return true;
        }
        if !excl_ok {
            return false;
        }
        for lvl in -3..=1 {
            let Some(z) = moves::attack_v(self.variant, MoveKind::ContAttack, landing, pass, lvl) else {
                continue;
            };
            for t in &z.transits {
                let w = cell.offset(-t.0, -t.1);
                let cand = LocatedMove::new(w, z);
                if inner.k_fail(mu, p, &cand) {
                    return true;
                }
            }
        }
        false
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
pub enum AngelRefusal {
    #[error("point is not in the start colony")]
    NotInStartColony,
    #[error("point is not clear for a new move")]
    NotClear,
    #[error("continuing move without a matching preceding failure")]
    NoWitness,
    #[error("point is not clear for failure of the witness")]
    NotClearForFailure,
    #[error("{part}: body weight above 3B")]
    Heavy { part: String },
    #[error("{part}: destination colony not (-1)-safe")]
    DestUnsafe { part: String },
    #[error("{part}: step body not (-1)-safe")]
    StepUnsafe { part: String },
    #[error("{part}: jump body not 1/2-good")]
    JumpNotGood { part: String },
    #[error("{part}: escape reduced body not (-1)-safe")]
    EscapeUnsafe { part: String },
    #[error("{part}: run below the obstacle not (-1)-safe")]
    BelowObstacleUnsafe { part: String },
    #[error("{part}: attack body not good")]
    AttackNotGood { part: String },
}

fn witness_matches(prev: &LocatedMove, lm: &LocatedMove) -> bool {
    if !prev.z.is_attack() {
        return false;
    }
    match lm.z.kind {
        MoveKind::Finish => prev.z.landing == lm.z.dir.opposite(),
        _ => prev.z.landing == lm.z.dir && prev.z.pass == lm.z.pass,
    }
}

/// Angel constraint: may `lm` be played from `cfg`? `prev` is the preceding
/// located move (only consulted as a failure witness when `cfg.j` is fail).
pub fn angel_allowed(
    gs: &GameSpec,
    cfg: &Configuration,
    lm: &LocatedMove,
    prev: Option<&LocatedMove>,
) -> Result<(), AngelRefusal> {
    angel_allowed_cached(gs, cfg, lm, prev, &mut ClearCache::default())
}

/// `K_start` answers for one configuration, indexed by direction.
#[derive(Clone, Debug, Default)]
pub struct ClearCache([Option<bool>; 4]);

impl ClearCache {
    pub fn k_start(&mut self, gs: &GameSpec, cfg: &Configuration, x: Direction) -> bool {
        let i = Direction::ALL.iter().position(|d| *d == x).expect("direction");
        *self.0[i].get_or_insert_with(|| gs.k_start(&cfg.mu, cfg.p, x))
    }
}

/// [`angel_allowed`] sharing clearance answers across candidate moves at the
/// same configuration.
pub fn angel_allowed_cached(
    gs: &GameSpec,
    cfg: &Configuration,
    lm: &LocatedMove,
    prev: Option<&LocatedMove>,
    cache: &mut ClearCache,
) -> Result<(), AngelRefusal> {
    if colony_of(gs.b, cfg.p) != lm.w {
        return Err(AngelRefusal::NotInStartColony);
    }
    if lm.z.is_new() {
        if !cache.k_start(gs, cfg, lm.z.dir) {
            return Err(AngelRefusal::NotClear);
        }
    } else {
        let w = prev.filter(|_| cfg.j == Outcome::Fail).filter(|w| witness_matches(w, lm));
        let Some(w) = w else {
            return Err(AngelRefusal::NoWitness);
        };
        if !gs.k_fail(&cfg.mu, cfg.p, w) {
            return Err(AngelRefusal::NotClearForFailure);
        }
    }
    if lm.z.kind == MoveKind::Turn {
        let (s, second) = lm.turn_parts();
        part_conditions(gs, &cfg.mu, &s)?;
        part_conditions(gs, &cfg.mu, &second)
    } else {
        part_conditions(gs, &cfg.mu, lm)
    }
}

fn part_conditions(gs: &GameSpec, mu: &Measure, lm: &LocatedMove) -> Result<(), AngelRefusal> {
    let part = lm.z.name.clone();
    let body = gs.set_mass(mu, lm.body());
    if body > Rat::from(3 * gs.b) {
        return Err(AngelRefusal::Heavy { part });
    }
    if !gs.safe(gs.colony_mass(mu, lm.dest()), g(-1)) {
        return Err(AngelRefusal::DestUnsafe { part });
    }
    let set = |offs: &[Off]| gs.set_mass(mu, lm.colonies(offs));
    match lm.z.kind {
        MoveKind::Step if !gs.safe(body, g(-1)) => Err(AngelRefusal::StepUnsafe { part }),
        MoveKind::Jump if !gs.good(body, Rat::half()) => Err(AngelRefusal::JumpNotGood { part }),
        MoveKind::Escape if !gs.safe(set(&lm.z.reduced), g(-1)) => Err(AngelRefusal::EscapeUnsafe { part }),
        MoveKind::NewAttack | MoveKind::ContAttack => {
            if !gs.safe(set(&lm.z.below_obstacle), g(-1)) {
                Err(AngelRefusal::BelowObstacleUnsafe { part })
            } else if !gs.good(set(&lm.z.reduced), Rat::ZERO) {
                Err(AngelRefusal::AttackNotGood { part })
            } else {
                Ok(())
            }
        }
        _ => Ok(()),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
pub enum DevilRefusal {
    #[error("time went backwards")]
    TimeBackwards,
    #[error("measure decreased somewhere")]
    MeasureDecreased,
    #[error("deposited {deposited} exceeds budget {budget}")]
    OverBudget { deposited: Rat, budget: Rat },
    #[error("success landing outside the destination colony")]
    LandingOutsideDest,
    #[error("success landing not clear in the landing direction")]
    LandingNotClear,
    #[error("failure declared on a move that cannot fail")]
    CannotFail,
    #[error("failure landing outside the transit colonies")]
    LandingOutsideTransits,
    #[error("failure landing not clear for failure")]
    LandingNotClearForFailure,
    #[error("failed attack whose body run is not bad at its end")]
    FailedAttackNotBad,
    #[error("window starting at unit {start} lasts {elapsed} but its time bound is {bound}")]
    TimeBound { start: usize, elapsed: u64, bound: Rat },
}

/// Spatial and budget part of the devil constraint for one unit.
pub fn devil_allowed_spatial(
    gs: &GameSpec,
    start: &Configuration,
    lm: &LocatedMove,
    end: &Configuration,
    deposited: Rat,
) -> Result<(), DevilRefusal> {
    if end.t < start.t {
        return Err(DevilRefusal::TimeBackwards);
    }
    let budget = gs.params.sigma * Rat::int((end.t - start.t) as i128);
    if deposited > budget {
        return Err(DevilRefusal::OverBudget { deposited, budget });
    }
    match end.j {
        Outcome::Succ => {
            if colony_of(gs.b, end.p) != lm.dest() {
                return Err(DevilRefusal::LandingOutsideDest);
            }
            if !gs.k_start(&end.mu, end.p, lm.z.landing) {
                return Err(DevilRefusal::LandingNotClear);
            }
        }
        Outcome::Fail => {
            if !lm.z.is_attack() {
                return Err(DevilRefusal::CannotFail);
            }
            if !lm.transits().contains(&colony_of(gs.b, end.p)) {
                return Err(DevilRefusal::LandingOutsideTransits);
            }
            if !gs.k_fail(&end.mu, end.p, lm) {
                return Err(DevilRefusal::LandingNotClearForFailure);
            }
            let run = if lm.z.kind == MoveKind::ContAttack { &lm.z.reduced } else { &lm.z.forward_run };
            let m = gs.set_mass(&end.mu, lm.colonies(run));
            if !gs.th().is_bad(m, gs.b) {
                return Err(DevilRefusal::FailedAttackNotBad);
            }
        }
    }
    Ok(())
}

/// Full devil constraint for one unit appended to a logged game.
pub fn devil_allowed(
    gs: &GameSpec,
    log: &GameLog,
    start: &Configuration,
    lm: &LocatedMove,
    end: &Configuration,
) -> Result<(), DevilRefusal> {
    if !end.mu.dominates(&start.mu) {
        return Err(DevilRefusal::MeasureDecreased);
    }
    let deposited = end.mu.total().get() - start.mu.total().get();
    devil_allowed_spatial(gs, start, lm, end, deposited)?;
    let delta = end.mu.delta_from(&start.mu);
    log.check_temporal(start, lm, end, &delta)
}

/// [`devil_allowed`] for a reply given as deposits on the start measure.
/// Costs `O(|delta| log |μ|)` plus the temporal check; returns the end
/// configuration.
#[allow(clippy::too_many_arguments)]
pub fn devil_allowed_delta(
    gs: &GameSpec,
    log: &GameLog,
    start: &Configuration,
    lm: &LocatedMove,
    t: u64,
    p: CellCoord,
    j: Outcome,
    delta: &[(CellCoord, Rat)],
) -> Result<Configuration, DevilRefusal> {
    if delta.iter().any(|(_, a)| !a.is_positive()) {
        return Err(DevilRefusal::MeasureDecreased);
    }
    let mu = start.mu.apply_delta(delta).map_err(|_| DevilRefusal::MeasureDecreased)?;
    let end = Configuration::new(t, p, mu, j);
    let deposited: Rat = delta.iter().map(|(_, a)| *a).sum();
    devil_allowed_spatial(gs, start, lm, &end, deposited)?;
    log.check_temporal(start, lm, &end, delta)?;
    Ok(end)
}

/// Signed displacement along the move's direction; `8B` for turns.
pub fn geometric_cost(b: i64, lm: &LocatedMove, from: CellCoord, to: CellCoord) -> i64 {
    if lm.z.kind == MoveKind::Turn {
        return 8 * b;
    }
    let (dx, dy) = lm.z.dir.vec();
    (to.x - from.x) * dx + (to.y - from.y) * dy
}

/// `w_{i+1} - w_i ∈ E(z_i)` for consecutive moves.
pub fn is_path(seq: &[LocatedMove]) -> bool {
    seq.windows(2).all(|w| {
        let d = (w[1].w.x - w[0].w.x, w[1].w.y - w[0].w.y);
        w[0].z.ends.contains(&d)
    })
}

/// Each footprint meets the union of earlier footprints only inside its own
/// start colony (see [`LocatedMove::footprint`]).
pub fn is_simple(seq: &[LocatedMove]) -> bool {
    let mut used: std::collections::HashSet<CellCoord> = std::collections::HashSet::new();
    for f in seq.iter().filter_map(|lm| lm.footprint().map(|f| (lm.w, f))) {
        if f.1.iter().any(|c| *c != f.0 && used.contains(c)) {
            return false;
        }
        used.extend(f.1);
    }
    true
}

/// `τ(χ) = ρ₁ μ(U) − ρ₂ n B + τ_gc(χ)` for a d-history (records plus last).
pub fn time_bound(gs: &GameSpec, chi: &History) -> Rat {
    let last = chi.last.as_ref().expect("time bound needs a d-history");
    let mut union: Vec<CellCoord> = Vec::new();
    let mut n = 0i64;
    let mut gc = 0i64;
    for (i, r) in chi.records.iter().enumerate() {
        union.extend(r.a.body());
        let end = chi.records.get(i + 1).map(|n| &n.d).unwrap_or(last);
        gc += geometric_cost(gs.b, &r.a, r.d.p, end.p);
        if r.a.z.kind == MoveKind::ContAttack && end.j == Outcome::Fail {
            n += 1;
        }
    }
    let p = &gs.params;
    p.rho1 * gs.set_mass(&last.mu, union) - p.rho2 * Rat::from(n * gs.b) + Rat::from(gc)
}

#[derive(Clone, Debug)]
struct UnitInfo {
    t_start: u64,
    gc: i64,
    failed_cont: bool,
    /// Smallest unit index whose window ending here is simple.
    imin: usize,
}

/// A game's full history together with the incremental bookkeeping needed
/// for the temporal restriction: the simple-window frontier and the masses
/// of body colonies grouped by the last unit covering them.
#[derive(Clone, Debug)]
pub struct GameLog {
    pub spec: Arc<GameSpec>,
    pub history: History,
    units: Vec<UnitInfo>,
    last_nonfinish: HashMap<CellCoord, usize>,
    last_any: HashMap<CellCoord, usize>,
    colony_mass: HashMap<CellCoord, Rat>,
    buckets: BTreeMap<usize, Rat>,
    /// Optional cap on window length (a deviation when set).
    pub window_cap: Option<usize>,
}

impl GameLog {
    pub fn new(spec: Arc<GameSpec>, start: Configuration) -> GameLog {
        let mut colony_mass = HashMap::new();
        for (c, w) in start.mu.iter() {
            *colony_mass.entry(colony_of(spec.b, c)).or_insert(Rat::ZERO) += w.get();
        }
        GameLog {
            spec,
            history: History { records: vec![], last: Some(start) },
            units: vec![],
            last_nonfinish: HashMap::new(),
            last_any: HashMap::new(),
            colony_mass,
            buckets: BTreeMap::new(),
            window_cap: None,
        }
    }

    pub fn current(&self) -> &Configuration {
        self.history.last.as_ref().expect("log always ends in a configuration")
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    fn unit_facts(&self, start: &Configuration, lm: &LocatedMove, end: &Configuration) -> (i64, bool, usize) {
        let gc = geometric_cost(self.spec.b, lm, start.p, end.p);
        let failed_cont = lm.z.kind == MoveKind::ContAttack && end.j == Outcome::Fail;
        let m = self.units.len();
        let mut c = 0usize;
        for col in lm.footprint().unwrap_or_default() {
            if col != lm.w {
                if let Some(&l) = self.last_nonfinish.get(&col) {
                    c = c.max(l + 1);
                }
            }
        }
        let prev = self.units.last().map(|u| u.imin).unwrap_or(0);
        let mut imin = c.max(prev).min(m);
        if let Some(cap) = self.window_cap {
            imin = imin.max((m + 1).saturating_sub(cap));
        }
        (gc, failed_cont, imin)
    }

    /// Smallest time bound over simple windows ending with the candidate unit,
    /// expressed as the latest admissible end time (may be below `start.t`).
    pub fn time_limit(
        &self,
        start: &Configuration,
        lm: &LocatedMove,
        end_p: CellCoord,
        end_j: Outcome,
        delta: &[(CellCoord, Rat)],
    ) -> (Rat, usize) {
        let probe = Configuration { t: start.t, p: end_p, mu: Measure::new(), j: end_j };
        let (gc, failed_cont, imin) = self.unit_facts(start, lm, &probe);
        let m = self.units.len();
        let b = self.spec.b;
        let p = &self.spec.params;
        // masses: buckets keyed by last covering unit, plus the new body at m
        let mut extra: HashMap<CellCoord, Rat> = HashMap::new();
        for (c, a) in delta {
            *extra.entry(colony_of(b, *c)).or_insert(Rat::ZERO) += *a;
        }
        let body = {
            let mut v = lm.body();
            v.sort();
            v.dedup();
            v
        };
        let mut moved: BTreeMap<usize, Rat> = BTreeMap::new();
        let mut top = Rat::ZERO;
        for col in &body {
            let mass = self.colony_mass.get(col).copied().unwrap_or_default()
                + extra.get(col).copied().unwrap_or_default();
            top += mass;
            if let Some(&l) = self.last_any.get(col) {
                *moved.entry(l).or_insert(Rat::ZERO) -= self.colony_mass.get(col).copied().unwrap_or_default();
            }
        }
        for (col, a) in &extra {
            if body.binary_search(col).is_err() {
                if let Some(&l) = self.last_any.get(col) {
                    *moved.entry(l).or_insert(Rat::ZERO) += *a;
                }
            }
        }
        // The bound at window start i is A_i + ρ₁·M_i − ρ₂·n_i·B with
        // A_i = t_i + gc an integer. A float pass over all windows finds the
        // near-minimal ones; only those are evaluated exactly.
        struct Window {
            i: usize,
            a: i128,
            n: i64,
            approx: f64,
            incr: std::ops::Range<usize>,
        }
        let rho1 = p.rho1.to_f64();
        let rho2b = p.rho2.to_f64() * b as f64;
        let mut windows: Vec<Window> = Vec::new();
        let mut incs: Vec<Rat> = Vec::new();
        let mut mass_f = top.to_f64();
        let mut gc_sum = gc as i128;
        let mut n = failed_cont as i64;
        let mut scale = 1.0f64;
        let mut bucket_iter = self.buckets.range(imin..).rev().peekable();
        let mut moved_iter = moved.range(imin..).rev().peekable();
        let mut i = m;
        loop {
            let from = incs.len();
            if i < m {
                while let Some((&k, v)) = bucket_iter.peek() {
                    if k < i {
                        break;
                    }
                    if !v.is_zero() {
                        mass_f += v.to_f64();
                        incs.push(**v);
                    }
                    bucket_iter.next();
                }
                while let Some((&k, v)) = moved_iter.peek() {
                    if k < i {
                        break;
                    }
                    if !v.is_zero() {
                        mass_f += v.to_f64();
                        incs.push(**v);
                    }
                    moved_iter.next();
                }
            }
            let t_i = if i == m { start.t } else { self.units[i].t_start };
            let a = t_i as i128 + gc_sum;
            let approx = a as f64 + rho1 * mass_f - rho2b * n as f64;
            scale = scale.max((a as f64).abs()).max(rho1 * mass_f.abs()).max(rho2b * n as f64);
            windows.push(Window { i, a, n, approx, incr: from..incs.len() });
            if i == imin {
                break;
            }
            i -= 1;
            gc_sum += self.units[i].gc as i128;
            n += self.units[i].failed_cont as i64;
        }
        let floor = windows.iter().map(|w| w.approx).fold(f64::INFINITY, f64::min);
        let tol = 1e-6 * scale;
        let last = windows.iter().rposition(|w| w.approx <= floor + tol).expect("a minimal window");
        let mut mass = RatSum::new(top);
        let best = if p.rho1.is_integer() && p.rho2.is_integer() {
            // exact values as numerators over the running denominator
            let (r1, r2b) = (p.rho1.numer(), p.rho2.numer() * b as i128);
            let mut best: Option<(i128, i128, usize)> = None;
            for w in &windows[..=last] {
                for v in &incs[w.incr.clone()] {
                    mass.add(*v);
                }
                if w.approx <= floor + tol {
                    let den = mass.denom();
                    let num = (w.a - r2b * w.n as i128)
                        .checked_mul(den)
                        .and_then(|x| x.checked_add(r1.checked_mul(mass.numer())?))
                        .expect("time bound overflow");
                    let better = match best {
                        None => true,
                        Some((bn, bd, _)) if bd == den => num < bn,
                        Some((bn, bd, _)) => Rat::new(num, den) < Rat::new(bn, bd),
                    };
                    if better {
                        best = Some((num, den, w.i));
                    }
                }
            }
            best.map(|(n, d, i)| (Rat::new(n, d), i))
        } else {
            let mut best: Option<(Rat, usize)> = None;
            for w in &windows[..=last] {
                for v in &incs[w.incr.clone()] {
                    mass.add(*v);
                }
                if w.approx <= floor + tol {
                    let v = Rat::int(w.a) + p.rho1 * mass.get() - p.rho2 * Rat::from(w.n * b);
                    if best.is_none_or(|(bv, _)| v < bv) {
                        best = Some((v, w.i));
                    }
                }
            }
            best
        };
        let (best, best_i) = best.expect("at least one window");
        (best, best_i)
    }

    pub fn check_temporal(
        &self,
        start: &Configuration,
        lm: &LocatedMove,
        end: &Configuration,
        delta: &[(CellCoord, Rat)],
    ) -> Result<(), DevilRefusal> {
        let (limit, i) = self.time_limit(start, lm, end.p, end.j, delta);
        if Rat::int(end.t as i128) > limit {
            let t_i = if i == self.units.len() { start.t } else { self.units[i].t_start };
            return Err(DevilRefusal::TimeBound {
                start: i,
                elapsed: end.t - t_i,
                bound: limit - Rat::int(t_i as i128),
            });
        }
        Ok(())
    }

    /// Append a unit. `delta` must be the measure increment from the current
    /// configuration to `end`.
    pub fn push(&mut self, lm: LocatedMove, end: Configuration, delta: &[(CellCoord, Rat)]) {
        let start = self.history.last.take().expect("d-history");
        let (gc, failed_cont, imin) = self.unit_facts(&start, &lm, &end);
        let m = self.units.len();
        let b = self.spec.b;
        for (c, a) in delta {
            let col = colony_of(b, *c);
            *self.colony_mass.entry(col).or_insert(Rat::ZERO) += *a;
            if let Some(&l) = self.last_any.get(&col) {
                *self.buckets.entry(l).or_insert(Rat::ZERO) += *a;
            }
        }
        let mut body = lm.body();
        body.sort();
        body.dedup();
        for col in body {
            let mass = self.colony_mass.get(&col).copied().unwrap_or_default();
            if let Some(old) = self.last_any.insert(col, m) {
                let e = self.buckets.entry(old).or_insert(Rat::ZERO);
                *e -= mass;
                if e.is_zero() {
                    self.buckets.remove(&old);
                }
            }
            if !mass.is_zero() {
                *self.buckets.entry(m).or_insert(Rat::ZERO) += mass;
            }
        }
        for col in lm.footprint().unwrap_or_default() {
            self.last_nonfinish.insert(col, m);
        }
        self.units.push(UnitInfo { t_start: start.t, gc, failed_cont, imin });
        self.history.records.push(Record { d: start, a: lm });
        self.history.last = Some(end);
    }

    /// Start index of the longest simple window ending at unit `m`.
    pub fn simple_from(&self, m: usize) -> usize {
        self.units[m].imin
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moves::{by_name, step};
    use crate::params::solve_params;

    fn base() -> Arc<GameSpec> {
        GameSpec::base(solve_params(Rat::new(3, 4), 12).unwrap(), false).unwrap()
    }

    fn lm(name: &str, x: i64, y: i64) -> LocatedMove {
        LocatedMove::new(CellCoord::new(x, y), by_name(ContTemplate::Corrected, name).unwrap())
    }

    #[test]
    fn zero_measure_step_allowed() {
        let gs = base();
        let cfg = Configuration::default();
        assert_eq!(angel_allowed(&gs, &cfg, &lm("step.N", 0, 0), None), Ok(()));
        assert_eq!(
            angel_allowed(&gs, &cfg, &lm("step.N", 1, 0), None),
            Err(AngelRefusal::NotInStartColony)
        );
    }

    #[test]
    fn continuing_needs_witness() {
        let gs = base();
        let cfg = Configuration::default();
        assert_eq!(
            angel_allowed(&gs, &cfg, &lm("attack.cont.N.passE.level0", 0, 0), None),
            Err(AngelRefusal::NoWitness)
        );
    }

    #[test]
    fn jump_half_good_boundary() {
        let gs = base();
        let delta = gs.params.delta;
        let bound = Rat::ONE - Rat::half() * delta;
        let on = Measure::new().deposit(CellCoord::new(0, 1), bound).unwrap();
        let below = Measure::new().deposit(CellCoord::new(0, 1), bound - Rat::new(1, 10_000_000)).unwrap();
        let j = lm("jump.N", 0, 0);
        let c = |mu: Measure| Configuration::new(0, CellCoord::ORIGIN, mu, Outcome::Succ);
        assert!(matches!(angel_allowed(&gs, &c(on), &j, None), Err(AngelRefusal::JumpNotGood { .. })));
        assert_eq!(angel_allowed(&gs, &c(below), &j, None), Ok(()));
    }

    #[test]
    fn base_clearance() {
        let gs = base();
        let p = &gs.params;
        assert!(gs.k_start(&Measure::new(), CellCoord::ORIGIN, Direction::N));
        let heavy = Measure::new().deposit(CellCoord::ORIGIN, p.xi + p.delta).unwrap();
        assert!(!gs.k_start(&heavy, CellCoord::ORIGIN, Direction::N));
        let a = lm("attack.new.N.passE.level-2", 0, 0); // obstacle at (0,2)
        assert!(gs.k_fail(&Measure::new(), CellCoord::new(0, 1), &a));
        assert!(!gs.k_fail(&Measure::new(), CellCoord::new(0, 2), &a));
    }

    #[test]
    fn failure_on_step_rejected() {
        let gs = base();
        let start = Configuration::default();
        let end = Configuration::new(1, CellCoord::new(0, 1), Measure::new(), Outcome::Fail);
        assert_eq!(
            devil_allowed_spatial(&gs, &start, &lm("step.N", 0, 0), &end, Rat::ZERO),
            Err(DevilRefusal::CannotFail)
        );
        let end = Configuration::new(1, CellCoord::new(1, 1), Measure::new(), Outcome::Succ);
        assert_eq!(
            devil_allowed_spatial(&gs, &start, &lm("step.N", 0, 0), &end, Rat::ZERO),
            Err(DevilRefusal::LandingOutsideDest)
        );
    }

    #[test]
    fn failed_cont_attack_needs_bad_reduced_body() {
        let gs = base();
        let a = lm("attack.cont.N.passE.level-1", 0, 0); // obstacle (1,1)
        let start = Configuration::default();
        let end = Configuration::new(5, CellCoord::new(1, 0), Measure::new(), Outcome::Fail);
        assert_eq!(devil_allowed_spatial(&gs, &start, &a, &end, Rat::ZERO), Err(DevilRefusal::FailedAttackNotBad));
    }

    #[test]
    fn simplicity_and_paths() {
        let a = lm("step.N", 0, 0);
        let b = lm("step.N", 0, 1);
        assert!(is_simple(&[a, b]) && is_path(&[a, b]));
        assert!(!is_path(&[b, a]));
        let back = lm("step.S", 0, 2);
        assert!(!is_simple(&[a, b, back]));
        let att = lm("attack.new.N.passE.level-1", 0, 0);
        let fin = lm("finish.S.len2", 0, 0);
        assert!(is_simple(&[att, fin]));
        let below = lm("step.S", 0, -1);
        assert!(!is_simple(&[att, fin, below]));
        let out = lm("step.E", 0, -2);
        assert!(is_simple(&[att, fin, out]));
        // a continuing attack only claims its passing-side column
        let cont = lm("attack.cont.N.passE.level0", 0, 0);
        assert!(is_simple(&[att, cont]));
        let over = lm("step.E", 1, -2);
        assert!(!is_simple(&[att, cont, lm("step.N", 1, -3), over]));
    }

    #[test]
    fn geometric_costs() {
        let s = lm("step.N", 0, 0);
        assert_eq!(geometric_cost(1, &s, CellCoord::ORIGIN, CellCoord::new(0, 1)), 1);
        let t = lm("turn.N.E.jump", 0, 0);
        assert_eq!(geometric_cost(5, &t, CellCoord::ORIGIN, CellCoord::new(10, 5)), 40);
        let a = lm("attack.new.N.passE.level-2", 0, 0);
        assert_eq!(geometric_cost(1, &a, CellCoord::ORIGIN, CellCoord::new(0, 1)), 1);
        let c = lm("attack.cont.N.passE.level+1", 0, 0);
        assert_eq!(geometric_cost(1, &c, CellCoord::new(0, 0), CellCoord::new(1, -2)), -2);
    }

    #[test]
    fn incremental_limit_matches_direct_time_bound() {
        let gs = base();
        let mut log = GameLog::new(gs.clone(), Configuration::default());
        let mut mu = Measure::new();
        let mut p = CellCoord::ORIGIN;
        let mut t = 0u64;
        for k in 0..6 {
            let mv = LocatedMove::new(p, step(if k % 3 == 2 { Direction::E } else { Direction::N }));
            let start = log.current().clone();
            let dest = mv.dest();
            let delta = vec![(dest.offset(1, 0), Rat::new(1, 1000))];
            mu = mu.apply_delta(&delta).unwrap();
            let (limit, _) = log.time_limit(&start, &mv, dest, Outcome::Succ, &delta);
            // direct: min over all windows ending here (all simple)
            let mut h = log.history.clone();
            h.records.push(Record { d: start.clone(), a: mv });
            h.last = Some(Configuration::new(0, dest, mu.clone(), Outcome::Succ));
            let mut direct = None::<Rat>;
            for i in 0..h.records.len() {
                let sub = History { records: h.records[i..].to_vec(), last: h.last.clone() };
                let l = Rat::int(h.records[i].d.t as i128) + time_bound(&gs, &sub);
                direct = Some(direct.map_or(l, |d: Rat| d.min(l)));
            }
            assert_eq!(limit, direct.unwrap(), "unit {k}");
            t += 1;
            log.push(mv, Configuration::new(t, dest, mu.clone(), Outcome::Succ), &delta);
            p = dest;
        }
    }
    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]
        #[test]
        fn limit_matches_brute_force(units in proptest::collection::vec((0usize..6, 0u64..4, 0i128..5, proptest::bool::ANY), 1..24)) {
            let gs = base();
            let mut log = GameLog::new(gs.clone(), Configuration::default());
            let mut mu = Measure::new();
            let mut p = CellCoord::ORIGIN;
            let mut t = 0u64;
            for (k, (kind, dt, dep, fail)) in units.into_iter().enumerate() {
                let z = match kind {
                    0..=3 => step(Direction::ALL[kind]),
                    4 => by_name(ContTemplate::Corrected, "attack.cont.N.passE.level0").unwrap(),
                    _ => by_name(ContTemplate::Corrected, "jump.E").unwrap(),
                };
                let mv = LocatedMove::new(p, z);
                let start = log.current().clone();
                let dest = mv.dest();
                let j = if kind == 4 && fail { Outcome::Fail } else { Outcome::Succ };
                let delta = if dep > 0 { vec![(dest.offset(0, 1), Rat::new(dep, 7))] } else { vec![] };
                mu = mu.apply_delta(&delta).unwrap();
                let (limit, _) = log.time_limit(&start, &mv, dest, j, &delta);
                let mut h = log.history.clone();
                h.records.push(Record { d: start.clone(), a: mv });
                h.last = Some(Configuration::new(0, dest, mu.clone(), j));
                let mut direct = None::<Rat>;
                for i in 0..h.records.len() {
                    let seq: Vec<LocatedMove> = h.records[i..].iter().map(|r| r.a).collect();
                    if !is_simple(&seq) {
                        continue;
                    }
                    let sub = History { records: h.records[i..].to_vec(), last: h.last.clone() };
                    let l = Rat::int(h.records[i].d.t as i128) + time_bound(&gs, &sub);
                    direct = Some(direct.map_or(l, |d: Rat| d.min(l)));
                }
                proptest::prop_assert_eq!(limit, direct.unwrap(), "unit {}", k);
                t += dt;
                log.push(mv, Configuration::new(t, dest, mu.clone(), j), &delta);
                p = dest;
            }
        }
    }
}
