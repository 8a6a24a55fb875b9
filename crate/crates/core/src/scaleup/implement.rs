//! Local strategies: one deterministic state machine per big move, fed the
//! small configurations as they arrive and answering with the next small
//! move or a halt carrying the big outcome.

use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::game::{angel_allowed, angel_allowed_cached, ClearCache, Configuration, GameSpec, Outcome};
use crate::geom::{colony_of, CellCoord, Direction, Sym};
use crate::moves::{self, LocatedMove, MoveKind, Off};
use crate::rat::Rat;
use crate::runs::g;

use super::frame::Frame;
use super::ledger::{ChargeKind, ChargeLedger};
use super::plane::{Bounds, Plane};
use super::route::RouteQuery;

/// Everything a local strategy needs besides the arriving configurations.
#[derive(Clone, Debug)]
pub struct ImplContext {
    pub inner: Arc<GameSpec>,
    pub outer: Arc<GameSpec>,
    /// The big move, located in outer colony units.
    pub big: LocatedMove,
    /// Small moves already played toward this big move.
    pub prefix: Vec<LocatedMove>,
    /// Inner cells that earlier implementations used (footprints and
    /// scapegoats); new footprints avoid them.
    pub forbidden: HashSet<CellCoord>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub lemma: String,
    pub detail: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaseKind {
    /// Straight walk without extra geometric cost.
    Direct,
    /// Straight case with a charged digression.
    Digression,
    Marginal,
    /// No construction applied; unrestricted route.
    Fallback,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Emission {
    Move(LocatedMove),
    Halt(Outcome),
}

#[derive(Clone, Debug)]
enum Goal {
    /// Land in `colony` clear toward `dir`.
    Land { colony: CellCoord, dir: Direction },
    /// Reach a point of `colony` from which the second part of a turn toward
    /// `dir` can start; `step` is the turn's step direction.
    TurnPoint { colony: CellCoord, step: Direction, dir: Direction },
}

#[derive(Clone, Debug)]
struct Part {
    lm: LocatedMove,
    frame: Frame,
    goal: Goal,
    colonies: Vec<CellCoord>,
}

#[derive(Clone, Debug)]
enum SweepMode {
    Queue { moves: VecDeque<LocatedMove>, then: Box<SweepMode> },
    Success { u: i64 },
    Await { u: i64, bottom: i64 },
    AfterEscape,
}

#[derive(Clone, Debug)]
struct Sweep {
    cols: Vec<i64>,
    r: HashMap<i64, i64>,
    mode: SweepMode,
}

enum SweepAction {
    Emit(LocatedMove),
    RouteOn,
    Halt(Outcome),
    Broken(String),
}

#[derive(Clone, Debug)]
enum Mode {
    Plan { initial: bool },
    Follow(VecDeque<LocatedMove>),
    Sweep(Sweep),
}

/// Summary of one implementation for reports and traces.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImplReport {
    pub big: String,
    pub moves: usize,
    pub cases: Vec<CaseKind>,
    pub outcome: Option<Outcome>,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Clone, Debug)]
pub struct Implementation {
    ctx: ImplContext,
    q: i64,
    parts: Vec<Part>,
    part: usize,
    mode: Mode,
    plane: Option<Plane>,
    bounds: Bounds,
    big_colonies: Vec<CellCoord>,
    emitted: Vec<LocatedMove>,
    used: HashSet<CellCoord>,
    bodies: HashSet<CellCoord>,
    pub ledger: ChargeLedger,
    pub diagnostics: Vec<Diagnostic>,
    pub cases: Vec<CaseKind>,
    halted: Option<Outcome>,
    replans: usize,
}

fn diag(lemma: &str, detail: impl Into<String>) -> Diagnostic {
    Diagnostic { lemma: lemma.to_string(), detail: detail.into() }
}

fn inner_cells(q: i64, colonies: &[CellCoord]) -> impl Iterator<Item = CellCoord> + '_ {
    colonies.iter().flat_map(move |c| (0..q).flat_map(move |i| (0..q).map(move |j| CellCoord::new(c.x * q + i, c.y * q + j))))
}

fn parts_of(big: &LocatedMove, q: i64) -> Vec<Part> {
    if big.z.kind == MoveKind::Turn {
        let (a, b) = big.turn_parts();
        vec![
            Part {
                lm: a,
                frame: Frame::new(Sym::toward(a.z.dir), a.w, q),
                goal: Goal::TurnPoint { colony: a.dest(), step: a.z.dir, dir: b.z.dir },
                colonies: a.body(),
            },
            Part {
                lm: b,
                frame: Frame::for_move(&b, q),
                goal: Goal::Land { colony: big.dest(), dir: big.z.landing },
                colonies: b.body(),
            },
        ]
    } else {
        vec![Part {
            lm: *big,
            frame: Frame::for_move(big, q),
            goal: Goal::Land { colony: big.dest(), dir: big.z.landing },
            colonies: big.body(),
        }]
    }
}

/// Lines of `colony` perpendicular to `x`, indexed along `x`: which are 2-good.
fn robust_lines(plane: &Plane, colony: CellCoord, x: Direction, q: i64, kappa: i64) -> (Frame, Vec<bool>, Vec<i64>) {
    let f = Frame::new(Sym::toward(x), colony, q);
    let bound = plane.th.good_bound(g(2), plane.b);
    let robust: Vec<bool> = (0..q)
        .map(|v| {
            let m: Rat = (0..q).map(|u| plane.mass(f.to_global((u, v)))).sum();
            m < bound
        })
        .collect();
    // suffix counts of robust lines
    let mut suffix = vec![0i64; q as usize + 1];
    for v in (0..q as usize).rev() {
        suffix[v] = suffix[v + 1] + robust[v] as i64;
    }
    let _ = kappa;
    (f, robust, suffix)
}

impl Implementation {
    pub fn new(ctx: ImplContext) -> Implementation {
        let q = ctx.inner.params.q;
        let parts = parts_of(&ctx.big, q);
        let big_colonies = ctx.big.body();
        let bounds = Bounds::around(inner_cells(q, &big_colonies).filter(|c| {
            // only corners matter for the bounding box
            (c.x.rem_euclid(q) == 0 || c.x.rem_euclid(q) == q - 1) && (c.y.rem_euclid(q) == 0 || c.y.rem_euclid(q) == q - 1)
        }));
        let mut used = ctx.forbidden.clone();
        let mut bodies = HashSet::new();
        for lm in &ctx.prefix {
            used.extend(lm.footprint().unwrap_or_default());
            bodies.extend(lm.body());
        }
        Implementation {
            emitted: ctx.prefix.clone(),
            ctx,
            q,
            parts,
            part: 0,
            mode: Mode::Plan { initial: true },
            plane: None,
            bounds,
            big_colonies,
            used,
            bodies,
            ledger: ChargeLedger::default(),
            diagnostics: Vec::new(),
            cases: Vec::new(),
            halted: None,
            replans: 0,
        }
    }

    pub fn big(&self) -> &LocatedMove {
        &self.ctx.big
    }

    pub fn emitted(&self) -> &[LocatedMove] {
        &self.emitted
    }

    /// Inner cells claimed by this implementation: footprints and scapegoats.
    pub fn claimed(&self) -> HashSet<CellCoord> {
        let mut s: HashSet<CellCoord> = self.emitted.iter().flat_map(|m| m.footprint().unwrap_or_default()).collect();
        s.extend(self.ledger.regions());
        s
    }

    /// Union of all small bodies emitted so far.
    pub fn bodies(&self) -> &HashSet<CellCoord> {
        &self.bodies
    }

    pub fn outcome(&self) -> Option<Outcome> {
        self.halted
    }

    pub fn report(&self) -> ImplReport {
        ImplReport {
            big: self.ctx.big.name(),
            moves: self.emitted.len(),
            cases: self.cases.clone(),
            outcome: self.halted,
            diagnostics: self.diagnostics.clone(),
        }
    }

    fn inner(&self) -> &GameSpec {
        &self.ctx.inner
    }

    fn in_big(&self, c: CellCoord) -> bool {
        self.big_colonies.contains(&colony_of(self.q, c))
    }

    fn in_part(&self, c: CellCoord) -> bool {
        self.parts[self.part].colonies.contains(&colony_of(self.q, c))
    }

    fn fresh(&self, c: CellCoord) -> bool {
        self.in_part(c) && !self.used.contains(&c)
    }

    /// Footprint test for a candidate small move.
    fn fits(&self, lm: &LocatedMove) -> bool {
        if !lm.body().iter().all(|c| self.in_big(*c)) {
            return false;
        }
        match lm.footprint() {
            None => true,
            Some(f) => f.iter().all(|c| *c == lm.w || self.fresh(*c)),
        }
    }

    fn allowed(&self, cfg: &Configuration, lm: &LocatedMove, prev: Option<&LocatedMove>) -> bool {
        angel_allowed(self.inner(), cfg, lm, prev).is_ok()
    }

    fn cell(&self, cfg: &Configuration) -> CellCoord {
        colony_of(self.inner().b, cfg.p)
    }

    fn rebuild_plane(&mut self, cfg: &Configuration) {
        let th = self.inner().th();
        self.plane = Some(Plane::build(&cfg.mu, self.inner().b, th, self.bounds));
    }

    /// Advance with the configuration reached after the previous small move.
    pub fn next(&mut self, cfg: &Configuration, prev: Option<&LocatedMove>) -> Emission {
        if let Some(o) = self.halted {
            return Emission::Halt(o);
        }
        if self.plane.is_none() {
            self.rebuild_plane(cfg);
        }
        for _ in 0..64 {
            let mode = std::mem::replace(&mut self.mode, Mode::Plan { initial: false });
            match mode {
                Mode::Plan { initial } => {
                    if let Some(halt) = self.plan(cfg, prev, initial) {
                        return self.finish(cfg, halt);
                    }
                }
                Mode::Follow(mut queue) => {
                    let Some(front) = queue.front().copied() else {
                        if let Some(e) = self.part_done(cfg, Outcome::Succ) {
                            return e;
                        }
                        continue;
                    };
                    if front.w != self.cell(cfg) || !self.allowed(cfg, &front, prev) {
                        self.diagnostics.push(diag(
                            "drift",
                            format!("planned {} no longer allowed at {:?}", front.name(), cfg.p),
                        ));
                        self.replans += 1;
                        self.rebuild_plane(cfg);
                        self.mode = Mode::Plan { initial: false };
                        continue;
                    }
                    queue.pop_front();
                    self.mode = Mode::Follow(queue);
                    return self.emit(front);
                }
                Mode::Sweep(mut sw) => {
                    let act = self.sweep_step(&mut sw, cfg, prev);
                    match act {
                        SweepAction::Emit(lm) => {
                            self.mode = Mode::Sweep(sw);
                            return self.emit(lm);
                        }
                        SweepAction::RouteOn => {
                            self.mode = Mode::Plan { initial: false };
                        }
                        SweepAction::Halt(o) => {
                            if let Some(e) = self.part_done(cfg, o) {
                                return e;
                            }
                        }
                        SweepAction::Broken(why) => {
                            self.diagnostics.push(diag("sweep", why));
                            self.rebuild_plane(cfg);
                            self.cases.push(CaseKind::Fallback);
                            self.mode = Mode::Plan { initial: false };
                            self.replans += 1;
                        }
                    }
                }
            }
        }
        self.diagnostics.push(diag("implementation", "no progress"));
        self.finish(cfg, Outcome::Succ)
    }

    fn emit(&mut self, lm: LocatedMove) -> Emission {
        if !lm.body().iter().all(|c| self.in_big(*c)) {
            self.diagnostics.push(diag("nesting", format!("{} leaves the big body", lm.name())));
        }
        self.used.extend(lm.footprint().unwrap_or_default());
        self.bodies.extend(lm.body());
        self.emitted.push(lm);
        if self.emitted.len() as i64 > self.inner().params.nu {
            self.diagnostics.push(diag("move budget", format!("{} moves exceed ν", self.emitted.len())));
        }
        Emission::Move(lm)
    }

    fn part_done(&mut self, cfg: &Configuration, o: Outcome) -> Option<Emission> {
        if o == Outcome::Succ && self.part + 1 < self.parts.len() {
            self.part += 1;
            self.mode = Mode::Plan { initial: true };
            return None;
        }
        Some(self.finish(cfg, o))
    }

    fn finish(&mut self, cfg: &Configuration, o: Outcome) -> Emission {
        self.halted = Some(o);
        if self.emitted.len() < 2 {
            self.diagnostics.push(diag("implementation map", "halt before two small moves"));
        }
        let outer = self.ctx.outer.clone();
        let big = self.ctx.big;
        let at = colony_of(outer.b, cfg.p);
        match o {
            Outcome::Succ => {
                if at != big.dest() {
                    self.diagnostics.push(diag("J", format!("success outside the big destination at {:?}", cfg.p)));
                } else if !outer.k_start(&cfg.mu, cfg.p, big.z.landing) {
                    self.diagnostics.push(diag("J", "big landing not clear"));
                }
            }
            Outcome::Fail => {
                if !big.z.is_attack() {
                    self.diagnostics.push(diag("J", "failure of a move that cannot fail"));
                } else if !big.transits().contains(&at) {
                    self.diagnostics.push(diag("J", "failure outside the big transits"));
                } else if !outer.k_fail(&cfg.mu, cfg.p, &big) {
                    self.diagnostics.push(diag("J", "big failure landing not clear for failure"));
                }
            }
        }
        let bodies = self.bodies.clone();
        let moved = self.ledger.settle(&bodies);
        if !moved.is_empty() {
            self.diagnostics.push(diag("ledger", format!("rehomed entries {moved:?}")));
        }
        Emission::Halt(o)
    }

    // ---- planning ----

    fn first_moves(&self, cfg: &Configuration, prev: Option<&LocatedMove>) -> Vec<LocatedMove> {
        let here = self.cell(cfg);
        let inner = self.inner();
        let mut cache = ClearCache::default();
        let mut out = Vec::new();
        for z in moves::catalog(inner.variant) {
            if z.is_attack() {
                continue;
            }
            let lm = LocatedMove::new(here, z);
            if self.fits(&lm) && angel_allowed_cached(inner, cfg, &lm, prev, &mut cache).is_ok() {
                out.push(lm);
            }
        }
        out
    }

    fn target_map(&self, plane: &Plane) -> Vec<bool> {
        let part = &self.parts[self.part];
        let q = self.q;
        let kappa = self.inner().params.kappa;
        let (colony, x, headings): (CellCoord, Direction, Vec<Direction>) = match part.goal {
            Goal::Land { colony, dir } => (colony, dir, vec![dir]),
            Goal::TurnPoint { colony, step, dir } => (colony, dir, vec![step, dir]),
        };
        let (f, robust, suffix) = robust_lines(plane, colony, x, q, kappa);
        let mut map = vec![false; plane.len() * 5];
        for u in 0..q {
            for v in 0..q - 1 {
                let vi = v as usize;
                if !robust[vi + 1] || suffix[vi + 1] < kappa - 2 {
                    continue;
                }
                let c = f.to_global((u, v));
                if !plane.step_ok(c, x) {
                    continue;
                }
                let k = plane.index(c).expect("goal colony inside the plane");
                map[k * 5 + 4] = true;
                for h in &headings {
                    map[k * 5 + super::route::dir_index(*h)] = true;
                }
            }
        }
        map
    }

    fn route(
        &self,
        cfg: &Configuration,
        prev: Option<&LocatedMove>,
        usable: &dyn Fn(CellCoord) -> bool,
        target: &dyn Fn(CellCoord, Option<Direction>) -> bool,
    ) -> Option<super::route::Leg> {
        let plane = self.plane.as_ref().expect("plane");
        let first: Vec<LocatedMove> = self
            .first_moves(cfg, prev)
            .into_iter()
            .filter(|m| m.footprint().is_none_or(|f| f.iter().all(|c| *c == m.w || usable(*c))))
            .collect();
        let direction_free = self.inner().inner.is_none();
        let min_moves = if self.emitted.is_empty() { 2 } else { 1 };
        let mut blocked: HashSet<CellCoord> = HashSet::new();
        for _ in 0..16 {
            let u = |c: CellCoord| usable(c) && !blocked.contains(&c);
            let first_ok: Vec<LocatedMove> =
                first.iter().copied().filter(|m| m.footprint().is_none_or(|f| f.iter().all(|c| *c == m.w || u(*c)))).collect();
            let query = RouteQuery {
                plane,
                variant: self.inner().variant,
                direction_free,
                usable: &u,
                target,
                first: &first_ok,
                min_moves,
            };
            let leg = query.solve()?;
            // the leg itself must be simple against what it already used
            let mut seen: HashSet<CellCoord> = HashSet::new();
            let mut clash = None;
            for m in &leg.moves {
                if let Some(f) = m.footprint() {
                    if let Some(c) = f.iter().find(|c| **c != m.w && seen.contains(c)) {
                        clash = Some(*c);
                        break;
                    }
                    seen.extend(f);
                }
            }
            match clash {
                None => return Some(leg),
                Some(c) => {
                    blocked.insert(c);
                }
            }
        }
        None
    }

    /// Returns `Some(outcome)` when the implementation must halt immediately.
    fn plan(&mut self, cfg: &Configuration, prev: Option<&LocatedMove>, initial: bool) -> Option<Outcome> {
        if self.replans > 8 {
            self.diagnostics.push(diag("implementation", "too many replans"));
            return Some(Outcome::Succ);
        }
        let plane = self.plane.take().expect("plane");
        let targets = self.target_map(&plane);
        self.plane = Some(plane);
        let here = self.cell(cfg);
        let direction_free = self.inner().inner.is_none();
        let at_target = |c: CellCoord, h: Option<Direction>, plane: &Plane| {
            plane.index(c).is_some_and(|k| targets[k * 5 + h.map_or(4, super::route::dir_index)])
        };
        let heading = if direction_free { None } else { self.emitted.last().map(|m| m.z.landing) };
        if self.emitted.len() >= 2 && at_target(here, heading, self.plane.as_ref().unwrap()) {
            self.mode = Mode::Follow(VecDeque::new());
            return None;
        }
        let plane_ref = self.plane.clone().expect("plane");
        let target = |c: CellCoord, h: Option<Direction>| at_target(c, h, &plane_ref);
        let usable = |c: CellCoord| self.fresh(c);
        let leg = self.route(cfg, prev, &usable, &target);
        let part = self.parts[self.part].clone();
        let turn = self.ctx.big.z.kind == MoveKind::Turn;
        if let Some(leg) = leg {
            let b = self.inner().b;
            let extra = leg.cost - self.baseline(&part, here, &leg.moves);
            if extra <= 0 || turn || !initial {
                if initial {
                    self.cases.push(CaseKind::Direct);
                }
                if extra > 0 && !turn {
                    let region = self.posthoc_region(&part, here, &leg.moves);
                    self.ledger.charge(ChargeKind::BlameableRun, region, Rat::from(extra * b));
                }
                self.mode = Mode::Follow(leg.moves.into());
                return None;
            }
            // digression: reserve the blameable run of the direct column
            let run = self.blameable_run(&part, here);
            let reserved: HashSet<CellCoord> = run.iter().copied().collect();
            let usable2 = |c: CellCoord| self.fresh(c) && !reserved.contains(&c);
            let chosen = match self.route(cfg, prev, &usable2, &target) {
                Some(leg2) => {
                    let extra2 = leg2.cost - self.baseline(&part, here, &leg2.moves);
                    (leg2.moves, extra2, run)
                }
                None => {
                    let region = self.posthoc_region(&part, here, &leg.moves);
                    (leg.moves, extra, region)
                }
            };
            self.cases.push(CaseKind::Digression);
            if chosen.1 > 0 {
                self.ledger.charge(ChargeKind::BlameableRun, chosen.2.clone(), Rat::from(chosen.1 * b));
                self.used.extend(chosen.2);
            }
            self.mode = Mode::Follow(chosen.0.into());
            return None;
        }
        if initial && direction_free {
            if let Some(sw) = self.build_sweep(cfg, prev) {
                self.cases.push(CaseKind::Marginal);
                self.mode = Mode::Sweep(sw);
                return None;
            }
        }
        // fallback: ignore earlier footprints
        self.diagnostics.push(diag(
            "straight/marginal case",
            format!("no route for {} from {:?}", part.lm.name(), cfg.p),
        ));
        self.cases.push(CaseKind::Fallback);
        let loose = |c: CellCoord| self.in_part(c);
        if let Some(leg) = self.route(cfg, prev, &loose, &target) {
            self.mode = Mode::Follow(leg.moves.into());
            return None;
        }
        self.diagnostics.push(diag("implementation", format!("stuck at {:?}", cfg.p)));
        Some(if part.lm.z.is_attack() { Outcome::Fail } else { Outcome::Succ })
    }

    /// Planned cost without extra: displacement along the part's direction.
    fn baseline(&self, part: &Part, from: CellCoord, leg: &[LocatedMove]) -> i64 {
        let end = leg.last().map(|m| m.dest()).unwrap_or(from);
        let d = part.frame.dir(Direction::N);
        ((end.x - from.x) * d.vec().0 + (end.y - from.y) * d.vec().1).max(0)
    }

    /// Row index (canonical v) of `R''(1)`: the first robust line of the
    /// destination above its first line.
    fn r2_row(&self, part: &Part) -> Option<i64> {
        let plane = self.plane.as_ref()?;
        let (colony, x) = match part.goal {
            Goal::Land { colony, dir } => (colony, dir),
            Goal::TurnPoint { colony, step, .. } => (colony, step),
        };
        let (f, robust, _) = robust_lines(plane, colony, x, self.q, self.inner().params.kappa);
        let i = (1..self.q as usize).find(|&i| robust[i])? as i64;
        Some(part.frame.to_canon(f.to_global((0, i))).1)
    }

    fn direct_column(&self, part: &Part, here: CellCoord) -> (i64, i64) {
        let c = part.frame.to_canon(here);
        match part.lm.z.kind {
            MoveKind::ContAttack | MoveKind::Escape => (c.0 + 1, c.1 - 1),
            _ => (c.0, c.1 + 2),
        }
    }

    fn blameable_run(&self, part: &Part, here: CellCoord) -> Vec<CellCoord> {
        let (u, v0) = self.direct_column(part, here);
        let Some(top) = self.r2_row(part) else { return vec![] };
        (v0..=top).map(|v| part.frame.to_global((u, v))).filter(|c| self.fresh(*c)).collect()
    }

    fn posthoc_region(&self, part: &Part, here: CellCoord, leg: &[LocatedMove]) -> Vec<CellCoord> {
        let touched: HashSet<CellCoord> = leg.iter().flat_map(|m| m.body()).collect();
        self.blameable_run(part, here).into_iter().filter(|c| !touched.contains(c)).collect()
    }

    // ---- marginal case ----

    fn build_sweep(&mut self, cfg: &Configuration, prev: Option<&LocatedMove>) -> Option<Sweep> {
        let part = self.parts[self.part].clone();
        let kind = part.lm.z.kind;
        if !matches!(kind, MoveKind::Jump | MoveKind::NewAttack | MoveKind::ContAttack) {
            return None;
        }
        let q = self.q;
        let f = part.frame;
        let obst = part.lm.z.obstacle.map(|o| f.big_canon_offset(o))?;
        let plane = self.plane.clone()?;
        let rows = obst.1 * q..obst.1 * q + q;
        let argmax = |u: i64, rows: std::ops::Range<i64>| -> i64 {
            let mut best = rows.start;
            let mut bm = Rat::ZERO;
            for v in rows {
                let m = plane.mass(f.to_global((u, v)));
                if m > bm {
                    bm = m;
                    best = v;
                }
            }
            best
        };
        let cols: Vec<i64> = (obst.0 * q..obst.0 * q + q).collect();
        let mut r: HashMap<i64, i64> = cols.iter().map(|&u| (u, argmax(u, rows.clone()))).collect();
        let here = self.cell(cfg);
        let cp = f.to_canon(here);
        let mut all = cols.clone();
        let mode;
        if kind == MoveKind::ContAttack {
            let pu = cols[0] - 1;
            if cp.0 != pu {
                return None;
            }
            let prev_attack = prev.filter(|p| cfg.j == Outcome::Fail && p.z.is_attack());
            let rp = match prev_attack.and_then(|p| p.z.obstacle.map(|o| f.to_canon(p.colony(o)))) {
                Some(o) if o.0 == pu => o.1,
                _ => argmax(pu, 0..2 * q),
            };
            r.insert(pu, rp);
            all.insert(0, pu);
            mode = match prev_attack {
                Some(p) => {
                    let bottom =
                        p.body().iter().map(|c| f.to_canon(*c)).filter(|c| c.0 == pu).map(|c| c.1).min().unwrap_or(cp.1);
                    SweepMode::Await { u: pu, bottom }
                }
                None => SweepMode::Success { u: pu },
            };
        } else {
            let u0 = cols[0];
            let i0 = r[&u0] - 3;
            let low = cols.iter().map(|u| r[u]).min().unwrap_or(0) - 6;
            if cp == (u0, i0) {
                mode = SweepMode::Success { u: u0 };
            } else {
                let usable = |c: CellCoord| {
                    let k = f.to_canon(c);
                    self.fresh(c) && (k.1 < low || (k.0 == u0 && k.1 <= i0))
                };
                let goal = f.to_global((u0, i0));
                let target = |c: CellCoord, _h: Option<Direction>| c == goal;
                let leg = self.route(cfg, prev, &usable, &target)?;
                mode = SweepMode::Queue { moves: leg.moves.into(), then: Box::new(SweepMode::Success { u: u0 }) };
            }
        }
        if all.windows(2).any(|w| (r[&w[0]] - r[&w[1]]).abs() > 1) {
            return None;
        }
        Some(Sweep { cols, r, mode })
    }

    fn pair_safe_now(&self, cfg: &Configuration, a: CellCoord, b: CellCoord, grade: i64) -> bool {
        let gs = self.inner();
        gs.th().is_safe(gs.set_mass(&cfg.mu, [a, b]), g(grade), gs.b)
    }

    fn sweep_step(&mut self, sw: &mut Sweep, cfg: &Configuration, prev: Option<&LocatedMove>) -> SweepAction {
        let part = self.parts[self.part].clone();
        let f = part.frame;
        let v = self.inner().variant;
        let b = self.inner().b;
        let rho2b = self.inner().params.rho2 * Rat::from(b);
        let last = *sw.cols.last().expect("columns");
        let can_fail = part.lm.z.is_attack();
        for _ in 0..8 {
            let cp = f.to_canon(self.cell(cfg));
            let mode = std::mem::replace(&mut sw.mode, SweepMode::AfterEscape);
            match mode {
                SweepMode::Queue { mut moves, then } => match moves.pop_front() {
                    None => sw.mode = *then,
                    Some(m) => {
                        if m.w != self.cell(cfg) || !self.allowed(cfg, &m, prev) {
                            return SweepAction::Broken(format!("queued {} not allowed", m.name()));
                        }
                        sw.mode = SweepMode::Queue { moves, then };
                        return SweepAction::Emit(m);
                    }
                },
                SweepMode::AfterEscape => return SweepAction::RouteOn,
                SweepMode::Success { u } => {
                    if cp.0 != u {
                        return SweepAction::Broken(format!("expected column {u}, at {cp:?}"));
                    }
                    let r = sw.r[&u];
                    if cp.1 >= r {
                        return SweepAction::RouteOn;
                    }
                    if cp.1 < r - 4 {
                        let m = f.located(cp, moves::step_v(v, Direction::N));
                        if !self.fits(&m) || !self.allowed(cfg, &m, prev) {
                            return SweepAction::Broken("walk up to the obstacle blocked".into());
                        }
                        sw.mode = SweepMode::Success { u };
                        return SweepAction::Emit(m);
                    }
                    let s = cp.1 - r;
                    let attack = moves::attack_v(v, MoveKind::NewAttack, Direction::N, Direction::E, s)
                        .map(|z| f.located(cp, z))
                        .filter(|m| self.fits(m) && self.allowed(cfg, m, prev));
                    if let Some(m) = attack {
                        sw.mode = SweepMode::Await { u, bottom: cp.1.min(r - 3) };
                        return SweepAction::Emit(m);
                    }
                    if u == last {
                        if can_fail {
                            return SweepAction::Halt(Outcome::Fail);
                        }
                        return SweepAction::Broken("no attack allowed in the last column".into());
                    }
                    // evasion into the next column
                    let nu = u + 1;
                    let rn = sw.r[&nu];
                    let base = if rn < r { rn } else { r };
                    let h = [2, 1]
                        .iter()
                        .map(|q| base - q)
                        .find(|h| self.pair_safe_now(cfg, f.to_global((u, *h)), f.to_global((nu, *h)), 0))
                        .or_else(|| {
                            [2, 1]
                                .iter()
                                .map(|q| base - q)
                                .find(|h| self.pair_safe_now(cfg, f.to_global((u, *h)), f.to_global((nu, *h)), -1))
                        });
                    let Some(h) = h else {
                        return SweepAction::Broken("no evasion height".into());
                    };
                    let mut q: VecDeque<LocatedMove> = VecDeque::new();
                    let mut y = cp.1;
                    while y != h {
                        let d = if h > y { Direction::N } else { Direction::S };
                        q.push_back(f.located((u, y), moves::step_v(v, d)));
                        y += if h > y { 1 } else { -1 };
                    }
                    q.push_back(f.located((u, h), moves::step_v(v, Direction::E)));
                    if !q.iter().all(|m| self.fits(m)) {
                        return SweepAction::Broken("evasion crosses used cells".into());
                    }
                    let cost = Rat::from(((cp.1 - h).abs() + 1) * b) + rho2b;
                    let cellg = f.to_global((u, r));
                    self.ledger.charge(ChargeKind::ScapegoatCell, vec![cellg], cost);
                    self.used.insert(cellg);
                    sw.mode = SweepMode::Queue { moves: q, then: Box::new(SweepMode::Success { u: nu }) };
                }
                SweepMode::Await { u, bottom } => {
                    if cfg.j == Outcome::Succ {
                        return SweepAction::RouteOn;
                    }
                    if u == last {
                        return SweepAction::Halt(Outcome::Fail);
                    }
                    let i0 = cp.1;
                    let nu = u + 1;
                    let rn = sw.r[&nu];
                    let d = i0 - rn;
                    if d > 1 {
                        let m = f.located(cp, moves::escape_v(v, Direction::N, Direction::E));
                        if self.fits(&m) && self.allowed(cfg, &m, prev) {
                            sw.mode = SweepMode::AfterEscape;
                            return SweepAction::Emit(m);
                        }
                    }
                    if (-3..=1).contains(&d) {
                        let m = moves::attack_v(v, MoveKind::ContAttack, Direction::N, Direction::E, d)
                            .map(|z| f.located(cp, z))
                            .filter(|m| self.fits(m) && self.allowed(cfg, m, prev));
                        if let Some(m) = m {
                            sw.mode = SweepMode::Await { u: nu, bottom: rn - 3 };
                            return SweepAction::Emit(m);
                        }
                    }
                    // retreat below the failed attack and step into the next column
                    let i2 = (i0 - 1).min(sw.r[&u] - 1).min(rn - 1);
                    let h = [1, 0]
                        .iter()
                        .map(|q| i2 - q)
                        .find(|h| self.pair_safe_now(cfg, f.to_global((u, *h)), f.to_global((nu, *h)), 0))
                        .or_else(|| {
                            [1, 0]
                                .iter()
                                .map(|q| i2 - q)
                                .find(|h| self.pair_safe_now(cfg, f.to_global((u, *h)), f.to_global((nu, *h)), -1))
                        });
                    let Some(h) = h else {
                        return SweepAction::Broken("no retreat height".into());
                    };
                    let top = bottom.max(h);
                    let len = i0 - top;
                    let mut q: VecDeque<LocatedMove> = VecDeque::new();
                    if len >= 1 {
                        if len > 5 {
                            return SweepAction::Broken(format!("retreat of length {len}"));
                        }
                        q.push_back(f.located(cp, moves::finish_v(v, Direction::S, len)));
                    } else if len < 0 {
                        return SweepAction::Broken("retreat height above the landing".into());
                    }
                    for y in (h + 1..=top).rev() {
                        q.push_back(f.located((u, y), moves::step_v(v, Direction::S)));
                    }
                    q.push_back(f.located((u, h), moves::step_v(v, Direction::E)));
                    if !q.iter().all(|m| self.fits(m)) {
                        return SweepAction::Broken("retreat crosses used cells".into());
                    }
                    let cost = Rat::from((len + (top - h) + 1) * b) + rho2b;
                    let cellg = f.to_global((nu, rn));
                    self.ledger.charge(ChargeKind::ScapegoatCell, vec![cellg], cost);
                    self.used.insert(cellg);
                    sw.mode = SweepMode::Queue { moves: q, then: Box::new(SweepMode::Success { u: nu }) };
                }
            }
        }
        SweepAction::Broken("sweep made no progress".into())
    }
}

/// Offsets of a big body in canonical big units, for diagnostics.
pub fn canonical_body(lm: &LocatedMove, frame: &Frame) -> Vec<Off> {
    lm.z.template.iter().map(|o| frame.big_canon_offset(*o)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::devils::ZeroDevil;
    use crate::game::GameLog;
    use crate::moves::{by_name, ContTemplate};
    use crate::params::solve_params;
    use crate::scaleup::run::drive;

    fn games() -> (Arc<GameSpec>, Arc<GameSpec>) {
        let base = GameSpec::base(solve_params(Rat::new(3, 4), 12).unwrap(), false).unwrap();
        let outer = GameSpec::scaled(&base);
        (base, outer)
    }

    fn run(big: &str, start: CellCoord, mu: crate::measure::Measure) -> (Implementation, GameLog, Outcome) {
        run_with(big, start, mu, &mut ZeroDevil)
    }

    fn run_with(
        big: &str,
        start: CellCoord,
        mu: crate::measure::Measure,
        devil: &mut dyn crate::devils::Devil,
    ) -> (Implementation, GameLog, Outcome) {
        let (base, outer) = games();
        let big = LocatedMove::new(CellCoord::ORIGIN, by_name(ContTemplate::Corrected, big).unwrap());
        let ctx = ImplContext { inner: base.clone(), outer, big, prefix: vec![], forbidden: HashSet::new() };
        let mut imp = Implementation::new(ctx);
        let mut log = GameLog::new(base, Configuration::new(0, start, mu, Outcome::Succ));
        let d = drive(&mut imp, &mut log, devil, 2000).unwrap();
        assert!(d.violations.is_empty(), "{:?}", d.violations);
        (imp, log, d.outcome)
    }

    #[test]
    fn zero_measure_big_step_is_a_straight_walk() {
        let (imp, log, o) = run("step.N", CellCoord::new(40, 50), Default::default());
        assert_eq!(o, Outcome::Succ);
        assert!(imp.diagnostics.is_empty(), "{:?}", imp.diagnostics);
        assert_eq!(imp.cases, vec![CaseKind::Direct]);
        assert!(imp.ledger.entries.is_empty());
        let p = log.current().p;
        assert_eq!(colony_of(97, p), CellCoord::new(0, 1));
        assert!(log.history.records.iter().all(|r| r.a.z.dir == Direction::N));
    }

    fn marginal_wall(eps: Rat, extra: Option<CellCoord>) -> crate::measure::Measure {
        let mut mu = crate::measure::Measure::new();
        for u in 0..97 {
            let h = 97 + 40 + (u % 3 == 1) as i64;
            mu.deposit_in_place(CellCoord::new(u, h), Rat::ONE - eps).unwrap();
        }
        if let Some(c) = extra {
            mu.deposit_in_place(c, Rat::int(2)).unwrap();
        }
        mu
    }

    #[test]
    fn attack_into_a_marginal_wall_sweeps_and_lands() {
        for seed in 1..=3 {
            let mut dv = crate::devils::adversarial_devil(seed);
            let (imp, log, o) =
                run_with("attack.new.N.passE.level-1", CellCoord::new(40, 50), marginal_wall(Rat::new(1, 1 << 33), None), &mut dv);
            assert_eq!(imp.cases, vec![CaseKind::Marginal], "seed {seed}");
            assert!(imp.diagnostics.is_empty(), "{:?}", imp.diagnostics);
            assert!(imp.emitted().len() >= 2 && imp.emitted().len() as i64 <= 17 * 97);
            let p = log.current().p;
            match o {
                Outcome::Succ => assert_eq!(colony_of(97, p), imp.big().dest()),
                Outcome::Fail => assert!(imp.big().transits().contains(&colony_of(97, p))),
            }
        }
    }
}
