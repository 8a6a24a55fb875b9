//! The finite move catalog and located moves.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::geom::{CellBox, CellCoord, Direction, Sym};

pub type Off = (i64, i64);

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub enum MoveKind {
    Step,
    Jump,
    Turn,
    Escape,
    Finish,
    NewAttack,
    ContAttack,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum TurnSecond {
    Jump,
    Attack(i8),
}

/// Which continuing-attack pre-template the catalog uses.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Default, Serialize, Deserialize)]
pub enum ContTemplate {
    /// `U ∪ {(-1,s),(-1,s+1)}`.
    #[default]
    Corrected,
    /// `U ∪ {(-1,s),(-1,s+1),(0,-s)}`, read literally.
    Literal,
}

#[derive(Clone, Debug)]
pub struct MoveSpec {
    pub variant: ContTemplate,
    pub kind: MoveKind,
    /// Starting direction.
    pub dir: Direction,
    pub landing: Direction,
    /// Passing side of attacks and escapes (for attack turns: the step direction).
    pub pass: Option<Direction>,
    /// Attack level, finish length, or 0.
    pub level: i8,
    pub second: Option<TurnSecond>,
    /// Template `H`, sorted.
    pub template: Vec<Off>,
    pub ends: Vec<Off>,
    pub dest: Off,
    pub transits: Vec<Off>,
    pub obstacle: Option<Off>,
    /// Reduced body: passing-side column for continuing attacks and escapes;
    /// the whole body column for new attacks (and the attack part of turns).
    pub reduced: Vec<Off>,
    /// Part of the reduced body strictly before the obstacle (attacks).
    pub below_obstacle: Vec<Off>,
    /// Body run from the starting colony through the destination (new attacks).
    pub forward_run: Vec<Off>,
    /// For turns: offset of the second constituent's start and its spec.
    pub second_at: Off,
    pub name: String,
}

impl MoveSpec {
    pub fn is_attack(&self) -> bool {
        matches!(self.kind, MoveKind::NewAttack | MoveKind::ContAttack)
            || matches!(self.second, Some(TurnSecond::Attack(_)))
    }

    /// Continuing moves need a preceding failure as witness.
    pub fn is_continuing(&self) -> bool {
        matches!(self.kind, MoveKind::ContAttack | MoveKind::Escape | MoveKind::Finish)
    }

    pub fn is_new(&self) -> bool {
        !self.is_continuing()
    }

    pub fn has_reduced_body(&self) -> bool {
        matches!(self.kind, MoveKind::ContAttack | MoveKind::Escape)
    }

    /// The constituent step of a turn.
    pub fn turn_step(&self) -> &'static MoveSpec {
        assert_eq!(self.kind, MoveKind::Turn);
        lookup_step(self.variant, MoveKind::Step, self.dir)
    }

    /// The second constituent of a turn (a jump or a new attack).
    pub fn turn_second(&self) -> &'static MoveSpec {
        let cat = catalog(self.variant);
        match self.second.expect("turn") {
            TurnSecond::Jump => lookup_step(self.variant, MoveKind::Jump, self.landing),
            TurnSecond::Attack(s) => cat
                .iter()
                .find(|m| {
                    m.kind == MoveKind::NewAttack && m.dir == self.landing && m.pass == Some(self.dir) && m.level == s
                })
                .expect("attack constituent"),
        }
    }
}

impl MoveSpec {
    /// The catalog entry whose template is the image of this one under `s`.
    pub fn image(&self, s: &Sym) -> &'static MoveSpec {
        let (dir, landing, pass) = (s.dir(self.dir), s.dir(self.landing), self.pass.map(|p| s.dir(p)));
        catalog(self.variant)
            .iter()
            .find(|m| {
                m.kind == self.kind
                    && m.dir == dir
                    && m.landing == landing
                    && m.pass == pass
                    && m.level == self.level
                    && m.second == self.second
            })
            .expect("catalog is closed under lattice symmetries")
    }
}

impl PartialEq for MoveSpec {
    fn eq(&self, o: &Self) -> bool {
        self.variant == o.variant && self.name == o.name
    }
}
impl Eq for MoveSpec {}

impl fmt::Display for MoveSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

fn lookup_step(variant: ContTemplate, kind: MoveKind, dir: Direction) -> &'static MoveSpec {
    catalog(variant).iter().find(|m| m.kind == kind && m.dir == dir).expect("catalog entry")
}

fn add(a: Off, b: Off) -> Off {
    (a.0 + b.0, a.1 + b.1)
}

fn sorted(v: impl IntoIterator<Item = Off>) -> Vec<Off> {
    v.into_iter().collect::<BTreeSet<_>>().into_iter().collect()
}

struct Proto {
    template: Vec<Off>,
    ends: Vec<Off>,
    dest: Off,
    transits: Vec<Off>,
    obstacle: Option<Off>,
    reduced: Vec<Off>,
    below: Vec<Off>,
    forward: Vec<Off>,
}

impl Proto {
    fn map(&self, s: &Sym) -> Proto {
        let m = |v: &Vec<Off>| sorted(v.iter().map(|o| s.vec(*o)));
        Proto {
            template: m(&self.template),
            ends: m(&self.ends),
            dest: s.vec(self.dest),
            transits: m(&self.transits),
            obstacle: self.obstacle.map(|o| s.vec(o)),
            reduced: m(&self.reduced),
            below: m(&self.below),
            forward: m(&self.forward),
        }
    }
}

fn simple(template: Vec<Off>, dest: Off, obstacle: Option<Off>) -> Proto {
    Proto {
        template: sorted(template),
        ends: vec![dest],
        dest,
        transits: vec![],
        obstacle,
        reduced: vec![],
        below: vec![],
        forward: vec![],
    }
}

fn step_proto() -> Proto {
    simple(vec![(0, 0), (0, 1)], (0, 1), None)
}

fn jump_proto() -> Proto {
    simple(vec![(0, 0), (0, 1), (0, 2)], (0, 2), Some((0, 1)))
}

fn escape_proto() -> Proto {
    let mut p = simple(vec![(0, 0), (0, 1), (1, 0), (1, -1)], (1, 0), None);
    p.reduced = sorted([(1, 0), (1, -1)]);
    p
}

fn finish_proto(len: i64) -> Proto {
    simple((0..=len).map(|k| (0, k)).collect(), (0, len), None)
}

/// Northward new attack of level `s` passing east, offsets relative to its start.
fn new_attack_proto(s: i64) -> Proto {
    let lo = s.min(-3);
    let sh = |y: i64| (0, y - s);
    let body: Vec<Off> = (lo..=1).map(sh).collect();
    let transits = vec![sh(-1), sh(0), sh(1)];
    Proto {
        template: sorted(body.clone()),
        ends: sorted(transits.clone()),
        dest: sh(1),
        transits: sorted(transits),
        obstacle: Some(sh(0)),
        reduced: sorted(body),
        below: sorted((lo..0).map(sh)),
        forward: sorted((s..=1).map(sh)),
    }
}

fn cont_attack_proto(s: i64, variant: ContTemplate) -> Proto {
    let sh = |x: i64, y: i64| (x + 1, y - s);
    let mut right: Vec<Off> = (-3..=1).map(|y| sh(0, y)).collect();
    if variant == ContTemplate::Literal {
        right.push(sh(0, -s));
    }
    let mut body = right.clone();
    body.push(sh(-1, s));
    body.push(sh(-1, s + 1));
    let transits = vec![sh(0, -1), sh(0, 0), sh(0, 1)];
    Proto {
        template: sorted(body),
        ends: sorted(transits.clone()),
        dest: sh(0, 1),
        transits: sorted(transits),
        obstacle: Some(sh(0, 0)),
        reduced: sorted(right.clone()),
        below: sorted(right.iter().copied().filter(|o| o.1 < sh(0, 0).1)),
        forward: vec![],
    }
}

fn attack_name(kind: &str, dir: Direction, pass: Direction, s: i64) -> String {
    let lvl = if s > 0 { format!("+{s}") } else { format!("{s}") };
    format!("attack.{kind}.{dir}.pass{pass}.level{lvl}")
}

fn build(variant: ContTemplate) -> Vec<MoveSpec> {
    let mut out = Vec::new();
    let mut push = |kind: MoveKind,
                    dir: Direction,
                    landing: Direction,
                    pass: Option<Direction>,
                    level: i64,
                    second: Option<TurnSecond>,
                    p: Proto,
                    second_at: Off,
                    name: String| {
        out.push(MoveSpec {
            variant,
            kind,
            dir,
            landing,
            pass,
            level: level as i8,
            second,
            template: p.template,
            ends: p.ends,
            dest: p.dest,
            transits: p.transits,
            obstacle: p.obstacle,
            reduced: p.reduced,
            below_obstacle: p.below,
            forward_run: p.forward,
            second_at,
            name,
        });
    };
    for d in Direction::ALL {
        let s = Sym::toward(d);
        push(MoveKind::Step, d, d, None, 0, None, step_proto().map(&s), (0, 0), format!("step.{d}"));
    }
    for d in Direction::ALL {
        let s = Sym::toward(d);
        push(MoveKind::Jump, d, d, None, 0, None, jump_proto().map(&s), (0, 0), format!("jump.{d}"));
    }
    for d in Direction::ALL {
        for pass in [d.cw(), d.ccw()] {
            let s = Sym::frame(d, pass);
            push(MoveKind::Escape, d, d, Some(pass), 0, None, escape_proto().map(&s), (0, 0), format!("escape.{d}.pass{pass}"));
        }
    }
    for d in Direction::ALL {
        for len in 1..=5 {
            let s = Sym::toward(d);
            push(MoveKind::Finish, d, d, None, len, None, finish_proto(len).map(&s), (0, 0), format!("finish.{d}.len{len}"));
        }
    }
    for d in Direction::ALL {
        for pass in [d.cw(), d.ccw()] {
            let s = Sym::frame(d, pass);
            for lvl in -4..=-1 {
                push(
                    MoveKind::NewAttack,
                    d,
                    d,
                    Some(pass),
                    lvl,
                    None,
                    new_attack_proto(lvl).map(&s),
                    (0, 0),
                    attack_name("new", d, pass, lvl),
                );
            }
        }
    }
    for d in Direction::ALL {
        for pass in [d.cw(), d.ccw()] {
            let s = Sym::frame(d, pass);
            for lvl in -3..=1 {
                push(
                    MoveKind::ContAttack,
                    d,
                    d,
                    Some(pass),
                    lvl,
                    None,
                    cont_attack_proto(lvl, variant).map(&s),
                    (0, 0),
                    attack_name("cont", d, pass, lvl),
                );
            }
        }
    }
    for d in Direction::ALL {
        let step = step_proto().map(&Sym::toward(d));
        let at = step.dest;
        for l in [d.cw(), d.ccw()] {
            let mut seconds = vec![(TurnSecond::Jump, jump_proto().map(&Sym::toward(l)))];
            for lvl in -4..=-1 {
                seconds.push((TurnSecond::Attack(lvl as i8), new_attack_proto(lvl).map(&Sym::frame(l, d))));
            }
            for (second, p2) in seconds {
                let shift = |v: &Vec<Off>| sorted(v.iter().map(|o| add(*o, at)));
                let template = sorted(step.template.iter().copied().chain(p2.template.iter().map(|o| add(*o, at))));
                let (pass, level, suffix) = match second {
                    TurnSecond::Jump => (None, 0, "jump".to_string()),
                    TurnSecond::Attack(s) => (Some(d), s as i64, format!("attack.level{s}")),
                };
                let p = Proto {
                    template,
                    ends: shift(&p2.ends),
                    dest: add(p2.dest, at),
                    transits: shift(&p2.transits),
                    obstacle: p2.obstacle.map(|o| add(o, at)),
                    reduced: shift(&p2.reduced),
                    below: shift(&p2.below),
                    forward: shift(&p2.forward),
                };
                push(MoveKind::Turn, d, l, pass, level, Some(second), p, at, format!("turn.{d}.{l}.{suffix}"));
            }
        }
    }
    out
}

/// The full catalog for a template variant (148 entries).
pub fn catalog(variant: ContTemplate) -> &'static [MoveSpec] {
    static CORRECTED: OnceLock<Vec<MoveSpec>> = OnceLock::new();
    static LITERAL: OnceLock<Vec<MoveSpec>> = OnceLock::new();
    match variant {
        ContTemplate::Corrected => CORRECTED.get_or_init(|| build(ContTemplate::Corrected)),
        ContTemplate::Literal => LITERAL.get_or_init(|| build(ContTemplate::Literal)),
    }
}

pub fn by_name(variant: ContTemplate, name: &str) -> Option<&'static MoveSpec> {
    catalog(variant).iter().find(|m| m.name == name)
}

pub fn step(dir: Direction) -> &'static MoveSpec {
    lookup_step(ContTemplate::Corrected, MoveKind::Step, dir)
}

pub fn step_v(variant: ContTemplate, dir: Direction) -> &'static MoveSpec {
    lookup_step(variant, MoveKind::Step, dir)
}

pub fn jump_v(variant: ContTemplate, dir: Direction) -> &'static MoveSpec {
    lookup_step(variant, MoveKind::Jump, dir)
}

pub fn finish_v(variant: ContTemplate, dir: Direction, len: i64) -> &'static MoveSpec {
    catalog(variant)
        .iter()
        .find(|m| m.kind == MoveKind::Finish && m.dir == dir && m.level as i64 == len)
        .expect("finish length 1..5")
}

pub fn escape_v(variant: ContTemplate, dir: Direction, pass: Direction) -> &'static MoveSpec {
    catalog(variant)
        .iter()
        .find(|m| m.kind == MoveKind::Escape && m.dir == dir && m.pass == Some(pass))
        .expect("escape")
}

pub fn attack_v(variant: ContTemplate, kind: MoveKind, dir: Direction, pass: Direction, level: i64) -> Option<&'static MoveSpec> {
    catalog(variant)
        .iter()
        .find(|m| m.kind == kind && m.dir == dir && m.pass == Some(pass) && m.level as i64 == level)
}

pub fn turn_v(variant: ContTemplate, dir: Direction, landing: Direction, second: TurnSecond) -> &'static MoveSpec {
    catalog(variant)
        .iter()
        .find(|m| m.kind == MoveKind::Turn && m.dir == dir && m.landing == landing && m.second == Some(second))
        .expect("turn")
}

/// A move placed at colony index `w` (colony units).
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct LocatedMove {
    pub w: CellCoord,
    pub z: &'static MoveSpec,
}

impl LocatedMove {
    pub fn new(w: CellCoord, z: &'static MoveSpec) -> LocatedMove {
        LocatedMove { w, z }
    }

    pub fn colony(&self, o: Off) -> CellCoord {
        self.w.offset(o.0, o.1)
    }

    pub fn colonies<'a>(&'a self, offs: &'a [Off]) -> impl Iterator<Item = CellCoord> + 'a {
        offs.iter().map(move |o| self.colony(*o))
    }

    pub fn body(&self) -> Vec<CellCoord> {
        self.colonies(&self.z.template).collect()
    }

    pub fn dest(&self) -> CellCoord {
        self.colony(self.z.dest)
    }

    pub fn ends(&self) -> Vec<CellCoord> {
        self.colonies(&self.z.ends).collect()
    }

    pub fn transits(&self) -> Vec<CellCoord> {
        self.colonies(&self.z.transits).collect()
    }

    pub fn reduced_body(&self) -> Option<Vec<CellCoord>> {
        if self.z.has_reduced_body() {
            Some(self.colonies(&self.z.reduced).collect())
        } else {
            None
        }
    }

    /// Cells that count for simplicity: the reduced body for continuing
    /// attacks and escapes, nothing for finish moves, else the body.
    pub fn footprint(&self) -> Option<Vec<CellCoord>> {
        match self.z.kind {
            MoveKind::Finish => None,
            MoveKind::ContAttack | MoveKind::Escape => self.reduced_body(),
            _ => Some(self.body()),
        }
    }

    /// Unit-cell boxes of the body at colony size `b`.
    pub fn body_boxes(&self, b: i64) -> Vec<CellBox> {
        self.body().into_iter().map(|c| CellBox::colony(b, c)).collect()
    }

    pub fn name(&self) -> String {
        format!("{}@{},{}", self.z.name, self.w.x, self.w.y)
    }

    pub fn parse(variant: ContTemplate, s: &str) -> Option<LocatedMove> {
        let (name, at) = s.split_once('@')?;
        let (x, y) = at.split_once(',')?;
        Some(LocatedMove::new(CellCoord::new(x.parse().ok()?, y.parse().ok()?), by_name(variant, name)?))
    }

    /// The constituents of a turn, each located.
    pub fn turn_parts(&self) -> (LocatedMove, LocatedMove) {
        let at = self.z.second_at;
        (LocatedMove::new(self.w, self.z.turn_step()), LocatedMove::new(self.colony(at), self.z.turn_second()))
    }
}

impl fmt::Debug for LocatedMove {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl fmt::Display for LocatedMove {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn get(name: &str) -> &'static MoveSpec {
        by_name(ContTemplate::Corrected, name).unwrap_or_else(|| panic!("{name}"))
    }

    #[test]
    fn catalog_size_and_names_unique() {
        for v in [ContTemplate::Corrected, ContTemplate::Literal] {
            let cat = catalog(v);
            assert_eq!(cat.len(), 4 + 4 + 8 + 20 + 32 + 40 + 40);
            let names: BTreeSet<_> = cat.iter().map(|m| m.name.clone()).collect();
            assert_eq!(names.len(), cat.len());
        }
    }

    #[test]
    fn prototypes_match_definitions() {
        assert_eq!(get("step.N").template, vec![(0, 0), (0, 1)]);
        assert_eq!(get("jump.N").template, vec![(0, 0), (0, 1), (0, 2)]);
        assert_eq!(get("jump.E").template, vec![(0, 0), (1, 0), (2, 0)]);
        assert_eq!(get("escape.N.passE").template, vec![(0, 0), (0, 1), (1, -1), (1, 0)]);
        assert_eq!(get("escape.N.passE").dest, (1, 0));
        assert_eq!(get("finish.S.len3").template, vec![(0, -3), (0, -2), (0, -1), (0, 0)]);
        assert_eq!(get("finish.S.len3").dest, (0, -3));
    }

    #[test]
    fn new_attack_level_minus_four() {
        let a = get("attack.new.N.passE.level-4");
        // pre-template U ∪ {(0,-4)} shifted by the start (0,-4)
        let expect: Vec<Off> = (-4..=1).map(|y| (0, y + 4)).collect();
        assert_eq!(a.template, expect);
        assert_eq!(a.obstacle, Some((0, 4)));
        assert_eq!(a.dest, (0, 5));
        assert_eq!(a.transits, vec![(0, 3), (0, 4), (0, 5)]);
        assert_eq!(a.forward_run, vec![(0, 0), (0, 1), (0, 2), (0, 3), (0, 4), (0, 5)]);
    }

    #[test]
    fn continuing_attack_reduced_body() {
        let a = get("attack.cont.N.passE.level+1");
        assert_eq!(a.reduced.len(), 5);
        assert!(a.reduced.iter().all(|o| o.0 == 1));
        assert_eq!(a.dest, (1, 0));
        let lit = by_name(ContTemplate::Literal, "attack.cont.N.passE.level-3").unwrap();
        // the printed extra cell (0,3) sits above the destination
        assert_eq!(lit.reduced.len(), 6);
        assert!(lit.template.contains(&(1, 6)));
        assert_eq!(lit.dest, (1, 4));
    }

    #[test]
    fn invariants_hold_for_every_entry() {
        for v in [ContTemplate::Corrected, ContTemplate::Literal] {
            for m in catalog(v) {
                assert!(m.ends.contains(&m.dest), "{}", m.name);
                assert!(m.ends.iter().all(|e| m.template.contains(e)), "{}", m.name);
                assert!(m.transits.iter().all(|e| m.ends.contains(e)), "{}", m.name);
                assert!(m.template.contains(&(0, 0)), "{}", m.name);
                assert_eq!(m.kind == MoveKind::Turn, m.landing != m.dir, "{}", m.name);
            }
        }
    }

    #[test]
    fn rotation_permutes_catalog() {
        let rot = Sym { ex: (0, -1), ny: (1, 0) }; // clockwise quarter turn
        for m in catalog(ContTemplate::Corrected) {
            let img: Vec<Off> = sorted(m.template.iter().map(|o| rot.vec(*o)));
            let found = catalog(ContTemplate::Corrected).iter().any(|n| {
                n.kind == m.kind
                    && n.dir == rot.dir(m.dir)
                    && n.level == m.level
                    && n.template == img
                    && n.dest == rot.vec(m.dest)
            });
            assert!(found, "{}", m.name);
        }
    }

    #[test]
    fn image_matches_mapped_template() {
        let mut syms = Vec::new();
        for d in Direction::ALL {
            syms.push(Sym::frame(d, d.cw()));
            syms.push(Sym::frame(d, d.ccw()));
        }
        for v in [ContTemplate::Corrected, ContTemplate::Literal] {
            for m in catalog(v) {
                for s in &syms {
                    let img = m.image(s);
                    assert_eq!(img.template, sorted(m.template.iter().map(|o| s.vec(*o))), "{} {:?}", m.name, s);
                    assert_eq!(img.dest, s.vec(m.dest));
                    assert_eq!(img.reduced, sorted(m.reduced.iter().map(|o| s.vec(*o))));
                    assert_eq!(img.obstacle, m.obstacle.map(|o| s.vec(o)));
                    assert_eq!(img.image(&s.inverse()), m);
                }
            }
        }
    }

    #[test]
    fn turn_composition() {
        let t = get("turn.N.E.jump");
        assert_eq!(t.template, vec![(0, 0), (0, 1), (1, 1), (2, 1)]);
        assert_eq!(t.dest, (2, 1));
        let ta = get("turn.E.N.attack.level-1");
        assert_eq!(ta.pass, Some(Direction::E));
        assert_eq!(ta.second_at, (1, 0));
        assert_eq!(ta.turn_second().name, "attack.new.N.passE.level-1");
    }

    #[test]
    fn located_name_round_trip() {
        let lm = LocatedMove::new(CellCoord::new(-3, 7), get("attack.cont.W.passN.level0"));
        assert_eq!(LocatedMove::parse(ContTemplate::Corrected, &lm.name()), Some(lm));
        let body = LocatedMove::new(CellCoord::ORIGIN, get("step.N")).body_boxes(3);
        assert_eq!(body[0], CellBox::new(0, 0, 3, 3));
        assert_eq!(body[1], CellBox::new(0, 3, 3, 6));
    }
}
