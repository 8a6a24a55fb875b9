//! Cheapest legs through a big body: Dijkstra over (cell, heading) with
//! geometric cost, restricted to plannable steps, jumps and turns.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::geom::{CellCoord, Direction};
use crate::moves::{self, ContTemplate, LocatedMove, TurnSecond};

use super::plane::Plane;

const FREE: usize = 4;

pub fn dir_index(d: Direction) -> usize {
    match d {
        Direction::N => 0,
        Direction::E => 1,
        Direction::S => 2,
        Direction::W => 3,
    }
}

/// Route request. Headings matter only when starts are direction dependent
/// (inner games above the base game); then a new move must continue the
/// heading and changes of heading go through turns.
pub struct RouteQuery<'a> {
    pub plane: &'a Plane,
    pub variant: ContTemplate,
    pub direction_free: bool,
    /// Cells a move may enter (its start colony is always allowed).
    pub usable: &'a dyn Fn(CellCoord) -> bool,
    /// Whether a state ends the leg.
    pub target: &'a dyn Fn(CellCoord, Option<Direction>) -> bool,
    /// Exactly checked first moves from the current position.
    pub first: &'a [LocatedMove],
    /// Moves required before a target counts (1 or 2).
    pub min_moves: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Leg {
    pub moves: Vec<LocatedMove>,
    /// Sum of planned geometric costs in colony units (8 per turn).
    pub cost: i64,
}

fn move_cost(lm: &LocatedMove) -> i64 {
    if lm.z.kind == moves::MoveKind::Turn {
        return 8;
    }
    let d = lm.dest();
    (d.x - lm.w.x) * lm.z.dir.vec().0 + (d.y - lm.w.y) * lm.z.dir.vec().1
}

impl RouteQuery<'_> {
    fn heading_of(&self, lm: &LocatedMove) -> usize {
        if self.direction_free {
            FREE
        } else {
            dir_index(lm.z.landing)
        }
    }

    fn expand(&self, c: CellCoord, h: usize, out: &mut Vec<LocatedMove>) {
        let v = self.variant;
        let dirs: Vec<Direction> = if h == FREE { Direction::ALL.to_vec() } else { vec![Direction::ALL[h]] };
        for d in dirs {
            let one = c.step(d);
            if (self.usable)(one) && self.plane.step_ok(c, d) {
                out.push(LocatedMove::new(c, moves::step_v(v, d)));
            }
            let two = one.step(d);
            if (self.usable)(one) && (self.usable)(two) && self.plane.jump_ok(c, d) {
                out.push(LocatedMove::new(c, moves::jump_v(v, d)));
            }
        }
        if h != FREE {
            let d = Direction::ALL[h];
            let mid = c.step(d);
            if !((self.usable)(mid) && self.plane.step_ok(c, d)) {
                return;
            }
            for l in [d.cw(), d.ccw()] {
                let a = mid.step(l);
                let b = a.step(l);
                if (self.usable)(a) && (self.usable)(b) && self.plane.jump_ok(mid, l) {
                    out.push(LocatedMove::new(c, moves::turn_v(v, d, l, TurnSecond::Jump)));
                }
            }
        }
    }

    pub fn solve(&self) -> Option<Leg> {
        let n = self.plane.len();
        let states = n * 10;
        let key = |k: usize, h: usize, enough: bool| (k * 5 + h) * 2 + enough as usize;
        let mut dist = vec![i64::MAX; states];
        let mut parent: Vec<Option<(u32, LocatedMove)>> = vec![None; states];
        let mut heap = BinaryHeap::new();
        const ROOT: u32 = u32::MAX;
        for lm in self.first {
            let Some(k) = self.plane.index(lm.dest()) else { continue };
            let s = key(k, self.heading_of(lm), self.min_moves <= 1);
            let c = move_cost(lm);
            if c < dist[s] {
                dist[s] = c;
                parent[s] = Some((ROOT, *lm));
                heap.push(Reverse((c, s)));
            }
        }
        let mut buf = Vec::new();
        while let Some(Reverse((c, s))) = heap.pop() {
            if c > dist[s] {
                continue;
            }
            let enough = s % 2 == 1;
            let h = (s / 2) % 5;
            let k = s / 10;
            let cell = self.plane.cell_at(k);
            let heading = if h == FREE { None } else { Some(Direction::ALL[h]) };
            if enough && (self.target)(cell, heading) {
                let mut moves = Vec::new();
                let mut cur = s;
                loop {
                    let (p, lm) = parent[cur].expect("reached states have parents");
                    moves.push(lm);
                    if p == ROOT {
                        break;
                    }
                    cur = p as usize;
                }
                moves.reverse();
                return Some(Leg { moves, cost: c });
            }
            buf.clear();
            self.expand(cell, h, &mut buf);
            for lm in &buf {
                let Some(k2) = self.plane.index(lm.dest()) else { continue };
                let s2 = key(k2, self.heading_of(lm), true);
                let c2 = c + move_cost(lm);
                if c2 < dist[s2] {
                    dist[s2] = c2;
                    parent[s2] = Some((s as u32, *lm));
                    heap.push(Reverse((c2, s2)));
                }
            }
        }
        None
    }
}
