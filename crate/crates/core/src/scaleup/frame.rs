//! Canonical frames: a big move is handled as if it pointed north with its
//! passing side east and its start colony at big index (0,0).

use crate::geom::{CellCoord, Direction, Sym};
use crate::moves::{LocatedMove, MoveSpec, Off};

/// Maps canonical inner cells `(u, v)` to global inner colony indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Frame {
    pub sym: Sym,
    /// Global big colony index of canonical big colony (0,0).
    pub big: CellCoord,
    pub q: i64,
    shift: (i64, i64),
    unit: (i64, i64),
}

impl Frame {
    pub fn new(sym: Sym, big: CellCoord, q: i64) -> Frame {
        let m = sym.vec((q, q));
        let u = sym.vec((1, 1));
        Frame {
            sym,
            big,
            q,
            shift: (q * big.x - m.0.min(0), q * big.y - m.1.min(0)),
            unit: (u.0.min(0), u.1.min(0)),
        }
    }

    /// Frame of a located big move: north is its direction, east its passing
    /// side (clockwise of north for moves without one).
    pub fn for_move(lm: &LocatedMove, q: i64) -> Frame {
        let sym = match lm.z.pass {
            Some(p) if lm.z.kind != crate::moves::MoveKind::Turn => Sym::frame(lm.z.dir, p),
            _ => Sym::toward(lm.z.dir),
        };
        Frame::new(sym, lm.w, q)
    }

    pub fn to_global(&self, c: Off) -> CellCoord {
        let s = self.sym.cell(c);
        CellCoord::new(self.shift.0 + s.0, self.shift.1 + s.1)
    }

    pub fn to_canon(&self, g: CellCoord) -> Off {
        let d = (g.x - self.shift.0 - self.unit.0, g.y - self.shift.1 - self.unit.1);
        self.sym.inverse().vec(d)
    }

    /// Global direction of a canonical direction.
    pub fn dir(&self, d: Direction) -> Direction {
        self.sym.dir(d)
    }

    pub fn canon_dir(&self, d: Direction) -> Direction {
        self.sym.inverse().dir(d)
    }

    /// Global big colony of a canonical big offset.
    pub fn big_global(&self, h: Off) -> CellCoord {
        let v = self.sym.vec(h);
        self.big.offset(v.0, v.1)
    }

    /// Canonical big offset of a global big offset relative to the start.
    pub fn big_canon_offset(&self, o: Off) -> Off {
        self.sym.inverse().vec(o)
    }

    /// Place a canonical catalog entry at canonical cell `c`.
    pub fn located(&self, c: Off, z: &'static MoveSpec) -> LocatedMove {
        LocatedMove::new(self.to_global(c), z.image(&self.sym))
    }

    /// Canonical version of a global located move.
    pub fn canon_move(&self, lm: &LocatedMove) -> (Off, &'static MoveSpec) {
        (self.to_canon(lm.w), lm.z.image(&self.sym.inverse()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moves::{step, ContTemplate};

    fn all_frames() -> Vec<Sym> {
        Direction::ALL.iter().flat_map(|d| [Sym::frame(*d, d.cw()), Sym::frame(*d, d.ccw())]).collect()
    }

    #[test]
    fn canonical_start_colony_maps_onto_big_colony() {
        let q = 5;
        for s in all_frames() {
            let f = Frame::new(s, CellCoord::new(-2, 3), q);
            for u in 0..q {
                for v in 0..q {
                    let g = f.to_global((u, v));
                    assert_eq!(crate::geom::colony_of(q, g), CellCoord::new(-2, 3), "{s:?}");
                    assert_eq!(f.to_canon(g), (u, v));
                }
            }
            // canonical big colony (0,1) lies in the global direction of north
            let g = f.to_global((0, q));
            assert_eq!(crate::geom::colony_of(q, g), f.big_global((0, 1)));
        }
    }

    #[test]
    fn located_moves_follow_the_frame() {
        let q = 7;
        for s in all_frames() {
            let f = Frame::new(s, CellCoord::new(1, -1), q);
            let c = (2, 3);
            let lm = f.located(c, step(Direction::N));
            assert_eq!(lm.z.dir, f.dir(Direction::N));
            assert_eq!(lm.dest(), f.to_global((2, 4)));
            let back = f.canon_move(&lm);
            assert_eq!(back.0, c);
            assert_eq!(back.1.name, "step.N");
            let a = crate::moves::attack_v(ContTemplate::Corrected, crate::moves::MoveKind::NewAttack, Direction::N, Direction::E, -2)
                .unwrap();
            let la = f.located(c, a);
            let mut body: Vec<CellCoord> = la.body();
            body.sort();
            let mut want: Vec<CellCoord> = (-1..=3).map(|k| f.to_global((2, 3 + k))).collect();
            want.sort();
            assert_eq!(body, want);
        }
    }
}
