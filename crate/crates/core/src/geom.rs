//! Lattice geometry: cells, directions, colony arithmetic and the dihedral
//! symmetries used to express every move in a northward frame.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct CellCoord {
    pub x: i64,
    pub y: i64,
}

impl CellCoord {
    pub const ORIGIN: CellCoord = CellCoord { x: 0, y: 0 };

    pub const fn new(x: i64, y: i64) -> CellCoord {
        CellCoord { x, y }
    }

    pub fn offset(self, dx: i64, dy: i64) -> CellCoord {
        CellCoord::new(
            self.x.checked_add(dx).expect("coordinate overflow"),
            self.y.checked_add(dy).expect("coordinate overflow"),
        )
    }

    pub fn step(self, d: Direction) -> CellCoord {
        let (dx, dy) = d.vec();
        self.offset(dx, dy)
    }

    pub fn dot(self, d: Direction) -> i64 {
        let (dx, dy) = d.vec();
        self.x * dx + self.y * dy
    }
}

impl fmt::Debug for CellCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

impl fmt::Display for CellCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.x, self.y)
    }
}

/// Floor division toward negative infinity for a positive divisor.
pub fn floor_div(a: i64, b: i64) -> i64 {
    assert!(b > 0, "colony size must be positive");
    a.div_euclid(b)
}

/// Anchor of the size-`b` colony containing `u`: `b * floor(u / b)`.
pub fn floor_to(b: i64, u: CellCoord) -> CellCoord {
    CellCoord::new(
        floor_div(u.x, b).checked_mul(b).expect("coordinate overflow"),
        floor_div(u.y, b).checked_mul(b).expect("coordinate overflow"),
    )
}

/// Colony index (in colony units) of the size-`b` colony containing `u`.
pub fn colony_of(b: i64, u: CellCoord) -> CellCoord {
    CellCoord::new(floor_div(u.x, b), floor_div(u.y, b))
}

pub fn checked_pow(q: i64, k: u32) -> i64 {
    q.checked_pow(k).expect("colony size overflows i64; amplifier depth too large")
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub enum Direction {
    N,
    E,
    S,
    W,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::N, Direction::E, Direction::S, Direction::W];

    pub fn vec(self) -> (i64, i64) {
        match self {
            Direction::N => (0, 1),
            Direction::S => (0, -1),
            Direction::E => (1, 0),
            Direction::W => (-1, 0),
        }
    }

    pub fn from_vec(v: (i64, i64)) -> Option<Direction> {
        match v {
            (0, 1) => Some(Direction::N),
            (0, -1) => Some(Direction::S),
            (1, 0) => Some(Direction::E),
            (-1, 0) => Some(Direction::W),
            _ => None,
        }
    }

    pub fn cw(self) -> Direction {
        match self {
            Direction::N => Direction::E,
            Direction::E => Direction::S,
            Direction::S => Direction::W,
            Direction::W => Direction::N,
        }
    }

    pub fn ccw(self) -> Direction {
        self.cw().cw().cw()
    }

    pub fn opposite(self) -> Direction {
        self.cw().cw()
    }

    pub fn is_perpendicular(self, o: Direction) -> bool {
        self != o && self != o.opposite()
    }

    pub fn letter(self) -> char {
        match self {
            Direction::N => 'N',
            Direction::E => 'E',
            Direction::S => 'S',
            Direction::W => 'W',
        }
    }

    pub fn from_letter(c: char) -> Option<Direction> {
        match c {
            'N' => Some(Direction::N),
            'E' => Some(Direction::E),
            'S' => Some(Direction::S),
            'W' => Some(Direction::W),
            _ => None,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// Orthogonal lattice map given by its two column images: the canonical east
/// axis goes to `ex`, the canonical north axis goes to `ny`. Acting on lattice
/// corner points it is linear; a unit square `[c, c+1]` maps to a unit square,
/// so colony indices transform consistently at every scale.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Sym {
    pub ex: (i64, i64),
    pub ny: (i64, i64),
}

impl Sym {
    pub const ID: Sym = Sym { ex: (1, 0), ny: (0, 1) };

    /// Frame whose canonical north is `dir` and canonical east is `pass`.
    pub fn frame(dir: Direction, pass: Direction) -> Sym {
        assert!(dir.is_perpendicular(pass), "passing side must be perpendicular to the direction");
        Sym { ex: pass.vec(), ny: dir.vec() }
    }

    /// Frame for moves without a passing side: canonical east is `dir` rotated clockwise.
    pub fn toward(dir: Direction) -> Sym {
        Sym::frame(dir, dir.cw())
    }

    pub fn vec(&self, v: (i64, i64)) -> (i64, i64) {
        (v.0 * self.ex.0 + v.1 * self.ny.0, v.0 * self.ex.1 + v.1 * self.ny.1)
    }

    pub fn dir(&self, d: Direction) -> Direction {
        Direction::from_vec(self.vec(d.vec())).expect("orthogonal map keeps unit vectors")
    }

    pub fn inverse(&self) -> Sym {
        // Orthogonal: inverse is the transpose.
        Sym { ex: (self.ex.0, self.ny.0), ny: (self.ex.1, self.ny.1) }
    }

    pub fn then(&self, outer: &Sym) -> Sym {
        Sym { ex: outer.vec(self.ex), ny: outer.vec(self.ny) }
    }

    /// Image of the unit square with lower-left corner `c` (a cell index):
    /// returns the lower-left corner of the image square.
    pub fn cell(&self, c: (i64, i64)) -> (i64, i64) {
        let a = self.vec(c);
        let b = self.vec((c.0 + 1, c.1 + 1));
        (a.0.min(b.0), a.1.min(b.1))
    }
}

/// Half-open box of unit cells `[x0,x1) x [y0,y1)`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct CellBox {
    pub x0: i64,
    pub y0: i64,
    pub x1: i64,
    pub y1: i64,
}

impl CellBox {
    pub fn new(x0: i64, y0: i64, x1: i64, y1: i64) -> CellBox {
        CellBox { x0, y0, x1, y1 }
    }

    /// The size-`b` colony with index `c`.
    pub fn colony(b: i64, c: CellCoord) -> CellBox {
        let x0 = c.x.checked_mul(b).expect("coordinate overflow");
        let y0 = c.y.checked_mul(b).expect("coordinate overflow");
        CellBox::new(x0, y0, x0 + b, y0 + b)
    }

    pub fn contains(&self, p: CellCoord) -> bool {
        p.x >= self.x0 && p.x < self.x1 && p.y >= self.y0 && p.y < self.y1
    }

    pub fn is_empty(&self) -> bool {
        self.x0 >= self.x1 || self.y0 >= self.y1
    }

    pub fn area(&self) -> i128 {
        if self.is_empty() {
            0
        } else {
            (self.x1 - self.x0) as i128 * (self.y1 - self.y0) as i128
        }
    }

    pub fn intersect(&self, o: &CellBox) -> CellBox {
        CellBox::new(self.x0.max(o.x0), self.y0.max(o.y0), self.x1.min(o.x1), self.y1.min(o.y1))
    }

    pub fn cells(&self) -> impl Iterator<Item = CellCoord> + '_ {
        (self.x0..self.x1).flat_map(move |x| (self.y0..self.y1).map(move |y| CellCoord::new(x, y)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floor_to_examples() {
        assert_eq!(floor_to(5, CellCoord::new(7, -3)), CellCoord::new(5, -5));
        assert_eq!(floor_to(1, CellCoord::new(4, 9)), CellCoord::new(4, 9));
        assert_eq!(floor_to(97, CellCoord::new(97, -1)), CellCoord::new(97, -97));
    }

    #[test]
    fn frames_map_north_to_direction() {
        for d in Direction::ALL {
            for pass in [d.cw(), d.ccw()] {
                let s = Sym::frame(d, pass);
                assert_eq!(s.dir(Direction::N), d);
                assert_eq!(s.dir(Direction::E), pass);
                let inv = s.inverse();
                assert_eq!(inv.dir(d), Direction::N);
                assert_eq!(s.then(&inv), Sym::ID);
            }
        }
    }

    #[test]
    fn cell_map_is_consistent_with_offsets() {
        let s = Sym::frame(Direction::W, Direction::S);
        for c in [(0, 0), (3, -2), (-1, 5)] {
            let img = s.cell(c);
            let img_next = s.cell((c.0, c.1 + 1));
            let v = s.vec((0, 1));
            assert_eq!((img_next.0 - img.0, img_next.1 - img.1), v);
        }
        // rotation by 90 degrees counterclockwise sends cell (0,0) to (-1,0)
        let r = Sym { ex: (0, 1), ny: (-1, 0) };
        assert_eq!(r.cell((0, 0)), (-1, 0));
    }
}
