//! Dense inner-colony masses over a rectangle with the planning predicates
//! used by routes: moves are planned one grade stricter than the angel rules
//! demand at execution time.

use crate::geom::{CellCoord, Direction};
use crate::measure::{ColonyGrid, Measure};
use crate::rat::Rat;
use crate::runs::Thresholds;

const SAFE: u8 = 1;
const PAIR_E: u8 = 2;
const PAIR_N: u8 = 4;
const TRIP_E: u8 = 8;
const TRIP_N: u8 = 16;

/// Inclusive-exclusive rectangle of colony indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Bounds {
    pub x0: i64,
    pub y0: i64,
    pub x1: i64,
    pub y1: i64,
}

impl Bounds {
    pub fn around<I: IntoIterator<Item = CellCoord>>(cells: I) -> Bounds {
        let mut b = Bounds { x0: i64::MAX, y0: i64::MAX, x1: i64::MIN, y1: i64::MIN };
        for c in cells {
            b.x0 = b.x0.min(c.x);
            b.y0 = b.y0.min(c.y);
            b.x1 = b.x1.max(c.x + 1);
            b.y1 = b.y1.max(c.y + 1);
        }
        assert!(b.x0 < b.x1, "bounds of an empty set");
        b
    }

    pub fn contains(&self, c: CellCoord) -> bool {
        c.x >= self.x0 && c.x < self.x1 && c.y >= self.y0 && c.y < self.y1
    }

    pub fn width(&self) -> i64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> i64 {
        self.y1 - self.y0
    }
}

#[derive(Clone, Debug)]
pub struct Plane {
    pub b: i64,
    pub th: Thresholds,
    pub bounds: Bounds,
    mass: Vec<Rat>,
    flags: Vec<u8>,
}

impl Plane {
    pub fn build(mu: &Measure, b: i64, th: Thresholds, bounds: Bounds) -> Plane {
        let (w, h) = (bounds.width() as usize, bounds.height() as usize);
        let grid = ColonyGrid::build(mu, b, CellCoord::new(bounds.x0, bounds.y0), w, h);
        let mass: Vec<Rat> = (0..h).flat_map(|j| (0..w).map(move |i| (i, j))).map(|(i, j)| grid.at(i, j)).collect();
        let safe = th.safe_bound(Rat::ZERO, b);
        let good1 = th.good_bound(Rat::ONE, b);
        let mut flags = vec![0u8; w * h];
        let at = |i: usize, j: usize| mass[j * w + i];
        let zero = |i: usize, j: usize| i >= w || j >= h || mass[j * w + i].is_zero();
        let all = SAFE | PAIR_E | PAIR_N | TRIP_E | TRIP_N;
        for j in 0..h {
            for i in 0..w {
                // an empty neighbourhood satisfies every positive bound
                if zero(i, j) && zero(i + 1, j) && zero(i + 2, j) && zero(i, j + 1) && zero(i, j + 2) {
                    let mut f = all;
                    if i + 1 >= w {
                        f &= !PAIR_E;
                    }
                    if i + 2 >= w {
                        f &= !TRIP_E;
                    }
                    if j + 1 >= h {
                        f &= !PAIR_N;
                    }
                    if j + 2 >= h {
                        f &= !TRIP_N;
                    }
                    flags[j * w + i] = f;
                    continue;
                }
                let m = at(i, j);
                let mut f = 0;
                if m < safe {
                    f |= SAFE;
                }
                if i + 1 < w && m + at(i + 1, j) < safe {
                    f |= PAIR_E;
                }
                if j + 1 < h && m + at(i, j + 1) < safe {
                    f |= PAIR_N;
                }
                if i + 2 < w && m + at(i + 1, j) + at(i + 2, j) < good1 {
                    f |= TRIP_E;
                }
                if j + 2 < h && m + at(i, j + 1) + at(i, j + 2) < good1 {
                    f |= TRIP_N;
                }
                flags[j * w + i] = f;
            }
        }
        Plane { b, th, bounds, mass, flags }
    }

    fn idx(&self, c: CellCoord) -> Option<usize> {
        if !self.bounds.contains(c) {
            return None;
        }
        Some(((c.y - self.bounds.y0) * self.bounds.width() + (c.x - self.bounds.x0)) as usize)
    }

    pub fn index(&self, c: CellCoord) -> Option<usize> {
        self.idx(c)
    }

    pub fn cell_at(&self, k: usize) -> CellCoord {
        let w = self.bounds.width();
        CellCoord::new(self.bounds.x0 + k as i64 % w, self.bounds.y0 + k as i64 / w)
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn mass(&self, c: CellCoord) -> Rat {
        self.idx(c).map(|k| self.mass[k]).unwrap_or_default()
    }

    fn flag(&self, c: CellCoord, f: u8) -> bool {
        self.idx(c).map(|k| self.flags[k] & f != 0).unwrap_or(false)
    }

    pub fn safe(&self, c: CellCoord) -> bool {
        self.flag(c, SAFE)
    }

    /// The pair `{c, c+d}` is 0-safe.
    pub fn pair_ok(&self, c: CellCoord, d: Direction) -> bool {
        match d {
            Direction::E => self.flag(c, PAIR_E),
            Direction::N => self.flag(c, PAIR_N),
            Direction::W => self.flag(c.step(d), PAIR_E),
            Direction::S => self.flag(c.step(d), PAIR_N),
        }
    }

    /// A step from `c` toward `d` is plannable.
    pub fn step_ok(&self, c: CellCoord, d: Direction) -> bool {
        self.pair_ok(c, d)
    }

    /// A jump from `c` toward `d` is plannable: 1-good body, 0-safe landing.
    pub fn jump_ok(&self, c: CellCoord, d: Direction) -> bool {
        let far = c.step(d).step(d);
        let trip = match d {
            Direction::E => self.flag(c, TRIP_E),
            Direction::N => self.flag(c, TRIP_N),
            Direction::W => self.flag(far, TRIP_E),
            Direction::S => self.flag(far, TRIP_N),
        };
        trip && self.safe(far)
    }

    pub fn set_mass<'a, I: IntoIterator<Item = &'a CellCoord>>(&self, cells: I) -> Rat {
        cells.into_iter().map(|c| self.mass(*c)).sum()
    }
}
