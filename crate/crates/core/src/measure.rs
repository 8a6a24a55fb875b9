//! Sparse exact measures on unit cells and colony aggregation.

use std::fmt;

use im::OrdMap;
use serde::{Deserialize, Serialize};

use crate::geom::{floor_div, CellBox, CellCoord};
use crate::rat::{NegativeWeight, Rat, Weight};

/// Finite map from cells to strictly positive weights, with its total.
/// Cloning is cheap (structural sharing), so histories keep full snapshots.
#[derive(Clone, Default, PartialEq, Eq)]
pub struct Measure {
    cells: OrdMap<CellCoord, Weight>,
    total: Weight,
}

/// One serialized cell record: `(x, y, numerator, denominator)`.
pub type CellRecord = (i64, i64, i128, i128);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MeasureError {
    #[error(transparent)]
    Negative(#[from] NegativeWeight),
    #[error("malformed measure record on line {line}: {text:?}")]
    Malformed { line: usize, text: String },
    #[error("records out of order or duplicated at line {0}")]
    Order(usize),
}

impl Measure {
    pub fn new() -> Measure {
        Measure::default()
    }

    pub fn total(&self) -> Weight {
        self.total
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn weight(&self, c: CellCoord) -> Weight {
        self.cells.get(&c).copied().unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (CellCoord, Weight)> + '_ {
        self.cells.iter().map(|(c, w)| (*c, *w))
    }

    /// New measure with `amount` added at `cell`; `self` is unchanged.
    pub fn deposit(&self, cell: CellCoord, amount: Rat) -> Result<Measure, MeasureError> {
        let mut m = self.clone();
        m.deposit_in_place(cell, amount)?;
        Ok(m)
    }

    pub fn deposit_in_place(&mut self, cell: CellCoord, amount: Rat) -> Result<(), MeasureError> {
        let amount = Weight::new(amount)?;
        if amount.is_zero() {
            return Ok(());
        }
        let w = self.weight(cell) + amount;
        self.cells.insert(cell, w);
        self.total += amount;
        Ok(())
    }

    /// Mass of the half-open box of unit cells.
    pub fn mass_box(&self, b: &CellBox) -> Rat {
        if b.is_empty() || self.cells.is_empty() {
            return Rat::ZERO;
        }
        let mut sum = Rat::ZERO;
        let width = (b.x1 - b.x0) as u64;
        if width as usize <= 64.max(self.cells.len() / 64) {
            for x in b.x0..b.x1 {
                let lo = CellCoord::new(x, b.y0);
                let hi = CellCoord::new(x, b.y1);
                for (_, w) in self.cells.range(lo..hi) {
                    sum += w.get();
                }
            }
        } else {
            let lo = CellCoord::new(b.x0, i64::MIN);
            let hi = CellCoord::new(b.x1, i64::MIN);
            for (c, w) in self.cells.range(lo..hi) {
                if c.y >= b.y0 && c.y < b.y1 {
                    sum += w.get();
                }
            }
        }
        sum
    }

    pub fn mass_cells<'a>(&self, cells: impl IntoIterator<Item = &'a CellCoord>) -> Rat {
        cells.into_iter().map(|c| self.weight(*c).get()).sum()
    }

    /// Stored cells inside the box.
    pub fn cells_in(&self, b: &CellBox) -> Vec<(CellCoord, Weight)> {
        let lo = CellCoord::new(b.x0, i64::MIN);
        let hi = CellCoord::new(b.x1, i64::MIN);
        self.cells
            .range(lo..hi)
            .filter(|(c, _)| c.y >= b.y0 && c.y < b.y1)
            .map(|(c, w)| (*c, *w))
            .collect()
    }

    /// Pointwise `self >= other`.
    pub fn dominates(&self, other: &Measure) -> bool {
        other.cells.iter().all(|(c, w)| self.weight(*c) >= *w)
    }

    /// Cells where `self` exceeds `base`, with the increments, sorted by cell.
    /// Requires `self` to dominate `base`.
    pub fn delta_from(&self, base: &Measure) -> Vec<(CellCoord, Rat)> {
        let mut out = Vec::new();
        for (c, w) in self.cells.iter() {
            let d = w.get() - base.weight(*c).get();
            if !d.is_zero() {
                out.push((*c, d));
            }
        }
        out
    }

    pub fn apply_delta(&self, delta: &[(CellCoord, Rat)]) -> Result<Measure, MeasureError> {
        let mut m = self.clone();
        for (c, a) in delta {
            m.deposit_in_place(*c, *a)?;
        }
        Ok(m)
    }

    pub fn to_records(&self) -> Vec<CellRecord> {
        self.cells.iter().map(|(c, w)| (c.x, c.y, w.get().numer(), w.get().denom())).collect()
    }

    pub fn from_records(recs: &[CellRecord]) -> Result<Measure, MeasureError> {
        let mut m = Measure::new();
        let mut prev: Option<CellCoord> = None;
        for (i, &(x, y, n, d)) in recs.iter().enumerate() {
            let c = CellCoord::new(x, y);
            if prev.is_some_and(|p| p >= c) {
                return Err(MeasureError::Order(i + 1));
            }
            if d <= 0 || n <= 0 {
                return Err(MeasureError::Malformed { line: i + 1, text: format!("{x} {y} {n} {d}") });
            }
            m.deposit_in_place(c, Rat::new(n, d))?;
            prev = Some(c);
        }
        Ok(m)
    }

    /// One line per cell: `x y numerator denominator`, sorted by `(x, y)`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (x, y, n, d) in self.to_records() {
            s.push_str(&format!("{x} {y} {n} {d}\n"));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Measure, MeasureError> {
        let mut recs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = || MeasureError::Malformed { line: i + 1, text: line.to_string() };
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 4 {
                return Err(bad());
            }
            recs.push((
                f[0].parse().map_err(|_| bad())?,
                f[1].parse().map_err(|_| bad())?,
                f[2].parse().map_err(|_| bad())?,
                f[3].parse().map_err(|_| bad())?,
            ));
        }
        Measure::from_records(&recs)
    }
}

impl fmt::Debug for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.cells.iter()).finish()
    }
}

impl Serialize for Measure {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_records().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Measure {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Measure, D::Error> {
        let recs = Vec::<CellRecord>::deserialize(d)?;
        Measure::from_records(&recs).map_err(serde::de::Error::custom)
    }
}

/// Dense colony masses over a rectangle of colony indices at scale `b`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColonyGrid {
    pub b: i64,
    pub origin: CellCoord,
    pub width: usize,
    pub height: usize,
    data: Vec<Rat>,
}

impl ColonyGrid {
    /// Colonies with indices `origin + [0,width) x [0,height)`.
    pub fn build(m: &Measure, b: i64, origin: CellCoord, width: usize, height: usize) -> ColonyGrid {
        let mut data = vec![Rat::ZERO; width * height];
        let bx = CellBox::new(
            origin.x * b,
            origin.y * b,
            (origin.x + width as i64) * b,
            (origin.y + height as i64) * b,
        );
        for (c, w) in m.cells_in(&bx) {
            let i = (floor_div(c.x, b) - origin.x) as usize;
            let j = (floor_div(c.y, b) - origin.y) as usize;
            data[j * width + i] += w.get();
        }
        ColonyGrid { b, origin, width, height, data }
    }

    /// Mass of the colony at local position `(i, j)`.
    pub fn at(&self, i: usize, j: usize) -> Rat {
        self.data[j * self.width + i]
    }

    /// Mass of the colony with absolute index `c`, zero outside the grid.
    pub fn get(&self, c: CellCoord) -> Rat {
        let i = c.x - self.origin.x;
        let j = c.y - self.origin.y;
        if i < 0 || j < 0 || i >= self.width as i64 || j >= self.height as i64 {
            return Rat::ZERO;
        }
        self.at(i as usize, j as usize)
    }

    pub fn total(&self) -> Rat {
        self.data.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deposit_is_value_semantics() {
        let m = Measure::new();
        let m2 = m.deposit(CellCoord::new(3, 3), Rat::new(1, 7)).unwrap();
        let m3 = m2.deposit(CellCoord::new(3, 3), Rat::new(1, 7)).unwrap();
        assert!(m.is_empty());
        assert_eq!(m3.weight(CellCoord::new(3, 3)), Rat::new(2, 7));
        assert_eq!(m3.total(), Rat::new(2, 7));
        assert_eq!(m.deposit(CellCoord::new(0, 0), Rat::ZERO).unwrap(), m);
        assert!(m.deposit(CellCoord::new(0, 0), Rat::new(-1, 2)).is_err());
    }

    #[test]
    fn box_mass_excludes_outside() {
        let m = Measure::new()
            .deposit(CellCoord::new(0, 0), Rat::new(1, 3))
            .unwrap()
            .deposit(CellCoord::new(2, 0), Rat::new(1, 3))
            .unwrap();
        assert_eq!(m.mass_box(&CellBox::new(0, 0, 2, 1)), Rat::new(1, 3));
    }

    #[test]
    fn text_round_trip() {
        let m = Measure::new()
            .deposit(CellCoord::new(-4, 2), Rat::new(3, 11))
            .unwrap()
            .deposit(CellCoord::new(5, -1), Rat::new(1, 2))
            .unwrap();
        let t = m.to_text();
        assert_eq!(t, "-4 2 3 11\n5 -1 1 2\n");
        assert_eq!(Measure::from_text(&t).unwrap(), m);
        assert!(Measure::from_text("5 -1 1 2\n-4 2 3 11\n").is_err());
    }

    #[test]
    fn grid_aggregates_colonies() {
        let m = Measure::new()
            .deposit(CellCoord::new(-1, -1), Rat::ONE)
            .unwrap()
            .deposit(CellCoord::new(-3, -2), Rat::ONE)
            .unwrap()
            .deposit(CellCoord::new(4, 0), Rat::ONE)
            .unwrap();
        let g = ColonyGrid::build(&m, 3, CellCoord::new(-1, -1), 3, 2);
        assert_eq!(g.get(CellCoord::new(-1, -1)), Rat::int(2));
        assert_eq!(g.get(CellCoord::new(1, 0)), Rat::ONE);
        assert_eq!(g.total(), Rat::int(3));
    }
}
