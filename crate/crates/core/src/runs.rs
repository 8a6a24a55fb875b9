//! Run classification: good, safe, step-clean, unimodal, clean, walks,
//! secure intersections, blameable runs and clean rows.
//!
//! Predicates work on a slice of colony masses (south to north or west to
//! east) together with the colony side `b`, which is the unit `|U_1|` all
//! thresholds are measured in. Indices are 0-based.

use serde::{Deserialize, Serialize};

use crate::geom::{CellBox, CellCoord};
use crate::measure::{ColonyGrid, Measure};
use crate::params::ParamSet;
use crate::rat::Rat;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Thresholds {
    pub xi: Rat,
    pub delta: Rat,
}

impl From<&ParamSet> for Thresholds {
    fn from(p: &ParamSet) -> Self {
        Thresholds { xi: p.xi, delta: p.delta }
    }
}

/// Shorthand for integer grade indices.
pub fn g(i: i64) -> Rat {
    Rat::from(i)
}

impl Thresholds {
    pub fn good_bound(&self, i: Rat, b: i64) -> Rat {
        (Rat::ONE - i * self.delta) * b
    }

    pub fn safe_bound(&self, i: Rat, b: i64) -> Rat {
        (self.xi - i * self.delta) * b
    }

    pub fn is_bad(&self, mass: Rat, b: i64) -> bool {
        mass >= Rat::from(b)
    }

    pub fn is_good(&self, mass: Rat, i: Rat, b: i64) -> bool {
        mass < self.good_bound(i, b)
    }

    pub fn is_safe(&self, mass: Rat, i: Rat, b: i64) -> bool {
        mass < self.safe_bound(i, b)
    }

    pub fn step_clean(&self, m: &[Rat], i: Rat, b: i64) -> bool {
        let bound = self.safe_bound(i, b);
        m.windows(2).all(|w| w[0] + w[1] < bound)
    }

    pub fn unimodal(&self, m: &[Rat], i: Rat, b: i64) -> bool {
        if m.is_empty() {
            return true;
        }
        let o = obstacle(m);
        self.step_clean(&m[..o], i, b) && self.step_clean(&m[o + 1..], i, b)
    }

    pub fn clean(&self, m: &[Rat], i: Rat, b: i64) -> bool {
        let bound = self.good_bound(i + Rat::ONE, b);
        self.unimodal(m, i, b) && m.windows(3).all(|w| w[0] + w[1] + w[2] < bound)
    }

    /// Neighbor pairs of `idx` inside the run are safe; boundary colonies
    /// need only their single existing pair.
    pub fn secure_in(&self, m: &[Rat], idx: usize, b: i64) -> bool {
        let bound = self.safe_bound(Rat::ZERO, b);
        (idx == 0 || m[idx - 1] + m[idx] < bound) && (idx + 1 >= m.len() || m[idx] + m[idx + 1] < bound)
    }

    /// Exhaustive walk search from `from` to `to`: gaps of at most 2, every
    /// visited colony safe, unit gaps with a safe pair. Prefers unit steps.
    pub fn find_walk(&self, m: &[Rat], from: usize, to: usize, b: i64) -> Option<Vec<usize>> {
        if from > to {
            let rev: Vec<Rat> = m.iter().rev().copied().collect();
            let n = m.len();
            let w = self.find_walk(&rev, n - 1 - from, n - 1 - to, b)?;
            return Some(w.into_iter().map(|i| n - 1 - i).collect());
        }
        let safe = |mass: Rat| self.is_safe(mass, Rat::ZERO, b);
        // reach[k]: `to` is reachable from k
        let mut reach = vec![false; to + 3];
        reach[to] = safe(m[to]);
        for k in (from..to).rev() {
            if !safe(m[k]) {
                continue;
            }
            let by_step = reach[k + 1] && safe(m[k] + m[k + 1]);
            let by_jump = k + 2 <= to && reach[k + 2];
            reach[k] = by_step || by_jump;
        }
        if !reach[from] {
            return None;
        }
        let mut walk = vec![from];
        let mut k = from;
        while k < to {
            k = if reach[k + 1] && safe(m[k] + m[k + 1]) { k + 1 } else { k + 2 };
            walk.push(k);
        }
        Some(walk)
    }

    /// Whether the row `r` is securely reachable in a column from index `u`:
    /// the run `u..r` (exclusive) is clean and the step into `r` is safe.
    pub fn securely_reachable(&self, col: &[Rat], u: usize, r: usize, b: i64) -> bool {
        assert!(r > u, "target row must lie north of the start");
        self.clean(&col[u..r], Rat::ZERO, b) && self.is_safe(col[r - 1] + col[r], Rat::ZERO, b)
    }

    /// Row `r` of a rectangle crosses column `c` securely.
    pub fn intersect_securely(&self, grid: &ColonyGrid, c: usize, r: usize) -> bool {
        let row = grid_row(grid, r);
        let col = grid_col(grid, c);
        self.secure_in(&row, c, grid.b) || self.secure_in(&col, r, grid.b)
    }

    pub fn clean_rows(&self, grid: &ColonyGrid, i: Rat) -> Vec<usize> {
        (0..grid.height).filter(|&r| self.clean(&grid_row(grid, r), i, grid.b)).collect()
    }
}

/// Index of the first maximum-weight colony.
pub fn obstacle(m: &[Rat]) -> usize {
    let mut best = 0;
    for (k, v) in m.iter().enumerate() {
        if *v > m[best] {
            best = k;
        }
    }
    best
}

/// Indices of the blameable run for start `u` and target row `r`: the cells
/// above `u` up to and including the cell of `r`.
pub fn blameable_run(u: usize, r: usize) -> std::ops::RangeInclusive<usize> {
    assert!(r > u, "target row must lie north of the start");
    u + 1..=r
}

pub fn grid_row(grid: &ColonyGrid, r: usize) -> Vec<Rat> {
    (0..grid.width).map(|c| grid.at(c, r)).collect()
}

pub fn grid_col(grid: &ColonyGrid, c: usize) -> Vec<Rat> {
    (0..grid.height).map(|r| grid.at(c, r)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Orientation {
    Horizontal,
    Vertical,
}

/// Line of `n` adjacent colonies of side `b`; `anchor` is the south-west
/// corner (unit cells) of the first colony.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Run {
    pub anchor: CellCoord,
    pub b: i64,
    pub n: usize,
    pub orientation: Orientation,
}

impl Run {
    pub fn colony(&self, k: usize) -> CellBox {
        let (dx, dy) = match self.orientation {
            Orientation::Horizontal => (k as i64 * self.b, 0),
            Orientation::Vertical => (0, k as i64 * self.b),
        };
        let a = self.anchor.offset(dx, dy);
        CellBox::new(a.x, a.y, a.x + self.b, a.y + self.b)
    }

    pub fn bounds(&self) -> CellBox {
        let first = self.colony(0);
        let last = self.colony(self.n - 1);
        CellBox::new(first.x0, first.y0, last.x1, last.y1)
    }

    pub fn masses(&self, m: &Measure) -> Vec<Rat> {
        (0..self.n).map(|k| m.mass_box(&self.colony(k))).collect()
    }
}

/// `cols x rows` block of colonies of side `b` anchored at its south-west corner.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub anchor: CellCoord,
    pub b: i64,
    pub cols: usize,
    pub rows: usize,
}

impl Rect {
    pub fn row(&self, r: usize) -> Run {
        Run {
            anchor: self.anchor.offset(0, r as i64 * self.b),
            b: self.b,
            n: self.cols,
            orientation: Orientation::Horizontal,
        }
    }

    pub fn col(&self, c: usize) -> Run {
        Run {
            anchor: self.anchor.offset(c as i64 * self.b, 0),
            b: self.b,
            n: self.rows,
            orientation: Orientation::Vertical,
        }
    }

    pub fn bounds(&self) -> CellBox {
        CellBox::new(
            self.anchor.x,
            self.anchor.y,
            self.anchor.x + self.cols as i64 * self.b,
            self.anchor.y + self.rows as i64 * self.b,
        )
    }

    /// Colony masses; requires an anchor aligned to the colony lattice.
    pub fn grid(&self, m: &Measure) -> ColonyGrid {
        assert!(
            self.anchor.x.rem_euclid(self.b) == 0 && self.anchor.y.rem_euclid(self.b) == 0,
            "rectangle anchor must be colony aligned"
        );
        ColonyGrid::build(
            m,
            self.b,
            CellCoord::new(self.anchor.x / self.b, self.anchor.y / self.b),
            self.cols,
            self.rows,
        )
    }
}

pub enum Region<'a> {
    Run(Run),
    Rect(Rect),
    Cells(&'a [CellCoord]),
}

pub fn mass(m: &Measure, region: &Region<'_>) -> Rat {
    match region {
        Region::Run(r) => m.mass_box(&r.bounds()),
        Region::Rect(r) => m.mass_box(&r.bounds()),
        Region::Cells(cs) => {
            let mut v = cs.to_vec();
            v.sort();
            v.dedup();
            m.mass_cells(v.iter())
        }
    }
}

/// Whether row `row` and column `col` cross securely, given as runs over the
/// same colony size.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("row and column do not cross")]
pub struct NoCrossing;

pub fn intersect_securely_runs(t: &Thresholds, m: &Measure, row: &Run, col: &Run) -> Result<bool, NoCrossing> {
    if row.orientation != Orientation::Horizontal || col.orientation != Orientation::Vertical || row.b != col.b {
        return Err(NoCrossing);
    }
    let b = row.b;
    let dx = col.anchor.x - row.anchor.x;
    let dy = row.anchor.y - col.anchor.y;
    if dx % b != 0 || dy % b != 0 {
        return Err(NoCrossing);
    }
    let (ci, ri) = (dx / b, dy / b);
    if ci < 0 || ci >= row.n as i64 || ri < 0 || ri >= col.n as i64 {
        return Err(NoCrossing);
    }
    Ok(t.secure_in(&row.masses(m), ci as usize, b) || t.secure_in(&col.masses(m), ri as usize, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn th() -> Thresholds {
        Thresholds { xi: Rat::new(3, 4), delta: Rat::new(1, 100) }
    }

    fn r(v: &[i64]) -> Vec<Rat> {
        v.iter().map(|&x| Rat::from(x)).collect()
    }

    #[test]
    fn thresholds_exact() {
        let t = th();
        assert!(t.is_bad(Rat::int(10), 10));
        assert!(!t.is_safe(Rat::int(74), g(1), 100));
        assert!(t.is_safe(Rat::new(7399, 100), g(1), 100));
        assert!(t.is_good(Rat::ZERO, g(5), 1));
    }

    #[test]
    fn obstacle_ties_first() {
        assert_eq!(obstacle(&r(&[0, 0, 0])), 0);
        assert_eq!(obstacle(&r(&[1, 3, 2])), 1);
        assert_eq!(obstacle(&r(&[2, 2, 1])), 0);
    }

    #[test]
    fn step_clean_vacuous_for_single() {
        assert!(th().step_clean(&r(&[5]), g(0), 1));
    }

    #[test]
    fn walk_identity_on_zero() {
        let m = vec![Rat::ZERO; 6];
        assert_eq!(th().find_walk(&m, 0, 5, 1).unwrap(), vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(th().find_walk(&m, 5, 2, 1).unwrap(), vec![5, 4, 3, 2]);
    }

    #[test]
    fn walk_jumps_single_obstacle_but_not_two() {
        let t = th();
        let heavy = Rat::new(9, 10);
        let m = vec![Rat::ZERO, heavy, Rat::ZERO, Rat::ZERO];
        assert_eq!(t.find_walk(&m, 0, 3, 1).unwrap(), vec![0, 2, 3]);
        let m = vec![Rat::ZERO, heavy, heavy, Rat::ZERO];
        assert!(t.find_walk(&m, 0, 3, 1).is_none());
    }

    #[test]
    fn blameable_geometry() {
        let run = blameable_run(2, 7);
        assert_eq!(run.clone().count(), 7 - 2 - 1 + 1);
        assert_eq!(*run.start(), 3);
    }

    #[test]
    fn crossing_checks() {
        let m = Measure::new();
        let rect = Rect { anchor: CellCoord::new(0, 0), b: 2, cols: 4, rows: 4 };
        assert_eq!(intersect_securely_runs(&th(), &m, &rect.row(1), &rect.col(2)), Ok(true));
        let far = Run { anchor: CellCoord::new(100, 0), ..rect.col(0) };
        assert_eq!(intersect_securely_runs(&th(), &m, &rect.row(1), &far), Err(NoCrossing));
    }
}
