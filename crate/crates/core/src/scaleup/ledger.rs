//! Charging extra geometric cost of digressions to scapegoat regions.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::game::GameSpec;
use crate::geom::CellCoord;
use crate::measure::Measure;
use crate::rat::Rat;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChargeKind {
    BlameableRun,
    ScapegoatCell,
    ProfitCompensation,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChargeEntry {
    pub id: usize,
    pub kind: ChargeKind,
    /// Inner colony indices.
    pub region: Vec<CellCoord>,
    /// Charged amount in unit cells of time.
    pub charge: Rat,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChargeLedger {
    pub entries: Vec<ChargeEntry>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerAudit {
    /// Entries whose region meets a small body or another entry's region.
    pub overlapping: Vec<usize>,
    /// Entries with `ρ₁·mass < charge` (after grouping equal regions).
    pub insolvent: Vec<usize>,
    /// Entries moved to an earlier region because theirs got covered.
    pub rehomed: Vec<usize>,
}

impl LedgerAudit {
    pub fn is_clean(&self) -> bool {
        self.overlapping.is_empty() && self.insolvent.is_empty()
    }
}

impl ChargeLedger {
    pub fn charge(&mut self, kind: ChargeKind, region: Vec<CellCoord>, amount: Rat) -> usize {
        let id = self.entries.len();
        let mut region = region;
        region.sort();
        region.dedup();
        self.entries.push(ChargeEntry { id, kind, region, charge: amount });
        id
    }

    pub fn total(&self) -> Rat {
        self.entries.iter().map(|e| e.charge).sum()
    }

    pub fn regions(&self) -> HashSet<CellCoord> {
        self.entries.iter().flat_map(|e| e.region.iter().copied()).collect()
    }

    /// Drop covered cells from regions; an entry whose region is fully
    /// covered moves to the nearest earlier surviving region of a scapegoat
    /// cell or run.
    pub fn settle(&mut self, covered: &HashSet<CellCoord>) -> Vec<usize> {
        let mut rehomed = Vec::new();
        for k in 0..self.entries.len() {
            let keep: Vec<CellCoord> = self.entries[k].region.iter().copied().filter(|c| !covered.contains(c)).collect();
            if !keep.is_empty() || self.entries[k].region.is_empty() {
                self.entries[k].region = keep;
                continue;
            }
            let home = (0..k).rev().find(|&i| !self.entries[i].region.is_empty());
            if let Some(i) = home {
                self.entries[k].region = self.entries[i].region.clone();
            } else {
                self.entries[k].region.clear();
            }
            rehomed.push(k);
        }
        rehomed
    }

    /// Disjointness and solvency at the end measure. Entries sharing the same
    /// region are audited together.
    pub fn audit(&self, inner: &GameSpec, mu: &Measure, bodies: &HashSet<CellCoord>) -> LedgerAudit {
        let mut out = LedgerAudit::default();
        let mut groups: Vec<(Vec<CellCoord>, Vec<usize>)> = Vec::new();
        for e in &self.entries {
            match groups.iter_mut().find(|g| g.0 == e.region) {
                Some(g) => g.1.push(e.id),
                None => groups.push((e.region.clone(), vec![e.id])),
            }
        }
        let mut seen: HashSet<CellCoord> = HashSet::new();
        for (region, ids) in &groups {
            let overl = region.iter().any(|c| bodies.contains(c) || seen.contains(c));
            if overl {
                out.overlapping.extend(ids.iter().copied());
            }
            seen.extend(region.iter().copied());
            let charge: Rat = ids.iter().map(|&i| self.entries[i].charge).sum();
            let cover = inner.params.rho1 * inner.set_mass(mu, region.iter().copied());
            if charge.is_positive() && cover < charge {
                out.insolvent.extend(ids.iter().copied());
            }
        }
        let mut s: BTreeSet<usize> = out.overlapping.into_iter().collect();
        out.overlapping = s.iter().copied().collect();
        s = out.insolvent.into_iter().collect();
        out.insolvent = s.into_iter().collect();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::solve_params;

    #[test]
    fn solvency_and_rehoming() {
        let gs = GameSpec::base(solve_params(Rat::new(3, 4), 12).unwrap(), false).unwrap();
        let a = CellCoord::new(0, 5);
        let b = CellCoord::new(1, 6);
        let mu = Measure::new().deposit(a, Rat::new(1, 6)).unwrap();
        let mut l = ChargeLedger::default();
        l.charge(ChargeKind::ScapegoatCell, vec![a], Rat::int(100));
        l.charge(ChargeKind::ScapegoatCell, vec![b], Rat::int(5));
        let none = HashSet::new();
        let audit = l.audit(&gs, &mu, &none);
        assert_eq!(audit.insolvent, vec![1]);
        // b gets covered by a later body: its charge moves onto a
        let covered: HashSet<CellCoord> = [b].into_iter().collect();
        assert_eq!(l.settle(&covered), vec![1]);
        let audit = l.audit(&gs, &mu, &covered);
        assert!(audit.is_clean(), "{audit:?}");
        assert_eq!(l.total(), Rat::int(105));
    }
}
