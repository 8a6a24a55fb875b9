//! Time transfer: the small history implementing a big unit must obey the
//! big game's time bound.

use serde::{Deserialize, Serialize};

use crate::game::{time_bound, GameSpec, History};
use crate::rat::Rat;

use super::ledger::LedgerAudit;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferReport {
    pub small_bound: Rat,
    pub big_bound: Rat,
    pub holds: bool,
    pub ledger: Option<LedgerAudit>,
}

impl TransferReport {
    pub fn ok(&self) -> bool {
        self.holds && self.ledger.as_ref().is_none_or(|a| a.is_clean())
    }
}

/// `τ(small) ≤ τ(big)` where `small` is the inner d-history produced by the
/// implementation of the outer d-history `big`.
pub fn verify_time_transfer(inner: &GameSpec, outer: &GameSpec, big: &History, small: &History) -> TransferReport {
    let small_bound = time_bound(inner, small);
    let big_bound = time_bound(outer, big);
    TransferReport { small_bound, big_bound, holds: small_bound <= big_bound, ledger: None }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{Configuration, Outcome, Record};
    use crate::geom::CellCoord;
    use crate::moves::{by_name, ContTemplate, LocatedMove};
    use crate::params::solve_params;

    #[test]
    fn straight_walk_transfers() {
        let base = GameSpec::base(solve_params(Rat::new(3, 4), 12).unwrap(), false).unwrap();
        let outer = GameSpec::scaled(&base);
        let q = base.params.q;
        let step = by_name(ContTemplate::Corrected, "step.N").unwrap();
        let cfg = |t: u64, y: i64| Configuration::new(t, CellCoord::new(5, y), Default::default(), Outcome::Succ);
        let small = History {
            records: (0..q).map(|y| Record { d: cfg(y as u64, y), a: LocatedMove::new(CellCoord::new(5, y), step) }).collect(),
            last: Some(cfg(q as u64, q)),
        };
        let big = History {
            records: vec![Record { d: cfg(0, 0), a: LocatedMove::new(CellCoord::ORIGIN, step) }],
            last: Some(cfg(q as u64, q)),
        };
        let r = verify_time_transfer(&base, &outer, &big, &small);
        assert_eq!(r.small_bound, Rat::from(q));
        assert!(r.ok());
    }
}
