//! Driving one implementation against a devil in the inner game.

use serde::{Deserialize, Serialize};

use crate::devils::{Devil, DevilError};
use crate::game::{angel_allowed, GameLog, Outcome};
use crate::moves::LocatedMove;

use super::implement::{Emission, Implementation};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub check: String,
    pub detail: String,
}

impl Violation {
    pub fn new(check: &str, detail: impl Into<String>) -> Violation {
        Violation { check: check.to_string(), detail: detail.into() }
    }
}

#[derive(Clone, Debug)]
pub struct Driven {
    pub outcome: Outcome,
    /// Index of the first inner unit played by this implementation.
    pub first_unit: usize,
    pub violations: Vec<Violation>,
}

/// Run `imp` to its halt, appending every small unit to `log`. `cap` bounds
/// the number of small moves before the run is cut with a violation.
pub fn drive(imp: &mut Implementation, log: &mut GameLog, devil: &mut dyn Devil, cap: usize) -> Result<Driven, DevilError> {
    let first_unit = log.len();
    let mut violations = Vec::new();
    loop {
        let prev: Option<LocatedMove> = log.history.records.last().map(|r| r.a);
        let cfg = log.current().clone();
        match imp.next(&cfg, prev.as_ref()) {
            Emission::Halt(outcome) => return Ok(Driven { outcome, first_unit, violations }),
            Emission::Move(lm) => {
                if let Err(e) = angel_allowed(&log.spec, &cfg, &lm, prev.as_ref()) {
                    violations.push(Violation::new("angel_allowed", format!("{}: {e}", lm.name())));
                }
                if log.len() - first_unit >= cap {
                    violations.push(Violation::new("move budget", format!("cut after {cap} small moves")));
                    return Ok(Driven { outcome: Outcome::Succ, first_unit, violations });
                }
                let reply = devil.respond(log, &lm)?;
                log.push(lm, reply.end, &reply.delta);
            }
        }
    }
}
