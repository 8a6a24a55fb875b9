//! Line-delimited match traces: one JSON object per line, tagged by `actor`.
//! Angel and devil lines carry the plain game; ledger, impl, stack and
//! diagnostic lines carry the strategy's internals for audit.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::devils::ReplayUnit;
use crate::game::{angel_allowed, devil_allowed_delta, Configuration, GameLog, GameSpec, Outcome};
use crate::geom::CellCoord;
use crate::moves::{by_name, LocatedMove};
use crate::params::ParamSet;
use crate::rat::Rat;
use crate::scaleup::implement::CaseKind;
use crate::scaleup::ledger::ChargeKind;
use crate::strategy::LevelSnapshot;

pub const TRACE_VERSION: u32 = 1;

/// Ledger charges grouped by (unit, level, region): big move, total charge, cover.
type RegionCharges = HashMap<(usize, usize, Vec<CellCoord>), (String, Rat, Rat)>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub version: u32,
    pub params: ParamSet,
    pub depth: usize,
    pub devil: String,
    pub seed: u64,
    pub horizon: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "actor", rename_all = "snake_case")]
pub enum TraceLine {
    Header(Header),
    Angel {
        index: usize,
        #[serde(rename = "move")]
        mv: String,
        w: CellCoord,
    },
    Devil {
        index: usize,
        t: u64,
        p: CellCoord,
        delta: Vec<(CellCoord, Rat)>,
        j: Outcome,
    },
    Impl {
        index: usize,
        level: usize,
        big: String,
        moves: usize,
        outcome: Option<Outcome>,
        cases: Vec<CaseKind>,
    },
    Ledger {
        index: usize,
        level: usize,
        big: String,
        id: usize,
        charge_kind: ChargeKind,
        region: Vec<CellCoord>,
        charge: Rat,
        cover: Rat,
    },
    Stack {
        index: usize,
        levels: Vec<LevelSnapshot>,
    },
    Diagnostic {
        index: usize,
        check: String,
        detail: String,
    },
    End {
        moves: usize,
        survived: bool,
        reason: Option<String>,
        total_mass: Rat,
        max_depth: usize,
    },
}

impl TraceLine {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("trace lines serialize")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum TraceError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("trace has no header")]
    NoHeader,
    #[error("header parameters: {0}")]
    Params(String),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub lines: Vec<TraceLine>,
}

impl Trace {
    pub fn parse(text: &str) -> Result<Trace, TraceError> {
        let mut lines = Vec::new();
        for (i, l) in text.lines().enumerate() {
            if l.trim().is_empty() {
                continue;
            }
            let line = serde_json::from_str(l).map_err(|e| TraceError::Parse { line: i + 1, reason: e.to_string() })?;
            lines.push(line);
        }
        Ok(Trace { lines })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for l in &self.lines {
            s.push_str(&l.to_line());
            s.push('\n');
        }
        s
    }

    pub fn header(&self) -> Result<&Header, TraceError> {
        match self.lines.first() {
            Some(TraceLine::Header(h)) => Ok(h),
            _ => Err(TraceError::NoHeader),
        }
    }

    /// The devil's replies, each with the located name of the move it answered.
    pub fn units(&self) -> Vec<ReplayUnit> {
        let mut out = Vec::new();
        let mut pending: Option<String> = None;
        for l in &self.lines {
            match l {
                TraceLine::Angel { mv, w, .. } => pending = Some(format!("{mv}@{},{}", w.x, w.y)),
                TraceLine::Devil { t, p, delta, j, .. } => {
                    if let Some(name) = pending.take() {
                        out.push(ReplayUnit { name, t: *t, p: *p, j: *j, delta: delta.clone() });
                    }
                }
                _ => {}
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    /// Unit index (or trace line number for structural problems).
    pub index: usize,
    pub check: String,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub units: usize,
    pub findings: Vec<Finding>,
}

impl VerifyReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }

    fn flag(&mut self, index: usize, check: &str, detail: impl Into<String>) {
        self.findings.push(Finding { index, check: check.to_string(), detail: detail.into() });
    }
}

/// Replay every half-move through the rules and audit the strategy lines.
/// `params` overrides the header's parameter set when given.
pub fn verify_trace(trace: &Trace, params: Option<&ParamSet>) -> Result<VerifyReport, TraceError> {
    let header = trace.header()?;
    let params = params.cloned().unwrap_or_else(|| header.params.clone());
    let gs: Arc<GameSpec> = GameSpec::base(params, true).map_err(|e| TraceError::Params(e.to_string()))?;
    let mut rep = VerifyReport::default();
    let mut log = GameLog::new(gs.clone(), Configuration::default());
    let mut union: HashSet<CellCoord> = HashSet::new();
    let mut pending: Option<(usize, LocatedMove)> = None;
    let mut region_charges: RegionCharges = HashMap::new();
    for l in &trace.lines[1..] {
        match l {
            TraceLine::Header(_) => rep.flag(0, "structure", "second header"),
            TraceLine::Angel { index, mv, w } => {
                if let Some((i, _)) = pending {
                    rep.flag(i, "structure", "angel move without devil reply");
                }
                let Some(z) = by_name(gs.variant, mv) else {
                    rep.flag(*index, "move name", format!("unknown move {mv}"));
                    pending = None;
                    continue;
                };
                let lm = LocatedMove::new(*w, z);
                let cfg = log.current().clone();
                if *w != cfg.p {
                    rep.flag(*index, "path", format!("{} does not start at the angel's cell {:?}", lm.name(), cfg.p));
                }
                let prev = log.history.records.last().map(|r| r.a);
                if let Err(e) = angel_allowed(&gs, &cfg, &lm, prev.as_ref()) {
                    rep.flag(*index, "angel_allowed", format!("{}: {e}", lm.name()));
                }
                if let Some(f) = lm.footprint() {
                    if f.iter().any(|c| *c != lm.w && union.contains(c)) {
                        rep.flag(*index, "simplicity", lm.name());
                    }
                    union.extend(f);
                }
                pending = Some((*index, lm));
            }
            TraceLine::Devil { index, t, p, delta, j } => {
                let Some((i, lm)) = pending.take() else {
                    rep.flag(*index, "structure", "devil reply without angel move");
                    continue;
                };
                if i != *index {
                    rep.flag(*index, "structure", format!("reply index {index} after move {i}"));
                }
                let start = log.current().clone();
                if *t < start.t {
                    rep.flag(*index, "clock", "time went backwards");
                    continue;
                }
                match devil_allowed_delta(&gs, &log, &start, &lm, *t, *p, *j, delta) {
                    Ok(end) => log.push(lm, end, delta),
                    Err(e) => {
                        rep.flag(*index, "devil_allowed", format!("{}: {e}", lm.name()));
                        let Ok(mu) = start.mu.apply_delta(delta) else {
                            rep.flag(*index, "measure", "non-positive deposit");
                            continue;
                        };
                        log.push(lm, Configuration::new(*t, *p, mu, *j), delta);
                    }
                }
                rep.units += 1;
            }
            TraceLine::Impl { index, level, big, moves, .. } => {
                if *moves < 2 {
                    rep.flag(*index, "implementation map", format!("level {level} {big} halted after {moves} moves"));
                }
                if *moves as i64 > gs.params.nu {
                    rep.flag(*index, "move budget", format!("level {level} {big}: {moves} moves"));
                }
            }
            TraceLine::Ledger { index, level, big, region, charge, cover, .. } => {
                let e = region_charges.entry((*index, *level, region.clone())).or_insert((big.clone(), Rat::ZERO, *cover));
                e.1 += *charge;
            }
            TraceLine::Diagnostic { index, check, detail } => {
                rep.flag(*index, check, detail.clone());
            }
            TraceLine::Stack { .. } | TraceLine::End { .. } => {}
        }
    }
    let mut groups: Vec<_> = region_charges.into_iter().collect();
    groups.sort_by(|a, b| a.0.cmp(&b.0));
    for ((index, level, _), (big, charge, cover)) in groups {
        if cover < charge {
            rep.flag(index, "ledger", format!("level {level} {big}: charge {charge} exceeds cover {cover}"));
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::solve_params;

    fn header() -> TraceLine {
        TraceLine::Header(Header {
            version: TRACE_VERSION,
            params: solve_params(Rat::new(3, 4), 12).unwrap(),
            depth: 1,
            devil: "zero".into(),
            seed: 0,
            horizon: 2,
        })
    }

    #[test]
    fn lines_round_trip() {
        let lines = vec![
            header(),
            TraceLine::Angel { index: 0, mv: "step.N".into(), w: CellCoord::ORIGIN },
            TraceLine::Devil {
                index: 0,
                t: 3,
                p: CellCoord::new(0, 1),
                delta: vec![(CellCoord::new(5, 5), Rat::new(1, 7))],
                j: Outcome::Succ,
            },
        ];
        let t = Trace { lines };
        let text = t.to_text();
        let back = Trace::parse(&text).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_text(), text);
        assert!(text.lines().nth(1).unwrap().contains("\"actor\":\"angel\""));
    }

    #[test]
    fn parse_error_names_the_line() {
        let text = format!("{}\nnot json\n", header().to_line());
        assert!(matches!(Trace::parse(&text), Err(TraceError::Parse { line: 2, .. })));
    }

    #[test]
    fn hand_written_trace_verifies_and_mutations_are_flagged() {
        let units = [("step.N", (0, 0), (0, 1)), ("step.N", (0, 1), (0, 2)), ("step.E", (0, 2), (1, 2))];
        let mut lines = vec![header()];
        for (i, (m, w, p)) in units.iter().enumerate() {
            lines.push(TraceLine::Angel { index: i, mv: m.to_string(), w: CellCoord::new(w.0, w.1) });
            lines.push(TraceLine::Devil { index: i, t: i as u64 + 1, p: CellCoord::new(p.0, p.1), delta: vec![], j: Outcome::Succ });
        }
        let t = Trace { lines };
        let r = verify_trace(&t, None).unwrap();
        assert!(r.is_clean(), "{:?}", r.findings);
        assert_eq!(r.units, 3);

        let mut inflated = t.clone();
        if let TraceLine::Devil { delta, .. } = &mut inflated.lines[4] {
            delta.push((CellCoord::new(9, 9), Rat::new(1, 1000)));
        }
        let r = verify_trace(&inflated, None).unwrap();
        assert!(r.findings.iter().any(|f| f.index == 1 && f.check == "devil_allowed"), "{:?}", r.findings);

        let mut reordered = t.clone();
        reordered.lines.swap(3, 5);
        reordered.lines.swap(4, 6);
        let r = verify_trace(&reordered, None).unwrap();
        assert!(r.findings.iter().any(|f| f.check == "path"), "{:?}", r.findings);
    }
}
