//! Matches between the angel strategy and a devil, recorded as traces.
//! [`Match`] is step-wise so the session service can feed devil replies one
//! at a time; [`run_match`] drives it against a policy to the horizon.

use std::collections::HashSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::devils::{self, Devil, DevilError, Reply};
use crate::game::{angel_allowed, devil_allowed_delta, Configuration, DevilRefusal, GameLog, GameSpec, Outcome};
use crate::geom::CellCoord;
use crate::moves::LocatedMove;
use crate::params::ParamSet;
use crate::rat::Rat;
use crate::strategy::{default_configuration, Amplifier, ClosedImpl, Stack, StrategyError};
use crate::trace::{verify_trace, Header, Trace, TraceError, TraceLine, TRACE_VERSION};

/// Units between periodic stack snapshots.
const SNAPSHOT_EVERY: usize = 1000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub params: ParamSet,
    pub toy: bool,
    /// Amplifier levels built up front; more are added on demand.
    pub depth: usize,
    pub seed: u64,
    /// Plain moves to play.
    pub horizon: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum MatchError {
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error("devil reply refused: {0}")]
    Refused(DevilRefusal),
    #[error(transparent)]
    Devil(#[from] DevilError),
    #[error("match is over")]
    Over,
    #[error("unknown devil {0}")]
    UnknownDevil(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("horizon must be at least 1")]
    Horizon,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchReport {
    pub moves: usize,
    pub survived: bool,
    pub reason: Option<String>,
    pub total_mass: Rat,
    pub max_depth: usize,
    /// Stack depth after each snapshot, as (unit index, depth).
    pub depth_profile: Vec<(usize, usize)>,
    pub violations: usize,
}

/// One game in progress: the angel's pending move awaits a devil reply.
pub struct Match {
    gs: Arc<GameSpec>,
    stack: Stack,
    log: GameLog,
    trace: Trace,
    horizon: usize,
    pending: Option<LocatedMove>,
    union: HashSet<CellCoord>,
    depth: usize,
    profile: Vec<(usize, usize)>,
    violations: usize,
    report: Option<MatchReport>,
}

impl Match {
    pub fn new(cfg: &MatchConfig, devil: &str) -> Result<Match, MatchError> {
        if cfg.horizon == 0 {
            return Err(MatchError::Horizon);
        }
        let amp = Amplifier::build(cfg.params.clone(), cfg.toy, cfg.depth)?;
        let gs = amp.games()[0].clone();
        let header = Header {
            version: TRACE_VERSION,
            params: cfg.params.clone(),
            depth: cfg.depth,
            devil: devil.to_string(),
            seed: cfg.seed,
            horizon: cfg.horizon,
        };
        let mut m = Match {
            log: GameLog::new(gs.clone(), default_configuration()),
            gs,
            stack: Stack::new(amp),
            trace: Trace { lines: vec![TraceLine::Header(header)] },
            horizon: cfg.horizon,
            pending: None,
            union: HashSet::new(),
            depth: 0,
            profile: Vec::new(),
            violations: 0,
            report: None,
        };
        m.angel_turn();
        Ok(m)
    }

    pub fn spec(&self) -> &Arc<GameSpec> {
        &self.gs
    }

    pub fn log(&self) -> &GameLog {
        &self.log
    }

    pub fn stack(&self) -> &Stack {
        &self.stack
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    /// The angel's move awaiting a reply, if the match is still running.
    pub fn pending(&self) -> Option<&LocatedMove> {
        self.pending.as_ref()
    }

    pub fn report(&self) -> Option<&MatchReport> {
        self.report.as_ref()
    }

    pub fn units(&self) -> usize {
        self.log.len()
    }

    /// Apply a devil reply to the pending move: the reply's deposits, clock
    /// and landing (its end measure is rebuilt from the deposits). An illegal
    /// reply is refused and leaves the match unchanged.
    pub fn apply(&mut self, reply: Reply) -> Result<(), MatchError> {
        let (t, p, j) = (reply.end.t, reply.end.p, reply.end.j);
        self.apply_parts(t, p, j, &reply.delta)
    }

    /// [`Match::apply`] from the reply's parts.
    pub fn apply_parts(&mut self, t: u64, p: CellCoord, j: Outcome, deposits: &[(CellCoord, Rat)]) -> Result<(), MatchError> {
        let lm = self.pending.ok_or(MatchError::Over)?;
        let start = self.log.current().clone();
        if deposits.iter().any(|(_, a)| !a.is_positive()) {
            return Err(MatchError::Refused(DevilRefusal::MeasureDecreased));
        }
        let delta = devils::merge(deposits);
        let end = devil_allowed_delta(&self.gs, &self.log, &start, &lm, t, p, j, &delta).map_err(MatchError::Refused)?;
        let index = self.log.len();
        self.trace.lines.push(TraceLine::Devil { index, t, p, delta: delta.clone(), j });
        self.log.push(lm, end, &delta);
        self.pending = None;
        if self.log.len() >= self.horizon {
            self.end(None);
        } else {
            self.angel_turn();
        }
        Ok(())
    }

    /// Let `devil` answer the pending move. A devil with no legal reply ends
    /// the match.
    pub fn devil_turn(&mut self, devil: &mut dyn Devil) -> Result<(), MatchError> {
        let lm = self.pending.ok_or(MatchError::Over)?;
        match devil.respond(&self.log, &lm) {
            Ok(r) => self.apply(r),
            Err(e) => {
                self.end(Some(format!("devil: {e}")));
                Ok(())
            }
        }
    }

    fn angel_turn(&mut self) {
        let index = self.log.len();
        let d = self.log.current().clone();
        let result = self.stack.respond(&d);
        self.record_strategy(index);
        let a = match result {
            Ok(a) => a,
            Err(e) => {
                self.diagnostic(index, "strategy", e.to_string());
                self.end(Some(format!("strategy: {e}")));
                return;
            }
        };
        let prev = self.log.history.records.last().map(|r| r.a);
        self.trace.lines.push(TraceLine::Angel { index, mv: a.z.name.clone(), w: a.w });
        if let Err(e) = angel_allowed(&self.gs, &d, &a, prev.as_ref()) {
            self.diagnostic(index, "angel_allowed", format!("{}: {e}", a.name()));
        }
        if let Some(f) = a.footprint() {
            if f.iter().any(|c| *c != a.w && self.union.contains(c)) {
                self.diagnostic(index, "simplicity", a.name());
            }
            self.union.extend(f);
        }
        if self.violations > 0 {
            self.end(Some("contract violation".into()));
            return;
        }
        self.pending = Some(a);
    }

    fn record_strategy(&mut self, index: usize) {
        for c in self.stack.drain_closed() {
            self.push_closed(index, c);
        }
        for v in std::mem::take(&mut self.stack.violations) {
            self.diagnostic(index, &v.check, v.detail);
        }
        let depth = self.stack.depth();
        if depth != self.depth || (index.is_multiple_of(SNAPSHOT_EVERY) && index > 0) {
            self.depth = depth;
            self.profile.push((index, depth));
            self.trace.lines.push(TraceLine::Stack { index, levels: self.stack.snapshot() });
        }
    }

    fn push_closed(&mut self, index: usize, c: ClosedImpl) {
        let r = c.report;
        for l in c.charges {
            self.trace.lines.push(TraceLine::Ledger {
                index,
                level: c.level,
                big: r.big.clone(),
                id: l.id,
                charge_kind: l.kind,
                region: l.region,
                charge: l.charge,
                cover: l.cover,
            });
        }
        self.trace.lines.push(TraceLine::Impl {
            index,
            level: c.level,
            big: r.big,
            moves: r.moves,
            outcome: r.outcome,
            cases: r.cases,
        });
    }

    fn diagnostic(&mut self, index: usize, check: &str, detail: String) {
        self.violations += 1;
        self.trace.lines.push(TraceLine::Diagnostic { index, check: check.to_string(), detail });
    }

    fn end(&mut self, reason: Option<String>) {
        if self.report.is_some() {
            return;
        }
        self.pending = None;
        let moves = self.log.len();
        let survived = reason.is_none() && self.violations == 0;
        let total_mass = self.log.current().mu.total().get();
        let max_depth = self.stack.max_depth;
        self.trace.lines.push(TraceLine::End { moves, survived, reason: reason.clone(), total_mass, max_depth });
        self.report = Some(MatchReport {
            moves,
            survived,
            reason,
            total_mass,
            max_depth,
            depth_profile: self.profile.clone(),
            violations: self.violations,
        });
    }
}

/// Built-in devils by name: `zero`, `random`, `wall`, `adversarial`.
pub fn make_devil(name: &str, seed: u64) -> Result<Box<dyn Devil>, MatchError> {
    match name {
        "zero" => Ok(Box::new(devils::ZeroDevil)),
        "random" => Ok(Box::new(devils::random_devil(seed))),
        "wall" => Ok(Box::new(devils::wall_devil(seed))),
        "adversarial" => Ok(Box::new(devils::adversarial_devil(seed))),
        _ => Err(MatchError::UnknownDevil(name.to_string())),
    }
}

/// Play η against `devil` for the configured horizon.
pub fn run_match(cfg: &MatchConfig, devil: &mut dyn Devil) -> Result<(Trace, MatchReport), MatchError> {
    let mut m = Match::new(cfg, &devil.name())?;
    while m.pending().is_some() {
        m.devil_turn(devil)?;
    }
    let report = m.report().cloned().expect("finished match has a report");
    Ok((m.trace, report))
}

/// Re-run a recorded match, with the devil's replies taken from the trace.
pub fn replay(trace: &Trace) -> Result<(Trace, MatchReport), MatchError> {
    let h = trace.header()?.clone();
    let cfg = MatchConfig { toy: !h.params.valid, params: h.params, depth: h.depth, seed: h.seed, horizon: h.horizon };
    let mut devil = devils::replay_devil(trace.units());
    devil.label = h.devil;
    run_match(&cfg, &mut devil)
}

/// Run a match and check its own trace.
pub fn run_and_verify(cfg: &MatchConfig, devil: &mut dyn Devil) -> Result<(Trace, MatchReport, crate::trace::VerifyReport), MatchError> {
    let (trace, report) = run_match(cfg, devil)?;
    let v = verify_trace(&trace, None)?;
    Ok((trace, report, v))
}

/// Start configuration of every unit, for callers that need the devil's view.
pub fn configurations(log: &GameLog) -> Vec<Configuration> {
    let mut out: Vec<Configuration> = log.history.records.iter().map(|r| r.d.clone()).collect();
    out.push(log.current().clone());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::is_simple;
    use crate::params::solve_params;

    fn cfg(horizon: usize) -> MatchConfig {
        MatchConfig { params: solve_params(Rat::new(3, 4), 12).unwrap(), toy: false, depth: 1, seed: 1, horizon }
    }

    #[test]
    fn zero_devil_hundred_moves() {
        let (trace, rep, v) = run_and_verify(&cfg(100), &mut devils::ZeroDevil).unwrap();
        assert!(rep.survived, "{rep:?}");
        assert_eq!(rep.moves, 100);
        assert!(v.is_clean(), "{:?}", v.findings);
        let moves: Vec<LocatedMove> = trace
            .lines
            .iter()
            .filter_map(|l| match l {
                TraceLine::Angel { mv, w, .. } => LocatedMove::parse(Default::default(), &format!("{mv}@{},{}", w.x, w.y)),
                _ => None,
            })
            .collect();
        assert_eq!(moves.len(), 100);
        assert!(is_simple(&moves));
    }

    #[test]
    fn replay_reproduces_the_trace() {
        for name in ["random", "wall", "adversarial"] {
            let mut d = make_devil(name, 7).unwrap();
            let (trace, _) = run_match(&cfg(300), d.as_mut()).unwrap();
            let (again, _) = replay(&trace).unwrap();
            assert_eq!(again.to_text(), trace.to_text(), "{name}");
        }
    }

    #[test]
    fn illegal_reply_leaves_the_match_unchanged() {
        let mut m = Match::new(&cfg(10), "manual").unwrap();
        let lm = *m.pending().unwrap();
        let before = m.trace().to_text();
        let mu = crate::measure::Measure::new().deposit(CellCoord::new(3, 3), Rat::ONE).unwrap();
        let end = Configuration::new(1, lm.dest(), mu.clone(), Outcome::Succ);
        let err = m.apply(Reply { end, delta: mu.iter().map(|(c, w)| (c, w.get())).collect() }).unwrap_err();
        assert!(matches!(err, MatchError::Refused(_)));
        assert_eq!(m.trace().to_text(), before);
        assert_eq!(m.pending(), Some(&lm));
    }

    #[test]
    fn unknown_devil_is_rejected() {
        assert!(matches!(make_devil("ghost", 0), Err(MatchError::UnknownDevil(_))));
    }
}
