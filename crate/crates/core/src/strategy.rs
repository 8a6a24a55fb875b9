//! The amplifier (games `G_k` with `B_k = Q^k`), stacks of per-level
//! histories, the nested strategy ψ and the plain strategy η derived from it.
//!
//! Level `k` of a stack holds the a-history of `G_k` moves implementing the
//! current `G_{k+1}` move, driven by one [`Implementation`]. A halt at level
//! `k` closes the big move with `Ĵ`, asks level `k+1` for the next big move
//! and restarts level `k` on it. Missing top levels are implementations of
//! the default move, created on demand.

use std::collections::{HashSet, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::game::{angel_allowed, devil_allowed_spatial, Configuration, GameLog, GameSpec};
use crate::geom::{CellCoord, Direction};
use crate::moves::{self, LocatedMove};
use crate::params::{ParamError, ParamSet};
use crate::scaleup::implement::{Diagnostic, Emission, ImplContext, ImplReport, Implementation};
use crate::scaleup::ledger::ChargeKind;
use crate::scaleup::run::Violation;
use crate::rat::Rat;

/// Highest game level the amplifier will build (`Q^k` must fit coordinates).
pub const MAX_LEVEL: usize = 8;

/// Earlier implementations per level whose claimed cells stay off limits.
const RECENT: usize = 4;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum StrategyError {
    #[error("amplifier depth cap {MAX_LEVEL} reached")]
    DepthCap,
    #[error("level {level}: implementation of {big} halted before its first move")]
    ImmediateHalt { level: usize, big: String },
    #[error(transparent)]
    Params(#[from] ParamError),
}

/// Tower of games, grown on demand.
#[derive(Clone, Debug)]
pub struct Amplifier {
    games: Vec<Arc<GameSpec>>,
}

impl Amplifier {
    /// `depth` games `G_0..G_{depth-1}`; depth 1 is the base game alone.
    pub fn build(params: ParamSet, allow_toy: bool, depth: usize) -> Result<Amplifier, StrategyError> {
        let base = GameSpec::base(params, allow_toy)?;
        let mut amp = Amplifier::from_base(base);
        amp.ensure(depth.max(1) - 1)?;
        Ok(amp)
    }

    pub fn from_base(base: Arc<GameSpec>) -> Amplifier {
        Amplifier { games: vec![base] }
    }

    pub fn depth(&self) -> usize {
        self.games.len()
    }

    pub fn games(&self) -> &[Arc<GameSpec>] {
        &self.games
    }

    fn ensure(&mut self, k: usize) -> Result<(), StrategyError> {
        if k > MAX_LEVEL {
            return Err(StrategyError::DepthCap);
        }
        while self.games.len() <= k {
            let top = self.games.last().expect("base game").clone();
            self.games.push(GameSpec::scaled(&top));
        }
        Ok(())
    }

    /// Game `G_k`, building missing levels.
    pub fn game(&mut self, k: usize) -> Result<Arc<GameSpec>, StrategyError> {
        self.ensure(k)?;
        Ok(self.games[k].clone())
    }
}

/// The default move at every scale: an eastward step into colony (0,0).
pub fn default_move() -> LocatedMove {
    LocatedMove::new(CellCoord::new(-1, 0), moves::step(Direction::E))
}

/// Time 0, origin, null measure, success.
pub fn default_configuration() -> Configuration {
    Configuration::default()
}

/// Per-level summary for trace snapshots.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelSnapshot {
    pub level: usize,
    /// Records of the level's current a-history.
    pub len: usize,
    pub big: String,
    pub last: Option<String>,
}

/// A finished implementation, with its ledger entries and their cover.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClosedImpl {
    pub level: usize,
    pub report: ImplReport,
    pub charges: Vec<LedgerLine>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerLine {
    pub id: usize,
    pub kind: ChargeKind,
    pub region: Vec<CellCoord>,
    pub charge: Rat,
    /// `ρ₁` times the region's mass when the implementation closed.
    pub cover: Rat,
}

#[derive(Clone, Debug)]
struct Level {
    imp: Implementation,
    /// Configurations and moves since the implementation started.
    len: usize,
    /// Last move played at this level, across implementations.
    last: Option<LocatedMove>,
    recent: VecDeque<HashSet<CellCoord>>,
    /// Game log at this level (levels above the base); starts at the first
    /// configuration after the default unit.
    log: Option<GameLog>,
    /// Last emitted move and its start configuration, awaiting closure.
    pending: Option<(LocatedMove, Configuration)>,
}

/// The nested strategy's state: one level per active game.
#[derive(Clone, Debug)]
pub struct Stack {
    amp: Amplifier,
    levels: Vec<Level>,
    /// Contract checks that failed at any level.
    pub violations: Vec<Violation>,
    /// Implementations closed since the last [`Stack::drain_closed`].
    closed: Vec<ClosedImpl>,
    /// Deepest the stack has been.
    pub max_depth: usize,
}

impl Stack {
    pub fn new(amp: Amplifier) -> Stack {
        Stack { amp, levels: Vec::new(), violations: Vec::new(), closed: Vec::new(), max_depth: 0 }
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn amplifier(&self) -> &Amplifier {
        &self.amp
    }

    pub fn snapshot(&self) -> Vec<LevelSnapshot> {
        self.levels
            .iter()
            .enumerate()
            .map(|(k, l)| LevelSnapshot { level: k, len: l.len, big: l.imp.big().name(), last: l.last.map(|m| m.name()) })
            .collect()
    }

    pub fn drain_closed(&mut self) -> Vec<ClosedImpl> {
        std::mem::take(&mut self.closed)
    }

    /// ψ at the base level: the angel's answer to the devil's configuration.
    pub fn respond(&mut self, d: &Configuration) -> Result<LocatedMove, StrategyError> {
        self.advance(0, d.clone())
    }

    fn implementation(&mut self, k: usize, big: LocatedMove, prefix: Vec<LocatedMove>, forbidden: HashSet<CellCoord>) -> Result<Implementation, StrategyError> {
        let inner = self.amp.game(k)?;
        let outer = self.amp.game(k + 1)?;
        Ok(Implementation::new(ImplContext { inner, outer, big, prefix, forbidden }))
    }

    fn ensure_level(&mut self, k: usize) -> Result<(), StrategyError> {
        while self.levels.len() <= k {
            let n = self.levels.len();
            let imp = self.implementation(n, default_move(), vec![default_move()], HashSet::new())?;
            self.levels.push(Level { imp, len: 1, last: None, recent: VecDeque::new(), log: None, pending: None });
        }
        self.max_depth = self.max_depth.max(self.levels.len());
        Ok(())
    }

    fn violation(&mut self, k: usize, check: &str, detail: String) {
        self.violations.push(Violation::new(check, format!("level {k}: {detail}")));
    }

    /// Close the pending move at level `k ≥ 1` with the configuration `d`.
    fn close_pending(&mut self, k: usize, d: &Configuration) {
        let gs = self.amp.games[k].clone();
        let level = &mut self.levels[k];
        let Some((a, start)) = level.pending.take() else {
            // the default unit: the level's log starts here
            level.log = Some(GameLog::new(gs, d.clone()));
            return;
        };
        let log = level.log.as_mut().expect("log after the first unit");
        let deposited = d.mu.total().get() - start.mu.total().get();
        let mut found = Vec::new();
        if let Err(e) = devil_allowed_spatial(&gs, &start, &a, d, deposited) {
            found.push(("J", format!("{}: {e}", a.name())));
        }
        let delta = d.mu.delta_from(&start.mu);
        if let Err(e) = log.check_temporal(&start, &a, d, &delta) {
            found.push(("big temporal", format!("{}: {e}", a.name())));
        }
        log.push(a, d.clone(), &delta);
        for (c, s) in found {
            self.violation(k, c, s);
        }
    }

    fn close_impl(&mut self, k: usize, d: &Configuration) {
        let inner = self.amp.games[k].clone();
        let level = &mut self.levels[k];
        let report = level.imp.report();
        let rho1 = inner.params.rho1;
        let charges = level
            .imp
            .ledger
            .entries
            .iter()
            .map(|e| LedgerLine {
                id: e.id,
                kind: e.kind,
                region: e.region.clone(),
                charge: e.charge,
                cover: rho1 * inner.set_mass(&d.mu, e.region.iter().copied()),
            })
            .collect();
        let audit = level.imp.ledger.audit(&inner, &d.mu, level.imp.bodies());
        level.recent.push_back(level.imp.claimed());
        if level.recent.len() > RECENT {
            level.recent.pop_front();
        }
        let diags: Vec<Diagnostic> = report.diagnostics.clone();
        let big = report.big.clone();
        self.closed.push(ClosedImpl { level: k, report, charges });
        for dg in diags {
            self.violation(k, &dg.lemma, format!("{big}: {}", dg.detail));
        }
        if !audit.is_clean() {
            self.violation(k, "ledger", format!("{big}: {audit:?}"));
        }
    }

    fn advance(&mut self, k: usize, d: Configuration) -> Result<LocatedMove, StrategyError> {
        self.ensure_level(k)?;
        if k > 0 {
            self.close_pending(k, &d);
        }
        let prev = self.levels[k].last;
        match self.levels[k].imp.next(&d, prev.as_ref()) {
            Emission::Move(a) => Ok(self.accept(k, d, a, prev)),
            Emission::Halt(o) => {
                self.close_impl(k, &d);
                let dstar = Configuration { j: o, ..d.clone() };
                let big = self.advance(k + 1, dstar)?;
                let forbidden: HashSet<CellCoord> = self.levels[k].recent.iter().flatten().copied().collect();
                let imp = self.implementation(k, big, Vec::new(), forbidden)?;
                self.levels[k].imp = imp;
                self.levels[k].len = 0;
                match self.levels[k].imp.next(&d, prev.as_ref()) {
                    Emission::Move(a) => Ok(self.accept(k, d, a, prev)),
                    Emission::Halt(_) => Err(StrategyError::ImmediateHalt { level: k, big: big.name() }),
                }
            }
        }
    }

    fn accept(&mut self, k: usize, d: Configuration, a: LocatedMove, prev: Option<LocatedMove>) -> LocatedMove {
        if k > 0 {
            let gs = self.amp.games[k].clone();
            if let Err(e) = angel_allowed(&gs, &d, &a, prev.as_ref()) {
                self.violation(k, "angel_allowed", format!("{}: {e}", a.name()));
            }
            self.levels[k].pending = Some((a, d));
        }
        let level = &mut self.levels[k];
        level.len += 1;
        level.last = Some(a);
        a
    }
}

/// η: the plain strategy as a function of the devil's configurations so far.
/// Deterministic; replays the whole sequence through a fresh stack.
pub fn eta(amp: &Amplifier, gamma: &[Configuration]) -> Result<LocatedMove, StrategyError> {
    let mut stack = Stack::new(Amplifier::from_base(amp.games()[0].clone()));
    let mut last = None;
    for d in gamma {
        last = Some(stack.respond(d)?);
    }
    Ok(last.expect("eta needs at least the default configuration"))
}
