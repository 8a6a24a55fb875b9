//! The session protocol: request and view payloads shared by the service and
//! its clients, and [`Session`], one game in which an outside party plays the
//! devil against η one reply at a time.

use serde::{Deserialize, Serialize};

use crate::devils::{self, Landing};
use crate::game::Outcome;
use crate::geom::{floor_div, CellBox, CellCoord};
use crate::measure::ColonyGrid;
use crate::moves::LocatedMove;
use crate::params::{solve_params, ParamSet};
use crate::play::{Match, MatchConfig, MatchError, MatchReport};
use crate::rat::Rat;
use crate::runs::{grid_col, grid_row, Thresholds};
use crate::trace::{Trace, TraceLine};

/// Shown on every payload of a toy-parameter session.
pub const WATERMARK: &str = "not theorem-covered";
/// Largest number of colonies one view may cover.
pub const MAX_VIEW_COLONIES: i128 = 1 << 16;
/// Largest zoom level (colonies of side `Q^k`).
pub const MAX_ZOOM: u32 = 4;
/// Trace lines kept in the history and ledger tails of a view.
pub const TAIL: usize = 20;
/// Landing options listed in a prompt.
const PROMPT_OPTIONS: usize = 16;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Valid,
    Toy,
}

fn default_depth() -> usize {
    1
}

fn default_horizon() -> usize {
    1_000_000
}

fn default_label() -> String {
    "session".into()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreateRequest {
    /// Defaults to the solved set for ξ = 3/4, κ = 12, or the default toy set.
    #[serde(default)]
    pub params: Option<ParamSet>,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    /// Devil name written into the trace header.
    #[serde(default = "default_label")]
    pub label: String,
}

impl Default for CreateRequest {
    fn default() -> Self {
        CreateRequest {
            params: None,
            mode: Mode::Valid,
            seed: 0,
            depth: default_depth(),
            horizon: default_horizon(),
            label: default_label(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DevilTurnRequest {
    #[serde(default)]
    pub deposits: Vec<(CellCoord, Rat)>,
    pub dt: u64,
    /// Where the angel lands; defaults to the first clear success landing.
    #[serde(default)]
    pub landing: Option<Landing>,
}

/// Half-open cell rectangle and zoom level for [`Session::view`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewRequest {
    pub x0: i64,
    pub y0: i64,
    pub x1: i64,
    pub y1: i64,
    #[serde(default)]
    pub zoom: u32,
}

impl ViewRequest {
    /// A `side`-cell square at zoom 0 centred on `p`.
    pub fn around(p: CellCoord, side: i64) -> ViewRequest {
        let h = side / 2;
        ViewRequest { x0: p.x - h, y0: p.y - h, x1: p.x - h + side, y1: p.y - h + side, zoom: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LandingPrompt {
    #[serde(rename = "move")]
    pub mv: String,
    /// Success landings lie in this box.
    pub dest: CellBox,
    /// Failure landings lie in these boxes (attacks only).
    pub transits: Vec<CellBox>,
    /// Landings that are legal under the current measure.
    pub options: Vec<Landing>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Status {
    pub id: u64,
    pub mode: Mode,
    pub watermark: Option<String>,
    pub t: u64,
    pub angel: CellCoord,
    pub j: Outcome,
    pub units: usize,
    pub total_mass: Rat,
    pub sigma: Rat,
    /// `σ·t` minus everything deposited so far.
    pub slack: Rat,
    /// Largest clock advance the time bound allows for a deposit-free reply
    /// with the default landing.
    pub max_dt: Option<u64>,
    /// The angel's move awaiting a reply.
    #[serde(rename = "move")]
    pub mv: Option<String>,
    pub prompt: Option<LandingPrompt>,
    pub report: Option<MatchReport>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColonyView {
    /// Colony index at the view's zoom level.
    pub c: CellCoord,
    pub mass: Rat,
    pub good: bool,
    pub safe: bool,
    pub bad: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct View {
    pub status: Status,
    pub request: ViewRequest,
    /// Side of a colony at this zoom, `Q^zoom` cells.
    pub b: i64,
    /// Colony indices covered: `origin + [0,width) x [0,height)`.
    pub origin: CellCoord,
    pub width: usize,
    pub height: usize,
    /// Colonies with positive mass; absent colonies are empty.
    pub colonies: Vec<ColonyView>,
    /// Whether each visible colony row (bottom to top) is clean.
    pub row_clean: Vec<bool>,
    /// Whether each visible colony column (left to right) is clean.
    pub col_clean: Vec<bool>,
    /// Latest angel and devil lines.
    pub history: Vec<TraceLine>,
    /// Latest ledger and implementation lines.
    pub ledger: Vec<TraceLine>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreateResponse {
    pub id: u64,
    pub view: View,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnResponse {
    /// The devil's deposits as applied, merged per cell.
    pub deposited: Vec<(CellCoord, Rat)>,
    /// The angel's answer, `None` once the match is over.
    #[serde(rename = "move")]
    pub mv: Option<String>,
    pub status: Status,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CloseResponse {
    pub status: Status,
    pub trace: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[serde(tag = "kind", content = "reason", rename_all = "snake_case")]
pub enum SessionError {
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("reply rejected: {0}")]
    Rejected(String),
    #[error("no clear success landing; choose one")]
    NoLanding,
    #[error("match is over")]
    Over,
    #[error("bad viewport: {0}")]
    Viewport(String),
    #[error("unknown session {0}")]
    UnknownSession(u64),
    #[error("bad trace: {0}")]
    Trace(String),
}

/// One game driven by an outside devil. Every state change goes through
/// [`Session::devil_turn`], so the trace alone reconstructs the session.
pub struct Session {
    id: u64,
    mode: Mode,
    m: Match,
}

impl Session {
    pub fn create(id: u64, req: &CreateRequest) -> Result<Session, SessionError> {
        let toy = req.mode == Mode::Toy;
        let params = match &req.params {
            Some(p) => p.clone(),
            None if toy => ParamSet::default_toy(),
            None => solve_params(Rat::new(3, 4), 12).map_err(|e| SessionError::BadParams(e.to_string()))?,
        };
        let params = params.checked(toy).map_err(|e| SessionError::BadParams(e.to_string()))?;
        let cfg = MatchConfig { params, toy, depth: req.depth, seed: req.seed, horizon: req.horizon };
        let m = Match::new(&cfg, &req.label).map_err(|e| SessionError::BadParams(e.to_string()))?;
        Ok(Session { id, mode: req.mode, m })
    }

    /// Rebuild a session by feeding a trace's devil replies back in.
    pub fn restore(id: u64, trace: &Trace) -> Result<Session, SessionError> {
        let h = trace.header().map_err(|e| SessionError::Trace(e.to_string()))?;
        let mode = if h.params.valid { Mode::Valid } else { Mode::Toy };
        let req = CreateRequest {
            params: Some(h.params.clone()),
            mode,
            seed: h.seed,
            depth: h.depth,
            horizon: h.horizon,
            label: h.devil.clone(),
        };
        let mut s = Session::create(id, &req)?;
        for l in &trace.lines {
            if let TraceLine::Devil { index, t, p, delta, j } = l {
                s.m.apply_parts(*t, *p, *j, delta)
                    .map_err(|e| SessionError::Trace(format!("reply {index}: {e}")))?;
            }
        }
        Ok(s)
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn game(&self) -> &Match {
        &self.m
    }

    pub fn trace(&self) -> &Trace {
        self.m.trace()
    }

    /// Apply one devil reply and let η answer. A rejected reply leaves the
    /// session unchanged.
    pub fn devil_turn(&mut self, req: &DevilTurnRequest) -> Result<TurnResponse, SessionError> {
        let lm = *self.m.pending().ok_or(SessionError::Over)?;
        let start = self.m.log().current().clone();
        let t = start.t.checked_add(req.dt).ok_or_else(|| SessionError::Rejected("clock overflow".into()))?;
        if req.deposits.iter().any(|(_, a)| !a.is_positive()) {
            return Err(SessionError::Rejected("deposits must be positive".into()));
        }
        let deposited = devils::merge(&req.deposits);
        let landing = match req.landing {
            Some(l) => l,
            None => {
                let mu = start.mu.apply_delta(&deposited).map_err(|e| SessionError::Rejected(e.to_string()))?;
                default_landing(&self.m, &mu, &lm).ok_or(SessionError::NoLanding)?
            }
        };
        self.m.apply_parts(t, landing.p, landing.j, &deposited).map_err(|e| match e {
            MatchError::Over => SessionError::Over,
            e => SessionError::Rejected(e.to_string()),
        })?;
        let mv = self.m.pending().map(|a| a.name());
        Ok(TurnResponse { deposited, mv, status: self.status() })
    }

    pub fn status(&self) -> Status {
        let gs = self.m.spec();
        let cur = self.m.log().current();
        let total_mass = cur.mu.total().get();
        let sigma = gs.params.sigma;
        let pending = self.m.pending().copied();
        let max_dt = pending.and_then(|lm| {
            let l = default_landing(&self.m, &cur.mu, &lm)?;
            let (limit, _) = self.m.log().time_limit(cur, &lm, l.p, l.j, &[]);
            let latest = limit.floor();
            (latest >= cur.t as i128).then(|| (latest - cur.t as i128) as u64)
        });
        let prompt = pending.map(|lm| LandingPrompt {
            mv: lm.name(),
            dest: CellBox::colony(gs.b, lm.dest()),
            transits: if lm.z.is_attack() { lm.transits().into_iter().map(|c| CellBox::colony(gs.b, c)).collect() } else { vec![] },
            options: devils::landing_options(gs, &cur.mu, &lm, PROMPT_OPTIONS),
        });
        Status {
            id: self.id,
            mode: self.mode,
            watermark: (self.mode == Mode::Toy).then(|| WATERMARK.to_string()),
            t: cur.t,
            angel: cur.p,
            j: cur.j,
            units: self.m.units(),
            total_mass,
            sigma,
            slack: sigma * Rat::from(cur.t as i64) - total_mass,
            max_dt,
            mv: pending.map(|a| a.name()),
            prompt,
            report: self.m.report().cloned(),
        }
    }

    /// Colony masses and flags over a viewport at zoom `k`, with the tails of
    /// the history and ledger.
    pub fn view(&self, req: &ViewRequest) -> Result<View, SessionError> {
        if req.x0 >= req.x1 || req.y0 >= req.y1 {
            return Err(SessionError::Viewport("empty rectangle".into()));
        }
        if req.zoom > MAX_ZOOM {
            return Err(SessionError::Viewport(format!("zoom above {MAX_ZOOM}")));
        }
        let gs = self.m.spec();
        let b = gs.q().pow(req.zoom);
        let origin = CellCoord::new(floor_div(req.x0, b), floor_div(req.y0, b));
        let w = (floor_div(req.x1 - 1, b) - origin.x + 1) as i128;
        let h = (floor_div(req.y1 - 1, b) - origin.y + 1) as i128;
        if w * h > MAX_VIEW_COLONIES {
            return Err(SessionError::Viewport(format!("{w}x{h} colonies exceeds {MAX_VIEW_COLONIES}")));
        }
        let (width, height) = (w as usize, h as usize);
        let mu = &self.m.log().current().mu;
        let grid = ColonyGrid::build(mu, b, origin, width, height);
        let th = Thresholds::from(&*gs.params);
        let mut colonies = Vec::new();
        for j in 0..height {
            for i in 0..width {
                let mass = grid.at(i, j);
                if mass.is_positive() {
                    colonies.push(ColonyView {
                        c: origin.offset(i as i64, j as i64),
                        mass,
                        good: th.is_good(mass, Rat::ZERO, b),
                        safe: th.is_safe(mass, Rat::ZERO, b),
                        bad: th.is_bad(mass, b),
                    });
                }
            }
        }
        let row_clean = (0..height).map(|r| th.clean(&grid_row(&grid, r), Rat::ZERO, b)).collect();
        let col_clean = (0..width).map(|c| th.clean(&grid_col(&grid, c), Rat::ZERO, b)).collect();
        let lines = &self.m.trace().lines;
        let tail = |keep: fn(&TraceLine) -> bool| {
            let mut v: Vec<TraceLine> = lines.iter().rev().filter(|l| keep(l)).take(TAIL).cloned().collect();
            v.reverse();
            v
        };
        Ok(View {
            status: self.status(),
            request: *req,
            b,
            origin,
            width,
            height,
            colonies,
            row_clean,
            col_clean,
            history: tail(|l| matches!(l, TraceLine::Angel { .. } | TraceLine::Devil { .. })),
            ledger: tail(|l| matches!(l, TraceLine::Ledger { .. } | TraceLine::Impl { .. })),
        })
    }

    pub fn export_trace(&self) -> String {
        self.m.trace().to_text()
    }

    /// Final status and trace, handed back when the session is closed.
    pub fn close(&self) -> CloseResponse {
        CloseResponse { status: self.status(), trace: self.export_trace() }
    }
}

fn default_landing(m: &Match, mu: &crate::measure::Measure, lm: &LocatedMove) -> Option<Landing> {
    devils::landing_options(m.spec(), mu, lm, 1).into_iter().find(|l| l.j == Outcome::Succ)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::colony_of;
    use crate::play::{make_devil, run_match};
    use crate::trace::verify_trace;

    fn valid() -> Session {
        Session::create(1, &CreateRequest::default()).unwrap()
    }

    #[test]
    fn create_starts_at_the_origin_with_no_mass() {
        let s = valid();
        let st = s.status();
        assert_eq!((st.t, st.angel, st.total_mass), (0, CellCoord::ORIGIN, Rat::ZERO));
        assert_eq!(st.watermark, None);
        assert!(st.mv.is_some());
    }

    #[test]
    fn toy_mode_is_watermarked_and_invalid_params_are_refused() {
        let toy = Session::create(2, &CreateRequest { mode: Mode::Toy, ..Default::default() }).unwrap();
        assert_eq!(toy.status().watermark.as_deref(), Some(WATERMARK));
        let bad = CreateRequest { params: Some(ParamSet::default_toy()), ..Default::default() };
        assert!(matches!(Session::create(3, &bad), Err(SessionError::BadParams(_))));
    }

    #[test]
    fn zero_deposits_still_move_the_angel() {
        let mut s = valid();
        let r = s.devil_turn(&DevilTurnRequest { dt: 1, ..Default::default() }).unwrap();
        assert!(r.mv.is_some());
        assert_eq!(r.status.units, 1);
        assert_ne!(r.status.angel, CellCoord::ORIGIN);
    }

    #[test]
    fn over_budget_deposit_is_rejected_and_changes_nothing() {
        let mut s = valid();
        let before = s.export_trace();
        let st = s.status();
        let dt = st.max_dt.expect("a deposit-free reply exists");
        assert!(dt >= 1);
        let budget = st.sigma * Rat::from(dt as i64);
        let cell = CellCoord::new(30, 30);
        let req = DevilTurnRequest { deposits: vec![(cell, budget + Rat::new(1, 1 << 50))], dt, landing: None };
        let e = s.devil_turn(&req).unwrap_err();
        assert!(matches!(e, SessionError::Rejected(ref r) if r.contains("budget")), "{e}");
        assert_eq!(s.export_trace(), before);
        assert_eq!(s.status(), st);
        let late = DevilTurnRequest { dt: dt + 1, ..Default::default() };
        assert!(matches!(s.devil_turn(&late), Err(SessionError::Rejected(_))));
        assert_eq!(s.export_trace(), before);
        s.devil_turn(&DevilTurnRequest { deposits: vec![(cell, budget)], dt, landing: None }).unwrap();
        assert_eq!(s.status().slack, Rat::ZERO);
    }

    #[test]
    fn view_aggregates_to_colonies_and_flags_match_the_predicates() {
        let mut s = Session::create(4, &CreateRequest { mode: Mode::Toy, ..Default::default() }).unwrap();
        let sigma = s.status().sigma;
        for k in 0..60 {
            let st = s.status();
            let Some(dt) = st.max_dt.filter(|_| st.mv.is_some()) else { break };
            let share = sigma * Rat::from(dt as i64) / Rat::from(2);
            let deps = if dt == 0 { vec![] } else { vec![(CellCoord::new(3 + k % 4, 9), share), (CellCoord::new(-20, 4), share)] };
            s.devil_turn(&DevilTurnRequest { deposits: deps, dt, landing: None }).unwrap();
        }
        assert!(s.status().units >= 10);
        let mu = s.game().log().current().mu.clone();
        let q = s.game().spec().q();
        for zoom in 0..=2u32 {
            let req = ViewRequest { x0: -40, y0: -40, x1: 40, y1: 40, zoom };
            let v = s.view(&req).unwrap();
            let b = q.pow(zoom);
            assert_eq!(v.b, b);
            let th = Thresholds::from(&*s.game().spec().params);
            let mut seen = Rat::ZERO;
            for c in &v.colonies {
                assert_eq!(c.mass, mu.mass_box(&CellBox::colony(b, c.c)));
                assert_eq!(c.good, c.mass < (Rat::ONE) * b);
                assert_eq!(c.safe, th.is_safe(c.mass, Rat::ZERO, b));
                seen += c.mass;
            }
            assert_eq!(seen, mu.total().get());
            for (r, &flag) in v.row_clean.iter().enumerate() {
                let row: Vec<Rat> =
                    (0..v.width).map(|i| mu.mass_box(&CellBox::colony(b, v.origin.offset(i as i64, r as i64)))).collect();
                assert_eq!(flag, th.clean(&row, Rat::ZERO, b));
            }
        }
        let raw = s.view(&ViewRequest { x0: 0, y0: 0, x1: 10, y1: 10, zoom: 0 }).unwrap();
        assert!(raw.colonies.iter().all(|c| c.mass == mu.weight(c.c).get()));
        assert_eq!(colony_of(1, CellCoord::new(3, 9)), CellCoord::new(3, 9));
        assert!(s.view(&ViewRequest { x0: 0, y0: 0, x1: 1000, y1: 1000, zoom: 0 }).is_err());
    }

    #[test]
    fn scripted_replies_match_the_harness_and_restore_from_the_trace() {
        let cfg = MatchConfig { params: solve_params(Rat::new(3, 4), 12).unwrap(), toy: false, depth: 1, seed: 3, horizon: 40 };
        let mut devil = make_devil("random", 3).unwrap();
        let (trace, _) = run_match(&cfg, devil.as_mut()).unwrap();
        let req = CreateRequest { seed: 3, horizon: 40, label: devil.name(), ..Default::default() };
        let mut s = Session::create(9, &req).unwrap();
        let mut t0 = 0;
        for l in &trace.lines {
            if let TraceLine::Devil { t, p, delta, j, .. } = l {
                s.devil_turn(&DevilTurnRequest { deposits: delta.clone(), dt: t - t0, landing: Some(Landing { p: *p, j: *j }) })
                    .unwrap();
                t0 = *t;
            }
        }
        assert_eq!(s.export_trace(), trace.to_text());
        assert!(verify_trace(s.trace(), None).unwrap().is_clean());
        let back = Session::restore(10, s.trace()).unwrap();
        assert_eq!(back.export_trace(), s.export_trace());
        assert!(matches!(
            s.devil_turn(&DevilTurnRequest { dt: 1, ..Default::default() }),
            Err(SessionError::Over)
        ));
    }
}
