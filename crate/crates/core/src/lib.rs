//! Engine for the weighted angel-devil game and the angel's hierarchical
//! strategy.

pub mod game;
pub mod geom;
pub mod measure;
pub mod moves;
pub mod params;
pub mod rat;
pub mod runs;
pub mod scaleup;
pub mod devils;
pub mod strategy;
pub mod trace;
pub mod play;
pub mod lemmas;
pub mod session;

pub use geom::{CellBox, CellCoord, Direction, Sym};
pub use measure::{ColonyGrid, Measure};
pub use params::{solve_params, ParamSet};
pub use rat::{Rat, Weight};
