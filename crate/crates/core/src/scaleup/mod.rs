//! The scaled game's implementation map: each big move is carried out as a
//! sequence of small moves by a deterministic local strategy.

pub mod frame;
pub mod plane;
pub mod route;
pub mod ledger;
pub mod implement;
pub mod run;
pub mod transfer;
pub mod fuzz;
