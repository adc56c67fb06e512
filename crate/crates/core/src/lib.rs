//! Exact finite-stage simulations of marker constructions over c.e. sets:
//! Kraft-Chaitin machines, stagewise complexity approximations, the single and
//! dual engines, and an auditor that replays their traces.

pub mod approx;
pub mod audit;
pub mod bitcore;
pub mod dual;
pub mod engine;
pub mod machines;
pub mod single;
pub mod trace;
