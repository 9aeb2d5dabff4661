//! Parameter updates: momentum SGD with weight decay, a dense Newton step,
//! and the early-stopping controller.

mod early_stop;
mod newton;
mod sgdm;

pub use early_stop::{early_stop_update, EarlyStopState, StopDecision};
pub use newton::{lu_solve, newton_step, LuSolution};
pub use sgdm::{sgdm_step, SgdmConfig, SgdmState};
