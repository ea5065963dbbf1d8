//! Mixed-integer model on the reduced instance, its LP text form and the
//! external solver bridge.

mod adapter;
mod lp;
mod model;
mod solve;

pub use adapter::{
    write_values, Capabilities, CommandAdapter, CommandDescriptor, RawSolution, SolveStatus, SolverAdapter,
};
pub use lp::{LinearModel, Row, Sense, Var, VarKind};
pub use model::{build_model, build_model_with, MilpModel, ModelOptions, PairVars};
pub use solve::{emit_model, solve, MilpOutcome};
