//! Simulation and identifiability analysis for parameterized input/output
//! ODE systems probed with steps, pulses, ramps and impulses.

pub mod cli;
pub mod demo;
pub mod estimate;
pub mod expr;
pub mod ident;
pub mod io;
pub mod lti;
pub mod model_file;
pub mod signals;
pub mod sim;
pub mod systems;

pub use expr::{Expr, ExprError, Scope, Var};
pub use signals::{InputSignal, SignalClass, SignalError};
pub use sim::{integrate, SimError, SolverConfig, Trajectory};
pub use systems::{get_registry_model, GeneralSystem, LinearSystem, ModelRegistryEntry, ParamMap, SystemError};
