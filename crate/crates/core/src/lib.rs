//! Capability planning: encode a capability model as bounded happenings,
//! hand it to an SMT-LIB2 solver and read back plans or conflict explanations.

pub mod cli;
pub mod encoder;
pub mod expr;
pub mod model;
pub mod oracle;
pub mod planner;
pub mod smt;
pub mod synonymy;

pub use encoder::{Encoding, SynonymMode};
pub use expr::{Datatype, Expr, Op, Value};
pub use model::CapabilityModel;
pub use synonymy::SynonymyIndex;
