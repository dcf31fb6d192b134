//! Run-time negotiation: delegating a policy to part of the network,
//! checking that a refined policy implies its original, and adapting
//! bandwidth among tenants within a cap.

mod adapt;
mod delegate;
mod tree;
mod verify;

use thiserror::Error;

use crate::automata::AutomataError;
use crate::policy::PolicyError;

pub use adapt::{share_leftover, step_aimd, step_mmfs, step_mmfs_bytes, AimdParams};
pub use delegate::{delegate, Delegation, Scope};
pub use tree::{
    parse_demand_trace, AdaptationLog, AllocationRecord, DemandSample, Message, MessageKind, NegotiatorNode,
    NegotiatorTree, Scheme,
};
pub use verify::{verify_refinement, Rejection, Verdict};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum NegotiatorError {
    #[error("the delegation scope contains no locations or no packets")]
    EmptyScope,
    #[error("scope location `{0}` is not in the topology")]
    UnknownLocation(String),
    #[error("bandwidth formulas with `or` or `!` cannot be delegated")]
    UnsupportedFormula,
    #[error(transparent)]
    Automata(#[from] AutomataError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("demand trace line {line}: {message}")]
    Csv { line: usize, message: String },
}
