//! A laboratory for learned branching in mixed integer linear programming.
//!
//! The pipeline: seeded instance generators ([`instgen`]) feed a
//! branch-and-bound engine ([`bnb`]) built on a deterministic simplex
//! ([`lp`]). Full strong branching rollouts produce expert samples encoded as
//! bipartite graphs ([`encoder`]); variable shifting ([`milp::MilpInstance::shift`])
//! multiplies those samples without re-solving, and a bipartite graph
//! convolutional policy ([`gcnn`]) is trained on them with an imitation,
//! contrastive and consistency objective ([`trainer`]).

pub mod error;
pub mod milp;
pub mod lp;
pub mod instgen;
pub mod encoder;
pub mod autodiff;
pub mod gcnn;
pub mod samples;
pub mod bnb;
pub mod trainer;
pub mod verify;

pub use error::{Error, Result};

#[cfg(test)]
#[path = "../tests/common/oracle.rs"]
pub(crate) mod oracle;
