//! Planning and simulation toolkit for collaborative training over heterogeneous,
//! unreliable volunteer hardware.
//!
//! * [`model`]: peers, collaborations, solved strategies
//! * [`strategy`]: bandwidth-aware averaging strategy via linear programming, plus
//!   all-reduce and parameter-server baselines
//! * [`groups`]: group all-reduce plans and failure-aware group sizing
//! * [`netsim`]: discrete-event simulation of training under churn
//! * [`streaming`]: shard scheduling, shuffle buffer and dataset mixing
//! * [`auth`]: access passes and signed request/response envelopes
//! * [`sgd`]: numerical checks of varying-batch SGD on quadratics

pub mod auth;
mod error;
pub mod groups;
pub mod model;
pub mod netsim;
pub mod sgd;
pub mod strategy;
pub mod streaming;

pub use error::ModelError;
pub use model::{CollaborationSpec, LinkLimits, PeerId, PeerSpec, StrategyAssignment, Violation};
