//! Robust decision aggregation for two experts with binary states, signals
//! and actions, including second-order predictions.

pub mod aggregators;
pub mod bounds;
pub mod error;
pub mod game;
pub mod learner;
pub mod model;
pub mod regret;
pub mod search;
pub mod verify;

pub use aggregators::{Aggregator, GridParams};
pub use bounds::{yao_bound, Construction, InfoLevel, LowerBoundCertificate, StructureDistribution};
pub use error::{Error, Result};
pub use learner::{certify, learn, loss_gradient, LearnerConfig};
pub use model::{
    CondIndepStructure, Family, FamilyKind, GeneralStructure, ReportProfile, Signal, Structure,
    UtilityRatio,
};
pub use regret::{loss, worst_case, RegretCertificate, SearchConfig};
