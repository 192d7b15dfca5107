//! Estimators for partition-function ratios and counts of Gibbs distributions
//! that only use sample access to the distribution at chosen inverse temperatures.

pub mod apps;
pub mod error;
pub mod gibbs;
pub mod instances;
pub mod integer;
pub mod oracle;
pub mod pratio;
pub mod profile;
pub mod rng;
pub mod pcoef;
pub mod sampling;
pub mod schedule;
pub mod search;
pub mod table;

pub use error::{Error, Result};
pub use gibbs::{find_betamax, GibbsInstance, Setting};
pub use oracle::{exact_oracle, tv_perturbed_oracle, Domain, OracleHandle, ShiftMode};
pub use profile::ConstantsProfile;
pub use apps::Graph;
pub use instances::{FamilyKind, FamilyParams, InstanceFamily};
