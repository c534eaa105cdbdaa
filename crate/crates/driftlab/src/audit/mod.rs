//! Statistical checks of the martingale, bracket and deflator identities.

mod deflator;
mod increment;
mod ladder;
mod report;

pub use deflator::{deflator, deflator_audit, deflator_path, DeflatorLog, DeflatorPath};
pub use increment::{increment_test, qv_check};
pub use ladder::ladder_identity_test;
pub use report::{AuditEntry, AuditMetadata, AuditReport, Z_LEVEL};
