//! Reference values and a small pass/fail reporter for the
//! acceptance suite.

pub mod reference;
pub mod report;
