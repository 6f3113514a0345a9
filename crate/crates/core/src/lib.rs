//! Disaster response network assessment.
//!
//! Builds egocentric and organization-level networks from fixed-list
//! survey responses, derives connectedness and coordination scores per
//! respondent, detects cohesive subgroups to predict tier membership, and
//! runs the rank-based comparisons and correlations used to test how
//! connectedness relates to coordination.

pub mod graph;
pub mod measures;
pub mod pipeline;
pub mod report;
pub mod stats;
pub mod subgroup;
pub mod survey;
pub mod synthetic;
