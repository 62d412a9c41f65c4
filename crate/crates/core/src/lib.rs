//! Report-guided false-positive reduction for 3D lung nodule detection.
//!
//! Candidates from a pluggable detector are assigned to lung lobes and
//! filtered against the tumor lobes extracted from a clinical report.
//! Synthetic phantoms with paired reports provide ground truth end to end.

pub mod corpus;
pub mod detect;
pub mod extract;
pub mod guide;
pub mod harness;
pub mod lobe;
pub mod losses;
pub mod metrics;
pub mod phantom;
pub mod voxelcore;
