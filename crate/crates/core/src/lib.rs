//! Synchronization-bug detection for SIMT kernels written in a small IR.

pub mod ir;
pub mod sim;
pub mod detect;
pub mod inputgen;
pub mod report;
