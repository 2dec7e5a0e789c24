//! Security allocation for networked control systems under stealthy
//! injection attacks: worst-case impact certification by semidefinite
//! programming, optimal monitor placement, and the diagonal-certificate
//! scalable track.

// Force linkage of the system BLAS/LAPACK used by the conic solver.
extern crate openblas_src;

pub mod allocation;
pub mod disruption;
pub mod graph;
pub mod oracle;
pub mod scalable;
pub mod sdp;
pub mod sim;

pub mod config;
pub mod experiments;

#[cfg(test)]
pub(crate) mod testutil;
