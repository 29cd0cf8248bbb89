//! Learned data association for online multi-object tracking.
//!
//! Trajectories and detections form a bipartite graph. A two-stream affinity
//! network scores every pair, one round of message passing refines the
//! scores into an association matrix, and the matrix is interpreted into
//! matches, births, and deaths. Everything, including the reverse-mode
//! differentiation, is implemented on `f64` tensors in this crate.

pub mod ablation;
pub mod affinity;
pub mod assoc;
pub mod autodiff;
pub mod config;
pub mod error;
pub mod gnn;
pub mod gradsuite;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod plot;
pub mod scenario;
pub mod solvers;
pub mod tracker;
pub mod train;

pub use error::{Error, Result};
