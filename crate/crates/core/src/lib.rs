//! Dirichlet-process mixtures of centered Erdős–Rényi (CER) kernels for
//! clustering, density estimation and prediction over populations of
//! labeled binary graphs.
//!
//! The crate is organised bottom-up: [`graph`] and [`io`] hold the data,
//! [`special`] the incomplete beta machinery, [`cer`] the kernel and base
//! measure, [`comb`] the exact reshuffling weights, [`gibbs`] the sampler,
//! [`partition`] point estimation and metrics, [`predictive`] the closed-form
//! predictive laws, [`consensus`] the node-blocked approximation and
//! [`simstudy`] synthetic data and divergence estimates; [`trace`] reads and
//! writes sampler output.

pub mod error;
pub mod graph;
pub mod io;
pub mod par;
pub mod special;
pub mod cer;
pub mod comb;
pub mod consensus;
pub mod gibbs;
pub mod partition;
pub mod predictive;
pub mod simstudy;
pub mod trace;

pub use error::{Error, ErrorKind, Result};
pub use graph::{frechet_mean, Graph, GraphPopulation, TieRule};
pub use par::Parallelism;
