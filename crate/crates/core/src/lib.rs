//! Dense-tensor CP decomposition toolkit.
//!
//! Three families of alternating-least-squares solvers share one set of
//! kernels:
//!
//! * [`solvers::cp_als`]: normal-equation ALS driven by MTTKRP.
//! * [`solvers::cp_als_qr`]: ALS whose subproblems are solved through the QR
//!   factorization of the Khatri-Rao product of triangular factors. The
//!   tensor-times-matrix chain it needs is scheduled by [`dimtree`], either
//!   naively, with a classical dimension tree, or with branch reutilization
//!   across sweeps.
//! * [`solvers::als_qr_bre`]: branch reutilization plus extrapolation of the
//!   orthonormal factor `Q0`.
//!
//! Mode indices are zero-based throughout the library API. The command-line
//! front end and trace files print them one-based.

pub mod cli;
pub mod dimtree;
pub mod error;
pub mod io;
pub mod kruskal;
pub mod linalg;
pub mod solvers;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use kruskal::KruskalModel;
pub use tensor::{DenseTensor, Matrix, Shape};
