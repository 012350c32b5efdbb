//! Off-the-grid sparse super-resolution toolkit: correlation kernels with
//! high-order derivatives, de Boor least-interpolation bases, dual
//! certificates, and a Frank-Wolfe BLASSO solver.

pub mod blasso;
pub mod certificate;
pub mod cli;
pub mod error;
pub mod jet;
pub mod kernel;
pub mod leastspace;
pub mod poly;

pub use blasso::{
    fw_solve, noise_measure, objective, residual_correlation, two_spike_sweep, FwOptions,
    Observation, SolveTrace, SpikeMeasure, SweepResult, SweepRow, Termination,
};
pub use certificate::{
    check_nd, convergence_study, eta_v, eta_w, eta_w_gaussian_closed, eta_w_lowpass_1d,
    pair_nd_matrix, Certificate, CertificateKind, ConvergenceStudy, GaussianClosedForm,
    LowpassClosedForm, NdOptions, NdReport, Verdict,
};
pub use cli::ExperimentConfig;
pub use error::{Error, Result};
pub use kernel::{CorrelationKernel, KernelKind, KernelSpec, PartialsTable};
pub use leastspace::{least_basis, least_basis_1d, LeastBasis};
pub use poly::{DerivativeOracle, MultiIndex, MultiIndexPolynomial};
