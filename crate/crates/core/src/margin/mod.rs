//! Max-margin characterization: the reduced convex problem over `(v, u)`,
//! the hard-margin linear SVM, KKT construction and verification, multiplier
//! recovery from trained weights, and the three-point counterexample.

mod counterexample;
mod kkt;
mod nnls;
mod qp;
mod svm;

pub use counterexample::{counterexample, Counterexample};
pub use kkt::{
    build_kkt_network, normalize_by_margin, recover_lambda, verify_theorem, KktInput, KktReport,
    LambdaRecovery, VerifyOptions,
};
pub use nnls::{nnls, nnls_gram, NnlsSolution};
pub use qp::{problem_objective, solve_qp, solve_qp_from, QpSolution, QP_TOL};
pub use svm::{solve_svm, SvmSolution, SVM_TOL};
