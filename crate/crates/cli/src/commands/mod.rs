//! One driver per subcommand. Each `run_*` writes its outputs into a
//! [`RunDir`](crate::rundir::RunDir) and reports whether its checks held.

pub mod checks;
pub mod training;

pub use checks::{
    converge, decompose, gradcheck, run_converge, run_decompose, run_gradcheck, ConvergeResult,
    DecomposeRow,
};
pub use training::{
    compare, probe_model, run_compare, run_probe, run_train, summarize, CompareRow, CompareSummary,
};
