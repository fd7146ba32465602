//! Analysis pipelines built on [`crate::inference`]: joint estimation of the
//! measurement and distal models, sequential estimation by multiple
//! imputation, and the checks behind the mean-structure extensions.

pub mod extensions;
mod joint;
mod sequential;

pub use joint::{fit_joint, JointFit};
pub use sequential::{
    fit_logistic, fit_sequential_mi, pool_rubin, select_imputations, LogisticFit, PooledCoefficient,
    PooledEstimates, SequentialFit, DEFAULT_IMPUTATIONS,
};
