//! Expectation propagation for the t-exponential family.
//!
//! The crate is organised bottom-up:
//!
//! * [`qalgebra`]: deformed exponential/logarithm and the q-product / q-division.
//! * [`student_t`]: the multivariate Student-t as a t-exponential family member,
//!   its natural parameters, escort distribution and closed-form integrals.
//! * [`ep_core`]: t-factorized EP bookkeeping shared by the concrete models.
//! * [`bpm`]: Bayes point machine (ADF and EP) with a step likelihood.
//! * [`stp`]: Student-t process binary classification.
//! * [`gp`]: classical Gaussian-process EP, used as the t → 1 reference.
//! * [`datasets`]: seedable toy data generators.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boundary;
pub mod bpm;
pub mod datasets;
pub mod dual;
pub mod ep_core;
pub mod error;
pub mod gp;
pub mod kernel;
pub mod likelihood;
pub mod linalg;
pub mod qalgebra;
pub mod quadrature;
pub mod special;
pub mod stp;
pub mod student_t;

pub use error::{Error, Result};
pub use qalgebra::DeformIndex;
pub use student_t::{NaturalParams, StudentT};
