//! Sparse linear LIME explanations with kernel two-sample shift audits.
//!
//! The crate builds local surrogate explanations for black-box classifiers
//! over sparse term-frequency data, then audits the explanation pipeline:
//! does the perturbation step shift the data distribution, do the black-box
//! scores shift with it, and how faithful is the surrogate at the explained
//! instance. Shift is measured with the biased MMD statistic and decided
//! against the closed-form bounded-kernel threshold.
//!
//! ```
//! use limeaudit::mmd::two_sample_test;
//! use limeaudit::numkit::{KernelSpec, SparseVector};
//!
//! let near: Vec<SparseVector> = (0..50)
//!     .map(|i| SparseVector::from_dense(&[1.0, 0.1 * (i % 3) as f64]))
//!     .collect();
//! let far: Vec<SparseVector> = (0..50)
//!     .map(|_| SparseVector::from_dense(&[9.0, 4.0]))
//!     .collect();
//!
//! let same = two_sample_test(&near, &near.clone(), &KernelSpec::rbf(0.5)?, 0.05)?;
//! assert!(!same.reject);
//! let split = two_sample_test(&near, &far, &KernelSpec::rbf(0.5)?, 0.05)?;
//! assert!(split.reject && split.mmd_b > split.threshold);
//! # Ok::<(), limeaudit::Error>(())
//! ```

// negated comparisons are used deliberately to reject NaN parameters
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::excessive_precision)]

pub mod audit;
pub mod blackbox;
pub mod config;
pub mod corpus;
pub mod dataset;
pub mod error;
pub mod external;
pub mod lars;
pub mod lime;
pub mod mmd;
pub mod numkit;
pub mod report;
pub mod stream;

pub use error::{Error, Result};
