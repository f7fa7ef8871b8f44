//! Independent reference computations shared by the test suites and the acceptance runner.
//!
//! Each check returns the measured discrepancy; callers own the thresholds.

#![allow(dead_code)]

pub mod bayes;
pub mod dense;
pub mod fd;
pub mod fourier;
pub mod pde;
