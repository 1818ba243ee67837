//! Learned kernel pools for two-sample and independence testing.
//!
//! A pool of kernels is trained on one half of the data to maximize the
//! studentized statistic `n²·uᵀ(Σ̂+λI)⁻¹u`; the other half is tested with
//! coordinates whose signs disagree between halves masked out, calibrated
//! by a wild bootstrap that applies the same masking rule.
//!
//! ```
//! use dual_core::datagen::{generate, split_train_test, DatasetKind, DatasetSpec, Hypothesis};
//! use dual_core::trainer::{learn_kernels, TrainConfig};
//! use dual_core::boottest::{run_test, TestOptions};
//! use dual_core::seed;
//!
//! let spec = DatasetSpec::new(DatasetKind::blob(), Hypothesis::Alt, 30, 7);
//! let (train, test) = split_train_test(&generate(&spec).unwrap(), 1).unwrap();
//! let cfg = TrainConfig { c: 3, epochs: 10, ..Default::default() };
//! let trained = learn_kernels(&train, &cfg).unwrap();
//! let opts = TestOptions { bootstrap: 99, ..Default::default() };
//! let result = run_test(&test, &trained.pool, &trained.f_tr, &opts, &mut seed::rng(3)).unwrap();
//! assert!(result.p_value > 0.0 && result.p_value <= 1.0);
//! ```

pub mod bench;
pub mod boottest;
pub mod data;
pub mod datagen;
pub mod error;
pub mod kernel;
pub mod oracle;
pub mod seed;
pub mod selection;
pub mod trainer;
pub mod ustat;

pub use error::{Error, Result};
