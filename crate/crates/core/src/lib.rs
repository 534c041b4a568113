//! Data attribution for L2-regularized generalized linear models.
//!
//! The crate estimates leave-`T`-out effects (how a fitted model would
//! change if a subset `T` of the training set were removed) using three
//! estimators:
//!
//! * **IF**: the classical influence function `H⁻¹ gᵢ`, summed over `T`.
//! * **RIF**: the rescaled influence function `(1 − hᵢ)⁻¹ H⁻¹ gᵢ`, the exact
//!   single-sample Newton step, summed over `T`.
//! * **NS**: one Newton step on the leave-`T`-out objective, solved through a
//!   Woodbury capacitance system.
//!
//! Ground truth comes from warm-started full retraining ([`oracle`]), and
//! [`theory`] computes the assumption constants of the accompanying accuracy
//! bound and verifies it numerically.

pub mod attribution;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod glm;
pub mod linalg;
pub mod oracle;
pub mod poison;
pub mod rng;
pub mod selection;
pub mod theory;

pub use error::{Error, Result};

/// Configure the process-wide worker pool.
///
/// All heavy dense kernels run sequentially inside faer; parallelism is
/// applied at the level of independent work items (retrains, trials, record
/// batches) through rayon, so results are run-to-run identical for any
/// worker count. Calling this more than once is harmless: the first call
/// wins for the rayon pool size.
pub fn init_parallelism(threads: Option<usize>) {
    faer::set_global_parallelism(faer::Par::Seq);
    if let Some(t) = threads {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build_global();
    }
}
