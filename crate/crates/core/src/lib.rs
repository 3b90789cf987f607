//! Line spectral estimation from deterministic coprime sub-Nyquist samples.
//!
//! Three sampling channels running at undersampling ratios `p < q < r`
//! (pairwise coprime) are merged into one chronological stream. Sliding
//! windows over that stream form the tasks of a multitask sparse model on a
//! uniform frequency grid `n/N`, which a complex-valued variational Bayesian
//! solver fits jointly.
//!
//! ```
//! use lse_core::prelude::*;
//!
//! let scheme = CoprimeScheme::new(9, 10, 11).unwrap();
//! let m = max_valid_window(&scheme, 100, 30, WindowRule::WithinGrid).unwrap();
//! assert_eq!(m, 27);
//!
//! let spectrum = LineSpectrum::from_polar(vec![0.18, 0.35], &[1.0, 0.5], &[0.0, 1.0]).unwrap();
//! let record = synthesize(&spectrum, &scheme.first_indices(30 + m - 1), 1e-3, 7).unwrap();
//! let tasks = build_tasks(&record, m, 30, 100, 1).unwrap();
//! let estimate = run(&tasks, Hyperparams::default(), 200, 1e-6).unwrap();
//! let mut found = extract_frequencies(&estimate, 2).unwrap();
//! found.sort_by(f64::total_cmp);
//! assert_eq!(found, vec![0.18, 0.35]);
//! ```

pub mod baselines;
pub mod error;
pub mod experiments;
pub mod rip;
pub mod sampling;
pub mod sensing;
pub mod signal;
pub mod util;
pub mod vb;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::baselines::{music_estimate, random_sampling_estimate, MusicConfig, RandomWindowMode};
    pub use crate::error::{Error, Result};
    pub use crate::experiments::{is_success, run_monte_carlo, ExperimentConfig, Method};
    pub use crate::rip::{random_partial_fourier, sample_subgram_eigs, RipReport};
    pub use crate::sampling::{
        build_tasks, generate_indices, max_valid_window, CoprimeScheme, TaskSet, WindowRule,
    };
    pub use crate::sensing::{build_phi, normalize_columns, SensingMatrix};
    pub use crate::signal::{
        noise_variance_for_snr, random_spectrum, synthesize, LineSpectrum, SampleRecord,
    };
    pub use crate::vb::{extract_frequencies, run, Hyperparams, RunOptions, SpectrumEstimate, VbSolver};
}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/sampling.md")]
    mod sampling {}
    #[doc = include_str!("../../../book/src/sensing.md")]
    mod sensing {}
    #[doc = include_str!("../../../book/src/rip.md")]
    mod rip {}
    #[doc = include_str!("../../../book/src/vb.md")]
    mod vb {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    mod baselines {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
