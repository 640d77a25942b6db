//! Quantum instruments and POVMs on finite-dimensional Hilbert spaces.
//!
//! The crate decides the post-processing ("fuzzy") preorder between POVMs by
//! linear programming, composes completely positive instruments in Kraus form,
//! checks whether an instrument conserves the information of a POVM, builds
//! the finite approximants of the infinitely repeated measurement together
//! with the kernel chain that witnesses their minimality, and simulates
//! repeated-measurement trajectories for the photon-counting and
//! quantum-counter detector models.

pub mod conservation;
pub mod error;
pub mod instrument;
pub mod io;
pub mod models;
pub mod operator;
pub mod outcome;
pub mod povm;
pub mod quadrature;
pub mod simplex;
pub mod simulate;

pub use conservation::{
    conservation_check, conservation_check_block, conservation_invariance_check,
    finite_composition, kolmogorov_consistency, minimality_witness, ConservationReport,
    InvarianceReport, WitnessChain,
};
pub use error::{Error, Result};
pub use instrument::{Branch, Instrument, DEFAULT_EXPLOSION_CAP, PROB_FLOOR};
pub use models::{GridSpec, ModelParams};
pub use operator::{adjoint, hermitian_eigen, is_psd, max_abs_diff, DensityState, Eigen, Operator, C64};
pub use outcome::{compose_kernels, extend_kernel, marginal_kernel, product_space, Factor, Label, MarkovKernel, OutcomeSpace};
pub use povm::{check_equivalent, find_post_processing, Equivalence, Povm, PreorderCertificate, Violation};
