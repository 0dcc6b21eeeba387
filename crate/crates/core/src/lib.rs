//! Maximum-likelihood estimation of finite mixtures of generalized normal
//! distributions whose location, scale and shape parameters may be tied
//! together across arbitrary subsets of components.
//!
//! The main entry points are [`ecm::ecm_fit`] for a single constrained fit,
//! [`family::select_by_bic`] for comparing constraint structures, and the
//! experiment drivers in [`sim`]. See the crate's `examples/` directory for
//! runnable walkthroughs of each capability.

pub mod constraints;
pub mod ecm;
pub mod error;
pub mod family;
pub mod gnd;
pub mod kmeans;
pub mod mixture;
pub mod returns;
pub mod sim;
pub mod special;

pub use constraints::{ConstraintSpec, ModelCode, ParamKind};
pub use ecm::{ecm_fit, ecm_fit_from, Diagnostic, FitConfig, FitResult};
pub use error::{Error, Result};
pub use gnd::GndParams;
pub use mixture::{bic, density_mass, free_parameter_count, log_likelihood, marginal_moments, MarginalMoments, MixtureModel};
