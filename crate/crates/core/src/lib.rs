//! Singular Cucker–Smale swarms steered into formation by a decentralized chain
//! controller.
//!
//! * [`model`]: kernels, chain control and the right-hand side.
//! * [`integrator`]: adaptive and fixed-step time stepping with collision monitoring.
//! * [`diagnostics`]: energies, dissipation and a-priori certificates.
//! * [`scenarios`]: initial data for the reference experiments.
//! * [`io`]: configuration documents, CSV/summary output and the CLI driver.

pub mod diagnostics;
pub mod error;
pub mod integrator;
pub mod io;
pub mod model;
pub mod scenarios;

pub use error::{Error, Result};
pub use integrator::{simulate, IntegratorConfig, Method, Trajectory};
pub use model::{FormationSpec, Kernel, ModelParams, SwarmState};
