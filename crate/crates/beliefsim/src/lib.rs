//! Monte Carlo laboratory for a business-cycle exchange economy with belief
//! dispersion: two investor classes filter an unobservable dividend growth
//! rate (one trusting an external signal that may carry a constant bias),
//! trade to a log-utility equilibrium, and are scored by objective-measure
//! welfare against a passive benchmark. The crate covers the filters, the
//! equilibrium maps, welfare and double-loss analysis, the participation
//! response of an all-knowing investor, and long-horizon survival.

pub mod config;
pub mod engine;
pub mod equilibrium;
pub mod error;
pub mod experiments;
pub mod filters;
pub mod manifest;
pub mod model;
pub mod numeric;
pub mod output;
pub mod rng;
pub mod strategist;
pub mod survival;
pub mod welfare;

pub use error::{Result, SimError};
pub use model::{InitMode, ModelParams, PathBundle, SimGrid, TwoStateParams};
