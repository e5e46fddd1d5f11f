//! Two-stage personalized pain estimation from facial landmarks.
//!
//! A window regressor estimates per-frame PSPI, the per-person expressiveness
//! score is appended to each frame, and a latent-state HCRF classifies each
//! sequence into a VAS level.

pub mod data;
pub mod error;
pub mod features;
pub mod hcrf;
pub mod io;
pub mod metrics;
pub mod optim;
pub mod personalization;
pub mod pipeline;
pub mod pspi;
pub mod regressor;

pub use error::{Error, Result};
