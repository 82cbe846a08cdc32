//! Estimates the causal effect of attaching a contextual note to a social
//! post partway through its lifetime. Engagement trajectories and repost
//! cascades of treated posts are compared against bias-corrected synthetic
//! controls assembled from never-treated donor posts, and the estimator is
//! validated against a diffusion simulator with known ground truth.

pub mod cascade;
pub mod effects;
pub mod error;
pub mod ingest;
pub mod model;
pub mod par;
pub mod pipeline;
pub mod placebo;
pub mod report;
pub mod scm;
pub mod sim;
pub mod time;

pub use error::{Error, Result};
