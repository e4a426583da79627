//! Delegation-criteria policy engine and human-AI routing simulation.
//!
//! Cases are routed to one of three pathways (AI only, clinician only,
//! clinician and AI together) by an ordered rule policy evaluated with
//! three-valued logic. Calibration turns raw model scores into confidences
//! and picks autonomy thresholds under an error budget; the harness simulates
//! AI and clinician agents over synthetic populations and compares the
//! routing workflow with the usual teaming modalities.

pub mod agents;
pub mod calibration;
pub mod dsl;
pub mod harness;
pub mod model;
pub mod reference;
pub mod rng;
pub mod router;
pub mod schema;
